import hashlib
import json
import logging
import threading
import time
from collections import defaultdict
from dataclasses import asdict

import numpy as np

import utils
from beamforminglib.AsymptoticEeOptimizer import AsymptoticParams, OuterLayerResult, outer_layer, inner_layer, \
    reconstruct_beamformers
from beamforminglib.BaselineBeamformers import mrt, zfbf, vsinr, wmmse_sum_rate_result
from beamforminglib.ChannelGenerator import generate_user_drop, generate_channels
from beamforminglib.ConventionalEeOptimizer import dinkelbach_solve
from beamforminglib.DeterministicEquivalents import debug_rows
from beamforminglib.GainCalibration import CalibrationReport, calibrate_gain_matrix, calibration_drop
from beamforminglib.PerformanceMetrics import all_sinr, energy_efficiency, weighted_sum_rate, total_power
from beamforminglib.ScenarioData import SystemParams, ChannelSet, UserDrop, BeamformerSet
from config import ExperimentConfig
from persistence.ResultsFileConnector import ResultsFileConnector, is_missing
from persistence.entities import *

_logger = logging.getLogger(__name__)

SCHEMES = ["mrt", "zfbf", "vsinr", "wmmse-sr", "ee-conventional", "ee-asymptotic"]

CONVENTIONAL_CONVERGENCE_COLUMNS = ["P_dBm", "drop_id", "realization_id", "iteration", "eta_min", "eta_max", "eta",
                                    "F", "inner_objective"]
ASYMPTOTIC_CONVERGENCE_COLUMNS = ["P_dBm", "drop_id", "iteration", "eta_min", "eta_max", "eta", "F_circ",
                                  "inner_iterations"]
INNER_CONVERGENCE_COLUMNS = ["P_dBm", "drop_id", "eta", "iteration", "objective"]
DEBUG_COLUMNS = ["j", "k", "i", "s", "e", "e_prime", "m_circ", "psi_circ"]


def substream(base_seed: int, *key: int) -> np.random.SeedSequence:
    """
    Independent, reproducible seed sequence for one unit of work, e.g. (drop,) or (drop, realization).
    """
    return np.random.SeedSequence(base_seed, spawn_key=key)


def drop_seed(base_seed: int, drop_id: int) -> np.random.SeedSequence:
    return substream(base_seed, 0, drop_id)


def realization_seed(base_seed: int, drop_id: int, realization_id: int) -> np.random.SeedSequence:
    return substream(base_seed, 1, drop_id, realization_id)


def scenario_hash(params: SystemParams, epsilon: np.ndarray) -> str:
    """
    Identifies the second order statistics the asymptotic params were computed for.
    """
    digest = hashlib.sha256()
    digest.update(json.dumps({
        "M": params.M, "K": params.K, "N_t": params.N_t, "P": params.P.tolist(), "P_c": params.P_c, "P_0": params.P_0,
        "zeta": params.zeta, "sigma2": params.sigma2, "weights": params.weights.tolist(), "rho": params.rho,
    }, sort_keys=True).encode("utf-8"))
    digest.update(np.ascontiguousarray(epsilon, dtype="<f8").tobytes())
    return digest.hexdigest()


def aggregate_group(records: list[ResultRecordEntity]) -> AggregateEntity:
    """
    Mean and unbiased sample standard deviation of EE and WSR of one (scheme, power) group.
    :raise: ValueError If the group is empty.
    """
    if len(records) == 0:
        raise ValueError("Cannot aggregate an empty group of records")

    ee = np.array([record.ee for record in records], dtype=float)
    wsr = np.array([record.wsr for record in records], dtype=float)
    n = len(records)
    return AggregateEntity(scheme=records[0].scheme,
                           power_dbm=records[0].power_dbm,
                           mean_ee=float(np.mean(ee)),
                           std_ee=float(np.std(ee, ddof=1)) if n > 1 else 0.0,
                           mean_wsr=float(np.mean(wsr)),
                           std_wsr=float(np.std(wsr, ddof=1)) if n > 1 else 0.0,
                           n=n)


def aggregate(records: list[ResultRecordEntity], scheme_order: list[str] | None = None) -> list[AggregateEntity]:
    """
    Aggregates the successful records per (scheme, power). Groups are ordered by scheme_order (default: the known
    schemes in their canonical order) and then by power.
    """
    scheme_order = SCHEMES if scheme_order is None else scheme_order
    groups: dict[tuple[str, float], list[ResultRecordEntity]] = defaultdict(list)
    for record in records:
        if record.error is None and not is_missing(record.ee):
            groups[(record.scheme, record.power_dbm)].append(record)

    def group_order(key: tuple[str, float]) -> tuple:
        scheme, power = key
        rank = scheme_order.index(scheme) if scheme in scheme_order else len(scheme_order)
        return rank, scheme, power

    # summation order inside a group must not depend on thread scheduling
    return [aggregate_group(sorted(groups[key], key=lambda record: record.sort_key()))
            for key in sorted(groups, key=group_order)]


class SimulationService:
    """
    Monte Carlo driver: user drops x power sweep x channel realizations x schemes.
    """

    def __init__(self, experiment: ExperimentConfig):
        self.experiment = experiment
        self.connector = ResultsFileConnector(experiment.output_dir)
        self.optimizer_invocations: dict[str, int] = {"ee-conventional": 0, "ee-asymptotic": 0}
        # seconds per scheme, summed over all cells
        self.wall_time_s: dict[str, float] = defaultdict(float)
        self.__counter_lock = threading.Lock()
        self.__log_lock = threading.Lock()
        self.__convergence_rows: dict[str, list[dict]] = defaultdict(list)

        unknown = [scheme for scheme in experiment.schemes if scheme not in SCHEMES]
        if len(unknown) > 0:
            raise ValueError("Unknown schemes " + str(unknown) + ", possible values are " + str(SCHEMES))

    def __count_invocation(self, scheme: str):
        with self.__counter_lock:
            self.optimizer_invocations[scheme] += 1

    def __add_wall_time(self, scheme: str, seconds: float):
        with self.__counter_lock:
            self.wall_time_s[scheme] += seconds

    def __log_convergence(self, name: str, rows: list[dict]):
        if not self.experiment.log_convergence:
            return
        with self.__log_lock:
            self.__convergence_rows[name].extend(rows)

    def compute_asymptotic_params(self, drop_id: int, drop: UserDrop, params: SystemParams,
                                  power_dbm: float) -> OuterLayerResult:
        """
        Runs the large-system optimizer for one (drop, power) pair and caches the result in the results directory.
        A cached result is reused if it was computed for the same scenario hash and solver settings, then no
        convergence logs are written for the pair.
        """
        settings = self.experiment.solver.asymptotic
        fixed_point = self.experiment.solver
        fingerprint = asdict(settings) | {"fixed_point_tol": fixed_point.fixed_point_tol,
                                          "fixed_point_max_iters": fixed_point.fixed_point_max_iters}
        current_hash = scenario_hash(params, drop.epsilon)

        cached = self.connector.read_asymptotic_params(drop_id, power_dbm)
        if cached is not None and cached.get("scenario_hash") == current_hash and cached.get("solver") == fingerprint:
            _logger.info("Reusing cached asymptotic params for drop " + str(drop_id) + " at " + str(power_dbm) + " dBm")
            return OuterLayerResult(params=AsymptoticParams.from_dict(cached),
                                    eta_min=float(cached["eta_min"]),
                                    eta_max=float(cached["eta_max"]),
                                    outer_iterations=int(cached["outer_iterations"]),
                                    inner_iterations=int(cached["inner_iterations"]))

        start_time = time.time()
        self.__count_invocation("ee-asymptotic")
        result = outer_layer(drop.epsilon, params,
                             relative_delta=settings.relative_delta,
                             tol=settings.inner_tol,
                             max_iters=settings.inner_max_iters,
                             max_outer_iters=settings.outer_max_iters,
                             fixed_point_tol=fixed_point.fixed_point_tol,
                             fixed_point_max_iters=fixed_point.fixed_point_max_iters)
        _logger.info("Computed asymptotic params for drop " + str(drop_id) + " at " + str(power_dbm) + " dBm in "
                     + str(time.time() - start_time) + " seconds.")

        cached = result.params.to_dict()
        cached["eta_circ_bits_per_joule"] = result.params.eta_circ * params.bandwidth
        cached["scenario_hash"] = current_hash
        cached["solver"] = fingerprint
        cached["eta_min"] = result.eta_min
        cached["eta_max"] = result.eta_max
        cached["outer_iterations"] = result.outer_iterations
        cached["inner_iterations"] = result.inner_iterations
        self.connector.write_asymptotic_params(drop_id, power_dbm, cached)

        self.__log_convergence("convergence_asymptotic.csv", [{
            "P_dBm": power_dbm, "drop_id": drop_id, "iteration": iteration, "eta_min": eta_min, "eta_max": eta_max,
            "eta": eta, "F_circ": F_circ, "inner_iterations": inner_iterations
        } for (iteration, eta_min, eta_max, eta, F_circ, inner_iterations) in result.trace])

        if self.experiment.log_convergence:
            final = inner_layer(result.params.eta, drop.epsilon, params, tol=settings.inner_tol,
                                max_iters=settings.inner_max_iters, fixed_point_tol=fixed_point.fixed_point_tol,
                                fixed_point_max_iters=fixed_point.fixed_point_max_iters)
            self.__log_convergence("convergence_asymptotic_inner.csv", [{
                "P_dBm": power_dbm, "drop_id": drop_id, "eta": result.params.eta, "iteration": iteration,
                "objective": objective
            } for iteration, objective in enumerate(final.objective_trace)])
            self.connector.write_table("det_equivalents_drop" + str(drop_id) + "_p" + format(power_dbm, "g") + ".csv",
                                       DEBUG_COLUMNS, debug_rows(final.gains, final.params.beta, drop.epsilon))

        return result

    def evaluate_scheme(self, scheme: str, channels: ChannelSet, params: SystemParams,
                        asymptotic: OuterLayerResult | None, cell: tuple[float, int, int]) -> tuple[BeamformerSet, int]:
        """
        Computes the beams of one scheme for one realization.
        :return: Tuple (beams, optimizer iterations).
        """
        power_dbm, drop_id, realization_id = cell
        match scheme:
            case "mrt":
                return mrt(channels, params), 0
            case "zfbf":
                return zfbf(channels, params), 0
            case "vsinr":
                return vsinr(channels, params), 0
            case "wmmse-sr":
                settings = self.experiment.solver.conventional
                result = wmmse_sum_rate_result(channels, params, tol=settings.inner_tol,
                                               max_iters=settings.inner_max_iters)
                return result.beams, result.iterations
            case "ee-conventional":
                settings = self.experiment.solver.conventional
                self.__count_invocation("ee-conventional")
                result = dinkelbach_solve(channels, params.weights, params,
                                          relative_delta=settings.relative_delta,
                                          tol=settings.inner_tol,
                                          max_iters=settings.inner_max_iters,
                                          max_outer_iters=settings.outer_max_iters)
                self.__log_convergence("convergence_conventional.csv", [{
                    "P_dBm": power_dbm, "drop_id": drop_id, "realization_id": realization_id, "iteration": iteration,
                    "eta_min": eta_min, "eta_max": eta_max, "eta": eta, "F": F, "inner_objective": inner_objective
                } for (iteration, eta_min, eta_max, eta, F, inner_objective) in result.trace])
                return result.beams, result.inner_iterations
            case "ee-asymptotic":
                if asymptotic is None:
                    raise RuntimeError("No asymptotic params available for drop " + str(drop_id) + " at "
                                       + str(power_dbm) + " dBm")
                return reconstruct_beamformers(channels, asymptotic.params), asymptotic.inner_iterations
        raise ValueError("Unknown scheme " + str(scheme))

    def __evaluate_realization(self, results: dict, drop_id: int, drop: UserDrop, realization_id: int,
                               sweep: list[tuple[float, SystemParams, OuterLayerResult | None, str | None]]):
        """
        Evaluates every scheme at every sweep point for one channel realization. Executed in a worker thread.
        """
        seed = realization_seed(self.experiment.seed, drop_id, realization_id)
        channels = generate_channels(drop, self.experiment.params, seed)

        for (power_dbm, params, asymptotic, asymptotic_error) in sweep:
            for scheme in self.experiment.schemes:
                start_time = time.time()
                try:
                    if scheme == "ee-asymptotic" and asymptotic_error is not None:
                        raise RuntimeError(asymptotic_error)
                    beams, iterations = self.evaluate_scheme(scheme, channels, params, asymptotic,
                                                             (power_dbm, drop_id, realization_id))
                    is_asymptotic = scheme == "ee-asymptotic"
                    record = ResultRecordEntity(
                        scheme=scheme,
                        power_dbm=power_dbm,
                        drop_id=drop_id,
                        realization_id=realization_id,
                        ee=energy_efficiency(channels, beams, params.weights, params),
                        wsr=params.bandwidth * weighted_sum_rate(channels, beams, params.weights, params.sigma2),
                        total_power=total_power(beams, params),
                        sinr=all_sinr(channels, beams, params.sigma2).reshape(-1).tolist(),
                        iterations=iterations,
                        eta_circ=asymptotic.params.eta_circ * params.bandwidth if is_asymptotic else None,
                        params_hash=asymptotic.params.params_hash() if is_asymptotic else None)
                except Exception as e:
                    _logger.exception("Scheme " + scheme + " failed for drop " + str(drop_id) + ", realization "
                                      + str(realization_id) + " at " + str(power_dbm) + " dBm")
                    record = ResultRecordEntity(scheme=scheme, power_dbm=power_dbm, drop_id=drop_id,
                                                realization_id=realization_id, ee=float("nan"), wsr=float("nan"),
                                                total_power=float("nan"), sinr=[], iterations=0,
                                                error=type(e).__name__ + ": " + str(e))
                self.__add_wall_time(scheme, time.time() - start_time)
                results[(scheme, power_dbm, drop_id, realization_id)] = record

    def run_experiment(self) -> list[ResultRecordEntity]:
        """
        Runs the whole Monte Carlo experiment. The asymptotic params are computed once per (drop, power) and shared by
        all realizations of the drop, all other schemes are recomputed per realization. Realizations of a drop are
        evaluated in parallel in batches of max_threads threads.
        :return: The records ordered by (scheme as configured, power as configured, drop, realization).
        """
        experiment = self.experiment
        start_time = time.time()
        _logger.info("Starting experiment with schemes " + str(experiment.schemes) + ", " + str(experiment.n_drops)
                     + " drops and " + str(experiment.n_realizations) + " realizations per drop")

        results: dict[tuple[str, float, int, int], ResultRecordEntity] = {}
        for drop_id in range(experiment.n_drops):
            drop = generate_user_drop(experiment.geometry, experiment.params.M, experiment.params.K,
                                      drop_seed(experiment.seed, drop_id))

            sweep = []
            for power_dbm in experiment.power_sweep_dbm:
                params = experiment.params.with_power(utils.dbm_to_watt(power_dbm))
                asymptotic = None
                asymptotic_error = None
                if "ee-asymptotic" in experiment.schemes:
                    try:
                        asymptotic = self.compute_asymptotic_params(drop_id, drop, params, power_dbm)
                    except Exception as e:
                        _logger.exception("Asymptotic optimizer failed for drop " + str(drop_id) + " at "
                                          + str(power_dbm) + " dBm")
                        asymptotic_error = type(e).__name__ + ": " + str(e)
                sweep.append((power_dbm, params, asymptotic, asymptotic_error))

            threads: list[threading.Thread] = [
                threading.Thread(target=self.__evaluate_realization, args=(results, drop_id, drop, realization_id, sweep))
                for realization_id in range(experiment.n_realizations)]

            while len(threads) > 0:
                # take the first max_threads threads and start them (or less if there are less than max_threads)
                current_threads = threads[:experiment.max_threads]
                threads = threads[experiment.max_threads:]

                for thread in current_threads:
                    thread.start()

                for thread in current_threads:
                    thread.join()

            _logger.info("Finished drop " + str(drop_id + 1) + " of " + str(experiment.n_drops))

        scheme_rank = {scheme: rank for rank, scheme in enumerate(experiment.schemes)}
        power_rank = {power: rank for rank, power in enumerate(experiment.power_sweep_dbm)}
        records = sorted(results.values(), key=lambda record: (scheme_rank[record.scheme],
                                                               power_rank[record.power_dbm],
                                                               record.drop_id,
                                                               record.realization_id))

        _logger.info("Finished experiment in " + str(time.time() - start_time) + " seconds.")
        return records

    def run(self) -> int:
        """
        Runs the experiment and writes records, aggregates, convergence logs and the run info.
        :return: The number of failed records.
        """
        records = self.run_experiment()
        aggregates = aggregate(records, self.experiment.schemes)
        failed = sum(1 for record in records if record.error is not None)

        for output_format in self.experiment.output_formats:
            self.connector.export_records(records, output_format)
            self.connector.export_aggregates(aggregates, output_format)

        columns = {
            "convergence_conventional.csv": CONVENTIONAL_CONVERGENCE_COLUMNS,
            "convergence_asymptotic.csv": ASYMPTOTIC_CONVERGENCE_COLUMNS,
            "convergence_asymptotic_inner.csv": INNER_CONVERGENCE_COLUMNS,
        }
        for name, rows in self.__convergence_rows.items():
            if name == "convergence_conventional.csv":
                rows = sorted(rows, key=lambda row: (row["P_dBm"], row["drop_id"], row["realization_id"],
                                                     row["iteration"]))
            self.connector.write_table(name, columns[name], rows)

        params = self.experiment.params
        self.connector.write_run_info({
            "scenario": {
                "M": params.M,
                "K": params.K,
                "N_t": params.N_t,
                "rho": params.rho,
                "zeta": params.zeta,
                "P_c_w": params.P_c,
                "P_0_w": params.P_0,
                "sigma2_w": params.sigma2,
                "bandwidth_hz": params.bandwidth,
                "weights": params.weights.tolist(),
            },
            "schemes": list(self.experiment.schemes),
            "power_sweep_dbm": list(self.experiment.power_sweep_dbm),
            "user_drops": self.experiment.n_drops,
            "realizations_per_drop": self.experiment.n_realizations,
            "seed": self.experiment.seed,
            "output_formats": list(self.experiment.output_formats),
            "optimizer_invocations": dict(self.optimizer_invocations),
            "wall_time_s": {scheme: self.wall_time_s[scheme] for scheme in self.experiment.schemes},
            "records": len(records),
            "failed_records": failed,
        })
        return failed


def scenario_label(run_info: dict) -> str:
    scenario = run_info["scenario"]
    return ("M=" + str(scenario["M"]) + " K=" + str(scenario["K"]) + " N_t=" + str(scenario["N_t"])
            + " rho=" + str(scenario["rho"]))


FIGURE_COLUMNS = ["scenario", "M", "K", "N_t", "rho", "scheme", "P_dBm", "mean_EE", "std_EE", "mean_WSR", "std_WSR",
                  "n"]
DET_COMPARISON_COLUMNS = ["scenario", "N_t", "K", "P_dBm", "drop_id", "eta_circ", "mean_EE", "std_EE", "n",
                          "relative_deviation", "within_one_std"]


def figure_series(result_dirs: list[str], output_dir: str) -> list[str]:
    """
    Builds CSV series for plotting from one or more results directories: EE over power per scenario (which also
    yields the EE over K and over correlation series when the directories differ in K or rho), the comparison of the
    deterministic EE with the Monte Carlo EE of the reconstructed beams and the inner-loop convergence traces.
    :return: The paths of the written files.
    """
    output = ResultsFileConnector(output_dir)
    performance_rows = []
    det_rows = []
    convergence_rows = []

    for result_dir in result_dirs:
        connector = ResultsFileConnector(result_dir)
        run_info = connector.read_run_info()
        label = scenario_label(run_info)
        scenario = run_info["scenario"]
        output_format = "json" if "json" in run_info.get("output_formats", ["json"]) else "csv"
        try:
            aggregates = connector.parse_aggregates(output_format)
            records = connector.parse_records(output_format)
        except OSError:
            aggregates = connector.parse_aggregates("csv")
            records = connector.parse_records("csv")

        for entry in aggregates:
            performance_rows.append({"scenario": label, "M": scenario["M"], "K": scenario["K"],
                                     "N_t": scenario["N_t"], "rho": scenario["rho"], "scheme": entry.scheme,
                                     "P_dBm": entry.power_dbm, "mean_EE": entry.mean_ee, "std_EE": entry.std_ee,
                                     "mean_WSR": entry.mean_wsr, "std_WSR": entry.std_wsr, "n": entry.n})

        groups: dict[tuple[float, int], list[ResultRecordEntity]] = defaultdict(list)
        for record in records:
            if record.scheme == "ee-asymptotic" and record.error is None:
                groups[(record.power_dbm, record.drop_id)].append(record)
        for (power_dbm, drop_id), group in sorted(groups.items()):
            ee = np.array([record.ee for record in group])
            std = float(np.std(ee, ddof=1)) if len(ee) > 1 else 0.0
            eta_circ = group[0].eta_circ
            mean = float(np.mean(ee))
            det_rows.append({"scenario": label, "N_t": scenario["N_t"], "K": scenario["K"], "P_dBm": power_dbm,
                             "drop_id": drop_id, "eta_circ": eta_circ, "mean_EE": mean, "std_EE": std,
                             "n": len(ee), "relative_deviation": abs(eta_circ - mean) / mean if mean > 0 else float("nan"),
                             "within_one_std": abs(eta_circ - mean) <= std})

        try:
            for row in connector.read_table("convergence_asymptotic_inner.csv"):
                convergence_rows.append({"scenario": label, **row})
        except OSError:
            _logger.info("No inner convergence log in " + result_dir)

    paths = [output.write_table("figure_ee_vs_power.csv", FIGURE_COLUMNS, performance_rows),
             output.write_table("figure_det_vs_monte_carlo.csv", DET_COMPARISON_COLUMNS, det_rows)]
    if len(convergence_rows) > 0:
        paths.append(output.write_table("figure_inner_convergence.csv", ["scenario"] + INNER_CONVERGENCE_COLUMNS,
                                        convergence_rows))
    return paths


def validate_deterministic_equivalents(N_t: int = 40, K: int = 20, M: int = 1, draws: int = 2000, seed: int = 0,
                                       lam: float = 10.0, threshold: float = 0.05) -> tuple[CalibrationReport, bool]:
    """
    Monte Carlo calibration oracle: unit pathlosses, R = I, beta = 1. Passes if the median relative error between
    the deterministic and the sampled gain matrix is at most threshold.
    """
    params = SystemParams(M=M, K=K, N_t=N_t, P=1.0, P_c=1.0, P_0=1.0, zeta=1.0, sigma2=1.0, weights=1.0)
    report = calibrate_gain_matrix(params, calibration_drop(params), np.ones((M, K)), np.full(M, lam), draws, seed)
    passed = report.median_relative_error <= threshold
    _logger.info("Deterministic-equivalent calibration: median relative error " + str(report.median_relative_error)
                 + ", max " + str(report.max_relative_error) + (" (passed)" if passed else " (FAILED)"))
    return report, passed
