"""
Loads the YAML config into `current` and turns it into the typed, linear-scale objects used by the simulator.
All dBm/dB values are converted here and nowhere else.
"""
import copy
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

import utils
from beamforminglib.ScenarioData import SystemParams, Geometry
from dto import ConfigDto

DEFAULT_PATH = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "config.yaml")

# thermal noise density in dBm/Hz
THERMAL_NOISE_DBM_PER_HZ = -174.0


@dataclass(frozen=True)
class OptimizerSettings:
    relative_delta: float = 1e-4
    inner_tol: float = 1e-6
    inner_max_iters: int = 200
    outer_max_iters: int = 60


@dataclass(frozen=True)
class SolverSettings:
    conventional: OptimizerSettings = field(default_factory=OptimizerSettings)
    asymptotic: OptimizerSettings = field(default_factory=lambda: OptimizerSettings(inner_max_iters=100))
    fixed_point_tol: float = 1e-10
    fixed_point_max_iters: int = 10000


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything the Monte Carlo driver needs. params carries the scenario with the budget of bs_power_dbm, the sweep
    replaces the budget per sweep point.
    """
    params: SystemParams
    geometry: Geometry
    schemes: list[str]
    power_sweep_dbm: list[float]
    n_drops: int
    n_realizations: int
    seed: int
    output_dir: str = "./results"
    output_formats: list[str] = field(default_factory=lambda: ["csv", "json"])
    max_threads: int = 1
    log_convergence: bool = False
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.n_drops < 1 or self.n_realizations < 1:
            raise ValueError("user_drops and realizations_per_drop must be at least 1")
        if len(self.power_sweep_dbm) == 0:
            raise ValueError("power_sweep_dbm must not be empty")
        if len(self.schemes) == 0:
            raise ValueError("At least one scheme has to be selected")
        if self.max_threads < 1:
            raise ValueError("max_threads must be at least 1, got " + str(self.max_threads))

    def with_overrides(self, seed: int | None = None, max_threads: int | None = None,
                       output_dir: str | None = None, log_convergence: bool | None = None) -> "ExperimentConfig":
        changes = {}
        if seed is not None:
            changes["seed"] = seed
        if max_threads is not None:
            changes["max_threads"] = max_threads
        if output_dir is not None:
            changes["output_dir"] = output_dir
        if log_convergence is not None:
            changes["log_convergence"] = log_convergence
        return replace(self, **changes)


def _read(path: str) -> dict:
    try:
        with open(path) as file:
            return yaml.load(file, Loader=yaml.FullLoader)
    except OSError as e:
        raise OSError("Could not read config file " + path + ": " + str(e)) from e


current: dict = _read(DEFAULT_PATH)


def load(path: str) -> dict:
    """
    Replaces the active config with the contents of the passed YAML file.
    """
    global current
    current = _read(path)
    return current


def noise_power_dbm(scenario: dict) -> float:
    if scenario.get("noise_power_dbm") is not None:
        return float(scenario["noise_power_dbm"])
    return (THERMAL_NOISE_DBM_PER_HZ + 10.0 * math.log10(float(scenario.get("bandwidth_hz", 20e6)))
            + float(scenario.get("noise_figure_db", 7.0)))


def build_system_params(scenario: dict) -> SystemParams:
    M = scenario["cells"]
    K = scenario["users_per_cell"]
    power = np.vectorize(utils.dbm_to_watt)(np.asarray(scenario["bs_power_dbm"], dtype=float))

    weights = np.asarray(scenario.get("user_weights", [1.0] * K), dtype=float)
    if weights.shape not in ((K,), (M, K)):
        raise ValueError("user_weights must have K=" + str(K) + " entries or M x K entries, got shape "
                         + str(weights.shape))

    return SystemParams(M=M,
                        K=K,
                        N_t=scenario["tx_antennas"],
                        P=power,
                        P_c=utils.dbm_to_watt(scenario.get("circuit_power_per_antenna_dbm", 30.0)),
                        P_0=utils.dbm_to_watt(scenario.get("static_power_dbm", 40.0)),
                        zeta=float(scenario.get("amplifier_inefficiency", 2.0)),
                        sigma2=utils.dbm_to_watt(noise_power_dbm(scenario)),
                        weights=weights,
                        rho=float(scenario.get("correlation", 0.0)),
                        bandwidth=float(scenario.get("bandwidth_hz", 20e6)))


def build_geometry(geometry: dict) -> Geometry:
    return Geometry(cell_radius=float(geometry.get("cell_radius_m", 500.0)),
                    min_distance=float(geometry.get("min_distance_m", 35.0)),
                    pathloss_exponent=float(geometry.get("pathloss_exponent", 3.8)),
                    pathloss_offset_db=float(geometry.get("pathloss_offset_db", -34.5)))


def build_solver_settings(solver: dict) -> SolverSettings:
    defaults = SolverSettings()
    fixed_point = solver.get("fixed_point", {})
    return SolverSettings(conventional=replace(defaults.conventional, **solver.get("conventional", {})),
                          asymptotic=replace(defaults.asymptotic, **solver.get("asymptotic", {})),
                          fixed_point_tol=float(fixed_point.get("tol", defaults.fixed_point_tol)),
                          fixed_point_max_iters=int(fixed_point.get("max_iters", defaults.fixed_point_max_iters)))


def build_experiment_config(raw: dict | None = None) -> ExperimentConfig:
    """
    Validates a raw config dict (the active config if None) and builds the experiment config from it.
    :raise: ValueError If the config does not match the schema or contains invalid values.
    """
    raw = copy.deepcopy(current if raw is None else raw)
    validated: ConfigDto = utils.validate_dict_against_typed_dict(raw, ConfigDto, "config")

    experiment = validated["experiment"]
    return ExperimentConfig(params=build_system_params(validated["scenario"]),
                            geometry=build_geometry(validated.get("geometry", {})),
                            schemes=list(experiment["schemes"]),
                            power_sweep_dbm=[float(power) for power in experiment["power_sweep_dbm"]],
                            n_drops=experiment["user_drops"],
                            n_realizations=experiment["realizations_per_drop"],
                            seed=experiment["seed"],
                            output_dir=experiment.get("output_dir", "./results"),
                            output_formats=list(experiment.get("output_formats", ["csv", "json"])),
                            max_threads=experiment.get("max_threads", 1),
                            log_convergence=experiment.get("log_convergence", False),
                            solver=build_solver_settings(validated.get("solver", {})))
