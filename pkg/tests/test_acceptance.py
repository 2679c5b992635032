"""
Full-scale Monte Carlo runs on the default scenario. They take minutes, run them with pytest -m slow.
"""
import numpy as np
import pytest

import config
import utils
from beamforminglib.AsymptoticEeOptimizer import outer_layer, inner_layer, reconstruct_beamformers
from beamforminglib.BaselineBeamformers import mrt, zfbf, vsinr, wmmse_sum_rate
from beamforminglib.ChannelGenerator import generate_user_drop
from beamforminglib.ConventionalEeOptimizer import dinkelbach_solve
from beamforminglib.ScenarioData import Geometry
from conftest import make_params, random_channels, cross_cell_epsilon
from service.SimulationService import SimulationService, aggregate, drop_seed

pytestmark = pytest.mark.slow


def run_default_scenario(tmp_path, schemes, power_sweep_dbm, user_drops=5, realizations_per_drop=30, **scenario):
    defaults = config.current
    raw = {
        "scenario": defaults["scenario"] | scenario,
        "geometry": defaults.get("geometry", {}),
        "experiment": defaults["experiment"] | {
            "schemes": schemes,
            "power_sweep_dbm": power_sweep_dbm,
            "user_drops": user_drops,
            "realizations_per_drop": realizations_per_drop,
            "output_dir": str(tmp_path),
            "max_threads": 4,
        },
    }
    records = SimulationService(config.build_experiment_config(raw)).run_experiment()
    assert all(record.error is None for record in records), [record.error for record in records if record.error]
    return records


def mean_ee(records, scheme, power_dbm) -> float:
    return float(np.mean([record.ee for record in records
                          if record.scheme == scheme and record.power_dbm == power_dbm]))


def test_large_system_design_is_near_optimal(tmp_path):
    sweep = [26, 30, 34, 38, 42, 46]
    records = run_default_scenario(tmp_path, ["ee-conventional", "ee-asymptotic"], sweep)
    for power_dbm in sweep:
        conventional = mean_ee(records, "ee-conventional", power_dbm)
        asymptotic = mean_ee(records, "ee-asymptotic", power_dbm)
        assert asymptotic >= 0.92 * conventional, f"{power_dbm} dBm: {asymptotic} vs {conventional}"


def test_energy_design_gains_over_sum_rate_design(tmp_path):
    records = run_default_scenario(tmp_path, ["ee-conventional", "wmmse-sr"], [46])
    assert mean_ee(records, "ee-conventional", 46.0) >= 2.0 * mean_ee(records, "wmmse-sr", 46.0)


def test_deterministic_ee_tracks_monte_carlo(tmp_path):
    deviations = []
    for N_t in (10, 20, 40):
        records = run_default_scenario(tmp_path / str(N_t), ["ee-asymptotic"], [46], user_drops=1,
                                       realizations_per_drop=200, tx_antennas=N_t, users_per_cell=N_t // 2,
                                       user_weights=[1.0] * (N_t // 2))
        ee = np.array([record.ee for record in records])
        eta_circ = records[0].eta_circ
        assert abs(eta_circ - np.mean(ee)) <= np.std(ee, ddof=1), f"N_t={N_t}"
        deviations.append(abs(eta_circ - np.mean(ee)) / np.mean(ee))
    assert deviations[0] > deviations[1] > deviations[2], str(deviations)


def test_inner_layer_converges_quickly():
    experiment = config.build_experiment_config()
    params = make_params(M=3, K=4, N_t=4, P=utils.dbm_to_watt(46.0), P_c=experiment.params.P_c,
                         P_0=experiment.params.P_0, zeta=experiment.params.zeta, sigma2=experiment.params.sigma2,
                         weights=[1.0, 2.0, 3.0, 4.0])
    for drop_id in range(5):
        drop = generate_user_drop(Geometry(), 3, 4, drop_seed(experiment.seed, drop_id))
        eta = outer_layer(drop.epsilon, params).params.eta
        result = inner_layer(eta, drop.epsilon, params, tol=1e-6, max_iters=30)
        assert result.converged, f"drop {drop_id} needed more than 30 iterations"


def test_correlation_trend(tmp_path):
    means = {26.0: [], 46.0: []}
    for rho in (0.0, 0.5, 0.9):
        records = run_default_scenario(tmp_path / str(rho), ["ee-asymptotic"], [26, 46], users_per_cell=2,
                                       user_weights=[1.0, 2.0], correlation=rho)
        for power_dbm in means:
            means[power_dbm].append(mean_ee(records, "ee-asymptotic", power_dbm))
    assert means[46.0] == sorted(means[46.0]), str(means)
    assert means[26.0] == sorted(means[26.0], reverse=True), str(means)


def test_single_user_large_system_matches_per_realization_optimum(tmp_path):
    params = make_params(M=1, K=1, N_t=16, P=1.0, sigma2=0.05)
    epsilon = np.ones((1, 1, 1))
    eta_circ = outer_layer(epsilon, params).params.eta_circ

    achieved = [dinkelbach_solve(random_channels(params, seed), params.weights, params).eta_star
                for seed in range(200)]
    assert eta_circ == pytest.approx(np.mean(achieved), rel=0.02)


def test_every_scheme_is_feasible_on_many_instances():
    params = make_params(M=2, K=2, N_t=4, P=[0.5, 3.0])
    epsilon = cross_cell_epsilon(params, cross=0.5)
    params_asym = outer_layer(epsilon, params).params
    for seed in range(1000):
        channels = random_channels(params, seed, epsilon)
        for scheme in (mrt, zfbf, vsinr):
            assert scheme(channels, params).is_feasible(params), f"{scheme.__name__} on instance {seed}"
        if seed % 10 == 0:
            assert wmmse_sum_rate(channels, params).is_feasible(params)
        assert reconstruct_beamformers(channels, params_asym).is_feasible(params), f"ee-asymptotic on instance {seed}"
        if seed % 50 == 0:
            beams = dinkelbach_solve(channels, params.weights, params).beams
            assert beams.is_feasible(params), f"ee-conventional on instance {seed}"


def test_aggregates_cover_the_sweep(tmp_path):
    records = run_default_scenario(tmp_path, ["mrt", "ee-asymptotic"], [26, 46], user_drops=2,
                                   realizations_per_drop=10)
    assert [(entry.scheme, entry.power_dbm, entry.n) for entry in aggregate(records, ["mrt", "ee-asymptotic"])] == \
        [("mrt", 26.0, 20), ("mrt", 46.0, 20), ("ee-asymptotic", 26.0, 20), ("ee-asymptotic", 46.0, 20)]
