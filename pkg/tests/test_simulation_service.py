import json
import os
from dataclasses import replace

import numpy as np
import pytest
import yaml

import config
import service.SimulationService as simulation
import utils
from controller.cli_controller import CliController
from persistence.ResultsFileConnector import ResultsFileConnector, RECORD_COLUMNS, AGGREGATE_COLUMNS
from persistence.entities import ResultRecordEntity, AggregateEntity
from service.SimulationService import SimulationService, aggregate, aggregate_group, figure_series, \
    realization_seed, drop_seed


def raw_config(output_dir, schemes=("mrt", "vsinr", "ee-asymptotic"), power_sweep_dbm=(30, 40), user_drops=2,
               realizations_per_drop=2, max_threads=1, seed=7) -> dict:
    return {
        "scenario": {
            "cells": 2,
            "users_per_cell": 2,
            "tx_antennas": 4,
            "bs_power_dbm": 40,
            "user_weights": [1, 2],
        },
        "experiment": {
            "schemes": list(schemes),
            "power_sweep_dbm": list(power_sweep_dbm),
            "user_drops": user_drops,
            "realizations_per_drop": realizations_per_drop,
            "seed": seed,
            "output_dir": str(output_dir),
            "output_formats": ["csv", "json"],
            "max_threads": max_threads,
        },
    }


def make_service(output_dir, **kwargs) -> SimulationService:
    return SimulationService(config.build_experiment_config(raw_config(output_dir, **kwargs)))


def _record(scheme="mrt", power_dbm=30.0, drop_id=0, realization_id=0, ee=1.0, wsr=2.0, error=None):
    return ResultRecordEntity(scheme=scheme, power_dbm=power_dbm, drop_id=drop_id, realization_id=realization_id,
                              ee=ee, wsr=wsr, total_power=2.0, sinr=[1.0, 0.5], iterations=3, error=error)


# ── config ────────────────────────────────────────────────────────────────────

def test_default_config_holds_table_values():
    experiment = config.build_experiment_config()
    params = experiment.params
    assert (params.M, params.K, params.N_t) == (3, 3, 4)
    assert params.P == pytest.approx(np.full(3, utils.dbm_to_watt(46.0)))
    assert params.P_c == pytest.approx(1.0)
    assert params.P_0 == pytest.approx(10.0)
    assert params.zeta == 2.0
    assert params.sigma2 == pytest.approx(utils.dbm_to_watt(-174 + 10 * np.log10(20e6) + 7))
    assert params.weights[2].tolist() == [1.0, 2.0, 3.0]
    assert experiment.power_sweep_dbm == [26.0, 30.0, 34.0, 38.0, 42.0, 46.0]
    assert (experiment.n_drops, experiment.n_realizations) == (10, 100)


def test_explicit_noise_power(tmp_path):
    raw = raw_config(tmp_path)
    raw["scenario"]["noise_power_dbm"] = -100
    assert config.build_experiment_config(raw).params.sigma2 == pytest.approx(1e-13)


@pytest.mark.parametrize("change", [
    lambda raw: raw.pop("scenario"),
    lambda raw: raw["experiment"].update(schemes=["sdp"]),
    lambda raw: raw["experiment"].update(user_drops=0),
    lambda raw: raw["experiment"].update(power_sweep_dbm=[]),
    lambda raw: raw["experiment"].update(output_formats=["xml"]),
    lambda raw: raw["scenario"].update(user_weights=[1, 2, 3]),
    lambda raw: raw["scenario"].update(correlation=1.0),
])
def test_invalid_config_is_rejected(tmp_path, change):
    raw = raw_config(tmp_path)
    change(raw)
    with pytest.raises(ValueError):
        config.build_experiment_config(raw)


def test_overrides_replace_only_given_fields(tmp_path):
    experiment = config.build_experiment_config(raw_config(tmp_path))
    changed = experiment.with_overrides(seed=99, max_threads=None)
    assert changed.seed == 99
    assert changed.max_threads == experiment.max_threads
    assert changed.output_dir == experiment.output_dir


def test_load_replaces_the_active_config(tmp_path, monkeypatch):
    monkeypatch.setattr(config, "current", config.current)
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(raw_config(tmp_path, seed=123)))
    config.load(str(path))
    assert config.build_experiment_config().seed == 123


def test_missing_config_file(tmp_path):
    with pytest.raises(OSError, match="missing.yaml"):
        config.load(str(tmp_path / "missing.yaml"))


# ── aggregation ───────────────────────────────────────────────────────────────

def test_single_record_has_zero_std():
    result = aggregate_group([_record(ee=4.0, wsr=8.0)])
    assert (result.mean_ee, result.std_ee, result.mean_wsr, result.std_wsr, result.n) == (4.0, 0.0, 8.0, 0.0, 1)


def test_constant_records():
    result = aggregate_group([_record(realization_id=i, ee=2.5) for i in range(5)])
    assert result.mean_ee == pytest.approx(2.5)
    assert result.std_ee == pytest.approx(0.0)


def test_known_distribution():
    samples = np.random.default_rng(5).normal(10.0, 2.0, 4000)
    result = aggregate_group([_record(realization_id=i, ee=float(x)) for i, x in enumerate(samples)])
    assert abs(result.mean_ee - 10.0) <= 3 * 2.0 / np.sqrt(4000)
    assert abs(result.std_ee - 2.0) <= 3 * 2.0 / np.sqrt(2 * 3999)
    assert result.std_ee == pytest.approx(np.std(samples, ddof=1))


def test_empty_group_is_rejected():
    with pytest.raises(ValueError):
        aggregate_group([])


def test_aggregate_skips_failures_and_orders_groups():
    records = [_record("vsinr", 40.0), _record("mrt", 40.0), _record("mrt", 30.0, ee=3.0),
               _record("mrt", 30.0, realization_id=1, error="RuntimeError: boom", ee=float("nan"))]
    result = aggregate(records, ["mrt", "vsinr"])
    assert [(entry.scheme, entry.power_dbm, entry.n) for entry in result] == \
        [("mrt", 30.0, 1), ("mrt", 40.0, 1), ("vsinr", 40.0, 1)]
    assert result[0].mean_ee == 3.0


# ── result files ──────────────────────────────────────────────────────────────

def test_empty_aggregates_give_header_only_csv(tmp_path):
    path = ResultsFileConnector(str(tmp_path)).export_aggregates([], "csv")
    with open(path) as file:
        assert file.read() == ",".join(AGGREGATE_COLUMNS) + "\n"


@pytest.mark.parametrize("output_format", ["csv", "json"])
def test_aggregates_survive_export_and_parse(tmp_path, output_format):
    connector = ResultsFileConnector(str(tmp_path))
    aggregates = [AggregateEntity("mrt", 26.0, 1.2345678901234567e6, 0.1, 3.0e7, 2.0e5, 30),
                  AggregateEntity("ee-asymptotic", 46.0, 2.0e6, 0.0, 1.0e7, 0.0, 1)]
    connector.export_aggregates(aggregates, output_format)
    assert connector.parse_aggregates(output_format) == aggregates


def test_records_survive_export_and_parse(tmp_path):
    connector = ResultsFileConnector(str(tmp_path))
    records = [_record(), _record("ee-asymptotic", 46.0, error="RuntimeError: no params")]
    records[0].eta_circ = 1.5e6
    records[0].params_hash = "abc"
    for output_format in ("csv", "json"):
        connector.export_records(records, output_format)
        parsed = connector.parse_records(output_format)
        assert [vars(record) for record in parsed] == [vars(record) for record in records]


def test_failed_records_are_written_as_null(tmp_path):
    connector = ResultsFileConnector(str(tmp_path))
    failed = _record("zfbf", ee=float("nan"), wsr=float("nan"), error="RuntimeError: broken")
    failed.total_power = float("nan")
    connector.export_records([_record(), failed], "json")

    text = (tmp_path / "records.json").read_text()
    assert "NaN" not in text
    row = json.loads(text)[1]
    assert row["EE_bits_per_joule"] is None
    assert row["WSR_bits_per_s"] is None
    assert row["total_power_w"] is None

    parsed = connector.parse_records("json")[1]
    assert all(np.isnan(value) for value in (parsed.ee, parsed.wsr, parsed.total_power))
    assert parsed.error == "RuntimeError: broken"


def test_csv_and_json_carry_the_same_numbers(tmp_path):
    service = make_service(tmp_path, schemes=["mrt"], user_drops=1)
    service.run()
    connector = ResultsFileConnector(str(tmp_path))
    assert connector.parse_aggregates("csv") == connector.parse_aggregates("json")


def test_io_errors_name_the_path(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory")
    with pytest.raises(OSError, match="blocker"):
        ResultsFileConnector(str(blocker)).export_aggregates([], "csv")


def test_unknown_output_format(tmp_path):
    with pytest.raises(ValueError):
        ResultsFileConnector(str(tmp_path)).export_records([], "xml")


# ── experiment driver ─────────────────────────────────────────────────────────

def test_seed_substreams_are_distinct():
    draws = {
        "drop 0": np.random.default_rng(drop_seed(1, 0)).random(),
        "drop 1": np.random.default_rng(drop_seed(1, 1)).random(),
        "realization 0": np.random.default_rng(realization_seed(1, 0, 0)).random(),
        "realization 1": np.random.default_rng(realization_seed(1, 0, 1)).random(),
    }
    assert len(set(draws.values())) == 4
    assert np.random.default_rng(realization_seed(1, 0, 1)).random() == draws["realization 1"]


def test_one_record_per_sweep_point(tmp_path):
    records = make_service(tmp_path, schemes=["mrt"], user_drops=1, realizations_per_drop=1,
                           power_sweep_dbm=(26, 36, 46)).run_experiment()
    assert [record.power_dbm for record in records] == [26.0, 36.0, 46.0]
    assert all(record.error is None for record in records)


def test_records_are_consistent(tmp_path):
    for record in make_service(tmp_path, schemes=["mrt", "zfbf", "vsinr", "wmmse-sr"]).run_experiment():
        assert record.error is None
        assert record.ee == pytest.approx(record.wsr / record.total_power, rel=1e-9)
        assert len(record.sinr) == 4


def test_asymptotic_params_are_shared_within_a_drop(tmp_path):
    records = make_service(tmp_path, schemes=["ee-asymptotic"], realizations_per_drop=3).run_experiment()
    hashes: dict[tuple[float, int], set[str]] = {}
    for record in records:
        assert record.error is None, record.error
        hashes.setdefault((record.power_dbm, record.drop_id), set()).add(record.params_hash)
    assert all(len(values) == 1 for values in hashes.values())
    assert hashes[(30.0, 0)] != hashes[(30.0, 1)]


def test_optimizer_invocations(tmp_path):
    service = make_service(tmp_path, schemes=["ee-conventional", "ee-asymptotic"], user_drops=1,
                           realizations_per_drop=3)
    service.run_experiment()
    assert service.optimizer_invocations == {"ee-conventional": 1 * 2 * 3, "ee-asymptotic": 1 * 2}


def test_scheme_failures_are_recorded(tmp_path, monkeypatch):
    def broken(channels, params):
        raise RuntimeError("broken beamformer")

    monkeypatch.setattr(simulation, "zfbf", broken)
    service = make_service(tmp_path, schemes=["mrt", "zfbf"], user_drops=1)
    assert service.run() == 2 * 2

    records = ResultsFileConnector(str(tmp_path)).parse_records("json")
    failed = [record for record in records if record.error is not None]
    assert {record.scheme for record in failed} == {"zfbf"}
    assert all("broken beamformer" in record.error for record in failed)
    assert [entry.scheme for entry in ResultsFileConnector(str(tmp_path)).parse_aggregates("csv")] == ["mrt", "mrt"]


def test_rerun_gives_identical_results(tmp_path):
    first = make_service(tmp_path / "first")
    second = make_service(tmp_path / "second")
    first.run()
    second.run()
    for name in ("records.csv", "records.json", "aggregates.csv", "aggregates.json"):
        assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes(), name


def test_parallel_and_serial_runs_agree(tmp_path):
    serial = make_service(tmp_path / "serial", realizations_per_drop=4, max_threads=1).run_experiment()
    parallel = make_service(tmp_path / "parallel", realizations_per_drop=4, max_threads=3).run_experiment()
    assert aggregate(serial) == aggregate(parallel)


def test_run_writes_every_artifact(tmp_path):
    service = make_service(tmp_path, user_drops=1)
    assert service.run() == 0

    for name in ("records.csv", "records.json", "aggregates.csv", "aggregates.json", "run_info.json"):
        assert os.path.exists(tmp_path / name), name
    with open(tmp_path / "records.csv") as file:
        assert file.readline().strip() == ",".join(RECORD_COLUMNS)

    run_info = json.loads((tmp_path / "run_info.json").read_text())
    assert run_info["optimizer_invocations"]["ee-asymptotic"] == 2
    assert run_info["records"] == 3 * 2 * 2
    assert set(run_info["wall_time_s"]) == {"mrt", "vsinr", "ee-asymptotic"}
    assert all(seconds >= 0 for seconds in run_info["wall_time_s"].values())

    cached = ResultsFileConnector(str(tmp_path)).read_asymptotic_params(0, 30.0)
    assert cached is not None
    assert len(cached["scenario_hash"]) == 64
    assert cached["eta_circ_bits_per_joule"] > 0


def test_cached_asymptotic_params_are_reused(tmp_path):
    first = make_service(tmp_path, schemes=["ee-asymptotic"], user_drops=1, realizations_per_drop=2)
    first.run()
    records = (tmp_path / "records.json").read_bytes()

    second = make_service(tmp_path, schemes=["ee-asymptotic"], user_drops=1, realizations_per_drop=2)
    second.run()
    assert second.optimizer_invocations["ee-asymptotic"] == 0
    assert (tmp_path / "records.json").read_bytes() == records


def test_cache_is_ignored_for_another_scenario(tmp_path):
    make_service(tmp_path, schemes=["ee-asymptotic"], user_drops=1, realizations_per_drop=1).run()
    changed = make_service(tmp_path, schemes=["ee-asymptotic"], user_drops=1, realizations_per_drop=1, seed=8)
    changed.run()
    assert changed.optimizer_invocations["ee-asymptotic"] == 2


def test_convergence_logs_are_written_on_request(tmp_path):
    experiment = config.build_experiment_config(raw_config(tmp_path, schemes=["ee-asymptotic"], user_drops=1,
                                                           realizations_per_drop=1))
    SimulationService(experiment.with_overrides(log_convergence=True)).run()
    assert len(ResultsFileConnector(str(tmp_path)).read_table("convergence_asymptotic.csv")) > 0
    assert len(ResultsFileConnector(str(tmp_path)).read_table("convergence_asymptotic_inner.csv")) > 0
    assert os.path.exists(tmp_path / "det_equivalents_drop0_p30.csv")


def test_figure_series(tmp_path):
    make_service(tmp_path / "run", user_drops=1).run()
    paths = figure_series([str(tmp_path / "run")], str(tmp_path / "figures"))
    assert [os.path.basename(path) for path in paths] == ["figure_ee_vs_power.csv", "figure_det_vs_monte_carlo.csv"]
    rows = ResultsFileConnector(str(tmp_path / "figures")).read_table("figure_det_vs_monte_carlo.csv")
    assert len(rows) == 2
    assert rows[0]["scenario"] == "M=2 K=2 N_t=4 rho=0.0"


def test_unknown_scheme_is_rejected(tmp_path):
    experiment = config.build_experiment_config(raw_config(tmp_path))
    with pytest.raises(ValueError):
        SimulationService(replace(experiment, schemes=["sdp"]))


# ── command line ──────────────────────────────────────────────────────────────

def test_cli_run(tmp_path, monkeypatch):
    monkeypatch.setattr(config, "current", config.current)
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(raw_config(tmp_path / "ignored", schemes=["mrt"], user_drops=1)))
    assert CliController().dispatch(["run", "--config", str(path), "--output-dir", str(tmp_path / "out"),
                                     "--seed", "3", "--threads", "2"]) == 0
    assert json.loads((tmp_path / "out" / "run_info.json").read_text())["seed"] == 3
    assert not os.path.exists(tmp_path / "ignored")


def test_cli_reports_invalid_config(tmp_path, monkeypatch):
    monkeypatch.setattr(config, "current", config.current)
    path = tmp_path / "config.yaml"
    raw = raw_config(tmp_path)
    raw["experiment"]["user_drops"] = 0
    path.write_text(yaml.safe_dump(raw))
    assert CliController().dispatch(["run", "--config", str(path)]) == 2


def test_cli_validate():
    arguments = ["validate", "--tx-antennas", "8", "--users", "2", "--draws", "50"]
    assert CliController().dispatch(arguments + ["--threshold", "1.0"]) == 0
    assert CliController().dispatch(arguments + ["--threshold", "0.0"]) == 1
