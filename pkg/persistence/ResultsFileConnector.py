import csv
import json
import logging
import math
import os

from dto import ResultRecordDto, AggregateDto
from dto.mapper import entity_to_dto, dto_to_result_record_entity, dto_to_aggregate_entity
from persistence.entities import *

_logger = logging.getLogger(__name__)

RECORD_COLUMNS = ["scheme", "P_dBm", "drop_id", "realization_id", "EE_bits_per_joule", "WSR_bits_per_s",
                  "total_power_w", "sinr", "iterations", "eta_circ", "params_hash", "error"]
AGGREGATE_COLUMNS = ["scheme", "P_dBm", "mean_EE", "std_EE", "mean_WSR", "std_WSR", "n"]


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, list):
        return ";".join(repr(float(item)) for item in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _optional_float(value: str) -> float | None:
    return None if value == "" else float(value)


def _nan_to_null(content):
    """
    Replaces NaN floats by None so the JSON output stays standard, nested lists and dicts included.
    """
    if isinstance(content, float) and math.isnan(content):
        return None
    if isinstance(content, dict):
        return {key: _nan_to_null(value) for key, value in content.items()}
    if isinstance(content, list):
        return [_nan_to_null(value) for value in content]
    return content


def _null_to_nan(value: float | None) -> float:
    return float("nan") if value is None else value


class ResultsFileConnector:
    """
    Reads and writes the files of one results directory: records, aggregates, cached asymptotic params, convergence
    logs, deterministic-equivalent debug tables and the run info.
    """

    def __init__(self, output_dir: str):
        self.output_dir = output_dir

    def path(self, *parts: str) -> str:
        return os.path.join(self.output_dir, *parts)

    def _open(self, path: str, mode: str):
        try:
            if "w" in mode:
                os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
            return open(path, mode, newline="" if path.endswith(".csv") else None, encoding="utf-8")
        except OSError as e:
            raise OSError("Could not open " + path + ": " + str(e)) from e

    def _write_csv(self, path: str, columns: list[str], rows: list[dict]) -> str:
        try:
            with self._open(path, "w") as file:
                writer = csv.writer(file, lineterminator="\n")
                writer.writerow(columns)
                for row in rows:
                    writer.writerow([_format_cell(row[column]) for column in columns])
        except OSError as e:
            raise OSError("Could not write " + path + ": " + str(e)) from e
        _logger.info("Wrote " + str(len(rows)) + " rows to " + path)
        return path

    def _read_csv(self, path: str) -> list[dict]:
        try:
            with self._open(path, "r") as file:
                return list(csv.DictReader(file))
        except OSError as e:
            raise OSError("Could not read " + path + ": " + str(e)) from e

    def _write_json(self, path: str, content) -> str:
        try:
            with self._open(path, "w") as file:
                json.dump(_nan_to_null(content), file, indent=2, allow_nan=False)
                file.write("\n")
        except OSError as e:
            raise OSError("Could not write " + path + ": " + str(e)) from e
        _logger.info("Wrote " + path)
        return path

    def _read_json(self, path: str):
        try:
            with self._open(path, "r") as file:
                return json.load(file)
        except OSError as e:
            raise OSError("Could not read " + path + ": " + str(e)) from e

    def export_aggregates(self, aggregates: list[AggregateEntity], output_format: str) -> str:
        """
        Writes the aggregates as aggregates.csv or aggregates.json. The order of the passed list is kept.
        :return: The path of the written file.
        """
        rows = [entity_to_dto(aggregate) for aggregate in aggregates]
        if output_format == "csv":
            return self._write_csv(self.path("aggregates.csv"), AGGREGATE_COLUMNS, rows)
        if output_format == "json":
            return self._write_json(self.path("aggregates.json"), rows)
        raise ValueError("Unknown output format " + str(output_format))

    def parse_aggregates(self, output_format: str) -> list[AggregateEntity]:
        if output_format == "csv":
            rows: list[AggregateDto] = [{
                "scheme": row["scheme"],
                "P_dBm": float(row["P_dBm"]),
                "mean_EE": float(row["mean_EE"]),
                "std_EE": float(row["std_EE"]),
                "mean_WSR": float(row["mean_WSR"]),
                "std_WSR": float(row["std_WSR"]),
                "n": int(row["n"])
            } for row in self._read_csv(self.path("aggregates.csv"))]
        elif output_format == "json":
            rows = self._read_json(self.path("aggregates.json"))
        else:
            raise ValueError("Unknown output format " + str(output_format))
        return [dto_to_aggregate_entity(row) for row in rows]

    def export_records(self, records: list[ResultRecordEntity], output_format: str) -> str:
        rows = [entity_to_dto(record) for record in records]
        if output_format == "csv":
            return self._write_csv(self.path("records.csv"), RECORD_COLUMNS, rows)
        if output_format == "json":
            return self._write_json(self.path("records.json"), rows)
        raise ValueError("Unknown output format " + str(output_format))

    def parse_records(self, output_format: str) -> list[ResultRecordEntity]:
        if output_format == "csv":
            rows: list[ResultRecordDto] = [{
                "scheme": row["scheme"],
                "P_dBm": float(row["P_dBm"]),
                "drop_id": int(row["drop_id"]),
                "realization_id": int(row["realization_id"]),
                "EE_bits_per_joule": float(row["EE_bits_per_joule"]),
                "WSR_bits_per_s": float(row["WSR_bits_per_s"]),
                "total_power_w": float(row["total_power_w"]),
                "sinr": [float(value) for value in row["sinr"].split(";") if value != ""],
                "iterations": int(row["iterations"]),
                "eta_circ": _optional_float(row["eta_circ"]),
                "params_hash": row["params_hash"] or None,
                "error": row["error"] or None
            } for row in self._read_csv(self.path("records.csv"))]
        elif output_format == "json":
            rows = self._read_json(self.path("records.json"))
            for row in rows:
                for column in ("EE_bits_per_joule", "WSR_bits_per_s", "total_power_w"):
                    row[column] = _null_to_nan(row[column])
        else:
            raise ValueError("Unknown output format " + str(output_format))
        return [dto_to_result_record_entity(row) for row in rows]

    def asymptotic_params_path(self, drop_id: int, power_dbm: float) -> str:
        return self.path("asymptotic_params", "drop" + str(drop_id) + "_p" + format(power_dbm, "g") + ".json")

    def write_asymptotic_params(self, drop_id: int, power_dbm: float, params: dict) -> str:
        return self._write_json(self.asymptotic_params_path(drop_id, power_dbm), params)

    def read_asymptotic_params(self, drop_id: int, power_dbm: float) -> dict | None:
        path = self.asymptotic_params_path(drop_id, power_dbm)
        if not os.path.exists(path):
            return None
        return self._read_json(path)

    def write_table(self, name: str, columns: list[str], rows: list[dict]) -> str:
        """
        Writes an auxiliary CSV table (convergence logs, debug dumps, figure series) into the results directory.
        """
        return self._write_csv(self.path(name), columns, rows)

    def read_table(self, name: str) -> list[dict]:
        return self._read_csv(self.path(name))

    def write_run_info(self, run_info: dict) -> str:
        return self._write_json(self.path("run_info.json"), run_info)

    def read_run_info(self) -> dict:
        return self._read_json(self.path("run_info.json"))


def is_missing(value: float | None) -> bool:
    return value is None or (isinstance(value, float) and math.isnan(value))
