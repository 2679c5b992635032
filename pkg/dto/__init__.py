"""
Contains the DTOs: the schema of the config file sections and the rows of the exported result files.

Implementer's Notes: The DTOs inherit from Python's TypedDict type. This means that they aren't actual custom objects
at runtime but are just regular dicts, however we still get the full type-checking capabilities at edit-time in our
IDE. The config sections are validated against these types with pydantic when the config is loaded (see
utils.validate_dict_against_typed_dict).
"""

from typing import NotRequired, TypedDict, Literal

from persistence.entities import *

type SchemeName = Literal["mrt", "zfbf", "vsinr", "wmmse-sr", "ee-conventional", "ee-asymptotic"]
type OutputFormat = Literal["csv", "json"]


class ScenarioConfigDto(TypedDict):
    cells: int
    users_per_cell: int
    tx_antennas: int
    bs_power_dbm: float | list[float]
    circuit_power_per_antenna_dbm: NotRequired[float]
    static_power_dbm: NotRequired[float]
    amplifier_inefficiency: NotRequired[float]
    noise_power_dbm: NotRequired[float | None]
    noise_figure_db: NotRequired[float]
    bandwidth_hz: NotRequired[float]
    user_weights: NotRequired[list[float] | list[list[float]]]
    correlation: NotRequired[float]


class GeometryConfigDto(TypedDict):
    cell_radius_m: NotRequired[float]
    min_distance_m: NotRequired[float]
    pathloss_exponent: NotRequired[float]
    pathloss_offset_db: NotRequired[float]


class ExperimentConfigDto(TypedDict):
    schemes: list[SchemeName]
    power_sweep_dbm: list[float]
    user_drops: int
    realizations_per_drop: int
    seed: int
    output_dir: NotRequired[str]
    output_formats: NotRequired[list[OutputFormat]]
    max_threads: NotRequired[int]
    log_convergence: NotRequired[bool]


class OptimizerConfigDto(TypedDict):
    relative_delta: NotRequired[float]
    inner_tol: NotRequired[float]
    inner_max_iters: NotRequired[int]
    outer_max_iters: NotRequired[int]


class FixedPointConfigDto(TypedDict):
    tol: NotRequired[float]
    max_iters: NotRequired[int]


class SolverConfigDto(TypedDict):
    conventional: NotRequired[OptimizerConfigDto]
    asymptotic: NotRequired[OptimizerConfigDto]
    fixed_point: NotRequired[FixedPointConfigDto]


class ConfigDto(TypedDict):
    scenario: ScenarioConfigDto
    geometry: NotRequired[GeometryConfigDto]
    experiment: ExperimentConfigDto
    solver: NotRequired[SolverConfigDto]


class ResultRecordDto(TypedDict):
    scheme: str
    P_dBm: float
    drop_id: int
    realization_id: int
    EE_bits_per_joule: float
    WSR_bits_per_s: float
    total_power_w: float
    sinr: list[float]
    iterations: int
    eta_circ: float | None
    params_hash: str | None
    error: str | None


class AggregateDto(TypedDict):
    scheme: str
    P_dBm: float
    mean_EE: float
    std_EE: float
    mean_WSR: float
    std_WSR: float
    n: int
