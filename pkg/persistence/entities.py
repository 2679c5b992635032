class ResultRecordEntity:
    """
    Outcome of one scheme on one (power, drop, realization) cell of the experiment. ee is in bits/Joule, wsr in bits/s,
    total_power in W. eta_circ (deterministic EE in bits/Joule) and params_hash are only set for the asymptotic scheme.
    error carries the failure message if the scheme failed, in which case the numeric fields are NaN.
    """
    def __init__(self, scheme: str, power_dbm: float, drop_id: int, realization_id: int, ee: float, wsr: float,
                 total_power: float, sinr: list[float], iterations: int, eta_circ: float | None = None,
                 params_hash: str | None = None, error: str | None = None):
        self.scheme = scheme
        self.power_dbm = power_dbm
        self.drop_id = drop_id
        self.realization_id = realization_id
        self.ee = ee
        self.wsr = wsr
        self.total_power = total_power
        self.sinr = sinr
        self.iterations = iterations
        self.eta_circ = eta_circ
        self.params_hash = params_hash
        self.error = error

    def sort_key(self) -> tuple:
        return self.scheme, self.power_dbm, self.drop_id, self.realization_id


class AggregateEntity:
    """
    Mean and unbiased standard deviation of EE and WSR over all records of one (scheme, power) group.
    """
    def __init__(self, scheme: str, power_dbm: float, mean_ee: float, std_ee: float, mean_wsr: float, std_wsr: float,
                 n: int):
        self.scheme = scheme
        self.power_dbm = power_dbm
        self.mean_ee = mean_ee
        self.std_ee = std_ee
        self.mean_wsr = mean_wsr
        self.std_wsr = std_wsr
        self.n = n

    def __eq__(self, other) -> bool:
        if not isinstance(other, AggregateEntity):
            return NotImplemented
        return vars(self) == vars(other)
