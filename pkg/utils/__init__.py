import math
import typing
from typing import Callable

import pydantic


def validate_dict_against_typed_dict(obj: dict, typed_dict: type[typing.TypedDict], name: str) -> dict:
    """
    Validates the passed dict against the passed TypedDict and returns the validated (and coerced) dict.
    :param obj: The dict to validate, e.g. a section loaded from the config file.
    :param typed_dict: The TypedDict describing the expected schema.
    :param name: Name of the validated section, used in the error message.
    :return: The validated dict.
    :raise: ValueError If the dict does not match the schema.
    """
    validator = pydantic.TypeAdapter(typed_dict)
    try:
        return validator.validate_python(obj)
    except pydantic.ValidationError as e:
        raise ValueError("Invalid " + name + ": " + str(e)) from e


def dbm_to_watt(value_dbm: float) -> float:
    return 10.0 ** ((value_dbm - 30.0) / 10.0)


def bisect_power_multiplier(power_of_multiplier: Callable[[float], float],
                            budget: float,
                            tol: float = 1e-12,
                            max_steps: int = 200) -> float:
    """
    Finds the Lagrange multiplier mu >= 0 of a per-BS power constraint by bisection.

    power_of_multiplier(mu) has to be strictly decreasing in mu and tend to 0 for mu -> inf. If the unconstrained
    solution (mu = 0) already satisfies the budget, 0 is returned. Otherwise, the upper end of the bracket is found by
    doubling from 1 and the bracket is halved until the relative power gap is below tol. The returned multiplier is
    always the feasible end of the bracket, i.e. power_of_multiplier(result) <= budget.
    """
    if power_of_multiplier(0.0) <= budget:
        return 0.0

    mu_low = 0.0
    mu_high = 1.0
    while power_of_multiplier(mu_high) > budget:
        mu_low = mu_high
        mu_high *= 2.0
        if not math.isfinite(mu_high):
            raise ValueError("Could not bracket the power constraint multiplier, budget " + str(budget))

    for _ in range(max_steps):
        mu_mid = 0.5 * (mu_low + mu_high)
        if mu_mid <= mu_low or mu_mid >= mu_high:
            break
        power = power_of_multiplier(mu_mid)
        if power > budget:
            mu_low = mu_mid
        else:
            mu_high = mu_mid
            if budget - power <= tol * budget:
                break

    return mu_high
