from functools import singledispatch
from dto import *


@singledispatch
def entity_to_dto(entity):
    raise NotImplementedError(f"entity_to_dto not implemented for {type(entity)}")


@entity_to_dto.register(ResultRecordEntity)
def result_record_entity_to_dto(entity: ResultRecordEntity) -> ResultRecordDto:
    return {
        "scheme": entity.scheme,
        "P_dBm": entity.power_dbm,
        "drop_id": entity.drop_id,
        "realization_id": entity.realization_id,
        "EE_bits_per_joule": entity.ee,
        "WSR_bits_per_s": entity.wsr,
        "total_power_w": entity.total_power,
        "sinr": list(entity.sinr),
        "iterations": entity.iterations,
        "eta_circ": entity.eta_circ,
        "params_hash": entity.params_hash,
        "error": entity.error
    }


@entity_to_dto.register(AggregateEntity)
def aggregate_entity_to_dto(entity: AggregateEntity) -> AggregateDto:
    return {
        "scheme": entity.scheme,
        "P_dBm": entity.power_dbm,
        "mean_EE": entity.mean_ee,
        "std_EE": entity.std_ee,
        "mean_WSR": entity.mean_wsr,
        "std_WSR": entity.std_wsr,
        "n": entity.n
    }


def dto_to_result_record_entity(dto: ResultRecordDto) -> ResultRecordEntity:
    return ResultRecordEntity(scheme=dto["scheme"],
                              power_dbm=dto["P_dBm"],
                              drop_id=dto["drop_id"],
                              realization_id=dto["realization_id"],
                              ee=dto["EE_bits_per_joule"],
                              wsr=dto["WSR_bits_per_s"],
                              total_power=dto["total_power_w"],
                              sinr=list(dto["sinr"]),
                              iterations=dto["iterations"],
                              eta_circ=dto["eta_circ"],
                              params_hash=dto["params_hash"],
                              error=dto["error"])


def dto_to_aggregate_entity(dto: AggregateDto) -> AggregateEntity:
    return AggregateEntity(scheme=dto["scheme"],
                           power_dbm=dto["P_dBm"],
                           mean_ee=dto["mean_EE"],
                           std_ee=dto["std_EE"],
                           mean_wsr=dto["mean_WSR"],
                           std_wsr=dto["std_WSR"],
                           n=dto["n"])
