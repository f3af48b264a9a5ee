from typing import List

from pydantic import ValidationError

from multical.calib.calibrators import CalibratedModel, LevelSetBoostModel, LinearModel, PatchTable
from multical.calib.discretize import Discretizer
from multical.calib.errors import DataError
from multical.calib.file_utils import PathLike, read_json, read_jsonl, write_json, write_jsonl
from multical.calib.model import CalibratorKind, FitTrace
from multical.calib.trees import EnsemblePredictor

PAYLOAD_TYPES = {
    CalibratorKind.mcboost: PatchTable,
    CalibratorKind.lsboost: LevelSetBoostModel,
    CalibratorKind.multiaccurate: LinearModel,
}


def model_to_dict(model: CalibratedModel) -> dict:
    if model.kind == CalibratorKind.ours:
        payload = model.payload.to_dict()
    else:
        payload = model.payload.dict()
    return {'kind': model.kind.value,
            'discretizer': model.discretizer.dict() if model.discretizer is not None else None,
            'payload': payload,
            'num_groups': model.num_groups,
            'config': model.config}


def model_from_dict(data: dict) -> CalibratedModel:
    try:
        kind = CalibratorKind(data['kind'])
        discretizer = Discretizer.parse_obj(data['discretizer']) if data.get('discretizer') else None
        payload = data['payload']
        if kind == CalibratorKind.ours:
            payload = EnsemblePredictor.parse_obj({k: v for k, v in payload.items() if k != 'base'})
        else:
            payload = PAYLOAD_TYPES[kind].parse_obj(payload)
        return CalibratedModel(kind=kind, num_groups=data['num_groups'], payload=payload, discretizer=discretizer,
                               config=data.get('config') or {})
    except KeyError as e:
        raise DataError(f'model file is missing field {e}')
    except (ValueError, ValidationError) as e:
        raise DataError(f'invalid model file: {e}')


def save_model(model: CalibratedModel, path: PathLike):
    write_json(model_to_dict(model), path)


def load_model(path: PathLike) -> CalibratedModel:
    data = read_json(path)
    if not isinstance(data, dict):
        raise DataError(f'{path} does not hold a model object')
    return model_from_dict(data)


def trace_records(trace: FitTrace) -> List[dict]:
    records = [{'event': 'iteration', **r.dict()} for r in trace.records]
    records.append({'event': 'stop', 'solver': trace.solver,
                    'stop_reason': trace.stop_reason.value if trace.stop_reason else None,
                    'best_iteration': trace.best_iteration})
    return records


def write_trace(trace: FitTrace, path: PathLike):
    write_jsonl(trace_records(trace), path)


def read_trace(path: PathLike) -> List[dict]:
    return read_jsonl(path)
