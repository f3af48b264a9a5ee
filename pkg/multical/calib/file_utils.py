from pathlib import Path
from typing import Iterable, Union

import orjson
import pandas as pd

from multical.calib.errors import DataError

PathLike = Union[str, Path]
FLOAT_FORMAT = '%.17g'


def read_frame(path: PathLike) -> pd.DataFrame:
    try:
        return pd.read_csv(path, sep=',', encoding='utf-8', float_precision='round_trip')
    except FileNotFoundError:
        raise DataError(f'no such file: {path}')
    except pd.errors.EmptyDataError:
        raise DataError('empty file')
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DataError(f'unreadable csv {path}: {e}')


def write_frame(df: pd.DataFrame, path: PathLike):
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding='utf-8', lineterminator='\n')


def dump_json(obj) -> bytes:
    return orjson.dumps(obj, option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY)


def write_json(obj, path: PathLike):
    Path(path).write_bytes(dump_json(obj) + b'\n')


def read_json(path: PathLike):
    try:
        return orjson.loads(Path(path).read_bytes())
    except FileNotFoundError:
        raise DataError(f'no such file: {path}')
    except orjson.JSONDecodeError as e:
        raise DataError(f'invalid json in {path}: {e}')


def write_jsonl(records: Iterable[dict], path: PathLike):
    with open(path, 'wb') as f:
        for record in records:
            f.write(orjson.dumps(record, option=orjson.OPT_SERIALIZE_NUMPY) + b'\n')


def read_jsonl(path: PathLike) -> list:
    with open(path, 'rb') as f:
        return [orjson.loads(line) for line in f if line.strip()]
