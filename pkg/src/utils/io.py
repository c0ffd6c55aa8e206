import hashlib
import json
import math
import os
import tempfile
from enum import Enum
from pathlib import Path
from typing import Any, Union

import numpy as np
import pandas as pd

from src.utils.logger import log_info

CSV_FLOAT_FORMAT = "%.17g"


def to_jsonable(obj: Any) -> Any:
    """Recursively convert numpy scalars/arrays, enums and tuples into JSON types.

    Non-finite floats become None so the output stays strict JSON.
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


def _replace_atomic(path: Union[str, Path], write):
    """Write through a temp file in the target directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            write(f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def write_json_atomic(data: Any, path: Union[str, Path]):
    _replace_atomic(path, lambda f: json.dump(to_jsonable(data), f, indent=4,
                                              ensure_ascii=False, allow_nan=False))
    log_info(f"Wrote {path}")


def write_csv_atomic(frame: pd.DataFrame, path: Union[str, Path]):
    """RFC 4180 CSV: header row, CRLF line endings, 17 significant digits."""
    _replace_atomic(path, lambda f: frame.to_csv(f, index=False, float_format=CSV_FLOAT_FORMAT,
                                                 lineterminator="\r\n"))
    log_info(f"Wrote {path} ({len(frame)} rows)")


def read_json(path: Union[str, Path]) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
