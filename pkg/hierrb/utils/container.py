"""
Binary artifact container.

An artifact is a numpy .npz archive. Every array is stored Fortran ordered
(the NPY header records shape, dtype and the fortran_order flag, the payload
is column-major); the JSON entry `__meta__` carries descriptive metadata.
"""

import json
import logging
from pathlib import Path
from typing import Tuple

import numpy as np

from hierrb.exceptions import ArtifactError

logger = logging.getLogger(__name__)

META_KEY = "__meta__"


def save_container(path, arrays: dict, meta: dict = None) -> Path:
    path = Path(path)
    if path.suffix != ".npz":
        path = path.with_suffix(".npz")
    path.parent.mkdir(parents=True, exist_ok=True)
    if META_KEY in arrays:
        raise ArtifactError(f"array name {META_KEY} is reserved")

    payload = {name: np.asfortranarray(value) for name, value in arrays.items()}
    payload[META_KEY] = np.array(json.dumps(meta or {}, sort_keys=True, default=_json_default))
    np.savez(path, **payload)
    logger.debug(f"container written: {path} ({len(arrays)} arrays)")
    return path


def load_container(path) -> Tuple[dict, dict]:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"artifact not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {name: data[name] for name in data.files if name != META_KEY}
            meta = json.loads(str(data[META_KEY])) if META_KEY in data.files else {}
    except (OSError, ValueError) as e:
        raise ArtifactError(f"unreadable artifact {path}: {e}") from e
    return arrays, meta


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")
