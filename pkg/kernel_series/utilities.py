import dataclasses
import hashlib
import json
import os
from enum import Enum
from json import JSONEncoder as _BaseJSONEncoder
from typing import Any, Dict, Iterable, List

import numpy as np

from ._errors import IoError


class JSONEncoder(_BaseJSONEncoder):
    """
    JSON encoder that understands the numpy scalars, arrays, enums and dataclasses found in run reports.
    """

    def default(self, o):
        """
        :param o: The object to serialize
        :return: A JSON-compatible equivalent of the object
        """
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, Enum):
            return o.value
        if dataclasses.is_dataclass(o) and not isinstance(o, type):
            return {f.name: getattr(o, f.name) for f in dataclasses.fields(o)}
        return _BaseJSONEncoder.default(self, o)


def dumps_report(report: Dict[str, Any]) -> str:
    # insertion order is the documented key order, so no sort_keys
    return json.dumps(report, cls=JSONEncoder, indent=2, ensure_ascii=False) + "\n"


def write_bytes_atomic(path, payload: bytes) -> None:
    """Write ``payload`` to ``path`` through a temporary sibling file and an atomic rename.

    :raises IoError: when the file cannot be written.
    """
    path = os.fspath(path)
    temp_path = path + '.tmp'
    try:
        with open(temp_path, 'wb') as f:
            f.write(payload)
        os.replace(temp_path, path)
    except OSError as e:
        try:
            if os.path.exists(temp_path):
                os.remove(temp_path)
        except OSError:
            pass
        raise IoError(f"could not write {path}: {e}") from e


def write_text_atomic(path, text: str) -> None:
    write_bytes_atomic(path, text.encode('utf-8'))


def write_json_atomic(path, report: Dict[str, Any]) -> None:
    write_text_atomic(path, dumps_report(report))


def read_bytes(path) -> bytes:
    """
    :raises FileNotFoundError: when the path does not exist, so callers can name it.
    :raises IoError: on any other read failure.
    """
    try:
        with open(path, 'rb') as f:
            return f.read()
    except FileNotFoundError:
        raise
    except OSError as e:
        raise IoError(f"could not read {path}: {e}") from e


def file_digest(path) -> str:
    """SHA-256 hex digest of a file's bytes."""
    return hashlib.sha256(read_bytes(path)).hexdigest()


def _flatten(obj, prefix: str, out: Dict[str, Any]) -> None:
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(v, f"{prefix}.{k}" if prefix else str(k), out)
    elif isinstance(obj, list):
        for idx, v in enumerate(obj):
            _flatten(v, f"{prefix}[{idx}]", out)
    else:
        out[prefix] = obj


def diff_reports(old: Dict[str, Any], new: Dict[str, Any],
                 ignore: Iterable[str] = ('wall_time_s',)) -> Dict[str, List[str]]:
    """Compare two run reports key path by key path.

    - Paths whose last component is in ``ignore`` are skipped.
    - Returns the paths missing from ``new``, the paths added in ``new`` and the paths whose values differ.
    """
    ignored = set(ignore)
    old_flat: Dict[str, Any] = {}
    new_flat: Dict[str, Any] = {}
    _flatten(old, '', old_flat)
    _flatten(new, '', new_flat)

    def keep(path):
        return path.split('.')[-1] not in ignored

    old_keys = {p for p in old_flat if keep(p)}
    new_keys = {p for p in new_flat if keep(p)}
    return {
        'missing_in_new': sorted(old_keys - new_keys),
        'added_in_new': sorted(new_keys - old_keys),
        'changed': sorted(p for p in old_keys & new_keys if old_flat[p] != new_flat[p]),
    }
