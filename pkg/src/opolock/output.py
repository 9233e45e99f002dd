"""
opolock.output

CSV and JSON writers. CSV tables are column arrays handed to numpy.savetxt
with 17 significant digits so a value read back is bit-identical; every file
goes to a temporary name in the target directory first and is then renamed
into place.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Any, Iterator, Mapping, Optional

import numpy as np

from . import __version__


def _json_safe(value: Any) -> Any:
    """numpy scalars/arrays to plain Python; non-finite floats to None."""
    if isinstance(value, Mapping):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_json_safe(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        x = float(value)
        return x if math.isfinite(x) else None
    if isinstance(value, complex):
        return {"re": _json_safe(value.real), "im": _json_safe(value.imag)}
    if isinstance(value, Path):
        return str(value)
    return value


def dumps(obj: Any) -> str:
    return json.dumps(_json_safe(obj), indent=2, ensure_ascii=False, allow_nan=False)


@contextmanager
def atomic_open(path: Path | str) -> Iterator[IO[str]]:
    """Text handle on a temporary sibling of `path`, renamed onto it on clean exit."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path | str, columns: Mapping[str, Any]) -> Path:
    """
    One column per mapping entry, header row from the keys. Columns are
    flattened and must have equal length; booleans land as 0/1 and missing
    values (None, NaN) as "nan".
    """
    data = [np.asarray(col, dtype=float).ravel() for col in columns.values()]
    with atomic_open(path) as fh:
        np.savetxt(
            fh,
            np.column_stack(data),
            fmt="%.17g",
            delimiter=",",
            header=",".join(columns),
            comments="",
        )
    return Path(path)


def write_json(path: Path | str, obj: Any) -> Path:
    with atomic_open(path) as fh:
        fh.write(dumps(obj) + "\n")
    return Path(path)


def sidecar(command: str, config: Mapping[str, Any], extra: Optional[Mapping[str, Any]] = None) -> dict[str, Any]:
    """Metadata written next to every result; its "config" object re-runs the command."""
    payload: dict[str, Any] = {
        "command": command,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "config": dict(config),
    }
    if extra:
        payload["meta"] = dict(extra)
    return payload
