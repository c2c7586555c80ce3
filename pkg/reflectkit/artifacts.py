"""
Artifacts on disk.

Every artifact is written through a temporary file in the same directory and
renamed into place, and gets a ``<name>.manifest.json`` beside it with the
configuration echo, seed, package versions, wall time and a timestamp. Data
files contain nothing time-dependent, so repeating a run reproduces them
byte for byte.
"""

import csv
import io
import json
import logging
import os
import platform
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy

from . import __version__

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def format_value(value: Any) -> str:
    """CSV text of one cell; floats keep 17 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def _plain(value: Any) -> Any:
    """JSON-ready copy: arrays to lists, numpy scalars to Python numbers."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if np.isfinite(v) else repr(v)
    return value


def atomic_write(path: PathLike, text: str) -> Path:
    """Write ``text`` to ``path`` via a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.debug("wrote %s (%d bytes)", path, len(text))
    return path


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return atomic_write(path, buf.getvalue())


def write_jsonl(path: PathLike, records: Iterable[Dict[str, Any]]) -> Path:
    text = "".join(json.dumps(_plain(r)) + "\n" for r in records)
    return atomic_write(path, text)


def write_json(path: PathLike, obj: Any) -> Path:
    return atomic_write(path, json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


def write_table(path: PathLike, header: Sequence[str], rows: List[Sequence[Any]],
                fmt: str = "csv") -> Path:
    """Rows as CSV, or as JSON lines keyed by the header."""
    if fmt == "csv":
        return write_csv(path, header, rows)
    if fmt == "jsonl":
        return write_jsonl(path, (dict(zip(header, row)) for row in rows))
    raise ValueError(f"unknown format '{fmt}'")


def manifest_path(artifact: PathLike) -> Path:
    artifact = Path(artifact)
    return artifact.with_name(artifact.name + ".manifest.json")


def write_manifest(artifact: PathLike, config: Dict[str, Any], seed: int, wall_time: float,
                   extra: Optional[Dict[str, Any]] = None) -> Path:
    record = {
        "artifact": Path(artifact).name,
        "config": config,
        "seed": seed,
        "versions": {
            "reflectkit": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "wall_time_s": wall_time,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    if extra:
        record.update(extra)
    return write_json(manifest_path(artifact), record)


def _cell(text: str) -> Any:
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_csv_rows(path: PathLike) -> Tuple[List[str], List[List[Any]]]:
    """Header and typed rows of a CSV artifact."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader)
        return header, [[_cell(c) for c in row] for row in reader]


def read_jsonl_rows(path: PathLike) -> List[Dict[str, Any]]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
