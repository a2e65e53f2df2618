"""On-disk formats: binary vectors, instance directories, reports.

Binary vectors are an 8-byte little-endian unsigned element count
followed by that many little-endian float64 values. An instance
directory holds ``spec.json``, ``operator.json``, ``x_true.bin`` (when
known) and ``b.bin``; a dense operator without a generating seed also
gets ``matrix.bin`` (row-major). JSON is written with sorted keys so
identical inputs give identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from pathlib import Path
from typing import Union

import numpy as np

from .linops import DenseOperator, operator_from_spec
from .probgen import ProblemInstance, SignalSpec

PathLike = Union[str, Path]

_HEADER = struct.Struct("<Q")
_INSTANCE_FILES = ("spec.json", "operator.json", "x_true.bin", "b.bin", "matrix.bin")


class FormatError(ValueError):
    pass


def vector_bytes(v: np.ndarray) -> bytes:
    v = np.ascontiguousarray(v, dtype="<f8").ravel()
    return _HEADER.pack(v.size) + v.tobytes()


def write_vector(path: PathLike, v: np.ndarray) -> None:
    Path(path).write_bytes(vector_bytes(v))


def read_vector(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: shorter than the length header")
    (count,) = _HEADER.unpack_from(data)
    if len(data) != _HEADER.size + 8 * count:
        raise FormatError(f"{path}: header says {count} values, file holds "
                          f"{(len(data) - _HEADER.size) / 8:g}")
    return np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(np.float64)


def dumps_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def write_json(path: PathLike, obj) -> None:
    Path(path).write_text(dumps_json(obj))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return _plain(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def sci(v) -> str:
    """Scientific notation with 6 significant digits (CSV cells)."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.5e}"


def save_instance(instance: ProblemInstance, directory: PathLike) -> str:
    """Write ``instance`` to ``directory`` and return its digest."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name in _INSTANCE_FILES:
        (d / name).unlink(missing_ok=True)
    spec = {"signal": instance.spec.to_dict() if instance.spec is not None else None,
            "noise_std": instance.noise_std, "delta": instance.delta}
    write_json(d / "spec.json", spec)
    op_spec = instance.operator.to_spec()
    write_json(d / "operator.json", op_spec)
    if isinstance(instance.operator, DenseOperator) and "seed" not in op_spec:
        write_vector(d / "matrix.bin", instance.operator.matrix)
    write_vector(d / "b.bin", instance.b)
    if instance.x_true is not None:
        write_vector(d / "x_true.bin", instance.x_true)
    return instance_digest(d)


def load_instance(directory: PathLike) -> ProblemInstance:
    d = Path(directory)
    try:
        spec = json.loads((d / "spec.json").read_text())
        op_spec = json.loads((d / "operator.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{d}: unreadable instance ({exc})") from exc
    matrix = None
    if (d / "matrix.bin").exists():
        matrix = read_vector(d / "matrix.bin").reshape(op_spec["m"], op_spec["n"])
    op = operator_from_spec(op_spec, matrix)
    b = read_vector(d / "b.bin")
    if b.size != op.n_rows:
        raise FormatError(f"{d}: b has {b.size} entries, operator has {op.n_rows} rows")
    x_true = read_vector(d / "x_true.bin") if (d / "x_true.bin").exists() else None
    if x_true is not None and x_true.size != op.n_cols:
        raise FormatError(f"{d}: x_true has {x_true.size} entries, operator has {op.n_cols} columns")
    sig = spec.get("signal")
    signal = SignalSpec(**sig) if sig is not None else None
    return ProblemInstance(op, b, x_true, float(spec.get("noise_std") or 0.0),
                           spec.get("delta"), signal)


def instance_digest(directory: PathLike) -> str:
    """SHA-256 over the instance files in a fixed order (first 16 hex digits)."""
    h = hashlib.sha256()
    d = Path(directory)
    for name in _INSTANCE_FILES:
        p = d / name
        if p.exists():
            h.update(name.encode() + b"\0" + p.read_bytes())
    return h.hexdigest()[:16]


def load_matrix(path: PathLike) -> np.ndarray:
    """Dense matrix from ``.csv`` (comma separated rows) or ``.npy``."""
    p = Path(path)
    if p.suffix == ".csv":
        return np.loadtxt(p, delimiter=",", ndmin=2)
    if p.suffix == ".npy":
        return np.load(p, allow_pickle=False)
    raise FormatError(f"{p}: unsupported matrix format (use .csv or .npy)")
