"""Deterministic JSON and CSV I/O for multi-slits, driving records and reports."""

import io
import math
from pathlib import Path
from typing import Any, Union

import numpy as np
from pydantic import BaseModel, TypeAdapter

from app.errors import IncompatibleInputsError
from app.models.slit import MultiSlitPayload
from app.services.forward import DrivingRecord
from app.services.geometry import MultiSlit, WeightVector

PathLike = Union[str, Path]

_DOCUMENT = TypeAdapter(Any)


def _plain(obj: Any) -> Any:
    """numpy values to Python ones, non-finite floats to None."""
    if isinstance(obj, BaseModel):
        return _plain(obj.model_dump(mode="json", by_alias=True))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any) -> str:
    """Compact JSON through pydantic; keys keep insertion order, non-finite floats become null."""
    return _DOCUMENT.dump_json(_plain(obj)).decode("utf-8")


def write_json(path: PathLike, obj: Any) -> None:
    Path(path).write_text(dumps(obj) + "\n", encoding="utf-8")


def read_multislit(path: PathLike) -> MultiSlit:
    payload = MultiSlitPayload.model_validate_json(Path(path).read_text(encoding="utf-8"))
    return payload.to_domain()


def write_multislit(path: PathLike, m: MultiSlit) -> None:
    write_json(path, MultiSlitPayload.from_domain(m))


def driving_csv(record: DrivingRecord, with_weights: bool = True) -> str:
    """``t,U1..Un[,lambda1..lambdan]`` as text."""
    n = record.n
    cols = [record.times, *record.U]
    header = ["t"] + [f"U{j + 1}" for j in range(n)]
    if with_weights:
        cols.extend(record.weight_rows.T)
        header += [f"lambda{j + 1}" for j in range(n)]
    buf = io.StringIO()
    np.savetxt(buf, np.column_stack(cols), fmt="%.17g", delimiter=",", header=",".join(header), comments="")
    return buf.getvalue()


def write_driving_csv(path: PathLike, record: DrivingRecord, with_weights: bool = True) -> None:
    Path(path).write_text(driving_csv(record, with_weights), encoding="utf-8")


def read_driving_csv(path: PathLike) -> DrivingRecord:
    """Parse a driving CSV; without lambda columns the weights are equal."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    header = lines[0].strip().split(",") if lines else [""]
    if header[0] != "t":
        raise IncompatibleInputsError("driving CSV must start with a t column")
    try:
        data = np.atleast_2d(np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1))
    except ValueError as exc:
        raise IncompatibleInputsError(f"malformed driving CSV: {exc}") from exc
    if data.shape[1] != len(header):
        raise IncompatibleInputsError("driving CSV rows do not match its header")
    u_cols = [k for k, h in enumerate(header) if h.startswith("U")]
    w_cols = [k for k, h in enumerate(header) if h.startswith("lambda")]
    if not u_cols or (w_cols and len(w_cols) != len(u_cols)):
        raise IncompatibleInputsError("driving CSV needs U1..Un and optionally lambda1..lambdan")
    t = data[:, 0]
    if len(t) < 2:
        raise IncompatibleInputsError("driving CSV needs at least two samples")
    spacing = np.diff(t)
    if t[0] != 0.0 or np.ptp(spacing) > 1e-9 * max(t[-1], 1.0):
        raise IncompatibleInputsError("driving CSV times must form a uniform grid starting at 0")
    U = data[:, u_cols].T
    if w_cols:
        rows = data[:, w_cols]
        weights = WeightVector(rows[0]) if np.all(rows == rows[0]) else rows
    else:
        weights = WeightVector(np.full(len(u_cols), 1.0 / len(u_cols)))
    return DrivingRecord.from_arrays(float(t[-1]), U, weights)
