"""Self-describing binary containers for fields, states and checkpoints.

Layout: magic ``WFC1`` + 8-byte little-endian header length + UTF-8 JSON
header + the raw arrays, row-major little-endian float64, in header order.
The header carries the grid (n, shape, lengths), the object kind, per-array
names/shapes, and for checkpoints the scalar flow header (t, p, sigma,
lambda_tilde).  Reads reproduce writes bit-exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .flow import EuclideanState, ReducedState
from .forms import DifferentialForm
from .grids import GridSpec, MetricField, ScalarField

MAGIC = b"WFC1"


def _pack(header: dict, arrays: list[np.ndarray]) -> bytes:
    names = [a["name"] for a in header["arrays"]]
    assert len(names) == len(arrays)
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<Q", len(head)), head]
    for arr in arrays:
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(chunks)


def _unpack(blob: bytes) -> tuple[dict, list[np.ndarray]]:
    if blob[:4] != MAGIC:
        raise ValueError("not a field container (bad magic)")
    (head_len,) = struct.unpack("<Q", blob[4:12])
    header = json.loads(blob[12:12 + head_len].decode("utf-8"))
    offset = 12 + head_len
    arrays = []
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
        arrays.append(arr.astype(np.float64))
        offset += count * 8
    return header, arrays


def _grid_header(grid: GridSpec) -> dict:
    return {"n": grid.n, "shape": list(grid.shape), "lengths": list(grid.lengths)}


def _grid_from_header(header: dict) -> GridSpec:
    return GridSpec(tuple(header["shape"]), tuple(header["lengths"]))


def dump_form(form: DifferentialForm) -> bytes:
    header = {
        "kind": "form",
        "grid": _grid_header(form.grid),
        "degree": form.degree,
        "arrays": [{"name": "comps", "shape": list(form.comps.shape)}],
    }
    return _pack(header, [form.comps])


def dump_metric(metric: MetricField) -> bytes:
    header = {
        "kind": "metric",
        "grid": _grid_header(metric.grid),
        "arrays": [{"name": "entries", "shape": list(metric.entries.shape)}],
    }
    return _pack(header, [metric.entries])


def dump_scalar(field: ScalarField) -> bytes:
    header = {
        "kind": "scalar",
        "grid": _grid_header(field.grid),
        "arrays": [{"name": "values", "shape": list(field.values.shape)}],
    }
    return _pack(header, [field.values])


def dump_state(state) -> bytes:
    if isinstance(state, ReducedState):
        arrays = [("ghat", state.ghat.entries), ("f", state.f.values)]
        if state.beta is not None:
            arrays.append(("beta", state.beta.comps))
        if state.psi is not None:
            arrays.append(("psi", state.psi.comps))
        header = {
            "kind": "reduced_state",
            "grid": _grid_header(state.grid),
            "t": state.t,
            "p": state.p,
            "sigma": state.sigma,
            "lambda_tilde": state.factor.lambda_tilde,
            "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
        }
        return _pack(header, [a for _, a in arrays])
    if isinstance(state, EuclideanState):
        arrays = [("g", state.g.entries), ("F", state.F.comps)]
        header = {
            "kind": "euclidean_state",
            "grid": _grid_header(state.grid),
            "t": state.t,
            "degree": state.F.degree,
            "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
        }
        return _pack(header, [a for _, a in arrays])
    raise TypeError(f"cannot serialize {type(state).__name__}")


def load(blob: bytes):
    """Load any container; returns the matching field or state object."""
    header, arrays = _unpack(blob)
    grid = _grid_from_header(header["grid"])
    kind = header["kind"]
    if kind == "form":
        return DifferentialForm(grid, header["degree"], arrays[0])
    if kind == "metric":
        return MetricField(grid, arrays[0])
    if kind == "scalar":
        return ScalarField(grid, arrays[0])
    if kind == "reduced_state":
        named = {spec["name"]: arr for spec, arr in zip(header["arrays"], arrays)}
        p = int(header["p"])
        beta = None
        if "beta" in named:
            beta = DifferentialForm(grid, 3 - p, named["beta"])
        psi = None
        if "psi" in named:
            psi = DifferentialForm(grid, 4, named["psi"])
        return ReducedState.build(
            ghat=MetricField(grid, named["ghat"]),
            f=ScalarField(grid, named["f"]),
            p=p,
            sigma=int(header["sigma"]),
            lambda_tilde=float(header["lambda_tilde"]),
            beta=beta,
            psi=psi,
            t=float(header["t"]),
        )
    if kind == "euclidean_state":
        named = {spec["name"]: arr for spec, arr in zip(header["arrays"], arrays)}
        return EuclideanState(
            g=MetricField(grid, named["g"]),
            F=DifferentialForm(grid, int(header["degree"]), named["F"]),
            t=float(header["t"]),
        )
    raise ValueError(f"unknown container kind {kind!r}")


def write_checkpoint(state, path) -> None:
    Path(path).write_bytes(dump_state(state))


def read_checkpoint(path):
    return load(Path(path).read_bytes())


def write_jsonl(records: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for rec in records:
            handle.write(json.dumps(rec, sort_keys=True) + "\n")


def append_jsonl(record: dict, handle) -> None:
    handle.write(json.dumps(record, sort_keys=True) + "\n")
