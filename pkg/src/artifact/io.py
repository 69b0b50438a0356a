"""Flat binary blocks with a JSON sidecar, used for snapshots, solver
states and gauge-flow checkpoints.

A block is a 40-byte little-endian header (magic, version, dim, N, codim,
slice time, value count) followed by float64 values.  The sidecar lists the
named components with their shapes and offsets, plus free-form metadata.
"""
import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MSGF"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIdQ4x")


class FormatError(ValueError):
    pass


def sidecar_path(path):
    return Path(str(path) + ".json")


def write_block(path, arrays: dict, *, dim: int, n: int, codim: int, time: float, meta=None):
    """Write named real arrays as one block; returns the sidecar dict."""
    path = Path(path)
    components, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        a = np.asarray(arr)
        if np.iscomplexobj(a):
            raise FormatError(f"component {name!r} is complex")
        a = np.ascontiguousarray(a, dtype="<f8")
        components.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.ravel())
        offset += a.size
    header = _HEADER.pack(MAGIC, VERSION, dim, n, codim, float(time), offset)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        for c in chunks:
            fh.write(c.tobytes())
    os.replace(tmp, path)
    side = {"format": "MSGF", "version": VERSION, "dim": dim, "N": n, "codim": codim,
            "time": float(time), "dtype": "float64-le", "components": components,
            "meta": meta or {}}
    sidecar_path(path).write_text(json.dumps(side, indent=2, sort_keys=True))
    return side


def read_block(path):
    """Inverse of ``write_block``: (dict of arrays, sidecar dict)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path} is too short for a header")
    magic, version, dim, n, codim, time, count = _HEADER.unpack_from(raw)
    if magic != MAGIC or version != VERSION:
        raise FormatError(f"{path} is not a version-{VERSION} block")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if data.size != count:
        raise FormatError(f"{path}: header says {count} values, found {data.size}")
    side = json.loads(sidecar_path(path).read_text())
    if (side["dim"], side["N"], side["codim"]) != (dim, n, codim):
        raise FormatError(f"{path}: sidecar disagrees with header")
    side["time"] = time
    out = {}
    for c in side["components"]:
        size = int(np.prod(c["shape"], dtype=int))
        out[c["name"]] = data[c["offset"]:c["offset"] + size].reshape(c["shape"]).copy()
    return out, side


# ---------------------------------------------------------------------------
# typed wrappers

def save_snapshot(path, snap, meta=None):
    """Immersion values, frame and the main geometric fields of a snapshot."""
    grid = snap.grid
    arrays = {
        "Y": snap.imm.Y, "dY0": snap.imm.dY0, "frame": snap.frame.e.value,
        "g": snap.g.value, "k": snap.k.value, "omega": snap.omega.value,
    }
    return write_block(path, arrays, dim=grid.dim, n=grid.n, codim=snap.imm.codim,
                       time=snap.imm.time, meta=meta)


def save_state(path, state, meta=None):
    grid = state.grid
    info = {"mode": state.mode, "cfl": state.cfl, "dealias": state.dealias}
    info.update(meta or {})
    return write_block(path, {"u": state.u, "u_t": state.u_t}, dim=grid.dim, n=grid.n,
                       codim=state.codim, time=state.time, meta=info)


def load_state(path):
    from .evolution import EvolutionState
    from .spectral import TorusGrid
    arrays, side = read_block(path)
    m = side["meta"]
    return EvolutionState(TorusGrid(side["dim"], side["N"]), m["mode"], arrays["u"], arrays["u_t"],
                          time=side["time"], codim=side["codim"], cfl=m["cfl"], dealias=m["dealias"])


def save_flow_state(path, state, meta=None):
    grid = state.grid
    return write_block(path, {"Phi": state.Phi, "V": state.V, "M": state.M}, dim=grid.dim,
                       n=grid.n, codim=state.codim, time=state.time, meta=meta)


def load_flow_state(path, grid=None):
    from .gauge.flow import GaugeFlowState
    from .spectral import TorusGrid
    arrays, side = read_block(path)
    grid = TorusGrid(side["dim"], side["N"]) if grid is None else grid
    return GaugeFlowState(grid, side["time"], arrays["Phi"], arrays["V"], arrays["M"])


class FlowCheckpointer:
    """Callable for ``run_gauge_flow(checkpoint=...)`` writing one block per
    stored state into ``directory``; ``latest`` returns the state to resume from."""

    def __init__(self, directory, meta=None):
        self.directory = Path(directory)
        self.meta = meta or {}
        self.count = 0

    def _path(self, time):
        return self.directory / f"flow_t{time:.10f}.bin"

    def __call__(self, state):
        save_flow_state(self._path(state.time), state, self.meta)
        self.count += 1

    def latest(self, grid=None):
        files = sorted(self.directory.glob("flow_t*.bin"))
        if not files:
            return None
        return load_flow_state(max(files, key=lambda p: float(p.stem[6:])), grid)
