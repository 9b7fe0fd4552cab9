"""Binary snapshot files, tagged foliation records, CSV tables and run manifests.

Snapshot layout (all little-endian)::

    b"EULR"  u32 version  u32 n  f64 length  f64 gamma  u32 count
    count x ( f64 time, rho[n^3], v1[n^3], v2[n^3], v3[n^3] )

Arrays are stored with the first coordinate varying fastest.  Any bytes
after the last snapshot are tagged records; the only tag defined so far is
``b"FOLI"`` for a foliation graph.  Every writer goes through a temporary
file in the target directory and an atomic rename.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import struct
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SnapshotFormatError
from .evolution import SnapshotStack
from .spectral import Grid
from .state import EquationOfState, FluidState

MAGIC = b"EULR"
VERSION = 1
HEADER = struct.Struct("<4sIIddI")
TIME = struct.Struct("<d")
FOLIATION_TAG = b"FOLI"
FOLIATION_HEADER = struct.Struct("<4sII3iddd")


@contextmanager
def atomic_writer(path, mode: str = "wb"):
    """Open a temporary sibling of ``path``; rename it into place on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        newline = "" if "b" not in mode else None
        with os.fdopen(fd, mode, newline=newline) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------------

def _encode_state(state: FluidState) -> bytes:
    buf = io.BytesIO()
    buf.write(TIME.pack(float(state.time)))
    for arr in state.packed:
        buf.write(np.asarray(arr, dtype="<f8").ravel(order="F").tobytes())
    return buf.getvalue()


@dataclass
class SnapshotFile:
    """Decoded contents of a snapshot file."""

    grid: Grid
    eos: EquationOfState
    states: list
    foliations: list = field(default_factory=list)

    @property
    def stack(self) -> SnapshotStack:
        return SnapshotStack(list(self.states), self.eos)

    def encode(self) -> bytes:
        g = self.grid
        out = [HEADER.pack(MAGIC, VERSION, g.n, float(g.length), float(self.eos.gamma),
                           len(self.states))]
        for st in self.states:
            if st.grid.n != g.n:
                raise SnapshotFormatError("all snapshots must share the header grid")
            out.append(_encode_state(st))
        for rec in self.foliations:
            out.append(encode_foliation(rec))
        return b"".join(out)

    def write(self, path) -> Path:
        with atomic_writer(path) as fh:
            fh.write(self.encode())
        return Path(path)

    @classmethod
    def decode(cls, data: bytes, rho_bar: float = 1.0) -> "SnapshotFile":
        if len(data) < HEADER.size:
            raise SnapshotFormatError("file is shorter than the header")
        magic, version, n, length, gamma, count = HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise SnapshotFormatError(f"bad magic {magic!r}; expected {MAGIC!r}")
        if version != VERSION:
            raise SnapshotFormatError(f"unsupported format version {version}")
        grid = Grid(n, length)
        eos = EquationOfState(gamma=gamma, rho_bar=rho_bar)
        per = TIME.size + 4 * 8 * n ** 3
        offset = HEADER.size
        if len(data) < offset + count * per:
            raise SnapshotFormatError(f"header announces {count} snapshots but the file is truncated")
        states = []
        for _ in range(count):
            (t,) = TIME.unpack_from(data, offset)
            flat = np.frombuffer(data, dtype="<f8", count=4 * n ** 3, offset=offset + TIME.size)
            u = flat.reshape(4, n ** 3).astype(np.float64)
            packed = np.stack([a.reshape((n, n, n), order="F") for a in u])
            states.append(FluidState.from_packed(grid, packed, t))
            offset += per
        foliations = []
        while offset < len(data):
            rec, offset = decode_foliation(data, offset)
            foliations.append(rec)
        return cls(grid, eos, states, foliations)

    @classmethod
    def read(cls, path, rho_bar: float = 1.0) -> "SnapshotFile":
        return cls.decode(Path(path).read_bytes(), rho_bar)


def write_snapshots(path, states, eos: EquationOfState) -> Path:
    states = list(states)
    if not states:
        raise SnapshotFormatError("nothing to write")
    return SnapshotFile(states[0].grid, eos, states).write(path)


def read_snapshots(path) -> SnapshotStack:
    return SnapshotFile.read(path).stack


# ---------------------------------------------------------------------------
# Foliation records
# ---------------------------------------------------------------------------

@dataclass
class FoliationRecord:
    """Serializable part of a foliation graph."""

    m: np.ndarray
    r: float
    lengths: np.ndarray
    times: np.ndarray
    phi: np.ndarray    # (T, N, N)
    dphi: np.ndarray   # (T, N, N, 3)

    @classmethod
    def from_graph(cls, graph) -> "FoliationRecord":
        return cls(np.asarray(graph.m), graph.r, np.asarray(graph.lengths),
                   np.asarray(graph.times), np.asarray(graph.phi), np.asarray(graph.dphi))


def encode_foliation(rec: FoliationRecord) -> bytes:
    t_count, n = rec.phi.shape[0], rec.phi.shape[1]
    head = FOLIATION_HEADER.pack(FOLIATION_TAG, n, t_count, *[int(a) for a in rec.m],
                                 float(rec.r), float(rec.lengths[0]), float(rec.lengths[1]))
    body = [np.asarray(a, dtype="<f8").ravel(order="F").tobytes()
            for a in (rec.times, rec.phi, rec.dphi)]
    return head + b"".join(body)


def decode_foliation(data: bytes, offset: int) -> tuple:
    if len(data) < offset + FOLIATION_HEADER.size:
        raise SnapshotFormatError("truncated record header")
    tag, n, t_count, m0, m1, m2, r, l0, l1 = FOLIATION_HEADER.unpack_from(data, offset)
    if tag != FOLIATION_TAG:
        raise SnapshotFormatError(f"unknown record tag {tag!r}")
    offset += FOLIATION_HEADER.size
    sizes = [(t_count,), (t_count, n, n), (t_count, n, n, 3)]
    arrays = []
    for shape in sizes:
        count = int(np.prod(shape))
        if len(data) < offset + 8 * count:
            raise SnapshotFormatError("truncated foliation record")
        flat = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        arrays.append(flat.reshape(shape, order="F").astype(np.float64))
        offset += 8 * count
    rec = FoliationRecord(np.array([m0, m1, m2]), r, np.array([l0, l1]), *arrays)
    return rec, offset


def write_foliations(path, graphs, grid: Grid, eos: EquationOfState) -> Path:
    records = [FoliationRecord.from_graph(g) for g in graphs]
    return SnapshotFile(grid, eos, [], records).write(path)


# ---------------------------------------------------------------------------
# CSV and manifests
# ---------------------------------------------------------------------------

def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> Path:
    """Fixed header row, '.' decimals, ``repr`` precision for floats."""
    with atomic_writer(path, "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return Path(path)


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class RunManifest:
    """What a subcommand ran and which files it produced."""

    command: str
    config: dict
    version: str
    seed: int | None
    started: str
    finished: str = ""
    artifacts: list = field(default_factory=list)
    status: str = "ok"

    def add(self, path) -> None:
        path = Path(path)
        self.artifacts.append({"path": path.name, "sha256": sha256(path)})

    def write(self, directory) -> Path:
        path = Path(directory) / "manifest.json"
        payload = json.dumps(self.__dict__, indent=2, sort_keys=True, default=str)
        with atomic_writer(path, "w") as fh:
            fh.write(payload + "\n")
        return path

    @classmethod
    def read(cls, directory) -> "RunManifest":
        data = json.loads((Path(directory) / "manifest.json").read_text())
        return cls(**data)

    def verify(self, directory) -> list:
        """Names of listed artifacts whose checksum no longer matches."""
        bad = []
        for item in self.artifacts:
            p = Path(directory) / item["path"]
            if not p.exists() or sha256(p) != item["sha256"]:
                bad.append(item["path"])
        return bad
