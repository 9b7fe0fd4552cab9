"""Snapshot files, foliation records, CSV tables and run manifests."""
import struct

import numpy as np
import pytest

from eulerbench.errors import SnapshotFormatError
from eulerbench.evolution import SnapshotStack, init_constant, init_random_band_limited
from eulerbench.geometry import SpacetimeMetric, foliation_lattice
from eulerbench.io import (HEADER, MAGIC, FoliationRecord, RunManifest, SnapshotFile,
                           atomic_writer, read_csv, read_snapshots, write_csv,
                           write_foliations, write_snapshots)
from eulerbench.spectral import Grid
from eulerbench.state import EquationOfState, FluidState


@pytest.fixture
def states():
    g = Grid(8)
    rng = np.random.default_rng(0)
    return [init_random_band_limited(g, rng, amplitude=0.1, band=3).with_time(0.1 * k)
            for k in range(3)]


def test_round_trip_is_bit_exact(tmp_path, states):
    eos = EquationOfState(gamma=1.4)
    path = write_snapshots(tmp_path / "s.eulr", states, eos)
    back = SnapshotFile.read(path)
    assert back.eos.gamma == 1.4 and back.grid.n == 8
    for a, b in zip(states, back.states):
        assert a.time == b.time and np.array_equal(a.packed, b.packed)
    assert back.encode() == path.read_bytes()


def test_first_coordinate_varies_fastest(tmp_path):
    g = Grid(8)
    idx = np.arange(8, dtype=float)[:, None, None] * np.ones(g.shape)
    st = FluidState.from_arrays(g, idx * 1e-3, np.zeros((3,) + g.shape))
    data = SnapshotFile(g, EquationOfState(), [st]).encode()
    first = np.frombuffer(data, "<f8", count=8, offset=HEADER.size + 8)
    assert np.array_equal(first, np.arange(8) * 1e-3)


def test_header_layout(states):
    data = SnapshotFile(states[0].grid, EquationOfState(), states).encode()
    magic, version, n, length, gamma, count = struct.unpack_from("<4sIIddI", data)
    assert (magic, version, n, count) == (MAGIC, 1, 8, 3)
    assert length == pytest.approx(2 * np.pi) and gamma == pytest.approx(5 / 3)


class TestCorruption:
    def _data(self, states):
        return SnapshotFile(states[0].grid, EquationOfState(), states).encode()

    def test_bad_magic(self, states):
        with pytest.raises(SnapshotFormatError, match="magic"):
            SnapshotFile.decode(b"XXXX" + self._data(states)[4:])

    def test_bad_version(self, states):
        data = bytearray(self._data(states))
        data[4:8] = struct.pack("<I", 99)
        with pytest.raises(SnapshotFormatError, match="version"):
            SnapshotFile.decode(bytes(data))

    @pytest.mark.parametrize("cut", [10, 200, -8])
    def test_truncated(self, states, cut):
        with pytest.raises(SnapshotFormatError):
            SnapshotFile.decode(self._data(states)[:cut])

    def test_unknown_trailing_tag(self, states):
        with pytest.raises(SnapshotFormatError, match="tag"):
            SnapshotFile.decode(self._data(states) + b"JUNK" + bytes(60))

    def test_empty_write(self, tmp_path):
        with pytest.raises(SnapshotFormatError):
            write_snapshots(tmp_path / "e.eulr", [], EquationOfState())


def test_foliation_records_round_trip(tmp_path):
    g = Grid(8)
    st = init_constant(g, None, 0.0, 0.1, 0.0, -0.2)
    eos = EquationOfState(gamma=1.0)
    met = SpacetimeMetric(SnapshotStack([st.with_time(0.1 * k) for k in range(5)], eos))
    graphs = foliation_lattice(met, "axes", r_count=1, lattice_n=4)
    path = write_foliations(tmp_path / "f.eulr", graphs, g, eos)
    back = SnapshotFile.read(path)
    assert back.states == [] and len(back.foliations) == 6
    for graph, rec in zip(graphs, back.foliations):
        ref = FoliationRecord.from_graph(graph)
        assert np.array_equal(rec.m, ref.m) and rec.r == ref.r
        for name in ("lengths", "times", "phi", "dphi"):
            assert np.array_equal(getattr(rec, name), getattr(ref, name))


def test_snapshots_with_trailing_records(tmp_path, states):
    rec = FoliationRecord(np.array([0, 0, 1]), 0.5, np.array([1.0, 2.0]), np.zeros(2),
                          np.ones((2, 3, 3)), np.full((2, 3, 3, 3), 2.0))
    path = SnapshotFile(states[0].grid, EquationOfState(), states, [rec]).write(tmp_path / "x")
    back = SnapshotFile.read(path)
    assert len(back.states) == 3 and back.foliations[0].r == 0.5
    assert len(read_snapshots(path)) == 3


def test_atomic_writer_leaves_nothing_on_failure(tmp_path):
    target = tmp_path / "out.bin"
    target.write_bytes(b"old")
    with pytest.raises(RuntimeError):
        with atomic_writer(target) as fh:
            fh.write(b"partial")
            raise RuntimeError("interrupted")
    assert target.read_bytes() == b"old"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["out.bin"]


def test_csv_round_trip(tmp_path):
    path = write_csv(tmp_path / "t.csv", ["a", "b", "c"], [[0.1, 3, True], [1e-300, -2, False]])
    rows = read_csv(path)
    assert float(rows[0]["a"]) == 0.1 and rows[0]["b"] == "3" and rows[0]["c"] == "1"
    assert float(rows[1]["a"]) == 1e-300
    assert path.read_text().splitlines()[0] == "a,b,c"


def test_manifest_verify(tmp_path):
    art = tmp_path / "data.csv"
    art.write_text("x\n1\n")
    man = RunManifest("simulate", {"grid.n": 8}, "0.1.0", 3, "start")
    man.add(art)
    man.write(tmp_path)
    again = RunManifest.read(tmp_path)
    assert again.artifacts == man.artifacts and again.seed == 3
    assert again.verify(tmp_path) == []
    art.write_text("x\n2\n")
    assert again.verify(tmp_path) == ["data.csv"]
