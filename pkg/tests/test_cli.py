"""End-to-end behaviour of the ``eulerbench`` command line."""
import json

import pytest

from eulerbench.cli import (EXIT_BLOWUP, EXIT_CONFIG, EXIT_HYPERBOLICITY, EXIT_OK, EXIT_STENCIL,
                            main, parse_config_text, sim_config_from)
from eulerbench.errors import ConfigError
from eulerbench.io import RunManifest, read_csv


def _config(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


CONSTANT = """
grid.n = 8
eos.gamma = 1.4
time.t_end = 0.05
time.dt = 0.01
init.kind = constant   # uniform state
init.rho = 0.1
init.v1 = 0.2
"""

VORTICAL = """
grid.n = 16
eos.gamma = 1.6666666666666667
time.t_end = 0.12
time.dt = 0.01
init.kind = random_band_limited
init.amplitude = 0.05
init.band = 2.0
seed = 4
"""


class TestConfig:
    def test_parse(self):
        cfg = parse_config_text("a.b = 1\n# note\n\nc = x  # trailing\n")
        assert cfg == {"a.b": "1", "c": "x"}

    @pytest.mark.parametrize("text", ["a = 1\na = 2", "no equals", " = 3"])
    def test_malformed(self, text):
        with pytest.raises(ConfigError):
            parse_config_text(text)

    def test_init_params_coerced(self):
        cfg = sim_config_from(parse_config_text(VORTICAL))
        assert cfg.init_params == {"amplitude": 0.05, "band": 2.0} and cfg.seed == 4

    def test_dt_and_cfl_are_exclusive(self):
        cfg = parse_config_text(CONSTANT + "time.cfl = 0.3\n")
        with pytest.raises(ConfigError, match="time.dt"):
            sim_config_from(cfg)


def test_simulate_constant_state(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--config", _config(tmp_path, CONSTANT), "--out", str(out)]) == EXIT_OK
    rows = read_csv(out / "diagnostics.csv")
    assert len(rows) == 6
    energies = {r["E"] for r in rows}
    assert len(energies) == 1
    assert RunManifest.read(out).verify(out) == []


@pytest.mark.parametrize("missing", ["grid.n", "eos.gamma", "time.t_end", "init.kind"])
def test_missing_key_exit_code(tmp_path, capsys, missing):
    text = "\n".join(l for l in CONSTANT.splitlines() if not l.startswith(missing))
    code = main(["simulate", "--config", _config(tmp_path, text), "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG
    assert missing in capsys.readouterr().err


def test_hyperbolicity_exit_code(tmp_path):
    text = CONSTANT.replace("init.rho = 0.1", "init.rho = -3.0") + "guards.c0 = 0.9\n"
    assert main(["simulate", "--config", _config(tmp_path, text),
                 "--out", str(tmp_path / "o")]) == EXIT_HYPERBOLICITY


def test_blowup_exit_code(tmp_path):
    text = CONSTANT.replace("init.v1 = 0.2", "init.v1 = 2e6")
    assert main(["simulate", "--config", _config(tmp_path, text),
                 "--out", str(tmp_path / "o")]) == EXIT_BLOWUP


@pytest.fixture(scope="module")
def vortical_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    cfg = base / "v.cfg"
    cfg.write_text(VORTICAL)
    assert main(["simulate", "--config", str(cfg), "--out", str(base / "sim")]) == EXIT_OK
    return base


def test_check_writes_residuals(vortical_run, tmp_path):
    snaps = str(vortical_run / "sim" / "snapshots.eulr")
    out = tmp_path / "chk"
    assert main(["check", "--snapshots", snaps, "--identities", "W0,W01,fc1",
                 "--t-index", "6", "--out", str(out)]) == EXIT_OK
    rows = read_csv(out / "residuals.csv")
    assert {r["identity_id"] for r in rows} == {"W0", "W01", "fc1_v", "fc1_rho"}
    assert all(float(r["relative"]) < 1e-2 for r in rows)


def test_check_refined_convergence(vortical_run, tmp_path):
    snaps = str(vortical_run / "sim" / "snapshots.eulr")
    out = tmp_path / "conv"
    assert main(["check", "--snapshots", snaps, "--stride", "2", "--identities", "W0",
                 "--t-index", "3", "--refined", snaps, "--out", str(out)]) == EXIT_OK
    rows = read_csv(out / "convergence.csv")
    assert len(rows) == 1 and rows[0]["identity_id"] == "W0"
    assert float(rows[0]["ratio"]) > 0


def test_check_needs_five_snapshots(vortical_run, tmp_path):
    snaps = str(vortical_run / "sim" / "snapshots.eulr")
    assert main(["check", "--snapshots", snaps, "--stride", "4",
                 "--out", str(tmp_path / "c")]) == EXIT_STENCIL


def test_check_unknown_identity(vortical_run, tmp_path):
    snaps = str(vortical_run / "sim" / "snapshots.eulr")
    assert main(["check", "--snapshots", snaps, "--identities", "W7",
                 "--out", str(tmp_path / "c")]) == EXIT_CONFIG


def test_check_missing_file(tmp_path):
    assert main(["check", "--snapshots", str(tmp_path / "none.eulr"),
                 "--out", str(tmp_path / "c")]) == EXIT_CONFIG


def test_geometry(vortical_run, tmp_path):
    snaps = str(vortical_run / "sim" / "snapshots.eulr")
    out = tmp_path / "geo"
    assert main(["geometry", "--snapshots", snaps, "--theta-lattice", "axes", "--r-count", "1",
                 "--lattice-n", "8", "--stride", "3", "--out", str(out)]) == EXIT_OK
    (g_row,) = read_csv(out / "G.csv")
    assert float(g_row["G"]) > 0 and g_row["graphs"] == "6"
    frames = read_csv(out / "frame_invariants.csv")
    assert max(float(r["gram_defect"]) for r in frames) < 1e-12
    assert (out / "foliations.eulr").exists()


def test_geometry_bad_lattice(vortical_run, tmp_path):
    snaps = str(vortical_run / "sim" / "snapshots.eulr")
    assert main(["geometry", "--snapshots", snaps, "--theta-lattice", "dense",
                 "--out", str(tmp_path / "g")]) == EXIT_CONFIG


def test_sample_is_deterministic(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["sample", "--inequality", "lpe", "--n", "4", "--seed", "9", "--band", "3",
                     "--grid-n", "16", "--out", str(out)]) == EXIT_OK
        outs.append(out)
    for f in ("ratios_lpe.csv", "ratio_summary_lpe.csv"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()


def test_sample_unknown_inequality(tmp_path):
    assert main(["sample", "--inequality", "nope", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_report_needs_manifest(tmp_path):
    assert main(["report", "--dir", str(tmp_path)]) == EXIT_CONFIG


def test_report_summarises_run(vortical_run):
    sim = vortical_run / "sim"
    assert main(["report", "--dir", str(sim)]) == EXIT_OK
    assert (sim / "summary.txt").read_text().strip()
    manifest = json.loads((sim / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
