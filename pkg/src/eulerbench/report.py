"""Summaries of run directories: ``summary.txt`` plus static PNG plots.

Each acceptance criterion that the CSVs in a directory can speak to gets a
PASS or FAIL line; criteria the directory holds no data for are listed as
``NO DATA`` so that a partial directory is never mistaken for a pass.
"""
from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from .io import RunManifest, atomic_writer, read_csv

CONSERVATION_TOL = 1e-12
W01_TOL = 1e-10
FC1_TOL = 1e-5
RATIO_MIN = 12.0
DRIFT_TOL = 1e-8
GRAM_TOL = 1e-10


def _floats(rows, key):
    return np.array([float(r[key]) for r in rows if r.get(key, "") != ""])


def _verdict(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def evaluate_directory(directory) -> list:
    """``(label, verdict, detail)`` triples for the CSVs found in ``directory``."""
    d = Path(directory)
    lines = []

    diag = d / "diagnostics.csv"
    if diag.exists():
        rows = read_csv(diag)
        e = _floats(rows, "E")
        mass = _floats(rows, "mass")
        finite = bool(np.all(np.isfinite(e)))
        e_drift = float(np.max(np.abs(e - e[0])) / max(abs(e[0]), 1e-300))
        m_drift = float(np.max(np.abs(mass - mass[0])) / max(abs(mass[0]), 1e-300))
        lines.append(("energy finite", _verdict(finite), f"max E = {np.max(e):.6g}"))
        lines.append(("energy conserved (constant/steady runs)",
                      _verdict(e_drift < CONSERVATION_TOL), f"relative drift {e_drift:.3e}"))
        lines.append(("mass conserved", _verdict(m_drift < CONSERVATION_TOL),
                      f"relative drift {m_drift:.3e}"))

    res = d / "residuals.csv"
    if res.exists():
        by_id = defaultdict(list)
        for r in read_csv(res):
            by_id[r["identity_id"]].append(r)
        if "W01" in by_id:
            worst = float(np.max(_floats(by_id["W01"], "relative")))
            lines.append(("divergence law W01", _verdict(worst < W01_TOL), f"max relative {worst:.3e}"))
        for ident in ("fc1_v", "fc1_rho"):
            if ident in by_id:
                worst = float(np.max(_floats(by_id[ident], "relative")))
                lines.append((f"wave identity {ident}", _verdict(worst < FC1_TOL),
                              f"max relative {worst:.3e}"))
        for ident in ("fc", "W0", "W1", "W2", "W2_printed"):
            if ident in by_id:
                worst = float(np.max(_floats(by_id[ident], "relative")))
                lines.append((f"residual {ident}", "INFO", f"max relative {worst:.3e}"))

    conv = d / "convergence.csv"
    if conv.exists():
        by_id = defaultdict(list)
        for r in read_csv(conv):
            by_id[r["identity_id"]].append(float(r["ratio"]))
        for ident, ratios in sorted(by_id.items()):
            if ident.endswith("printed"):
                continue
            worst = min(ratios)
            lines.append((f"convergence {ident}", _verdict(worst >= RATIO_MIN),
                          f"min ratio {worst:.2f}"))

    for path in sorted(d.glob("ratio_summary_*.csv")):
        for r in read_csv(path):
            mr = float(r["max_ratio"])
            lines.append((f"sampler {r['inequality_id']}", _verdict(math.isfinite(mr)),
                          f"max ratio {mr:.4g} over {r['samples']} samples"))

    fol = d / "foliation_norms.csv"
    if fol.exists():
        drift = float(np.max(_floats(read_csv(fol), "null_drift")))
        lines.append(("null constraint drift", _verdict(drift < DRIFT_TOL), f"max {drift:.3e}"))
    frames = d / "frame_invariants.csv"
    if frames.exists():
        rows = read_csv(frames)
        gram = float(np.max(_floats(rows, "gram_defect")))
        lines.append(("null frame Gram relations", _verdict(gram < GRAM_TOL), f"max defect {gram:.3e}"))
    if not lines:
        lines.append(("acceptance data", "NO DATA", "no recognised CSV in this directory"))
    return lines


def _plots(directory: Path) -> list:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    made = []
    diag = directory / "diagnostics.csv"
    if diag.exists():
        rows = read_csv(diag)
        t = _floats(rows, "time")
        fig, ax = plt.subplots(figsize=(6, 4))
        for key in ("E", "E_l", "mass"):
            ax.plot(t, _floats(rows, key), label=key)
        ax.set_xlabel("t")
        ax.legend()
        made.append(_save(fig, directory / "diagnostics.png"))
    res = directory / "residuals.csv"
    if res.exists():
        by_id = defaultdict(list)
        for r in read_csv(res):
            by_id[r["identity_id"]].append((float(r["t"]), float(r["relative"])))
        fig, ax = plt.subplots(figsize=(6, 4))
        for ident, pts in sorted(by_id.items()):
            pts = sorted(pts)
            rel = np.maximum([p[1] for p in pts], 1e-18)
            ax.semilogy([p[0] for p in pts], rel, marker=".", label=ident)
        ax.set_xlabel("t")
        ax.set_ylabel("relative residual")
        ax.legend(fontsize=7)
        made.append(_save(fig, directory / "residuals.png"))
    for path in sorted(directory.glob("ratios_*.csv")):
        ratios = _floats(read_csv(path), "ratio")
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.hist(ratios[np.isfinite(ratios)], bins=20)
        ax.set_xlabel("lhs / rhs")
        made.append(_save(fig, directory / (path.stem + ".png")))
    return made


def _save(fig, path: Path) -> Path:
    import matplotlib.pyplot as plt

    with atomic_writer(path) as fh:
        fig.savefig(fh, format="png", dpi=100)
    plt.close(fig)
    return path


def write_report(directory) -> Path:
    directory = Path(directory)
    manifest = RunManifest.read(directory)
    lines = evaluate_directory(directory)
    plots = _plots(directory)
    out = [f"run: {manifest.command}  version {manifest.version}  started {manifest.started}",
           f"artifacts with bad checksums: {manifest.verify(directory) or 'none'}", ""]
    width = max(len(label) for label, _, _ in lines)
    out += [f"{verdict:7s} {label.ljust(width)}  {detail}" for label, verdict, detail in lines]
    if plots:
        out += ["", "plots: " + ", ".join(p.name for p in plots)]
    path = directory / "summary.txt"
    with atomic_writer(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
    return path
