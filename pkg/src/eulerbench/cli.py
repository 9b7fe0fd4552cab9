"""Command-line entry point: ``eulerbench <subcommand> ...``.

Subcommands ``simulate``, ``check``, ``sample``, ``geometry`` and ``report``
each write into an output directory together with a ``manifest.json`` that
lists every emitted file and its SHA-256 checksum.

Exit codes: 0 success, 2 configuration error, 3 hyperbolicity lost,
4 blowup, 5 no time index admits the requested stencils, 6 fold detected.
"""
from __future__ import annotations

import os

_threads = os.environ.get("WORKBENCH_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import datetime as _dt  # noqa: E402
import math  # noqa: E402
import sys  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from .errors import (BlowupDetected, ConfigError, FoldDetected, HyperbolicityLost,  # noqa: E402
                     HypothesisViolation, OutOfBand, SnapshotFormatError, StencilOutOfRange,
                     WorkbenchError)
from .evolution import INITIAL_DATA, SimConfig, iterate_states, max_speed  # noqa: E402
from .io import (RunManifest, SnapshotFile, write_csv,  # noqa: E402
                 write_foliations)
from .spectral import Grid  # noqa: E402
from .state import EquationOfState  # noqa: E402

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_HYPERBOLICITY = 3
EXIT_BLOWUP = 4
EXIT_STENCIL = 5
EXIT_FOLD = 6

DIAGNOSTIC_COLUMNS = ("time", "E", "E_l", "mass", "min_cs", "max_speed", "cfl")
CHECK_COLUMNS = ("identity_id", "t", "t_index", "l2_residual", "relative", "degenerate_flag")
W2_TERMS = ("lhs", "principal", "R1", "R2", "R3", "R4", "R5", "R6")
DEFAULT_S, DEFAULT_S0 = 2.4, 2.2


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------

def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines with dotted keys; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _coerce(value: str):
    low = value.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing config key: {key}")
    return cfg[key]


def _number(cfg: dict, key: str, cast=float, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing config key: {key}")
        return default
    try:
        return cast(cfg[key])
    except ValueError:
        raise ConfigError(f"config key {key} has non-numeric value {cfg[key]!r}") from None


def sim_config_from(cfg: dict) -> SimConfig:
    """Build a :class:`SimConfig` from a flat dotted-key mapping."""
    n = _number(cfg, "grid.n", int)
    length = _number(cfg, "grid.length", float, 2 * math.pi)
    gamma = _number(cfg, "eos.gamma", float)
    rho_bar = _number(cfg, "eos.rho_bar", float, 1.0)
    t_end = _number(cfg, "time.t_end", float)
    has_dt, has_cfl = "time.dt" in cfg, "time.cfl" in cfg
    if has_dt == has_cfl:
        raise ConfigError("missing config key: time.dt or time.cfl (exactly one)")
    dt = _number(cfg, "time.dt", float) if has_dt else None
    cfl = _number(cfg, "time.cfl", float) if has_cfl else None
    kind = _require(cfg, "init.kind")
    if kind not in INITIAL_DATA:
        raise ConfigError(f"init.kind {kind!r} is not one of {sorted(INITIAL_DATA)}")
    params = {k[5:]: _coerce(v) for k, v in cfg.items() if k.startswith("init.") and k != "init.kind"}
    try:
        grid = Grid(n, length)
        eos = EquationOfState(gamma=gamma, rho_bar=rho_bar)
        return SimConfig(grid, eos, t_end, dt=dt, cfl=cfl,
                         snap_every=_number(cfg, "time.snap_every", int, 1),
                         initial_data=kind, init_params=params,
                         c0=_number(cfg, "guards.c0", float, 1e-3),
                         seed=_number(cfg, "seed", int, 0))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def diagnostics_row(state, eos: EquationOfState, dt: float, s: float, s0: float) -> list:
    from .harmonic import state_energy

    grid = state.grid
    u = state.packed
    c2 = eos.sound_speed_sq(u[0])
    mass = grid.integrate(eos.rho_bar * np.exp(u[0]))
    speed = max_speed(u)
    c_max = float(np.sqrt(np.max(c2)))
    cfl = dt * (speed + c_max) * grid.n / grid.length
    return [state.time, state_energy(state, s, s0), state_energy(state, 2.0, 2.0), mass,
            float(np.sqrt(np.min(c2))), speed, cfl]


def cmd_simulate(args) -> int:
    out = Path(args.out)
    cfg = parse_config_text(Path(args.config).read_text())
    config = sim_config_from(cfg)
    s = _number(cfg, "diag.s", float, DEFAULT_S)
    s0 = _number(cfg, "diag.s0", float, DEFAULT_S0)
    manifest = RunManifest("simulate", cfg, __version__, config.seed, _now())
    initial = config.initial_state()
    dt, _ = config.step_plan(initial)
    snaps, rows = [], []
    for step, state in iterate_states(config, initial):
        if step % config.snap_every == 0:
            snaps.append(state)
            rows.append(diagnostics_row(state, config.eos, dt, s, s0))
    out.mkdir(parents=True, exist_ok=True)
    snap_path = SnapshotFile(config.grid, config.eos, snaps).write(out / "snapshots.eulr")
    diag_path = write_csv(out / "diagnostics.csv", DIAGNOSTIC_COLUMNS, rows)
    manifest.add(snap_path)
    manifest.add(diag_path)
    manifest.finished = _now()
    manifest.write(out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------

def _report_row(rep) -> list:
    row = [rep.identity_id, rep.time, -1 if rep.t_index is None else rep.t_index,
           rep.l2_residual, rep.relative, rep.degenerate]
    row += [rep.per_term_norms.get(k, "") if rep.identity_id.startswith("W2") else ""
            for k in W2_TERMS]
    return row


def _parse_identities(text: str) -> list:
    from .waves import ALL_IDENTITIES

    if text == "all":
        return list(ALL_IDENTITIES)
    ids = [t.strip() for t in text.split(",") if t.strip()]
    bad = [i for i in ids if i not in ALL_IDENTITIES]
    if bad:
        raise ConfigError(f"unknown identities {bad}; choose from {list(ALL_IDENTITIES)}")
    return ids


def _parse_indices(text: str | None, count: int) -> list:
    if text is None:
        return list(range(count))
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"bad --t-index list {text!r}") from None


def _read_stack(path, stride: int = 1):
    try:
        stack = SnapshotFile.read(path).stack
    except FileNotFoundError:
        raise ConfigError(f"snapshot file {path} does not exist") from None
    return stack.subsample(stride) if stride > 1 else stack


def cmd_check(args) -> int:
    from .waves import check_many

    out = Path(args.out)
    identities = _parse_identities(args.identities)
    stack = _read_stack(args.snapshots, args.stride)
    if len(stack) < 5:
        raise StencilOutOfRange(f"the file holds {len(stack)} snapshots; at least 5 are needed")
    indices = _parse_indices(args.t_index, len(stack))
    manifest = RunManifest("check", vars(args), __version__, None, _now())
    reports = check_many(stack, identities, indices, oversample=args.oversample)
    out.mkdir(parents=True, exist_ok=True)
    header = list(CHECK_COLUMNS) + [f"W2_{k}" for k in W2_TERMS]
    path = write_csv(out / "residuals.csv", header, [_report_row(r) for r in reports])
    manifest.add(path)
    if args.refined:
        fine = _read_stack(args.refined, args.stride)
        rows = convergence_rows(reports, fine, identities, args.oversample)
        manifest.add(write_csv(out / "convergence.csv",
                               ("identity_id", "t", "relative_coarse", "relative_fine", "ratio"),
                               rows))
    manifest.finished = _now()
    manifest.write(out)
    return EXIT_OK


def convergence_rows(coarse_reports, fine_stack, identities, oversample: int = 1) -> list:
    """Compare coarse residuals with a stack of half the snapshot spacing."""
    from .waves import check_identity

    rows = []
    fine_times = fine_stack.times
    for rep in coarse_reports:
        if rep.t_index is None or rep.degenerate:
            continue
        match = np.nonzero(np.abs(fine_times - rep.time) < 1e-9)[0]
        if not match.size:
            continue
        base = rep.identity_id.split("_")[0]
        try:
            fine = check_identity(fine_stack, base, int(match[0]),
                                  oversample=oversample)
        except StencilOutOfRange:
            continue
        for f in fine:
            if f.identity_id == rep.identity_id:
                ratio = rep.relative / f.relative if f.relative > 0 else float("inf")
                rows.append([rep.identity_id, rep.time, rep.relative, f.relative, ratio])
    return rows


# ---------------------------------------------------------------------------
# sample
# ---------------------------------------------------------------------------

def cmd_sample(args) -> int:
    from .harmonic import INEQUALITIES, inequality_sample

    if args.inequality not in INEQUALITIES:
        raise ConfigError(f"unknown inequality {args.inequality!r}; choose from {sorted(INEQUALITIES)}")
    out = Path(args.out)
    rep = inequality_sample(args.inequality, args.n, args.seed, args.band, grid_n=args.grid_n,
                            constant_v=args.constant_v)
    manifest = RunManifest("sample", vars(args), __version__, args.seed, _now())
    rows = [[rep.inequality_id, i, r] for i, r in enumerate(rep.ratios)]
    out.mkdir(parents=True, exist_ok=True)
    manifest.add(write_csv(out / f"ratios_{args.inequality}.csv",
                           ("inequality_id", "sample", "ratio"), rows))
    manifest.add(write_csv(out / f"ratio_summary_{args.inequality}.csv",
                           ("inequality_id", "samples", "max_ratio", "median_ratio",
                            "worst_sample", "degenerate"),
                           [[rep.inequality_id, rep.samples, rep.max_ratio, rep.median_ratio,
                             rep.worst_sample_seed, rep.degenerate]]))
    manifest.finished = _now()
    manifest.write(out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def cmd_geometry(args) -> int:
    from .geometry import (SpacetimeMetric, build_null_frame, foliation_lattice,
                           foliation_norm, second_fundamental_form)

    out = Path(args.out)
    stack = _read_stack(args.snapshots, args.stride)
    try:
        metric = SpacetimeMetric(stack)
        graphs = foliation_lattice(metric, args.theta_lattice, args.r_count, args.lattice_n)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    manifest = RunManifest("geometry", vars(args), __version__, None, _now())
    g_rows, frame_rows = [], []
    for gr in graphs:
        g_rows.append([*gr.m, gr.r, foliation_norm(gr, args.s0), gr.reconstruction_residual,
                       float(np.max(np.abs(gr.rays.null_violation)))])
        for k, t in enumerate(gr.times):
            frame = build_null_frame(gr, metric, k)
            conn = second_fundamental_form(gr, metric, k)
            chi_asym = float(np.max(np.abs(conn.chi[0, 1] - conn.chi[1, 0])))
            sigma_gap = float(np.max(np.abs(conn.l_log_sigma - conn.l_log_sigma_ray)))
            frame_rows.append([*gr.m, gr.r, t, frame.gram_defect(),
                               float(np.max(np.abs(frame.l[0] - 1.0))),
                               float(np.max(np.abs(conn.chi))), chi_asym,
                               float(np.max(np.abs(conn.l_log_sigma))), sigma_gap,
                               float(np.max(np.abs(conn.mu)))])
    out.mkdir(parents=True, exist_ok=True)
    g_value = max(r[4] for r in g_rows)
    manifest.add(write_foliations(out / "foliations.eulr", graphs, stack.grid, stack.eos))
    manifest.add(write_csv(out / "foliation_norms.csv",
                           ("m1", "m2", "m3", "r", "norm", "reconstruction_residual",
                            "null_drift"), g_rows))
    manifest.add(write_csv(out / "G.csv", ("s0", "G", "graphs"), [[args.s0, g_value, len(graphs)]]))
    manifest.add(write_csv(out / "frame_invariants.csv",
                           ("m1", "m2", "m3", "r", "t", "gram_defect", "dt_l_defect", "chi_max",
                            "chi_asymmetry", "l_log_sigma_max", "l_log_sigma_gap", "mu_max"),
                           frame_rows))
    manifest.finished = _now()
    manifest.write(out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def cmd_report(args) -> int:
    from .report import write_report

    directory = Path(args.dir)
    if not (directory / "manifest.json").exists():
        raise ConfigError(f"{directory} has no manifest.json")
    write_report(directory)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argparse
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eulerbench",
                                description="Verification workbench for compressible Euler flow.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate a configured run")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=cmd_simulate)

    chk = sub.add_parser("check", help="residuals of the wave-transport identities")
    chk.add_argument("--snapshots", required=True)
    chk.add_argument("--identities", default="all", help="comma list or 'all'")
    chk.add_argument("--out", required=True)
    chk.add_argument("--t-index", default=None, help="comma list of indices (default: all)")
    chk.add_argument("--stride", type=int, default=1, help="use every k-th snapshot")
    chk.add_argument("--oversample", type=int, default=1)
    chk.add_argument("--refined", default=None, help="file with half the snapshot spacing")
    chk.set_defaults(func=cmd_check)

    smp = sub.add_parser("sample", help="sample inequality ratios")
    smp.add_argument("--inequality", required=True)
    smp.add_argument("--n", type=int, default=100)
    smp.add_argument("--seed", type=int, default=0)
    smp.add_argument("--band", type=int, default=5)
    smp.add_argument("--grid-n", type=int, default=32)
    smp.add_argument("--constant-v", action="store_true")
    smp.add_argument("--out", default=".")
    smp.set_defaults(func=cmd_sample)

    geo = sub.add_parser("geometry", help="characteristic foliations and null frames")
    geo.add_argument("--snapshots", required=True)
    geo.add_argument("--theta-lattice", default="default")
    geo.add_argument("--r-count", type=int, default=8)
    geo.add_argument("--lattice-n", type=int, default=16)
    geo.add_argument("--stride", type=int, default=1)
    geo.add_argument("--s0", type=float, default=DEFAULT_S0)
    geo.add_argument("--out", default=".")
    geo.set_defaults(func=cmd_geometry)

    rep = sub.add_parser("report", help="summarise a run directory")
    rep.add_argument("--dir", required=True)
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SnapshotFormatError, HypothesisViolation, OutOfBand) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HyperbolicityLost as exc:
        print(f"hyperbolicity lost: {exc}", file=sys.stderr)
        return EXIT_HYPERBOLICITY
    except BlowupDetected as exc:
        print(f"blowup: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except StencilOutOfRange as exc:
        print(f"stencil: {exc}", file=sys.stderr)
        return EXIT_STENCIL
    except FoldDetected as exc:
        print(f"fold detected at t={exc.time:.6g}: {exc}", file=sys.stderr)
        return EXIT_FOLD
    except WorkbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
