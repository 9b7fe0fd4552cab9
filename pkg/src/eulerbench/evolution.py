"""Time integration of the log-density Euler system.

The evolution equations are

    d rho/dt = -v . grad rho - div v
    d v/dt   = -(v . grad) v - c^2 grad rho

advanced by classical RK4 with 2/3-rule dealiasing after every nonlinear
product.  The same tendency is also available in the symmetric-hyperbolic
matrix form ``U_t = -sum_i A_i(U) d_i U`` as an independent code path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .errors import BlowupDetected, CflViolation, ConfigError, HyperbolicityLost
from .spectral import Grid, ScalarField, VectorField
from .state import EquationOfState, FluidState

CFL_MAX = 0.5
BLOWUP_THRESHOLD = 1e6
SPACING_TOL = 1e-14


# ---------------------------------------------------------------------------
# Tendencies
# ---------------------------------------------------------------------------

def tendency_array(grid: Grid, eos: EquationOfState, u: np.ndarray) -> np.ndarray:
    """Dealiased time derivative of the packed state ``u`` = (rho, v1, v2, v3)."""
    grads = grid.grad(u)  # (4, 3, n, n, n): grads[c, i] = d_i u_c
    rho, v = u[0], u[1:]
    c2 = eos.sound_speed_sq(rho)
    advection = np.einsum("i...,ci...->c...", v, grads)
    out = np.empty_like(u)
    out[0] = -advection[0] - (grads[1, 0] + grads[2, 1] + grads[3, 2])
    out[1:] = -advection[1:] - c2 * grads[0]
    return grid.dealias(out)


def hyperbolic_matrices(state: FluidState, eos: EquationOfState) -> np.ndarray:
    """The three 4x4 coefficient matrices ``A_i`` as an array (3, 4, 4, n, n, n).

    ``A_i`` carries ``v_i`` on its diagonal, 1 at (0, i+1) and ``c^2`` at (i+1, 0).
    """
    u = state.packed
    c2 = eos.sound_speed_sq(u[0])
    a = np.zeros((3, 4, 4) + state.grid.shape)
    for i in range(3):
        for r in range(4):
            a[i, r, r] = u[1 + i]
        a[i, 0, i + 1] = 1.0
        a[i, i + 1, 0] = c2
    return a


def symmetrizer(state: FluidState, eos: EquationOfState) -> np.ndarray:
    """``diag(c^2, 1, 1, 1)``; ``S A_i`` is symmetric for each i."""
    c2 = eos.sound_speed_sq(state.rho_log.values)
    s = np.zeros((4, 4) + state.grid.shape)
    s[0, 0] = c2
    for r in range(1, 4):
        s[r, r] = 1.0
    return s


def _unpack(grid: Grid, du: np.ndarray) -> tuple:
    return ScalarField(grid, du[0]), VectorField.from_array(grid, du[1:])


def rhs(state: FluidState, eos: EquationOfState) -> tuple:
    """``(d rho/dt, dv/dt)`` for ``state``."""
    return _unpack(state.grid, tendency_array(state.grid, eos, state.packed))


def rhs_matrix_form(state: FluidState, eos: EquationOfState) -> tuple:
    """Same tendency assembled as ``-sum_i A_i d_i U``."""
    g = state.grid
    grads = g.grad(state.packed)  # (4, 3, ...)
    a = hyperbolic_matrices(state, eos)
    du = -np.einsum("irc...,ci...->r...", a, grads)
    return _unpack(g, g.dealias(du))


# ---------------------------------------------------------------------------
# Stepping
# ---------------------------------------------------------------------------

def max_speed(u: np.ndarray) -> float:
    return float(np.sqrt(np.max(np.sum(u[1:] ** 2, axis=0))))


def cfl_number(grid: Grid, eos: EquationOfState, u: np.ndarray, dt: float) -> float:
    c_max = float(np.sqrt(np.max(eos.sound_speed_sq(u[0]))))
    return dt * (max_speed(u) + c_max) * grid.n / grid.length


def _check_blowup(u: np.ndarray, time: float) -> None:
    finite = np.all(np.isfinite(u))
    peak = float(np.max(np.abs(u))) if finite else float("inf")
    if not finite or peak > BLOWUP_THRESHOLD:
        raise BlowupDetected("field magnitude exceeded the blowup threshold", time, peak)


def rk4_array(grid: Grid, eos: EquationOfState, u: np.ndarray, dt: float) -> np.ndarray:
    f = lambda x: tendency_array(grid, eos, x)  # noqa: E731
    k1 = f(u)
    k2 = f(u + 0.5 * dt * k1)
    k3 = f(u + 0.5 * dt * k2)
    k4 = f(u + dt * k3)
    return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_rk4(state: FluidState, eos: EquationOfState, dt: float,
             max_cfl: float | None = None) -> FluidState:
    """One classical Runge-Kutta step.

    ``max_cfl`` enables the CFL guard (used in CFL-driven runs).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    u = state.packed
    if max_cfl is not None:
        cfl = cfl_number(state.grid, eos, u, dt)
        if cfl > max_cfl:
            raise CflViolation(f"CFL number {cfl:.3f} exceeds {max_cfl}")
    new = rk4_array(state.grid, eos, u, dt)
    _check_blowup(new, state.time + dt)
    return FluidState.from_packed(state.grid, new, state.time + dt)


# ---------------------------------------------------------------------------
# Initial data
# ---------------------------------------------------------------------------

def _finish(grid: Grid, rho, v) -> FluidState:
    u = np.concatenate([np.broadcast_to(rho, grid.shape)[None],
                        np.broadcast_to(v, (3,) + grid.shape)]).astype(float)
    return FluidState.from_packed(grid, grid.dealias(u), 0.0)


def init_constant(grid: Grid, rng=None, rho: float = 0.0,
                  v1: float = 0.0, v2: float = 0.0, v3: float = 0.0) -> FluidState:
    u = np.empty((4,) + grid.shape)
    for c, val in enumerate((rho, v1, v2, v3)):
        u[c] = val
    return FluidState.from_packed(grid, u)


def init_shear(grid: Grid, rng=None, amplitude: float = 1.0, mode: int = 1,
               rho: float = 0.0) -> FluidState:
    """Steady shear ``v = (A sin(m x2), 0, 0)`` over constant density."""
    x2 = grid.coordinates[1]
    k = 2 * np.pi * mode / grid.length
    v = np.zeros((3,) + grid.shape)
    v[0] = amplitude * np.sin(k * x2)
    return _finish(grid, rho, v)


def init_acoustic_mode(grid: Grid, rng=None, epsilon: float = 1e-6,
                       k1: int = 1, k2: int = 0, k3: int = 0) -> FluidState:
    """Density mode ``rho = eps cos(k.x)`` at rest."""
    x = grid.coordinates
    scale = 2 * np.pi / grid.length
    phase = scale * (k1 * x[0] + k2 * x[1] + k3 * x[2])
    return _finish(grid, epsilon * np.cos(phase), np.zeros((3,) + grid.shape))


def init_random_band_limited(grid: Grid, rng: np.random.Generator, amplitude: float = 0.1,
                             band: float | None = None, rho_amplitude: float | None = None
                             ) -> FluidState:
    """Seeded Gaussian spectrum on ``1 <= |k| <= band`` (default ``n/6``)."""
    from .spectral import random_band_limited

    band = grid.n / 6 if band is None else band
    rho_amp = amplitude if rho_amplitude is None else rho_amplitude
    v = random_band_limited(grid, rng, band, amplitude, components=3)
    rho = random_band_limited(grid, rng, band, rho_amp) if rho_amp > 0 else 0.0
    return _finish(grid, rho, v)


def init_vortical_bump(grid: Grid, rng=None, amplitude: float = 0.1, radius: float = 1.5,
                       rho_amplitude: float = 0.0) -> FluidState:
    """Swirl ``v = curl(psi e3)`` with ``psi`` a compact bump at the box centre.

    The vorticity is compactly supported before the final band projection.
    """
    x = grid.coordinates
    centre = grid.length / 2
    r2 = sum((x[a] - centre) ** 2 for a in range(3)) / radius ** 2
    inside = r2 < 1
    bump = np.zeros(grid.shape)
    bump[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    pot = np.zeros((3,) + grid.shape)
    pot[2] = bump
    v = grid.curl(pot)
    peak = np.max(np.abs(v))
    v = v * (amplitude / peak) if peak > 0 else v
    rho = rho_amplitude * bump / np.max(bump) if rho_amplitude else 0.0
    return _finish(grid, rho, v)


INITIAL_DATA: dict = {
    "constant": init_constant,
    "shear": init_shear,
    "acoustic_mode": init_acoustic_mode,
    "random_band_limited": init_random_band_limited,
    "vortical_bump": init_vortical_bump,
}


def make_initial_state(grid: Grid, kind: str, params: dict | None = None,
                       seed: int = 0) -> FluidState:
    try:
        gen = INITIAL_DATA[kind]
    except KeyError:
        raise ConfigError(f"unknown initial data kind {kind!r}; "
                          f"choose from {sorted(INITIAL_DATA)}") from None
    try:
        return gen(grid, np.random.default_rng(seed), **(params or {}))
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {kind!r}: {exc}") from None


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SimConfig:
    grid: Grid
    eos: EquationOfState
    t_end: float
    dt: float | None = None
    cfl: float | None = None
    snap_every: int = 1
    initial_data: str = "constant"
    init_params: dict = field(default_factory=dict)
    c0: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if (self.dt is None) == (self.cfl is None):
            raise ConfigError("exactly one of dt and cfl must be given")
        if not self.t_end > 0:
            raise ConfigError("t_end must be positive")
        if not self.c0 > 0:
            raise ConfigError("the hyperbolicity floor c0 must be positive")
        if self.snap_every < 1:
            raise ConfigError("snap_every must be at least 1")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.cfl is not None and not 0 < self.cfl <= CFL_MAX:
            raise ConfigError(f"cfl must lie in (0, {CFL_MAX}]")

    def step_plan(self, initial: FluidState) -> tuple:
        """Return ``(dt, n_steps)``; CFL runs shrink dt so it divides t_end."""
        if self.dt is not None:
            steps = max(1, int(round(self.t_end / self.dt)))
            if abs(steps * self.dt - self.t_end) > 1e-9 * self.t_end:
                raise ConfigError("t_end must be an integer multiple of dt")
            return self.dt, steps
        u = initial.packed
        c_max = float(np.sqrt(np.max(self.eos.sound_speed_sq(u[0]))))
        dt = self.cfl * self.grid.length / (self.grid.n * (max_speed(u) + c_max))
        steps = max(1, math.ceil(self.t_end / dt))
        return self.t_end / steps, steps

    def initial_state(self) -> FluidState:
        return make_initial_state(self.grid, self.initial_data, self.init_params, self.seed)


@dataclass(frozen=True, eq=False)
class SnapshotStack:
    """Uniformly spaced states of one trajectory."""

    states: tuple
    eos: EquationOfState

    def __post_init__(self):
        states = tuple(self.states)
        if not states:
            raise ValueError("a snapshot stack needs at least one state")
        object.__setattr__(self, "states", states)
        if len(states) > 1:
            gaps = np.diff([s.time for s in states])
            if np.max(np.abs(gaps - gaps[0])) > SPACING_TOL * max(1.0, abs(states[-1].time)):
                raise ValueError("snapshots are not uniformly spaced")
            if gaps[0] <= 0:
                raise ValueError("snapshots must be strictly increasing in time")

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i) -> FluidState:
        return self.states[i]

    @property
    def grid(self) -> Grid:
        return self.states[0].grid

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.states])

    @property
    def dt_snap(self) -> float:
        if len(self.states) < 2:
            return 0.0
        return (self.states[-1].time - self.states[0].time) / (len(self.states) - 1)

    def subsample(self, stride: int, start: int = 0) -> "SnapshotStack":
        return SnapshotStack(self.states[start::stride], self.eos)

    def window(self, center: int, half_width: int, stride: int = 1) -> "SnapshotStack":
        lo = center - half_width * stride
        hi = center + half_width * stride
        if lo < 0 or hi >= len(self.states):
            raise IndexError("window leaves the stack")
        return SnapshotStack(self.states[lo:hi + 1:stride], self.eos)


def iterate_states(config: SimConfig, initial: FluidState | None = None
                   ) -> Iterator[tuple]:
    """Yield ``(step, state)`` for every step including step 0.

    Guards run on each state: the hyperbolicity floor, blowup and (in CFL
    mode) the CFL bound.
    """
    state = config.initial_state() if initial is None else initial
    grid, eos = config.grid, config.eos
    dt, steps = config.step_plan(state)
    u = state.packed
    t0 = state.time
    for step in range(steps + 1):
        time = t0 + step * dt
        c_min = float(np.sqrt(np.min(eos.sound_speed_sq(u[0]))))
        if c_min < config.c0:
            raise HyperbolicityLost("sound speed fell below c0", time, c_min)
        yield step, FluidState.from_packed(grid, u, time)
        if step == steps:
            break
        if config.cfl is not None:
            cfl = cfl_number(grid, eos, u, dt)
            if cfl > CFL_MAX:
                raise CflViolation(f"CFL number {cfl:.3f} exceeds {CFL_MAX} at t={time:.6g}")
        u = rk4_array(grid, eos, u, dt)
        _check_blowup(u, t0 + (step + 1) * dt)


def simulate(config: SimConfig, initial: FluidState | None = None,
             keep: Callable[[int], bool] | None = None) -> SnapshotStack:
    """Integrate to ``t_end`` and record every ``snap_every``-th state."""
    keep = keep or (lambda step: step % config.snap_every == 0)
    kept = [s for step, s in iterate_states(config, initial) if keep(step)]
    return SnapshotStack(kept, config.eos)


# ---------------------------------------------------------------------------
# Stability experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StabilityResult:
    times: np.ndarray
    distances: np.ndarray
    amplification: float
    fitted_rate: float


def stability_compare(config: SimConfig, perturbation: dict, s: float) -> StabilityResult:
    """Run base and perturbed trajectories and track their ``H^(s-1)`` distance.

    ``perturbation`` names a generator: ``{"kind": ..., "params": {...},
    "seed": ...}``; its state is added to the base initial data.
    """
    from .harmonic import sobolev_value

    base = config.initial_state()
    pert = make_initial_state(config.grid, perturbation["kind"],
                              perturbation.get("params", {}), perturbation.get("seed", 0))
    perturbed = FluidState.from_packed(config.grid, base.packed + pert.packed, base.time)
    times, dist = [], []
    runs = zip(iterate_states(config, base), iterate_states(config, perturbed))
    for (step, a), (_, b) in runs:
        if step % config.snap_every:
            continue
        diff = a.packed - b.packed
        times.append(a.time)
        dist.append(sobolev_value(config.grid, diff, s - 1.0))
    times, dist = np.array(times), np.array(dist)
    if dist[0] == 0.0:
        amp = 1.0 if np.all(dist == 0.0) else float("inf")
        rate = 0.0
    else:
        amp = float(np.max(dist) / dist[0])
        t = times - times[0]
        logs = np.log(np.maximum(dist, 1e-300) / dist[0])
        rate = float(np.dot(t, logs) / np.dot(t, t)) if np.dot(t, t) > 0 else 0.0
    return StabilityResult(times, dist, amp, rate)
