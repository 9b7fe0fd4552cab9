"""Fluid state in logarithmic-density variables and the fields derived from it.

The density is carried as ``rho_log = ln(rho / rho_bar)``.  With the state law
``p = rho**gamma`` the sound speed obeys ``c^2 = gamma (rho_bar e^rho_log)^(gamma-1)``
and ``dc/d rho_log = (gamma - 1) c / 2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonZeroMean, VacuumState
from .spectral import Grid, ScalarField, VectorField

VACUUM_FLOOR = 1e-6
DERIVED_MEAN_TOL = 1e-10


@dataclass(frozen=True)
class EquationOfState:
    gamma: float = 5.0 / 3.0
    rho_bar: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.rho_bar > 0:
            raise ValueError("rho_bar must be positive")

    def sound_speed_sq(self, rho_log):
        """``c^2`` as an array, for any array of log densities."""
        rho_log = np.asarray(rho_log, dtype=float)
        if self.gamma == 1.0:
            return np.ones_like(rho_log)
        return self.gamma * np.exp((self.gamma - 1.0) * (np.log(self.rho_bar) + rho_log))

    @property
    def speed_ratio(self) -> float:
        """The constant ``c'/c = (gamma - 1)/2``."""
        return 0.5 * (self.gamma - 1.0)


@dataclass(frozen=True, eq=False)
class FluidState:
    """The pair (rho_log, v) at one instant."""

    rho_log: ScalarField
    velocity: VectorField
    time: float = 0.0

    def __post_init__(self):
        if self.rho_log.grid != self.velocity.grid:
            raise ValueError("density and velocity must share one grid")
        lowest = float(np.min(self.rho_log.values))
        if lowest < np.log(VACUUM_FLOOR):
            raise VacuumState(f"min exp(rho_log) = {np.exp(lowest):.3e} is below {VACUUM_FLOOR}")

    @classmethod
    def from_arrays(cls, grid: Grid, rho_log, velocity, time: float = 0.0) -> "FluidState":
        return cls(ScalarField(grid, rho_log), VectorField.from_array(grid, velocity), float(time))

    @classmethod
    def from_packed(cls, grid: Grid, u, time: float = 0.0) -> "FluidState":
        """Build from a (4, n, n, n) array ordered (rho_log, v1, v2, v3)."""
        return cls.from_arrays(grid, u[0], u[1:4], time)

    @property
    def grid(self) -> Grid:
        return self.rho_log.grid

    @property
    def packed(self) -> np.ndarray:
        return np.concatenate([self.rho_log.values[None], self.velocity.array])

    def with_time(self, time: float) -> "FluidState":
        return FluidState(self.rho_log, self.velocity, float(time))

    def resample(self, factor: int) -> "FluidState":
        """Exact Fourier interpolation onto a grid refined by ``factor``."""
        fine = self.grid.refined(factor)
        u = self.grid.resample(self.packed, fine.n)
        return FluidState.from_packed(fine, u, self.time)


# ---------------------------------------------------------------------------
# Thermodynamics
# ---------------------------------------------------------------------------

def sound_speed(state: FluidState, eos: EquationOfState) -> ScalarField:
    return ScalarField(state.grid, np.sqrt(eos.sound_speed_sq(state.rho_log.values)))


def sound_speed_derivative(state: FluidState, eos: EquationOfState) -> ScalarField:
    return sound_speed(state, eos) * eos.speed_ratio


# ---------------------------------------------------------------------------
# Acoustic metric
# ---------------------------------------------------------------------------

def inverse_metric_array(v, c2):
    """``g^{ab}`` of shape (4, 4, ...) from v (3, ...) and c^2 (...).

    ``g^{-1} = -T (x) T + c^2 sum_i d_i (x) d_i`` with ``T = d_t + v.grad``.
    """
    v = np.asarray(v, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    tvec = np.concatenate([np.ones((1,) + c2.shape), v])
    out = -tvec[:, None] * tvec[None, :]
    for i in range(3):
        out[i + 1, i + 1] += c2
    return out


def metric_array(v, c2):
    """``g_{ab}`` of shape (4, 4, ...): ``-dt^2 + c^-2 sum (dx^a - v^a dt)^2``."""
    v = np.asarray(v, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    inv_c2 = 1.0 / c2
    out = np.zeros((4, 4) + c2.shape)
    out[0, 0] = -1.0 + inv_c2 * np.sum(v * v, axis=0)
    for i in range(3):
        out[0, i + 1] = out[i + 1, 0] = -inv_c2 * v[i]
        out[i + 1, i + 1] = inv_c2
    return out


@dataclass(frozen=True, eq=False)
class AcousticMetric:
    """Pointwise metric and inverse, stored as ten unique components each."""

    grid: Grid
    lower: dict = field(repr=False)
    upper: dict = field(repr=False)

    @staticmethod
    def _unique(full):
        return {(a, b): full[a, b] for a in range(4) for b in range(a, 4)}

    def component(self, a: int, b: int, inverse: bool = False) -> ScalarField:
        table = self.upper if inverse else self.lower
        return ScalarField(self.grid, table[(min(a, b), max(a, b))])

    def full(self, inverse: bool = False) -> np.ndarray:
        table = self.upper if inverse else self.lower
        out = np.empty((4, 4) + self.grid.shape)
        for (a, b), comp in table.items():
            out[a, b] = comp
            out[b, a] = comp
        return out


def acoustic_metric(state: FluidState, eos: EquationOfState) -> AcousticMetric:
    c2 = eos.sound_speed_sq(state.rho_log.values)
    v = state.velocity.array
    return AcousticMetric(state.grid,
                          AcousticMetric._unique(metric_array(v, c2)),
                          AcousticMetric._unique(inverse_metric_array(v, c2)))


def convective_derivative(f: ScalarField, f_t: ScalarField, state: FluidState) -> ScalarField:
    """``T f = f_t + v . grad f``."""
    grad_f = f.grid.grad(f.values)
    return ScalarField(f.grid, f_t.values + np.sum(state.velocity.array * grad_f, axis=0))


# ---------------------------------------------------------------------------
# Vorticity and the velocity splitting
# ---------------------------------------------------------------------------

def specific_vorticity(state: FluidState, eos: EquationOfState | None = None) -> VectorField:
    """``w = e^{-rho_log} curl v``."""
    g = state.grid
    w = np.exp(-state.rho_log.values) * g.curl(state.velocity.array)
    return VectorField.from_array(g, w)


@dataclass(frozen=True, eq=False)
class DerivedFields:
    w: VectorField
    omega_cap: VectorField
    eta: VectorField
    v_plus: VectorField
    source_mean: np.ndarray = field(repr=False)


def eta_source(state: FluidState) -> np.ndarray:
    """``e^rho curl w`` as a (3, n, n, n) array."""
    g = state.grid
    w = np.exp(-state.rho_log.values) * g.curl(state.velocity.array)
    return np.exp(state.rho_log.values) * g.curl(w)


def derived_fields(state: FluidState, eos: EquationOfState | None = None,
                   strict: bool = False, tol: float = DERIVED_MEAN_TOL) -> DerivedFields:
    """Specific vorticity, ``Omega``, ``eta`` and ``v_plus = v - eta``.

    ``e^rho curl w`` generally has a nonzero mean on the torus, so ``eta``
    solves ``-Lap eta = s - mean(s)``; the removed mean is returned in
    ``source_mean``.  With ``strict=True`` a mean above ``tol`` raises
    :class:`NonZeroMean` instead.
    """
    g = state.grid
    rho = state.rho_log.values
    w = np.exp(-rho) * g.curl(state.velocity.array)
    omega = np.exp(-rho) * g.curl(w)
    source = np.exp(rho) * g.curl(w)
    mean = g.mean(source)
    if strict and np.any(np.abs(mean) > tol):
        raise NonZeroMean(f"mean of e^rho curl w is {mean} (tolerance {tol:.1e})")
    eta = g.solve_neg_lap(source, strict=False)
    v = state.velocity.array
    return DerivedFields(
        w=VectorField.from_array(g, w),
        omega_cap=VectorField.from_array(g, omega),
        eta=VectorField.from_array(g, eta),
        v_plus=VectorField.from_array(g, v - eta),
        source_mean=mean,
    )
