"""Dyadic norms, energy functionals and an empirical inequality sampler.

Norm conventions (all over one period box):

* ``||f||_{Hdot^s} = (sum_j 2^(2js) ||Delta_j f||_{L^2}^2)^(1/2)``
* ``||f||_{H^s} = ||f||_{L^2} + ||f||_{Hdot^s}``
* ``||f||_{Bdot^s_{p,r}} = (sum_j 2^(jsr) ||Delta_j f||_{L^p}^r)^(1/r)`` with
  ``r = inf`` meaning a supremum over shells.
* ``||f||_{C^delta} = ||f||_{Bdot^delta_{inf,inf}} + ||f||_{L^inf}``

Shells run over ``0 <= j <= grid.lp_max``; shells with negative index are
empty on the torus.  Multi-component arrays (vectors, tensors) are normed
with the Euclidean sum over components for ``p = 2`` and the maximum over
components for ``p = inf``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import HypothesisViolation, OutOfBand
from .evolution import SnapshotStack
from .spectral import Grid, ScalarField, VectorField, fractional_symbol, random_band_limited
from .state import specific_vorticity


class OutOfBandWarning(UserWarning):
    """A norm is dominated by the highest resolvable shell."""


def _as_array(f):
    if isinstance(f, (ScalarField, VectorField)):
        return f.grid, (f.values if isinstance(f, ScalarField) else f.array)
    raise TypeError("expected a ScalarField or VectorField")


# ---------------------------------------------------------------------------
# Array-level norms
# ---------------------------------------------------------------------------

def shell_l2(grid: Grid, a) -> np.ndarray:
    """``||Delta_j a||_{L^2}`` for every resolvable shell, via Parseval."""
    a_hat = grid.fft(a)
    power = grid.rfft_weights * np.abs(a_hat) ** 2
    if power.ndim > 3:
        power = power.reshape((-1,) + grid.spectral_shape).sum(axis=0)
    scale = grid.length ** 3 / grid.n ** 6
    return np.array([np.sqrt(np.sum(grid.lp_symbol(j) ** 2 * power) * scale)
                     for j in grid.lp_shells()])


def shell_linf(grid: Grid, a) -> np.ndarray:
    """``||Delta_j a||_{L^inf}`` (grid maximum) for every resolvable shell."""
    a_hat = grid.fft(a)
    return np.array([np.max(np.abs(grid.ifft(grid.lp_symbol(j) * a_hat)))
                     for j in grid.lp_shells()])


def _dyadic_sum(grid: Grid, shells: np.ndarray, s: float, r: float) -> float:
    j = np.arange(len(shells))
    terms = 2.0 ** (j * s) * shells
    if np.isinf(r):
        return float(np.max(terms)) if len(terms) else 0.0
    return float(np.sum(terms ** r) ** (1.0 / r))


def _warn_if_tail(grid: Grid, shells: np.ndarray, s: float) -> None:
    weighted = 2.0 ** (np.arange(len(shells)) * s) * shells
    total = np.sum(weighted ** 2)
    if total > 0 and weighted[-1] ** 2 > 0.5 * total:
        warnings.warn(f"norm with s={s} is dominated by the top resolvable shell; "
                      "the value is resolution-limited", OutOfBandWarning, stacklevel=3)


def homogeneous_sobolev_value(grid: Grid, a, s: float) -> float:
    return _dyadic_sum(grid, shell_l2(grid, a), s, 2.0)


def sobolev_value(grid: Grid, a, s: float) -> float:
    """``||a||_{L^2} + ||a||_{Hdot^s}``."""
    return grid.l2(a) + homogeneous_sobolev_value(grid, a, s)


def linf_value(a) -> float:
    return float(np.max(np.abs(a)))


def besov_value(grid: Grid, a, s: float, p: float, r: float) -> float:
    if p == 2:
        shells = shell_l2(grid, a)
    elif np.isinf(p):
        shells = shell_linf(grid, a)
    else:
        raise ValueError("only p = 2 and p = inf are supported")
    return _dyadic_sum(grid, shells, s, r)


def holder_value(grid: Grid, a, delta: float) -> float:
    return besov_value(grid, a, delta, np.inf, np.inf) + linf_value(a)


# ---------------------------------------------------------------------------
# Field-level norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormReport:
    norm_id: str
    value: float
    params: dict = field(default_factory=dict)
    grid_n: int = 0


def sobolev_norm(f, s: float, homogeneous: bool = False) -> NormReport:
    grid, a = _as_array(f)
    shells = shell_l2(grid, a)
    _warn_if_tail(grid, shells, s)
    hdot = _dyadic_sum(grid, shells, s, 2.0)
    if homogeneous:
        return NormReport("Hdot^s", hdot, {"s": s}, grid.n)
    return NormReport("H^s", grid.l2(a) + hdot, {"s": s}, grid.n)


def besov_norm(f, s: float, p: float = 2, r: float = 2) -> NormReport:
    grid, a = _as_array(f)
    return NormReport("Bdot^s_{p,r}", besov_value(grid, a, s, p, r),
                      {"s": s, "p": p, "r": r}, grid.n)


def holder_norm(f, delta: float) -> NormReport:
    grid, a = _as_array(f)
    return NormReport("C^delta", holder_value(grid, a, delta), {"delta": delta}, grid.n)


# ---------------------------------------------------------------------------
# Energy functionals and the Gronwall check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergySeries:
    times: np.ndarray
    energy: np.ndarray
    energy_low: np.ndarray


def state_energy(state, s: float, s0: float) -> float:
    g = state.grid
    w = specific_vorticity(state).array
    return (sobolev_value(g, state.rho_log.values, s) + sobolev_value(g, state.velocity.array, s)
            + sobolev_value(g, w, s0))


def energy_functionals(stack: SnapshotStack, s: float, s0: float) -> EnergySeries:
    """``E = |rho|_{H^s} + |v|_{H^s} + |w|_{H^s0}`` and ``E_l`` (all exponents 2)."""
    e = np.array([state_energy(st, s, s0) for st in stack.states])
    el = np.array([state_energy(st, 2.0, 2.0) for st in stack.states])
    return EnergySeries(stack.times, e, el)


def gronwall_integrand(state, eos, s0: float) -> float:
    """``||dv, d rho||_{L^inf} + ||dv_spatial||_{Bdot^(s0-2)_{inf,2}}`` with on-shell T."""
    g = state.grid
    u = state.packed
    grads = g.grad(u)  # (4, 3, ...)
    c2 = eos.sound_speed_sq(u[0])
    t_v = -c2 * grads[0]
    t_rho = -(grads[1, 0] + grads[2, 1] + grads[3, 2])
    dv_drho = max(linf_value(grads), linf_value(t_v), linf_value(t_rho))
    dv = grads[1:].reshape((9,) + g.shape)
    besov = besov_value(g, dv, s0 - 2.0, np.inf, 2.0)
    return dv_drho + besov


@dataclass(frozen=True)
class GronwallResult:
    constant: float
    passed: bool
    bound: float
    times: np.ndarray
    energy: np.ndarray
    exponent: np.ndarray


def gronwall_check(stack: SnapshotStack, s: float, s0: float, bound: float = 10.0
                   ) -> GronwallResult:
    """Smallest C with ``E(t) <= C E(0) exp(int_0^t integrand)`` on the stack."""
    if len(stack) < 3:
        raise ValueError("the Gronwall check needs at least three snapshots")
    series = energy_functionals(stack, s, s0)
    integrand = np.array([gronwall_integrand(st, stack.eos, s0) for st in stack.states])
    t = series.times
    exponent = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (integrand[1:] + integrand[:-1]))])
    e0 = series.energy[0]
    if e0 == 0.0:
        constant = 1.0 if np.all(series.energy == 0.0) else float("inf")
    else:
        constant = float(np.max(series.energy / (e0 * np.exp(exponent))))
    passed = bool(np.all(np.isfinite(series.energy)) and constant <= bound)
    return GronwallResult(constant, passed, bound, t, series.energy, exponent)


def trapezoid_lq(times: np.ndarray, values: np.ndarray, q: float) -> float:
    """Mixed ``L^q_t`` norm of sampled values with half-weighted endpoints."""
    values = np.abs(np.asarray(values, dtype=float))
    if np.isinf(q):
        return float(np.max(values))
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    return float(trapezoid(values ** q, times) ** (1.0 / q))


# ---------------------------------------------------------------------------
# Inequality sampler
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RatioReport:
    inequality_id: str
    samples: int
    max_ratio: float
    median_ratio: float
    worst_sample_seed: int
    ratios: np.ndarray = field(repr=False, default=None)
    degenerate: bool = False


@dataclass(frozen=True)
class InequalitySides:
    lhs: float
    rhs: float
    reference: float


DEGENERATE_RHS = 1e-13
ZERO_LHS = 1e-12


def ratio_of(sides: InequalitySides) -> float:
    """``lhs / rhs`` with an explicit rule for a vanishing right side.

    When the right side is at roundoff level relative to ``reference`` (the
    size of the individual terms inside the left side), the left side must
    vanish as well: the returned ratio is then ``lhs / reference`` if that is
    below ``ZERO_LHS`` and ``inf`` (an automatic failure) otherwise.
    """
    ref = max(sides.reference, np.finfo(float).tiny)
    if sides.rhs <= DEGENERATE_RHS * ref:
        rel = sides.lhs / ref
        return rel if rel < ZERO_LHS else float("inf")
    return sides.lhs / sides.rhs


def _advect(grid, v, a):
    """``v . grad a`` for a scalar array ``a``."""
    return np.sum(v * grid.grad(a), axis=0)


def _riesz_symbols(grid):
    k2 = grid.k_squared.copy()
    k2[0, 0, 0] = 1.0
    k = grid.wavenumbers
    return [[k[i] * k[j] / k2 for j in range(3)] for i in range(3)]


def riesz(grid: Grid, a, i: int, j: int):
    """Zero-order multiplier ``k_i k_j / |k|^2`` (zero mode sent to zero)."""
    return grid.multiplier(a, _riesz_symbols(grid)[i][j])


def _lam(grid, a, alpha):
    return grid.multiplier(a, fractional_symbol(grid, alpha))


def _l2(grid, a):
    return grid.l2(a)


def _hdot(grid, a, s):
    return homogeneous_sobolev_value(grid, a, s)


def _h(grid, a, s):
    return sobolev_value(grid, a, s)


def _side_jh(grid, f, h, v, p):
    s = p["s"]
    lhs_a = _lam(grid, h * f, s)
    lhs_b = _lam(grid, h, s) * f
    lhs = _l2(grid, lhs_a - lhs_b)
    rhs = _l2(grid, _lam(grid, h, s - 1.0)) * linf_value(grid.grad(f)) \
        + _l2(grid, h) * linf_value(_lam(grid, f, s))
    return InequalitySides(lhs, rhs, max(_l2(grid, lhs_a), _l2(grid, lhs_b)))


def _side_cj(grid, f, h, v, p):
    a = p["a"]
    lhs = _h(grid, h * f, a)
    rhs = linf_value(h) * _h(grid, f, a) + linf_value(f) * _h(grid, h, a)
    return InequalitySides(lhs, rhs, lhs)


def _side_jh0(grid, f, h, v, p):
    s = p["s"]
    fu = np.expm1(f)
    lhs = _h(grid, fu, s)
    rhs = _h(grid, f, s) * (1.0 + linf_value(f))
    return InequalitySides(lhs, rhs, lhs)


def _side_ps(grid, f, h, v, p):
    r, rp = p["r"], p["r_prime"]
    lhs = _h(grid, h * f, r + rp - 1.5)
    rhs = _h(grid, h, r) * _h(grid, f, rp)
    return InequalitySides(lhs, rhs, lhs)


def _side_lpe(grid, f, h, v, p):
    alpha = p["alpha"]
    lhs = _l2(grid, _lam(grid, h * f, alpha))
    rhs = besov_value(grid, h, alpha, np.inf, 2.0) * _l2(grid, f) \
        + linf_value(h) * _hdot(grid, f, alpha)
    return InequalitySides(lhs, rhs, lhs)


def _side_wql(grid, f, h, v, p):
    alpha = p["alpha"]
    g3 = v[0]
    lhs = _l2(grid, _lam(grid, f * h * g3, alpha))
    rhs = _h(grid, f, 1.0 + alpha) * _h(grid, h, 1.0) * _h(grid, g3, 1.0)
    return InequalitySides(lhs, rhs, lhs)


def _side_LPE(grid, f, h, v, p):
    alpha, beta = p["alpha"], p["beta"]
    lhs = besov_value(grid, h * f, alpha, np.inf, 2.0)
    rhs = linf_value(h) * besov_value(grid, f, alpha, np.inf, 2.0) \
        + holder_value(grid, h, beta) * linf_value(f)
    return InequalitySides(lhs, rhs, lhs)


def _side_ceR(grid, f, h, v, p):
    alpha = p["alpha"]
    adv_f = _advect(grid, v, f)
    first = np.empty((9,) + grid.shape)
    second = np.empty((9,) + grid.shape)
    for i in range(3):
        for j in range(3):
            first[3 * i + j] = riesz(grid, adv_f, i, j)
            second[3 * i + j] = _advect(grid, v, riesz(grid, f, i, j))
    lhs = _hdot(grid, first - second, alpha)
    rhs = besov_value(grid, v, 1.0 + alpha, np.inf, np.inf) * _l2(grid, f) \
        + besov_value(grid, v, 1.0, np.inf, np.inf) * _hdot(grid, f, alpha)
    return InequalitySides(lhs, rhs, max(_hdot(grid, first, alpha), _hdot(grid, second, alpha)))


def _side_ce(grid, f, h, v, p):
    alpha = p["alpha"]
    first = _lam(grid, _advect(grid, v, f), alpha)
    second = _advect(grid, v, _lam(grid, f, alpha))
    lhs = _l2(grid, first - second)
    dv = grid.grad(v).reshape((9,) + grid.shape)
    rhs = besov_value(grid, dv, 0.0, np.inf, 2.0) * _hdot(grid, f, alpha)
    return InequalitySides(lhs, rhs, max(_l2(grid, first), _l2(grid, second)))


def _side_YR(grid, f, h, v, p):
    s1, s2 = p["s1"], p["s2"]
    adv_f = _advect(grid, v, f)
    f_hat = grid.fft(f)
    lhs_terms, ref_terms = [], []
    for j in grid.lp_shells():
        sym = grid.lp_symbol(j)
        first = grid.ifft(sym * grid.fft(adv_f))
        second = _advect(grid, v, grid.ifft(sym * f_hat))
        w = 2.0 ** ((s1 - 1.0) * j)
        lhs_terms.append(w * _hdot(grid, first - second, s2 - s1))
        ref_terms.append(w * max(_hdot(grid, first, s2 - s1), _hdot(grid, second, s2 - s1)))
    lhs = float(np.sqrt(np.sum(np.square(lhs_terms))))
    ref = float(np.sqrt(np.sum(np.square(ref_terms))))
    rhs = linf_value(grid.grad(v)) * _hdot(grid, f, s2) + _h(grid, v, s2) * _h(grid, f, 1.0)
    return InequalitySides(lhs, rhs, ref)


def _check_range(name, value, lo, hi, lo_open=False, hi_open=True):
    below = value <= lo if lo_open else value < lo
    above = value >= hi if hi_open else value > hi
    if below or above:
        raise HypothesisViolation(f"{name}={value} is outside the allowed range")


def _hyp_jh(p):
    _check_range("s", p["s"], 0.0, np.inf)


def _hyp_cj(p):
    _check_range("a", p["a"], 0.0, np.inf)


def _hyp_jh0(p):
    _check_range("s", p["s"], 0.0, np.inf)


def _hyp_ps(p):
    _check_range("r", p["r"], 0.0, 1.5)
    _check_range("r_prime", p["r_prime"], 0.0, 1.5)
    if not p["r"] + p["r_prime"] > 1.5:
        raise HypothesisViolation("ps needs r + r_prime > 3/2")


def _hyp_alpha_closed(p):
    _check_range("alpha", p["alpha"], 0.0, 1.0)


def _hyp_alpha_open(p):
    _check_range("alpha", p["alpha"], 0.0, 1.0, lo_open=True)


def _hyp_LPE(p):
    _hyp_alpha_open(p)
    if not p["beta"] > p["alpha"]:
        raise HypothesisViolation("LPE needs beta > alpha")


def _hyp_YR(p):
    if not 2.0 < p["s1"] <= p["s2"]:
        raise HypothesisViolation("YR needs 2 < s1 <= s2")


INEQUALITIES = {
    "jh": (_side_jh, _hyp_jh, {"s": 1.5}),
    "cj": (_side_cj, _hyp_cj, {"a": 1.5}),
    "jh0": (_side_jh0, _hyp_jh0, {"s": 1.5}),
    "ps": (_side_ps, _hyp_ps, {"r": 1.0, "r_prime": 1.0}),
    "lpe": (_side_lpe, _hyp_alpha_closed, {"alpha": 0.5}),
    "wql": (_side_wql, _hyp_alpha_open, {"alpha": 0.5}),
    "LPE": (_side_LPE, _hyp_LPE, {"alpha": 0.5, "beta": 0.6}),
    "ceR": (_side_ceR, _hyp_alpha_closed, {"alpha": 0.5}),
    "ce": (_side_ce, _hyp_alpha_open, {"alpha": 0.5}),
    "YR": (_side_YR, _hyp_YR, {"s1": 2.2, "s2": 2.4}),
}

# Ratios that are homogeneous of degree zero under f -> lambda f.
SCALE_INVARIANT = frozenset(INEQUALITIES) - {"jh0"}

# Polynomial degree of the products formed; 0 marks a non-polynomial map.
PRODUCT_DEGREE = {"wql": 3, "jh0": 0}


@dataclass(frozen=True)
class SampleFields:
    grid: Grid
    f: np.ndarray
    h: np.ndarray
    v: np.ndarray


def sample_fields(grid: Grid, seed: int, index: int, band: float, amplitude: float = 1.0,
                  constant_v: bool = False) -> SampleFields:
    """Random inputs for sample ``index`` of the set with base ``seed``."""
    rng = np.random.default_rng([seed, index])
    f = random_band_limited(grid, rng, band, amplitude)
    h = random_band_limited(grid, rng, band, amplitude)
    if constant_v:
        v = np.broadcast_to(rng.standard_normal(3)[:, None, None, None] * amplitude,
                            (3,) + grid.shape).copy()
    else:
        v = random_band_limited(grid, rng, band, amplitude, components=3)
    return SampleFields(grid, f, h, v)


def inequality_sides(inequality_id: str, fields: SampleFields, params: dict | None = None,
                     scale: float = 1.0) -> InequalitySides:
    """Both sides of one inequality, with ``f`` multiplied by ``scale``."""
    side, hyp, defaults = _lookup(inequality_id)
    p = {**defaults, **(params or {})}
    hyp(p)
    return side(fields.grid, scale * fields.f, fields.h, fields.v, p)


def _lookup(inequality_id):
    try:
        return INEQUALITIES[inequality_id]
    except KeyError:
        raise KeyError(f"unknown inequality id {inequality_id!r}; "
                       f"choose from {sorted(INEQUALITIES)}") from None


def inequality_sample(inequality_id: str, n_samples: int = 100, seed: int = 0, band: float = 5,
                      amplitude: float = 1.0, grid_n: int = 32, params: dict | None = None,
                      constant_v: bool = False, scale: float = 1.0) -> RatioReport:
    """Sample ``lhs / rhs`` over seeded random band-limited fields."""
    side, hyp, defaults = _lookup(inequality_id)
    p = {**defaults, **(params or {})}
    hyp(p)
    grid = Grid(grid_n)
    degree = PRODUCT_DEGREE.get(inequality_id, 2)
    if degree and degree * band >= grid_n / 2:
        raise OutOfBand(f"band {band} aliases degree-{degree} products on an n={grid_n} grid")
    ratios = np.empty(n_samples)
    for i in range(n_samples):
        fields = sample_fields(grid, seed, i, band, amplitude, constant_v)
        ratios[i] = ratio_of(side(grid, scale * fields.f, fields.h, fields.v, p))
    worst = int(np.argmax(ratios))
    return RatioReport(inequality_id, n_samples, float(np.max(ratios)), float(np.median(ratios)),
                       worst, ratios, constant_v)
