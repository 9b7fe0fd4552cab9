"""Null geodesics, characteristic foliations and null frames of the acoustic metric.

The metric along a trajectory is evaluated from a snapshot stack: in space by
summing the Fourier series of ``rho_log`` and ``v`` at arbitrary points, in
time by a quartic B-spline through the snapshot coefficients.  The sound
speed follows pointwise from ``rho_log`` so it inherits the same interpolant.

Rays are parametrised by coordinate time.  With ``w = xi_0 + v . xi`` and
``H = (-w^2 + c^2 |xi|^2) / 2`` the Hamiltonian flow reads

    dx/dt      = v - c^2 xi / w
    d xi_j/dt  = -(d_j v . xi) + d_j(c^2) |xi|^2 / (2 w)
    d xi_0/dt  = -(d_t v . xi) + d_t(c^2) |xi|^2 / (2 w)

and future-directed null rays have ``w = -c |xi| < 0``.  Rays live on the
universal cover of the torus; the Fourier series is periodic, so no wrapping
is needed for metric evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import make_interp_spline

from .errors import ConstraintDrift, DegenerateFrame, FoldDetected, LeftDomain
from .evolution import SnapshotStack
from .spectral import lp_profile
from .state import EquationOfState, inverse_metric_array, metric_array

NULL_DRIFT_LIMIT = 1e-6
PIVOT_FLOOR = 1e-10
COEFF_FLOOR = 1e-14


# ---------------------------------------------------------------------------
# Spacetime metric from a snapshot stack
# ---------------------------------------------------------------------------

class SpacetimeMetric:
    """Acoustic metric of a stored trajectory, evaluable at any (t, x)."""

    def __init__(self, stack: SnapshotStack, time_degree: int = 4):
        self.stack = stack
        self.eos: EquationOfState = stack.eos
        grid = stack.grid
        self.grid = grid
        times = stack.times
        packed = np.stack([s.packed for s in stack.states])  # (T, 4, n, n, n)
        coef = grid.fft(packed) / grid.n ** 3
        coef = coef * grid.rfft_weights
        # Keep the smallest mode cube holding every non-negligible coefficient.
        mag = np.max(np.abs(coef), axis=(0, 1))
        floor = COEFF_FLOOR * max(float(np.max(mag)), 1.0)
        m = [np.rint(a.ravel()).astype(int) for a in grid.integer_modes]
        significant = np.nonzero(mag > floor)
        cut = 0
        for axis, idx in enumerate(significant):
            if idx.size:
                cut = max(cut, int(np.max(np.abs(m[axis][idx]))))
        cut = min(cut, grid.n // 2 - 1)
        sel01 = np.nonzero(np.abs(m[0]) <= cut)[0]
        sel2 = np.nonzero(m[2] <= cut)[0]
        coef = coef[:, :, sel01][:, :, :, sel01][..., sel2]
        scale = 2 * np.pi / grid.length
        self._k01 = scale * m[0][sel01]
        self._k2 = scale * m[2][sel2]
        self.t_min = float(times[0])
        self.t_max = float(times[-1])
        self.static = len(stack) == 1 or bool(np.all(packed == packed[0]))
        if self.static:
            self._coef0 = coef[0]
            self._spline = None
        else:
            degree = min(time_degree, len(stack) - 1)
            flat = np.ascontiguousarray(coef).view(np.float64)
            self._spline = make_interp_spline(times, flat, k=degree, axis=0)
            self._dspline = self._spline.derivative()

    # -- coefficient access ------------------------------------------------
    def _coefficients(self, t: float, derivative: bool = False):
        if t < self.t_min - 1e-12 or t > self.t_max + 1e-12:
            raise LeftDomain(f"t={t:.6g} is outside the stack range "
                             f"[{self.t_min:.6g}, {self.t_max:.6g}]")
        if self.static:
            return np.zeros_like(self._coef0) if derivative else self._coef0
        spl = self._dspline if derivative else self._spline
        return np.ascontiguousarray(spl(t)).view(np.complex128)

    def _series(self, coef, x, chunk: int = 1024):
        """Values and gradients of the Fourier series at points x (P, 3)."""
        if x.shape[0] > chunk:
            parts = [self._series(coef, x[i:i + chunk], chunk) for i in range(0, x.shape[0], chunk)]
            return (np.concatenate([p[0] for p in parts], axis=1),
                    np.concatenate([p[1] for p in parts], axis=2))
        e01 = [np.exp(1j * x[:, a:a + 1] * self._k01[None, :]) for a in range(2)]
        e2 = np.exp(1j * x[:, 2:3] * self._k2[None, :])
        ik01 = 1j * self._k01[None, :]
        ik2 = 1j * self._k2[None, :]
        f = coef.shape[0]
        flat = coef.reshape(f, coef.shape[1], -1)
        shape = (f, x.shape[0], coef.shape[2], coef.shape[3])
        a = np.matmul(e01[0], flat).reshape(shape)
        a1 = np.matmul(e01[0] * ik01, flat).reshape(shape)
        e1 = e01[1][None, :, :, None]
        b = np.sum(e1 * a, axis=2)
        b1 = np.sum(e1 * a1, axis=2)
        b2 = np.sum((e01[1] * ik01)[None, :, :, None] * a, axis=2)
        val = np.einsum("pc,fpc->fp", e2, b).real
        d1 = np.einsum("pc,fpc->fp", e2, b1).real
        d2 = np.einsum("pc,fpc->fp", e2, b2).real
        d3 = np.einsum("pc,fpc->fp", e2 * ik2, b).real
        return val, np.stack([d1, d2, d3], axis=1)

    def fields(self, t: float, x, time_derivative: bool = False) -> dict:
        """``rho``, ``v`` and their spatial (and optionally time) derivatives."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        val, grad = self._series(self._coefficients(t), x)
        out = {"rho": val[0], "v": val[1:], "grad_rho": grad[0], "grad_v": grad[1:]}
        if time_derivative:
            dval, _ = self._series(self._coefficients(t, derivative=True), x)
            out["dt_rho"] = dval[0]
            out["dt_v"] = dval[1:]
        c2 = self.eos.sound_speed_sq(out["rho"])
        out["c2"] = c2
        out["grad_c2"] = 2.0 * self.eos.speed_ratio * c2 * out["grad_rho"]
        if time_derivative:
            out["dt_c2"] = 2.0 * self.eos.speed_ratio * c2 * out["dt_rho"]
        return out

    def inverse_metric(self, t: float, x) -> np.ndarray:
        f = self.fields(t, x)
        return inverse_metric_array(f["v"], f["c2"])

    def metric(self, t: float, x) -> np.ndarray:
        f = self.fields(t, x)
        return metric_array(f["v"], f["c2"])

    def metric_derivatives(self, t: float, x, fields: dict | None = None) -> np.ndarray:
        """``d_alpha g_{beta gamma}`` as an array (4, 4, 4, P)."""
        f = fields if fields is not None and "dt_v" in fields else self.fields(t, x, True)
        v, c2 = f["v"], f["c2"]
        inv = 1.0 / c2
        d_v = np.concatenate([f["dt_v"][:, None], f["grad_v"]], axis=1)  # [a, alpha]
        d_c2 = np.concatenate([f["dt_c2"][None], f["grad_c2"]], axis=0)  # [alpha]
        d_inv = -d_c2 * inv ** 2
        p = c2.shape[0]
        out = np.zeros((4, 4, 4, p))
        vv = np.sum(v * v, axis=0)
        for al in range(4):
            out[al, 0, 0] = d_inv[al] * vv + 2.0 * inv * np.sum(v * d_v[:, al], axis=0)
            for i in range(3):
                val = -(d_inv[al] * v[i] + inv * d_v[i, al])
                out[al, 0, i + 1] = out[al, i + 1, 0] = val
                out[al, i + 1, i + 1] = d_inv[al]
        return out


def christoffel_lower(dg: np.ndarray) -> np.ndarray:
    """``Gamma_{l b c} = (d_b g_{lc} + d_c g_{lb} - d_l g_{bc}) / 2`` from (4, 4, 4, P)."""
    return 0.5 * (np.einsum("blc...->lbc...", dg) + np.einsum("clb...->lbc...", dg) - dg)


# ---------------------------------------------------------------------------
# Rays
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeodesicRay:
    theta: np.ndarray
    times: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    xi0: np.ndarray
    null_violation: np.ndarray

    @property
    def max_null_violation(self) -> float:
        return float(np.max(np.abs(self.null_violation)))


@dataclass(frozen=True)
class RayBundle:
    """Many rays integrated together; arrays are indexed [time, ray, ...]."""

    times: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    xi0: np.ndarray
    null_violation: np.ndarray
    solution: object = field(default=None, repr=False)

    def ray(self, i: int, theta=None) -> GeodesicRay:
        return GeodesicRay(np.asarray(theta) if theta is not None else None, self.times,
                           self.x[:, i], self.xi[:, i], self.xi0[:, i], self.null_violation[:, i])

    def state_at(self, t: float) -> tuple:
        """Dense-output ray state ``(x, xi, xi0)`` at time ``t``."""
        y = self.solution(t).reshape(7, -1)
        return y[0:3].T, y[3:6].T, y[6]


def null_xi0(metric: SpacetimeMetric, t: float, x, xi) -> np.ndarray:
    """Future-directed ``xi_0`` putting ``(xi_0, xi)`` on the null cone."""
    f = metric.fields(t, x)
    xi = np.atleast_2d(xi)
    return -np.sum(f["v"] * xi.T, axis=0) - np.sqrt(f["c2"]) * np.linalg.norm(xi, axis=1)


def null_violation(metric: SpacetimeMetric, t: float, x, xi, xi0, fields=None) -> np.ndarray:
    """``g^{ab} xi_a xi_b / (c^2 |xi|^2)``, zero on the null cone."""
    f = fields if fields is not None else metric.fields(t, x)
    xi = np.atleast_2d(xi)
    w = xi0 + np.sum(f["v"] * xi.T, axis=0)
    q = f["c2"] * np.sum(xi * xi, axis=1)
    return (-w * w + q) / q


def _hamilton_rhs(metric: SpacetimeMetric):
    def rhs(t, y):
        y = y.reshape(7, -1)
        x, xi, xi0 = y[0:3], y[3:6], y[6]
        f = metric.fields(t, x.T, time_derivative=True)
        v, c2 = f["v"], f["c2"]
        w = xi0 + np.sum(v * xi, axis=0)
        xi2 = np.sum(xi * xi, axis=0)
        dx = v - c2 * xi / w
        # grad_v[a, j] = d_j v^a
        dxi = -np.einsum("aj...,a...->j...", f["grad_v"], xi) + 0.5 * f["grad_c2"] * xi2 / w
        dxi0 = -np.sum(f["dt_v"] * xi, axis=0) + 0.5 * f["dt_c2"] * xi2 / w
        return np.concatenate([dx, dxi, dxi0[None]]).ravel()
    return rhs


def trace_rays(metric: SpacetimeMetric, t0: float, x0, xi, t_eval=None, t_end=None,
               rtol: float = 1e-10, atol: float = 1e-12, dense: bool = False,
               drift_limit: float = NULL_DRIFT_LIMIT) -> RayBundle:
    """Integrate a batch of null rays starting at ``(t0, x0)`` with covectors ``xi``."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    t_end = metric.t_max if t_end is None else t_end
    for t in (t0, t_end):
        if t < metric.t_min - 1e-12 or t > metric.t_max + 1e-12:
            raise LeftDomain(f"ray time {t:.6g} leaves the stack range "
                             f"[{metric.t_min:.6g}, {metric.t_max:.6g}]")
    if t_eval is None:
        t_eval = np.linspace(t0, t_end, 11)
    t_eval = np.asarray(t_eval, dtype=float)
    xi0 = null_xi0(metric, t0, x0, xi)
    y0 = np.concatenate([x0.T, xi.T, xi0[None]]).ravel()
    if t_end == t0:
        ys = y0[None]
        sol = None
    else:
        res = solve_ivp(_hamilton_rhs(metric), (t0, t_end), y0, method="RK45", t_eval=t_eval,
                        rtol=rtol, atol=atol, dense_output=dense)
        if not res.success:
            raise LeftDomain(f"ray integration failed: {res.message}")
        ys = res.y.T
        sol = res.sol
    ys = ys.reshape(len(t_eval), 7, -1)
    xs = np.transpose(ys[:, 0:3], (0, 2, 1))
    xis = np.transpose(ys[:, 3:6], (0, 2, 1))
    xi0s = ys[:, 6]
    viol = np.stack([null_violation(metric, t, xs[k], xis[k], xi0s[k])
                     for k, t in enumerate(t_eval)])
    worst = float(np.max(np.abs(viol)))
    if worst > drift_limit:
        raise ConstraintDrift(f"null constraint drifted to {worst:.3e}")
    return RayBundle(t_eval, xs, xis, xi0s, viol, sol)


def trace_null_geodesic(metric: SpacetimeMetric, start, theta, t_eval=None, t_end=None,
                        rtol: float = 1e-10, atol: float = 1e-12) -> GeodesicRay:
    """One null ray from ``start = (t0, x0)`` with initial spatial covector ``theta``."""
    t0, x0 = float(start[0]), np.asarray(start[1], dtype=float)
    theta = np.asarray(theta, dtype=float)
    bundle = trace_rays(metric, t0, x0[None], theta[None], t_eval, t_end, rtol, atol)
    return bundle.ray(0, theta)


# ---------------------------------------------------------------------------
# Direction lattices
# ---------------------------------------------------------------------------

def theta_lattice(name: str = "default") -> list:
    """Integer direction vectors; ``theta = m / |m|``."""
    axes = [np.array(v) for v in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0),
                                  (0, 0, 1), (0, 0, -1))]
    diagonals = [np.array((a, b, c)) for a in (1, -1) for b in (1, -1) for c in (1, -1)]
    if name == "single":
        return [np.array((0, 0, 1))]
    if name == "axes":
        return axes
    if name in ("default", "axes+diagonals"):
        return axes + diagonals
    raise ValueError(f"unknown theta lattice {name!r}; use single, axes or default")


def plane_basis(m) -> tuple:
    """Integer vectors ``p1, p2`` orthogonal to ``m`` spanning a period lattice of the plane."""
    m = np.asarray(m, dtype=int)
    for cand in (np.array((1, -1, 0)), np.array((0, 1, -1)), np.array((1, 0, -1)),
                 np.array((1, 0, 0)), np.array((0, 1, 0)), np.array((0, 0, 1))):
        if np.dot(cand, m) == 0:
            p1 = cand
            break
    else:
        if not np.any(m):
            raise ValueError("the direction m must be non-zero")
        axis = np.zeros(3, dtype=int)
        axis[int(np.argmin(np.abs(m)))] = 1
        p1 = np.cross(m, axis)
        p1 = p1 // np.gcd.reduce(np.abs(p1[p1 != 0]))
    p2 = np.cross(m, p1)
    g = np.gcd.reduce(np.abs(p2[p2 != 0]))
    return p1, p2 // g


# ---------------------------------------------------------------------------
# Periodic 2D helpers on the seed lattice
# ---------------------------------------------------------------------------

class _Periodic2D:
    """Spectral calculus on an N x N lattice with periods (L1, L2)."""

    def __init__(self, n: int, lengths):
        self.n = n
        self.lengths = np.asarray(lengths, dtype=float)
        m = np.fft.fftfreq(n, 1.0 / n)
        self.k = [2 * np.pi * m / self.lengths[a] for a in range(2)]
        self.nyq = np.abs(m) == n // 2
        self.points = [self.lengths[a] * np.arange(n) / n for a in range(2)]

    def grad(self, f):
        """Gradient over the last two axes -> (..., 2, N, N)."""
        fh = np.fft.fft2(f)
        d0 = np.where(self.nyq, 0.0, self.k[0])[:, None]
        d1 = np.where(self.nyq, 0.0, self.k[1])[None, :]
        return np.stack([np.fft.ifft2(1j * d0 * fh).real, np.fft.ifft2(1j * d1 * fh).real],
                        axis=-3)

    def evaluate(self, f, y):
        """Trigonometric interpolant of ``f`` (..., N, N) at points y (P, 2)."""
        fh = np.fft.fft2(f) / self.n ** 2
        m = np.fft.fftfreq(self.n, 1.0 / self.n)
        keep = ~(np.abs(m) == self.n // 2)
        e0 = np.exp(1j * np.outer(y[:, 0], self.k[0][keep]))
        e1 = np.exp(1j * np.outer(y[:, 1], self.k[1][keep]))
        fh = fh[..., keep, :][..., keep]
        return np.einsum("pa,...ab,pb->...p", e0, fh, e1).real

    def sobolev(self, f, s: float) -> float:
        """``||f||_{L^2} + ||f||_{Hdot^s}`` over one period cell (dyadic shells)."""
        fh = np.fft.fft2(f)
        area = float(np.prod(self.lengths))
        power = np.abs(fh) ** 2 * area / self.n ** 4
        if power.ndim > 2:
            power = power.reshape((-1, self.n, self.n)).sum(axis=0)
        kk = np.sqrt(self.k[0][:, None] ** 2 + self.k[1][None, :] ** 2)
        l2 = float(np.sqrt(np.sum(power)))
        nonzero = kk[kk > 0]
        if nonzero.size == 0:
            return l2
        j_lo = int(np.floor(np.log2(nonzero.min())))
        j_hi = int(np.ceil(np.log2(kk.max())))
        total = 0.0
        for j in range(j_lo, j_hi + 1):
            sym = lp_profile(kk / 2.0 ** j) - lp_profile(kk / 2.0 ** (j - 1))
            total += 2.0 ** (2 * j * s) * float(np.sum(sym ** 2 * power))
        return l2 + float(np.sqrt(total))


# ---------------------------------------------------------------------------
# Foliation graphs
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FoliationGraph:
    """Graph ``x_theta = phi(t, x')`` of the flowout of the plane ``theta . x = r``.

    ``phi`` and its differential live on a regular (t, x') grid; ``x'`` are
    orthonormal coordinates along ``e1p, e2p`` with periods ``lengths``.
    The ray data (``seeds``, ``rays``) is kept for frame construction.
    """

    m: np.ndarray
    theta: np.ndarray
    r: float
    e1p: np.ndarray
    e2p: np.ndarray
    lengths: np.ndarray
    times: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    rays: RayBundle = field(repr=False)
    lattice_n: int = 8
    reconstruction_residual: float = 0.0

    @property
    def x_prime_axes(self) -> tuple:
        n = self.lattice_n
        return tuple(self.lengths[a] * np.arange(n) / n for a in range(2))


def _dphi_from_covector(theta, e1p, e2p, xi, xi0):
    """``(d_t phi, d_1 phi, d_2 phi)`` from the conormal ``xi`` of the level set."""
    xt = xi @ theta
    return np.stack([-xi0 / xt, -(xi @ e1p) / xt, -(xi @ e2p) / xt], axis=-1)


def build_foliation(metric: SpacetimeMetric, m, r: float, lattice_n: int = 16, times=None,
                    rtol: float = 1e-10, atol: float = 1e-12, newton_tol: float = 1e-13
                    ) -> FoliationGraph:
    """Trace the flowout of ``theta . x = r`` and rebuild ``phi`` on a regular grid."""
    bundle_data = _seed_plane(m, r, lattice_n)
    theta, e1p, e2p, lengths, seeds_xp, x0 = bundle_data
    t0 = metric.t_min
    times = metric.stack.times if times is None else np.asarray(times, dtype=float)
    rays = trace_rays(metric, t0, x0, np.repeat(theta[None], len(x0), axis=0), times,
                      rtol=rtol, atol=atol, dense=True)
    return _assemble_graph(np.asarray(m), theta, r, e1p, e2p, lengths, seeds_xp, rays,
                           lattice_n, newton_tol)


def _seed_plane(m, r, lattice_n):
    m = np.asarray(m, dtype=int)
    theta = m / np.linalg.norm(m)
    p1, p2 = plane_basis(m)
    e1p = p1 / np.linalg.norm(p1)
    e2p = p2 / np.linalg.norm(p2)
    lengths = 2 * np.pi * np.array([np.linalg.norm(p1), np.linalg.norm(p2)])
    ax = [lengths[a] * np.arange(lattice_n) / lattice_n for a in range(2)]
    y1, y2 = np.meshgrid(ax[0], ax[1], indexing="ij")
    seeds_xp = np.stack([y1.ravel(), y2.ravel()], axis=1)
    x0 = r * theta[None] + seeds_xp[:, :1] * e1p[None] + seeds_xp[:, 1:] * e2p[None]
    return theta, e1p, e2p, lengths, seeds_xp, x0


def _assemble_graph(m, theta, r, e1p, e2p, lengths, seeds_xp, rays, lattice_n, newton_tol):
    n = lattice_n
    cal = _Periodic2D(n, lengths)
    times = rays.times
    y = seeds_xp.reshape(n, n, 2)
    targets = y.reshape(-1, 2)
    phi = np.empty((len(times), n, n))
    dphi = np.empty((len(times), n, n, 3))
    worst_resid = 0.0
    for k, t in enumerate(times):
        x = rays.x[k]
        xp = np.stack([x @ e1p, x @ e2p], axis=-1).reshape(n, n, 2)
        disp = np.moveaxis(xp - y, -1, 0)  # periodic displacement D(y), (2, n, n)
        x_theta = (x @ theta).reshape(n, n)
        dph = _dphi_from_covector(theta, e1p, e2p, rays.xi[k], rays.xi0[k]).reshape(n, n, 3)
        jac = np.eye(2)[:, :, None, None] + cal.grad(disp)  # jac[a, b] = d x'_a / d y_b
        det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
        if np.any(det <= 0):
            raise FoldDetected(f"rays of the theta={theta} r={r} family crossed", float(t))
        # Newton inversion of x' = y + D(y) at the regular grid points.
        guess = targets - cal.evaluate(disp, targets).T
        for _ in range(50):
            d_val = cal.evaluate(disp, guess).T
            f = guess + d_val - targets
            jg = np.eye(2)[:, :, None] + cal.evaluate(cal.grad(disp), guess)
            step = np.linalg.solve(np.moveaxis(jg, -1, 0), f[..., None])[..., 0]
            guess = guess - step
            if np.max(np.abs(step)) < newton_tol:
                break
        phi[k] = cal.evaluate(x_theta, guess).reshape(n, n)
        dphi[k] = np.moveaxis(cal.evaluate(np.moveaxis(dph, -1, 0), guess), 0, -1).reshape(n, n, 3)
        # Consistency: the regular-grid graph must reproduce the ray positions.
        phi_at_rays = cal.evaluate(phi[k], xp.reshape(-1, 2) % lengths)
        worst_resid = max(worst_resid, float(np.max(np.abs(phi_at_rays - x_theta.ravel()))))
    return FoliationGraph(m, theta, float(r), e1p, e2p, lengths, times, phi, dphi, rays, n,
                          worst_resid)


def foliation_lattice(metric: SpacetimeMetric, lattice: str = "default", r_count: int = 8,
                      lattice_n: int = 16, times=None, rtol: float = 1e-10) -> list:
    """Graphs for every direction of ``lattice`` and ``r_count`` offsets each.

    All rays of all graphs integrate as one batch.
    """
    seeds = []
    for m in theta_lattice(lattice):
        period = 2 * np.pi / np.linalg.norm(m)
        for q in range(r_count):
            seeds.append((m, q * period / r_count))
    parts = [_seed_plane(m, r, lattice_n) for m, r in seeds]
    x0 = np.concatenate([p[5] for p in parts])
    xi = np.concatenate([np.repeat(p[0][None], len(p[5]), axis=0) for p in parts])
    times = metric.stack.times if times is None else np.asarray(times, dtype=float)
    rays = trace_rays(metric, metric.t_min, x0, xi, times, rtol=rtol, dense=True)
    graphs = []
    per = lattice_n ** 2
    for g_i, ((m, r), p) in enumerate(zip(seeds, parts)):
        sl = slice(g_i * per, (g_i + 1) * per)
        sub = RayBundle(rays.times, rays.x[:, sl], rays.xi[:, sl], rays.xi0[:, sl],
                        rays.null_violation[:, sl], _SliceSolution(rays.solution, g_i, per,
                                                                    len(x0)))
        graphs.append(_assemble_graph(np.asarray(m), p[0], r, p[1], p[2], p[3], p[4], sub,
                                      lattice_n, 1e-13))
    return graphs


class _SliceSolution:
    """Dense output restricted to one block of rays."""

    def __init__(self, sol, block, per, total):
        self.sol, self.block, self.per, self.total = sol, block, per, total

    def __call__(self, t):
        y = self.sol(t).reshape(7, self.total)
        return y[:, self.block * self.per:(self.block + 1) * self.per].ravel()


def foliation_norm(graph: FoliationGraph, s0: float) -> float:
    """``|||d phi - dt|||_{s0, 2}`` over the graph's (t, x') grid.

    ``sup_{j=0,1} (int ||d_t^j (d phi - dt)||^2_{H^(s0-j)} dt)^(1/2)`` with the
    time derivative from a quartic spline and trapezoid quadrature.
    """
    u = graph.dphi.copy()
    u[..., 0] -= 1.0
    u = np.moveaxis(u, -1, 1)  # (T, 3, n, n)
    cal = _Periodic2D(graph.lattice_n, graph.lengths)
    t = graph.times
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    if len(t) < 2:
        return float(cal.sobolev(u[0], s0))
    degree = min(4, len(t) - 1)
    du = make_interp_spline(t, u, k=degree, axis=0).derivative()(t)
    values = []
    for j, arr in enumerate((u, du)):
        sq = np.array([cal.sobolev(arr[k], s0 - j) ** 2 for k in range(len(t))])
        values.append(float(np.sqrt(trapezoid(sq, t))))
    return max(values)


def foliation_functional(graphs, s0: float) -> float:
    """``G = sup over the sampled (theta, r) of |||d phi - dt|||``."""
    return max(foliation_norm(g, s0) for g in graphs)


# ---------------------------------------------------------------------------
# Null frame and connection coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NullFrame:
    """Frame vectors as arrays (4, P) at the ray points of one time slice."""

    time: float
    points: np.ndarray
    l: np.ndarray
    lbar: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    sigma: np.ndarray
    gram: np.ndarray = field(repr=False)

    def gram_defect(self) -> float:
        target = np.array([[0, 2, 0, 0], [2, 0, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=float)
        return float(np.max(np.abs(self.gram - target[:, :, None])))


def _frame_vectors(fields: dict, theta, e1p, e2p, xi):
    """l, lbar, e1, e2 (4, P) plus sigma and the Gram-Schmidt matrix."""
    v, c2 = fields["v"], fields["c2"]
    xi = np.atleast_2d(xi)
    xi_t = xi.T
    xi0 = -np.sum(v * xi_t, axis=0) - np.sqrt(c2) * np.linalg.norm(xi, axis=1)
    w = xi0 + np.sum(v * xi_t, axis=0)
    sigma = -w
    p = c2.shape[0]
    ones = np.ones((1, p))
    ell = np.concatenate([ones, v - c2 * xi_t / w])
    t_vec = np.concatenate([ones, v])
    lbar = ell - 2.0 * t_vec
    xt = xi @ theta
    tangents = []
    for ep in (e1p, e2p):
        d = -(xi @ ep) / xt
        tangents.append(ep[:, None] + d[None] * theta[:, None])
    inv_c2 = 1.0 / c2

    def dot(a, b):
        return inv_c2 * np.sum(a * b, axis=0)

    n1 = np.sqrt(dot(tangents[0], tangents[0]))
    if np.any(n1 < PIVOT_FLOOR):
        raise DegenerateFrame("first Gram-Schmidt pivot vanished")
    e1 = tangents[0] / n1
    proj = tangents[1] - dot(tangents[1], e1) * e1
    n2 = np.sqrt(dot(proj, proj))
    if np.any(n2 < PIVOT_FLOOR):
        raise DegenerateFrame("second Gram-Schmidt pivot vanished")
    e2 = proj / n2
    zeros = np.zeros((1, p))
    e1 = np.concatenate([zeros, e1])
    e2 = np.concatenate([zeros, e2])
    # Coefficients expressing e_a in the tangents E_1, E_2 (for tangential derivatives).
    coeff = np.zeros((2, 2, p))
    coeff[0, 0] = 1.0 / n1
    c21 = dot(tangents[1], e1[1:])
    coeff[1, 1] = 1.0 / n2
    coeff[1, 0] = -c21 / (n1 * n2)
    return ell, lbar, e1, e2, sigma, coeff


def _gram(g, vecs):
    return np.einsum("ab...,ia...,jb...->ij...", g, np.stack(vecs), np.stack(vecs))


def build_null_frame(graph: FoliationGraph, metric: SpacetimeMetric, k: int) -> NullFrame:
    """Null frame at the ray points of time slice ``k`` of ``graph``."""
    t = float(graph.times[k])
    x = graph.rays.x[k]
    f = metric.fields(t, x)
    ell, lbar, e1, e2, sigma, _ = _frame_vectors(f, graph.theta, graph.e1p, graph.e2p,
                                                 graph.rays.xi[k])
    g = metric_array(f["v"], f["c2"])
    gram = _gram(g, [ell, lbar, e1, e2])
    return NullFrame(t, x, ell, lbar, e1, e2, sigma, gram)


@dataclass(frozen=True)
class ConnectionCoefficients:
    time: float
    chi: np.ndarray          # (2, 2, P)
    l_log_sigma: np.ndarray  # (P,)
    l_log_sigma_ray: np.ndarray  # (P,) from d(ln sigma)/dt along rays
    mu: np.ndarray           # (2, 2, P)


def second_fundamental_form(graph: FoliationGraph, metric: SpacetimeMetric, k: int,
                            dt_fd: float = 1e-3) -> ConnectionCoefficients:
    """``chi_ab = <D_{e_a} l, e_b>``, ``l(ln sigma)`` and ``mu_0ab = <D_l e_a, e_b>``.

    Derivatives along ``e_a`` use the spectral calculus of the seed lattice
    (``d/dx' = d/dy . (dx'/dy)^(-1)``); derivatives along ``l`` use the ray
    dense output with a fourth-order stencil of width ``dt_fd``.  The value
    ``l(ln sigma)`` is computed both from the connection and directly along
    the rays.
    """
    n = graph.lattice_n
    t = float(graph.times[k])
    x = graph.rays.x[k]
    xi = graph.rays.xi[k]
    f = metric.fields(t, x, time_derivative=True)
    ell, lbar, e1, e2, sigma, coeff = _frame_vectors(f, graph.theta, graph.e1p, graph.e2p, xi)
    g = metric_array(f["v"], f["c2"])
    gamma = christoffel_lower(metric.metric_derivatives(t, x, f))
    cal = _Periodic2D(n, graph.lengths)

    # d x'/d y on the lattice and the inverse Jacobian.
    y = np.stack(np.meshgrid(*graph.x_prime_axes, indexing="ij"))
    xp = np.stack([x @ graph.e1p, x @ graph.e2p]).reshape(2, n, n)
    jac = np.eye(2)[:, :, None, None] + cal.grad(xp - y)
    jinv = np.linalg.inv(np.moveaxis(jac.reshape(2, 2, -1), -1, 0))  # (P, 2, 2): dy/dx'

    dl_dy = cal.grad(ell.reshape(4, n, n)).reshape(4, 2, -1)  # [beta, b, P]
    dl_dxp = np.einsum("zbp,pba->zap", dl_dy, jinv)
    # e_a(l) = sum_a' coeff[a, a'] d l / d x'_a'
    e_of_l = np.einsum("aqp,zqp->azp", coeff, dl_dxp)  # [a, beta, P]
    frame_e = np.stack([e1, e2])  # [a, beta, P]
    chi = (np.einsum("mzp,bmp,azp->abp", g, frame_e, e_of_l)
           + np.einsum("mgdp,bmp,agp,dp->abp", gamma, frame_e, frame_e, ell))

    # l(ln sigma) = -<D_l T, l> with T = d_t + v . grad.
    l_of_t = np.zeros((4, x.shape[0]))
    l_of_t[1:] = f["dt_v"] + np.einsum("ajp,jp->ap", f["grad_v"], ell[1:])
    t_vec = np.concatenate([np.ones((1, x.shape[0])), f["v"]])
    l_log_sigma = -(np.einsum("mzp,mp,zp->p", g, ell, l_of_t)
                    + np.einsum("mgdp,mp,gp,dp->p", gamma, ell, ell, t_vec))

    # Along-ray derivatives from dense output.
    def frame_at(tt):
        xs, xis, _ = graph.rays.state_at(tt)
        ff = metric.fields(tt, xs)
        el, _, a1, a2, sg, _ = _frame_vectors(ff, graph.theta, graph.e1p, graph.e2p, xis)
        return np.stack([a1, a2]), np.log(sg)

    lo, hi = metric.t_min, metric.t_max
    h = min(dt_fd, 0.2 * max(hi - lo, 1e-300))
    nodes = np.arange(-2, 3) * h
    if t + nodes[0] < lo:
        nodes = np.arange(0, 5) * h
    elif t + nodes[-1] > hi:
        nodes = np.arange(-4, 1) * h
    weights = _derivative_weights(nodes)
    samples = [frame_at(t + o) for o in nodes]
    de_dt = sum(wt * smp[0] for wt, smp in zip(weights, samples))
    dlog_dt = sum(wt * smp[1] for wt, smp in zip(weights, samples))
    mu = (np.einsum("mzp,bmp,azp->abp", g, frame_e, de_dt)
          + np.einsum("mgdp,bmp,gp,adp->abp", gamma, frame_e, ell, frame_e))
    return ConnectionCoefficients(t, chi, l_log_sigma, dlog_dt, mu)


def _derivative_weights(nodes) -> np.ndarray:
    """Weights giving ``f'(0)`` from samples at distinct ``nodes`` (Lagrange)."""
    nodes = np.asarray(nodes, dtype=float)
    weights = np.empty(len(nodes))
    for i, xi in enumerate(nodes):
        others = np.delete(nodes, i)
        total = sum(np.prod(-np.delete(others, j)) for j in range(len(others)))
        weights[i] = total / np.prod(xi - others)
    return weights
