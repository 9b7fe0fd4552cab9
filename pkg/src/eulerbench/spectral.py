"""Periodic grid fields and constant-coefficient Fourier multipliers.

Fields live on the torus ``[0, L)^3`` sampled on ``n^3`` points.  Arrays are
indexed ``values[i1, i2, i3]`` with ``x_a = i_a * L / n``; the spectrum uses
the ``numpy.fft.rfftn`` layout, so the last axis holds only non-negative
wavenumbers.

Every operator here is a Fourier multiplier.  The array-level kernels live on
:class:`Grid` so that the time stepper and the residual code can work on bare
``ndarray`` stacks; the :class:`ScalarField` / :class:`VectorField` functions
are thin wrappers that keep the public API typed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .errors import NegativePowerOnMean, NonZeroMean, OutOfBand

MEAN_TOL = 1e-12


# ---------------------------------------------------------------------------
# Littlewood-Paley profile
# ---------------------------------------------------------------------------

def _psi(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def _smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    a = _psi(s)
    b = _psi(1.0 - np.asarray(s, dtype=float))
    return a / (a + b)


def lp_profile(s):
    """Radial cutoff chi: equal to 1 on ``s <= 1`` and 0 on ``s >= 2``."""
    return 1.0 - _smooth_step(np.asarray(s, dtype=float) - 1.0)


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------

def _is_smooth(n: int) -> bool:
    """True when ``n`` has no prime factor above 5 (fast FFT sizes)."""
    for p in (2, 3, 5):
        while n % p == 0:
            n //= p
    return n == 1


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with ``n`` points per axis.

    Powers of two are the usual choice; any even size whose prime factors are
    2, 3 and 5 is accepted (the vortical benchmark runs at n = 48).
    """

    n: int
    length: float = 2 * np.pi
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        n = self.n
        if int(n) != n or n < 8 or n % 2 or not _is_smooth(n):
            raise ValueError(f"grid size must be an even 2-3-5 smooth integer >= 8, got {n}")
        if not self.length > 0:
            raise ValueError("grid length must be positive")
        if not 0 < self.dealias_fraction <= 1:
            raise ValueError("dealias_fraction must lie in (0, 1]")

    # -- geometry ----------------------------------------------------------
    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def shape(self) -> tuple:
        return (self.n, self.n, self.n)

    @property
    def spectral_shape(self) -> tuple:
        return (self.n, self.n, self.n // 2 + 1)

    @property
    def cell_volume(self) -> float:
        return self.dx ** 3

    @cached_property
    def coordinates(self) -> np.ndarray:
        """Array of shape (3, n, n, n) holding x1, x2, x3."""
        x = np.arange(self.n) * self.dx
        return np.array(np.meshgrid(x, x, x, indexing="ij"))

    # -- wavenumbers -------------------------------------------------------
    @cached_property
    def integer_modes(self) -> tuple:
        n = self.n
        full = np.fft.fftfreq(n, 1.0 / n)
        half = np.fft.rfftfreq(n, 1.0 / n)
        return (full[:, None, None], full[None, :, None], half[None, None, :])

    @cached_property
    def wavenumbers(self) -> tuple:
        scale = 2 * np.pi / self.length
        return tuple(scale * m for m in self.integer_modes)

    @cached_property
    def derivative_symbols(self) -> tuple:
        """``i k_a`` per axis with the unpaired Nyquist mode set to zero."""
        out = []
        for a, k in enumerate(self.wavenumbers):
            m = self.integer_modes[a]
            sym = 1j * np.where(np.abs(m) == self.n // 2, 0.0, k)
            out.append(sym)
        return tuple(out)

    @cached_property
    def k_squared(self) -> np.ndarray:
        kx, ky, kz = self.wavenumbers
        return kx ** 2 + ky ** 2 + kz ** 2

    @cached_property
    def k_abs(self) -> np.ndarray:
        return np.sqrt(self.k_squared)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        cut = self.dealias_fraction * self.n / 2
        mx, my, mz = self.integer_modes
        return (np.abs(mx) < cut) & (np.abs(my) < cut) & (np.abs(mz) < cut)

    @cached_property
    def rfft_weights(self) -> np.ndarray:
        """Multiplicity of each rfft coefficient in the full spectrum."""
        w = np.full(self.n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return w[None, None, :]

    # -- Littlewood-Paley range -------------------------------------------
    @property
    def max_radial_mode(self) -> float:
        return float(self.k_abs.max())

    @property
    def lp_max(self) -> int:
        """Largest shell index whose support meets the grid spectrum.

        ``lp_low(f, lp_max + 1)`` is the identity on every grid field.
        """
        return int(np.ceil(np.log2(self.max_radial_mode)))

    def lp_shells(self) -> range:
        return range(0, self.lp_max + 1)

    def check_shell(self, j: int) -> None:
        if j < 0 or j > self.lp_max:
            raise OutOfBand(
                f"shell j={j} is empty on a grid with n={self.n}; "
                f"resolvable shells are 0..{self.lp_max}")

    @lru_cache(maxsize=None)
    def lp_symbol(self, j: int) -> np.ndarray:
        k = self.k_abs
        return lp_profile(k / 2.0 ** j) - lp_profile(k / 2.0 ** (j - 1))

    @lru_cache(maxsize=None)
    def lp_low_symbol(self, j: int) -> np.ndarray:
        return lp_profile(self.k_abs / 2.0 ** (j - 1))

    # -- array kernels -----------------------------------------------------
    def fft(self, a):
        return np.fft.rfftn(a, axes=(-3, -2, -1))

    def ifft(self, a_hat):
        return np.fft.irfftn(a_hat, s=self.shape, axes=(-3, -2, -1))

    def grad_hat(self, a_hat):
        """Spectral gradient of a spectrum, returning three spectra."""
        return np.stack([s * a_hat for s in self.derivative_symbols], axis=-4)

    def grad(self, a):
        """Gradient of a real array (..., n, n, n) -> (..., 3, n, n, n)."""
        return self.ifft(self.grad_hat(self.fft(a)))

    def div(self, u):
        u_hat = self.fft(u)
        d = self.derivative_symbols
        return self.ifft(d[0] * u_hat[..., 0, :, :, :] + d[1] * u_hat[..., 1, :, :, :]
                         + d[2] * u_hat[..., 2, :, :, :])

    def curl(self, u):
        u_hat = self.fft(u)
        d = self.derivative_symbols
        c = [d[1] * u_hat[..., 2, :, :, :] - d[2] * u_hat[..., 1, :, :, :],
             d[2] * u_hat[..., 0, :, :, :] - d[0] * u_hat[..., 2, :, :, :],
             d[0] * u_hat[..., 1, :, :, :] - d[1] * u_hat[..., 0, :, :, :]]
        return self.ifft(np.stack(c, axis=-4))

    def lap(self, a):
        return self.ifft(-self.k_squared * self.fft(a))

    def multiplier(self, a, symbol):
        return self.ifft(symbol * self.fft(a))

    def dealias(self, a):
        return self.ifft(self.dealias_mask * self.fft(a))

    def mean(self, a):
        return np.mean(a, axis=(-3, -2, -1))

    def integrate(self, a):
        return np.sum(a, axis=(-3, -2, -1)) * self.cell_volume

    def l2(self, a) -> float:
        """Physical-space L^2 norm over the box (all leading axes summed)."""
        return float(np.sqrt(np.sum(np.asarray(a) ** 2) * self.cell_volume))

    def l2_spectral(self, a_hat) -> float:
        """L^2 norm of a field from its rfft spectrum (Parseval)."""
        power = np.sum(self.rfft_weights * np.abs(a_hat) ** 2)
        return float(np.sqrt(power * self.length ** 3) / self.n ** 3)

    def solve_neg_lap(self, a, strict=True, tol=MEAN_TOL):
        """Zero-mean solution of ``-Lap u = a`` for a (..., n, n, n) array."""
        a_hat = self.fft(a)
        mean = a_hat[..., 0, 0, 0].real / self.n ** 3
        if strict and np.any(np.abs(mean) > tol):
            raise NonZeroMean(f"source mean {np.max(np.abs(mean)):.3e} exceeds {tol:.1e}")
        k2 = self.k_squared.copy()
        k2[0, 0, 0] = 1.0
        u_hat = a_hat / k2
        u_hat[..., 0, 0, 0] = 0.0
        return self.ifft(u_hat)

    def resample(self, a, n_new: int):
        """Exact trigonometric interpolation of ``a`` onto an ``n_new`` grid.

        The unpaired Nyquist planes of the coarse grid are dropped so that the
        result is the unique real band-limited interpolant.
        """
        if n_new == self.n:
            return np.array(a, copy=True)
        if n_new < self.n:
            raise ValueError("resample only refines")
        n, m = self.n, n_new
        a_hat = np.fft.fftn(a, axes=(-3, -2, -1))
        h = n // 2
        keep = np.r_[0:h, m - h + 1:m]
        src = np.r_[0:h, n - h + 1:n]
        big = np.zeros(a_hat.shape[:-3] + (m, m, m), dtype=complex)
        big[np.ix_(*([np.arange(s) for s in a_hat.shape[:-3]] + [keep, keep, keep]))] = \
            a_hat[np.ix_(*([np.arange(s) for s in a_hat.shape[:-3]] + [src, src, src]))]
        return np.fft.ifftn(big, axes=(-3, -2, -1)).real * (m / n) ** 3

    def refined(self, factor: int) -> "Grid":
        return Grid(self.n * factor, self.length, self.dealias_fraction)


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real samples of a periodic function together with a cached spectrum."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values of shape {v.shape} do not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, func) -> "ScalarField":
        x1, x2, x3 = grid.coordinates
        return cls(grid, np.broadcast_to(func(x1, x2, x3), grid.shape).astype(float))

    @classmethod
    def from_spectrum(cls, grid: Grid, spectrum) -> "ScalarField":
        return cls(grid, grid.ifft(spectrum))

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @cached_property
    def spectrum(self) -> np.ndarray:
        s = self.grid.fft(self.values)
        s.setflags(write=False)
        return s

    @property
    def mean(self) -> float:
        return float(self.spectrum[0, 0, 0].real / self.grid.n ** 3)

    def _wrap(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self.grid, other.grid)
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._wrap(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._wrap(other) - self.values)

    def __mul__(self, other):
        if isinstance(other, VectorField):
            return other * self
        return ScalarField(self.grid, self.values * self._wrap(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.grid, self.values / self._wrap(other))

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class VectorField:
    """Three scalar components sharing one grid."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) != 3:
            raise ValueError("a VectorField needs exactly three components")
        g = comps[0].grid
        for c in comps[1:]:
            _same_grid(g, c.grid)
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_array(cls, grid: Grid, array) -> "VectorField":
        return cls(tuple(ScalarField(grid, array[a]) for a in range(3)))

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls.from_array(grid, np.zeros((3,) + grid.shape))

    @property
    def grid(self) -> Grid:
        return self.components[0].grid

    @property
    def array(self) -> np.ndarray:
        return np.stack([c.values for c in self.components])

    def __getitem__(self, i) -> ScalarField:
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def _other(self, other):
        if isinstance(other, VectorField):
            _same_grid(self.grid, other.grid)
            return other.array
        if isinstance(other, ScalarField):
            _same_grid(self.grid, other.grid)
            return other.values[None]
        return np.asarray(other, dtype=float).reshape(-1, 1, 1, 1) if np.ndim(other) == 1 else other

    def __add__(self, other):
        return VectorField.from_array(self.grid, self.array + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return VectorField.from_array(self.grid, self.array - self._other(other))

    def __mul__(self, other):
        return VectorField.from_array(self.grid, self.array * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return VectorField.from_array(self.grid, -self.array)

    def dot(self, other: "VectorField") -> ScalarField:
        return ScalarField(self.grid, np.sum(self.array * self._other(other), axis=0))


def _same_grid(a: Grid, b: Grid) -> None:
    if a != b:
        raise ValueError(f"fields live on different grids: {a} vs {b}")


# ---------------------------------------------------------------------------
# Operators on fields
# ---------------------------------------------------------------------------

def gradient(f: ScalarField) -> VectorField:
    g = f.grid
    return VectorField.from_array(g, g.ifft(g.grad_hat(f.spectrum)))


def divergence(u: VectorField) -> ScalarField:
    g = u.grid
    d = g.derivative_symbols
    return ScalarField.from_spectrum(g, sum(d[a] * u[a].spectrum for a in range(3)))


def curl(u: VectorField) -> VectorField:
    g = u.grid
    d = g.derivative_symbols
    s = [c.spectrum for c in u]
    comps = (d[1] * s[2] - d[2] * s[1], d[2] * s[0] - d[0] * s[2], d[0] * s[1] - d[1] * s[0])
    return VectorField(tuple(ScalarField.from_spectrum(g, c) for c in comps))


def laplacian(f: ScalarField) -> ScalarField:
    return ScalarField.from_spectrum(f.grid, -f.grid.k_squared * f.spectrum)


def solve_neg_laplacian(f: ScalarField, tol: float = MEAN_TOL) -> ScalarField:
    """Zero-mean ``u`` with ``-Lap u = f``; raises :class:`NonZeroMean` otherwise."""
    if abs(f.mean) > tol:
        raise NonZeroMean(f"source mean {f.mean:.3e} exceeds {tol:.1e}; "
                          "-Lap u = f has no periodic solution")
    g = f.grid
    k2 = g.k_squared.copy()
    k2[0, 0, 0] = 1.0
    u_hat = f.spectrum / k2
    u_hat[0, 0, 0] = 0.0
    return ScalarField.from_spectrum(g, u_hat)


def fractional_symbol(grid: Grid, alpha: float) -> np.ndarray:
    """``|k|^alpha`` with the zero mode sent to zero for every alpha."""
    k = grid.k_abs.copy()
    k[0, 0, 0] = 1.0
    sym = k ** alpha
    sym[0, 0, 0] = 0.0
    return sym


def fractional_power(f: ScalarField, alpha: float, tol: float = MEAN_TOL) -> ScalarField:
    """Apply ``Lambda^alpha = (-Lap)^(alpha/2)``."""
    if alpha < 0 and abs(f.mean) > tol:
        raise NegativePowerOnMean(f"Lambda^{alpha} needs a zero-mean field, mean is {f.mean:.3e}")
    return ScalarField.from_spectrum(f.grid, fractional_symbol(f.grid, alpha) * f.spectrum)


def bessel_potential(f: ScalarField, k: float) -> ScalarField:
    """Apply ``<D>^k``, the multiplier ``(1 + |xi|^2)^(k/2)``."""
    sym = (1.0 + f.grid.k_squared) ** (0.5 * k)
    return ScalarField.from_spectrum(f.grid, sym * f.spectrum)


def lp_project(f: ScalarField, j: int) -> ScalarField:
    """Dyadic block ``Delta_j f`` supported in ``2^(j-1) <= |xi| <= 2^(j+1)``."""
    f.grid.check_shell(j)
    return ScalarField.from_spectrum(f.grid, f.grid.lp_symbol(j) * f.spectrum)


def lp_low(f: ScalarField, j: int) -> ScalarField:
    """Low-frequency block ``S_j f``; ``S_0`` keeps only the mean on the torus."""
    if j < 0:
        raise OutOfBand(f"S_{j} is the zero operator on the torus")
    return ScalarField.from_spectrum(f.grid, f.grid.lp_low_symbol(j) * f.spectrum)


def lp_decompose(f: ScalarField, j0: int = 0) -> tuple:
    """Return ``(S_{j0} f, [Delta_j f for j0 <= j <= lp_max])``."""
    blocks = [lp_project(f, j) for j in range(j0, f.grid.lp_max + 1)]
    return lp_low(f, j0), blocks


def dealias(f: ScalarField) -> ScalarField:
    return ScalarField.from_spectrum(f.grid, f.grid.dealias_mask * f.spectrum)


def l2_norm(f) -> float:
    """Physical-space L^2 norm of a scalar or vector field."""
    if isinstance(f, VectorField):
        return f.grid.l2(f.array)
    return f.grid.l2(f.values)


def l2_norm_spectral(f) -> float:
    if isinstance(f, VectorField):
        return float(np.sqrt(sum(l2_norm_spectral(c) ** 2 for c in f)))
    return f.grid.l2_spectral(f.spectrum)


def random_band_limited(grid: Grid, rng: np.random.Generator, band: float,
                        amplitude: float = 1.0, k_min: float = 1.0,
                        components: int | None = None) -> np.ndarray:
    """Real random array with Gaussian coefficients in ``k_min <= |k| <= band``.

    Each output field is scaled so its maximum absolute value is ``amplitude``.
    ``components=None`` returns one (n, n, n) array, otherwise a stack.
    """
    count = 1 if components is None else components
    m = grid.k_abs * grid.length / (2 * np.pi)
    mask = (m >= k_min) & (m <= band)
    out = np.empty((count,) + grid.shape)
    for c in range(count):
        coef = rng.standard_normal(grid.spectral_shape) + 1j * rng.standard_normal(grid.spectral_shape)
        # Hermitian symmetry is enforced by irfftn; the radial mask is symmetric.
        a = grid.ifft(coef * mask)
        peak = np.max(np.abs(a))
        out[c] = a * (amplitude / peak) if peak > 0 else a
    return out[0] if components is None else out

