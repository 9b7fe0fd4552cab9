"""Shared plumbing for identity residuals: reports, time stencils, windows.

Time derivatives along a snapshot stack use the fourth-order centred stencil

    f'(t_i) ~ (f_{i-2} - 8 f_{i-1} + 8 f_{i+1} - f_{i+2}) / (12 h)

and ``T = d_t + v . grad`` applied twice composes the stencil with itself,
so second convective derivatives consume four snapshots on either side.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StencilOutOfRange
from .evolution import SnapshotStack
from .spectral import Grid

FIRST_DERIVATIVE = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
STENCIL_HALF = 2
STENCIL_ORDER = 4
DEGENERATE_FLOOR = 1e-12

LEVI_CIVITA = np.zeros((3, 3, 3))
LEVI_CIVITA[0, 1, 2] = LEVI_CIVITA[1, 2, 0] = LEVI_CIVITA[2, 0, 1] = 1.0
LEVI_CIVITA[0, 2, 1] = LEVI_CIVITA[2, 1, 0] = LEVI_CIVITA[1, 0, 2] = -1.0


@dataclass(frozen=True)
class ResidualReport:
    """Numerical verdict for one identity at one time.

    ``reference_scale`` is the L^2 norm of the largest constituent term and
    ``relative = l2_residual / reference_scale``; when every term is below
    ``DEGENERATE_FLOOR`` the identity reads 0 = 0, ``degenerate`` is set and
    ``relative`` is reported as 0.
    """

    identity_id: str
    time: float
    l2_residual: float
    linf_residual: float
    reference_scale: float
    relative: float
    per_term_norms: dict = field(default_factory=dict)
    stencil_order: int = 0
    degenerate: bool = False
    t_index: int | None = None


def make_report(identity_id: str, grid: Grid, residual, terms: dict, time: float,
                t_index: int | None, stencil_order: int, extra: dict | None = None,
                floor: float = DEGENERATE_FLOOR) -> ResidualReport:
    norms = {label: grid.l2(value) for label, value in terms.items()}
    ref = max(norms.values()) if norms else 0.0
    l2 = grid.l2(residual)
    degenerate = ref <= floor
    relative = 0.0 if degenerate else l2 / ref
    norms.update(extra or {})
    return ResidualReport(identity_id, float(time), l2, float(np.max(np.abs(residual))), ref,
                          relative, norms, stencil_order, degenerate, t_index)


def require_stencil(stack: SnapshotStack, t_index: int, half_width: int) -> None:
    if len(stack) < 2 * STENCIL_HALF + 1:
        raise StencilOutOfRange(f"stack has {len(stack)} snapshots; at least 5 are needed")
    if t_index - half_width < 0 or t_index + half_width >= len(stack):
        raise StencilOutOfRange(
            f"t_index {t_index} needs snapshots {t_index - half_width}..{t_index + half_width} "
            f"but the stack holds 0..{len(stack) - 1}")


def window_states(stack: SnapshotStack, t_index: int, half_width: int,
                  oversample: int = 1) -> dict:
    """States ``t_index - half_width .. t_index + half_width`` keyed by offset.

    With ``oversample > 1`` each state is interpolated exactly onto a refined
    grid so that products in the identities are evaluated with less aliasing.
    """
    require_stencil(stack, t_index, half_width)
    out = {}
    for off in range(-half_width, half_width + 1):
        st = stack[t_index + off]
        out[off] = st.resample(oversample) if oversample > 1 else st
    return out


def ddt(values, h: float):
    """Fourth-order centred derivative from five equally spaced samples."""
    return sum(c * v for c, v in zip(FIRST_DERIVATIVE, values) if c != 0.0) / h


def advect(grid: Grid, v, f):
    """``v . grad f`` for a scalar (n,n,n) or stacked (m, n,n,n) array ``f``."""
    return np.sum(v * grid.grad(f), axis=-4)
