"""Residual checks for the specific-vorticity transport laws.

With ``w = e^{-rho} curl v`` and ``Omega = e^{-rho} curl w`` the laws are

* W0:  ``T w = (w . grad) v``
* W01: ``div w = -w . grad rho``                         (no time derivative)
* W1:  ``T Omega^i = -2 eps^{imn} e^{-rho} d_m v^a d_n w_a
                    + eps^{amn} e^{-rho} d_a v^i d_m w_n``
* W2:  a transport law for ``curl Omega`` modified by a lower-order term.

W2 comes in two variants.  ``"derived"`` (default) is the identity obtained
by taking the curl of W1 with the contraction
``eps^{ijk} eps_{kmn} = delta^i_m delta^j_n - delta^i_n delta^j_m``:

    T(curl Omega^i + 2 e^{-rho} d_a rho d_i w_a)
        = -d_i(2 e^{-rho} d_n v^a d_n w_a) + sum_j R'_j^i .

``"printed"`` flips the sign of the modification term and of several
remainder families.  It is kept as a negative control: it does not hold,
and the per-term norms in its report show where it breaks.

Index convention in this module: ``dv[a, b] = d_b v^a`` and
``ddw[a, b, c] = d_c d_b w^a``.
"""
from __future__ import annotations

import numpy as np

from .evolution import SnapshotStack
from .residuals import (LEVI_CIVITA as EPS, STENCIL_ORDER, ResidualReport, advect, ddt,
                        make_report, window_states)
from .spectral import VectorField
from .state import FluidState

# eps_{kmn} eps^{ijk} indexed [i, j, m, n]
EPS_EPS = np.einsum("kmn,ijk->ijmn", EPS, EPS)


# ---------------------------------------------------------------------------
# epsilon algebra
# ---------------------------------------------------------------------------

def _arr(u):
    return u.array if isinstance(u, VectorField) else np.asarray(u, dtype=float)


def epsilon_contraction(a, b):
    """``eps^{ijk} a_j b_k`` (the cross product), for vectors or vector fields."""
    return np.einsum("ijk,j...,k...->i...", EPS, _arr(a), _arr(b))


def double_epsilon_contraction(a, b):
    """``eps^{ijk} eps_{kmn} a^m b^n`` as an (i, j) array, by brute force."""
    return np.einsum("ijmn,m...,n...->ij...", EPS_EPS, _arr(a), _arr(b))


def delta_form(a, b):
    """``(delta^i_m delta^j_n - delta^i_n delta^j_m) a^m b^n = a^i b^j - a^j b^i``."""
    a, b = _arr(a), _arr(b)
    return np.einsum("i...,j...->ij...", a, b) - np.einsum("j...,i...->ij...", a, b)


# ---------------------------------------------------------------------------
# Instantaneous quantities
# ---------------------------------------------------------------------------

def _vorticities(state: FluidState):
    g = state.grid
    rho = state.rho_log.values
    w = np.exp(-rho) * g.curl(state.velocity.array)
    omega = np.exp(-rho) * g.curl(w)
    return w, omega


def residual_divergence_law(state: FluidState, eos=None, oversample: int = 2) -> ResidualReport:
    """W01 residual ``div w + w . grad rho``; no time stencil.

    The state is first interpolated onto a grid refined by ``oversample``
    so the products are formed with little aliasing.
    """
    st = state.resample(oversample) if oversample > 1 else state
    g = st.grid
    w, _ = _vorticities(st)
    div_w = g.div(w)
    w_grad_rho = np.sum(w * g.grad(st.rho_log.values), axis=0)
    return make_report("W01", g, div_w + w_grad_rho,
                       {"div_w": div_w, "w_dot_grad_rho": w_grad_rho}, st.time, None, 0)


def w1_right_side(state: FluidState):
    """The two terms on the right of W1 as (3, n, n, n) arrays."""
    g = state.grid
    rho = state.rho_log.values
    w, _ = _vorticities(state)
    dv = g.grad(state.velocity.array)
    dw = g.grad(w)
    er = np.exp(-rho)
    first = -2.0 * er * np.einsum("imn,am...,an...->i...", EPS, dv, dw)
    second = er * np.einsum("amn,ia...,nm...->i...", EPS, dv, dw)
    return first, second


# ---------------------------------------------------------------------------
# Stack-based residuals
# ---------------------------------------------------------------------------

def residual_w_transport(stack: SnapshotStack, t_index: int, oversample: int = 1) -> ResidualReport:
    """W0 residual ``d_t w + v . grad w - (w . grad) v`` at ``t_index``."""
    states = window_states(stack, t_index, 2, oversample)
    h = stack.dt_snap
    ws = [_vorticities(states[o])[0] for o in range(-2, 3)]
    centre = states[0]
    g = centre.grid
    v = centre.velocity.array
    w = ws[2]
    dt_w = ddt(ws, h)
    adv = advect(g, v, w)
    stretch = advect(g, w, v)
    return make_report("W0", g, dt_w + adv - stretch,
                       {"dt_w": dt_w, "advection": adv, "stretching": stretch},
                       centre.time, t_index, STENCIL_ORDER)


def residual_omega_transport(stack: SnapshotStack, t_index: int, oversample: int = 1
                             ) -> ResidualReport:
    """W1 residual ``T Omega - (right side)`` at ``t_index``."""
    states = window_states(stack, t_index, 2, oversample)
    h = stack.dt_snap
    omegas = [_vorticities(states[o])[1] for o in range(-2, 3)]
    centre = states[0]
    g = centre.grid
    dt_om = ddt(omegas, h)
    adv = advect(g, centre.velocity.array, omegas[2])
    first, second = w1_right_side(centre)
    return make_report("W1", g, dt_om + adv - first - second,
                       {"dt_omega": dt_om, "advection": adv, "rhs_first": first,
                        "rhs_second": second}, centre.time, t_index, STENCIL_ORDER)


W2_VARIANTS = ("derived", "printed")


def _w2_transported(state: FluidState, variant: str):
    """``curl Omega^i +/- 2 e^{-rho} d_a rho d_i w_a``."""
    g = state.grid
    rho = state.rho_log.values
    w, omega = _vorticities(state)
    dw = g.grad(w)
    grad_rho = g.grad(rho)
    modification = 2.0 * np.exp(-rho) * np.einsum("a...,ai...->i...", grad_rho, dw)
    sign = 1.0 if variant == "derived" else -1.0
    return g.curl(omega) + sign * modification


def w2_remainders(state: FluidState, variant: str = "derived") -> tuple:
    """``(principal, {R1..R6})`` at one instant.

    ``principal`` is the gradient term on the right of W2 with the sign the
    variant prescribes.
    """
    g = state.grid
    rho = state.rho_log.values
    v = state.velocity.array
    w, omega = _vorticities(state)
    er = np.exp(-rho)
    gr = g.grad(rho)
    dv = g.grad(v)
    dw = g.grad(w)
    ddw = g.grad(dw)
    ddv = g.grad(dv)
    dom = g.grad(omega)
    div_v = dv[0, 0] + dv[1, 1] + dv[2, 2]
    x = np.einsum("an...,an...->...", dv, dw)

    r1 = (-2.0 * er * np.einsum("ijmn,am...,anj...->i...", EPS_EPS, dv, ddw, optimize=True)
          + er * np.einsum("amn,ijk,ka...,nmj...->i...", EPS, EPS, dv, ddw, optimize=True))
    r2 = (2.0 * er * np.einsum("ijmn,am...,an...,j...->i...", EPS_EPS, dv, dw, gr, optimize=True)
          - er * np.einsum("amn,ijk,ka...,nm...,j...->i...", EPS, EPS, dv, dw, gr, optimize=True))
    grad_rho_dw = np.einsum("a...,ai...->i...", gr, dw)
    curl_stretch = np.einsum("ijk,mj...,km...->i...", EPS, dv, dom, optimize=True)
    dv_dw_i = np.einsum("aj...,aij...->i...", dv, ddw)
    r3_first = np.einsum("amn,i...,a...,nm...->i...", EPS, w, gr, dw, optimize=True)
    r3_second = np.einsum("ajk,j...,k...,ai...->i...", EPS, gr, w, dw, optimize=True)
    r4_first = np.einsum("amn,ia...,nm...->i...", EPS, dw, dw, optimize=True)
    r4_second = np.exp(rho) * np.einsum("a...,ai...->i...", omega, dw)
    r5 = er * np.einsum("a...,ki...,ak...->i...", gr, dv, dw, optimize=True)
    r6 = er * np.einsum("a...,m...,ami...->i...", gr, w, ddv, optimize=True)
    grad_v_rho = np.einsum("ka...,k...,ai...->i...", dv, gr, dw, optimize=True)
    grad_rho_dw_dv = np.einsum("a...,mi...,am...->i...", gr, dw, dv, optimize=True)

    if variant == "derived":
        principal = -g.grad(2.0 * er * x)
        terms = {
            "R1": r1 + 2.0 * er * dv_dw_i - curl_stretch,
            "R2": r2 - 2.0 * er * grad_v_rho + 2.0 * er * div_v * grad_rho_dw
                  + 2.0 * er * grad_rho_dw_dv - 2.0 * er * gr * x,
            "R3": r3_first - 2.0 * r3_second,
            "R4": r4_first - 2.0 * r4_second,
            "R5": -2.0 * r5,
            "R6": 2.0 * r6,
        }
    elif variant == "printed":
        principal = g.grad(2.0 * er * x)
        terms = {
            "R1": r1 - 2.0 * er * dv_dw_i + curl_stretch,
            "R2": r2 - 2.0 * er * grad_v_rho + 2.0 * er * grad_rho_dw
                  - 2.0 * er * grad_rho_dw_dv + 2.0 * er * gr * x,
            "R3": r3_first + 2.0 * r3_second,
            "R4": r4_first + 2.0 * r4_second,
            "R5": 2.0 * r5,
            "R6": -2.0 * r6,
        }
    else:
        raise ValueError(f"unknown W2 variant {variant!r}; choose from {W2_VARIANTS}")
    return principal, terms


def residual_modified_curl_omega(stack: SnapshotStack, t_index: int, variant: str = "derived",
                                 oversample: int = 1) -> ResidualReport:
    """W2 residual ``T(q) - principal - sum R_j`` with per-family norms."""
    if variant not in W2_VARIANTS:
        raise ValueError(f"unknown W2 variant {variant!r}; choose from {W2_VARIANTS}")
    states = window_states(stack, t_index, 2, oversample)
    h = stack.dt_snap
    qs = [_w2_transported(states[o], variant) for o in range(-2, 3)]
    centre = states[0]
    g = centre.grid
    lhs = ddt(qs, h) + advect(g, centre.velocity.array, qs[2])
    principal, rem = w2_remainders(centre, variant)
    residual = lhs - principal - sum(rem.values())
    terms = {"lhs": lhs, "principal": principal, **rem}
    return make_report("W2" if variant == "derived" else "W2_printed", g, residual, terms,
                       centre.time, t_index, STENCIL_ORDER)
