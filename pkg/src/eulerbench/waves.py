"""The acoustic wave operator, null forms, and the wave-transport residuals.

Two forms of the wave operator are offered:

``"covariant"`` (default) is the Laplace-Beltrami operator of the acoustic
metric, ``|g|^{-1/2} d_a(|g|^{1/2} g^{ab} d_b f)`` with ``|g|^{1/2} = c^{-3}``.
On solutions it expands to

    -T T f + c^2 Lap f - (1 + 3 c'/c) (div v) T f - c c' grad rho . grad f .

``"principal"`` keeps only ``-T T f + c^2 Lap f``.  The wave-transport system
holds with the covariant form; the principal form leaves first-order terms
behind, which the residual reports make visible.

Null-form contractions use ``g^{ab} dA dB = -(T A)(T B) + c^2 grad A . grad B``
with ``T v = -c^2 grad rho`` and ``T rho = -div v`` substituted on shell.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StencilOutOfRange
from .evolution import SnapshotStack
from .residuals import (STENCIL_ORDER, ResidualReport, advect, ddt, make_report,
                        require_stencil, window_states)
from .spectral import ScalarField, VectorField
from .state import EquationOfState, FluidState

BOX_FORMS = ("covariant", "principal")
FC_VARIANTS = ("derived", "printed")


@dataclass(frozen=True, eq=False)
class NullFormBundle:
    q: VectorField
    d_form: ScalarField


def _gform(c2, a_t, a_grad, b_t, b_grad):
    return -a_t * b_t + c2 * np.sum(a_grad * b_grad, axis=-4)


def null_form_arrays(state: FluidState, eos: EquationOfState) -> tuple:
    """``(Q, D)`` as arrays of shape (3, n, n, n) and (n, n, n)."""
    g = state.grid
    rho = state.rho_log.values
    v = state.velocity.array
    c2 = eos.sound_speed_sq(rho)
    ratio = eos.speed_ratio
    gr = g.grad(rho)
    dv = g.grad(v)  # dv[a, b] = d_b v^a
    t_v = -c2 * gr
    t_rho = -(dv[0, 0] + dv[1, 1] + dv[2, 2])
    w = np.exp(-rho) * g.curl(v)
    cross = np.stack([t_v[1] * w[2] - t_v[2] * w[1],
                      t_v[2] * w[0] - t_v[0] * w[2],
                      t_v[0] * w[1] - t_v[1] * w[0]])
    q = 2.0 * np.exp(rho) * cross - (1.0 + ratio) * _gform(c2, t_rho, gr, t_v, dv)
    quad = sum(dv[a, a] * dv[b, b] - dv[b, a] * dv[a, b] for a in range(3) for b in range(a + 1, 3))
    d = -3.0 * ratio * _gform(c2, t_rho, gr, t_rho, gr) + 2.0 * quad
    return q, d


def null_forms(state: FluidState, eos: EquationOfState) -> NullFormBundle:
    q, d = null_form_arrays(state, eos)
    return NullFormBundle(VectorField.from_array(state.grid, q), ScalarField(state.grid, d))


# ---------------------------------------------------------------------------
# Wave operator on stacks
# ---------------------------------------------------------------------------

def _convective_pair(states: dict, values: dict, h: float):
    """``(T f, T T f)`` at offset 0 from ``f`` at offsets -4..4."""
    t_f = {}
    for j in range(-2, 3):
        g = states[j].grid
        t_f[j] = ddt([values[j + m] for m in range(-2, 3)], h) + advect(g, states[j].velocity.array,
                                                                          values[j])
    g = states[0].grid
    tt_f = ddt([t_f[m] for m in range(-2, 3)], h) + advect(g, states[0].velocity.array, t_f[0])
    return t_f[0], tt_f


def _box_parts(state: FluidState, eos: EquationOfState, f, t_f, tt_f, form: str) -> dict:
    g = state.grid
    rho = state.rho_log.values
    c2 = eos.sound_speed_sq(rho)
    parts = {"minus_TT": -tt_f, "c2_lap": c2 * g.lap(f)}
    if form == "covariant":
        ratio = eos.speed_ratio
        div_v = g.div(state.velocity.array)
        gr = g.grad(rho)
        parts["lower_order"] = (-(1.0 + 3.0 * ratio) * div_v * t_f
                                - ratio * c2 * np.sum(gr * g.grad(f), axis=-4))
    elif form != "principal":
        raise ValueError(f"unknown box form {form!r}; choose from {BOX_FORMS}")
    return parts


def box_array(stack: SnapshotStack, values, t_index: int, form: str = "covariant",
              oversample: int = 1) -> np.ndarray:
    """Wave operator of per-snapshot arrays ``values[k]`` at ``t_index``."""
    states = window_states(stack, t_index, 4, oversample)
    vals = {}
    for off in range(-4, 5):
        a = np.asarray(values[t_index + off], dtype=float)
        vals[off] = stack.grid.resample(a, states[off].grid.n) if oversample > 1 else a
    t_f, tt_f = _convective_pair(states, vals, stack.dt_snap)
    return sum(_box_parts(states[0], stack.eos, vals[0], t_f, tt_f, form).values())


def box_g(f_stack, stack: SnapshotStack, t_index: int, form: str = "covariant") -> ScalarField:
    """Wave operator of a scalar sampled at every snapshot of ``stack``."""
    values = [f.values if isinstance(f, ScalarField) else f for f in f_stack]
    if len(values) != len(stack):
        raise ValueError("f_stack must have one entry per snapshot")
    return ScalarField(stack.grid, box_array(stack, values, t_index, form))


# ---------------------------------------------------------------------------
# Residuals
# ---------------------------------------------------------------------------

def _box_with_parts(stack, t_index, form, oversample, extract):
    states = window_states(stack, t_index, 4, oversample)
    vals = {off: extract(states[off]) for off in range(-4, 5)}
    t_f, tt_f = _convective_pair(states, vals, stack.dt_snap)
    parts = _box_parts(states[0], stack.eos, vals[0], t_f, tt_f, form)
    return states, vals, t_f, tt_f, parts


def residual_wave_velocity(stack: SnapshotStack, t_index: int, form: str = "covariant",
                           oversample: int = 1, include_curl: bool = True) -> ResidualReport:
    """``box v + e^rho c^2 curl w - Q`` at ``t_index``."""
    states, _, _, _, parts = _box_with_parts(stack, t_index, form, oversample,
                                             lambda s: s.velocity.array)
    centre = states[0]
    g = centre.grid
    rho = centre.rho_log.values
    c2 = stack.eos.sound_speed_sq(rho)
    box = sum(parts.values())
    w = np.exp(-rho) * g.curl(centre.velocity.array)
    curl_term = np.exp(rho) * c2 * g.curl(w)
    q, _ = null_form_arrays(centre, stack.eos)
    residual = box + (curl_term if include_curl else 0.0) - q
    comp = {f"residual_{i + 1}": g.l2(residual[i]) for i in range(3)}
    return make_report("fc1_v", g, residual, {"box_v": box, "curl_term": curl_term, "Q": q},
                       centre.time, t_index, STENCIL_ORDER, extra=comp)


def residual_wave_density(stack: SnapshotStack, t_index: int, form: str = "covariant",
                          oversample: int = 1) -> ResidualReport:
    """``box rho - D`` at ``t_index``."""
    states, _, _, _, parts = _box_with_parts(stack, t_index, form, oversample,
                                             lambda s: s.rho_log.values)
    centre = states[0]
    box = sum(parts.values())
    _, d = null_form_arrays(centre, stack.eos)
    return make_report("fc1_rho", centre.grid, box - d, {"box_rho": box, "D": d},
                       centre.time, t_index, STENCIL_ORDER)


def _eta(state: FluidState) -> tuple:
    g = state.grid
    rho = state.rho_log.values
    w = np.exp(-rho) * g.curl(state.velocity.array)
    source = np.exp(rho) * g.curl(w)
    return g.solve_neg_lap(source, strict=False), g.mean(source)


def residual_wave_vplus(stack: SnapshotStack, t_index: int, form: str = "covariant",
                        variant: str = "derived", oversample: int = 1) -> ResidualReport:
    """Residual of the wave equation for ``v_plus = v - eta``.

    ``variant="printed"`` checks ``box v_plus = T T eta + Q``.  ``"derived"``
    adds the first-order terms the covariant operator produces on ``eta`` and
    the torus mean of ``e^rho curl w`` that the periodic Poisson solve
    removes:

        box v_plus = T T eta + Q + (1 + 3c'/c)(div v) T eta
                     + c c' grad rho . grad eta - c^2 mean(e^rho curl w).

    The report also carries the additivity defect
    ``|box v_plus + box eta - box v|`` under ``per_term_norms["additivity"]``.
    """
    if variant not in FC_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {FC_VARIANTS}")
    states = window_states(stack, t_index, 4, oversample)
    h = stack.dt_snap
    eta, mean = {}, {}
    for off in range(-4, 5):
        eta[off], mean[off] = _eta(states[off])
    v = {off: states[off].velocity.array for off in range(-4, 5)}
    v_plus = {off: v[off] - eta[off] for off in range(-4, 5)}
    centre = states[0]
    g = centre.grid
    eos = stack.eos
    rho = centre.rho_log.values
    c2 = eos.sound_speed_sq(rho)

    def box_of(vals):
        t_f, tt_f = _convective_pair(states, vals, h)
        return sum(_box_parts(centre, eos, vals[0], t_f, tt_f, form).values()), t_f, tt_f

    box_vp, _, _ = box_of(v_plus)
    box_eta, t_eta, tt_eta = box_of(eta)
    box_v, _, _ = box_of(v)
    q, _ = null_form_arrays(centre, eos)
    terms = {"box_v_plus": box_vp, "TT_eta": tt_eta, "Q": q}
    residual = box_vp - tt_eta - q
    if variant == "derived":
        ratio = eos.speed_ratio
        div_v = g.div(v[0])
        lower = ((1.0 + 3.0 * ratio) * div_v * t_eta
                 + ratio * c2 * np.sum(g.grad(rho) * g.grad(eta[0]), axis=-4))
        mean_term = -c2 * mean[0][:, None, None, None]
        residual = residual - lower - mean_term
        terms.update({"eta_lower_order": lower, "mean_term": mean_term})
    additivity = g.l2(box_vp + box_eta - box_v)
    extra = {"additivity": additivity,
             "additivity_relative": additivity / max(g.l2(box_v), np.finfo(float).tiny),
             "source_mean_max": float(np.max(np.abs(mean[0])))}
    return make_report("fc" if variant == "derived" else "fc_printed", g, residual, terms,
                       centre.time, t_index, STENCIL_ORDER, extra=extra)


IDENTITY_HALF_WIDTH = {"W01": 0, "W0": 2, "W1": 2, "W2": 2, "fc1": 4, "fc": 4}


def check_identity(stack: SnapshotStack, identity: str, t_index: int, **kw) -> list:
    """Dispatch one identity id to its residual function(s)."""
    from .vorticity import (residual_divergence_law, residual_modified_curl_omega,
                            residual_omega_transport, residual_w_transport)

    if identity == "W01":
        return [residual_divergence_law(stack[t_index])]
    require_stencil(stack, t_index, IDENTITY_HALF_WIDTH.get(identity, 4))
    if identity == "W0":
        return [residual_w_transport(stack, t_index, **kw)]
    if identity == "W1":
        return [residual_omega_transport(stack, t_index, **kw)]
    if identity == "W2":
        return [residual_modified_curl_omega(stack, t_index, "derived", **kw),
                residual_modified_curl_omega(stack, t_index, "printed", **kw)]
    if identity == "fc1":
        return [residual_wave_velocity(stack, t_index, **kw),
                residual_wave_density(stack, t_index, **kw)]
    if identity == "fc":
        return [residual_wave_vplus(stack, t_index, **kw)]
    raise ValueError(f"unknown identity {identity!r}")


ALL_IDENTITIES = ("fc1", "W0", "W01", "W1", "W2", "fc")


def check_many(stack: SnapshotStack, identities, t_indices, **kw) -> list:
    """Run identities at every index that admits a stencil.

    Raises :class:`StencilOutOfRange` only when no requested index fits.
    """
    reports = []
    fitted = False
    for ident in identities:
        for i in t_indices:
            try:
                reports.extend(check_identity(stack, ident, i, **kw))
                fitted = True
            except StencilOutOfRange:
                continue
    if not fitted:
        raise StencilOutOfRange("no requested time index admits the stencils")
    return reports
