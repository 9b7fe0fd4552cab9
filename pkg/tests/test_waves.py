"""Acoustic wave operator, null forms and the wave-transport residuals."""
import numpy as np
import pytest

from eulerbench.errors import StencilOutOfRange
from eulerbench.evolution import (SimConfig, SnapshotStack, init_constant, init_shear,
                                  simulate)
from eulerbench.spectral import Grid
from eulerbench.state import EquationOfState, FluidState
from eulerbench.waves import (ALL_IDENTITIES, box_g, check_identity, check_many,
                              null_form_arrays, null_forms, residual_wave_density,
                              residual_wave_vplus, residual_wave_velocity)

from oracles import dalembert_standing_wave


def _still_stack(grid, count, h, rho=0.0):
    st = init_constant(grid, None, rho=rho)
    return SnapshotStack([st.with_time(h * k) for k in range(count)], EquationOfState(gamma=1.0))


class TestNullForms:
    def test_shear_has_no_quadratic_source(self):
        g = Grid(16)
        q, d = null_form_arrays(init_shear(g, amplitude=0.7, rho=0.2), EquationOfState())
        assert np.max(np.abs(d)) < 1e-13 and np.max(np.abs(q)) < 1e-13

    @pytest.mark.parametrize("gamma", [1.0, 1.4, 3.0])
    def test_potential_flow_at_constant_density(self, gamma):
        """With w = 0 and grad rho = 0: Q = 0 and D = 3 (c'/c) (div v)^2 + 2 sigma_2(grad v)."""
        g = Grid(16)
        x = g.coordinates
        psi = 0.3 * np.cos(x[0] + 2 * x[1]) + 0.1 * np.sin(x[2])
        v = g.grad(psi)
        st = FluidState.from_arrays(g, np.full(g.shape, 0.1), v)
        eos = EquationOfState(gamma=gamma)
        q, d = null_form_arrays(st, eos)
        assert np.max(np.abs(q)) < 1e-13
        hess = g.grad(v)
        div = np.trace(hess)
        sigma2 = 0.5 * (div ** 2 - np.einsum("ab...,ba...->...", hess, hess))
        expected = 3.0 * eos.speed_ratio * div ** 2 + 2.0 * sigma2
        assert np.max(np.abs(d - expected)) < 1e-12

    def test_bundle_wraps_arrays(self):
        g = Grid(8)
        b = null_forms(init_shear(g), EquationOfState())
        assert b.q.array.shape == (3,) + g.shape and b.d_form.values.shape == g.shape


class TestBox:
    @pytest.mark.parametrize("form", ["covariant", "principal"])
    def test_dalembert_standing_wave(self, form):
        g = Grid(8)
        h = 0.01
        stack = _still_stack(g, 9, h)
        x1 = g.coordinates[0]
        f = [dalembert_standing_wave(x1, t) for t in stack.times]
        assert np.max(np.abs(box_g(f, stack, 4, form).values)) < 1e-8

    def test_non_solution_is_detected(self):
        g = Grid(8)
        h = 0.01
        stack = _still_stack(g, 9, h)
        x1 = g.coordinates[0]
        f = [np.sin(x1) * np.cos(2 * t) for t in stack.times]
        expected = 3.0 * np.sin(x1) * np.cos(2 * stack.times[4])
        assert np.max(np.abs(box_g(f, stack, 4).values - expected)) < 1e-7

    def test_wrong_length(self):
        stack = _still_stack(Grid(8), 9, 0.01)
        with pytest.raises(ValueError):
            box_g([np.zeros(stack.grid.shape)] * 3, stack, 4)

    def test_unknown_form(self):
        stack = _still_stack(Grid(8), 9, 0.01)
        with pytest.raises(ValueError):
            box_g([np.zeros(stack.grid.shape)] * 9, stack, 4, form="other")


def test_constant_state_is_degenerate():
    stack = _still_stack(Grid(8), 9, 0.01, rho=0.2)
    for rep in check_many(stack, ALL_IDENTITIES, [4]):
        assert rep.degenerate and rep.relative == 0.0


class TestStencil:
    def test_too_few_snapshots(self):
        stack = _still_stack(Grid(8), 4, 0.01)
        with pytest.raises(StencilOutOfRange):
            check_identity(stack, "W0", 2)

    @pytest.mark.parametrize("ident, t_index", [("W0", 1), ("fc1", 3), ("fc", 6)])
    def test_edges(self, ident, t_index):
        stack = _still_stack(Grid(8), 9, 0.01)
        with pytest.raises(StencilOutOfRange):
            check_identity(stack, ident, t_index)

    def test_check_many_skips_edges(self):
        stack = _still_stack(Grid(8), 9, 0.01)
        reports = check_many(stack, ["W0"], range(9))
        assert [r.t_index for r in reports] == [2, 3, 4, 5, 6]

    def test_check_many_needs_one_fit(self):
        stack = _still_stack(Grid(8), 9, 0.01)
        with pytest.raises(StencilOutOfRange):
            check_many(stack, ["fc"], [0, 8])

    def test_unknown_identity(self):
        stack = _still_stack(Grid(8), 9, 0.01)
        with pytest.raises(ValueError):
            check_identity(stack, "Z9", 4)


@pytest.fixture(scope="module")
def vortical_stack():
    cfg = SimConfig(Grid(24), EquationOfState(), 0.2, dt=5e-3, snap_every=2,
                    initial_data="random_band_limited",
                    init_params={"amplitude": 0.1, "band": 2.0}, seed=7)
    return simulate(cfg)


class TestVorticalRun:
    def test_wave_velocity(self, vortical_stack):
        rep = residual_wave_velocity(vortical_stack, 10)
        assert rep.relative < 1e-3

    def test_curl_term_is_needed(self, vortical_stack):
        rep = residual_wave_velocity(vortical_stack, 10, include_curl=False)
        assert rep.relative > 1e-2

    def test_wave_density(self, vortical_stack):
        assert residual_wave_density(vortical_stack, 10).relative < 1e-3

    def test_principal_form_leaves_first_order_terms(self, vortical_stack):
        cov = residual_wave_density(vortical_stack, 10)
        prin = residual_wave_density(vortical_stack, 10, form="principal")
        assert prin.relative > 10 * cov.relative

    def test_vplus_derived_and_additive(self, vortical_stack):
        rep = residual_wave_vplus(vortical_stack, 10)
        assert rep.relative < 1e-3
        assert rep.per_term_norms["additivity_relative"] < 1e-12

    def test_vplus_printed_misses_lower_order_terms(self, vortical_stack):
        derived = residual_wave_vplus(vortical_stack, 10)
        printed = residual_wave_vplus(vortical_stack, 10, variant="printed")
        assert printed.identity_id == "fc_printed"
        assert printed.relative > derived.relative

    def test_unknown_variant(self, vortical_stack):
        with pytest.raises(ValueError):
            residual_wave_vplus(vortical_stack, 10, variant="other")
