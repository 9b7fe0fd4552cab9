"""Null rays, foliation graphs, the G functional and the null frame."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eulerbench.errors import ConstraintDrift, FoldDetected, LeftDomain
from eulerbench.evolution import SimConfig, SnapshotStack, init_constant, simulate
from eulerbench.geometry import (RayBundle, SpacetimeMetric, _assemble_graph,
                                 _derivative_weights, _seed_plane, build_foliation,
                                 build_null_frame, foliation_functional, foliation_lattice,
                                 foliation_norm, plane_basis, second_fundamental_form,
                                 theta_lattice, trace_null_geodesic, trace_rays)
from eulerbench.spectral import Grid
from eulerbench.state import EquationOfState

from oracles import constant_drift_ray

DRIFTS = [(0.0, 0.0, 0.0), (0.2, -0.1, 0.3)]


def _constant_metric(v, n=8, count=6, h=0.1):
    st_ = init_constant(Grid(n), None, 0.0, *v)
    stack = SnapshotStack([st_.with_time(h * i) for i in range(count)], EquationOfState(gamma=1.0))
    return SpacetimeMetric(stack)


@pytest.fixture(scope="module")
def small_run():
    cfg = SimConfig(Grid(16), EquationOfState(), 0.2, dt=0.01, snap_every=2,
                    initial_data="random_band_limited",
                    init_params={"amplitude": 0.05, "band": 2.0}, seed=3)
    return SpacetimeMetric(simulate(cfg))


class TestMetric:
    def test_fields_reproduce_snapshots(self, small_run):
        stack = small_run.stack
        g = stack.grid
        pts = np.stack([c.ravel() for c in g.coordinates], axis=1)[::37]
        for k in (0, 4, len(stack) - 1):
            f = small_run.fields(stack.times[k], pts)
            assert np.allclose(f["rho"], stack[k].rho_log.values.ravel()[::37], atol=1e-12)
            v = stack[k].velocity.array.reshape(3, -1)[:, ::37]
            assert np.allclose(f["v"], v, atol=1e-12)

    def test_metric_inverse_pair(self, small_run):
        pts = np.random.default_rng(0).uniform(0, 2 * np.pi, (20, 3))
        g = small_run.metric(0.05, pts)
        ginv = small_run.inverse_metric(0.05, pts)
        prod = np.einsum("abp,bcp->acp", g, ginv)
        assert np.allclose(prod, np.eye(4)[:, :, None], atol=1e-12)

    def test_left_domain(self, small_run):
        with pytest.raises(LeftDomain):
            small_run.fields(small_run.t_max + 0.1, np.zeros((1, 3)))
        with pytest.raises(LeftDomain):
            trace_rays(small_run, 0.0, np.zeros((1, 3)), np.array([[1.0, 0, 0]]),
                       t_end=small_run.t_max + 0.05)

    def test_static_detection(self):
        assert _constant_metric((0.1, 0.0, 0.0)).static


class TestLattices:
    @pytest.mark.parametrize("name, size", [("single", 1), ("axes", 6), ("default", 14),
                                            ("axes+diagonals", 14)])
    def test_sizes(self, name, size):
        assert len(theta_lattice(name)) == size

    def test_unknown(self):
        with pytest.raises(ValueError):
            theta_lattice("dense")

    @settings(max_examples=40, deadline=None)
    @given(m=st.tuples(*[st.integers(-4, 4)] * 3).filter(any))
    def test_plane_basis_orthogonal(self, m):
        p1, p2 = plane_basis(m)
        assert np.dot(p1, m) == 0 and np.dot(p2, m) == 0 and np.dot(p1, p2) == 0
        assert np.any(p1) and np.any(p2)
        assert np.issubdtype(p2.dtype, np.integer)


@pytest.mark.parametrize("v", DRIFTS)
class TestConstantState:
    def test_rays_follow_closed_form(self, v):
        met = _constant_metric(v)
        theta = np.array([1.0, 2.0, -2.0]) / 3.0
        x0 = np.array([0.3, 1.0, 2.0])
        ray = trace_null_geodesic(met, (0.0, x0), theta, t_eval=met.stack.times)
        expected = constant_drift_ray(x0, theta, v, 1.0, met.stack.times)
        assert np.max(np.abs(ray.x - expected)) < 1e-12
        assert ray.max_null_violation < 1e-14

    def test_g_closed_form(self, v):
        met = _constant_metric(v)
        graphs = foliation_lattice(met, "default", r_count=2, lattice_n=4)
        span = met.t_max - met.t_min
        expected = 0.0
        for m in theta_lattice("default"):
            theta = m / np.linalg.norm(m)
            p1, p2 = plane_basis(m)
            area = 4 * np.pi ** 2 * np.linalg.norm(p1) * np.linalg.norm(p2)
            expected = max(expected, abs(np.dot(v, theta)) * np.sqrt(area * span))
        assert foliation_functional(graphs, 2.2) == pytest.approx(expected, abs=1e-12)

    def test_frame_and_coefficients_vanish(self, v):
        met = _constant_metric(v)
        graph = build_foliation(met, (1, 1, -1), 0.4, lattice_n=4)
        for k in (0, 2, len(graph.times) - 1):
            assert build_null_frame(graph, met, k).gram_defect() < 1e-13
            cc = second_fundamental_form(graph, met, k)
            assert np.max(np.abs(cc.chi)) < 1e-12
            assert np.max(np.abs(cc.l_log_sigma)) < 1e-12
            assert np.max(np.abs(cc.l_log_sigma_ray)) < 1e-9
            assert np.max(np.abs(cc.mu)) < 1e-8


def test_fold_is_reported_with_time():
    theta, e1p, e2p, lengths, seeds_xp, x0 = _seed_plane(np.array([0, 0, 1]), 0.0, 4)
    flipped = x0.copy()
    flipped[:, 0] = -flipped[:, 0]  # orientation-reversing map of the plane
    times = np.array([0.0, 0.5])
    xs = np.stack([x0, flipped])
    xi = np.repeat(theta[None, None], 2 * len(x0), axis=0).reshape(2, len(x0), 3)
    xi0 = -np.ones((2, len(x0)))
    bundle = RayBundle(times, xs, xi, xi0, np.zeros((2, len(x0))))
    with pytest.raises(FoldDetected) as info:
        _assemble_graph(np.array([0, 0, 1]), theta, 0.0, e1p, e2p, lengths, seeds_xp, bundle,
                        4, 1e-13)
    assert info.value.time == 0.5


class TestSmallRun:
    def test_drift_guard(self, small_run):
        with pytest.raises(ConstraintDrift):
            trace_rays(small_run, 0.0, np.ones((1, 3)), np.array([[0.0, 1.0, 0.0]]),
                       rtol=1e-4, atol=1e-6, drift_limit=1e-16)

    def test_tolerance_refinement(self, small_run):
        x0 = np.random.default_rng(1).uniform(0, 2 * np.pi, (5, 3))
        xi = np.repeat([[0.0, 0.6, 0.8]], 5, axis=0)
        a = trace_rays(small_run, 0.0, x0, xi, rtol=1e-10)
        b = trace_rays(small_run, 0.0, x0, xi, rtol=5e-11)
        assert np.max(np.abs(a.x - b.x)) < 1e-8
        assert np.max(np.abs(b.null_violation)) < 1e-8

    def test_lattice_without_fold(self, small_run):
        graphs = foliation_lattice(small_run, "default", r_count=1, lattice_n=16)
        assert len(graphs) == 14
        assert max(g.reconstruction_residual for g in graphs) < 1e-5
        value = foliation_functional(graphs, 2.2)
        assert np.isfinite(value) and value > 0
        assert foliation_norm(graphs[0], 2.2) <= value

    def test_reconstruction_converges_with_lattice(self, small_run):
        coarse = build_foliation(small_run, (1, 1, 1), 0.3, lattice_n=8)
        fine = build_foliation(small_run, (1, 1, 1), 0.3, lattice_n=16)
        assert fine.reconstruction_residual < 1e-2 * coarse.reconstruction_residual

    def test_frame_is_null_and_chi_symmetric(self, small_run):
        graph = build_foliation(small_run, (0, 1, 0), 0.0, lattice_n=16)
        k = len(graph.times) // 2
        assert build_null_frame(graph, small_run, k).gram_defect() < 1e-12
        cc = second_fundamental_form(graph, small_run, k)
        scale = np.max(np.abs(cc.chi))
        assert np.max(np.abs(cc.chi[0, 1] - cc.chi[1, 0])) < 1e-3 * scale
        assert np.max(np.abs(cc.l_log_sigma - cc.l_log_sigma_ray)) < 1e-6


@pytest.mark.parametrize("nodes", [np.arange(-2, 3), np.arange(0, 5), np.arange(-4, 1)])
def test_derivative_weights_exact_on_quartics(nodes):
    h = 1e-2
    w = _derivative_weights(nodes * h)
    for p in range(5):
        vals = (nodes * h) ** p
        assert np.dot(w, vals) == pytest.approx(1.0 if p == 1 else 0.0, abs=1e-9)
