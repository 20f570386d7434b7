import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bvgym.integrands import (
    Integrand,
    check_linear_growth,
    convex_envelope_1d,
    estimate_recession,
    lamination_upper_bound,
    make_integrand,
    mat_norm,
    measure_action,
)
from bvgym.measures import Atom, BVField, DiscreteMeasure
from bvgym.meshes import IntervalMesh, interval_mesh


def brute_lower_hull(xs, ys):
    """O(n^2) oracle: largest convex minorant of the samples, at the samples."""
    n = len(xs)
    env = np.array(ys, dtype=float)
    for i in range(n):
        for j in range(n):
            for k in range(j + 1, n):
                if xs[j] <= xs[i] <= xs[k] and xs[j] < xs[k]:
                    t = (xs[i] - xs[j]) / (xs[k] - xs[j])
                    env[i] = min(env[i], (1 - t) * ys[j] + t * ys[k])
    return env


class TestRecession:
    def test_abs_is_homogeneous_already(self):
        res = estimate_recession(make_integrand("abs"), [[1.0]])
        assert res["exists"] and res["value"] == pytest.approx(1.0, abs=1e-12)

    def test_euclid_sqrt1p_limit(self):
        res = estimate_recession(make_integrand("euclid_sqrt1p"), [[1.0]])
        assert res["exists"] and res["value"] == pytest.approx(1.0, abs=1e-9)

    def test_sin_log_has_no_limit(self):
        res = estimate_recession(make_integrand("sin_log_1d"), [[1.0]])
        assert not res["exists"]
        assert res["value"] <= 1.0 + 1e-9  # limsup candidate is bounded by the growth

    def test_non_unit_matrix_rejected(self):
        with pytest.raises(ValueError, match="unit"):
            estimate_recession(make_integrand("abs"), [[2.0]])

    def test_non_finite_integrand(self):
        bad = Integrand((1, 1), lambda A: np.exp(mat_norm(A)), growth_c=1.0)
        with np.errstate(over="ignore"), pytest.raises(ValueError, match="not finite"):
            estimate_recession(bad, [[1.0]])

    def test_recession_consistency_along_schedule(self):
        # max over sphere samples of |v(aA)/a - vinf(A)| decreases in a
        v = make_integrand("euclid_sqrt1p")
        sphere = np.array([[[1.0]], [[-1.0]]])
        alphas = 2.0 ** np.arange(3, 30, 4)
        worst = []
        for a in alphas:
            gaps = [abs(float(v(a * S)) / a - float(v.recession.on_sphere(S))) for S in sphere]
            worst.append(max(gaps))
        assert all(w2 <= w1 + 1e-15 for w1, w2 in zip(worst, worst[1:]))
        assert worst[-1] <= 1e-6


class TestLinearGrowth:
    def test_abs(self):
        res = check_linear_growth(make_integrand("abs"), np.linspace(-50, 50, 41).reshape(-1, 1, 1))
        assert res["ok"] and res["fitted_c"] <= 1.0

    def test_quadratic_flagged(self):
        samples = np.linspace(-1000, 1000, 81).reshape(-1, 1, 1)
        res = check_linear_growth(make_integrand("sq"), samples)
        assert not res["ok"]
        assert res["fitted_c"] == pytest.approx(1000.0, rel=1e-2)
        assert check_linear_growth(make_integrand("sq"), samples, cap=1001.0)["ok"]

    def test_euclid_below_sqrt2(self):
        res = check_linear_growth(
            make_integrand("euclid_sqrt1p"), np.linspace(-100, 100, 201).reshape(-1, 1, 1)
        )
        assert res["ok"] and res["fitted_c"] <= np.sqrt(2.0)

    def test_empty_samples(self):
        with pytest.raises(ValueError, match="nonempty"):
            check_linear_growth(make_integrand("abs"), np.zeros((0, 1, 1)))


class TestConvexEnvelope:
    def test_convex_input_unchanged(self):
        grid = np.linspace(-2, 2, 81)
        env = convex_envelope_1d(make_integrand("abs"), grid)
        assert np.max(np.abs(np.asarray(env(grid.reshape(-1, 1, 1))) - np.abs(grid))) <= 1e-12

    def test_double_well(self):
        grid = np.linspace(-3, 3, 1201)
        env = convex_envelope_1d(make_integrand("double_well_1d"), grid)
        expected = np.maximum(0.0, np.abs(grid) - 1.0)
        assert np.max(np.abs(np.asarray(env(grid.reshape(-1, 1, 1))) - expected)) <= 1e-9

    def test_wiggly_clipped(self):
        v = Integrand(
            (1, 1), lambda A: mat_norm(A) + np.minimum(np.sin(A[..., 0, 0]) ** 2, 0.8), growth_c=2.0
        )
        grid = np.linspace(-4, 4, 321)
        env = convex_envelope_1d(v, grid)
        ev = np.asarray(env(grid.reshape(-1, 1, 1)))
        vv = np.asarray(v(grid.reshape(-1, 1, 1)))
        assert np.all(ev <= vv + 1e-12)
        mid = 0.5 * (ev[:-2] + ev[2:])  # uniform grid midpoint convexity
        assert np.all(ev[1:-1] <= mid + 1e-12)

    def test_against_brute_hull(self):
        rng = np.random.default_rng(3)
        xs = np.sort(rng.uniform(-2, 2, 25))
        ys = rng.uniform(0, 1, 25)
        v = Integrand((1, 1), lambda A: np.interp(A[..., 0, 0], xs, ys), growth_c=5.0)
        env = convex_envelope_1d(v, xs)
        expected = brute_lower_hull(xs, ys)
        got = np.asarray(env(xs.reshape(-1, 1, 1)))
        assert np.max(np.abs(got - expected)) <= 1e-12

    def test_too_few_points(self):
        with pytest.raises(ValueError, match="2"):
            convex_envelope_1d(make_integrand("abs"), [0.0])

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=4, max_size=12, unique=True))
    def test_envelope_below_and_convex(self, pts):
        xs = np.sort(np.asarray(pts))
        v = make_integrand("double_well_1d")
        env = convex_envelope_1d(v, xs)
        ev = np.asarray(env(xs.reshape(-1, 1, 1)))
        assert np.all(ev <= np.asarray(v(xs.reshape(-1, 1, 1))) + 1e-12)
        for i in range(len(xs) - 2):
            t = (xs[i + 1] - xs[i]) / (xs[i + 2] - xs[i])
            assert ev[i + 1] <= (1 - t) * ev[i] + t * ev[i + 2] + 1e-10


class TestLamination:
    def test_depth_zero_is_value(self):
        v = make_integrand("double_well_1d")
        assert lamination_upper_bound(v, [[0.3]], 0) == pytest.approx(float(v(0.3)))

    def test_convex_no_improvement(self):
        v = make_integrand("euclid_sqrt1p")
        for A in (0.0, 0.7, -1.3):
            assert lamination_upper_bound(v, [[A]], 2) == pytest.approx(float(v(A)), abs=1e-12)

    def test_double_well_relaxes_to_zero(self):
        v = make_integrand("double_well_1d")
        assert lamination_upper_bound(v, [[0.0]], 1) == pytest.approx(0.0, abs=1e-12)

    def test_monotone_in_depth(self):
        v = make_integrand("double_well_1d")
        vals = [lamination_upper_bound(v, [[0.4]], d, budget=24) for d in range(3)]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))

    def test_negative_depth(self):
        with pytest.raises(ValueError):
            lamination_upper_bound(make_integrand("abs"), [[0.0]], -1)


class TestMeasureAction:
    def test_constant_density(self, unit_mesh):
        mu = BVField.affine(unit_mesh, 2.0, 0.0).derivative()
        act = measure_action(make_integrand("abs"), mu)
        assert np.allclose(act.density, 2.0)
        assert not act.atoms

    def test_single_atom(self, unit_mesh):
        mu = DiscreteMeasure(unit_mesh, np.zeros((unit_mesh.ncells, 1, 1)), (Atom(1.0, 0.8, [[1.0]]),))
        act = measure_action(make_integrand("abs"), mu)
        assert act.total_variation() == pytest.approx(0.8)
        assert float(np.asarray(act.atoms[0].point)) == 1.0

    def test_toy_weighted_closed_form(self):
        from bvgym.relax import toy_field

        eps, n = 0.5, 100
        u = toy_field(n, eps)
        act = measure_action(make_integrand(f"toy_weighted_abs:{eps}"), u.derivative())
        expected = (1 - eps) * (1.0 / (3 * n**2) + eps)
        assert act.integrate(lambda x: np.ones_like(x)) == pytest.approx(expected, abs=1e-12)

    def test_additivity_disjoint_supports(self, unit_mesh):
        n = unit_mesh.ncells
        d1 = np.zeros((n, 1, 1))
        d1[: n // 2] = 1.5
        d2 = np.zeros((n, 1, 1))
        d2[n // 2 :] = -0.5
        mu1 = DiscreteMeasure(unit_mesh, d1, (Atom(0.25, 0.3, [[1.0]]),))
        mu2 = DiscreteMeasure(unit_mesh, d2, (Atom(0.75, 0.4, [[-1.0]]),))
        v = make_integrand("abs")  # v(0) = 0, so disjoint supports add exactly
        lhs = measure_action(v, mu1 + mu2).integrate(lambda x: np.ones_like(x))
        rhs = measure_action(v, mu1).integrate(lambda x: np.ones_like(x)) + measure_action(
            v, mu2
        ).integrate(lambda x: np.ones_like(x))
        assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_missing_recession(self, unit_mesh):
        mu = BVField.affine(unit_mesh, 1.0, 0.0).derivative()
        with pytest.raises(ValueError, match="recession required"):
            measure_action(make_integrand("sq"), mu)
