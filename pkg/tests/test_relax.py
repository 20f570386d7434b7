import numpy as np
import pytest

from bvgym.integrands import weighted_tv_integrand
from bvgym.measures import BVField
from bvgym.meshes import interval_mesh
from bvgym.relax import (
    AdmissibilityError,
    HypothesisError,
    ProblemSpec,
    abs_penalty,
    admissibility_report,
    direct_minimize,
    eval_Fbar,
    eval_Fhat,
    eval_toy,
    higher_dim_J,
    linear_penalty,
    relax_minimize,
    square_penalty,
    tilde_transform,
    toy_field,
    toy_infimum,
    toy_limit_gym,
    toy_report,
    toy_sequence_value,
    toy_spec,
)
from bvgym.soucek import soucek_pair

EPS = 0.5


def const_weight_spec(**kw):
    """f = |u'| with a Robin term (u-1)^2 at the right end only."""
    f = weighted_tv_integrand(lambda x: np.ones_like(np.asarray(x, dtype=float)), name="tv")
    return ProblemSpec(0.0, 1.0, f, {1.0: square_penalty(1.0)}, name="convex_tv", **kw)


class TestToyClosedForms:
    def test_sequence_value_formula(self):
        for eps in (0.1, 0.3, 0.5):
            for n in (10, 100, 1000):
                u = toy_field(n, eps)
                assert eval_toy(u, "I", eps) == pytest.approx(
                    toy_sequence_value(eps, n), abs=1e-12
                )

    def test_I1_at_weak_limit(self):
        u = BVField.constant(interval_mesh(0, 1, 16), EPS / 2)
        assert eval_toy(u, "I1", EPS) == pytest.approx(EPS**2 / 4 + (1 - EPS / 2) ** 2)
        assert eval_toy(u, "I1", EPS) == pytest.approx(0.625)

    def test_I2_recovers_infimum(self):
        u = BVField.constant(interval_mesh(0, 1, 16), EPS / 2)
        val = eval_toy(u, "I2", EPS, beta=(EPS / 2, 1 - EPS / 2))
        assert val == pytest.approx(toy_infimum(EPS))

    def test_I_rejects_jumps(self, unit_mesh):
        u = BVField.step(unit_mesh, 0.5, 0.0, 1.0)
        with pytest.raises(ValueError, match="jumps"):
            eval_toy(u, "I", EPS)
        assert eval_toy(u, "I1", EPS) > 0

    def test_non_lsc_witness(self):
        # the functional value drops strictly below its value at the weak limit
        limit_val = eval_toy(BVField.constant(interval_mesh(0, 1, 8), EPS / 2), "I1", EPS)
        seq_val = eval_toy(toy_field(10**4, EPS), "I1", EPS)
        assert seq_val < limit_val - 0.2
        assert limit_val - toy_infimum(EPS) == pytest.approx(0.25, abs=1e-9)

    def test_report_flags_quoted_limit(self):
        rep = toy_report(EPS)
        assert not rep["quoted_limit_matches"]
        assert rep["quoted_limit_discrepancy"] == pytest.approx(EPS**2 / 4)
        assert rep["lsc_gap"] == pytest.approx(0.25)


class TestDirectMinimize:
    @pytest.mark.parametrize("eps,expected", [(0.5, 0.375), (0.1, 0.095)])
    def test_toy_values(self, eps, expected):
        res = direct_minimize(toy_spec(eps), levels=(4, 6, 8))
        assert res["inf_est"] == pytest.approx(expected, abs=5e-3)

    def test_pure_neumann_is_zero(self):
        f = weighted_tv_integrand(lambda x: np.ones_like(np.asarray(x, dtype=float)))
        spec = ProblemSpec(0.0, 1.0, f, {}, name="neumann")
        res = direct_minimize(spec, levels=(3, 4))
        assert res["inf_est"] == pytest.approx(0.0, abs=1e-12)

    def test_values_nonincreasing_under_refinement(self):
        # nested spaces: the family value cannot increase when the mesh refines
        spec = toy_spec(0.3)
        mesh = interval_mesh(0, 1, 8, grade_to=(1.0,), grade_levels=4)
        from bvgym.relax import _discrete_energy, _minimize_on_mesh

        vals = []
        for _ in range(3):
            u = _minimize_on_mesh(spec, mesh)
            vals.append(_discrete_energy(spec, u))
            mesh = mesh.refine()
        assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))

    def test_minimizing_sequence_concentrates(self):
        res = direct_minimize(toy_spec(EPS), levels=(4, 8))
        coarse, fine = res["minimizers"]
        j_coarse = max(x for x, _ in _transition_cells(coarse))
        j_fine = max(x for x, _ in _transition_cells(fine))
        assert j_fine > j_coarse  # the transition moves toward x = 1

    def test_infeasible_bound(self):
        with pytest.raises(ValueError, match="infeasible"):
            toy_spec(0.5, C=-1.0)

    def test_growth_bounds_hold(self):
        spec = toy_spec(0.5)
        assert spec.validate_growth(np.linspace(-50, 50, 21).reshape(-1, 1, 1))


def _transition_cells(u):
    slopes = np.abs(u.slopes())
    idx = np.nonzero(slopes > 1e-9)[0]
    return [(float(u.mesh.cell_centers[i]), float(slopes[i])) for i in idx]


class TestRelaxedFunctionals:
    def test_Fhat_at_toy_limit(self):
        gm = toy_limit_gym(EPS)
        beta = (EPS / 2, 1 - EPS / 2)
        assert eval_Fhat(gm, beta, toy_spec(EPS)) == pytest.approx(toy_infimum(EPS), abs=1e-12)

    def test_Fhat_trivial_measure(self):
        from bvgym.gym import dirac_gym

        mesh = interval_mesh(0, 1, 16)
        gm = dirac_gym(mesh, 0.0).with_underlying(BVField.constant(mesh, 0.0))
        assert eval_Fhat(gm, (0.0, 0.0), toy_spec(EPS)) == pytest.approx(1.0)

    def test_Fhat_strictness(self):
        gm = toy_limit_gym(EPS)
        bad_beta = (EPS / 2, 0.0)  # not the outer trace
        with pytest.raises(AdmissibilityError, match="outer_trace"):
            eval_Fhat(gm, bad_beta, toy_spec(EPS))
        # non-strict evaluation still returns a number
        assert np.isfinite(eval_Fhat(gm, bad_beta, toy_spec(EPS), strict=False))
        assert "beta_not_outer_trace(at=1)" in admissibility_report(gm, bad_beta, toy_spec(EPS))

    def test_Fbar_matches_Fhat_on_pairs(self):
        mesh = interval_mesh(0, 1, 16)
        pair = soucek_pair(BVField.constant(mesh, EPS / 2), {1.0: 1.0 - EPS})
        from bvgym.soucek import to_gym

        val_bar = eval_Fbar(pair, toy_spec(EPS))
        gm = to_gym(pair)
        val_hat = eval_Fhat(gm, (EPS / 2, 1 - EPS / 2), toy_spec(EPS))
        assert val_bar == pytest.approx(val_hat, abs=1e-12)
        assert val_bar == pytest.approx(toy_infimum(EPS), abs=1e-12)


class TestTildeTransform:
    def test_identity_on_dirac_boundary(self):
        gm = toy_limit_gym(EPS)
        spec = toy_spec(EPS)
        beta = (EPS / 2, 1 - EPS / 2)
        tilde, tbeta, log = tilde_transform(gm, beta, spec)
        assert not log
        assert eval_Fhat(tilde, tbeta, spec, strict=False) == pytest.approx(
            eval_Fhat(gm, beta, spec, strict=False), abs=1e-12
        )

    def test_boundary_oscillation_collapses(self):
        from bvgym.gym import GenYoungMeasure

        spec = toy_spec(EPS)
        mesh = interval_mesh(0, 1, 16)
        grid = np.array([[[0.0]]])
        sphere = np.array([[[-1.0]], [[1.0]]])
        mass = 0.4
        gm = GenYoungMeasure(
            mesh, grid, np.ones((mesh.ncells, 1)), np.zeros(mesh.ncells),
            ((1.0, mass),), sphere, np.full((mesh.ncells, 2), 0.5),
            np.array([[0.5, 0.5]]),  # zero first moment
            underlying=BVField.constant(mesh, 0.0),
        )
        beta = {0.0: np.array([0.0]), 1.0: np.array([0.0])}
        tilde, tbeta, log = tilde_transform(gm, beta, spec)
        assert not tilde.lam_atoms  # the zero-moment atom is dropped
        assert log and "zero-moment" in log[0]
        before = eval_Fhat(gm, beta, spec, strict=False)
        after = eval_Fhat(tilde, tbeta, spec, strict=False)
        assert before - after == pytest.approx(EPS * mass)  # the recession cost
        assert after <= before + 1e-10

    def test_monotone_on_partial_oscillation(self):
        from bvgym.gym import GenYoungMeasure

        spec = toy_spec(EPS)
        mesh = interval_mesh(0, 1, 16)
        rng = np.random.default_rng(11)
        for _ in range(5):
            theta = rng.uniform(0.0, 1.0)
            mass = rng.uniform(0.1, 1.0)
            gm = GenYoungMeasure(
                mesh, np.array([[[0.0]]]), np.ones((mesh.ncells, 1)), np.zeros(mesh.ncells),
                ((1.0, mass),), np.array([[[-1.0]], [[1.0]]]),
                np.full((mesh.ncells, 2), 0.5), np.array([[1 - theta, theta]]),
                underlying=BVField.constant(mesh, 0.0),
            )
            moment = 2 * theta - 1
            beta = {0.0: np.array([0.0]), 1.0: np.array([moment * mass])}
            tilde, tbeta, _ = tilde_transform(gm, beta, spec)
            before = eval_Fhat(gm, beta, spec, strict=False)
            after = eval_Fhat(tilde, tbeta, spec, strict=False)
            assert after <= before + 1e-10


class TestRelaxMinimize:
    @pytest.mark.parametrize("eps", [0.1, 0.5])
    def test_toy_three_values_agree(self, eps):
        res = relax_minimize(toy_spec(eps), levels=(4, 6, 8))
        assert res.inf_direct == pytest.approx(toy_infimum(eps), abs=5e-3)
        assert res.agree_within(1e-2)
        assert abs(res.gym_attained - res.min_gym) <= 1e-2
        assert res.inf_direct >= res.min_extended - 1e-9 >= res.min_gym - 2e-9

    def test_toy_minimizer_structure(self):
        res = relax_minimize(toy_spec(EPS), levels=(4, 6, 8))
        assert res.beta[0.0][0] == pytest.approx(EPS / 2, abs=1e-6)
        assert res.beta[1.0][0] == pytest.approx(1 - EPS / 2, abs=1e-6)
        (atom,) = res.minimizer_pair.boundary_part()
        assert float(np.asarray(atom.point)) == 1.0
        assert atom.mass == pytest.approx(1 - EPS, abs=1e-6)
        u = res.minimizer_pair.u
        assert np.allclose(u.values, EPS / 2, atol=1e-6)

    def test_convex_right_robin_problem(self):
        res = relax_minimize(const_weight_spec(), levels=(4, 6))
        assert res.agree_within(5e-3)
        assert res.min_gym == pytest.approx(0.0, abs=5e-3)

    def test_nonconvex_boundary_term_refused(self):
        bad = ProblemSpec(
            0.0,
            1.0,
            weighted_tv_integrand(lambda x: np.ones_like(np.asarray(x, dtype=float))),
            {1.0: square_penalty(1.0).__class__(lambda u: -float(np.sum(u**2)), None, True, "-u^2")},
            name="bad",
        )
        with pytest.raises(HypothesisError, match="convexity"):
            relax_minimize(bad, levels=(3,))

    def test_negative_recession_refused(self):
        bad = ProblemSpec(
            0.0,
            1.0,
            weighted_tv_integrand(lambda x: np.ones_like(np.asarray(x, dtype=float))),
            {1.0: linear_penalty(-1.0)},
            name="bad2",
        )
        with pytest.raises(HypothesisError, match="negative"):
            relax_minimize(bad, levels=(3,))

    def test_not_qslb_weight_refused(self):
        # a weight that is negative at the boundary breaks the sign condition
        f = weighted_tv_integrand(lambda x: np.asarray(x, dtype=float) - 0.5)
        spec = ProblemSpec(0.0, 1.0, f, {0.0: square_penalty(0.0)}, name="badw")
        with pytest.raises(HypothesisError, match="quasi-sublinear"):
            relax_minimize(spec, levels=(3,))

    def test_hypothesis_log_records_not_disproved(self):
        res = relax_minimize(toy_spec(EPS), levels=(4, 6))
        assert all("not disproved" in line for line in res.hypothesis_log)


class TestHigherDim:
    def test_zero_data_minimum_is_arc_length(self):
        res = higher_dim_J(0.5, lambda p: np.zeros(p.shape[0]), level=2, refinements=1)
        assert res["inf_est"] == pytest.approx(res["gamma1_length"], abs=1e-9)

    def test_large_eps_coarse_bounds(self):
        ubar = lambda p: 0.5 * np.ones(p.shape[0])
        res = higher_dim_J(5.0, ubar, level=2, refinements=1)
        L = res["gamma1_length"]
        assert res["inf_est"] >= L - 1e-9  # integrand is at least 1 on the arc
        assert res["inf_est"] <= L * np.sqrt(1.25) + 1e-9  # competitor u = 0

    def test_refinement_monotone(self):
        res = higher_dim_J(0.5, lambda p: 0.3 * np.ones(p.shape[0]), level=2, refinements=2)
        vals = [row["J"] for row in res["table"]]
        assert all(b <= a + 1e-6 for a, b in zip(vals, vals[1:]))

    def test_overlapping_arcs_rejected(self):
        with pytest.raises(ValueError, match="overlap"):
            higher_dim_J(0.5, lambda p: np.zeros(p.shape[0]), gamma1_angles=(0.0, 1.0),
                         gamma0_angles=(0.5, 2.0), level=1, refinements=0)
