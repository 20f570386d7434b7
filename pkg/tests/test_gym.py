import numpy as np
import pytest

from bvgym.gym import (
    GenerationError,
    GenYoungMeasure,
    OrthogonalityError,
    atom_moment,
    boundary_rank_one_report,
    check_characterization,
    combine_orthogonal,
    default_dictionary,
    default_qslb_family,
    dirac_gym,
    first_moment,
    from_diperna_majda,
    generate,
    generate_from_fields,
    gym_traces,
    pairing,
    pairing_spatial,
    reconstruct_underlying,
    split,
    to_diperna_majda,
)
from bvgym.integrands import hom_linear, make_integrand
from bvgym.measures import Atom, BVField, DiscreteMeasure, weakstar_gap
from bvgym.meshes import disk_mesh, interval_mesh
from bvgym.relax import toy_field, toy_limit_gym

from conftest import ONE, X, XSQ, oscillation_field, random_gym, resample, union_mesh

EPS = 0.5
ABS = make_integrand("abs")


def toy_weight_fn(x):
    return (np.asarray(x, dtype=float) - 1.0) ** 2 + EPS


class TestPairing:
    def test_trivial_measure(self, unit_mesh):
        gm = dirac_gym(unit_mesh, 0.0)
        v = make_integrand("euclid_sqrt1p")
        assert pairing(gm, ONE, v) == pytest.approx(float(v(0.0)))  # |domain| = 1

    def test_point_concentration(self, unit_mesh):
        # (delta_0, mass * delta_{x0}, delta_dir): oscillation part vanishes for |.|
        mass = 0.8
        gm = GenYoungMeasure(
            unit_mesh,
            np.array([[[0.0]]]),
            np.ones((unit_mesh.ncells, 1)),
            np.zeros(unit_mesh.ncells),
            ((0.0, mass),),
            np.array([[[1.0]]]),
            np.ones((unit_mesh.ncells, 1)),
            np.array([[1.0]]),
        )
        g = lambda x: 2.0 + np.asarray(x, dtype=float)
        assert pairing(gm, g, ABS) == pytest.approx(mass * 2.0)

    def test_toy_limit_weighted(self):
        gm = toy_limit_gym(EPS)
        assert pairing(gm, toy_weight_fn, ABS) == pytest.approx(EPS * (1 - EPS), abs=1e-14)

    def test_missing_recession(self, unit_mesh):
        with pytest.raises(ValueError, match="recession required"):
            pairing(dirac_gym(unit_mesh, 0.0), ONE, make_integrand("sq"))

    def test_linearity_in_g_and_v(self):
        rng = np.random.default_rng(0)
        gm = random_gym(rng)
        v1, v2 = ABS, make_integrand("euclid_sqrt1p")
        lhs = pairing(gm, lambda x: 2.0 * XSQ(x) + X(x), v1)
        rhs = 2.0 * pairing(gm, XSQ, v1) + pairing(gm, X, v1)
        assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_spatial_pairing_non_separable(self):
        # f(x, A) = (1 + x)|A| evaluated through the generic spatial path must
        # match the separable weighted path
        from bvgym.integrands import SpatialIntegrand, mat_norm, weighted_tv_integrand

        w = lambda x: 1.0 + np.asarray(x, dtype=float)
        generic = SpatialIntegrand(
            (1, 1),
            fn=lambda x, A: w(x) * mat_norm(A),
            recession_fn=lambda x, S: w(x) * mat_norm(S),
            growth_c=2.0,
        )
        separable = weighted_tv_integrand(w)
        gm = toy_limit_gym(EPS)
        assert pairing_spatial(gm, generic) == pytest.approx(
            pairing_spatial(gm, separable), abs=1e-12
        )


class TestGenerate:
    def test_constant_sequence_exact(self):
        mesh = interval_mesh(0, 1, 8)
        seq = [BVField.affine(mesh, 2.0, 0.0).derivative()] * 3
        gm, report = generate(seq, matrix_grid=np.array([[[0.0]], [[2.0]]]), tol=1e-12)
        assert report["max_gap"] <= 1e-12
        assert np.allclose(gm.nu[:, 1], 1.0)
        assert gm.lam().total_variation() == 0.0

    def test_toy_sequence(self):
        fields = [toy_field(n, EPS) for n in (100, 300, 1000)]
        gm, report = generate_from_fields(fields, window_h=1 / 32)
        assert report["converged"]
        ((p, m),) = gm.lam_atoms
        assert p == 1.0 and m == pytest.approx(1 - EPS, abs=1e-9)
        assert atom_moment(gm, 0)[0, 0] == pytest.approx(1.0)  # direction +1
        zi = int(np.argmin(np.abs(gm.matrix_grid[:, 0, 0])))
        assert np.allclose(gm.nu[:, zi], 1.0)  # oscillation part is delta_0

    def test_oscillation_sequence(self):
        fields = [oscillation_field(k) for k in (16, 32, 64)]
        gm, report = generate_from_fields(fields, window_h=1 / 16)
        assert report["converged"]
        ip = int(np.argmin(np.abs(gm.matrix_grid[:, 0, 0] - 1.0)))
        im = int(np.argmin(np.abs(gm.matrix_grid[:, 0, 0] + 1.0)))
        assert np.allclose(gm.nu[:, ip], 0.5, atol=1e-12)
        assert np.allclose(gm.nu[:, im], 0.5, atol=1e-12)
        assert not gm.lam_atoms

    def test_nonconvergent_sequence_rejected(self):
        mesh = interval_mesh(0, 1, 8)
        seq = [
            BVField.affine(mesh, 2.0, 0.0).derivative(),
            BVField.affine(mesh, -2.0, 0.0).derivative(),
            BVField.affine(mesh, 2.0, 0.0).derivative(),
            BVField.affine(mesh, -2.0, 0.0).derivative(),
        ]
        with pytest.raises(GenerationError, match="does not generate"):
            generate(seq, matrix_grid=np.array([[[0.0]], [[-2.0]], [[2.0]]]), tol=1e-3)

    def test_first_moment_matches_weakstar_limit(self):
        # the center of mass of the constructed limit tracks Du_n weak*
        gm = toy_limit_gym(EPS)
        mom = first_moment(gm)
        seq = [toy_field(n, EPS).derivative() for n in (10, 100, 1000)]
        assert weakstar_gap(seq, mom, [ONE, X, XSQ]) <= 1e-2


class TestSplit:
    def test_interior_only_measure(self):
        rng = np.random.default_rng(1)
        gm = random_gym(rng, with_boundary=False)
        inner, boundary = split(gm)
        assert not boundary.lam_atoms
        assert boundary.lam().total_variation() == 0.0

    def test_toy_limit_split(self):
        gm = toy_limit_gym(EPS)
        inner, boundary = split(gm)
        assert not inner.lam_atoms
        ((p, m),) = boundary.lam_atoms
        assert p == 1.0 and m == pytest.approx(1 - EPS)

    def test_identity_exact_on_random_measures(self):
        rng = np.random.default_rng(42)
        vs = [ABS, make_integrand("euclid_sqrt1p"), make_integrand("id")]
        for _ in range(20):
            gm = random_gym(rng)
            inner, boundary = split(gm)
            for g in (ONE, X, XSQ):
                for v in vs:
                    lhs = pairing(gm, g, v)
                    v0_term = float(np.sum(gm.mesh.cell_integrals(g))) * float(v(0.0))
                    rhs = pairing(inner, g, v) + pairing(boundary, g, v) - v0_term
                    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


class TestCombineOrthogonal:
    def _boundary_and_interior(self):
        fields_b = [toy_field(n, EPS) for n in (100, 400, 1600)]
        fields_b = [BVField(u.mesh, u.values - EPS / 2) for u in fields_b]
        fields_i = [oscillation_field(k, support=(0.25, 0.75)) for k in (8, 16, 32)]
        grid = np.linspace(-4, 4, 129).reshape(-1, 1, 1)
        kw = dict(window_h=1 / 16, matrix_grid=grid, tol=5e-2)
        psi, _ = generate_from_fields(fields_b, **kw)
        theta, _ = generate_from_fields(fields_i, **kw)
        return psi, theta, fields_b, fields_i

    def test_trivial_second_factor(self, unit_mesh):
        psi = dirac_gym(unit_mesh, 1.5, matrix_grid=np.array([[[0.0]], [[1.5]]]))
        theta = dirac_gym(unit_mesh, 0.0, matrix_grid=np.array([[[0.0]], [[1.5]]]))
        out = combine_orthogonal(psi, theta, lambda x: True, lambda x: False)
        assert np.allclose(out.nu, psi.nu)

    def test_boundary_plus_interior_additivity(self):
        psi, theta, fb, fi = self._boundary_and_interior()
        in_S = lambda x: x >= 7 / 8
        in_T = lambda x: x < 7 / 8
        comb = combine_orthogonal(psi, theta, in_S, in_T)
        summed = []
        for a, b in zip(fb, fi):
            mesh = union_mesh(a.mesh, b.mesh)
            summed.append(resample(a, mesh) + resample(b, mesh))
        gen, report = generate_from_fields(
            summed, window_h=1 / 16, matrix_grid=np.linspace(-4, 4, 129).reshape(-1, 1, 1), tol=5e-2
        )
        for label, g, v in default_dictionary((1, 1)):
            assert abs(pairing(gen, g, v) - pairing(comb, g, v)) <= 1e-3, label

    def test_orthogonality_violation_reports_cell(self):
        rng = np.random.default_rng(2)
        gm = random_gym(rng)  # oscillating everywhere: not trivial on any set
        with pytest.raises(OrthogonalityError, match="cell"):
            combine_orthogonal(gm, gm, lambda x: x < 0.5, lambda x: x >= 0.5)

    def test_swap_is_symmetric(self):
        psi, theta, _, _ = self._boundary_and_interior()
        in_S = lambda x: x >= 7 / 8
        in_T = lambda x: x < 7 / 8
        a = combine_orthogonal(psi, theta, in_S, in_T)
        b = combine_orthogonal(theta, psi, in_T, in_S)
        for label, g, v in default_dictionary((1, 1)):
            assert pairing(a, g, v) == pytest.approx(pairing(b, g, v), abs=1e-14)


class TestFirstMoment:
    def test_dirac(self, unit_mesh):
        gm = dirac_gym(unit_mesh, 2.0)
        mom = first_moment(gm)
        assert np.allclose(mom.density, 2.0)
        assert not mom.atoms

    def test_toy_limit(self):
        mom = first_moment(toy_limit_gym(EPS))
        assert np.allclose(mom.density, 0.0)
        (atom,) = mom.atoms
        assert atom.mass == pytest.approx(1 - EPS)
        assert float(atom.direction[0, 0]) == 1.0

    def test_symmetric_oscillation_cancels(self):
        mesh = interval_mesh(0, 1, 4)
        grid = np.array([[[-1.0]], [[1.0]]])
        nu = np.full((mesh.ncells, 2), 0.5)
        gm = GenYoungMeasure(
            mesh, grid, nu, np.zeros(mesh.ncells), (), np.array([[[1.0]]]),
            np.ones((mesh.ncells, 1)), np.zeros((0, 1)),
        )
        assert np.allclose(first_moment(gm).density, 0.0)

    def test_boundary_rank_one_of_generated(self):
        fields = [toy_field(n, EPS) for n in (100, 1000)]
        gm, _ = generate_from_fields(fields, tol=5e-2, tail=2)
        report = boundary_rank_one_report(gm)
        assert report and all(r["ok"] for r in report)


class TestDiPernaMajda:
    def test_trivial_measure(self, unit_mesh):
        dm = to_diperna_majda(dirac_gym(unit_mesh, 0.0))
        assert np.allclose(dm.sigma_density, 1.0)  # sigma = Lebesgue
        assert np.allclose(dm.nuhat_sphere, 0.0)

    def test_point_concentration_masses(self):
        # gradient concentration at x = 0 with total mass 0.6
        mass = 0.6
        fields = []
        for k in (8, 32, 128):
            mesh = interval_mesh(0, 1, 16, extra_nodes=(1.0 / k,))
            nodal = mass * np.maximum(0.0, 1.0 - k * mesh.nodes)
            fields.append(BVField.from_nodal(mesh, nodal))
        gm, _ = generate_from_fields(fields, window_h=1 / 16, tol=5e-2)
        dm = to_diperna_majda(gm)
        assert np.allclose(dm.sigma_density, 1.0, atol=1e-2)
        ((p, m),) = dm.sigma_atoms
        assert p == 0.0 and m == pytest.approx(mass, abs=1e-2)
        # at the atom the whole mass sits at infinity
        assert np.sum(dm.nuhat_atom_sphere[0]) == pytest.approx(1.0)

    def test_round_trip_preserves_pairings(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            gm = random_gym(rng)
            dm = to_diperna_majda(gm)
            back = from_diperna_majda(dm)
            for label, g, v in default_dictionary((1, 1)):
                p0 = pairing(gm, g, v)
                assert abs(p0 - dm.pairing(g, v)) <= 1e-10 * max(1.0, abs(p0)), label
                assert abs(p0 - pairing(back, g, v)) <= 1e-10 * max(1.0, abs(p0)), label

    def test_inversion_needs_lebesgue_density(self):
        gm = toy_limit_gym(EPS)
        dm = to_diperna_majda(gm)
        bad = type(dm)(
            dm.mesh,
            dm.matrix_grid,
            dm.sphere_grid,
            np.zeros_like(dm.sigma_density),
            dm.sigma_atoms,
            np.zeros_like(dm.nuhat_interior),
            np.ones_like(dm.nuhat_sphere) / dm.nuhat_sphere.shape[1],
            dm.nuhat_atom_sphere,
        )
        with pytest.raises(ValueError, match="inversion error"):
            from_diperna_majda(bad)

    def test_record_round_trip(self):
        gm = toy_limit_gym(EPS)
        dm = to_diperna_majda(gm)
        back = type(dm).from_record(dm.to_record())
        assert np.allclose(back.sigma_density, dm.sigma_density)


class TestCharacterization:
    def test_generated_toy_passes(self):
        fields = [toy_field(n, EPS) for n in (100, 300, 1000)]
        gm, _ = generate_from_fields(fields)
        report = check_characterization(gm, gm.underlying)
        assert report["all_pass"]
        assert report["ii"]["worst"] >= -1e-6
        assert report["iv"]["worst"] >= -1e-6

    def test_dirac_equalities(self, unit_mesh):
        gm = dirac_gym(unit_mesh, 1.7)
        u = BVField.affine(unit_mesh, 1.7, 0.0)
        report = check_characterization(gm, u)
        assert report["all_pass"]
        assert abs(report["ii"]["worst"]) <= 1e-12

    def test_tangential_boundary_direction_flagged(self):
        # 2D: boundary concentration with direction a x tau (tau tangent) violates
        # the sign condition against the tangential-form witnesses
        mesh = disk_mesh(2)
        x0 = mesh.vertices[mesh.boundary_nodes[0]].copy()
        rho = x0 / np.linalg.norm(x0)
        tau = np.array([-rho[1], rho[0]])
        grid = np.array([np.zeros((1, 2))])
        sphere = np.array([tau.reshape(1, 2)])  # direction 1 x tau
        nu = np.ones((mesh.ncells, 1))
        gm = GenYoungMeasure(
            mesh, grid, nu, np.zeros(mesh.ncells), ((x0, 0.5),), sphere,
            np.ones((mesh.ncells, 1)), np.array([[1.0]]),
        )
        from bvgym.measures import DiskField

        u = DiskField(mesh, np.zeros(mesh.vertices.shape[0]))
        report = check_characterization(gm, u)
        assert not report["iv"]["pass"]
        assert report["iv"]["violations"]
        # the witness integrand is quasi-sublinear from below at this normal
        from bvgym.boundary import qslb_infimum

        worst = min(report["iv"]["violations"], key=lambda r: r["value"])
        fam = default_qslb_family(x0, rho, (1, 2))
        names = [h.name for h in fam]
        assert worst["integrand"] in names
        witness = fam[names.index(worst["integrand"])]
        assert qslb_infimum(witness, rho, mesh_level=2, iter_budget=400)["verdict"] == "qslb"

    def test_empty_family_rejected(self, unit_mesh):
        gm = dirac_gym(unit_mesh, 0.0)
        with pytest.raises(ValueError, match="empty"):
            check_characterization(gm, BVField.constant(unit_mesh, 0.0), family=[])


class TestTraces:
    def test_no_boundary_concentration(self, unit_mesh):
        gm = dirac_gym(unit_mesh, 0.5)
        u = BVField.affine(unit_mesh, 0.5, 0.0)
        tr = gym_traces(gm, u)
        for x in tr["inner"]:
            assert np.allclose(tr["inner"][x], tr["outer"][x])

    def test_toy_limit_traces(self):
        tr = gym_traces(toy_limit_gym(EPS))
        assert tr["inner"][0.0][0] == pytest.approx(EPS / 2)
        assert tr["inner"][1.0][0] == pytest.approx(EPS / 2)
        assert tr["outer"][0.0][0] == pytest.approx(EPS / 2)
        assert tr["outer"][1.0][0] == pytest.approx(1 - EPS / 2)

    def test_interior_concentration_ignored(self):
        mesh = interval_mesh(0, 1, 8)
        gm = GenYoungMeasure(
            mesh,
            np.array([[[0.0]]]),
            np.ones((mesh.ncells, 1)),
            np.zeros(mesh.ncells),
            ((0.5, 0.9),),
            np.array([[[1.0]]]),
            np.ones((mesh.ncells, 1)),
            np.array([[1.0]]),
        )
        u = BVField.constant(mesh, 0.3)
        tr = gym_traces(gm, u)
        assert np.allclose(tr["outer"][0.0], 0.3) and np.allclose(tr["outer"][1.0], 0.3)

    def test_requires_underlying(self, unit_mesh):
        gm = dirac_gym(unit_mesh, 0.0)
        with pytest.raises(ValueError, match="not a gradient"):
            gym_traces(gm)

    def test_strong_inner_trace_convergence_surrogate(self):
        # lam vanishes near the boundary: traces of the sequence are L1-Cauchy
        fields = [oscillation_field(k, support=(0.25, 0.75)) for k in (8, 16, 32, 64)]
        traces = [np.concatenate(u.trace()) for u in fields]
        dists = [float(np.max(np.abs(a - b))) for a, b in zip(traces, traces[1:])]
        assert all(d2 <= d1 + 1e-12 for d1, d2 in zip(dists, dists[1:]))
        assert dists[-1] <= 1e-12


class TestSerialization:
    def test_gym_record_round_trip(self):
        gm = toy_limit_gym(EPS)
        back = GenYoungMeasure.from_record(gm.to_record())
        for label, g, v in default_dictionary((1, 1)):
            assert pairing(back, g, v) == pytest.approx(pairing(gm, g, v), abs=1e-14)
        assert back.underlying is not None

    def test_reconstruct_underlying_from_moment(self):
        fields = [toy_field(n, EPS) for n in (100, 1000)]
        gm, _ = generate_from_fields(fields, tol=5e-2, tail=2)
        u = reconstruct_underlying(gm, anchor_mean=np.array([EPS / 2]))
        lo, hi = u.trace()
        assert float(lo[0]) == pytest.approx(EPS / 2, abs=1e-12)
        assert float(hi[0]) == pytest.approx(EPS / 2, abs=1e-12)
