"""Boundary quasiconvexity verifiers on the unit half-ball.

For a 1-homogeneous integrand v and a unit normal rho, quasi-sublinear
growth from below (qslb) holds iff the integral of v(grad phi) over the
half-ball D_rho = B intersect {x . rho < 0} is nonnegative for every test
field vanishing on the sphere.  1-homogeneity makes the sign of the infimum
over the unit total-variation ball scale-invariant, so the verdict reduces
to the sign of a normalized finite-element minimization.  In 1D the infimum
is a closed-form minimum over directions.

Verdicts are numerical, not certificates: only falsification ("not_qslb",
or a Jensen counterexample for jqcb) is certain; "inconclusive" is a
first-class outcome.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .integrands import HomogeneousIntegrand, mat_norm, unit_matrices
from .meshes import TriMesh, disk_mesh, rotation_to

BASE_NORMAL = np.array([1.0, 0.0])


class NotHomogeneousError(ValueError):
    pass


def validate_homogeneous(v: HomogeneousIntegrand, tol: float = 1e-8) -> None:
    P = unit_matrices(v.dims, 8)
    for alpha in (0.5, 2.0):
        lhs = np.asarray(v(alpha * P))
        rhs = alpha * np.asarray(v(P))
        if np.max(np.abs(lhs - rhs)) > tol * (1.0 + np.max(np.abs(rhs))):
            raise NotHomogeneousError("integrand is not positively 1-homogeneous")


@dataclass(frozen=True)
class SphereMeasure:
    """Nonnegative atomic measure on the unit sphere of matrices."""

    points: np.ndarray  # (K, M, N), unit norm
    weights: np.ndarray  # (K,), >= 0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.min(w, initial=0.0) < 0:
            raise ValueError("sphere measure weights must be nonnegative")
        object.__setattr__(self, "weights", w)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def pair(self, v: HomogeneousIntegrand) -> float:
        if self.weights.size == 0:
            return 0.0
        return float(self.weights @ np.asarray(v.on_sphere(self.points)))

    def normalized(self) -> "SphereMeasure":
        m = self.total_mass
        if m <= 0:
            raise ValueError("zero-mass measure cannot be normalized")
        return SphereMeasure(self.points, self.weights / m)


@dataclass(frozen=True)
class PAField:
    """Piecewise-affine vector field on its own triangulation."""

    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3)
    values: np.ndarray  # (nv, M)

    def _geom(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        areas = 0.5 * np.abs(det)
        grads = np.empty((self.triangles.shape[0], 3, 2))
        grads[:, 1, 0] = d2[:, 1] / det
        grads[:, 1, 1] = -d2[:, 0] / det
        grads[:, 2, 0] = -d1[:, 1] / det
        grads[:, 2, 1] = d1[:, 0] / det
        grads[:, 0] = -grads[:, 1] - grads[:, 2]
        return areas, grads

    def gradients(self) -> tuple[np.ndarray, np.ndarray]:
        """(areas, per-triangle gradients (nt, M, 2))."""
        areas, basis = self._geom()
        vals = self.values if self.values.ndim == 2 else self.values[:, None]
        return areas, np.einsum("tiM,tid->tMd", vals[self.triangles], basis)

    def total_variation(self) -> float:
        areas, grads = self.gradients()
        return float(np.sum(areas * mat_norm(grads)))

    def mean_gradient(self) -> np.ndarray:
        areas, grads = self.gradients()
        return np.einsum("t,tMd->Md", areas, grads)


class HalfBallProblem:
    """P1 test space on a triangulated ball, integration over D_rho only.

    The disk mesh is the rotated image of a fixed base mesh whose dividing
    diameter is a mesh line, so the half-ball is a clean union of triangles
    and problems for different normals are exactly isometric.
    """

    def __init__(self, normal, level: int = 3, ncomp: int = 1):
        normal = np.atleast_1d(np.asarray(normal, dtype=float))
        normal = normal / np.linalg.norm(normal)
        self.normal = normal
        self.level = level
        self.ncomp = ncomp
        if normal.size != 2:
            raise ValueError("HalfBallProblem meshes are 2D; use the closed-form 1D path")
        self.rot = rotation_to(BASE_NORMAL, normal)
        self.mesh: TriMesh = disk_mesh(level, rotation=self.rot)
        base = disk_mesh(level)  # selection in base coordinates is exact
        centers = base.cell_centers
        self.sel = np.nonzero(centers[:, 0] < 0)[0]
        self.tri = self.mesh.triangles[self.sel]
        areas, basis = self.mesh._geometry()
        self.areas = areas[self.sel]
        self.basis = basis[self.sel]
        free = np.ones(self.mesh.vertices.shape[0], dtype=bool)
        free[self.mesh.boundary_nodes] = False
        self.free = free
        # base-frame coordinates (s along the normal, t tangential)
        self.coord_s = self.mesh.vertices @ normal
        tau = np.array([-normal[1], normal[0]])
        self.coord_t = self.mesh.vertices @ tau
        self.tau = tau

    # -- field algebra -------------------------------------------------
    def zeroed(self, U: np.ndarray) -> np.ndarray:
        U = np.array(U, dtype=float)
        if U.ndim == 1:
            U = U[:, None]
        U[~self.free] = 0.0
        return U

    def gradients(self, U: np.ndarray) -> np.ndarray:
        return np.einsum("tiM,tid->tMd", U[self.tri], self.basis)

    def objective(self, U: np.ndarray, v: HomogeneousIntegrand) -> float:
        return float(self.areas @ np.asarray(v(self.gradients(U))))

    def tv(self, U: np.ndarray) -> float:
        return float(self.areas @ mat_norm(self.gradients(U)))

    def nodal_gradient(self, dJdG: np.ndarray) -> np.ndarray:
        out = np.zeros((self.mesh.vertices.shape[0], self.ncomp))
        contrib = np.einsum("t,tMd,tid->tiM", self.areas, dJdG, self.basis)
        np.add.at(out, self.tri, contrib)
        out[~self.free] = 0.0
        return out

    def field(self, U: np.ndarray) -> PAField:
        """Restriction of the nodal field to the half-ball triangles."""
        U = self.zeroed(U)
        used = np.unique(self.tri)
        remap = -np.ones(self.mesh.vertices.shape[0], dtype=int)
        remap[used] = np.arange(used.size)
        return PAField(self.mesh.vertices[used], remap[self.tri], U[used])

    # -- seed fields ---------------------------------------------------
    def tent(self, a, depth: float = 0.25, halfwidth: float = 0.8) -> np.ndarray:
        """Rank-one seeded bump: gradient ~ a x normal in a slab below the flat part."""
        a = np.atleast_1d(np.asarray(a, dtype=float))
        ramp = np.clip(1.0 + self.coord_s / depth, 0.0, 1.0)
        cut = np.clip(1.0 - np.abs(self.coord_t) / halfwidth, 0.0, 1.0)
        U = np.outer(ramp * cut, a)
        return self.zeroed(U)

    def laminate(self, a, period: float = 0.25, direction: np.ndarray | None = None) -> np.ndarray:
        a = np.atleast_1d(np.asarray(a, dtype=float))
        d = direction if direction is not None else self.tau
        phase = (self.mesh.vertices @ d) / period
        zig = np.abs(phase - np.floor(phase) - 0.5) * period
        bump = np.clip(1.0 - np.abs(self.coord_s + 0.4) / 0.35, 0.0, 1.0) * np.clip(
            1.0 - np.abs(self.coord_t) / 0.7, 0.0, 1.0
        )
        return self.zeroed(np.outer(zig * bump, a))

    def random_seed(self, rng: np.random.Generator) -> np.ndarray:
        r = np.linalg.norm(self.mesh.vertices, axis=1)
        U = rng.standard_normal((self.mesh.vertices.shape[0], self.ncomp))
        return self.zeroed(U * np.clip(1.0 - r, 0.0, 1.0)[:, None])


def _fd_grad(v: HomogeneousIntegrand, G: np.ndarray) -> np.ndarray:
    """dv/dA per triangle, analytic when available, else central differences."""
    gf = getattr(v, "grad_fn", None)
    if callable(gf):
        return np.asarray(gf(G))
    out = np.zeros_like(G)
    h = 1e-6
    for m in range(G.shape[1]):
        for d in range(G.shape[2]):
            Gp = G.copy()
            Gp[:, m, d] += h
            Gm = G.copy()
            Gm[:, m, d] -= h
            out[:, m, d] = (np.asarray(v(Gp)) - np.asarray(v(Gm))) / (2 * h)
    return out


def _descend(hb: HalfBallProblem, v: HomogeneousIntegrand, U0: np.ndarray, iters: int):
    U = hb.zeroed(U0)
    tv = hb.tv(U)
    if tv < 1e-12:
        return None
    U = U / tv
    best = hb.objective(U, v)
    bestU = U.copy()
    for k in range(iters):
        dJdG = _fd_grad(v, hb.gradients(U))
        g = hb.nodal_gradient(dJdG)
        gn = float(np.linalg.norm(g))
        if gn < 1e-14:
            break
        step = 0.3 * float(np.linalg.norm(U)) / (gn * np.sqrt(k + 1.0))
        U = U - step * g
        tv = hb.tv(U)
        if tv < 1e-12:
            break
        U = U / tv
        val = hb.objective(U, v)
        if val < best:
            best = val
            bestU = U.copy()
    return best, bestU


def _qslb_inf_1d(v: HomogeneousIntegrand, n_dirs: int = 512) -> tuple[float, np.ndarray]:
    """Closed-form endpoint calculus: the infimum over the unit TV ball equals
    the minimum of v over the unit sphere of column matrices."""
    M = v.dims[0]
    if M == 1:
        cands = np.array([[[1.0]], [[-1.0]]])
    else:
        cands = unit_matrices((M, 1), n_dirs)
    vals = np.asarray(v.on_sphere(cands))
    i = int(np.argmin(vals))
    return float(vals[i]), cands[i]


def qslb_infimum(
    v: HomogeneousIntegrand,
    rho,
    mesh_level: int = 3,
    iter_budget: int = 2000,
    tol: float = 1e-4,
    seed: int = 0,
) -> dict:
    """Numerical verdict on quasi-sublinear growth from below at the normal rho.

    Minimizes the half-ball integral of v over the unit total-variation ball
    of piecewise-affine test fields, restarting from rank-one seeded tents.
    Returns {"inf_est", "verdict", "witness", "per_level"}; "qslb" requires
    inf_est >= -tol across levels, "not_qslb" needs a level reaching -10 tol,
    anything else is "inconclusive".
    """
    validate_homogeneous(v)
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    M, N = v.dims
    if rho.size == 1 or N == 1:
        val, direction = _qslb_inf_1d(v)
        verdict = "qslb" if val >= -tol else ("not_qslb" if val <= -10 * tol else "inconclusive")
        return {"inf_est": val, "verdict": verdict, "witness": None,
                "worst_direction": direction, "per_level": [val]}

    rng = np.random.default_rng(seed)
    per_level = []
    witness = None
    best_all = np.inf
    levels = list(range(1, mesh_level + 1))
    dirs = unit_matrices((M, 1), 8).reshape(-1, M)
    for lev in levels:
        hb = HalfBallProblem(rho, level=lev, ncomp=M)
        seeds = [hb.tent(a, depth, 0.8) for a in dirs for depth in (0.2, 0.4)]
        seeds += [hb.random_seed(rng) for _ in range(2)]
        iters = max(10, iter_budget // (len(levels) * len(seeds)))
        best = np.inf
        bestU = None
        for U0 in seeds:
            res = _descend(hb, v, U0, iters)
            if res is None:
                continue
            val, U = res
            if val < best:
                best, bestU = val, U
        per_level.append(best)
        if best < best_all:
            best_all = best
            witness = hb.field(bestU) if bestU is not None else None
    if any(b <= -10 * tol for b in per_level):
        verdict = "not_qslb"
    elif all(b >= -tol for b in per_level):
        verdict = "qslb"
        witness = None
    else:
        verdict = "inconclusive"
    return {"inf_est": float(best_all), "verdict": verdict, "witness": witness, "per_level": per_level}


def rank_one_positivity(v: HomogeneousIntegrand, rho, a_samples=None, tol: float = 1e-8) -> dict:
    """Necessary sign condition: v(a x rho) >= 0 on sampled unit vectors a."""
    validate_homogeneous(v)
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    M = v.dims[0]
    if a_samples is None:
        if M == 1:
            a_samples = np.array([[1.0], [-1.0]])
        else:
            a_samples = unit_matrices((M, 1), 128).reshape(-1, M)
    worst_val = np.inf
    worst_a = None
    for a in np.asarray(a_samples, dtype=float):
        A = np.outer(a, rho)
        nA = float(mat_norm(A))
        val = float(v(A)) / nA if nA > 0 else 0.0
        if val < worst_val:
            worst_val, worst_a = val, a
    return {"ok": worst_val >= -tol, "worst": (worst_a, worst_val)}


def jqcb_falsify(
    v: HomogeneousIntegrand,
    rho,
    budget: int = 400,
    tol: float = 1e-8,
    mesh_level: int = 3,
    seed: int = 0,
) -> dict:
    """Search for a Jensen violation v(avg grad) > avg v(grad) on the half-ball.

    Returns {"counterexample": field-or-None, "gap": best gap}.  Absence of a
    counterexample means "not disproved", never "holds".
    """
    validate_homogeneous(v)
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    M, N = v.dims
    if rho.size == 1 or N == 1:
        # two-slope profiles on the half-interval
        dirs = unit_matrices((M, 1), 16)
        best_gap, best = -np.inf, None
        for s1 in dirs:
            for s2 in dirs:
                for t in (0.25, 0.5, 0.75):
                    for m2 in (0.5, 1.0, 2.0):
                        avg = t * s1 + (1 - t) * m2 * s2
                        gap = float(v(avg)) - (t * float(v(s1)) + (1 - t) * m2 * float(v(s2)))
                        if gap > best_gap:
                            best_gap, best = gap, {"slopes": (s1, m2 * s2), "t": t}
        if best_gap > tol:
            return {"counterexample": best, "gap": best_gap}
        return {"counterexample": None, "gap": best_gap}

    rng = np.random.default_rng(seed)
    hb = HalfBallProblem(rho, level=mesh_level, ncomp=M)
    dirs = unit_matrices((M, 1), 8).reshape(-1, M)
    library = [hb.tent(a, d, w) for a in dirs for d in (0.2, 0.4) for w in (0.5, 0.8)]
    library += [hb.laminate(a) for a in dirs]
    library += [hb.random_seed(rng) for _ in range(4)]
    best_gap, best_field = -np.inf, None
    for U in library[: max(1, budget)]:
        pa = hb.field(U)
        areas, grads = pa.gradients()
        avg = np.einsum("t,tMd->Md", areas, grads)
        gap = float(v(avg)) - float(areas @ np.asarray(v(grads)))
        if gap > best_gap:
            best_gap, best_field = gap, pa
    if best_gap > tol:
        return {"counterexample": best_field, "gap": best_gap}
    return {"counterexample": None, "gap": best_gap}


def rotated_integrand(v: HomogeneousIntegrand, R: np.ndarray) -> HomogeneousIntegrand:
    """A |-> v(A R), the integrand seen from a rotated boundary frame."""
    R = np.asarray(R, dtype=float)

    def sphere(S, R=R):
        return v.on_sphere(S @ R)

    out = HomogeneousIntegrand(v.dims, sphere, name=f"{v.name}∘R")
    gf = getattr(v, "grad_fn", None)
    if callable(gf):
        object.__setattr__(out, "grad_fn", lambda A, R=R, gf=gf: np.asarray(gf(A @ R)) @ R.T)
    return out


def rotation_equivariance_check(
    v: HomogeneousIntegrand,
    rho1,
    rho2,
    mesh_level: int = 2,
    iter_budget: int = 600,
    seed: int = 0,
) -> dict:
    """Gap between the half-ball infimum at rho1 and the rotated problem at rho2.

    The rotated problem uses A |-> v(A R) with rho2 = R rho1 on the image mesh,
    which is exactly isometric to the original, so the gap is float noise.
    """
    rho1 = np.asarray(rho1, dtype=float)
    rho2 = np.asarray(rho2, dtype=float)
    R = rotation_to(rho1 / np.linalg.norm(rho1), rho2 / np.linalg.norm(rho2))
    r1 = qslb_infimum(v, rho1, mesh_level, iter_budget, seed=seed)
    r2 = qslb_infimum(rotated_integrand(v, R), rho2, mesh_level, iter_budget, seed=seed)
    return {"gap": abs(r1["inf_est"] - r2["inf_est"]), "inf1": r1["inf_est"], "inf2": r2["inf_est"]}


# ---------------------------------------------------------------------------
# sphere measures generated by concentrating test fields


def hrho_element(field, rho=None, merge_tol: float = 1e-12) -> SphereMeasure:
    """Pushforward of |grad phi| Lebesgue through the direction map.

    `field` is a PAField (already restricted to the half-ball) or a
    (HalfBallProblem, nodal values) pair.  Total mass equals the half-ball
    total variation of the field.
    """
    if isinstance(field, tuple):
        hb, U = field
        field = hb.field(U)
    areas, grads = field.gradients()
    norms = mat_norm(grads)
    buckets: dict[tuple, tuple[float, np.ndarray]] = {}
    for t in range(grads.shape[0]):
        if norms[t] <= 0:
            continue
        d = grads[t] / norms[t]
        key = tuple(np.round(d.ravel() / merge_tol).astype(np.int64).tolist())
        w = float(areas[t] * norms[t])
        if key in buckets:
            w0, d0 = buckets[key]
            buckets[key] = (w0 + w, d0)
        else:
            buckets[key] = (w, d)
    if not buckets:
        M, N = grads.shape[1], grads.shape[2]
        return SphereMeasure(np.zeros((0, M, N)), np.zeros(0))
    pts = np.array([d for _, d in buckets.values()])
    ws = np.array([w for w, _ in buckets.values()])
    return SphereMeasure(pts, ws)


def hrho_convex_combination(hb: HalfBallProblem, U1: np.ndarray, U2: np.ndarray, t: float) -> PAField:
    """Test field realizing t d1 + (1-t) d2 via disjoint rescaled copies.

    Both fields are shrunk by 1/3 (values scaled by 3 to preserve the sphere
    measure exactly) and the second copy is translated along the flat part,
    so the supports are disjoint sub-half-balls of D_rho.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    pa1 = hb.field(U1)
    pa2 = hb.field(U2)
    x0 = 0.5 * hb.tau
    verts = np.concatenate([pa1.vertices / 3.0, x0[None, :] + pa2.vertices / 3.0])
    off = pa1.vertices.shape[0]
    tris = np.concatenate([pa1.triangles, pa2.triangles + off])
    v1 = pa1.values if pa1.values.ndim == 2 else pa1.values[:, None]
    v2 = pa2.values if pa2.values.ndim == 2 else pa2.values[:, None]
    vals = np.concatenate([3.0 * t * v1, 3.0 * (1.0 - t) * v2])
    return PAField(verts, tris, vals)
