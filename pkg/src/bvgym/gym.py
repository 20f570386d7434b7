"""Discrete generalized Young measures.

A triple (nu, lam, nu_inf) on a spatial mesh: `nu` is a per-cell probability
table over a matrix sample grid (oscillation), `lam` a nonnegative measure on
the closed domain (concentration mass, boundary atoms allowed), and `nu_inf`
a probability table over unit-sphere samples attached to every cell carrying
lam-density and to every lam-atom (concentration directions).

Pairings, splitting, orthogonal combination, empirical generation from
derivative-measure sequences, characterization checks, DiPerna-Majda
conversion, and measure traces all live here.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .integrands import HomogeneousIntegrand, Integrand, make_integrand, mat_norm
from .measures import Atom, BVField, DiscreteMeasure, _same_mesh
from .meshes import IntervalMesh, TriMesh, mesh_from_record

PROB_TOL = 1e-12


class GenerationError(ValueError):
    """A sequence fails to generate a measure at the requested resolution."""


class OrthogonalityError(ValueError):
    pass


@dataclass(frozen=True)
class GenYoungMeasure:
    mesh: IntervalMesh | TriMesh
    matrix_grid: np.ndarray  # (K, M, N)
    nu: np.ndarray  # (ncells, K), rows sum to 1
    lam_density: np.ndarray  # (ncells,), >= 0
    lam_atoms: tuple[tuple, ...]  # ((point, mass), ...) on the closure
    sphere_grid: np.ndarray  # (S, M, N), unit norm
    nu_inf_cells: np.ndarray  # (ncells, S), rows sum to 1 where lam_density > 0
    nu_inf_atoms: np.ndarray  # (natoms, S), rows sum to 1
    underlying: BVField | None = None

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=float)
        lamd = np.asarray(self.lam_density, dtype=float)
        nic = np.asarray(self.nu_inf_cells, dtype=float)
        nsph = np.asarray(self.sphere_grid).shape[0]
        nia = np.asarray(self.nu_inf_atoms, dtype=float).reshape(len(self.lam_atoms), nsph)
        if nu.shape != (self.mesh.ncells, self.matrix_grid.shape[0]):
            raise ValueError("nu must be (ncells, len(matrix_grid))")
        if np.max(np.abs(nu.sum(axis=1) - 1.0)) > PROB_TOL or np.min(nu) < -PROB_TOL:
            raise ValueError("nu rows must be probability vectors")
        if np.min(lamd) < -PROB_TOL:
            raise ValueError("lam must be nonnegative")
        carrying = lamd > 0
        if np.any(carrying) and np.max(np.abs(nic[carrying].sum(axis=1) - 1.0)) > PROB_TOL:
            raise ValueError("nu_inf rows must sum to 1 where lam has density")
        if len(self.lam_atoms) and (
            np.max(np.abs(nia.sum(axis=1) - 1.0)) > PROB_TOL or np.min(nia) < -PROB_TOL
        ):
            raise ValueError("nu_inf atom rows must be probability vectors")
        for _, m in self.lam_atoms:
            if m < -PROB_TOL:
                raise ValueError("lam must be nonnegative")
        sph = np.asarray(self.sphere_grid, dtype=float)
        if np.max(np.abs(mat_norm(sph) - 1.0)) > 1e-9:
            raise ValueError("sphere grid points must have unit norm")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "lam_density", lamd)
        object.__setattr__(self, "nu_inf_cells", nic)
        object.__setattr__(self, "nu_inf_atoms", nia)
        object.__setattr__(self, "lam_atoms", tuple((p, float(m)) for p, m in self.lam_atoms))

    @property
    def dims(self) -> tuple[int, int]:
        return self.matrix_grid.shape[1], self.matrix_grid.shape[2]

    def lam(self) -> DiscreteMeasure:
        atoms = tuple(Atom(p, m, 1.0) for p, m in self.lam_atoms if m > 0)
        return DiscreteMeasure(self.mesh, self.lam_density, atoms)

    def mass_norm(self) -> float:
        """<<Lambda, 1 x |.|>>, the finiteness quantity."""
        return pairing(self, _const_one, make_integrand("abs", self.dims))

    def with_underlying(self, u: BVField) -> "GenYoungMeasure":
        return dataclasses.replace(self, underlying=u)

    def boundary_atom_indices(self) -> list[int]:
        out = []
        for i, (p, _) in enumerate(self.lam_atoms):
            if _is_boundary_point(self.mesh, p):
                out.append(i)
        return out

    def to_record(self) -> dict:
        rec = {
            "mesh": self.mesh.to_record(),
            "matrix_grid": self.matrix_grid.tolist(),
            "nu": self.nu.tolist(),
            "lam_density": self.lam_density.tolist(),
            "lam_atoms": [[np.asarray(p).tolist(), m] for p, m in self.lam_atoms],
            "sphere_grid": self.sphere_grid.tolist(),
            "nu_inf_cells": self.nu_inf_cells.tolist(),
            "nu_inf_atoms": self.nu_inf_atoms.tolist(),
        }
        if self.underlying is not None:
            rec["underlying"] = self.underlying.to_record()
        return rec

    @staticmethod
    def from_record(rec: dict) -> "GenYoungMeasure":
        mesh = mesh_from_record(rec["mesh"])
        atoms = tuple((_point(p), float(m)) for p, m in rec["lam_atoms"])
        underlying = None
        if "underlying" in rec:
            underlying = BVField.from_record(rec["underlying"])
        return GenYoungMeasure(
            mesh,
            np.asarray(rec["matrix_grid"], dtype=float),
            np.asarray(rec["nu"], dtype=float),
            np.asarray(rec["lam_density"], dtype=float),
            atoms,
            np.asarray(rec["sphere_grid"], dtype=float),
            np.asarray(rec["nu_inf_cells"], dtype=float),
            np.asarray(rec["nu_inf_atoms"], dtype=float).reshape(len(atoms), -1),
            underlying,
        )


def _point(p):
    arr = np.asarray(p, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


def _is_boundary_point(mesh, p, tol=1e-12) -> bool:
    if mesh.dim == 1:
        x = float(np.asarray(p))
        return abs(x - mesh.a) <= tol or abs(x - mesh.b) <= tol
    bverts = mesh.vertices[mesh.boundary_nodes]
    return bool(np.min(np.linalg.norm(bverts - np.asarray(p)[None], axis=1)) <= 1e-9)


def _const_one(x):
    """Constant test function valid for 1D scalars/batches and 2D point arrays."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return 1.0
    if arr.ndim >= 2 and arr.shape[-1] == 2:
        return np.ones(arr.shape[:-1])
    return np.ones_like(arr)


def _eval_at_point(g: Callable, p) -> float:
    arr = np.asarray(p, dtype=float)
    if arr.ndim == 1:  # a 2D location; batch it for point-array style g
        return float(np.asarray(g(arr.reshape(1, -1))).ravel()[0])
    return float(g(arr))


def _grid_index(grid: np.ndarray, A: np.ndarray) -> int:
    d = mat_norm(grid - A[None])
    return int(np.argmin(d))


def _zero_index(grid: np.ndarray) -> int:
    i = _grid_index(grid, np.zeros(grid.shape[1:]))
    if mat_norm(grid[i]) > 1e-12:
        raise ValueError("matrix grid must contain the zero matrix")
    return i


def dirac_gym(
    mesh, A0, matrix_grid: np.ndarray | None = None, sphere_grid: np.ndarray | None = None
) -> GenYoungMeasure:
    """The trivial measure (delta_{A0}, 0, -) of a constant sequence."""
    A0 = np.asarray(A0, dtype=float)
    if A0.ndim == 0:
        A0 = A0.reshape(1, 1)
    if matrix_grid is None:
        matrix_grid = np.stack([np.zeros_like(A0), A0]) if mat_norm(A0) > 0 else A0[None]
    if sphere_grid is None:
        sphere_grid = default_sphere_grid(A0.shape)
    K = matrix_grid.shape[0]
    nu = np.zeros((mesh.ncells, K))
    nu[:, _grid_index(matrix_grid, A0)] = 1.0
    S = sphere_grid.shape[0]
    return GenYoungMeasure(
        mesh,
        matrix_grid,
        nu,
        np.zeros(mesh.ncells),
        (),
        sphere_grid,
        np.full((mesh.ncells, S), 1.0 / S),
        np.zeros((0, S)),
    )


def default_matrix_grid(dims=(1, 1), radius: float = 4.0, n: int = 129) -> np.ndarray:
    M, N = dims
    if (M, N) == (1, 1):
        return np.linspace(-radius, radius, n).reshape(-1, 1, 1)
    from .integrands import unit_matrices

    dirs = unit_matrices(dims, 16)
    mags = np.linspace(0.0, radius, max(2, n // 16))
    grid = [np.zeros((M, N))]
    for r in mags[1:]:
        grid += [r * d for d in dirs]
    return np.array(grid)


def default_sphere_grid(dims=(1, 1), n: int = 32) -> np.ndarray:
    from .integrands import unit_matrices

    return unit_matrices(dims, n)


# ---------------------------------------------------------------------------
# pairings


def _weighted(g: Callable, v: Integrand) -> Callable:
    if v.spatial_weight is None:
        return g
    w = v.spatial_weight
    return lambda x: np.asarray(g(x)) * np.asarray(w(x))


def pairing(gym: GenYoungMeasure, g: Callable, v: Integrand) -> float:
    """<<Lambda, g x v>>: oscillation integral plus concentration integral."""
    if v.recession is None:
        raise ValueError("recession required")
    geff = _weighted(g, v)
    vvals = np.asarray(v(gym.matrix_grid))
    vinf = np.asarray(v.recession.on_sphere(gym.sphere_grid))
    cell_g = gym.mesh.cell_integrals(geff)
    osc = float(cell_g @ (gym.nu @ vvals))
    conc = float((cell_g * gym.lam_density) @ (gym.nu_inf_cells @ vinf))
    for i, (p, m) in enumerate(gym.lam_atoms):
        conc += _eval_at_point(geff, p) * m * float(gym.nu_inf_atoms[i] @ vinf)
    return osc + conc


def pairing_spatial(gym: GenYoungMeasure, f) -> float:
    """<<Lambda, f>> for a spatially varying integrand f(x, A)."""
    if f.weight is not None:
        base = Integrand(
            gym.dims,
            mat_norm,
            f.growth_c,
            HomogeneousIntegrand(gym.dims, lambda S: np.ones(S.shape[:-2])),
            spatial_weight=f.weight,
        )
        return pairing(gym, _const_one, base)
    total = 0.0
    for j in range(gym.matrix_grid.shape[0]):
        A = gym.matrix_grid[j]
        contrib = gym.mesh.cell_integrals(lambda x, A=A: f.fn(x, np.broadcast_to(A, np.shape(x) + A.shape)))
        total += float(contrib @ gym.nu[:, j])
    for j in range(gym.sphere_grid.shape[0]):
        S = gym.sphere_grid[j]
        contrib = gym.mesh.cell_integrals(
            lambda x, S=S: f.recession_fn(x, np.broadcast_to(S, np.shape(x) + S.shape))
        )
        total += float(contrib @ (gym.lam_density * gym.nu_inf_cells[:, j]))
    for i, (p, m) in enumerate(gym.lam_atoms):
        rec = f.recession_at(p)
        total += m * float(gym.nu_inf_atoms[i] @ np.asarray(rec.on_sphere(gym.sphere_grid)))
    return total


def sequence_pairing(Y: DiscreteMeasure, g: Callable, v: Integrand) -> float:
    """Integral of g against v(Y) for one member of a generating sequence."""
    from .integrands import pair_action

    return pair_action(Y, g, v)


def default_dictionary(dims=(1, 1)) -> list[tuple[str, Callable, Integrand]]:
    """The fixed 12-pair (g, v) test dictionary used for generation checks."""
    gs = [
        ("1", lambda x: np.ones_like(np.asarray(x, dtype=float))),
        ("x", lambda x: np.asarray(x, dtype=float)),
        ("x^2", lambda x: np.asarray(x, dtype=float) ** 2),
    ]
    M, N = dims
    vs = [make_integrand("one", dims), make_integrand("abs", dims), make_integrand("euclid_sqrt1p", dims)]
    if dims == (1, 1):
        vs.append(make_integrand("id"))
    else:
        coeffs = ",".join(["1"] + ["0"] * (M * N - 1))
        vs.append(make_integrand(f"linear_form:{coeffs}", dims))
    return [(f"{gn}*{v.name}", g, v) for gn, g in gs for v in vs]


# ---------------------------------------------------------------------------
# generation from sequences of derivative measures


def generate(
    Y_seq: Sequence[DiscreteMeasure],
    window_h: float = 1.0 / 32,
    matrix_grid: np.ndarray | None = None,
    sphere_grid: np.ndarray | None = None,
    overflow_radius: float = 8.0,
    dictionary=None,
    tol: float = 1e-2,
    tail: int = 3,
    boundary_snap: float | None = None,
) -> tuple[GenYoungMeasure, dict]:
    """Empirical generalized Young measure of a derivative-measure sequence.

    Per spatial window, density values of the last member with norm below the
    overflow radius are histogrammed (Lebesgue-weighted) onto the matrix grid;
    the remaining mass, together with all atoms, is booked as concentration
    with a directional histogram on the sphere grid.  A posteriori the pairing
    against the (g, v) dictionary is compared with the tail of the sequence;
    disagreement beyond tol raises GenerationError.
    """
    if not Y_seq:
        raise ValueError("empty sequence")
    mesh0 = Y_seq[0].mesh
    if mesh0.dim != 1:
        raise ValueError("generation is implemented for interval meshes")
    a, b = mesh0.a, mesh0.b
    for Y in Y_seq:
        if not (np.isclose(Y.mesh.a, a) and np.isclose(Y.mesh.b, b)):
            raise ValueError("sequence members live on different domains")
    dims = Y_seq[-1].density.shape[1:]
    if matrix_grid is None:
        matrix_grid = default_matrix_grid(dims, radius=overflow_radius / 2)
    if sphere_grid is None:
        sphere_grid = default_sphere_grid(dims)
    if dictionary is None:
        dictionary = default_dictionary(dims)
    if boundary_snap is None:
        boundary_snap = window_h

    nwin = max(1, int(round((b - a) / window_h)))
    wnodes = np.linspace(a, b, nwin + 1)
    wmesh = IntervalMesh(wnodes)
    K, S = matrix_grid.shape[0], sphere_grid.shape[0]
    zero_idx = _zero_index(matrix_grid)

    nu = np.zeros((nwin, K))
    conc_mass = np.zeros(nwin)
    conc_pos = np.zeros(nwin)
    conc_dir = np.zeros((nwin, S))
    extra_atoms: dict[float, tuple[float, np.ndarray]] = {}

    Y = Y_seq[-1]
    src = Y.mesh
    norms = mat_norm(Y.density)
    for c in range(src.ncells):
        lo, hi = src.nodes[c], src.nodes[c + 1]
        w0 = max(0, min(int((lo - a) / (b - a) * nwin), nwin - 1))
        w1 = max(0, min(int(np.nextafter((hi - a) / (b - a) * nwin, -np.inf)), nwin - 1))
        for w in range(w0, w1 + 1):
            ell = min(hi, wnodes[w + 1]) - max(lo, wnodes[w])
            if ell <= 0:
                continue
            if norms[c] <= overflow_radius:
                nu[w, _grid_index(matrix_grid, Y.density[c])] += ell
            else:
                nu[w, zero_idx] += ell
                mass = ell * norms[c]
                conc_mass[w] += mass
                conc_pos[w] += mass * 0.5 * (max(lo, wnodes[w]) + min(hi, wnodes[w + 1]))
                conc_dir[w, _grid_index(sphere_grid, Y.density[c] / norms[c])] += mass
    for at in Y.atoms:
        x = float(np.asarray(at.point))
        key = min(max(x, a), b)
        dirrow = np.zeros(S)
        dirrow[_grid_index(sphere_grid, np.asarray(at.direction, dtype=float))] = at.mass
        if key in extra_atoms:
            m0, d0 = extra_atoms[key]
            extra_atoms[key] = (m0 + at.mass, d0 + dirrow)
        else:
            extra_atoms[key] = (at.mass, dirrow)

    nu_rows = nu / nu.sum(axis=1, keepdims=True)
    atoms: list[tuple[float, float]] = []
    rows: list[np.ndarray] = []
    for w in range(nwin):
        if conc_mass[w] <= 0:
            continue
        x = conc_pos[w] / conc_mass[w]
        if x - a <= boundary_snap:
            x = a
        elif b - x <= boundary_snap:
            x = b
        atoms.append((x, conc_mass[w]))
        rows.append(conc_dir[w] / conc_mass[w])
    for x, (m, drow) in sorted(extra_atoms.items()):
        atoms.append((x, m))
        rows.append(drow / m)
    nu_inf_atoms = np.array(rows).reshape(len(atoms), S)

    gym = GenYoungMeasure(
        wmesh,
        matrix_grid,
        nu_rows,
        np.zeros(nwin),
        tuple(atoms),
        sphere_grid,
        np.full((nwin, S), 1.0 / S),
        nu_inf_atoms,
    )

    tail_idx = list(range(max(0, len(Y_seq) - tail), len(Y_seq)))
    pair_gaps = {}
    tail_gaps = []
    for k in tail_idx:
        worst = 0.0
        for label, g, v in dictionary:
            pk = sequence_pairing(Y_seq[k], g, v)
            pl = pairing(gym, g, v)
            gap = abs(pk - pl)
            worst = max(worst, gap)
            if k == tail_idx[-1]:
                pair_gaps[label] = gap
        tail_gaps.append(worst)
    converged = tail_gaps[-1] <= tol and all(g <= 10 * tol for g in tail_gaps)
    report = {
        "pair_gaps": pair_gaps,
        "max_gap": tail_gaps[-1],
        "tail_gaps": tail_gaps,
        "tol": tol,
        "converged": converged,
        "window_h": (b - a) / nwin,
    }
    if not report["converged"]:
        raise GenerationError(
            f"sequence does not generate at this resolution (gap {tail_gaps[-1]:.3e} > tol {tol:.1e})"
        )
    return gym, report


def generate_from_fields(fields: Sequence[BVField], **kwargs) -> tuple[GenYoungMeasure, dict]:
    """Generate from gradient fields and attach the reconstructed weak* limit."""
    gym, report = generate([u.derivative() for u in fields], **kwargs)
    anchor = fields[-1].mean()
    gym = gym.with_underlying(reconstruct_underlying(gym, anchor))
    return gym, report


def reconstruct_underlying(gym: GenYoungMeasure, anchor_mean) -> BVField:
    """BV field whose derivative is the interior first moment, mean-anchored."""
    if gym.mesh.dim != 1:
        raise ValueError("reconstruction implemented on interval meshes")
    mom = first_moment(gym)
    slopes = mom.density[:, :, 0] if mom.density.ndim == 3 else mom.density
    mesh = gym.mesh
    jumps = {float(np.asarray(at.point)): at.value for at in mom.interior_atoms()}
    ncomp = slopes.shape[1] if slopes.ndim == 2 else 1
    vals = np.zeros((mesh.ncells, 2, ncomp))
    cur = np.zeros(ncomp)
    for c in range(mesh.ncells):
        x = mesh.nodes[c]
        if c > 0 and float(mesh.nodes[c]) in jumps:
            cur = cur + np.ravel(jumps[float(mesh.nodes[c])])
        vals[c, 0] = cur
        cur = cur + np.atleast_1d(slopes[c]) * mesh.cell_volumes[c]
        vals[c, 1] = cur
    if ncomp == 1:
        vals = vals[:, :, 0]
    u = BVField(mesh, vals)
    shift = np.atleast_1d(np.asarray(anchor_mean, dtype=float)) - u.mean()
    return BVField(mesh, u.values + (shift if ncomp > 1 else float(shift[0])))


# ---------------------------------------------------------------------------
# splitting and orthogonal combination


def split(gym: GenYoungMeasure) -> tuple[GenYoungMeasure, GenYoungMeasure]:
    """Inner part (interior concentration kept) and boundary part (nu = delta_0)."""
    bidx = set(gym.boundary_atom_indices())
    iatoms, irows, batoms, brows = [], [], [], []
    for i, (p, m) in enumerate(gym.lam_atoms):
        if i in bidx:
            batoms.append((p, m))
            brows.append(gym.nu_inf_atoms[i])
        else:
            iatoms.append((p, m))
            irows.append(gym.nu_inf_atoms[i])
    S = gym.sphere_grid.shape[0]
    inner = GenYoungMeasure(
        gym.mesh,
        gym.matrix_grid,
        gym.nu,
        gym.lam_density,
        tuple(iatoms),
        gym.sphere_grid,
        gym.nu_inf_cells,
        np.array(irows).reshape(len(iatoms), S),
        gym.underlying,
    )
    K = gym.matrix_grid.shape[0]
    nu0 = np.zeros((gym.mesh.ncells, K))
    nu0[:, _zero_index(gym.matrix_grid)] = 1.0
    boundary = GenYoungMeasure(
        gym.mesh,
        gym.matrix_grid,
        nu0,
        np.zeros(gym.mesh.ncells),
        tuple(batoms),
        gym.sphere_grid,
        np.full((gym.mesh.ncells, S), 1.0 / S),
        np.array(brows).reshape(len(batoms), S),
    )
    return inner, boundary


def combine_orthogonal(
    psi: GenYoungMeasure,
    theta: GenYoungMeasure,
    in_S: Callable,
    in_T: Callable,
    tol: float = PROB_TOL,
) -> GenYoungMeasure:
    """chi_S psi + chi_T theta for measures that are trivial on each other's set.

    `in_S`/`in_T` are Borel-tag predicates evaluated at cell centers and atom
    locations; they must partition the closure.
    """
    if psi.matrix_grid.shape != theta.matrix_grid.shape or not np.allclose(
        psi.matrix_grid, theta.matrix_grid
    ):
        raise ValueError("measures must share the matrix grid")
    if not np.allclose(psi.sphere_grid, theta.sphere_grid):
        raise ValueError("measures must share the sphere grid")
    if not _same_mesh(psi.mesh, theta.mesh):
        raise ValueError("measures must share the mesh")
    mesh = psi.mesh
    zi = _zero_index(psi.matrix_grid)
    centers = mesh.cell_centers
    nu = np.empty_like(psi.nu)
    lamd = np.empty_like(psi.lam_density)
    nic = np.empty_like(psi.nu_inf_cells)
    for c in range(mesh.ncells):
        x = centers[c]
        s, t = bool(in_S(x)), bool(in_T(x))
        if s == t:
            raise OrthogonalityError(f"cell {c} center not classified by exactly one tag")
        src, other = (psi, theta) if s else (theta, psi)
        triv = np.zeros(psi.nu.shape[1])
        triv[zi] = 1.0
        if np.max(np.abs(other.nu[c] - triv)) > tol or other.lam_density[c] > tol:
            raise OrthogonalityError(f"orthogonality violated on cell {c}")
        nu[c] = src.nu[c]
        lamd[c] = src.lam_density[c]
        nic[c] = src.nu_inf_cells[c]
    atoms, rows = [], []
    for src, inside, label in ((psi, in_S, "S"), (theta, in_T, "T")):
        other = theta if src is psi else psi
        for i, (p, m) in enumerate(src.lam_atoms):
            if inside(p):
                atoms.append((p, m))
                rows.append(src.nu_inf_atoms[i])
            elif m > tol:
                raise OrthogonalityError(f"atom at {p} of the {label}-factor lies outside {label}")
    return GenYoungMeasure(
        mesh,
        psi.matrix_grid,
        nu,
        lamd,
        tuple(atoms),
        psi.sphere_grid,
        nic,
        np.array(rows).reshape(len(atoms), psi.sphere_grid.shape[0]),
    )


# ---------------------------------------------------------------------------
# moments


def first_moment(gym: GenYoungMeasure) -> DiscreteMeasure:
    """Center of mass: <nu_x, id> dx + <nu_inf_x, id> dlam, a matrix measure."""
    A = gym.matrix_grid.reshape(gym.matrix_grid.shape[0], -1)
    S = gym.sphere_grid.reshape(gym.sphere_grid.shape[0], -1)
    M, N = gym.dims
    dens = (gym.nu @ A) + gym.lam_density[:, None] * (gym.nu_inf_cells @ S)
    atoms = []
    for i, (p, m) in enumerate(gym.lam_atoms):
        v = (gym.nu_inf_atoms[i] @ S).reshape(M, N)
        mv = float(mat_norm(v))
        if m * mv > 0:
            atoms.append(Atom(p, m * mv, v / mv))
    return DiscreteMeasure(gym.mesh, dens.reshape(gym.mesh.ncells, M, N), tuple(atoms))


def atom_moment(gym: GenYoungMeasure, i: int) -> np.ndarray:
    """<nu_inf, id> at the i-th lam atom (an M x N matrix)."""
    S = gym.sphere_grid.reshape(gym.sphere_grid.shape[0], -1)
    M, N = gym.dims
    return (gym.nu_inf_atoms[i] @ S).reshape(M, N)


def boundary_rank_one_report(gym: GenYoungMeasure, tol: float = 1e-8) -> list[dict]:
    """Check <nu_inf, id> = a x normal at boundary atoms of lam."""
    out = []
    for i in gym.boundary_atom_indices():
        p, m = gym.lam_atoms[i]
        if m <= 0:
            continue
        mom = atom_moment(gym, i)
        if float(mat_norm(mom)) == 0.0:
            continue
        rho = np.atleast_1d(gym.mesh.outer_normal(p))
        a = mom @ rho
        residual = float(mat_norm(mom - np.outer(a, rho)))
        out.append({"point": p, "ok": residual <= tol * max(1.0, float(mat_norm(mom))), "residual": residual})
    return out


# ---------------------------------------------------------------------------
# DiPerna-Majda conversion


@dataclass(frozen=True)
class DiPernaMajdaMeasure:
    """(sigma, nuhat): sigma >= 0 on the closure, nuhat probabilities on the
    sphere-compactified matrix ball (interior samples + sphere samples)."""

    mesh: IntervalMesh | TriMesh
    matrix_grid: np.ndarray
    sphere_grid: np.ndarray
    sigma_density: np.ndarray  # (ncells,)
    sigma_atoms: tuple[tuple, ...]  # ((point, mass), ...)
    nuhat_interior: np.ndarray  # (ncells, K) weights on d(matrix_grid)
    nuhat_sphere: np.ndarray  # (ncells, S)
    nuhat_atom_sphere: np.ndarray  # (natoms, S)

    def __post_init__(self):
        rows = self.nuhat_interior.sum(axis=1) + self.nuhat_sphere.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > 1e-9:
            raise ValueError("nuhat rows must sum to 1")
        if np.min(self.sigma_density) < -PROB_TOL:
            raise ValueError("sigma must be nonnegative")

    def sigma(self) -> DiscreteMeasure:
        atoms = tuple(Atom(p, m, 1.0) for p, m in self.sigma_atoms if m > 0)
        return DiscreteMeasure(self.mesh, self.sigma_density, atoms)

    def pairing(self, g: Callable, v: Integrand) -> float:
        if v.recession is None:
            raise ValueError("recession required")
        geff = _weighted(g, v)
        vv = np.asarray(v(self.matrix_grid)) / (1.0 + mat_norm(self.matrix_grid))
        vinf = np.asarray(v.recession.on_sphere(self.sphere_grid))
        cell_g = self.mesh.cell_integrals(geff)
        total = float((cell_g * self.sigma_density) @ (self.nuhat_interior @ vv + self.nuhat_sphere @ vinf))
        for i, (p, m) in enumerate(self.sigma_atoms):
            total += _eval_at_point(geff, p) * m * float(self.nuhat_atom_sphere[i] @ vinf)
        return total

    def to_record(self) -> dict:
        return {
            "mesh": self.mesh.to_record(),
            "matrix_grid": self.matrix_grid.tolist(),
            "sphere_grid": self.sphere_grid.tolist(),
            "sigma_density": self.sigma_density.tolist(),
            "sigma_atoms": [[np.asarray(p).tolist(), m] for p, m in self.sigma_atoms],
            "nuhat_interior": self.nuhat_interior.tolist(),
            "nuhat_sphere": self.nuhat_sphere.tolist(),
            "nuhat_atom_sphere": self.nuhat_atom_sphere.tolist(),
        }

    @staticmethod
    def from_record(rec: dict) -> "DiPernaMajdaMeasure":
        atoms = tuple((_point(p), float(m)) for p, m in rec["sigma_atoms"])
        return DiPernaMajdaMeasure(
            mesh_from_record(rec["mesh"]),
            np.asarray(rec["matrix_grid"], dtype=float),
            np.asarray(rec["sphere_grid"], dtype=float),
            np.asarray(rec["sigma_density"], dtype=float),
            atoms,
            np.asarray(rec["nuhat_interior"], dtype=float),
            np.asarray(rec["nuhat_sphere"], dtype=float),
            np.asarray(rec["nuhat_atom_sphere"], dtype=float).reshape(len(atoms), -1),
        )


def to_diperna_majda(gym: GenYoungMeasure) -> DiPernaMajdaMeasure:
    """sigma = (1 + <nu,|.|>) L + lam; nuhat splits sigma-mass between the
    compactified interior (oscillation) and the sphere at infinity."""
    w = 1.0 + mat_norm(gym.matrix_grid)  # (K,)
    sig_dens = gym.nu @ w + gym.lam_density
    interior = gym.nu * w[None, :] / sig_dens[:, None]
    sphere = gym.nu_inf_cells * (gym.lam_density / sig_dens)[:, None]
    return DiPernaMajdaMeasure(
        gym.mesh,
        gym.matrix_grid,
        gym.sphere_grid,
        sig_dens,
        tuple(gym.lam_atoms),
        interior,
        sphere,
        gym.nu_inf_atoms.copy(),
    )


def from_diperna_majda(dm: DiPernaMajdaMeasure) -> GenYoungMeasure:
    w = 1.0 + mat_norm(dm.matrix_grid)
    lebesgue_frac = dm.nuhat_interior @ (1.0 / w)  # = dL/dsigma per cell
    if np.any((lebesgue_frac <= 0) & (dm.nuhat_interior.sum(axis=1) > 0)):
        raise ValueError("inversion error: sigma has no density where nuhat is nontrivial")
    if np.any(lebesgue_frac <= 0):
        raise ValueError("inversion error: sigma must dominate Lebesgue on every cell")
    nu = (dm.nuhat_interior / w[None, :]) / lebesgue_frac[:, None]
    lam_density = dm.sigma_density * dm.nuhat_sphere.sum(axis=1)
    nic = dm.nuhat_sphere.copy()
    carrying = lam_density > 0
    nic[carrying] /= dm.nuhat_sphere.sum(axis=1)[carrying, None]
    S = dm.sphere_grid.shape[0]
    nic[~carrying] = 1.0 / S
    return GenYoungMeasure(
        dm.mesh,
        dm.matrix_grid,
        nu,
        lam_density,
        tuple(dm.sigma_atoms),
        dm.sphere_grid,
        nic,
        dm.nuhat_atom_sphere.copy(),
    )


# ---------------------------------------------------------------------------
# characterization and traces


def default_quasiconvex_family(dims=(1, 1)) -> list[Integrand]:
    """Convex catalog members (hence quasiconvex) with recession functions."""
    M, N = dims
    fam = [make_integrand("abs", dims), make_integrand("euclid_sqrt1p", dims)]
    if dims == (1, 1):
        fam.append(make_integrand("id"))
        fam.append(make_integrand("linear_form:-1", dims))
    else:
        for k in range(M * N):
            coeffs = ["0"] * (M * N)
            coeffs[k] = "1"
            fam.append(make_integrand("linear_form:" + ",".join(coeffs), dims))
            coeffs[k] = "-1"
            fam.append(make_integrand("linear_form:" + ",".join(coeffs), dims))
    return fam


def default_qslb_family(x, rho, dims=(1, 1)) -> list[HomogeneousIntegrand]:
    """1-homogeneous integrands known to be quasi-sublinear from below at
    (x, rho): nonnegative ones, and for N = 2 the forms vanishing on a x rho."""
    from .integrands import hom_abs, hom_linear

    fam = [hom_abs(dims)]
    M, N = dims
    if N == 2:
        rho = np.asarray(rho, dtype=float)
        tau = np.array([-rho[1], rho[0]])
        for i in range(M):
            a = np.zeros(M)
            a[i] = 1.0
            fam.append(hom_linear(np.outer(a, tau), dims))
            fam.append(hom_linear(-np.outer(a, tau), dims))
    return fam


def check_characterization(
    gym: GenYoungMeasure,
    u: BVField,
    family: Sequence[Integrand] | None = None,
    qslb_family: Callable | None = None,
    tol: float = 1e-6,
    allowed_cell_violations: int = 1,
) -> dict:
    """Verify the four defining conditions of a gradient Young measure.

    (i) finite mass; (ii) per-cell Jensen inequality against quasiconvex test
    integrands with at most `allowed_cell_violations` exceptional cells;
    (iii) the singular inequality between Du^s and the interior concentration;
    (iv) nonnegativity of <nu_inf, v_inf> at boundary atoms for integrands
    flagged quasi-sublinear from below at the local normal.
    """
    if family is None:
        family = default_quasiconvex_family(gym.dims)
    if not family:
        raise ValueError("empty test family")
    if qslb_family is None:
        qslb_family = lambda x, rho: default_qslb_family(x, rho, gym.dims)

    report: dict = {}
    mass = gym.mass_norm()
    report["i"] = {"pass": bool(np.isfinite(mass)), "value": mass}

    grads = u.derivative()
    slopes = grads.density  # (ncells, M, N)
    worst_ii = np.inf
    bad_cells = []
    vinfs = {}
    for v in family:
        if v.recession is None:
            raise ValueError(f"family member {v.name!r} lacks a recession function")
        vv = np.asarray(v(gym.matrix_grid))
        vinf = np.asarray(v.recession.on_sphere(gym.sphere_grid))
        vinfs[v.name] = vinf
        lhs = np.asarray(v(slopes))
        rhs = gym.nu @ vv + gym.lam_density * (gym.nu_inf_cells @ vinf)
        margins = rhs - lhs
        worst_ii = min(worst_ii, float(np.min(margins)))
        bad_cells += list(np.nonzero(margins < -tol)[0])
    bad_cells = sorted(set(int(c) for c in bad_cells))
    report["ii"] = {
        "pass": len(bad_cells) <= allowed_cell_violations,
        "worst": worst_ii,
        "violating_cells": bad_cells,
    }

    du_atoms = {float(np.asarray(a.point)) if gym.mesh.dim == 1 else tuple(a.point): a for a in grads.interior_atoms()}
    lam_interior = [
        (i, p, m) for i, (p, m) in enumerate(gym.lam_atoms) if i not in gym.boundary_atom_indices()
    ]
    worst_iii = np.inf
    ok_iii = True
    keys_seen = set()
    for i, p, m in lam_interior:
        key = float(np.asarray(p)) if gym.mesh.dim == 1 else tuple(p)
        keys_seen.add(key)
        at = du_atoms.get(key)
        for v in family:
            lhs = float(v.recession.on_sphere(np.asarray(at.direction))) * at.mass if at else 0.0
            rhs = float(gym.nu_inf_atoms[i] @ vinfs[v.name]) * m
            worst_iii = min(worst_iii, rhs - lhs)
            if rhs - lhs < -tol:
                ok_iii = False
    for key, at in du_atoms.items():
        if key in keys_seen:
            continue
        for v in family:
            lhs = float(v.recession.on_sphere(np.asarray(at.direction))) * at.mass
            worst_iii = min(worst_iii, -lhs)
            if lhs > tol:
                ok_iii = False
    report["iii"] = {"pass": ok_iii, "worst": worst_iii if np.isfinite(worst_iii) else 0.0}

    worst_iv = np.inf
    bad_iv = []
    for i in gym.boundary_atom_indices():
        p, m = gym.lam_atoms[i]
        if m <= tol:
            continue  # exceptional sets carry zero lam-mass
        rho = gym.mesh.outer_normal(p)
        for h in qslb_family(p, rho):
            val = float(gym.nu_inf_atoms[i] @ np.asarray(h.on_sphere(gym.sphere_grid)))
            worst_iv = min(worst_iv, val)
            if val < -tol:
                bad_iv.append({"point": p, "integrand": h.name, "value": val})
    report["iv"] = {
        "pass": not bad_iv,
        "worst": worst_iv if np.isfinite(worst_iv) else 0.0,
        "violations": bad_iv,
    }
    report["all_pass"] = all(report[k]["pass"] for k in ("i", "ii", "iii", "iv"))
    return report


def gym_traces(gym: GenYoungMeasure, u: BVField | None = None) -> dict:
    """Inner trace (of the underlying deformation) and measure-valued outer
    trace; they differ by the normal-projected boundary concentration."""
    if u is None:
        u = gym.underlying
    if u is None:
        raise ValueError("not a gradient GYM: no underlying deformation available")
    if gym.mesh.dim != 1:
        raise ValueError("traces implemented on interval meshes")
    lo, hi = u.trace()
    inner = {gym.mesh.a: np.atleast_1d(lo), gym.mesh.b: np.atleast_1d(hi)}
    outer = {k: v.copy() for k, v in inner.items()}
    for i in gym.boundary_atom_indices():
        p, m = gym.lam_atoms[i]
        x = float(np.asarray(p))
        rho = gym.mesh.outer_normal(x)
        mom = atom_moment(gym, i)  # (M, 1) in 1D
        outer[x] = outer[x] + m * rho * mom[:, 0]
    return {"inner": inner, "outer": outer}
