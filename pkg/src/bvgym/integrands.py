"""Integrands with linear growth on M-by-N matrices.

An integrand is a continuous function v on R^{MxN} with |v(A)| <= c(1+|A|).
When the positively 1-homogeneous radial limit v(aA)/a exists jointly in
(a, A) it is stored as a separate homogeneous integrand and used to act on
the singular parts of derivative measures.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Matrix = np.ndarray


def as_matrix(A, dims: tuple[int, int]) -> Matrix:
    M, N = dims
    out = np.asarray(A, dtype=float)
    if out.ndim == 0:
        if (M, N) != (1, 1):
            raise ValueError(f"scalar given for dims {dims}")
        return out.reshape(1, 1)
    if out.shape[-2:] != (M, N):
        if out.size == M * N:
            return out.reshape(M, N)
        raise ValueError(f"expected trailing shape {(M, N)}, got {out.shape}")
    return out


def mat_norm(A: Matrix) -> np.ndarray:
    """Frobenius norm over the trailing matrix axes (batched)."""
    return np.sqrt(np.sum(np.square(A), axis=(-2, -1)))


def unit_matrices(dims: tuple[int, int], n: int = 16) -> np.ndarray:
    """Deterministic sample of the unit sphere in R^{MxN}, shape (k, M, N)."""
    M, N = dims
    if (M, N) == (1, 1):
        return np.array([[[-1.0]], [[1.0]]])
    if M * N == 2:
        ang = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        return np.stack([np.cos(ang), np.sin(ang)], axis=1).reshape(n, M, N)
    rng = np.random.default_rng(0)
    raw = rng.standard_normal((n, M, N))
    basis = np.zeros((2 * M * N, M, N))
    for k in range(M * N):
        basis[2 * k, k // N, k % N] = 1.0
        basis[2 * k + 1, k // N, k % N] = -1.0
    raw = np.concatenate([basis, raw], axis=0)
    return raw / mat_norm(raw)[:, None, None]


@dataclass(frozen=True)
class HomogeneousIntegrand:
    """Positively 1-homogeneous function, determined by its sphere values.

    `grad_fn`, when present, returns a (sub)gradient dv/dA for batched input;
    descent-based verifiers fall back to finite differences without it.
    """

    dims: tuple[int, int]
    sphere_eval: Callable[[np.ndarray], np.ndarray]
    name: str = ""
    grad_fn: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, A) -> np.ndarray | float:
        A = as_matrix(A, self.dims)
        r = mat_norm(A)
        scalar = A.ndim == 2
        Ab = A[None] if scalar else A
        rb = np.atleast_1d(r)
        out = np.zeros(rb.shape)
        mask = rb > 0
        if np.any(mask):
            out[mask] = rb[mask] * np.asarray(self.sphere_eval(Ab[mask] / rb[mask][..., None, None]))
        return float(out[0]) if scalar else out.reshape(r.shape)

    def on_sphere(self, S) -> np.ndarray | float:
        S = as_matrix(S, self.dims)
        if S.ndim == 2:
            return float(np.asarray(self.sphere_eval(S[None]))[0])
        return np.asarray(self.sphere_eval(S))


@dataclass(frozen=True)
class Integrand:
    """Linear-growth integrand; `fn` must accept batched (..., M, N) input."""

    dims: tuple[int, int]
    fn: Callable[[np.ndarray], np.ndarray]
    growth_c: float = 1.0
    recession: HomogeneousIntegrand | None = None
    spatial_weight: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = ""

    def __call__(self, A) -> np.ndarray | float:
        A = as_matrix(A, self.dims)
        if A.ndim == 2:
            return float(np.asarray(self.fn(A[None]))[0])
        return np.asarray(self.fn(A))

    def weight_at(self, x) -> np.ndarray | float:
        if self.spatial_weight is None:
            return 1.0
        return self.spatial_weight(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class SpatialIntegrand:
    """f(x, A), continuous, with an optional recession function f_inf(x, .).

    `weight` marks the separable case f(x, A) = weight(x) * base(A) with a
    1-homogeneous nonnegative base; solvers exploit it for exact reductions.
    """

    dims: tuple[int, int]
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]  # (x, batched A) -> values
    recession_fn: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    growth_c: float = 1.0
    weight: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = ""

    def at(self, x) -> Integrand:
        x = np.asarray(x, dtype=float)
        rec = None
        if self.recession_fn is not None:
            rec = HomogeneousIntegrand(
                self.dims, lambda S, _x=x: self.recession_fn(_x, S), name=f"{self.name}^inf@x"
            )
        return Integrand(
            self.dims, lambda A, _x=x: self.fn(_x, A), self.growth_c, rec, name=f"{self.name}@x"
        )

    def recession_at(self, x) -> HomogeneousIntegrand:
        if self.recession_fn is None:
            raise ValueError(f"integrand {self.name!r} has no recession function")
        x = np.asarray(x, dtype=float)
        return HomogeneousIntegrand(self.dims, lambda S, _x=x: self.recession_fn(_x, S))


def weighted_tv_integrand(weight, dims=(1, 1), name="weighted_abs", growth_c=None) -> SpatialIntegrand:
    """f(x, A) = weight(x)|A| with its own recession; weight continuous, >= 0."""

    def fn(x, A):
        return weight(x) * mat_norm(A)

    def rec(x, S):
        return weight(x) * mat_norm(S)

    c = growth_c if growth_c is not None else 1.0
    return SpatialIntegrand(dims, fn, rec, growth_c=c, weight=weight, name=name)


# ---------------------------------------------------------------------------
# recession estimation and growth checks


def estimate_recession(
    v: Integrand,
    A,
    schedule: np.ndarray | None = None,
    tol: float = 1e-6,
    jitter: float = 1e-3,
) -> dict:
    """Estimate lim v(a t)/a for t -> A, |A| = 1, along a growth schedule.

    Returns {"value", "exists"}.  `exists` requires the estimates to be Cauchy
    in a (within tol) on the central ray and on jittered rays, and the rays to
    agree up to the O(jitter) slack a Lipschitz-on-rays integrand allows.
    When the limit is not detected, `value` reports the limsup estimate along
    the central ray (a candidate for the upper recession function).
    """
    A = as_matrix(A, v.dims)
    if abs(mat_norm(A) - 1.0) > 1e-9:
        raise ValueError("estimate_recession requires a unit matrix")
    if schedule is None:
        schedule = 2.0 ** np.arange(1, 41)
    schedule = np.asarray(schedule, dtype=float)
    if schedule.size < 5 or np.any(np.diff(schedule) <= 0):
        raise ValueError("schedule must be increasing with at least 5 entries")

    M, N = v.dims
    perturb = [np.zeros((M, N))]
    e11 = np.zeros((M, N))
    e11[0, 0] = 1.0
    ones = np.ones((M, N)) / np.sqrt(M * N)
    perturb += [e11, -e11, ones, -ones]

    tails = []
    for P in perturb:
        t = A + jitter * P
        vals = np.array([float(v(a * t)) / a for a in schedule])
        if not np.all(np.isfinite(vals)):
            raise ValueError("integrand not finite along the schedule")
        tails.append(vals[-4:])

    def ray_stable(tail):
        scale = 1.0 + abs(tail[-1])
        return np.max(np.abs(np.diff(tail))) <= tol * scale

    center = tails[0]
    exists = all(ray_stable(t) for t in tails)
    slack = tol * (1.0 + abs(center[-1])) + 8.0 * v.growth_c * jitter
    if exists:
        exists = all(abs(t[-1] - center[-1]) <= slack for t in tails[1:])
    value = float(np.mean(center)) if exists else float(np.max(center))
    return {"value": value, "exists": bool(exists)}


def check_linear_growth(v: Integrand, samples, cap: float | None = None) -> dict:
    """Fit the smallest c with |v(A)| <= c(1+|A|) on the samples.

    `ok` is True when the fitted constant stays below the cap (defaults to the
    integrand's declared growth constant).
    """
    S = np.asarray(samples, dtype=float)
    if S.size == 0:
        raise ValueError("check_linear_growth requires a nonempty sample set")
    if S.ndim == 2:
        S = S[None]
    vals = np.abs(np.asarray(v(S)))
    fitted = float(np.max(vals / (1.0 + mat_norm(S))))
    if cap is None:
        cap = v.growth_c
    return {"ok": bool(fitted <= cap * (1.0 + 1e-12)), "fitted_c": fitted}


# ---------------------------------------------------------------------------
# envelopes


def _lower_hull(xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    hull: list[tuple[float, float]] = []
    for x, y in zip(xs, ys):
        if hull and x == hull[-1][0]:
            if y < hull[-1][1]:
                hull.pop()
            else:
                continue
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1) <= 0.0:
                hull.pop()
            else:
                break
        hull.append((x, y))
    hx, hy = zip(*hull)
    return np.array(hx), np.array(hy)


def convex_envelope_1d(v: Integrand, grid) -> Integrand:
    """Lower convex hull of the sampled graph of a scalar integrand.

    Off-grid values are linearly interpolated; beyond the grid the envelope
    extends with the extreme hull slopes, which also define its recession.
    """
    if v.dims != (1, 1):
        raise ValueError("convex_envelope_1d requires M = N = 1")
    xs = np.asarray(grid, dtype=float)
    if xs.ndim != 1 or xs.size < 2:
        raise ValueError("grid must contain at least 2 points")
    if np.any(np.diff(xs) <= 0):
        xs = np.unique(xs)
        if xs.size < 2:
            raise ValueError("grid must contain at least 2 distinct points")
    ys = np.asarray(v(xs.reshape(-1, 1, 1)))
    hx, hy = _lower_hull(xs, ys)
    if hx.size == 1:
        hx = np.array([hx[0], hx[0] + 1.0])
        hy = np.array([hy[0], hy[0]])
    m_left = (hy[1] - hy[0]) / (hx[1] - hx[0])
    m_right = (hy[-1] - hy[-2]) / (hx[-1] - hx[-2])

    def fn(A, hx=hx, hy=hy, mL=m_left, mR=m_right):
        t = A[..., 0, 0]
        out = np.interp(t, hx, hy)
        lo = t < hx[0]
        hi = t > hx[-1]
        out = np.where(lo, hy[0] + mL * (t - hx[0]), out)
        out = np.where(hi, hy[-1] + mR * (t - hx[-1]), out)
        return out

    def sphere(S, mL=m_left, mR=m_right):
        s = S[..., 0, 0]
        return np.where(s > 0, mR, -mL)

    rec = HomogeneousIntegrand((1, 1), sphere, name=f"hull_recession({v.name})")
    c = float(max(np.max(np.abs(hy) / (1.0 + np.abs(hx))), abs(m_left), abs(m_right)))
    return Integrand((1, 1), fn, growth_c=c + 1e-12, recession=rec, name=f"lower_hull({v.name})")


# ---------------------------------------------------------------------------
# lamination bounds


def lamination_upper_bound(v: Integrand, A, depth: int, budget: int = 64) -> float:
    """Upper bound for the quasiconvex envelope at A via rank-one splitting.

    Depth-d value is the best mixture over d nested rank-one splits of the
    sampled candidates (budget caps the per-node candidate count), hence it is
    nonincreasing in depth and always between Qv(A) and v(A).
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    A = as_matrix(A, v.dims)
    M, N = v.dims
    dirs_a = unit_matrices((M, 1), 8).reshape(-1, M)
    dirs_b = unit_matrices((1, N), 8).reshape(-1, N)
    mags = np.array([1.0, 0.5, 2.0, 4.0])
    ts = np.array([0.5, 0.25, 0.75])
    cands = []
    for a in dirs_a:
        for b in dirs_b:
            for s in mags:
                cands.append(s * np.outer(a, b))
    cands = cands[: max(1, budget)]
    memo: dict[tuple[bytes, int], float] = {}

    def rec(Am: np.ndarray, d: int) -> float:
        key = (Am.tobytes(), d)
        if key in memo:
            return memo[key]
        if d == 0:
            out = float(v(Am))
        else:
            out = rec(Am, d - 1)
            for B in cands:
                for t in ts:
                    val = t * rec(Am - (1 - t) * B, d - 1) + (1 - t) * rec(Am + t * B, d - 1)
                    if val < out:
                        out = val
        memo[key] = out
        return out

    return rec(A, depth)


# ---------------------------------------------------------------------------
# nonlinear action on derivative measures


def measure_action(v: Integrand, mu) -> "DiscreteMeasure":
    """Scalar measure v(mu): density v(D(x)) plus recession values on atoms.

    The returned density is pre-multiplied by the cell average of the spatial
    weight (when present) so that integrating the result against 1 reproduces
    the weighted integral exactly for piecewise-constant densities.
    """
    from .measures import Atom, DiscreteMeasure

    if v.recession is None:
        raise ValueError("recession required")
    mesh = mu.mesh
    D = mu.density
    vals = np.asarray(v(D))
    if v.spatial_weight is not None:
        wbar = mesh.cell_integrals(v.spatial_weight) / mesh.cell_volumes
        vals = vals * wbar
    atoms = []
    for at in mu.atoms:
        w = float(v.weight_at(at.point)) if v.spatial_weight is not None else 1.0
        val = w * float(v.recession.on_sphere(at.direction)) * at.mass
        if val != 0.0:
            atoms.append(Atom(at.point, abs(val), np.sign(val)))
    return DiscreteMeasure(mesh, vals, atoms)


def pair_action(mu, g: Callable, v: Integrand) -> float:
    """Integral of g against the measure v(mu); exact for separable weights."""
    act = measure_action(v, mu)
    return float(act.integrate(g))


# ---------------------------------------------------------------------------
# catalog

_EPS_DOC = "toy weight (x-1)^2 + eps"

HOM_ABS = HomogeneousIntegrand((1, 1), lambda S: np.ones(S.shape[:-2]), name="abs^inf")
HOM_ZERO = HomogeneousIntegrand((1, 1), lambda S: np.zeros(S.shape[:-2]), name="zero")


def _abs_grad(A):
    n = mat_norm(A)
    safe = np.where(n > 0, n, 1.0)
    return A / safe[..., None, None]


def hom_abs(dims) -> HomogeneousIntegrand:
    return HomogeneousIntegrand(dims, lambda S: np.ones(S.shape[:-2]), name="abs^inf", grad_fn=_abs_grad)


def hom_zero(dims) -> HomogeneousIntegrand:
    return HomogeneousIntegrand(dims, lambda S: np.zeros(S.shape[:-2]), name="zero")


def hom_linear(B, dims=None) -> HomogeneousIntegrand:
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(1, -1)
    dims = dims or B.shape

    def sphere(S, B=B):
        return np.sum(S * B, axis=(-2, -1))

    def grad(A, B=B):
        return np.broadcast_to(B, A.shape).copy()

    return HomogeneousIntegrand(dims, sphere, name=f"linear({B.ravel().tolist()})", grad_fn=grad)


def hom_neg_abs(dims) -> HomogeneousIntegrand:
    return HomogeneousIntegrand(
        dims, lambda S: -np.ones(S.shape[:-2]), name="neg_abs^inf", grad_fn=lambda A: -_abs_grad(A)
    )


def hom_piecewise_1d(c_plus: float, c_minus: float) -> HomogeneousIntegrand:
    """1-homogeneous scalar function with v(1) = c_plus, v(-1) = c_minus."""

    def sphere(S, cp=c_plus, cm=c_minus):
        s = S[..., 0, 0]
        return np.where(s > 0, cp, cm)

    def grad(A, cp=c_plus, cm=c_minus):
        t = A[..., 0, 0]
        return np.where(t > 0, cp, -cm)[..., None, None]

    return HomogeneousIntegrand((1, 1), sphere, name=f"pw1h({c_plus},{c_minus})", grad_fn=grad)


def from_homogeneous(h: HomogeneousIntegrand, growth_c: float | None = None) -> Integrand:
    c = growth_c
    if c is None:
        c = float(np.max(np.abs(np.asarray(h.on_sphere(unit_matrices(h.dims, 32)))))) + 1e-12
    return Integrand(h.dims, lambda A: h(A), growth_c=c, recession=h, name=h.name)


def make_integrand(name: str, dims: tuple[int, int] = (1, 1)) -> Integrand:
    """Build a catalog integrand; parameterized entries use `name:params`.

    Catalog: abs, one, id, neg_abs, euclid_sqrt1p, sq, double_well_1d,
    sin_log_1d, linear_form:b1,b2,..., toy_weighted_abs:eps.
    """
    base, _, par = name.partition(":")
    M, N = dims
    if base == "abs":
        return Integrand(dims, mat_norm, 1.0, hom_abs(dims), name="abs")
    if base == "one":
        return Integrand(
            dims, lambda A: np.ones(A.shape[:-2]), 1.0, hom_zero(dims), name="one"
        )
    if base == "id":
        if dims != (1, 1):
            raise KeyError("catalog integrand 'id' is scalar; use linear_form for matrices")
        h = hom_linear([[1.0]])
        return Integrand(dims, lambda A: A[..., 0, 0], 1.0, h, name="id")
    if base == "neg_abs":
        return Integrand(dims, lambda A: -mat_norm(A), 1.0, hom_neg_abs(dims), name="neg_abs")
    if base == "euclid_sqrt1p":
        return Integrand(
            dims,
            lambda A: np.sqrt(1.0 + mat_norm(A) ** 2),
            1.0,
            hom_abs(dims),
            name="euclid_sqrt1p",
        )
    if base == "sq":
        # quadratic growth: kept in the catalog as the standard growth violator
        return Integrand(dims, lambda A: mat_norm(A) ** 2, 1.0, None, name="sq")
    if base == "double_well_1d":
        if dims != (1, 1):
            raise KeyError("double_well_1d is scalar")

        def dw(A):
            t = A[..., 0, 0]
            return np.minimum(np.abs(t - 1.0), np.abs(t + 1.0))

        return Integrand(dims, dw, 1.0, hom_abs(dims), name="double_well_1d")
    if base == "sin_log_1d":
        if dims != (1, 1):
            raise KeyError("sin_log_1d is scalar")

        def sl(A):
            t = A[..., 0, 0]
            return t * np.sin(np.log1p(np.abs(t)))

        return Integrand(dims, sl, 1.0, None, name="sin_log_1d")
    if base == "linear_form":
        vals = np.array([float(s) for s in par.split(",")])
        if vals.size != M * N:
            raise KeyError(f"linear_form expects {M * N} coefficients, got {vals.size}")
        B = vals.reshape(M, N)
        h = hom_linear(B, dims)
        return Integrand(
            dims,
            lambda A: np.sum(A * B, axis=(-2, -1)),
            float(mat_norm(B)) + 1e-12,
            h,
            name=f"linear_form:{par}",
        )
    if base == "toy_weighted_abs":
        if dims != (1, 1):
            raise KeyError("toy_weighted_abs is scalar")
        eps = float(par)

        def weight(x, eps=eps):
            return (np.asarray(x) - 1.0) ** 2 + eps

        return Integrand(
            dims,
            mat_norm,
            1.0 + eps,
            hom_abs(dims),
            spatial_weight=weight,
            name=f"toy_weighted_abs:{par}",
        )
    raise KeyError(
        f"unknown integrand {name!r}; catalog: abs, one, id, neg_abs, euclid_sqrt1p, sq, "
        "double_well_1d, sin_log_1d, linear_form:..., toy_weighted_abs:eps"
    )
