import numpy as np
import pytest

from bvgym.gym import GenYoungMeasure
from bvgym.measures import BVField
from bvgym.meshes import IntervalMesh, interval_mesh


@pytest.fixture
def unit_mesh():
    return interval_mesh(0.0, 1.0, 16)


def oscillation_field(k: int, support=(0.0, 1.0)) -> BVField:
    """Potential of sign(sin(2 pi k x)) restricted to the support window."""
    lo, hi = support
    mesh = interval_mesh(0.0, 1.0, 4 * k, extra_nodes=(lo, hi))
    mids = mesh.cell_centers
    s = np.sign(np.sin(2 * np.pi * k * mids))
    s[(mids < lo) | (mids > hi)] = 0.0
    nodal = np.concatenate([[0.0], np.cumsum(s * mesh.cell_volumes)])
    return BVField.from_nodal(mesh, nodal)


def random_gym(rng: np.random.Generator, ncells: int = 8, with_boundary=True) -> GenYoungMeasure:
    """A generic scalar measure with oscillation, interior and boundary atoms."""
    mesh = interval_mesh(0.0, 1.0, ncells)
    grid = np.array([[[0.0]], [[-1.0]], [[1.0]], [[2.5]]])
    sphere = np.array([[[-1.0]], [[1.0]]])
    nu = rng.random((ncells, grid.shape[0])) + 0.05
    nu /= nu.sum(axis=1, keepdims=True)
    lamd = rng.random(ncells) * 0.3
    nic = rng.random((ncells, 2)) + 0.05
    nic /= nic.sum(axis=1, keepdims=True)
    atoms = [(float(rng.uniform(0.2, 0.8)), float(rng.uniform(0.1, 1.0)))]
    if with_boundary:
        atoms += [(0.0, float(rng.uniform(0.1, 1.0))), (1.0, float(rng.uniform(0.1, 1.0)))]
    nia = rng.random((len(atoms), 2)) + 0.05
    nia /= nia.sum(axis=1, keepdims=True)
    return GenYoungMeasure(mesh, grid, nu, lamd, tuple(atoms), sphere, nic, nia)


def resample(u: BVField, mesh: IntervalMesh) -> BVField:
    """Continuous piecewise-linear reinterpolation onto another mesh."""
    nodal_src = np.concatenate([[u.values[0, 0]], u.values[:, 1]])
    return BVField.from_nodal(mesh, np.interp(mesh.nodes, u.mesh.nodes, nodal_src))


def union_mesh(*meshes: IntervalMesh) -> IntervalMesh:
    return IntervalMesh(np.unique(np.concatenate([m.nodes for m in meshes])))


ONE = lambda x: np.ones_like(np.asarray(x, dtype=float))
X = lambda x: np.asarray(x, dtype=float)
XSQ = lambda x: np.asarray(x, dtype=float) ** 2
