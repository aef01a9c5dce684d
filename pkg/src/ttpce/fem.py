"""P1 finite elements on the L-shaped domain [-1,1]^2 minus (0,1]^2."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import CoercivityError, InvalidInputError


@dataclass(frozen=True)
class Mesh:
    """Triangulation with zero Dirichlet data on the whole boundary.

    nodes (N, 2); triangles (T, 3) counter-clockwise; boundary (N,) bool;
    interior (Nint,) node ids of the free DoF; weights (N,) lumped mass
    (one third of the adjacent triangle areas).
    """
    nodes: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    interior: np.ndarray
    weights: np.ndarray
    areas: np.ndarray
    grads: np.ndarray = field(repr=False)   # (T, 3, 2) gradients of hat functions
    level: int = 0

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_dof(self):
        return len(self.interior)

    @property
    def h(self):
        e = self.nodes[self.triangles[:, [1, 2, 0]]] - self.nodes[self.triangles]
        return float(np.sqrt((e**2).sum(-1)).max())

    def export(self, path):
        """Plain-text dump: node lines 'x y boundary', then triangle lines."""
        with open(path, "w") as fh:
            fh.write(f"{self.n_nodes} {len(self.triangles)}\n")
            for (x, y), b in zip(self.nodes, self.boundary):
                fh.write(f"{x:.17g} {y:.17g} {int(b)}\n")
            for t in self.triangles:
                fh.write(f"{t[0]} {t[1]} {t[2]}\n")


def cells_per_unit(R):
    """Cells per unit length at refinement level R."""
    return 2 ** (R + 3)


def build_lshape_mesh(R=1, cells=None):
    """Structured mesh: three unit squares, each a k x k grid of cell pairs.

    `cells` overrides k = cells_per_unit(R) for small test meshes.
    """
    if R not in (0, 1, 2, 3):
        raise InvalidInputError(f"refinement level {R} not in 0..3")
    k = cells_per_unit(R) if cells is None else int(cells)
    if k < 2:
        raise InvalidInputError("need at least 2 cells per unit")
    g = np.linspace(-1.0, 1.0, 2 * k + 1)
    X, Y = np.meshgrid(g, g, indexing="ij")
    keep = ~((X > 1e-12) & (Y > 1e-12))
    ids = -np.ones(X.shape, dtype=int)
    ids[keep] = np.arange(keep.sum())
    nodes = np.column_stack([X[keep], Y[keep]])

    tris = []
    for i in range(2 * k):
        for j in range(2 * k):
            if g[i] >= -1e-12 and g[j] >= -1e-12:
                continue
            a, b, c, d = ids[i, j], ids[i + 1, j], ids[i + 1, j + 1], ids[i, j + 1]
            tris.append((a, b, c))
            tris.append((a, c, d))
    tris = np.array(tris, dtype=int)

    x, y = nodes[:, 0], nodes[:, 1]
    tol = 1e-12
    boundary = ((np.abs(np.abs(x) - 1) < tol) | (np.abs(np.abs(y) - 1) < tol)
                | ((np.abs(x) < tol) & (y > -tol)) | ((np.abs(y) < tol) & (x > -tol)))
    P = nodes[tris]                                   # (T, 3, 2)
    e1, e2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    areas = 0.5 * det
    # gradients of barycentric coordinates
    Jinv = np.empty((len(tris), 2, 2))
    Jinv[:, 0, 0], Jinv[:, 0, 1] = e2[:, 1] / det, -e2[:, 0] / det
    Jinv[:, 1, 0], Jinv[:, 1, 1] = -e1[:, 1] / det, e1[:, 0] / det
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    grads = np.einsum("vi,tij->tvj", ref, Jinv)
    weights = np.zeros(len(nodes))
    np.add.at(weights, tris.ravel(), np.repeat(areas / 3.0, 3))
    return Mesh(nodes=nodes, triangles=tris, boundary=boundary,
                interior=np.nonzero(~boundary)[0], weights=weights,
                areas=areas, grads=grads, level=R)


class StiffnessAssembler:
    """Fast repeated assembly of sum_T w_T area_T grad(phi_i).grad(phi_j).

    The element weight w_T is the average of the three vertex values.  The
    sparsity pattern restricted to interior DoF is computed once.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        T = mesh.triangles
        self.local = mesh.areas[:, None, None] * np.einsum("tvj,twj->tvw", mesh.grads, mesh.grads)
        gmap = -np.ones(mesh.n_nodes, dtype=int)
        gmap[mesh.interior] = np.arange(mesh.n_dof)
        rows = np.repeat(T, 3, axis=1).ravel()
        cols = np.tile(T, (1, 3)).ravel()
        ri, ci = gmap[rows], gmap[cols]
        self._mask = (ri >= 0) & (ci >= 0)
        n = mesh.n_dof
        lin = ri[self._mask] * n + ci[self._mask]
        uniq, self._slot = np.unique(lin, return_inverse=True)
        self._rows, self._cols = np.divmod(uniq, n)
        self._nnz = len(uniq)
        self._flat_local = self.local.reshape(len(T), 9)

    def element_weights(self, w):
        w = np.asarray(w, dtype=float)
        return w[..., self.mesh.triangles].mean(-1)

    def sparse(self, w):
        """CSC interior stiffness for node field w."""
        vals = (self.element_weights(w)[:, None] * self._flat_local).ravel()[self._mask]
        data = np.bincount(self._slot, weights=vals, minlength=self._nnz)
        n = self.mesh.n_dof
        return sp.csc_matrix((data, (self._rows, self._cols)), shape=(n, n))

    def dense(self, w):
        n = self.mesh.n_dof
        vals = (self.element_weights(w)[:, None] * self._flat_local).ravel()[self._mask]
        data = np.bincount(self._slot, weights=vals, minlength=self._nnz)
        K = np.zeros((n, n))
        K[self._rows, self._cols] = data
        return K

    def dense_many(self, W):
        """Stack of dense matrices for node fields W (L, N) -> (L, n, n)."""
        return np.stack([self.dense(w) for w in W])


def full_stiffness(mesh, w):
    """Stiffness over all nodes (no boundary elimination), dense."""
    wt = np.asarray(w, dtype=float)[mesh.triangles].mean(-1)
    loc = (wt * mesh.areas)[:, None, None] * np.einsum("tvj,twj->tvw", mesh.grads, mesh.grads)
    N = mesh.n_nodes
    K = np.zeros((N, N))
    T = mesh.triangles
    np.add.at(K, (T[:, :, None], T[:, None, :]), loc)
    return K


def assemble_weighted_stiffness(mesh, w):
    """Dense interior stiffness matrix for node coefficient w."""
    w = np.asarray(w, dtype=float)
    if w.shape != (mesh.n_nodes,) or not np.all(np.isfinite(w)):
        raise InvalidInputError("weight must be a finite node field")
    return StiffnessAssembler(mesh).dense(w)


def _node_values(mesh, f):
    if callable(f):
        v = np.asarray(f(mesh.nodes[:, 0], mesh.nodes[:, 1]), dtype=float)
        return np.broadcast_to(v, (mesh.n_nodes,)).copy()
    v = np.asarray(f, dtype=float)
    return np.broadcast_to(v, (mesh.n_nodes,)).copy()


def assemble_load(mesh, f=1.0):
    """Lumped load f(node) * weight(node) at interior nodes.

    f is a constant, a node array, or a callable f(x, y).
    """
    v = _node_values(mesh, f)
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("load is not finite")
    return (v * mesh.weights)[mesh.interior]


def extend(mesh, u_int):
    """Interior values -> node values with zeros on the boundary."""
    u_int = np.asarray(u_int)
    out = np.zeros(u_int.shape[:-1] + (mesh.n_nodes,))
    out[..., mesh.interior] = u_int
    return out


class DeterministicSolver:
    """Repeated solves -div(kappa grad u) = f with sparse LU."""

    def __init__(self, mesh, f=1.0):
        self.mesh = mesh
        self.assembler = StiffnessAssembler(mesh)
        self.load = assemble_load(mesh, f)

    def solve(self, kappa_nodes, rhs=None):
        kappa_nodes = np.asarray(kappa_nodes, dtype=float)
        if not np.all(np.isfinite(kappa_nodes)) or kappa_nodes.min() <= 0:
            raise CoercivityError(
                f"coefficient not positive (min {np.nanmin(kappa_nodes):.3g})")
        K = self.assembler.sparse(kappa_nodes)
        b = self.load if rhs is None else rhs
        return extend(self.mesh, splu(K).solve(b))


def deterministic_solve(mesh, kappa_nodes, f=1.0):
    """Node values of the FEM solution (zero on the boundary)."""
    return DeterministicSolver(mesh, f).solve(kappa_nodes)
