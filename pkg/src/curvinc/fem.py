"""Piecewise-linear finite elements for ``div(gamma grad u) = 0``.

``gamma = eta`` on triangles tagged ``ABOVE`` (the inclusion) and 1 elsewhere.
Dirichlet data are eliminated symmetrically; the pure Neumann problem is
solved in the mean-zero gauge (nodal average zero).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .geometry import ABOVE, BOTTOM, INTERIOR, LEFT, RIGHT, TOP


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (last relative residual {residual:.3e})")
        self.residual = residual


class CompatibilityError(ValueError):
    def __init__(self, integral):
        super().__init__(f"Neumann data not mean-zero: boundary integral {integral:.3e}")
        self.integral = integral


@dataclass
class SparseSystem:
    """Linear system over the free degrees of freedom.

    ``matrix`` and ``rhs`` are restricted to ``free``; ``fixed`` nodes carry
    ``fixed_values``. A freshly assembled system has every node free.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    mesh: object
    gamma: np.ndarray
    full_matrix: sp.csr_matrix
    bc: str = "none"

    @property
    def n(self):
        return self.full_matrix.shape[0]


@dataclass
class FemSolution:
    mesh: object
    u: np.ndarray
    gradients: np.ndarray   # (nt, 2)
    gamma: np.ndarray
    bc: str
    iterations: int = 0


class CGResult(NamedTuple):
    x: np.ndarray
    iterations: int
    residual: float


def element_stiffness(coords, gamma=1.0):
    """3x3 stiffness matrix of one linear triangle."""
    (x0, y0), (x1, y1), (x2, y2) = np.asarray(coords, dtype=float)
    det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    b = np.array([y1 - y2, y2 - y0, y0 - y1]) / det
    c = np.array([x2 - x1, x0 - x2, x1 - x0]) / det
    return gamma * 0.5 * abs(det) * (np.outer(b, b) + np.outer(c, c))


def _shape_gradients(mesh):
    """Barycentric gradients ``(nt, 3, 2)`` and triangle areas."""
    p = mesh.vertices[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    with np.errstate(divide="ignore", invalid="ignore"):  # degenerate cells are rejected by callers
        b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], 1) / det[:, None]
        c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], 1) / det[:, None]
    return np.stack([b, c], axis=-1), 0.5 * det


def conductivity(mesh, eta):
    return np.where(mesh.region_tags == ABOVE, float(eta), 1.0)


def assemble_stiffness(mesh, eta):
    """Assemble the global stiffness matrix with ``gamma = eta`` inside the inclusion."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    side = 2.0 * mesh.half_side()
    G, area = _shape_gradients(mesh)
    if np.any(area < 1e-14 * side * side):
        k = int(np.argmin(area))
        raise ValueError(f"degenerate triangle {k} with area {area[k]:.3e}")
    gamma = conductivity(mesh, eta)
    Ke = (gamma * area)[:, None, None] * np.einsum("tid,tjd->tij", G, G)
    T = mesh.triangles
    rows = np.repeat(T, 3, axis=1).ravel()
    cols = np.tile(T, (1, 3)).ravel()
    n = mesh.n_vertices
    A = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    allnodes = np.arange(n)
    return SparseSystem(A, np.zeros(n), allnodes, np.zeros(0, dtype=np.int64), np.zeros(0),
                        mesh, gamma, A)


def boundary_nodes(mesh):
    return np.flatnonzero(mesh.boundary_markers != INTERIOR)


def apply_dirichlet(system, trace, nodes=None):
    """Prescribe ``u = trace(x, y)`` on the boundary nodes and eliminate them."""
    mesh = system.mesh
    fixed = boundary_nodes(mesh) if nodes is None else np.asarray(nodes, dtype=np.int64)
    p = mesh.vertices[fixed]
    values = np.broadcast_to(np.asarray(trace(p[:, 0], p[:, 1]), dtype=float), (len(fixed),)).copy()
    mask = np.ones(system.n, dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    A = system.full_matrix
    A_ff = A[free][:, free].tocsr()
    lift = np.zeros(system.n)
    lift[fixed] = values
    b = -(A @ lift)[free]
    return SparseSystem(A_ff, b, free, fixed, values, mesh, system.gamma, A, bc="dirichlet")


def pcg(A, b, tol=1e-10, max_iters=None, x0=None):
    """Jacobi-preconditioned conjugate gradients on ``A x = b``.

    Converged when ``||b - A x|| <= tol * ||b||`` for the true residual.
    When ``tol`` is below what rounding allows, the recursive residual keeps
    meeting it while the true one does not; CG then restarts from the true
    residual and stops once that has stagnated within ``16 eps ||A|| ||x||``
    (the attainable accuracy).
    """
    n = len(b)
    max_iters = 10 * n + 100 if max_iters is None else max_iters
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0, 0.0)
    dinv = 1.0 / A.diagonal()
    attainable = 16.0 * np.finfo(float).eps * abs(A).sum(axis=1).max()
    r = b - A @ x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    it = 0
    rel = np.linalg.norm(r) / bnorm
    last_true = math.inf
    while it < max_iters:
        if rel <= tol:
            r_true = b - A @ x
            rel = np.linalg.norm(r_true) / bnorm
            if rel <= tol:
                return CGResult(x, it, rel)
            if rel <= attainable * np.linalg.norm(x) / bnorm and rel >= 0.5 * last_true:
                return CGResult(x, it, rel)
            last_true = rel
            # recurrence drifted: restart from the true residual
            r = r_true
            z = dinv * r
            p = z.copy()
            rz = r @ z
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        it += 1
        rel = np.linalg.norm(r) / bnorm
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    rel = np.linalg.norm(b - A @ x) / bnorm
    if rel <= tol:
        return CGResult(x, it, rel)
    raise ConvergenceError(f"CG did not converge in {max_iters} iterations", rel)


def solve_cg(system, tol=1e-10, max_iters=None):
    """Solve a constrained system; returns the full nodal vector with iteration count."""
    if not 0 < tol <= 1e-4:
        raise ValueError("tol must lie in (0, 1e-4]")
    u = np.zeros(system.n)
    u[system.fixed] = system.fixed_values
    if len(system.free) == 0:
        return CGResult(u, 0, 0.0)
    res = pcg(system.matrix, system.rhs, tol, max_iters)
    u[system.free] = res.x
    return CGResult(u, res.iterations, res.residual)


def boundary_edges(mesh):
    """Boundary edges ``(ne, 2)`` oriented so the domain lies to their left."""
    T = mesh.triangles
    e = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
    es = np.sort(e, axis=1)
    _, inv, counts = np.unique(es, axis=0, return_inverse=True, return_counts=True)
    return e[counts[inv.ravel()] == 1]


def neumann_load(mesh, g):
    """Load vector ``int g phi_i ds`` and ``int g ds`` (two-point Gauss per edge).

    ``g(points, normals)`` receives ``(n, 2)`` arrays and returns ``(n,)`` values.
    """
    E = boundary_edges(mesh)
    p0, p1 = mesh.vertices[E[:, 0]], mesh.vertices[E[:, 1]]
    d = p1 - p0
    length = np.hypot(d[:, 0], d[:, 1])
    normal = np.stack([d[:, 1], -d[:, 0]], 1) / length[:, None]
    load = np.zeros(mesh.n_vertices)
    total = 0.0
    abs_total = 0.0
    for s in (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)):
        q = p0 + s * d
        gv = np.asarray(g(q, normal), dtype=float) * 0.5 * length
        np.add.at(load, E[:, 0], (1.0 - s) * gv)
        np.add.at(load, E[:, 1], s * gv)
        total += gv.sum()
        abs_total += np.abs(gv).sum()
    return load, total, abs_total


def solve_neumann(system, g, tol=1e-10, max_iters=None):
    """Mean-zero solution of the Neumann problem with boundary flux density ``g``."""
    mesh = system.mesh
    load, total, abs_total = neumann_load(mesh, g)
    if abs(total) > 1e-10 * max(1.0, abs_total):
        raise CompatibilityError(total)
    load -= load.mean()
    res = pcg(system.full_matrix, load, tol, max_iters)
    u = res.x - res.x.mean()
    return CGResult(u, res.iterations, res.residual)


def gradient_field(mesh, u):
    """Constant gradient of the linear interpolant on every triangle."""
    G, _ = _shape_gradients(mesh)
    return np.einsum("tid,ti->td", G, np.asarray(u)[mesh.triangles])


def solve_dirichlet(mesh, eta, trace, tol=1e-10, max_iters=None):
    """Assemble, constrain and solve; returns a ``FemSolution``."""
    system = apply_dirichlet(assemble_stiffness(mesh, eta), trace)
    res = solve_cg(system, tol, max_iters)
    return FemSolution(mesh, res.x, gradient_field(mesh, res.x), system.gamma, "dirichlet", res.iterations)


def solve_neumann_problem(mesh, eta, g, tol=1e-10, max_iters=None):
    system = assemble_stiffness(mesh, eta)
    res = solve_neumann(system, g, tol, max_iters)
    return FemSolution(mesh, res.x, gradient_field(mesh, res.x), system.gamma, "neumann", res.iterations)


def _region_mask(mesh, region):
    if region is None:
        return np.ones(mesh.n_triangles, dtype=bool)
    if np.ndim(region) == 0:
        return mesh.region_tags == int(region)
    xmin, xmax, ymin, ymax = region
    c = mesh.centroids()
    return (c[:, 0] >= xmin) & (c[:, 0] <= xmax) & (c[:, 1] >= ymin) & (c[:, 1] <= ymax)


def max_gradient(solution, region=None):
    """Largest per-triangle ``|grad u|``.

    ``region`` is ``None`` (whole domain), a region tag, or a window
    ``(xmin, xmax, ymin, ymax)`` selecting triangles by centroid.
    """
    mask = _region_mask(solution.mesh, region)
    if not mask.any():
        raise ValueError(f"no triangles in region {region!r}")
    return float(np.hypot(*solution.gradients[mask].T).max())


def argmax_gradient(solution):
    """Centroid of the triangle carrying the largest ``|grad u|``."""
    k = int(np.argmax(np.hypot(*solution.gradients.T)))
    return solution.mesh.centroids()[k]


def local_gradient_average(solution, center, r):
    """Area-weighted mean of ``|grad u|`` over triangles whose centroid lies in the ball.

    Triangles are not clipped: a triangle counts fully when its centroid is
    inside ``B_r(center)``.
    """
    mesh = solution.mesh
    H = mesh.half_side()
    cx, cy = center
    if r <= 0 or abs(cx) + r > H or abs(cy) + r > H:
        raise ValueError("ball must lie inside the domain")
    c = mesh.centroids()
    inside = np.hypot(c[:, 0] - cx, c[:, 1] - cy) < r
    if not inside.any():
        raise ValueError("no triangle centroid inside the ball; refine the mesh")
    area = np.abs(mesh.signed_areas())[inside]
    mag = np.hypot(*solution.gradients[inside].T)
    return float((area * mag).sum() / area.sum())


_SIDES = {"bottom": BOTTOM, "right": RIGHT, "top": TOP, "left": LEFT}


def _perimeter_position(p, H):
    """Counter-clockwise arc position starting at the lower-left corner."""
    x, y = p[:, 0], p[:, 1]
    s = np.where(y == -H, x + H, np.nan)
    s = np.where(np.isnan(s) & (x == H), 2 * H + y + H, s)
    s = np.where(np.isnan(s) & (y == H), 4 * H + H - x, s)
    s = np.where(np.isnan(s) & (x == -H), 6 * H + H - y, s)
    return s


def side_nodes(mesh, sides):
    """Nodes on the requested square sides (corners belong to both adjacent sides)."""
    H = mesh.half_side()
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    tests = {BOTTOM: y == -H, RIGHT: x == H, TOP: y == H, LEFT: x == -H}
    mask = np.zeros(mesh.n_vertices, dtype=bool)
    for s in sides:
        code = _SIDES.get(s) if isinstance(s, str) else int(s)
        if code not in tests:
            raise ValueError(f"unknown boundary marker {s!r}")
        mask |= tests[code]
    return np.flatnonzero(mask)


def boundary_trace(solution, sides):
    """Ordered ``(arc_position, u)`` samples along the requested sides."""
    mesh = solution.mesh
    H = mesh.half_side()
    ids = side_nodes(mesh, sides)
    p = mesh.vertices[ids]
    s = _perimeter_position(p, H)
    codes = {(_SIDES[x] if isinstance(x, str) else int(x)) for x in sides}
    if codes == {LEFT, BOTTOM}:
        # keep the lower-left corner contiguous with the left side
        s = np.where(s == 0.0, 8 * H, s)
    order = np.lexsort((ids, s))
    return np.stack([s[order], solution.u[ids[order]]], 1)


def discrete_boundary_flux(system, u):
    """Residual ``(A u)_i`` at boundary nodes; sums to zero for Neumann solutions."""
    ids = boundary_nodes(system.mesh)
    return (system.full_matrix @ u)[ids]


def write_solution(solution, path):
    """ASCII export: ``nv nt``, ``x y u`` rows, then ``gx gy tag`` rows."""
    mesh = solution.mesh
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles}\n")
        for (x, y), val in zip(mesh.vertices, solution.u):
            fh.write(f"{float(x)!r} {float(y)!r} {float(val)!r}\n")
        for (gx, gy), tag in zip(solution.gradients, mesh.region_tags):
            fh.write(f"{float(gx)!r} {float(gy)!r} {int(tag)}\n")


def read_solution(path):
    """Return ``(points, u, gradients, tags)`` from a solution export."""
    with open(path) as fh:
        nv, nt = (int(s) for s in fh.readline().split())
        rows = np.array([[float(v) for v in fh.readline().split()] for _ in range(nv)]).reshape(nv, 3)
        grows = np.array([[float(v) for v in fh.readline().split()] for _ in range(nt)]).reshape(nt, 3)
    return rows[:, :2], rows[:, 2], grows[:, :2], grows[:, 2].astype(np.int8)
