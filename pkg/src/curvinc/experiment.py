"""The K-sweep that estimates the growth exponent mu, plus solver validation
and the partial-boundary comparison of two inclusions."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import fem
from .analysis import circle_exact_solution
from .geometry import ABOVE, InterfaceSpec, refined_mesh

REFERENCE_ETA = 2.0
REFERENCE_HALF_SIDE = 5.0
REFERENCE_K_VALUES = tuple(1.5**j for j in range(10))
REFERENCE_MU = {"parabolic": 0.027, "hyperbolic": 0.1099}
DEFAULT_MESH_LEVEL = 2
# Sliver cells where steep interfaces exit near a corner amplify the CG
# residual into gradient error (1e-10 leaves ~1e-2 in max|grad u|). CG stops
# at the rounding floor when this tolerance is out of reach.
SOLVER_TOL = 1e-15

# minimum ball-averaged |grad u| for the reference setup at K=1 (25 centres on
# {-3,-1.5,0,1.5,3}^2, r=0.5), measured once on mesh level 3; see
# gradient_floor_baseline() to regenerate
GRADIENT_FLOOR_BASELINE = 2.8236768327963726  # gradient_floor_baseline(level=3), frozen
FLOOR_CENTERS = tuple((x, y) for y in (-3.0, -1.5, 0.0, 1.5, 3.0) for x in (-3.0, -1.5, 0.0, 1.5, 3.0))


def reference_trace(x, y):
    """Dirichlet data f = 2 x1 + 3 x2."""
    return 2.0 * x + 3.0 * y


class SweepError(RuntimeError):
    def __init__(self, K, cause):
        super().__init__(f"sweep failed at K={K!r}: {cause}")
        self.K = K
        self.cause = cause


class Regression(NamedTuple):
    mu: float
    intercept: float
    r_squared: float


@dataclass
class SweepRecord:
    family: str
    K_values: list
    max_grads: list
    mesh_level: int
    eta: float
    A: float = 1.0
    n_vertices: list = field(default_factory=list)
    n_triangles: list = field(default_factory=list)
    solve_iters: list = field(default_factory=list)
    runtime_ms: list = field(default_factory=list)
    argmax: list = field(default_factory=list)
    regression: Regression | None = None

    def __post_init__(self):
        if len(self.K_values) != len(self.max_grads):
            raise ValueError("K_values and max_grads differ in length")
        if any(b <= a for a, b in zip(self.K_values, self.K_values[1:])):
            raise ValueError("K_values must be strictly increasing")

    @property
    def mu(self):
        return self.regression.mu

    def csv(self):
        lines = ["family,K,mesh_level,n_vertices,n_triangles,max_grad,solve_iters,runtime_ms"]
        for i, K in enumerate(self.K_values):
            lines.append(
                f"{self.family},{K!r},{self.mesh_level},{self.n_vertices[i]},{self.n_triangles[i]},"
                f"{self.max_grads[i]!r},{self.solve_iters[i]},{self.runtime_ms[i]:.1f}"
            )
        return "\n".join(lines) + "\n"

    def summary_line(self):
        r = self.regression
        return f"{self.family},{r.mu!r},{r.intercept!r},{r.r_squared!r}"


def fit_loglog(pairs):
    """Ordinary least squares of log(value) on log(K); the slope estimates mu."""
    pairs = list(pairs)
    if len(pairs) < 2:
        raise ValueError("need at least two (K, value) pairs")
    K = np.array([p[0] for p in pairs], dtype=float)
    v = np.array([p[1] for p in pairs], dtype=float)
    if np.any(K <= 0) or np.any(v <= 0):
        raise ValueError("log-log fit needs positive K and values")
    x, y = np.log(K), np.log(v)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx == 0:
        raise ValueError("all K values coincide")
    slope = np.sum((x - xm) * (y - ym)) / sxx
    intercept = ym - slope * xm
    ss_res = np.sum((y - intercept - slope * x) ** 2)
    ss_tot = np.sum((y - ym) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return Regression(float(slope), float(intercept), float(r2))


def family_spec(family, K, A=1.0, half_side=REFERENCE_HALF_SIDE):
    if family == "parabolic":
        return InterfaceSpec.parabolic(K, domain_half_side=half_side)
    if family == "hyperbolic":
        return InterfaceSpec.hyperbolic(K, A=A, domain_half_side=half_side)
    raise ValueError(f"sweep family must be parabolic or hyperbolic, got {family!r}")


def solve_reference_case(spec, mesh_level=DEFAULT_MESH_LEVEL, eta=REFERENCE_ETA, trace=reference_trace, tol=SOLVER_TOL):
    mesh = refined_mesh(spec, mesh_level)
    return fem.solve_dirichlet(mesh, eta, trace, tol=tol)


def _sweep_point(family, K, mesh_level, eta, trace, A, tol):
    t0 = time.perf_counter()
    try:
        sol = solve_reference_case(family_spec(family, K, A), mesh_level, eta, trace, tol)
    except Exception as exc:  # report which K broke
        raise SweepError(K, exc) from exc
    ms = 1e3 * (time.perf_counter() - t0)
    return sol.mesh.n_vertices, sol.mesh.n_triangles, fem.max_gradient(sol), sol.iterations, ms, fem.argmax_gradient(sol)


def run_sweep(family, mesh_level=DEFAULT_MESH_LEVEL, eta=REFERENCE_ETA, trace=reference_trace,
              K_values=REFERENCE_K_VALUES, A=1.0, threads=1, tol=SOLVER_TOL):
    """Solve the Dirichlet problem for every K and fit max|grad u| ~ K^mu."""
    family_spec(family, 1.0, A)  # validate early
    K_values = list(K_values)
    job = lambda K: _sweep_point(family, K, mesh_level, eta, trace, A, tol)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, K_values))
    else:
        results = [job(K) for K in K_values]
    rec = SweepRecord(family, K_values, [r[2] for r in results], mesh_level, eta, A,
                      n_vertices=[r[0] for r in results], n_triangles=[r[1] for r in results],
                      solve_iters=[r[3] for r in results], runtime_ms=[r[4] for r in results],
                      argmax=[tuple(r[5]) for r in results])
    rec.regression = fit_loglog(zip(rec.K_values, rec.max_grads))
    return rec


def is_monotone(values, rel_tol=0.01):
    """Nondecreasing up to a relative dip of ``rel_tol``."""
    return all(b >= a * (1.0 - rel_tol) for a, b in zip(values, values[1:]))


class StabilityGate(NamedTuple):
    coarse: SweepRecord
    fine: SweepRecord
    delta_mu: float
    passed: bool


def mesh_stability(family, levels=(DEFAULT_MESH_LEVEL - 1, DEFAULT_MESH_LEVEL), threshold=0.02, **kw):
    """Compare mu at two consecutive mesh levels."""
    coarse = run_sweep(family, mesh_level=levels[0], **kw)
    fine = run_sweep(family, mesh_level=levels[1], **kw)
    d = abs(fine.mu - coarse.mu)
    return StabilityGate(coarse, fine, d, d < threshold)


# --------------------------------------------------------------------------
# solver validation against the disk oracle


class ConvergenceRow(NamedTuple):
    level: int
    h: float
    n_vertices: int
    l2_error: float
    energy_error: float
    l2_rate: float
    energy_rate: float


# degree-2 rule on the edge midpoints
_MID = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])


def _lumped_mass(mesh):
    area = np.abs(mesh.signed_areas())
    m = np.zeros(mesh.n_vertices)
    np.add.at(m, mesh.triangles.ravel(), np.repeat(area / 3.0, 3))
    return m


def oracle_errors(solution, oracle):
    """Relative nodal L2 (lumped) and energy errors against the disk oracle.

    Each triangle is compared with the oracle field of its own phase,
    continued across the circle where the polygon and the circle disagree.
    """
    mesh = solution.mesh
    V = mesh.vertices
    exact = oracle.u(V[:, 0], V[:, 1])
    m = _lumped_mass(mesh)
    err = solution.u - exact
    l2 = math.sqrt(np.sum(m * err**2))
    l2_norm = math.sqrt(np.sum(m * exact**2))
    P = V[mesh.triangles]  # (nt, 3, 2)
    area = np.abs(mesh.signed_areas())
    inside = mesh.region_tags == ABOVE
    e2 = np.zeros(mesh.n_triangles)
    n2 = np.zeros(mesh.n_triangles)
    for bary in _MID:
        q = np.einsum("k,tkd->td", bary, P)
        gix, giy = oracle.grad_i(q[:, 0], q[:, 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            gex, gey = oracle.grad_e(q[:, 0], q[:, 1])
        gx = np.where(inside, gix, gex)
        gy = np.where(inside, giy, gey)
        dx = solution.gradients[:, 0] - gx
        dy = solution.gradients[:, 1] - gy
        e2 += solution.gamma * (dx * dx + dy * dy) * area / 3.0
        n2 += solution.gamma * (gx * gx + gy * gy) * area / 3.0
    return l2 / l2_norm, math.sqrt(e2.sum() / n2.sum())


def mesh_size(mesh):
    T = mesh.triangles
    V = mesh.vertices
    e = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
    d = V[e[:, 0]] - V[e[:, 1]]
    return float(np.hypot(d[:, 0], d[:, 1]).max())


def convergence_study(a=1.0, eta=REFERENCE_ETA, levels=4, g0=(1.0, 0.0), n_horizontal=20, n_vertical=10, tol=1e-12):
    """Errors of the disk problem under uniform refinement (``levels`` meshes).

    Rates are log2 ratios between consecutive levels; ``nan`` marks a
    saturated pair (both errors at round-off level).
    """
    if levels < 3:
        raise ValueError("need at least three levels")
    oracle = circle_exact_solution(a, eta, g0)
    spec = InterfaceSpec.circular(a)
    rows = []
    prev = None
    for level in range(levels):
        mesh = refined_mesh(spec, level, n_horizontal=n_horizontal, n_vertical=n_vertical)
        sol = fem.solve_dirichlet(mesh, eta, oracle.u, tol=tol)
        l2, en = oracle_errors(sol, oracle)
        h = mesh_size(mesh)
        if prev is None:
            rl2 = ren = float("nan")
        else:
            rl2 = _rate(prev[0], l2, prev[2] / h)
            ren = _rate(prev[1], en, prev[2] / h)
        rows.append(ConvergenceRow(level, h, mesh.n_vertices, l2, en, rl2, ren))
        prev = (l2, en, h)
    return rows


def _rate(e_coarse, e_fine, ratio, floor=1e-9):
    if e_coarse < floor and e_fine < floor:
        return float("nan")
    return math.log(e_coarse / e_fine) / math.log(ratio)


# --------------------------------------------------------------------------
# gradient floor


def gradient_floor(K=1.0, mesh_level=DEFAULT_MESH_LEVEL, r=0.5, centers=FLOOR_CENTERS, family="parabolic"):
    """Smallest ball-averaged |grad u| over the sample centres."""
    sol = solve_reference_case(family_spec(family, K), mesh_level)
    vals = [fem.local_gradient_average(sol, c, r) for c in centers]
    return min(vals), vals


def gradient_floor_baseline(level=3):
    return gradient_floor(mesh_level=level)[0]


# --------------------------------------------------------------------------
# partial boundary comparison


class TraceComparison(NamedTuple):
    l2: float
    max: float
    positions: np.ndarray
    difference: np.ndarray


def top_flux(half_side=REFERENCE_HALF_SIDE):
    """g = t (1 - t^2) with t = x / H on the top side, zero elsewhere.

    Odd and cubic, so its integral over the top vanishes exactly under the
    two-point Gauss rule on any edge partition; it also vanishes at the corners.
    """
    H = half_side

    def g(points, normals):
        on_top = normals[:, 1] > 0.5
        t = points[:, 0] / H
        return np.where(on_top, t * (1.0 - t * t), 0.0)

    return g


def _check_cap(spec):
    if spec.kind != "cap":
        raise ValueError("compare_inclusions expects cap inclusions")
    H = spec.domain_half_side
    x0, y0 = spec.center
    if not (abs(x0) + spec.cap_half_width < H and y0 > -H and spec.cap_top < H):
        raise ValueError("cap inclusion touches or crosses the outer boundary")


def compare_inclusions(spec_D, spec_Dt, eta=REFERENCE_ETA, eta_t=None, g=None, gamma0=("top",),
                       mesh_level=0, samples=401, mesh_kw=None):
    """Difference of the Neumann-to-Dirichlet data of two inclusions on Gamma_0.

    Each trace is interpolated to a common set of arc positions and its
    mean along Gamma_0 is removed, since each mesh fixes its own gauge.
    """
    for s in (spec_D, spec_Dt):
        _check_cap(s)
    eta_t = eta if eta_t is None else eta_t
    g = g or top_flux(spec_D.domain_half_side)
    mesh_kw = mesh_kw or {}
    traces = []
    for spec, e in ((spec_D, eta), (spec_Dt, eta_t)):
        mesh = refined_mesh(spec, mesh_level, **mesh_kw)
        sol = fem.solve_neumann_problem(mesh, e, g)
        traces.append(fem.boundary_trace(sol, gamma0))
    lo = max(t[0, 0] for t in traces)
    hi = min(t[-1, 0] for t in traces)
    s = np.linspace(lo, hi, samples)
    vals = [np.interp(s, t[:, 0], t[:, 1]) for t in traces]
    vals = [v - np.trapezoid(v, s) / (hi - lo) for v in vals]
    d = vals[0] - vals[1]
    l2 = math.sqrt(np.trapezoid(d * d, s))
    return TraceComparison(l2, float(np.abs(d).max()), s, d)


def comparison_noise_floor(spec, eta=REFERENCE_ETA, mesh_level=0, n_horizontal=40, n_vertical=20):
    """Trace difference of one geometry meshed two slightly different ways."""
    a = dict(n_horizontal=n_horizontal, n_vertical=n_vertical)
    b = dict(n_horizontal=n_horizontal + 4, n_vertical=n_vertical + 2)
    _check_cap(spec)
    g = top_flux(spec.domain_half_side)
    traces = []
    for kw in (a, b):
        sol = fem.solve_neumann_problem(refined_mesh(spec, mesh_level, **kw), eta, g)
        traces.append(fem.boundary_trace(sol, ("top",)))
    s = np.linspace(max(t[0, 0] for t in traces), min(t[-1, 0] for t in traces), 401)
    vals = [np.interp(s, t[:, 0], t[:, 1]) for t in traces]
    vals = [v - np.trapezoid(v, s) / (s[-1] - s[0]) for v in vals]
    d = vals[0] - vals[1]
    return math.sqrt(np.trapezoid(d * d, s))
