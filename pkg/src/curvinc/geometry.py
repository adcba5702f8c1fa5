"""Interface families, admissibility checks and interface-conforming meshes.

Every inclusion lives in the square ``[-H, H]^2`` (``H = domain_half_side``).
Interfaces of the graph families (parabolic, hyperbolic, cap) are written as
``x2 = w(x1)``; the inclusion is the region above the curve (tag ``ABOVE``).
For the circular family the inclusion is the disk.

Meshes are sheared-structured: the interface polyline is always a grid line,
so no triangle is cut by it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

BELOW = 0
ABOVE = 1

INTERIOR, LEFT, RIGHT, TOP, BOTTOM = 0, 1, 2, 3, 4
MARKER_NAMES = {INTERIOR: "interior", LEFT: "left", RIGHT: "right", TOP: "top", BOTTOM: "bottom"}

KINDS = ("parabolic", "hyperbolic", "circular", "cap")


class MeshError(ValueError):
    """Raised when a mesh cannot be built or violates an invariant."""


class SamplingError(ValueError):
    """Raised when the admissibility window does not fit the interface."""


@dataclass(frozen=True)
class InterfaceSpec:
    """Parametric interface description.

    ``center`` is the apex of the graph families and the disk center of the
    circular family. ``K = 0`` is accepted for the parabolic family only and
    represents the flat interface.
    """

    kind: str
    K: float
    A: float = 1.0
    a: float = 1.0
    cap_height: float = 1.0
    domain_half_side: float = 5.0
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown interface kind {self.kind!r}")
        if self.K < 0 or (self.K == 0 and self.kind != "parabolic"):
            raise ValueError(f"K must be positive, got {self.K}")
        if self.domain_half_side <= 0:
            raise ValueError("domain_half_side must be positive")
        if self.kind == "hyperbolic" and self.A <= 0:
            raise ValueError("hyperbolic interfaces need A > 0")
        if self.kind == "circular" and not 0 < self.a < self.domain_half_side:
            raise ValueError("circle radius must satisfy 0 < a < domain_half_side")
        if self.kind == "cap" and self.cap_height <= 0:
            raise ValueError("cap_height must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @classmethod
    def parabolic(cls, K, **kw):
        return cls("parabolic", K, **kw)

    @classmethod
    def hyperbolic(cls, K, A=1.0, **kw):
        return cls("hyperbolic", K, A=A, **kw)

    @classmethod
    def circular(cls, a, center=(0.0, 0.0), **kw):
        # K is the Taylor coefficient of the lower arc at its apex
        return cls("circular", 1.0 / (2.0 * a), a=a, center=center, **kw)

    @classmethod
    def cap(cls, K, cap_height, apex=(0.0, 0.0), **kw):
        return cls("cap", K, cap_height=cap_height, center=apex, **kw)

    @property
    def side(self):
        return 2.0 * self.domain_half_side

    @property
    def cap_top(self):
        return self.center[1] + self.cap_height

    @property
    def cap_half_width(self):
        return math.sqrt(self.cap_height / self.K)

    def window(self, M=1.0):
        """Window sizes ``(b, h) = (sqrt(M)/K, 1/K)``."""
        return math.sqrt(M) / self.K, 1.0 / self.K


def eval_interface(spec, x1):
    """Interface profile ``w(x1)``; for circle and cap the lower boundary curve."""
    x1 = np.asarray(x1, dtype=float)
    u = x1 - spec.center[0]
    y0 = spec.center[1]
    if spec.kind in ("parabolic", "cap"):
        out = y0 + spec.K * u * u
    elif spec.kind == "hyperbolic":
        c = spec.A / spec.K
        out = y0 + spec.A * np.sqrt(u * u + c * c)
    else:
        out = y0 - np.sqrt(np.maximum(spec.a * spec.a - u * u, 0.0))
    return out if out.ndim else float(out)


def interface_derivatives(spec, x1):
    """Return ``(w'(x1), w''(x1), apex_curvature)``.

    The apex curvature is the geometric curvature ``|w''|/(1+w'^2)^{3/2}``
    evaluated at the apex ``x1 = center[0]``.
    """
    def d12(u):
        if spec.kind in ("parabolic", "cap"):
            return 2.0 * spec.K * u, 2.0 * spec.K
        if spec.kind == "hyperbolic":
            c = spec.A / spec.K
            r = math.sqrt(u * u + c * c)
            return spec.A * u / r, spec.A * c * c / r**3
        s = spec.a * spec.a - u * u
        if s <= 0:
            raise ValueError("x1 outside the circle's graph domain")
        return u / math.sqrt(s), spec.a**2 / s**1.5

    slope, second = d12(float(x1) - spec.center[0])
    s0, w0 = d12(0.0)
    kappa = abs(w0) / (1.0 + s0 * s0) ** 1.5
    return slope, second, kappa


def level_set(spec, x, y):
    """Signed indicator, positive inside the inclusion (tag ``ABOVE``)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if spec.kind == "circular":
        return spec.a - np.hypot(x - spec.center[0], y - spec.center[1])
    phi = y - eval_interface(spec, x)
    if spec.kind == "cap":
        phi = np.minimum(phi, spec.cap_top - y)
    return phi


def snap_to_interface(spec, x, y):
    """Move a point onto the exact interface (vertical projection for graphs)."""
    if spec.kind == "circular":
        cx, cy = spec.center
        r = math.hypot(x - cx, y - cy)
        return cx + spec.a * (x - cx) / r, cy + spec.a * (y - cy) / r
    if spec.kind == "cap" and abs(y - spec.cap_top) <= abs(y - eval_interface(spec, x)):
        return x, spec.cap_top
    return x, float(eval_interface(spec, x))


# ---------------------------------------------------------------------------
# admissibility
# ---------------------------------------------------------------------------

@dataclass
class AdmissibilityParams:
    L: float
    M: float
    delta: float
    K_minus: float
    K_plus: float
    b: float
    h: float
    K: float
    K_effective: float
    admissible: bool
    reasons: list = field(default_factory=list)


def check_admissibility(spec, M, n_samples=1000, delta=1.0, window=None):
    """Estimate the pinching constants of the interface around its apex.

    The profile is shifted so the apex sits at the origin and ``w(x)/x^2`` is
    sampled on ``0 < |x| < b``. The apex limit ``w''(0)/2`` belongs to the
    supremum/infimum and is included in the extrema. ``window`` overrides the
    sampling half-width ``b = sqrt(M)/K`` (a circle of radius ``a`` never fits
    the default window, since ``b = 2a sqrt(M) > a``).
    """
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    if M < 1:
        raise ValueError("M must be >= 1")
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    K = spec.K
    b, h = spec.window(M)
    if window is not None:
        b = float(window)
    limit = spec.a if spec.kind == "circular" else spec.domain_half_side
    if b > limit:
        raise SamplingError(f"window b={b:.6g} exceeds the sampling domain {limit:.6g}")

    x = b * np.arange(1, n_samples + 1) / n_samples
    x = np.concatenate([-x[::-1], x]) + spec.center[0]
    w0 = eval_interface(spec, spec.center[0])
    u = x - spec.center[0]
    ratios = (eval_interface(spec, x) - w0) / (u * u)
    K_eff = 0.5 * interface_derivatives(spec, spec.center[0])[1]
    ratios = np.append(ratios, K_eff)
    K_minus, K_plus = float(ratios.min()), float(ratios.max())
    L = (K_plus - K_minus) / K ** (1.0 - delta)

    reasons = []
    slack = 1e-9 * K
    if K_minus <= 0:
        reasons.append("K_minus <= 0")
    if not K_minus - slack <= K <= K_plus + slack:
        reasons.append(f"K={K:.6g} outside [K_-, K_+]; effective Taylor coefficient is {K_eff:.6g}")
    for name, val in (("K_minus", K_minus), ("K_plus", K_plus)):
        if val > 0 and not (1.0 / M - 1e-12 <= val / K <= M + 1e-12):
            reasons.append(f"{name}/K={val / K:.6g} outside [1/M, M]")
    return AdmissibilityParams(L=L, M=M, delta=delta, K_minus=K_minus, K_plus=K_plus, b=b, h=h,
                               K=K, K_effective=K_eff, admissible=not reasons, reasons=reasons)


# ---------------------------------------------------------------------------
# meshes
# ---------------------------------------------------------------------------

@dataclass
class Mesh:
    vertices: np.ndarray        # (nv, 2)
    triangles: np.ndarray       # (nt, 3), counter-clockwise
    region_tags: np.ndarray     # (nt,) BELOW / ABOVE
    boundary_markers: np.ndarray  # (nv,) INTERIOR / LEFT / RIGHT / TOP / BOTTOM
    interface_edges: np.ndarray  # (ne, 2)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def half_side(self):
        return float(np.abs(self.vertices).max())


def boundary_markers_for(vertices, H):
    x, y = vertices[:, 0], vertices[:, 1]
    markers = np.full(len(vertices), INTERIOR, dtype=np.int8)
    markers[y == -H] = BOTTOM
    markers[y == H] = TOP
    markers[x == H] = RIGHT
    markers[x == -H] = LEFT
    return markers


def _angles(p):
    """Interior angles (degrees) of triangles given as (..., 3, 2) arrays."""
    out = []
    for i in range(3):
        a = p[..., (i + 1) % 3, :] - p[..., i, :]
        b = p[..., (i + 2) % 3, :] - p[..., i, :]
        cross = np.abs(a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0])
        dot = (a * b).sum(-1)
        out.append(np.degrees(np.arctan2(cross, dot)))
    return np.stack(out, axis=-1)


def mesh_quality(mesh):
    """Return ``(min_angle_degrees, max_aspect_ratio)`` over all triangles.

    The aspect ratio is longest edge over shortest altitude scaled so that the
    equilateral triangle has ratio 1.
    """
    p = mesh.vertices[mesh.triangles]
    ang = _angles(p)
    edges = np.stack([np.linalg.norm(p[:, (i + 1) % 3] - p[:, i], axis=1) for i in range(3)], axis=1)
    area = np.abs(mesh.signed_areas())
    lmax = edges.max(axis=1)
    min_alt = 2.0 * area / lmax
    aspect = lmax / min_alt * (math.sqrt(3.0) / 2.0)
    return float(ang.min()), float(aspect.max())


def _graded_offsets(length, n, first):
    """``n+1`` offsets from 0 to ``length`` whose first step is about ``first``."""
    if length <= 0.0:
        return np.zeros(n + 1)
    if n == 1 or first * n >= length:
        return np.linspace(0.0, length, n + 1)
    f = lambda r: first * (r**n - 1.0) / (r - 1.0) - length
    hi = 2.0
    while f(hi) < 0:
        hi *= 2.0
    r = brentq(f, 1.0 + 1e-12, hi, xtol=1e-14)
    off = first * (r ** np.arange(n + 1) - 1.0) / (r - 1.0)
    off[-1] = length
    return off


def _breakpoints(spec, x):
    """Interface ordinates in a column and whether each lies inside the square."""
    H = spec.domain_half_side
    if spec.kind == "cap":
        top = spec.cap_top
        if abs(x - spec.center[0]) < spec.cap_half_width:
            return [min(float(eval_interface(spec, x)), top), top], [True, True]
        return [top, top], [False, False]
    w = float(eval_interface(spec, x)) if spec.K > 0 else spec.center[1]
    tol = 1e-12 * H
    if w >= H - tol:
        return [H], [False]
    if w <= -H + tol:
        return [-H], [False]
    return [w], [True]


def _special_abscissae(spec):
    """Points where the interface leaves the square or a cap closes."""
    H = spec.domain_half_side
    x0 = spec.center[0]
    pts = []
    if spec.kind == "cap":
        pts = [x0 - spec.cap_half_width, x0 + spec.cap_half_width]
    elif spec.K > 0:
        g = lambda x: float(eval_interface(spec, x)) - H
        for end in (-H, H):
            if g(x0) < 0 < g(end):
                pts.append(brentq(g, min(x0, end), max(x0, end), xtol=1e-15, rtol=1e-15))
    return [p for p in pts if -H < p < H]


def _column_abscissae(spec, n_horizontal, grading):
    H = spec.domain_half_side
    hmax = 2.0 * H / n_horizontal
    h0 = min(0.25 / spec.K, hmax) if spec.K > 0 else hmax
    x0 = min(max(spec.center[0], -H), H)
    special = _special_abscissae(spec) + [-H, H]

    def slope(x):
        _, active = _breakpoints(spec, x)
        if spec.K == 0 or not active[0]:
            return 0.0
        return interface_derivatives(spec, x)[0]

    pts = [x0]
    sizes = [h0]
    for direction, end in ((1.0, H), (-1.0, -H)):
        x, s, prev = x0, 0.0, h0
        while direction * (end - x) > 1e-12:
            ds = min(hmax, h0 + (grading - 1.0) * s)
            dx = ds / math.sqrt(1.0 + slope(x) ** 2)
            dx = ds / math.sqrt(1.0 + slope(x + 0.5 * direction * dx) ** 2)
            # past an exit the slope drops to zero; keep the spacing graded
            dx = min(dx, max(grading, 1.0) * prev)
            prev = dx
            x += direction * dx
            s += ds
            if direction * (end - x) > 1e-12:
                pts.append(x)
                sizes.append(dx)
    pts = np.array(pts)
    sizes = np.array(sizes)
    keep = np.ones(len(pts), dtype=bool)
    for p in special:
        keep &= np.abs(pts - p) > 0.5 * sizes
    xs = np.unique(np.concatenate([pts[keep], special]))
    return xs


def _choose_split(p):
    """Split quad ``p = [L0, R0, R1, L1]`` (ccw) minimising the largest angle."""
    options = [((0, 1, 2), (0, 2, 3)), ((0, 1, 3), (1, 2, 3))]
    best, best_score = None, None
    for opt in options:
        tri = np.array([[p[i] for i in t] for t in opt])
        d1 = tri[:, 1] - tri[:, 0]
        d2 = tri[:, 2] - tri[:, 0]
        area = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(area <= 0):
            continue
        score = _angles(tri).max()
        if best is None or score < best_score - 1e-9:
            best, best_score = opt, score
    return best


def _build_from_columns(spec, xs, n_vertical):
    """Assemble the column mesh. Each column is split into segments by the
    interface ordinates; segments of zero length collapse to a single node."""
    H = spec.domain_half_side
    cols = [_breakpoints(spec, x) for x in xs]
    nseg = len(cols[0][0]) + 1
    if spec.kind == "cap":
        seg_tags = [BELOW, ABOVE, BELOW]
    else:
        seg_tags = [BELOW, ABOVE]

    # local interface edge length: target for the first vertical spacing
    bk = np.array([c[0] for c in cols])
    seg_len = np.hypot(np.diff(xs)[:, None], np.diff(bk, axis=0)).min(axis=1)
    local = np.empty(len(xs))
    local[0], local[-1] = seg_len[0], seg_len[-1]
    local[1:-1] = 0.5 * (seg_len[:-1] + seg_len[1:])

    verts = []
    col_ids = []
    for j, x in enumerate(xs):
        ys = [-H] + list(cols[j][0]) + [H]
        ids_per_seg = []
        prev_id = None
        for s in range(nseg):
            lo, hi = ys[s], ys[s + 1]
            n = n_vertical
            if hi - lo <= 1e-12 * H:
                if prev_id is None:
                    verts.append((x, lo))
                    prev_id = len(verts) - 1
                ids_per_seg.append([prev_id] * (n + 1))
                continue
            length = hi - lo
            t = local[j]
            if s == 0:
                yy = hi - _graded_offsets(length, n, t)[::-1]
            elif s == nseg - 1:
                yy = lo + _graded_offsets(length, n, t)
            else:
                n1 = n // 2
                half = _graded_offsets(0.5 * length, n1, t)
                other = _graded_offsets(0.5 * length, n - n1, t)
                yy = np.concatenate([lo + half, hi - other[::-1][1:]])
            yy[0], yy[-1] = lo, hi
            ids = []
            for k, y in enumerate(yy):
                if k == 0 and prev_id is not None:
                    ids.append(prev_id)
                    continue
                verts.append((x, float(y)))
                ids.append(len(verts) - 1)
            prev_id = ids[-1]
            ids_per_seg.append(ids)
        col_ids.append(ids_per_seg)

    V = np.array(verts, dtype=float)
    tris, tags = [], []
    for j in range(len(xs) - 1):
        for s in range(nseg):
            L, R = col_ids[j][s], col_ids[j + 1][s]
            for k in range(n_vertical):
                quad = [L[k], R[k], R[k + 1], L[k + 1]]
                uniq = list(dict.fromkeys(quad))
                if len(uniq) < 3:
                    continue
                if len(uniq) == 3:
                    tri = uniq
                    d1 = V[tri[1]] - V[tri[0]]
                    d2 = V[tri[2]] - V[tri[0]]
                    if d1[0] * d2[1] - d1[1] * d2[0] <= 0:
                        raise MeshError(f"degenerate collapsed cell in column {j}")
                    tris.append(tri)
                    tags.append(seg_tags[s])
                    continue
                split = _choose_split(V[quad])
                if split is None:
                    raise MeshError(f"cannot triangulate cell ({j}, {s}, {k})")
                for t in split:
                    tris.append([quad[i] for i in t])
                    tags.append(seg_tags[s])

    iface = []
    for j in range(len(xs) - 1):
        for bi in range(nseg - 1):
            if not (cols[j][1][bi] or cols[j + 1][1][bi]):
                continue
            a = col_ids[j][bi][-1]
            b = col_ids[j + 1][bi][-1]
            if a != b:
                iface.append((a, b))
    return V, np.array(tris, dtype=np.int64), np.array(tags, dtype=np.int8), np.array(iface, dtype=np.int64).reshape(-1, 2)


def _square_loop(half, m, center=(0.0, 0.0)):
    """``4m`` points on a square boundary, ccw, starting at the lower-right corner."""
    cx, cy = center
    t = np.arange(m) / m
    right = np.stack([np.full(m, half), -half + 2 * half * t], 1)
    top = np.stack([half - 2 * half * t, np.full(m, half)], 1)
    left = np.stack([np.full(m, -half), half - 2 * half * t], 1)
    bottom = np.stack([-half + 2 * half * t, np.full(m, -half)], 1)
    return np.concatenate([right, top, left, bottom]) + np.array([cx, cy])


def _circle_mesh(spec, n_horizontal, n_vertical):
    """O-grid: structured inner square, ring up to the circle, ring out to the square."""
    H = spec.domain_half_side
    a = spec.a
    c = np.array(spec.center)
    if np.any(np.abs(c) + a >= H):
        raise MeshError("circle must lie strictly inside the square")
    m = max(2, n_horizontal // 2)
    n_in = max(2, n_vertical // 2)
    n_out = max(2, n_vertical)
    s = 0.5 * a / math.sqrt(2.0) * 1.2

    g = np.linspace(-s, s, m + 1)
    gx, gy = np.meshgrid(g, g, indexing="ij")
    grid_ids = np.arange((m + 1) ** 2).reshape(m + 1, m + 1)
    verts = [np.stack([gx.ravel(), gy.ravel()], 1) + c]

    j = np.arange(4 * m)
    side, r = j // m, j % m
    gi = np.select([side == 0, side == 1, side == 2, side == 3], [np.full_like(r, m), m - r, np.zeros_like(r), r])
    gk = np.select([side == 0, side == 1, side == 2, side == 3], [r, np.full_like(r, m), m - r, np.zeros_like(r)])
    inner_loop = grid_ids[gi, gk]
    sq = verts[0][inner_loop]
    theta = -0.25 * math.pi + 2.0 * math.pi * j / (4 * m)
    circ = c + a * np.stack([np.cos(theta), np.sin(theta)], 1)
    outer = _square_loop(H, m)

    arc = 2.0 * math.pi * a / (4 * m)
    ray = np.linalg.norm(outer - circ, axis=1).mean()
    t_out = _graded_offsets(1.0, n_out, min(arc / ray, 1.0 / n_out))

    rings = [inner_loop]
    nv = len(verts[0])
    layers = [(sq + (circ - sq) * (k / n_in)) for k in range(1, n_in + 1)]
    layers[-1] = circ
    layers += [circ + (outer - circ) * t for t in t_out[1:]]
    layers[-1] = outer
    for pts in layers:
        verts.append(pts)
        rings.append(np.arange(nv, nv + len(pts)))
        nv += len(pts)
    V = np.concatenate(verts)

    tris, tags = [], []
    for i in range(m):
        for k in range(m):
            quad = [grid_ids[i, k], grid_ids[i + 1, k], grid_ids[i + 1, k + 1], grid_ids[i, k + 1]]
            for t in _choose_split(V[quad]):
                tris.append([quad[q] for q in t])
                tags.append(ABOVE)
    nr = len(rings)
    for layer in range(nr - 1):
        tag = ABOVE if layer < n_in else BELOW
        inner, outer_ids = rings[layer], rings[layer + 1]
        for jj in range(4 * m):
            j1 = (jj + 1) % (4 * m)
            # ccw: inner loop runs ccw, so go outward on the far side
            quad = [outer_ids[jj], outer_ids[j1], inner[j1], inner[jj]]
            pts = V[quad]
            d1, d2 = pts[1] - pts[0], pts[2] - pts[0]
            if d1[0] * d2[1] - d1[1] * d2[0] < 0:
                quad = quad[::-1]
            split = _choose_split(V[quad])
            if split is None:
                raise MeshError("cannot triangulate ring cell")
            for t in split:
                tris.append([quad[q] for q in t])
                tags.append(tag)
    circle_ids = rings[n_in]
    iface = np.stack([circle_ids, np.roll(circle_ids, -1)], 1)
    return V, np.array(tris, dtype=np.int64), np.array(tags, dtype=np.int8), iface


def delaunay_flips(V, T, tags, max_sweeps=500):
    """Lawson edge flips inside each region; edges between regions never move.

    Each sweep flips an independent set of non-Delaunay edges at once.
    Counts of vertices and triangles are unchanged.
    """
    T = np.array(T, dtype=np.int64)
    nt = len(T)
    for _ in range(max_sweeps):
        a = T.reshape(-1)
        b = T[:, [1, 2, 0]].reshape(-1)
        c = T[:, [2, 0, 1]].reshape(-1)
        tri = np.repeat(np.arange(nt), 3)
        nv = len(V)
        key = np.minimum(a, b) * nv + np.maximum(a, b)
        order = np.argsort(key, kind="stable")
        ks = key[order]
        dup = np.nonzero(ks[1:] == ks[:-1])[0]
        h1, h2 = order[dup], order[dup + 1]
        same = tags[tri[h1]] == tags[tri[h2]]
        h1, h2 = h1[same], h2[same]
        if len(h1) == 0:
            break
        ea, eb, c1, c2 = a[h1], b[h1], c[h1], c[h2]

        def angle(o, p, q):
            u, v = V[p] - V[o], V[q] - V[o]
            return np.arctan2(np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]),
                              np.einsum("ij,ij->i", u, v))

        def area2(i, j, k):
            return ((V[j, 0] - V[i, 0]) * (V[k, 1] - V[i, 1])
                    - (V[k, 0] - V[i, 0]) * (V[j, 1] - V[i, 1]))

        excess = angle(c1, ea, eb) + angle(c2, ea, eb) - math.pi
        ok = (excess > 1e-10) & (area2(c1, ea, c2) > 0) & (area2(c2, eb, c1) > 0)
        cand = np.nonzero(ok)[0]
        if len(cand) == 0:
            break
        cand = cand[np.argsort(-excess[cand])]
        used = np.zeros(nt, dtype=bool)
        flipped = 0
        for e in cand:
            t1, t2 = tri[h1[e]], tri[h2[e]]
            if used[t1] or used[t2]:
                continue
            used[t1] = used[t2] = True
            T[t1] = (c1[e], ea[e], c2[e])
            T[t2] = (c2[e], eb[e], c1[e])
            flipped += 1
        if not flipped:
            break
    return T


def generate_mesh(spec, n_horizontal=40, n_vertical=20, grading=1.2):
    """Interface-conforming triangulation of the square ``[-H, H]^2``.

    Graph families use vertical columns clustered toward the apex (smallest
    spacing ``min(1/(4K), side/n_horizontal)``, measured along the curve)
    with ``n_vertical`` graded cells on each side of the interface node.
    Columns where the curve has left the top of the square hold no interface
    node and lie entirely below it. The circular family uses an O-grid with
    ``4 * max(2, n_horizontal // 2)`` nodes on the circle.
    """
    if n_horizontal < 2 or n_vertical < 2:
        raise ValueError("n_horizontal and n_vertical must be >= 2")
    if grading < 1:
        raise ValueError("grading must be >= 1")
    if spec.kind == "circular":
        V, T, tags, iface = _circle_mesh(spec, n_horizontal, n_vertical)
    else:
        xs = _column_abscissae(spec, n_horizontal, grading)
        V, T, tags, iface = _build_from_columns(spec, xs, n_vertical)
    T = delaunay_flips(V, T, tags)
    mesh = Mesh(V, T, tags, boundary_markers_for(V, spec.domain_half_side), iface)
    if np.any(mesh.signed_areas() <= 0):
        raise MeshError("mesh contains non-positive triangle areas")
    return mesh


def refine_mesh(mesh, spec):
    """Red refinement; midpoints of interface edges are snapped onto the curve."""
    T = mesh.triangles
    e = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
    es = np.sort(e, axis=1)
    uniq, inv = np.unique(es, axis=0, return_inverse=True)
    inv = inv.ravel()
    nv = mesh.n_vertices
    nt = mesh.n_triangles
    mids = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])

    if len(mesh.interface_edges):
        ie = np.sort(mesh.interface_edges, axis=1)
        lookup = {tuple(r): i for i, r in enumerate(uniq)}
        ie_ids = np.array([lookup[tuple(r)] for r in ie])
        for i in ie_ids:
            mids[i] = snap_to_interface(spec, mids[i, 0], mids[i, 1])
    else:
        ie_ids = np.zeros(0, dtype=np.int64)

    V = np.concatenate([mesh.vertices, mids])
    m01 = nv + inv[:nt]
    m12 = nv + inv[nt:2 * nt]
    m20 = nv + inv[2 * nt:]
    v0, v1, v2 = T[:, 0], T[:, 1], T[:, 2]
    children = np.stack([
        np.stack([v0, m01, m20], 1),
        np.stack([v1, m12, m01], 1),
        np.stack([v2, m20, m12], 1),
        np.stack([m01, m12, m20], 1),
    ], 1).reshape(-1, 3)
    tags = np.repeat(mesh.region_tags, 4)
    new_if = []
    for (a, b), i in zip(mesh.interface_edges, ie_ids):
        new_if.append((a, nv + i))
        new_if.append((nv + i, b))
    iface = np.array(new_if, dtype=np.int64).reshape(-1, 2)
    out = Mesh(V, children, tags, boundary_markers_for(V, spec.domain_half_side), iface)
    if np.any(out.signed_areas() <= 0):
        raise MeshError("snapping inverted a triangle; start from a finer mesh")
    return out


def refined_mesh(spec, level=0, **kw):
    """``generate_mesh`` followed by ``level`` red refinements."""
    mesh = generate_mesh(spec, **kw)
    for _ in range(level):
        mesh = refine_mesh(mesh, spec)
    return mesh


def check_mesh(mesh, spec, snap_tol=None):
    """Raise ``MeshError`` if any mesh invariant fails; return the total area."""
    H = spec.domain_half_side
    side = 2.0 * H
    snap_tol = 1e-12 * side if snap_tol is None else snap_tol
    if np.abs(mesh.vertices).max() > H:
        raise MeshError("vertex outside the square")
    area = mesh.signed_areas()
    if np.any(area <= 0):
        raise MeshError(f"{int((area <= 0).sum())} triangles with non-positive area")
    total = area.sum()
    if abs(total - side * side) > 1e-9 * side * side:
        raise MeshError(f"areas sum to {total!r}, expected {side * side!r}")
    c = mesh.centroids()
    inside = level_set(spec, c[:, 0], c[:, 1]) > 0
    bad = inside != (mesh.region_tags == ABOVE)
    if np.any(bad):
        raise MeshError(f"{int(bad.sum())} triangles fail the centroid region test")
    if len(mesh.interface_edges):
        p = mesh.vertices[np.unique(mesh.interface_edges)]
        r = np.abs(level_set(spec, p[:, 0], p[:, 1]))
        if r.max() > snap_tol:
            raise MeshError(f"interface vertex off the curve by {r.max():.3g}")
    return float(total)


def interface_edges_from_tags(triangles, tags):
    """Edges shared by one ``BELOW`` and one ``ABOVE`` triangle."""
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    t = np.tile(tags, 3)
    es = np.sort(e, axis=1)
    uniq, inv, counts = np.unique(es, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    seen = {}
    out = []
    for k, eid in enumerate(inv):
        if counts[eid] != 2:
            continue
        if eid in seen:
            if seen[eid][1] != t[k]:
                out.append(tuple(seen[eid][0]))
        else:
            seen[eid] = (e[k], t[k])
    out.sort(key=lambda ab: tuple(sorted(ab)))
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def write_mesh(mesh, path):
    """ASCII export: ``nv nt``, then ``x y marker`` rows, then ``i j k tag`` rows."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles}\n")
        for (x, y), mk in zip(mesh.vertices, mesh.boundary_markers):
            fh.write(f"{float(x)!r} {float(y)!r} {int(mk)}\n")
        for (i, j, k), tag in zip(mesh.triangles, mesh.region_tags):
            fh.write(f"{i} {j} {k} {int(tag)}\n")


def read_mesh(path):
    with open(path) as fh:
        nv, nt = (int(s) for s in fh.readline().split())
        vrows = [fh.readline().split() for _ in range(nv)]
        trows = [fh.readline().split() for _ in range(nt)]
    V = np.array([[float(r[0]), float(r[1])] for r in vrows])
    markers = np.array([int(r[2]) for r in vrows], dtype=np.int8)
    T = np.array([[int(r[0]), int(r[1]), int(r[2])] for r in trows], dtype=np.int64)
    tags = np.array([int(r[3]) for r in trows], dtype=np.int8)
    return Mesh(V, T, tags, markers, interface_edges_from_tags(T, tags))
