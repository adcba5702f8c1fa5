"""CGO test functions, the I-term decomposition and its circle-inclusion oracle.

Everything here works in a local frame attached to an apex point p of the
interface: p is the origin and e2 is the normal pointing into the inclusion,
so that near p the inclusion is {y > w(x)} with w(x) ~ K x**2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import brentq

EXP_LIMIT = 700.0


class QuadratureError(RuntimeError):
    def __init__(self, message, estimates=()):
        super().__init__(message)
        self.estimates = tuple(estimates)


class OverflowGuardError(OverflowError):
    pass


class WindowError(ValueError):
    pass


# --------------------------------------------------------------------------
# frames and CGO parameters


@dataclass(frozen=True)
class Frame:
    """Rigid motion: global X = origin + x * e1 + y * e2."""

    origin: tuple = (0.0, 0.0)
    e2: tuple = (0.0, 1.0)

    @property
    def e1(self):
        return (self.e2[1], -self.e2[0])

    @property
    def rotation(self):
        """Rows are e1, e2; maps global vectors to local components."""
        return np.array([self.e1, self.e2], dtype=float)

    def to_global(self, x, y):
        o, e1, e2 = self.origin, self.e1, self.e2
        return o[0] + x * e1[0] + y * e2[0], o[1] + x * e1[1] + y * e2[1]

    def to_local(self, X, Y):
        dx, dy = X - self.origin[0], Y - self.origin[1]
        e1, e2 = self.e1, self.e2
        return dx * e1[0] + dy * e1[1], dx * e2[0] + dy * e2[1]

    def vector_to_local(self, v):
        return self.rotation @ np.asarray(v, dtype=float)

    @classmethod
    def identity(cls):
        return cls()


@dataclass(frozen=True)
class CgoParams:
    tau: float
    v_hat: tuple
    xi: tuple
    frame: Frame = field(default_factory=Frame)

    @property
    def xi_dot_xi(self):
        return self.xi[0] * self.xi[0] + self.xi[1] * self.xi[1]


def make_cgo(grad_at_p, tau, frame=None):
    """Build xi = i tau v_hat - tau e2 from the interior gradient at the apex."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    frame = frame or Frame()
    g = frame.vector_to_local(grad_at_p)
    norm = float(np.hypot(g[0], g[1]))
    if norm == 0.0:
        raise ValueError("zero gradient at the apex: tangential direction undefined")
    if abs(g[0]) < 1e-12 * norm:
        v_hat = (1.0, 0.0)
    else:
        v_hat = (math.copysign(1.0, g[0]), 0.0)
    xi = (1j * tau * v_hat[0], complex(-tau))
    return CgoParams(float(tau), v_hat, xi, frame)


def _exp_checked(z):
    z = np.asarray(z)
    if np.any(z.real > EXP_LIMIT):
        raise OverflowGuardError(f"exponent real part {float(np.max(z.real)):.1f} exceeds {EXP_LIMIT}")
    return np.exp(z)


def eval_cgo(params, x, y=None):
    """exp(xi . x) at local coordinates; ``x`` may be a point or two arrays."""
    if y is None:
        x, y = x
    z = params.xi[0] * np.asarray(x) + params.xi[1] * np.asarray(y)
    return _exp_checked(z)


def i0_closed_form(params, K):
    """Integral of exp(xi . x) over {y > K x**2} in two dimensions."""
    if not K > 0:
        raise ValueError("K must be positive")
    xi_n = params.xi[1]
    xt = params.xi[0]
    # (1/-xi_n) * sqrt(pi / (-xi_n K)) * exp(-xi'.xi' / (4 xi_n K))
    expo = -(xt * xt) / (4.0 * xi_n * K)
    if abs(expo.real) > 500:
        log_val = -np.log(-xi_n) + 0.5 * np.log(np.pi / (-xi_n * K)) + expo
        return complex(np.exp(log_val))
    return complex(1.0 / (-xi_n) * np.sqrt(np.pi / (-xi_n * K)) * np.exp(expo))


# --------------------------------------------------------------------------
# quadrature over curved regions


@dataclass(frozen=True)
class Paraboloid:
    """{y > max(floor, K x**2)}; the integrand must decay like exp(-tau y)."""

    K: float
    tau: float
    floor: float = 0.0


@dataclass(frozen=True)
class Slab:
    """{K x**2 < y < h}."""

    K: float
    h: float


@dataclass(frozen=True)
class Profile:
    """{|x| < b, w(x) < y < h} for a vectorised profile ``w``."""

    w: Callable
    b: float
    h: float


def _paraboloid_tail(region, Y):
    K, tau = region.K, region.tau
    return 2.0 * math.sqrt(Y / K) * math.exp(-tau * Y) / tau * (1.0 + 1.0 / (2.0 * Y * tau))


def _layout(region, Y=None):
    """Return x breakpoints and the y-limit functions."""
    if isinstance(region, Slab):
        X = math.sqrt(region.h / region.K)
        return [-X, 0.0, X], (lambda x: region.K * x * x), (lambda x: np.full_like(x, region.h))
    if isinstance(region, Profile):
        w, b, h = region.w, region.b, region.h
        lo_x, hi_x = -b, b
        if float(w(np.array(-b))) >= h:
            lo_x = brentq(lambda t: float(w(np.array(t))) - h, -b, 0.0, xtol=1e-15, rtol=1e-15)
        if float(w(np.array(b))) >= h:
            hi_x = brentq(lambda t: float(w(np.array(t))) - h, 0.0, b, xtol=1e-15, rtol=1e-15)
        if float(w(np.array(0.0))) >= h:
            raise WindowError("profile lies above h at the apex; empty region")
        return [lo_x, 0.0, hi_x], (lambda x: np.minimum(w(x), h)), (lambda x: np.full_like(x, h))
    if isinstance(region, Paraboloid):
        X = math.sqrt(Y / region.K)
        pts = [-X, 0.0, X]
        if region.floor > 0:
            xh = math.sqrt(region.floor / region.K)
            if xh < X:
                pts = [-X, -xh, 0.0, xh, X]
        return pts, (lambda x: np.maximum(region.floor, region.K * x * x)), (lambda x: np.full_like(x, Y))
    raise TypeError(f"unknown region {region!r}")


def _tensor_rule(f, pts, lo, hi, nx, ny, order):
    gx, gw = np.polynomial.legendre.leggauss(order)
    xs, wx = [], []
    for a, b in zip(pts[:-1], pts[1:]):
        edges = np.linspace(a, b, nx + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        xs.append((mid[:, None] + half[:, None] * gx[None, :]).ravel())
        wx.append((half[:, None] * gw[None, :]).ravel())
    x = np.concatenate(xs)
    wxs = np.concatenate(wx)
    ylo, yhi = lo(x), hi(x)
    t = np.linspace(0.0, 1.0, ny + 1)
    tmid, thalf = 0.5 * (t[1:] + t[:-1]), 0.5 * np.diff(t)
    u = (tmid[:, None] + thalf[:, None] * gx[None, :]).ravel()
    wu = (thalf[:, None] * gw[None, :]).ravel()
    span = np.maximum(yhi - ylo, 0.0)
    Y = ylo[:, None] + span[:, None] * u[None, :]
    W = (wxs * span)[:, None] * wu[None, :]
    X = np.broadcast_to(x[:, None], Y.shape)
    vals = f(X, Y)
    return np.sum(vals * W), np.sum(np.abs(vals) * W)


def region_quadrature(integrand, region, tol=1e-8, x_panels=4, y_panels=1, order=10, max_level=8):
    """Composite tensor Gauss-Legendre over a curved region, doubling panels
    until two successive levels agree to ``tol`` (relative)."""
    if isinstance(region, Paraboloid):
        ymin = max(region.floor, 0.0)
        Y = ymin + (math.log(1.0 / tol) + 20.0) / region.tau
        for _ in range(30):
            value = _adaptive(integrand, region, Y, tol, x_panels, y_panels, order, max_level)
            if _paraboloid_tail(region, Y) <= 0.1 * tol * max(abs(value), 1e-300):
                return value
            Y += 5.0 / region.tau
        raise QuadratureError("paraboloid tail did not become negligible", (value,))
    return _adaptive(integrand, region, None, tol, x_panels, y_panels, order, max_level)


def _adaptive(f, region, Y, tol, nx, ny, order, max_level):
    pts, lo, hi = _layout(region, Y)
    prev = None
    history = []
    for level in range(max_level + 1):
        q, qa = _tensor_rule(f, pts, lo, hi, nx << level, ny << level, order)
        history.append(q)
        if prev is not None:
            diff = abs(q - prev)
            if diff <= tol * abs(q) or diff <= 1e-14 * qa:
                return complex(q)
        prev = q
    raise QuadratureError(f"no convergence after {max_level} refinements", history[-2:])


def line_quadrature(f, a, b, tol=1e-10, panels=4, order=10, max_level=12):
    """Composite Gauss-Legendre on [a, b] with panel doubling."""
    gx, gw = np.polynomial.legendre.leggauss(order)
    prev = None
    history = []
    for level in range(max_level + 1):
        n = panels << level
        edges = np.linspace(a, b, n + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        t = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
        w = (half[:, None] * gw[None, :]).ravel()
        vals = f(t)
        q, qa = np.sum(vals * w), np.sum(np.abs(vals) * w)
        history.append(q)
        if prev is not None:
            diff = abs(q - prev)
            if diff <= tol * abs(q) or diff <= 1e-14 * qa:
                return q, qa
        prev = q
    raise QuadratureError("line quadrature did not converge", history[-2:])


# --------------------------------------------------------------------------
# circle inclusion oracle


@dataclass(frozen=True)
class CircleOracle:
    """Disk of radius ``a`` centred at the origin, contrast ``eta`` inside,
    background field ``g0 . x``."""

    a: float
    eta: float
    g0: tuple = (1.0, 0.0)

    @property
    def contrast(self):
        return (1.0 - self.eta) / (1.0 + self.eta)

    @property
    def interior_gradient(self):
        s = 2.0 / (1.0 + self.eta)
        return np.array([s * self.g0[0], s * self.g0[1]])

    def u_i(self, X, Y):
        gi = self.interior_gradient
        return gi[0] * X + gi[1] * Y

    def grad_i(self, X, Y):
        gi = self.interior_gradient
        return np.broadcast_to(gi[0], np.shape(X)) + 0.0 * X, np.broadcast_to(gi[1], np.shape(X)) + 0.0 * X

    def u_e(self, X, Y):
        gx = self.g0[0] * X + self.g0[1] * Y
        r2 = X * X + Y * Y
        return gx + self.contrast * self.a**2 * gx / r2

    def grad_e(self, X, Y):
        g1, g2 = self.g0
        c = self.contrast * self.a**2
        r2 = X * X + Y * Y
        gx = g1 * X + g2 * Y
        dx = g1 + c * (g1 * r2 - 2.0 * X * gx) / r2**2
        dy = g2 + c * (g2 * r2 - 2.0 * Y * gx) / r2**2
        return dx, dy

    def u(self, X, Y):
        inside = X * X + Y * Y < self.a**2
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(inside, self.u_i(X, Y), self.u_e(X, Y))

    def grad(self, X, Y):
        inside = X * X + Y * Y < self.a**2
        with np.errstate(divide="ignore", invalid="ignore"):
            gi, ge = self.grad_i(X, Y), self.grad_e(X, Y)
        return np.where(inside, gi[0], ge[0]), np.where(inside, gi[1], ge[1])

    def laplacian_e(self, X, Y):
        """Analytic Laplacian of the exterior field (identically zero)."""
        # g.x / r^2 is the real part of a multiple of 1/z, hence harmonic
        return np.zeros(np.broadcast(X, Y).shape)

    def apex_frame(self, angle=-0.5 * math.pi):
        """Frame at the boundary point at polar ``angle`` with e2 pointing inward."""
        p = (self.a * math.cos(angle), self.a * math.sin(angle))
        return Frame(origin=p, e2=(-math.cos(angle), -math.sin(angle)))

    @property
    def K(self):
        """Taylor coefficient of the circle at any boundary point."""
        return 1.0 / (2.0 * self.a)

    def profile(self, x):
        """Local graph of the boundary near an apex: a - sqrt(a^2 - x^2)."""
        x = np.asarray(x, dtype=float)
        return self.a - np.sqrt(np.maximum(self.a**2 - x * x, 0.0))


def circle_exact_solution(a, eta, g0=(1.0, 0.0)):
    if not (a > 0 and eta > 0):
        raise ValueError("need a > 0 and eta > 0")
    return CircleOracle(float(a), float(eta), tuple(float(v) for v in g0))


def _check_window(oracle, window):
    b, h = window
    if not (b > 0 and h > 0):
        raise WindowError("window sizes must be positive")
    if h >= oracle.a:
        raise WindowError(f"window height h={h} reaches the disk centre (a={oracle.a})")
    if b > oracle.a:
        raise WindowError(f"window half-width b={b} exceeds the radius")


def _local_fields(oracle, frame):
    """Oracle fields and gradients expressed in local coordinates."""
    R = frame.rotation

    def wrap(fun):
        return lambda x, y: fun(*frame.to_global(x, y))

    def wrap_grad(fun):
        def g(x, y):
            gx, gy = fun(*frame.to_global(x, y))
            return R[0, 0] * gx + R[0, 1] * gy, R[1, 0] * gx + R[1, 1] * gy
        return g

    return wrap(oracle.u_i), wrap_grad(oracle.grad_i), wrap(oracle.u_e), wrap_grad(oracle.grad_e)


def _boundary_pieces(oracle, window):
    """Pieces of the artificial boundary of D_{b,h}: (kind, param range, normal)."""
    b, h = window
    w = oracle.profile
    x_top = min(b, math.sqrt(oracle.a**2 - (oracle.a - h) ** 2))
    pieces = [("top", -x_top, x_top, (0.0, 1.0))]
    wb = float(w(b))
    if wb < h:
        pieces.append(("right", wb, h, (1.0, 0.0)))
        pieces.append(("left", wb, h, (-1.0, 0.0)))
    return pieces


# --------------------------------------------------------------------------
# harmonic test functions


class TestFunction:
    """Harmonic function given by its value and gradient in local coordinates."""

    __test__ = False
    certified = False

    def __init__(self, value, gradient):
        self._value = value
        self._gradient = gradient

    def value(self, x, y):
        return self._value(x, y)

    def gradient(self, x, y):
        return self._gradient(x, y)

    def check_harmonic(self, points, step=1e-4, tol=1e-6):
        """Five-point Laplacian relative to the value scale."""
        for x, y in points:
            c = self.value(np.array(x), np.array(y))
            lap = (self.value(np.array(x + step), np.array(y)) + self.value(np.array(x - step), np.array(y))
                   + self.value(np.array(x), np.array(y + step)) + self.value(np.array(x), np.array(y - step))
                   - 4.0 * c) / step**2
            if abs(lap) > tol * max(1.0, abs(c)):
                return False
        return True


class ConstantFn(TestFunction):
    certified = True

    def __init__(self, c=1.0):
        self.c = c

    def value(self, x, y):
        return np.full(np.broadcast(x, y).shape, self.c, dtype=float)

    def gradient(self, x, y):
        z = np.zeros(np.broadcast(x, y).shape)
        return z, z


class LinearFn(TestFunction):
    certified = True

    def __init__(self, c1=1.0, c2=0.0):
        self.c1, self.c2 = c1, c2

    def value(self, x, y):
        return self.c1 * x + self.c2 * y

    def gradient(self, x, y):
        shape = np.broadcast(x, y).shape
        return np.full(shape, self.c1, dtype=float), np.full(shape, self.c2, dtype=float)


class CgoFn(TestFunction):
    certified = True

    def __init__(self, params):
        self.params = params

    def value(self, x, y):
        return eval_cgo(self.params, x, y)

    def gradient(self, x, y):
        v = eval_cgo(self.params, x, y)
        return self.params.xi[0] * v, self.params.xi[1] * v


# --------------------------------------------------------------------------
# integral identity and I-terms


def _boundary_integral(oracle, window, frame, u0, tol):
    """Integral over the artificial boundary of
    (eta d_nu u_i - d_nu u_e) u0 - (u_i - u_e) d_nu u0, and of its modulus."""
    ui, gi, ue, ge = _local_fields(oracle, frame)
    eta = oracle.eta
    b, h = window
    total, scale = 0.0, 0.0
    for kind, s0, s1, nu in _boundary_pieces(oracle, window):
        if kind == "top":
            pos = lambda s: (s, np.full_like(s, h))
        elif kind == "right":
            pos = lambda s: (np.full_like(s, b), s)
        else:
            pos = lambda s: (np.full_like(s, -b), s)

        def integrand(s, pos=pos, nu=nu):
            x, y = pos(s)
            gix, giy = gi(x, y)
            gex, gey = ge(x, y)
            dn_i = gix * nu[0] + giy * nu[1]
            dn_e = gex * nu[0] + gey * nu[1]
            g0x, g0y = u0.gradient(x, y)
            dn_0 = g0x * nu[0] + g0y * nu[1]
            return (eta * dn_i - dn_e) * u0.value(x, y) - (ui(x, y) - ue(x, y)) * dn_0

        q, qa = line_quadrature(integrand, s0, s1, tol=tol)
        total += q
        scale += qa
    return total, scale


class IdentityResult(NamedTuple):
    lhs: complex
    rhs: complex
    residual: float
    scale: float


def identity_residual(oracle, u0, window, frame=None, tol=1e-8):
    """Both sides of the Green/transmission identity on D_{b,h}.

    ``u0`` is a TestFunction in local coordinates; functions that are not
    known to be harmonic are checked with a five-point stencil first.
    """
    _check_window(oracle, window)
    frame = frame or oracle.apex_frame()
    b, h = window
    if not getattr(u0, "certified", False):
        xs = np.linspace(-0.5 * b, 0.5 * b, 3)
        pts = [(x, 0.5 * (float(oracle.profile(x)) + h)) for x in xs]
        if not u0.check_harmonic(pts):
            raise ValueError("test function fails the stencil harmonicity check")
    _, gi, _, _ = _local_fields(oracle, frame)

    def grad_dot(x, y):
        gix, giy = gi(x, y)
        g0x, g0y = u0.gradient(x, y)
        return gix * g0x + giy * g0y

    region = Profile(oracle.profile, b, h)
    lhs = (oracle.eta - 1.0) * region_quadrature(grad_dot, region, tol=tol, x_panels=_panels_for(u0, b))
    rhs, scale = _boundary_integral(oracle, window, frame, u0, tol)
    scale = max(scale, abs(lhs), abs(rhs))
    residual = abs(lhs - rhs) / scale if scale > 0 else 0.0
    return IdentityResult(complex(lhs), complex(rhs), float(residual), float(scale))


def _panels_for(u0, width):
    tau = getattr(getattr(u0, "params", None), "tau", 0.0)
    return max(4, int(math.ceil(tau * width / math.pi)))


@dataclass
class ITermReport:
    tau: float
    K: float
    K_minus: float
    K_plus: float
    h: float
    b: float
    I0_closed: complex
    I0_quad: complex
    I1: complex
    I2: complex
    I3: complex
    I4: complex
    grad_dot_xi: complex
    eta: float
    n: int = 2

    @property
    def closure(self):
        """grad.xi (I0 - I1 - I2) + I3 - I4 / (eta - 1); zero when the
        identity holds."""
        return self.grad_dot_xi * (self.I0_quad - self.I1 - self.I2) + self.I3 - self.I4 / (self.eta - 1.0)

    @property
    def closure_relative(self):
        s = abs(self.grad_dot_xi * self.I0_quad) + abs(self.I3) + abs(self.I4 / (self.eta - 1.0))
        return abs(self.closure) / s if s else 0.0

    def rows(self):
        for name in ("I0_closed", "I0_quad", "I1", "I2", "I3", "I4"):
            z = getattr(self, name)
            yield (self.tau, self.K, name, z.real, z.imag)


def compute_i_terms(oracle, params, window, tol=1e-8, K_minus=None, K_plus=None):
    """I0..I4 for the circle oracle at the apex of ``params.frame``."""
    _check_window(oracle, window)
    if oracle.eta == 1.0:
        raise ValueError("the I-term split divides by eta - 1")
    frame = params.frame
    b, h = window
    K = oracle.K
    tau = params.tau
    f = lambda x, y: eval_cgo(params, x, y)
    nx = max(4, int(math.ceil(tau * max(b, math.sqrt(h / K)) / math.pi)))

    I0q = region_quadrature(f, Paraboloid(K, tau), tol=tol, x_panels=nx)
    # I1 is tiny (exp(-tau h)); integrate the rescaled integrand
    scaled = lambda x, y: eval_cgo(params, x, y - h)
    I1 = region_quadrature(scaled, Paraboloid(K, tau, floor=h), tol=tol, x_panels=nx)
    I1 *= math.exp(-tau * h)
    slab = region_quadrature(f, Slab(K, h), tol=tol, x_panels=nx)
    dbh = region_quadrature(f, Profile(oracle.profile, b, h), tol=tol, x_panels=nx)
    I2 = slab - dbh

    _, gi, _, _ = _local_fields(oracle, frame)
    gp = np.array([float(np.asarray(c)) for c in gi(np.array(0.0), np.array(0.0))])
    xi = params.xi

    def i3_integrand(x, y):
        gx, gy = gi(x, y)
        return (xi[0] * (gx - gp[0]) + xi[1] * (gy - gp[1])) * eval_cgo(params, x, y)

    I3 = region_quadrature(i3_integrand, Profile(oracle.profile, b, h), tol=tol, x_panels=nx)
    I4, _ = _boundary_integral(oracle, window, frame, CgoFn(params), tol)
    grad_dot_xi = gp[0] * xi[0] + gp[1] * xi[1]
    return ITermReport(
        tau=tau, K=K,
        K_minus=K if K_minus is None else K_minus,
        K_plus=K if K_plus is None else K_plus,
        h=h, b=b,
        I0_closed=i0_closed_form(params, K), I0_quad=complex(I0q),
        I1=complex(I1), I2=complex(I2), I3=complex(I3), I4=complex(I4),
        grad_dot_xi=complex(grad_dot_xi), eta=oracle.eta,
    )


def compute_i2(params, profile, K, window, tol=1e-8):
    """I2 for an arbitrary apex profile: slab {K x^2 < y < h} minus
    {|x| < b, profile(x) < y < h}."""
    b, h = window
    tau = params.tau
    f = lambda x, y: eval_cgo(params, x, y)
    nx = max(4, int(math.ceil(tau * max(b, math.sqrt(h / K)) / math.pi)))
    slab = region_quadrature(f, Slab(K, h), tol=tol, x_panels=nx)
    dbh = region_quadrature(f, Profile(profile, b, h), tol=tol, x_panels=nx)
    return complex(slab - dbh)


def i1_envelope(tau, K, h, n=2):
    """Shape of the I1 bound without its constant."""
    return (1.0 + (tau * h) ** ((n - 1) / 2)) / (tau ** ((n + 1) / 2) * K ** ((n - 1) / 2)) * math.exp(-tau * h)


def i2_envelope(tau, K_minus, K_plus, n=2):
    return (K_minus ** (-(n - 1) / 2) - K_plus ** (-(n - 1) / 2)) * tau ** (-(n + 1) / 2)


def fitted_constants(values, envelopes):
    """Ratios |I| / envelope; the constant of a bound of that shape."""
    return np.abs(np.asarray(values)) / np.asarray(envelopes)


def i_term_rows(reports):
    """CSV text ``tau,K,term,real,imag`` for a list of reports."""
    lines = ["tau,K,term,real,imag"]
    for r in reports:
        for tau, K, name, re, im in r.rows():
            lines.append(f"{tau!r},{K!r},{name},{re!r},{im!r}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# decay bound


class DecayBound(NamedTuple):
    terms: tuple
    total: float
    envelope: float
    rho: float
    violates_condition: bool


def decay_bound(K, mu, alpha=1.0, delta=1.0, norms=(1.0, 1.0), n=2):
    """Four-term K-scaling of the gradient bound after choosing
    tau = 4 K ln K^rho with rho = min(alpha, delta) / 2.

    Terms one to three carry the interior norm; the last carries the mean of
    the interior and exterior norms.
    """
    if not K > 1:
        raise ValueError(f"K must exceed 1 (ln K > 0), got {K}")
    if not (0 < alpha <= 1 and 0 < delta <= 1):
        raise ValueError("alpha and delta must lie in (0, 1]")
    n_i, n_e = norms
    rho = min(alpha, delta) / 2.0
    L = math.log(K)
    t1 = L ** ((n - 1) / 2) * K ** (mu - 3 * rho) * n_i
    t2 = K ** (mu - delta + rho) * n_i
    t3 = L**1.5 * K ** (mu + 1 - n / 2 - alpha + rho) * n_i
    t4 = L ** ((n + 1) / 2) * K ** (mu - alpha - 3 * rho) * 0.5 * (n_i + n_e)
    envelope = L ** ((n + 1) / 2) * K ** (mu - min(alpha, delta) / 2)
    violates = not mu < min(1.0, delta) / 2.0
    return DecayBound((t1, t2, t3, t4), t1 + t2 + t3 + t4, envelope, rho, violates)


def envelope_turning_point(mu, alpha=1.0, delta=1.0, n=2):
    """K where the envelope (ln K)^((n+1)/2) K^(mu - min(alpha,delta)/2)
    peaks; None when it never turns, inf when the peak is beyond floats."""
    e = mu - min(alpha, delta) / 2.0
    if e >= 0:
        return None
    t = -(n + 1) / 2 / e
    return math.exp(t) if t < EXP_LIMIT else math.inf
