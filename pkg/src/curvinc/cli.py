"""Command line front end: config parsing, workflows and CSV/SVG output.

    curvinc sweep --config run.cfg --out-dir out/

Exit status: 0 success, 1 computational failure (or a failed invariant in
``verify``), 2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis, experiment, geometry

SUBCOMMANDS = ("sweep", "verify", "identity", "bound", "mesh", "compare", "converge")


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


@dataclass
class RunConfig:
    # [run]
    out_dir: str = "out"
    threads: int = 1
    mesh_level: int = experiment.DEFAULT_MESH_LEVEL
    # [sweep]
    families: list = field(default_factory=lambda: ["parabolic", "hyperbolic"])
    K_values: list = field(default_factory=lambda: list(experiment.REFERENCE_K_VALUES))
    eta: float = experiment.REFERENCE_ETA
    half_side: float = experiment.REFERENCE_HALF_SIDE
    dirichlet: list = field(default_factory=lambda: [2.0, 3.0])
    A: float = 1.0
    stability_gate: bool = False
    # [verify]
    taus: list = field(default_factory=lambda: [8.0, 16.0, 32.0, 64.0])
    circle_a: float = 1.0
    window_b: float = 0.8
    window_h: float = 0.5
    quad_tol: float = 1e-8
    # [bound]
    mu: float = 0.1
    alpha: float = 1.0
    delta: float = 1.0
    K_min: float = 10.0
    K_max: float = 1e6
    n_points: int = 60
    norms: list = field(default_factory=lambda: [1.0, 1.0])
    # [mesh]
    mesh_family: str = "parabolic"
    mesh_K: float = 1.0
    # [compare]
    cap_K: float = 1.0
    cap_height: float = 1.5
    cap_apex: list = field(default_factory=lambda: [0.0, 2.0])
    cap_shift: float = 0.5
    eta_tilde: float = 3.0
    compare_level: int = 1
    # [converge]
    levels: int = 4


SECTIONS = {
    "run": ("out_dir", "threads", "mesh_level"),
    "sweep": ("families", "K_values", "eta", "half_side", "dirichlet", "A", "stability_gate"),
    "verify": ("taus", "circle_a", "window_b", "window_h", "quad_tol"),
    "bound": ("mu", "alpha", "delta", "K_min", "K_max", "n_points", "norms"),
    "mesh": ("mesh_family", "mesh_K"),
    "compare": ("cap_K", "cap_height", "cap_apex", "cap_shift", "eta_tilde", "compare_level"),
    "converge": ("levels",),
}
_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_LIST_KIND = {"families": str}


def _convert(name, raw, line):
    default = getattr(RunConfig(), name)
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(raw)
            return low in ("true", "yes", "1")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            kind = _LIST_KIND.get(name, float)
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if not items:
                raise ValueError("empty list")
            return [kind(s) for s in items]
        return raw
    except ValueError:
        raise ConfigError(f"cannot read {raw!r} as the type of {name!r}", line) from None


def parse_config(text):
    """Read ``key = value`` lines with optional ``[section]`` headers."""
    cfg = RunConfig()
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if section is not None and key not in SECTIONS[section]:
            raise ConfigError(f"key {key!r} does not belong to section [{section}]", lineno)
        setattr(cfg, key, _convert(key, value, lineno))
    _validate(cfg)
    return cfg


def _validate(cfg):
    for fam in cfg.families:
        if fam not in ("parabolic", "hyperbolic"):
            raise ConfigError(f"unknown sweep family {fam!r}")
    if cfg.mesh_family not in geometry.KINDS:
        raise ConfigError(f"unknown mesh family {cfg.mesh_family!r}")
    if cfg.threads < 1 or cfg.mesh_level < 0:
        raise ConfigError("threads must be >= 1 and mesh_level >= 0")
    if len(cfg.dirichlet) != 2:
        raise ConfigError("dirichlet takes two coefficients (f = c1 x1 + c2 x2)")
    if len(cfg.norms) != 2 or len(cfg.cap_apex) != 2:
        raise ConfigError("norms and cap_apex take two values")
    if any(b <= a for a, b in zip(cfg.K_values, cfg.K_values[1:])):
        raise ConfigError("K_values must be strictly increasing")


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, list):
        return ", ".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def config_echo(cfg, subcommand):
    """Config text that parses back to ``cfg``."""
    lines = [f"# curvinc {subcommand}"]
    for section, keys in SECTIONS.items():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {_format_value(getattr(cfg, k))}" for k in keys)
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# SVG


def _nice_ticks(lo, hi, n=6):
    span = hi - lo
    raw = span / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * span:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _fmt(x, digits=4):
    s = f"{x:.{digits}f}"
    return "0" if float(s) == 0 else s.rstrip("0").rstrip(".")


def emit_svg_plot(record, path):
    """800x600 scatter of (log K, log max|grad u|) with the fitted line."""
    W, Ht = 800, 600
    left, right, top, bottom = 90, 30, 60, 70
    x = np.log(np.asarray(record.K_values, dtype=float))
    y = np.log(np.asarray(record.max_grads, dtype=float))
    reg = record.regression or experiment.fit_loglog(zip(record.K_values, record.max_grads))
    fit = reg.intercept + reg.mu * x
    resid = y - fit
    xlo, xhi = float(x.min()), float(x.max())
    if xhi == xlo:
        xlo, xhi = xlo - 1, xhi + 1
    ylo, yhi = float(min(y.min(), fit.min())), float(max(y.max(), fit.max()))
    pad = 0.08 * (yhi - ylo) if yhi > ylo else 0.5
    ylo, yhi = ylo - pad, yhi + pad
    xpad = 0.05 * (xhi - xlo)
    xlo, xhi = xlo - xpad, xhi + xpad

    def px(v):
        return left + (v - xlo) / (xhi - xlo) * (W - left - right)

    def py(v):
        return Ht - bottom - (v - ylo) / (yhi - ylo) * (Ht - top - bottom)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{Ht}" viewBox="0 0 {W} {Ht}">',
        f'<rect x="0" y="0" width="{W}" height="{Ht}" fill="white"/>',
        f'<text x="{W / 2:.2f}" y="30" text-anchor="middle" font-family="sans-serif" font-size="18">'
        f"{record.family} interface, eta = {_fmt(record.eta)}</text>",
        f'<line x1="{left}" y1="{Ht - bottom}" x2="{W - right}" y2="{Ht - bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{Ht - bottom}" stroke="black"/>',
    ]
    for t in _nice_ticks(xlo, xhi):
        out.append(f'<line x1="{px(t):.2f}" y1="{Ht - bottom}" x2="{px(t):.2f}" y2="{Ht - bottom + 6}" stroke="black"/>')
        out.append(f'<text x="{px(t):.2f}" y="{Ht - bottom + 22}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="12">{_fmt(t, 3)}</text>')
    for t in _nice_ticks(ylo, yhi):
        out.append(f'<line x1="{left - 6}" y1="{py(t):.2f}" x2="{left}" y2="{py(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 10}" y="{py(t) + 4:.2f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="12">{_fmt(t, 3)}</text>')
    out.append(f'<text x="{(left + W - right) / 2:.2f}" y="{Ht - 20}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="14">log K</text>')
    out.append(f'<text x="22" y="{(top + Ht - bottom) / 2:.2f}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="14" transform="rotate(-90 22 {(top + Ht - bottom) / 2:.2f})">log max |grad u|</text>')
    x0, x1 = float(x.min()), float(x.max())
    out.append(f'<line x1="{px(x0):.2f}" y1="{py(reg.intercept + reg.mu * x0):.2f}" x2="{px(x1):.2f}" '
               f'y2="{py(reg.intercept + reg.mu * x1):.2f}" stroke="#c0392b" stroke-width="2"/>')
    for xi, yi, ri in zip(x, y, resid):
        out.append(f'<circle cx="{px(xi):.2f}" cy="{py(yi):.2f}" r="5" fill="#2c3e50"/>')
        out.append(f'<text x="{px(xi):.2f}" y="{py(yi) - 10:.2f}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="9" fill="#555">{_fmt(ri, 4)}</text>')
    out.append(f'<text x="{left + 20}" y="{top + 20}" font-family="sans-serif" font-size="14">'
               f"mu = {reg.mu:.4f}, r^2 = {reg.r_squared:.4f}</text>")
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
    return path


# --------------------------------------------------------------------------
# workflows


def _write(out, name, text):
    (out / name).write_text(text)


def _do_sweep(cfg, out):
    c1, c2 = cfg.dirichlet
    trace = lambda x, y: c1 * x + c2 * y
    summary = ["family,mu,intercept,r_squared"]
    for fam in cfg.families:
        rec = experiment.run_sweep(fam, cfg.mesh_level, cfg.eta, trace, cfg.K_values, cfg.A, cfg.threads)
        _write(out, f"sweep_{fam}.csv", rec.csv())
        emit_svg_plot(rec, out / f"sweep_{fam}.svg")
        summary.append(rec.summary_line())
        if cfg.stability_gate and cfg.mesh_level > 0:
            coarse = experiment.run_sweep(fam, cfg.mesh_level - 1, cfg.eta, trace, cfg.K_values, cfg.A, cfg.threads)
            d = abs(rec.mu - coarse.mu)
            summary.append(f"# {fam} stability: mu(level {cfg.mesh_level - 1}) = {coarse.mu!r}, |dmu| = {d!r}, "
                           f"{'pass' if d < 0.02 else 'fail'}")
    _write(out, "summary.csv", "\n".join(summary) + "\n")
    return 0


def _verify_rows(cfg):
    oracle = analysis.circle_exact_solution(cfg.circle_a, cfg.eta)
    frame = oracle.apex_frame()
    window = (cfg.window_b, cfg.window_h)
    reports, checks = [], []
    for tau in cfg.taus:
        p = analysis.make_cgo(oracle.interior_gradient, tau, frame)
        checks.append((f"xi_dot_xi tau={tau!r}", abs(p.xi_dot_xi), 1e-12 * tau**2))
        rep = analysis.compute_i_terms(oracle, p, window, tol=cfg.quad_tol)
        reports.append(rep)
        if tau / (4 * rep.K) <= 8:
            err = abs(rep.I0_quad - rep.I0_closed) / abs(rep.I0_closed)
            checks.append((f"I0 closed vs quadrature tau={tau!r}", err, 1e-6))
            checks.append((f"I-term closure tau={tau!r}", rep.closure_relative, 1e-6))
        checks.append((f"I3 (constant interior gradient) tau={tau!r}", abs(rep.I3), 1e-12))
    for tau in (1.0, 2.0, 4.0, 8.0, 16.0):
        for K in (0.5, 1.0, 2.0, 4.0):
            p = analysis.make_cgo((1.0, 0.0), tau)
            q = analysis.region_quadrature(lambda x, y: analysis.eval_cgo(p, x, y),
                                           analysis.Paraboloid(K, tau), tol=1e-10, x_panels=max(4, int(tau)))
            c = analysis.i0_closed_form(p, K)
            checks.append((f"I0 grid tau={tau!r} K={K!r}", abs(q - c) / abs(c), 1e-6))
    return reports, checks


def _do_verify(cfg, out):
    reports, checks = _verify_rows(cfg)
    _write(out, "verify.csv", analysis.i_term_rows(reports))
    lines = ["check,value,threshold,pass"]
    ok = True
    for name, value, thr in checks:
        good = value <= thr
        ok &= good
        lines.append(f"{name},{value!r},{thr!r},{'PASS' if good else 'FAIL'}")
    _write(out, "invariants.csv", "\n".join(lines) + "\n")
    return 0 if ok else 1


def _do_identity(cfg, out):
    oracle = analysis.circle_exact_solution(cfg.circle_a, cfg.eta)
    frame = oracle.apex_frame()
    window = (cfg.window_b, cfg.window_h)
    cgo = analysis.make_cgo(oracle.interior_gradient, 8.0, frame)
    tests = [("one", analysis.ConstantFn(1.0)), ("x1", analysis.LinearFn(1.0, 0.0)), ("cgo_tau8", analysis.CgoFn(cgo))]
    lines = ["u0,lhs_real,lhs_imag,rhs_real,rhs_imag,residual"]
    ok = True
    for name, u0 in tests:
        r = analysis.identity_residual(oracle, u0, window, frame, tol=cfg.quad_tol)
        ok &= r.residual <= 1e-5
        lines.append(f"{name},{r.lhs.real!r},{r.lhs.imag!r},{r.rhs.real!r},{r.rhs.imag!r},{r.residual!r}")
    _write(out, "identity.csv", "\n".join(lines) + "\n")
    return 0 if ok else 1


def _do_bound(cfg, out):
    Ks = np.logspace(math.log10(cfg.K_min), math.log10(cfg.K_max), cfg.n_points)
    lines = ["K,term1,term2,term3,term4,total,envelope"]
    flagged = False
    for K in Ks:
        b = analysis.decay_bound(float(K), cfg.mu, cfg.alpha, cfg.delta, tuple(cfg.norms))
        flagged |= b.violates_condition
        lines.append(",".join(repr(float(v)) for v in (K, *b.terms, b.total, b.envelope)))
    _write(out, "bound.csv", "\n".join(lines) + "\n")
    peak = analysis.envelope_turning_point(cfg.mu, cfg.alpha, cfg.delta)
    note = [f"mu,{cfg.mu!r}", f"threshold,{min(1.0, cfg.delta) / 2!r}",
            f"condition_violated,{'true' if flagged else 'false'}",
            f"envelope_peak_K,{'none' if peak is None else repr(peak)}"]
    _write(out, "bound_summary.csv", "\n".join(note) + "\n")
    return 0


def _mesh_spec(cfg):
    if cfg.mesh_family == "parabolic":
        return geometry.InterfaceSpec.parabolic(cfg.mesh_K, domain_half_side=cfg.half_side)
    if cfg.mesh_family == "hyperbolic":
        return geometry.InterfaceSpec.hyperbolic(cfg.mesh_K, A=cfg.A, domain_half_side=cfg.half_side)
    if cfg.mesh_family == "circular":
        return geometry.InterfaceSpec.circular(cfg.circle_a, domain_half_side=cfg.half_side)
    return geometry.InterfaceSpec.cap(cfg.cap_K, cfg.cap_height, apex=tuple(cfg.cap_apex), domain_half_side=cfg.half_side)


def _do_mesh(cfg, out):
    spec = _mesh_spec(cfg)
    mesh = geometry.refined_mesh(spec, cfg.mesh_level)
    geometry.check_mesh(mesh, spec)
    geometry.write_mesh(mesh, out / "mesh.txt")
    qmin, qasp = geometry.mesh_quality(mesh)
    _write(out, "mesh_quality.csv",
           "kind,K,mesh_level,n_vertices,n_triangles,min_angle,max_aspect\n"
           f"{spec.kind},{spec.K!r},{cfg.mesh_level},{mesh.n_vertices},{mesh.n_triangles},{qmin!r},{qasp!r}\n")
    return 0


def _do_compare(cfg, out):
    apex = tuple(cfg.cap_apex)
    D = geometry.InterfaceSpec.cap(cfg.cap_K, cfg.cap_height, apex=apex, domain_half_side=cfg.half_side)
    moved = geometry.InterfaceSpec.cap(cfg.cap_K, cfg.cap_height, apex=(apex[0] + cfg.cap_shift, apex[1]),
                                       domain_half_side=cfg.half_side)
    L = cfg.compare_level
    rows = [("identical", experiment.compare_inclusions(D, D, cfg.eta, mesh_level=L)),
            ("contrast", experiment.compare_inclusions(D, D, cfg.eta, cfg.eta_tilde, mesh_level=L)),
            ("translated", experiment.compare_inclusions(D, moved, cfg.eta, mesh_level=L))]
    floor = experiment.comparison_noise_floor(D, cfg.eta, mesh_level=L)
    lines = ["case,l2,max"] + [f"{n},{c.l2!r},{c.max!r}" for n, c in rows]
    lines.append(f"noise_floor,{floor!r},")
    _write(out, "compare.csv", "\n".join(lines) + "\n")
    return 0


def _do_converge(cfg, out):
    rows = experiment.convergence_study(cfg.circle_a, cfg.eta, cfg.levels)
    lines = ["level,h,n_vertices,l2_error,energy_error,l2_rate,energy_rate"]
    lines += [",".join(repr(v) if isinstance(v, float) else str(v) for v in r) for r in rows]
    _write(out, "converge.csv", "\n".join(lines) + "\n")
    return 0


_WORKFLOWS = {"sweep": _do_sweep, "verify": _do_verify, "identity": _do_identity, "bound": _do_bound,
              "mesh": _do_mesh, "compare": _do_compare, "converge": _do_converge}


def run(subcommand, config):
    """Execute one workflow; returns the process exit status."""
    if subcommand not in _WORKFLOWS:
        print(f"unknown subcommand {subcommand!r}", file=sys.stderr)
        return 2
    try:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write(out, "config_echo.cfg", config_echo(config, subcommand))
    except OSError as exc:
        print(f"cannot write output directory: {exc}", file=sys.stderr)
        return 2
    try:
        return _WORKFLOWS[subcommand](config, out)
    except (ConfigError, geometry.SamplingError, analysis.WindowError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, RuntimeError, ValueError, OSError) as exc:
        print(f"{subcommand} failed: {exc}", file=sys.stderr)
        return 1


def main(argv=None):
    ap = argparse.ArgumentParser(prog="curvinc", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="key = value config file")
    ap.add_argument("--out-dir")
    ap.add_argument("--threads", type=int)
    ap.add_argument("--mesh-level", type=int)
    args = ap.parse_args(argv)
    try:
        text = Path(args.config).read_text() if args.config else ""
        cfg = parse_config(text)
        if args.out_dir is not None:
            cfg.out_dir = args.out_dir
        if args.threads is not None:
            cfg.threads = args.threads
        if args.mesh_level is not None:
            cfg.mesh_level = args.mesh_level
        _validate(cfg)
    except (OSError, ConfigError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return run(args.subcommand, cfg)


if __name__ == "__main__":
    sys.exit(main())
