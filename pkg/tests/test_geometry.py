import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curvinc.geometry import (
    ABOVE, BELOW, BOTTOM, INTERIOR, LEFT, RIGHT, TOP,
    InterfaceSpec, Mesh, MeshError, SamplingError,
    check_admissibility, check_mesh, eval_interface, generate_mesh, interface_derivatives,
    level_set, mesh_quality, read_mesh, refine_mesh, write_mesh,
)

REFERENCE_K = [1.5**j for j in range(10)]


# --- InterfaceSpec / eval_interface ---------------------------------------

def test_spec_validation():
    with pytest.raises(ValueError):
        InterfaceSpec.hyperbolic(1.0, A=0.0)
    with pytest.raises(ValueError):
        InterfaceSpec.circular(6.0)
    with pytest.raises(ValueError):
        InterfaceSpec("ellipse", 1.0)
    with pytest.raises(ValueError):
        InterfaceSpec.hyperbolic(0.0)
    InterfaceSpec.parabolic(0.0)  # flat limit is accepted


def test_eval_interface_examples():
    assert eval_interface(InterfaceSpec.parabolic(1.0), 2.0) == 4.0
    assert eval_interface(InterfaceSpec.parabolic(1.5), 0.0) == 0.0
    assert eval_interface(InterfaceSpec.hyperbolic(1.0, A=1.0), 0.0) == pytest.approx(1.0, abs=1e-15)


@given(st.floats(0.1, 50), st.floats(-5, 5))
def test_parabola_through_origin_and_even(K, x):
    s = InterfaceSpec.parabolic(K)
    assert eval_interface(s, 0.0) == 0.0
    assert eval_interface(s, x) == eval_interface(s, -x)


# --- derivatives -----------------------------------------------------------

def test_apex_curvature_examples():
    _, w2, kappa = interface_derivatives(InterfaceSpec.parabolic(1.5), 0.0)
    assert w2 == 3.0 and kappa == 3.0
    slope, _, kappa = interface_derivatives(InterfaceSpec.hyperbolic(2.0, A=1.0), 0.0)
    assert slope == 0.0 and kappa == pytest.approx(2.0, rel=1e-14)


def _fd_second(spec, x, h=1e-5):
    w = lambda t: eval_interface(spec, t)
    return (w(x + h) - 2 * w(x) + w(x - h)) / h**2


@pytest.mark.parametrize("K", REFERENCE_K)
def test_apex_curvature_matches_finite_differences(K):
    # geometric curvature at the apex: 2K for parabolas, K for hyperbolas
    p = InterfaceSpec.parabolic(K)
    fd = _fd_second(p, 0.0, h=1e-3 / K)
    assert interface_derivatives(p, 0.0)[2] == pytest.approx(2 * K, rel=1e-12)
    assert fd == pytest.approx(2 * K, rel=1e-6)
    hy = InterfaceSpec.hyperbolic(K)
    fd = _fd_second(hy, 0.0, h=1e-3 / K)
    assert interface_derivatives(hy, 0.0)[2] == pytest.approx(K, rel=1e-12)
    assert fd == pytest.approx(K, rel=1e-6)


@given(st.floats(0.2, 40), st.floats(-3, 3))
@settings(max_examples=50)
def test_slope_matches_central_difference(K, x):
    for spec in (InterfaceSpec.parabolic(K), InterfaceSpec.hyperbolic(K)):
        h = 1e-6 * max(1.0, abs(x))
        fd = (eval_interface(spec, x + h) - eval_interface(spec, x - h)) / (2 * h)
        assert interface_derivatives(spec, x)[0] == pytest.approx(fd, rel=1e-5, abs=1e-5 * K)


# --- admissibility ---------------------------------------------------------

def test_admissibility_parabola_exact():
    r = check_admissibility(InterfaceSpec.parabolic(2.0), M=1.0)
    assert r.K_minus == pytest.approx(2.0, abs=1e-12)
    assert r.K_plus == pytest.approx(2.0, abs=1e-12)
    assert r.L == pytest.approx(0.0, abs=1e-12)
    assert r.admissible
    assert r.b == pytest.approx(0.5) and r.h == pytest.approx(0.5)


@pytest.mark.parametrize("K", REFERENCE_K)
def test_admissibility_parabola_sweep(K):
    r = check_admissibility(InterfaceSpec.parabolic(K), M=1.0)
    assert abs(r.K_minus - K) <= 1e-12 * max(1.0, K)
    assert abs(r.K_plus - K) <= 1e-12 * max(1.0, K)


def test_admissibility_hyperbola_effective_coefficient():
    spec = InterfaceSpec.hyperbolic(2.0, A=1.0)
    r = check_admissibility(spec, M=4.0)
    assert r.K_effective == pytest.approx(1.0, rel=1e-12)
    # dense sampling oracle
    x = np.linspace(-r.b, r.b, 100_001)
    x = x[x != 0]
    ratio = (eval_interface(spec, x) - eval_interface(spec, 0.0)) / x**2
    assert r.K_minus <= 1.0 <= r.K_plus
    assert r.K_minus == pytest.approx(ratio.min(), rel=1e-6)
    assert r.K_plus == pytest.approx(ratio.max(), rel=1e-6)
    assert not r.admissible and "effective" in r.reasons[0]


def test_admissibility_circle_small_window():
    spec = InterfaceSpec.circular(0.5)
    with pytest.raises(SamplingError):
        check_admissibility(spec, M=1.0)
    r = check_admissibility(spec, M=1.0, window=0.2)
    x = np.linspace(1e-6, 0.2, 10_000)
    oracle = (0.5 - np.sqrt(0.25 - x**2)) / x**2
    assert r.K_minus <= 1.0 <= r.K_plus
    assert r.K_plus == pytest.approx(oracle.max(), rel=1e-6)


def test_admissibility_invariants_and_errors():
    r = check_admissibility(InterfaceSpec.hyperbolic(1.0), M=4.0)
    assert r.M >= 1
    assert r.K_plus - r.K_minus <= r.L * r.K ** (1 - r.delta) + 1e-15
    with pytest.raises(ValueError):
        check_admissibility(InterfaceSpec.parabolic(1.0), M=1.0, n_samples=10)
    with pytest.raises(SamplingError):
        check_admissibility(InterfaceSpec.parabolic(0.1), M=1.0)  # b = 10 > 5


# --- meshes ----------------------------------------------------------------

def test_flat_structured_mesh_counts():
    m = generate_mesh(InterfaceSpec.parabolic(0.0), n_horizontal=4, n_vertical=2, grading=1.0)
    assert m.n_vertices == 25
    assert m.n_triangles == 32
    assert mesh_quality(m)[0] == pytest.approx(45.0)
    check_mesh(m, InterfaceSpec.parabolic(0.0))


def test_quality_equilateral():
    V = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
    m = Mesh(V, np.array([[0, 1, 2]]), np.array([0]), np.zeros(3, dtype=np.int8), np.zeros((0, 2), int))
    amin, aspect = mesh_quality(m)
    assert amin == pytest.approx(60.0)
    assert aspect == pytest.approx(1.0)


SPECS = [
    InterfaceSpec.parabolic(1.0),
    InterfaceSpec.parabolic(1.5**5),
    InterfaceSpec.parabolic(1.5**9),
    InterfaceSpec.hyperbolic(1.0),
    InterfaceSpec.hyperbolic(1.5**9),
    InterfaceSpec.circular(1.0),
    InterfaceSpec.cap(1.0, 1.5, apex=(0.0, -1.0)),
]


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"{s.kind}-{s.K:.3g}")
def test_mesh_invariants(spec):
    m = generate_mesh(spec)
    assert check_mesh(m, spec) == pytest.approx(100.0, rel=1e-9)
    assert np.all(m.signed_areas() > 0)
    c = m.centroids()
    inside = level_set(spec, c[:, 0], c[:, 1]) > 0
    assert np.array_equal(inside, m.region_tags == ABOVE)
    p = m.vertices[np.unique(m.interface_edges)]
    assert np.abs(level_set(spec, p[:, 0], p[:, 1])).max() <= 1e-12 * spec.side


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"{s.kind}-{s.K:.3g}")
def test_refinement_preserves_invariants(spec):
    m = generate_mesh(spec, n_horizontal=20, n_vertical=10)
    r = refine_mesh(m, spec)
    assert r.n_triangles == 4 * m.n_triangles
    check_mesh(r, spec)
    # children inherit the parent tag
    assert np.array_equal(r.region_tags.reshape(-1, 4), np.repeat(m.region_tags[:, None], 4, 1))


def test_refined_interface_midpoints_lie_on_curve():
    spec = InterfaceSpec.parabolic(3.0)
    m = refine_mesh(generate_mesh(spec, n_horizontal=16, n_vertical=8), spec)
    p = m.vertices[np.unique(m.interface_edges)]
    inside_square = np.abs(p[:, 1]) < spec.domain_half_side
    assert np.all(p[inside_square, 1] == eval_interface(spec, p[inside_square, 0]))


def test_steep_parabola_exits_top():
    K = 1.5**9
    spec = InterfaceSpec.parabolic(K)
    m = generate_mesh(spec)
    xe = math.sqrt(5.0 / K)
    assert xe == pytest.approx(0.3606, abs=1e-4)
    on_top = m.vertices[(m.vertices[:, 1] == 5.0)]
    assert np.any(np.isclose(np.abs(on_top[:, 0]), xe, atol=1e-12))
    # columns beyond the exit carry no inclusion
    c = m.centroids()
    assert np.all(m.region_tags[np.abs(c[:, 0]) > xe] == BELOW)


def test_steep_parabola_quality_recorded():
    # the wedge between the curve and the top edge has opening angle
    # atan(1 / (2 K x_exit)), which bounds every conforming triangulation
    K = 1.5**9
    xe = math.sqrt(5.0 / K)
    wedge = math.degrees(math.atan(1.0 / (2 * K * xe)))
    amin, _ = mesh_quality(generate_mesh(InterfaceSpec.parabolic(K)))
    assert 0 < amin <= wedge
    assert wedge < 5.0


def test_circle_area_error_shrinks_fourfold():
    spec = InterfaceSpec.circular(1.0)
    errs = []
    m = generate_mesh(spec, n_horizontal=16, n_vertical=8)
    for _ in range(3):
        inside = np.abs(m.signed_areas()[m.region_tags == ABOVE]).sum()
        errs.append(math.pi - inside)
        m = refine_mesh(m, spec)
    assert errs[0] > errs[1] > errs[2] > 0
    for a, b in zip(errs, errs[1:]):
        assert a / b == pytest.approx(4.0, rel=0.05)


def test_boundary_markers():
    m = generate_mesh(InterfaceSpec.parabolic(1.0))
    V, mk = m.vertices, m.boundary_markers
    assert np.all(mk[V[:, 0] == -5.0] == LEFT)
    assert np.all(mk[(V[:, 0] == 5.0)] == RIGHT)
    inner = (np.abs(V[:, 0]) < 5) & (np.abs(V[:, 1]) < 5)
    assert np.all(mk[inner] == INTERIOR)
    assert np.all(mk[(V[:, 1] == 5.0) & inner.__invert__() & (np.abs(V[:, 0]) < 5)] == TOP)
    assert np.all(mk[(V[:, 1] == -5.0) & (np.abs(V[:, 0]) < 5)] == BOTTOM)


def test_check_mesh_rejects_bad_tags():
    spec = InterfaceSpec.parabolic(1.0)
    m = generate_mesh(spec, n_horizontal=8, n_vertical=4)
    m.region_tags = 1 - m.region_tags
    with pytest.raises(MeshError):
        check_mesh(m, spec)


def test_mesh_is_deterministic():
    spec = InterfaceSpec.hyperbolic(1.5**4)
    a, b = generate_mesh(spec), generate_mesh(spec)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.triangles, b.triangles)


def test_mesh_roundtrip(tmp_path):
    spec = InterfaceSpec.cap(1.0, 1.5, apex=(0.3, -1.0))
    m = generate_mesh(spec, n_horizontal=12, n_vertical=6)
    path = tmp_path / "mesh.txt"
    write_mesh(m, path)
    first = path.read_text().splitlines()[0]
    assert first == f"{m.n_vertices} {m.n_triangles}"
    r = read_mesh(path)
    assert np.array_equal(r.vertices, m.vertices)
    assert np.array_equal(r.triangles, m.triangles)
    assert np.array_equal(r.region_tags, m.region_tags)
    assert np.array_equal(r.boundary_markers, m.boundary_markers)
    assert {tuple(sorted(e)) for e in r.interface_edges} == {tuple(sorted(e)) for e in m.interface_edges}


@given(st.floats(0.3, 40.0), st.sampled_from(["parabolic", "hyperbolic"]))
@settings(max_examples=8, deadline=None)
def test_random_specs_mesh_valid(K, kind):
    spec = InterfaceSpec(kind, K)
    check_mesh(generate_mesh(spec, n_horizontal=16, n_vertical=6), spec)
