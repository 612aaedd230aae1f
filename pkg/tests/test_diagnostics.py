import csv

import numpy as np
import pytest

from tiemortar import diagnostics
from tiemortar.diagnostics import (SpectralReport, check_projection_stability, check_residual,
                                   estimate_trace_constant, extension_constant, infsup_mesh_norm,
                                   mesh_uniformity_ratio, write_report_csv)
from tiemortar.errors import IllPosedError, NumericalError
from tiemortar.fem import ElasticMaterial
from tiemortar.mesh import Tag, TraceMesh, build_rect_mesh, refine_trace, refine_uniform
from tiemortar.saddle import MethodSpec, build_system

D, N, I = Tag.DIRICHLET, Tag.NEUMANN, Tag.INTERFACE
MAT = ElasticMaterial(1e3, 0.3)


def side1(n, nx=None):
    return build_rect_mesh((0, 0), (1, 1), nx or n, n, dict(left=D, right=I, top=N, bottom=N))


def side2(n):
    return build_rect_mesh((1, 0), (1.5, 1), max(1, n // 2), n, dict(left=I, right=D, top=N, bottom=N))


def graded(ratio=1.1, n=16):
    b = np.concatenate([[0.0], np.cumsum(ratio ** np.arange(n))])
    return TraceMesh.from_breakpoints(b / b[-1])


# --- trace constant --------------------------------------------------------------------------


def test_trace_constant_scales_with_modulus():
    m = side1(2)
    a = estimate_trace_constant(m, MAT, 1).value
    b = estimate_trace_constant(m, ElasticMaterial(2e3, 0.3), 1).value
    assert b == pytest.approx(a / 2, rel=1e-10)


def test_trace_constant_stable_under_refinement():
    m = side1(2)
    values = []
    for _ in range(4):
        values.append(estimate_trace_constant(m, MAT, 1).value)
        m = refine_uniform(m)
    assert (max(values) - min(values)) / max(values) < 0.2


def test_trace_constant_single_element_baseline():
    r = check_residual(estimate_trace_constant(side1(1), MAT, 1))
    assert r.value == pytest.approx(5.61184041591682e-4, rel=1e-8)


def test_trace_constant_p2_is_smaller():
    m = side1(2)
    assert estimate_trace_constant(m, MAT, 2).value < estimate_trace_constant(m, MAT, 1).value


def test_trace_constant_translation_invariant():
    m = side1(3)
    a = estimate_trace_constant(m, MAT, 1).value
    b = estimate_trace_constant(m.translated((5.0, -2.0)), MAT, 1).value
    assert b == pytest.approx(a, rel=1e-10)


def test_trace_constant_needs_dirichlet():
    with pytest.raises(IllPosedError):
        estimate_trace_constant(side1(2), MAT, 1, dirichlet=None)


def test_sparse_eigensolver_agrees_with_dense(monkeypatch):
    m = refine_uniform(side1(4))
    dense = estimate_trace_constant(m, MAT, 1).value
    monkeypatch.setattr(diagnostics, "DENSE_LIMIT", 10)
    sparse = estimate_trace_constant(m, MAT, 1)
    assert sparse.value == pytest.approx(dense, rel=1e-8)
    assert sparse.residual < 1e-6


# --- inf-sup -------------------------------------------------------------------------------


def test_infsup_p1p1_bounded_p1p0_decays():
    p1, p0 = [], []
    for n in (2, 4, 8):
        p1.append(infsup_mesh_norm(1, 1, True, side1(n), side2(n), MAT).value)
        p0.append(infsup_mesh_norm(1, 0, False, side1(n), side2(n), MAT).value)
    assert min(p1) / max(p1) >= 0.5
    assert p0[0] > p0[1] > p0[2]


def test_infsup_single_edge_brute_force():
    m1, m2 = side1(1), side2(1)
    rep = infsup_mesh_norm(1, 0, False, m1, m2, MAT)
    assert rep.value == pytest.approx(0.04391530122292468, rel=1e-8)

    # sweep the unit circle of the two multiplier components
    s = build_system(MethodSpec(1, 0, False, False), m1, m2, MAT, (0.0, 0.0), (0.0, 0.0))
    A1, A2 = s.reduced("A1").toarray(), s.reduced("A2").toarray()
    B1, B2 = s.reduced("B1").toarray(), s.reduced("B2").toarray()
    M = s.reduced("M").toarray()
    best = np.inf
    for theta in np.linspace(0.0, np.pi, 3601):
        mu = np.array([np.cos(theta), np.sin(theta)])
        g1, g2 = B1.T @ mu, B2.T @ mu
        q = (g1 @ np.linalg.solve(A1, g1) + g2 @ np.linalg.solve(A2, g2)) / (mu @ M @ mu)
        best = min(best, q)
    assert np.sqrt(best) == pytest.approx(rep.value, rel=1e-6)


def test_infsup_requires_dirichlet_on_both():
    with pytest.raises(IllPosedError):
        infsup_mesh_norm(1, 1, True, side1(2), side2(2), MAT, dirichlet2=None)


# --- projection stability --------------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 4, 16])
def test_projection_uniform(n):
    c = check_projection_stability(TraceMesh.from_breakpoints(np.linspace(0, 1, n + 1))).value
    assert 1.0 - 1e-10 <= c <= 2.0


def test_projection_graded_baseline():
    r = check_residual(check_projection_stability(graded()))
    assert 1.0 <= r.value <= 4.0
    assert r.value == pytest.approx(1.0024420595757018, rel=1e-8)


def test_projection_identity_on_space():
    # with no refinement the probe space is the projection target itself
    assert check_projection_stability(graded(), refinements=0).value == pytest.approx(1.0, abs=1e-10)


# --- uniformity and extension ------------------------------------------------------------------


def test_uniformity_ratio():
    assert mesh_uniformity_ratio(TraceMesh.from_breakpoints(np.linspace(0, 1, 7))) == pytest.approx(1.0)
    t = TraceMesh.from_breakpoints([0, 0.5, 0.75, 1.0])
    assert mesh_uniformity_ratio(t) == pytest.approx(0.5)
    assert mesh_uniformity_ratio(refine_trace(t)) == pytest.approx(0.5)


def test_extension_constant_bounded():
    m = side1(2)
    values = []
    for _ in range(4):
        values.append(check_residual(extension_constant(m)).value)
        m = refine_uniform(m)
    assert max(values) <= 10.0
    assert (max(values) - min(values)) / max(values) < 0.5


# --- reporting --------------------------------------------------------------------------------


def test_check_residual_rejects():
    with pytest.raises(NumericalError):
        check_residual(SpectralReport("C_I", 1.0, 1e-3))


def test_report_csv(tmp_path):
    path = tmp_path / "r.csv"
    write_report_csv([SpectralReport("C_E", 9.0, 0.0).at(0, 0.5), SpectralReport("C_I", 0.1, 0.0)], path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["constant", "level", "h", "value"]
    assert rows[1] == ["C_E", "0", "0.5", "9.0"]
    assert rows[2] == ["C_I", "", "", "0.1"]
