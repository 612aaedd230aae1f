"""Acceptance criteria 1-8, one test each, with the tolerances pinned below.

Each test records a PASS/FAIL line that is echoed in the terminal summary.
"""

import time

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from tiemortar.diagnostics import check_residual, estimate_trace_constant, extension_constant, infsup_mesh_norm
from tiemortar.fem import assemble_elasticity
from tiemortar.mesh import Tag, build_rect_mesh, refine_uniform
from tiemortar.saddle import build_system, coercivity_form, get_method, solve
from tiemortar.study import StudyConfig, get_preset, run_study

SQ = get_preset("square-square")
PATCH = get_preset("patch-test")
D, N, I = Tag.DIRICHLET, Tag.NEUMANN, Tag.INTERFACE

PATCH_LAMBDA_RTOL = 1e-8
PATCH_U_ATOL = 1e-10
PATCH_SECONDS = 1.0
P1P0_SLOPE_WINDOW = (1.3, 1.7)
P1P0_UNSTABLE_SLOPE_MAX = 1.0
OSCILLATION_MIN = 0.3
P1P0_SECONDS = 120.0
P1P1_SLOPE_WINDOW = (1.8, 2.2)
P1P1_AGREEMENT = 2.0
P1P1_SECONDS = 180.0
INFSUP_RATIO_MIN = 0.5
INFSUP_SECONDS = 120.0
TRACE_VARIATION_MAX = 0.2
RANDOM_VECTORS = 100
EXTENSION_VARIATION_MAX = 0.5
GLUED_ATOL = 1e-8
LEVELS = 5
DIAGNOSTIC_LEVELS = 4


def variation(values):
    values = np.asarray(values, dtype=float)
    return float((values.max() - values.min()) / values.max())


@pytest.fixture(scope="session")
def p1p0_study():
    t0 = time.perf_counter()
    report = run_study(StudyConfig(methods=("stab-p1p0", "mixed-p1p0"), levels=LEVELS, matching=True))
    return report, time.perf_counter() - t0


@pytest.fixture(scope="session")
def p1p1_study():
    t0 = time.perf_counter()
    report = run_study(StudyConfig(methods=("mixed-p1p1", "stab-p1p1"), levels=LEVELS, matching=False))
    return report, time.perf_counter() - t0


def test_criterion_1_patch_test(verdict):
    p = PATCH.pressure
    lam_err, u_err, elapsed = [], [], 0.0
    for name in ("mixed-p1p1", "stab-p1p1"):
        t0 = time.perf_counter()
        m1, m2 = PATCH.meshes(PATCH.sizes(0, False))
        sol = solve(build_system(get_method(name), m1, m2, PATCH.material, *PATCH.dirichlet()))
        elapsed += time.perf_counter() - t0
        # side-1 normal is (0, 1), so the multiplier is the constant (0, p)
        lam_err.append(np.abs(sol.lam.reshape(-1, 2) - [0.0, p]).max() / p)
        u_err.append(max(np.abs(u.reshape(-1, 2) - PATCH.exact(d.node_coords)).max()
                         for u, d in ((sol.u1, sol.system.dofs1), (sol.u2, sol.system.dofs2))))
    ok = max(lam_err) <= PATCH_LAMBDA_RTOL and max(u_err) <= PATCH_U_ATOL and elapsed < PATCH_SECONDS
    verdict(1, ok, f"lambda rel err {max(lam_err):.1e} (<= {PATCH_LAMBDA_RTOL:g}), "
                   f"u err {max(u_err):.1e} (<= {PATCH_U_ATOL:g}), {elapsed:.2f} s")
    assert ok


def test_criterion_2_stabilized_p1p0_rate(verdict, p1p0_study):
    report, elapsed = p1p0_study
    slope = report.rates["stab-p1p0"]["err_lambda"]
    lo, hi = P1P0_SLOPE_WINDOW
    ok = lo <= slope <= hi and elapsed < P1P0_SECONDS
    errs = ", ".join(f"{e:.3g}" for _, e in report.errors("stab-p1p0"))
    verdict(2, ok, f"stab-p1p0 multiplier slope {slope:.3f} (window [{lo}, {hi}]); errors {errs}; {elapsed:.1f} s")
    assert ok


def test_criterion_3_unstabilized_p1p0(verdict, p1p0_study):
    report, elapsed = p1p0_study
    slope = report.rates["mixed-p1p0"]["err_lambda"]
    osc = report.for_method("mixed-p1p0")[-1]["oscillation"]
    ok = slope < P1P0_UNSTABLE_SLOPE_MAX and osc > OSCILLATION_MIN and elapsed < P1P0_SECONDS
    verdict(3, ok, f"mixed-p1p0 multiplier slope {slope:.3f} (< {P1P0_UNSTABLE_SLOPE_MAX}), "
                   f"tangential sign changes {osc:.0%} (> {OSCILLATION_MIN:.0%}); {elapsed:.1f} s")
    assert ok


def test_criterion_4_p1p1_nonmatching(verdict, p1p1_study):
    report, elapsed = p1p1_study
    lo, hi = P1P1_SLOPE_WINDOW
    slopes = {m: report.rates[m]["err_lambda"] for m in ("mixed-p1p1", "stab-p1p1")}
    mixed = np.array([e for _, e in report.errors("mixed-p1p1")])
    stab = np.array([e for _, e in report.errors("stab-p1p1")])
    worst = float(np.max(np.maximum(mixed / stab, stab / mixed)))
    ok = all(lo <= s <= hi for s in slopes.values()) and worst <= P1P1_AGREEMENT and elapsed < P1P1_SECONDS
    verdict(4, ok, f"slopes mixed {slopes['mixed-p1p1']:.3f}, stab {slopes['stab-p1p1']:.3f} "
                   f"(window [{lo}, {hi}]); worst per-level ratio {worst:.3f} (<= {P1P1_AGREEMENT}); {elapsed:.1f} s")
    assert ok


def test_criterion_5_infsup(verdict):
    t0 = time.perf_counter()
    g1, g2 = SQ.dirichlet()
    p1, p0 = [], []
    for level in range(DIAGNOSTIC_LEVELS):
        m1, m2 = SQ.meshes(SQ.sizes(level, True))
        p1.append(check_residual(infsup_mesh_norm(1, 1, True, m1, m2, SQ.material, g1, g2)).value)
        p0.append(check_residual(infsup_mesh_norm(1, 0, False, m1, m2, SQ.material, g1, g2)).value)
    elapsed = time.perf_counter() - t0
    ratio = min(p1) / max(p1)
    decreasing = all(a > b for a, b in zip(p0, p0[1:]))
    ok = ratio >= INFSUP_RATIO_MIN and decreasing and elapsed < INFSUP_SECONDS
    verdict(5, ok, f"P1-P1 min/max {ratio:.3f} (>= {INFSUP_RATIO_MIN}); P1-P0 "
                   f"{' > '.join(f'{b:.4f}' for b in p0)} strictly decreasing: {decreasing}; {elapsed:.1f} s")
    assert ok


def test_criterion_6_trace_constant_and_coercivity(verdict):
    g1, _ = SQ.dirichlet()
    m1, _ = SQ.meshes(SQ.sizes(0, True))
    c_i = []
    for _ in range(DIAGNOSTIC_LEVELS):
        c_i.append(check_residual(estimate_trace_constant(m1, SQ.material, 1, g1)).value)
        m1 = refine_uniform(m1)
    var = variation(c_i)

    rng = np.random.default_rng(2024)
    worst = np.inf
    for name in ("stab-p1p1", "stab-p1p0", "stab-p2p1"):
        m1, m2 = SQ.meshes(SQ.sizes(2, False))
        system = build_system(get_method(name), m1, m2, SQ.material, *SQ.dirichlet())
        for _ in range(RANDOM_VECTORS):
            w = rng.standard_normal(system.n1 + system.n2)
            xi = rng.standard_normal(system.n_mult)
            worst = min(worst, coercivity_form(system, w, xi))
    ok = var < TRACE_VARIATION_MAX and worst > 0
    verdict(6, ok, f"C_I {', '.join(f'{c:.4e}' for c in c_i)} varies {var:.1%} (< {TRACE_VARIATION_MAX:.0%}); "
                   f"min B_h(w,xi;w,-xi) over {3 * RANDOM_VECTORS} random vectors {worst:.3e} (> 0)")
    assert ok


def test_criterion_7_extension_bound(verdict):
    m1, _ = SQ.meshes(SQ.sizes(0, True))
    c_e = []
    for _ in range(DIAGNOSTIC_LEVELS):
        c_e.append(check_residual(extension_constant(m1)).value)
        m1 = refine_uniform(m1)
    var = variation(c_e)
    ok = var < EXTENSION_VARIATION_MAX
    verdict(7, ok, f"C_E {', '.join(f'{c:.4f}' for c in c_e)} varies {var:.1%} (< {EXTENSION_VARIATION_MAX:.0%})")
    assert ok


def glued(n):
    xs = np.concatenate([np.linspace(0, 1, n + 1), np.linspace(1, 1.5, n // 2 + 1)[1:]])
    mesh = build_rect_mesh((0, 0), (1.5, 1), len(xs) - 1, n, dict(left=D, right=D, top=N, bottom=N), xs=xs)
    blk, dofs = assemble_elasticity(mesh, SQ.material, 1, dirichlet=lambda p: np.column_stack(
        [np.where(p[:, 0] < 0.5, 0.1, 0.0), np.zeros(len(p))]))
    f, c = dofs.free, dofs.constrained
    A = blk.A.tocsr()
    u = dofs.lift(spla.spsolve(A[f][:, f].tocsc(), blk.f[f] - A[f][:, c] @ dofs.fixed_values[c]))
    return {tuple(np.round(p, 12)): v for p, v in zip(mesh.vertices, u.reshape(-1, 2))}


def test_criterion_8_glued_conformity(verdict):
    worst = 0.0
    for level in range(DIAGNOSTIC_LEVELS):
        sizes = SQ.sizes(level, True)
        m1, m2 = SQ.meshes(sizes)
        sol = solve(build_system(get_method("mixed-p1p1"), m1, m2, SQ.material, *SQ.dirichlet()))
        ref = glued(sizes[1])
        for u, dofs in ((sol.u1, sol.system.dofs1), (sol.u2, sol.system.dofs2)):
            expected = np.array([ref[tuple(np.round(p, 12))] for p in dofs.node_coords])
            worst = max(worst, float(np.abs(u.reshape(-1, 2) - expected).max()))
    ok = worst <= GLUED_ATOL
    verdict(8, ok, f"max nodal difference to the glued conforming solve {worst:.1e} (<= {GLUED_ATOL:g})")
    assert ok
