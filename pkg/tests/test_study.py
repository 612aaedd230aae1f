import csv
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tiemortar.errors import ConfigurationError, ExactSolutionNotice
from tiemortar.interface import MultiplierSpace
from tiemortar.mesh import TraceMesh
from tiemortar.saddle import get_method
from tiemortar.study import (THREADS_ENV, StudyConfig, energy_error, fit_rate, get_preset, multiplier_error,
                             run_study, solve_preset, tangential_oscillation)

PATCH = get_preset("patch-test")


# --- rate fitting ---------------------------------------------------------------------------

HS = [0.5, 0.25, 0.125, 0.0625]


@pytest.mark.parametrize("p", [2.0, 1.5, 0.0])
def test_fit_rate_exact_powers(p):
    assert fit_rate([(h, 3.0 * h**p) for h in HS]) == pytest.approx(p, abs=1e-10)


def test_fit_rate_zero_error():
    with pytest.raises(ExactSolutionNotice):
        fit_rate([(0.5, 1.0), (0.25, 0.0), (0.125, 0.1)])


def test_fit_rate_needs_three_levels():
    with pytest.raises(ConfigurationError):
        fit_rate([(0.5, 1.0), (0.25, 0.5)])


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(1e-3, 1e3))
def test_fit_rate_recovers_slope(p, c):
    assert fit_rate([(h, c * h**p) for h in HS]) == pytest.approx(p, abs=1e-9)


# --- multiplier error --------------------------------------------------------------------------


def test_multiplier_error_self():
    space = MultiplierSpace(TraceMesh.from_breakpoints(np.linspace(0, 1, 5)), 1, True)
    lam = np.random.default_rng(0).standard_normal(space.n_dofs)
    assert multiplier_error(lam, space, lam, space) == 0.0


@pytest.mark.parametrize("n", [4, 10])
def test_multiplier_error_constant_shift(n):
    h = 1.0 / n
    study = MultiplierSpace(TraceMesh.from_breakpoints(np.linspace(0, 1, n + 1)), 0, False)
    ref = MultiplierSpace(TraceMesh.from_breakpoints(np.linspace(0, 1, 3 * n + 1)), 1, True)
    c = np.array([0.3, -0.4])  # |c| = 0.5
    lam_h = np.tile(c, study.n_scalar)
    assert multiplier_error(lam_h, study, np.zeros(ref.n_dofs), ref) == pytest.approx(0.5 * np.sqrt(h), rel=1e-13)


def test_multiplier_error_riemann_oracle():
    rng = np.random.default_rng(4)
    b1 = np.sort(np.concatenate([[0, 1], rng.random(6)]))
    b2 = np.sort(np.concatenate([[0, 1], rng.random(13)]))
    study = MultiplierSpace(TraceMesh.from_breakpoints(b1), 1, True)
    ref = MultiplierSpace(TraceMesh.from_breakpoints(b2), 1, False)
    lh, lr = rng.standard_normal(study.n_dofs), rng.standard_normal(ref.n_dofs)
    got = multiplier_error(lh, study, lr, ref)

    n = 2_000_000
    s = (np.arange(n) + 0.5) / n  # midpoint sums: exact up to O(1/n^2) away from the kinks
    diff = study.evaluate(lh, s) - ref.evaluate(lr, s)
    h = study.trace.h[study.trace.locate(s)]
    oracle = np.sqrt(np.sum(h * np.einsum("nd,nd->n", diff, diff)) / n)
    assert got == pytest.approx(oracle, rel=1e-6)


# --- energy error -----------------------------------------------------------------------------


@pytest.fixture(scope="module")
def patch_pair():
    sizes = PATCH.sizes(0, False)
    coarse = solve_preset(PATCH, get_method("mixed-p1p1"), sizes)
    fine = solve_preset(PATCH, get_method("stab-p2p1"), tuple(2 * s for s in sizes))
    return coarse, fine


def test_energy_error_self(patch_pair):
    coarse, _ = patch_pair
    assert energy_error(coarse, coarse) == 0.0


def test_energy_error_exact_field_vanishes(patch_pair):
    coarse, fine = patch_pair
    assert energy_error(coarse, fine) < 1e-10


def test_energy_norm_of_linear_field(patch_pair):
    coarse, fine = patch_pair
    zero = replace(fine, u1=np.zeros_like(fine.u1), u2=np.zeros_like(fine.u2))
    m = PATCH.material
    exx, eyy = PATCH.strains
    density = m.shear * (exx**2 + eyy**2) + m.dilatation * (exx + eyy) ** 2
    # two unit squares
    assert energy_error(coarse, zero) == pytest.approx(np.sqrt(2 * density), rel=1e-12)


def test_energy_error_triangle_inequality(patch_pair):
    coarse, fine = patch_pair
    rng = np.random.default_rng(9)
    zero = replace(fine, u1=np.zeros_like(fine.u1), u2=np.zeros_like(fine.u2))

    def field():
        return replace(coarse, u1=rng.standard_normal(coarse.u1.shape), u2=rng.standard_normal(coarse.u2.shape))

    for _ in range(5):
        a, b = field(), field()
        ab = replace(coarse, u1=a.u1 + b.u1, u2=a.u2 + b.u2)
        assert energy_error(ab, zero) <= energy_error(a, zero) + energy_error(b, zero) + 1e-12


def test_energy_error_requires_nesting(patch_pair):
    coarse, _ = patch_pair
    other = solve_preset(PATCH, get_method("stab-p2p1"), (6, 6, 6, 6))
    with pytest.raises(ConfigurationError, match="nested"):
        energy_error(coarse, other)


# --- oscillation -------------------------------------------------------------------------------


def test_tangential_oscillation():
    trace = TraceMesh.from_breakpoints(np.linspace(0, 1, 5))  # tangent (0, 1)
    space = MultiplierSpace(trace, 0, False)
    alternating = np.column_stack([np.ones(4), [1.0, -1.0, 1.0, -1.0]]).ravel()
    assert tangential_oscillation(space, alternating) == 1.0
    steady = np.column_stack([np.ones(4), [1.0, 2.0, 3.0, -1.0]]).ravel()
    assert tangential_oscillation(space, steady) == pytest.approx(1 / 3)


# --- study plumbing ------------------------------------------------------------------------------


def test_study_config_validation():
    with pytest.raises(ConfigurationError):
        StudyConfig(levels=2)
    with pytest.raises(ConfigurationError):
        StudyConfig(ref_refinements=1)
    with pytest.raises(ConfigurationError):
        StudyConfig(methods=("nope",))
    with pytest.raises(ConfigurationError):
        StudyConfig(alpha=0.0)
    assert StudyConfig(methods=("stab-p1p0", "mixed-p1p0")).is_matching
    assert not StudyConfig(methods=("stab-p1p1",)).is_matching


def small_study(out, **kw):
    cfg = StudyConfig(methods=("mixed-p1p1", "stab-p1p1"), levels=3, output=str(out), **kw)
    return run_study(cfg)


def test_study_artifacts_and_determinism(tmp_path, monkeypatch):
    a, b = tmp_path / "a", tmp_path / "b"
    report = small_study(a)
    monkeypatch.setenv(THREADS_ENV, "3")
    small_study(b)
    names = ["convergence.csv", "rates.csv", "err_lambda.svg", "err_energy.svg",
             "lambda_profile_mixed-p1p1_0.csv", "lambda_profile_stab-p1p1_2.csv"]
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    rows = list(csv.DictReader((a / "convergence.csv").open()))
    assert list(rows[0]) == ["method", "level", "h", "dofs", "err_lambda", "err_energy", "uniformity", "beta_h"]
    assert len(rows) == 6 == len(report.rows)
    assert float(rows[0]["uniformity"]) == 1.0
    assert set(report.rates) == {"mixed-p1p1", "stab-p1p1"}


def test_study_alpha_override(tmp_path):
    report = small_study(tmp_path, alpha=1e-5, compute_infsup=False)
    assert all(r["alpha"] == 1e-5 for r in report.for_method("stab-p1p1"))
