"""Convergence studies on the square-against-square problem and the patch test.

A study solves one fine reference problem (stabilized P2-P1 on a nested
refinement of the finest study meshes), then every (method, level) pair, and
reports multiplier errors in the ``h``-weighted L2 norm together with
energy-norm displacement errors.
"""

from __future__ import annotations

import csv
import io
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .diagnostics import infsup_mesh_norm, mesh_uniformity_ratio
from .errors import ConfigurationError, ExactSolutionNotice, TieMortarError
from .fem import ElasticMaterial, build_dofmap, gauss_rule, p1_to_p2, prolongate
from .interface import MultiplierSpace, merge_partitions, normal_tangential, write_multiplier_csv
from .mesh import Mesh2D, Tag, build_rect_mesh
from .saddle import MethodSpec, Solution, build_system, get_method, solve, with_alpha

log = logging.getLogger(__name__)

D, N, I = Tag.DIRICHLET, Tag.NEUMANN, Tag.INTERFACE
REFERENCE_METHOD = "stab-p2p1"
RATE_WINDOW = 3
THREADS_ENV = "TIEMORTAR_THREADS"


# --- presets ------------------------------------------------------------------


@dataclass(frozen=True)
class Preset:
    name: str
    material: ElasticMaterial
    coarse_ny: int
    default_matching: bool

    def sizes(self, level: int, matching: bool, coarse_ny: int | None = None) -> tuple:
        """Cell counts ``(nx1, ny1, nx2, ny2)`` at a refinement level."""
        n = self.coarse_ny if coarse_ny is None else coarse_ny
        return tuple(c * 2 ** level for c in self.coarse_sizes(n, matching))

    def coarse_sizes(self, n: int, matching: bool) -> tuple:
        n2 = n if matching else n + 1
        return n, n, n2, n2

    def meshes(self, sizes) -> tuple:
        raise NotImplementedError

    def dirichlet(self):
        raise NotImplementedError


class SquareSquare(Preset):
    """Omega_1 = (0,1)^2 against Omega_2 = (1,1.5)x(0,1), clamped at x = 0 and x = 1.5."""

    def coarse_sizes(self, n, matching):
        n2 = n if matching else n + 1
        return n, n, -(-n2 // 2), n2

    def meshes(self, sizes):
        nx1, ny1, nx2, ny2 = sizes
        m1 = build_rect_mesh((0.0, 0.0), (1.0, 1.0), nx1, ny1, dict(left=D, right=I, top=N, bottom=N))
        m2 = build_rect_mesh((1.0, 0.0), (1.5, 1.0), nx2, ny2, dict(left=I, right=D, top=N, bottom=N))
        return m1, m2

    def dirichlet(self):
        return (0.1, 0.0), (0.0, 0.0)


class PatchTest(Preset):
    """Two stacked unit squares under uniform uniaxial compression.

    Bottom of Omega_1 and top of Omega_2 carry the exact linear field, the
    lateral sides are traction free, and the interface is y = 1.
    """

    top_displacement = -0.1

    def meshes(self, sizes):
        nx1, ny1, nx2, ny2 = sizes
        m1 = build_rect_mesh((0.0, 0.0), (1.0, 1.0), nx1, ny1, dict(bottom=D, top=I, left=N, right=N))
        m2 = build_rect_mesh((0.0, 1.0), (1.0, 2.0), nx2, ny2, dict(bottom=I, top=D, left=N, right=N))
        return m1, m2

    @property
    def strains(self) -> tuple:
        c1, c2 = self.material.shear, self.material.dilatation
        e_yy = self.top_displacement / 2.0
        return -c2 / (c1 + c2) * e_yy, e_yy

    def exact(self, pts):
        exx, eyy = self.strains
        pts = np.asarray(pts, dtype=float)
        return np.column_stack([exx * pts[:, 0], eyy * pts[:, 1]])

    def dirichlet(self):
        return self.exact, self.exact

    @property
    def pressure(self) -> float:
        """Compressive normal traction carried across the interface."""
        c1, c2 = self.material.shear, self.material.dilatation
        exx, eyy = self.strains
        return -(c2 * exx + (c1 + c2) * eyy)


PAPER_MATERIAL = ElasticMaterial(1e3, 0.3)
PRESETS = {
    "square-square": SquareSquare("square-square", PAPER_MATERIAL, 2, True),
    "patch-test": PatchTest("patch-test", PAPER_MATERIAL, 4, False),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def solve_preset(preset: Preset, method: MethodSpec, sizes) -> Solution:
    m1, m2 = preset.meshes(sizes)
    g1, g2 = preset.dirichlet()
    return solve(build_system(method, m1, m2, preset.material, g1, g2))


# --- error measures -----------------------------------------------------------


def multiplier_error(lam_h, space_h: MultiplierSpace, lam_ref, space_ref: MultiplierSpace) -> float:
    """``||h^(1/2) (lam_h - lam_ref)||_{0,Gamma}`` with ``h`` from the study trace mesh."""
    merged = merge_partitions(space_h.trace, space_ref.trace)
    x, w = gauss_rule(4)
    s = merged.left[:, None] + merged.lengths[:, None] * x
    diff = space_h.evaluate(lam_h, s.ravel()) - space_ref.evaluate(lam_ref, s.ravel())
    weight = (merged.lengths[:, None] * w * space_h.trace.h[merged.edge1][:, None]).ravel()
    return float(np.sqrt(np.sum(weight * np.einsum("nd,nd->n", diff, diff))))


def _match_nodes(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Permutation ``p`` with ``src[p] == dst`` (coordinates), or ConfigurationError."""
    if len(src) != len(dst):
        raise ConfigurationError("meshes are not nested: node counts differ")
    scale = max(1.0, float(np.abs(dst).max()))
    ks, kd = np.round(src / scale, 10), np.round(dst / scale, 10)
    os_, od = np.lexsort(ks.T[::-1]), np.lexsort(kd.T[::-1])
    if not np.allclose(src[os_], dst[od], rtol=0.0, atol=1e-9 * scale):
        raise ConfigurationError("meshes are not nested: reference nodes do not match the refined study mesh")
    p = np.empty(len(dst), dtype=np.int64)
    p[od] = os_
    return p


def transfer_to_reference(mesh_h: Mesh2D, u_h, ref_dofs) -> np.ndarray:
    """Exact nodal transfer of a P1 field onto a nested (P1 or P2) reference mesh."""
    ratio = ref_dofs.mesh.n_triangles / mesh_h.n_triangles
    times = int(round(np.log(ratio) / np.log(4.0))) if ratio >= 1 else -1
    if times < 0 or 4 ** times != ratio:
        raise ConfigurationError("meshes are not nested: triangle counts are not related by 4^k")
    fine, vals = prolongate(mesh_h, np.asarray(u_h, dtype=float).reshape(-1, 2), times)
    if ref_dofs.degree == 2:
        vals = p1_to_p2(build_dofmap(fine, 2), vals)
        coords = build_dofmap(fine, 2).node_coords
    else:
        coords = fine.vertices
    p = _match_nodes(coords, ref_dofs.node_coords)
    return vals[p].ravel()


def energy_error(sol_h: Solution, sol_ref: Solution) -> float:
    """``|||u_ref - u_h|||`` summed over both bodies, on the reference meshes."""
    if sol_h.system.method.k != 1:
        raise ConfigurationError("energy_error transfers P1 study fields only")
    total = 0.0
    for side in (1, 2):
        dofs_h = getattr(sol_h.system, f"dofs{side}")
        dofs_r = getattr(sol_ref.system, f"dofs{side}")
        A = sol_ref.system.blocks[f"A{side}"]
        e = getattr(sol_ref, f"u{side}") - transfer_to_reference(dofs_h.mesh, getattr(sol_h, f"u{side}"), dofs_r)
        total += float(e @ (A @ e))
    return float(np.sqrt(max(total, 0.0)))


def fit_rate(levels) -> float:
    """Least-squares slope of ``log(error)`` against ``log(h)``."""
    pts = [(float(h), float(e)) for h, e in levels]
    if len(pts) < 3:
        raise ConfigurationError("need at least three levels to fit a rate")
    if any(e == 0.0 for _, e in pts):
        raise ExactSolutionNotice("zero error at some level: the discrete solution is exact, rate undefined")
    if any(e < 0 or h <= 0 for h, e in pts):
        raise ConfigurationError("h and errors must be positive")
    h, e = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
    return float(np.polyfit(h, e, 1)[0])


def tangential_oscillation(space: MultiplierSpace, lam) -> float:
    """Fraction of adjacent sample pairs at which the tangential multiplier changes sign."""
    _, lt = normal_tangential(space, lam, space.sample_points()) if space.degree == 0 else (
        None, np.asarray(lam, dtype=float).reshape(-1, 2) @ space.trace.tangent)
    if len(lt) < 2:
        return 0.0
    return float(np.mean(lt[:-1] * lt[1:] < 0.0))


# --- reference ------------------------------------------------------------------


@lru_cache(maxsize=4)
def reference_solution(preset_name: str, sizes: tuple) -> Solution:
    """Stabilized P2-P1 solution for the given cell counts (cached per process)."""
    log.info("reference %s: %s on %s", preset_name, REFERENCE_METHOD, sizes)
    return solve_preset(get_preset(preset_name), get_method(REFERENCE_METHOD), tuple(sizes))


# --- study --------------------------------------------------------------------


@dataclass(frozen=True)
class StudyConfig:
    preset: str = "square-square"
    methods: tuple = ("stab-p1p0", "mixed-p1p0")
    levels: int = 5
    coarse_ny: int | None = None
    matching: bool | None = None
    ref_refinements: int = 2
    output: str | None = None
    compute_infsup: bool = True
    alpha: float | None = None

    def __post_init__(self):
        get_preset(self.preset)
        for m in self.methods:
            get_method(m)
        if self.levels < 3:
            raise ConfigurationError("a study needs at least 3 levels for a rate fit")
        if self.ref_refinements < 2:
            raise ConfigurationError("the reference must be at least 2 uniform refinements finer")
        if self.coarse_ny is not None and self.coarse_ny < 1:
            raise ConfigurationError("coarse_ny must be positive")
        if self.alpha is not None and not self.alpha > 0:
            raise ConfigurationError("alpha must be positive (stability needs 0 < alpha < C_I)")

    @property
    def is_matching(self) -> bool:
        if self.matching is not None:
            return self.matching
        # P1-P0 runs are the matching-mesh experiment, P1-P1 runs the nonmatching one
        return all(get_method(m).l == 0 for m in self.methods)


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    rates: dict = field(default_factory=dict)
    reference_dofs: int = 0

    def for_method(self, method: str) -> list:
        return [r for r in self.rows if r["method"] == method]

    def errors(self, method: str, key: str = "err_lambda") -> list:
        return [(r["h"], r[key]) for r in self.for_method(method)]


def _run_one(cfg: StudyConfig, preset: Preset, ref: Solution, name: str, level: int):
    sizes = preset.sizes(level, cfg.is_matching, cfg.coarse_ny)
    method = get_method(name)
    if cfg.alpha is not None and method.stabilized:
        method = with_alpha(method, cfg.alpha)
    try:
        sol = solve_preset(preset, method, sizes)
    except TieMortarError as exc:
        raise type(exc)(f"{name}, level {level}: {exc}") from exc
    space = sol.space
    beta = np.nan
    if cfg.compute_infsup:
        m1, m2 = preset.meshes(sizes)
        g1, g2 = preset.dirichlet()
        beta = infsup_mesh_norm(method.k, method.l, method.continuous, m1, m2, preset.material, g1, g2).value
    row = {
        "method": name,
        "level": level,
        "h": space.trace.h_max,
        "dofs": sol.system.shape[0],
        "err_lambda": multiplier_error(sol.lam, space, ref.lam, ref.space),
        "err_energy": energy_error(sol, ref),
        "uniformity": mesh_uniformity_ratio(space.trace),
        "beta_h": beta,
        "oscillation": tangential_oscillation(space, sol.lam),
        "alpha": sol.system.alpha,
    }
    log.info("%s level %d: h=%.4g err_lambda=%.4e err_energy=%.4e beta_h=%.4g uniformity=%.3g",
             name, level, row["h"], row["err_lambda"], row["err_energy"], beta, row["uniformity"])
    return row, sol


def run_study(cfg: StudyConfig) -> ConvergenceReport:
    preset = get_preset(cfg.preset)
    ref = reference_solution(cfg.preset, preset.sizes(cfg.levels - 1 + cfg.ref_refinements,
                                                       cfg.is_matching, cfg.coarse_ny))

    jobs = [(m, lv) for m in cfg.methods for lv in range(cfg.levels)]
    threads = max(1, int(os.getenv(THREADS_ENV, "1")))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(lambda j: _run_one(cfg, preset, ref, *j), jobs))
    else:
        results = [_run_one(cfg, preset, ref, *j) for j in jobs]

    report = ConvergenceReport([r for r, _ in results], reference_dofs=ref.system.shape[0])
    for m in cfg.methods:
        rates = {}
        for key in ("err_lambda", "err_energy"):
            pts = report.errors(m, key)[-RATE_WINDOW:]
            try:
                rates[key] = fit_rate(pts)
            except ExactSolutionNotice:
                rates[key] = float("nan")
        report.rates[m] = rates
        log.info("%s: multiplier rate %.3f, energy rate %.3f", m, rates["err_lambda"], rates["err_energy"])

    if cfg.output:
        write_artifacts(cfg, report, [(r, s) for r, s in results])
    return report


# --- artifacts --------------------------------------------------------------------

CONVERGENCE_COLUMNS = ("method", "level", "h", "dofs", "err_lambda", "err_energy", "uniformity", "beta_h")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _atomic_write(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def convergence_csv(report: ConvergenceReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CONVERGENCE_COLUMNS)
    for r in report.rows:
        writer.writerow([_fmt(r[c]) for c in CONVERGENCE_COLUMNS])
    return buf.getvalue()


def rates_csv(report: ConvergenceReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "quantity", "slope", "levels_used"])
    for m, rates in report.rates.items():
        for key, slope in rates.items():
            writer.writerow([m, key, _fmt(slope), min(RATE_WINDOW, len(report.for_method(m)))])
    return buf.getvalue()


def write_artifacts(cfg: StudyConfig, report: ConvergenceReport, results) -> None:
    out = cfg.output
    os.makedirs(out, exist_ok=True)
    _atomic_write(os.path.join(out, "convergence.csv"), convergence_csv(report))
    _atomic_write(os.path.join(out, "rates.csv"), rates_csv(report))
    for row, sol in results:
        write_multiplier_csv(os.path.join(out, f"lambda_profile_{row['method']}_{row['level']}.csv"),
                             sol.space, sol.lam)
    for key, label in (("err_lambda", r"$\|h^{1/2}(\lambda_h-\lambda_{ref})\|_{0,\Gamma}$"),
                       ("err_energy", r"$|||u_h-u_{ref}|||$")):
        plot_convergence(report, key, label, os.path.join(out, f"{key}.svg"))


def plot_convergence(report: ConvergenceReport, key: str, ylabel: str, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "tiemortar"
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    anchor = None
    for m in report.rates:
        pts = np.array(report.errors(m, key))
        ax.loglog(pts[:, 0], pts[:, 1], "o-", label=m)
        anchor = anchor or (pts[-1, 0], pts[-1, 1])
    if anchor is not None:
        hs = np.array([max(r["h"] for r in report.rows), anchor[0]])
        for slope, style in ((1.0, ":"), (1.5, "--"), (2.0, "-.")):
            ax.loglog(hs, anchor[1] * (hs / anchor[0]) ** slope, "k" + style, lw=0.8, label=f"O(h^{slope:g})")
    ax.set_xlabel("h")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    ax.grid(True, which="both", lw=0.3)
    fig.tight_layout()
    tmp = f"{path}.tmp"
    fig.savefig(tmp, format="svg", metadata={"Date": None})
    plt.close(fig)
    os.replace(tmp, path)
