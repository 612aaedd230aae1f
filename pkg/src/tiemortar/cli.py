"""Command-line entry point.

Configuration comes from an optional ``key = value`` file (``#`` starts a
comment) and is overridden by command-line flags. Exit status is 0 on
success, 1 on invalid input and 2 when a solve or eigenvalue computation
fails.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .diagnostics import (check_projection_stability, estimate_trace_constant, extension_constant,
                          infsup_mesh_norm, write_report_csv)
from .errors import ConfigurationError, NumericalError, TieMortarError
from .interface import normal_tangential, write_multiplier_csv
from .mesh import extract_trace_mesh
from .saddle import METHODS, MethodSpec, build_system, get_method, solve, with_alpha, write_system
from .study import PRESETS, THREADS_ENV, StudyConfig, get_preset, run_study

log = logging.getLogger(__name__)

SUBCOMMANDS = ("solve", "study", "infsup", "constants", "dump-system")
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2
MULTIPLIER_KINDS = {
    "P0-discontinuous": (0, False),
    "P1-continuous": (1, True),
    "P1-discontinuous": (1, False),
}
PAIRS = {"p1p1": (1, 1, True), "p1p0": (1, 0, False)}


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _methods(text: str) -> tuple:
    names = tuple(m.strip() for m in text.split(",") if m.strip())
    if not names:
        raise ValueError("expected a comma-separated list of method names")
    return names


@dataclass
class CliConfig:
    """Validated settings for one invocation.

    ``preset`` is the only required key; every other field has a default.
    ``method`` names a base method, and ``degree``, ``multiplier`` and
    ``stabilized`` adjust it.
    """

    subcommand: str = "solve"
    preset: str | None = None
    method: str | None = None
    methods: tuple | None = None
    degree: int | None = None
    multiplier: str | None = None
    stabilized: bool | None = None
    alpha: float | None = None
    levels: int | None = None
    level: int = 0
    coarse_ny: int | None = None
    matching: bool | None = None
    pair: str = "p1p1"
    ref_refinements: int = 2
    output: str | None = None
    config_path: str | None = None
    source_lines: dict = field(default_factory=dict)

    def validate(self) -> CliConfig:
        def where(key):
            line = self.source_lines.get(key)
            return f" (line {line})" if line else ""

        if self.subcommand not in SUBCOMMANDS:
            raise ConfigurationError(f"unknown subcommand {self.subcommand!r}")
        if self.preset is None:
            raise ConfigurationError("missing required key 'preset' (set it in the config file or with --preset)")
        if self.preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {self.preset!r}{where('preset')}; choose from {sorted(PRESETS)}")
        if self.alpha is not None and not self.alpha > 0:
            raise ConfigurationError(
                f"alpha = {self.alpha:g}{where('alpha')}: the stabilization parameter must satisfy "
                "0 < alpha < C_I for the stabilized method to be stable")
        if self.multiplier is not None:
            if self.multiplier not in MULTIPLIER_KINDS:
                if self.multiplier == "P0-continuous":
                    raise ConfigurationError(
                        f"multiplier = P0-continuous{where('multiplier')}: a continuous multiplier "
                        "space needs degree l >= 1")
                raise ConfigurationError(f"unknown multiplier {self.multiplier!r}{where('multiplier')}; "
                                         f"choose from {sorted(MULTIPLIER_KINDS)}")
        if self.degree is not None and self.degree not in (1, 2):
            raise ConfigurationError(f"degree = {self.degree}{where('degree')}: must be 1 or 2")
        for key in ("method",):
            name = getattr(self, key)
            if name is not None and name not in METHODS:
                raise ConfigurationError(f"unknown method {name!r}{where(key)}; choose from {sorted(METHODS)}")
        for name in self.methods or ():
            if name not in METHODS:
                raise ConfigurationError(f"unknown method {name!r}{where('methods')}; choose from {sorted(METHODS)}")
        if self.levels is not None and self.levels < 1:
            raise ConfigurationError(f"levels = {self.levels}{where('levels')}: must be positive")
        if self.level < 0:
            raise ConfigurationError(f"level = {self.level}{where('level')}: must be non-negative")
        if self.coarse_ny is not None and self.coarse_ny < 1:
            raise ConfigurationError(f"coarse_ny = {self.coarse_ny}{where('coarse_ny')}: must be positive")
        if self.pair not in PAIRS:
            raise ConfigurationError(f"unknown pair {self.pair!r}{where('pair')}; choose from {sorted(PAIRS)}")
        self.method_spec()
        return self

    def method_spec(self) -> MethodSpec:
        base = get_method(self.method or "mixed-p1p1")
        changes = {}
        if self.degree is not None:
            changes["k"] = self.degree
        if self.multiplier is not None:
            changes["l"], changes["continuous"] = MULTIPLIER_KINDS[self.multiplier]
        if self.stabilized is not None:
            changes["stabilized"] = self.stabilized
        if changes:
            base = replace(base, name="", alpha=None, **changes)
        if self.alpha is not None:
            if not base.stabilized:
                raise ConfigurationError(f"alpha given but method {base.label} is not stabilized")
            base = with_alpha(base, self.alpha)
        return base


# key -> converter for the config file; CliConfig field names double as keys
_KEYS = {
    "preset": str,
    "method": str,
    "methods": _methods,
    "degree": int,
    "multiplier": str,
    "stabilized": _bool,
    "alpha": float,
    "levels": int,
    "level": int,
    "coarse_ny": int,
    "matching": _bool,
    "pair": str,
    "ref_refinements": int,
    "output": str,
}


def parse_config(text: str, subcommand: str = "solve") -> CliConfig:
    """Parse ``key = value`` lines into an unvalidated :class:`CliConfig`.

    Raises
    ------
    ConfigurationError
        On malformed lines, unknown or repeated keys and values of the wrong
        type. The message carries the line number.
    """
    cfg = CliConfig(subcommand=subcommand)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if key not in _KEYS:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}; known keys are {sorted(_KEYS)}")
        if key in cfg.source_lines:
            raise ConfigurationError(f"line {lineno}: key {key!r} already set on line {cfg.source_lines[key]}")
        if not value:
            raise ConfigurationError(f"line {lineno}: key {key!r} has no value")
        try:
            setattr(cfg, key, _KEYS[key](value))
        except ValueError as exc:
            raise ConfigurationError(f"line {lineno}: bad value for {key!r}: {exc}") from None
        cfg.source_lines[key] = lineno
    return cfg


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, so usage errors map to exit 1."""

    def error(self, message):
        raise ConfigurationError(message)


class _RejectSeed(argparse.Action):
    def __call__(self, parser, namespace, values, option_string=None):
        raise ConfigurationError("--seed is not accepted: every computation is deterministic")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tiemortar", description=__doc__.split("\n\n")[0],
                     formatter_class=argparse.RawDescriptionHelpFormatter,
                     epilog=f"Presets: {', '.join(sorted(PRESETS))}. Methods: {', '.join(sorted(METHODS))}.\n"
                            f"Set {THREADS_ENV}=N to run study levels on N threads (default 1).")
    sub = parser.add_subparsers(dest="subcommand", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    sub.required = True
    helps = {
        "solve": "solve one problem and print multiplier statistics",
        "study": "convergence study against a fine reference (default methods stab-p1p0,mixed-p1p0)",
        "infsup": "discrete inf-sup constant per level",
        "constants": "trace, extension and projection constants per level",
        "dump-system": "write the reduced saddle-point matrix and right-hand side",
    }
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=helps[name], description=helps[name])
        p.add_argument("--config", help="key = value file; flags override its entries")
        p.add_argument("--out", dest="output", help="artifact directory")
        p.add_argument("--preset", choices=sorted(PRESETS), help="problem geometry (required)")
        p.add_argument("--method", help="method name (default mixed-p1p1)")
        p.add_argument("--methods", type=_methods, help="comma-separated method list for study")
        p.add_argument("--degree", type=int, help="displacement degree k (1 or 2)")
        p.add_argument("--multiplier", help=f"multiplier space, one of {', '.join(MULTIPLIER_KINDS)}")
        p.add_argument("--stabilized", type=_bool, help="true or false")
        p.add_argument("--alpha", type=float, help="stabilization parameter (default C_I/10)")
        p.add_argument("--levels", type=int, help="number of refinement levels (study 5, infsup/constants 4)")
        p.add_argument("--level", type=int, help="refinement level for solve and dump-system (default 0)")
        p.add_argument("--coarse-ny", dest="coarse_ny", type=int, help="cells across the coarsest side-1 mesh")
        p.add_argument("--pair", choices=sorted(PAIRS), help="element pair for infsup (default p1p1)")
        g = p.add_mutually_exclusive_group()
        g.add_argument("--matching", dest="matching", action="store_const", const=True)
        g.add_argument("--nonmatching", dest="matching", action="store_const", const=False)
        p.add_argument("--seed", action=_RejectSeed, help=argparse.SUPPRESS)
    return parser


def load_config(argv) -> CliConfig:
    args = build_parser().parse_args(argv)
    cfg = CliConfig(subcommand=args.subcommand)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except (OSError, UnicodeDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from None
        try:
            cfg = parse_config(text, args.subcommand)
        except ConfigurationError as exc:
            raise ConfigurationError(f"{args.config}: {exc}") from None
        cfg.config_path = args.config
    for f in fields(CliConfig):
        value = getattr(args, f.name, None)
        if value is not None and f.name != "subcommand":
            setattr(cfg, f.name, value)
            cfg.source_lines.pop(f.name, None)
    return cfg.validate()


def _threads() -> int:
    raw = os.getenv(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV}={raw!r} is not an integer") from None
    if n < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be at least 1")
    return n


def _matching(cfg: CliConfig, preset) -> bool:
    return preset.default_matching if cfg.matching is None else cfg.matching


def _build(cfg: CliConfig):
    preset = get_preset(cfg.preset)
    sizes = preset.sizes(cfg.level, _matching(cfg, preset), cfg.coarse_ny)
    m1, m2 = preset.meshes(sizes)
    g1, g2 = preset.dirichlet()
    return build_system(cfg.method_spec(), m1, m2, preset.material, g1, g2)


def _write_table(path: str, header, rows) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    os.replace(tmp, path)


def cmd_solve(cfg: CliConfig, out) -> None:
    sol = solve(_build(cfg))
    space = sol.space
    lam_n, lam_t = normal_tangential(space, sol.lam, space.sample_points())
    print(f"method {sol.system.method.label}, {sol.system.shape[0]} unknowns, residual {sol.residual:.3e}", file=out)
    if sol.system.method.stabilized:
        print(f"alpha {sol.system.alpha:.6e}", file=out)
    print(f"lambda_n: min {lam_n.min():.10e} max {lam_n.max():.10e} mean {lam_n.mean():.10e}", file=out)
    print(f"lambda_t: max abs {np.abs(lam_t).max():.3e}", file=out)
    ratio = np.abs(lam_t).max() / max(np.abs(lam_n).max(), np.finfo(float).tiny)
    print(f"max |lambda_t| / max |lambda_n| = {ratio:.3e}", file=out)
    if cfg.output:
        os.makedirs(cfg.output, exist_ok=True)
        write_multiplier_csv(os.path.join(cfg.output, "lambda.csv"), space, sol.lam)


def cmd_study(cfg: CliConfig, out) -> None:
    _threads()
    study = StudyConfig(
        preset=cfg.preset,
        methods=cfg.methods or ((cfg.method,) if cfg.method else StudyConfig.methods),
        levels=5 if cfg.levels is None else cfg.levels,
        coarse_ny=cfg.coarse_ny,
        matching=cfg.matching,
        ref_refinements=cfg.ref_refinements,
        output=cfg.output or "study-output",
        alpha=cfg.alpha,
    )
    report = run_study(study)
    print(f"reference: {report.reference_dofs} unknowns", file=out)
    print(f"{'method':<12} {'level':>5} {'h':>10} {'err_lambda':>12} {'err_energy':>12} {'beta_h':>10}", file=out)
    for r in report.rows:
        print(f"{r['method']:<12} {r['level']:>5d} {r['h']:>10.4g} {r['err_lambda']:>12.4e} "
              f"{r['err_energy']:>12.4e} {r['beta_h']:>10.4g}", file=out)
    for m, rates in report.rates.items():
        print(f"{m}: multiplier slope {rates['err_lambda']:.3f}, energy slope {rates['err_energy']:.3f}", file=out)
    print(f"artifacts in {study.output}", file=out)


def cmd_infsup(cfg: CliConfig, out) -> None:
    preset = get_preset(cfg.preset)
    k, l, cont = PAIRS[cfg.pair]  # noqa: E741
    matching = True if cfg.matching is None else cfg.matching
    g1, g2 = preset.dirichlet()
    rows = []
    print(f"{'level':>5} {'h':>10} {'beta_h':>12}", file=out)
    for level in range(4 if cfg.levels is None else cfg.levels):
        m1, m2 = preset.meshes(preset.sizes(level, matching, cfg.coarse_ny))
        rep = infsup_mesh_norm(k, l, cont, m1, m2, preset.material, g1, g2)
        h = extract_trace_mesh(m1).h_max
        rows.append(rep.at(level, h))
        print(f"{level:>5d} {h:>10.4g} {rep.value:>12.6e}", file=out)
    if cfg.output:
        os.makedirs(cfg.output, exist_ok=True)
        write_report_csv(rows, os.path.join(cfg.output, f"infsup_{cfg.pair}.csv"))


def cmd_constants(cfg: CliConfig, out) -> None:
    preset = get_preset(cfg.preset)
    g1, _ = preset.dirichlet()
    degree = cfg.method_spec().k
    reports = []
    print(f"{'level':>5} {'h':>10} {'C_I':>12} {'C_E':>10} {'C_proj':>8}", file=out)
    for level in range(4 if cfg.levels is None else cfg.levels):
        m1, _ = preset.meshes(preset.sizes(level, _matching(cfg, preset), cfg.coarse_ny))
        trace = extract_trace_mesh(m1)
        level_reports = [estimate_trace_constant(m1, preset.material, degree, g1),
                         extension_constant(m1), check_projection_stability(trace)]
        reports += [r.at(level, trace.h_max) for r in level_reports]
        ci, ce, cp = (r.value for r in level_reports)
        print(f"{level:>5d} {trace.h_max:>10.4g} {ci:>12.6e} {ce:>10.4f} {cp:>8.4f}", file=out)
    if cfg.output:
        os.makedirs(cfg.output, exist_ok=True)
        write_report_csv(reports, os.path.join(cfg.output, "constants.csv"))


def cmd_dump_system(cfg: CliConfig, out) -> None:
    system = _build(cfg)
    mpath, rpath = write_system(system, cfg.output or "system")
    print(f"{system.shape[0]} unknowns ({system.n1} + {system.n2} displacement, {system.n_mult} multiplier)",
          file=out)
    print(f"wrote {mpath} and {rpath}", file=out)


COMMANDS = {
    "solve": cmd_solve,
    "study": cmd_study,
    "infsup": cmd_infsup,
    "constants": cmd_constants,
    "dump-system": cmd_dump_system,
}


def main(argv=None, out=None) -> int:
    """Run the CLI and return the exit status."""
    out = sys.stdout if out is None else out
    if argv is None:
        argv = sys.argv[1:]
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(argv)
        COMMANDS[cfg.subcommand](cfg, out)
    except NumericalError as exc:
        print(f"tiemortar: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (TieMortarError, ValueError) as exc:
        print(f"tiemortar: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
