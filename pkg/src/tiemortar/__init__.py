"""Mixed and residual-stabilized Lagrange-multiplier coupling of two elastic bodies.

Typical use::

    from tiemortar import get_preset, get_method, solve_preset

    preset = get_preset("square-square")
    sol = solve_preset(preset, get_method("stab-p1p1"), preset.sizes(2, matching=False))
"""

from ._kernels import BACKEND
from .errors import (ConfigurationError, EmptyInterfaceError, ExactSolutionNotice, GeometryError, IllPosedError,
                     NumericalError, SingularSystemError, TieMortarError)
from .fem import ElasticMaterial, assemble_elasticity, build_dofmap, stress
from .interface import MultiplierSpace, assemble_coupling, assemble_stabilization, l2_project, merge_partitions
from .mesh import Mesh2D, Tag, TraceMesh, build_rect_mesh, extract_trace_mesh, read_mesh, refine_uniform, write_mesh
from .saddle import METHODS, MethodSpec, SaddleSystem, Solution, build_system, get_method, solve
from .study import PRESETS, StudyConfig, fit_rate, get_preset, run_study, solve_preset

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigurationError",
    "ElasticMaterial",
    "EmptyInterfaceError",
    "ExactSolutionNotice",
    "GeometryError",
    "IllPosedError",
    "METHODS",
    "Mesh2D",
    "MethodSpec",
    "MultiplierSpace",
    "NumericalError",
    "PRESETS",
    "SaddleSystem",
    "SingularSystemError",
    "Solution",
    "StudyConfig",
    "Tag",
    "TieMortarError",
    "TraceMesh",
    "assemble_coupling",
    "assemble_elasticity",
    "assemble_stabilization",
    "build_dofmap",
    "build_rect_mesh",
    "build_system",
    "extract_trace_mesh",
    "fit_rate",
    "get_method",
    "get_preset",
    "l2_project",
    "merge_partitions",
    "read_mesh",
    "refine_uniform",
    "run_study",
    "solve",
    "solve_preset",
    "stress",
    "write_mesh",
]
