"""Elliptic and parabolic equations on self-similar resistance spaces.

Finite-level discretizations of p.c.f. self-similar sets (interval,
Sierpinski gasket, Vicsek set and user-defined gluings), with non-symmetric
drift terms, a priori constants checked at run time, identification
operators between levels, metric-graph approximations and convergence
experiments.
"""

from .cells import (
    PRESET_NAMES,
    LevelTable,
    SelfSimilarStructure,
    build_vertices,
    cells_at_level,
    preset_structure,
)
from .exceptions import (
    BoundViolationError,
    ConvergenceError,
    HardyLevelError,
    InfeasibleCoefficientsError,
    StructureError,
)
from .experiments import (
    ConvergenceTable,
    ExperimentSpec,
    diagnose,
    run_diagonal,
    run_single_space,
    run_varying_space,
)
from .fields import (
    LevelFunction,
    SymbolicField,
    VectorField,
    act,
    gradient,
    hardy_bound,
    inner,
    realize,
)
from .forms import AssembledForm, Diagnostics, FormCoefficients, assemble
from .harmonic import (
    GraphForm,
    HarmonicStructure,
    assemble_form,
    harmonic_extension,
    preset_harmonic_structure,
    resistance,
    trace_form,
)
from .identification import IdentificationOperator, ks_strong_error
from .measures import SelfSimilarMeasure, harmonic_integrator, vertex_measure
from .metric_graph import MetricGraph, assemble_metric, build_metric_graph
from .solvers import green_apply, resolvent_apply, solve_elliptic, solve_parabolic

__version__ = "0.1.0"

__all__ = [
    "PRESET_NAMES",
    "AssembledForm",
    "BoundViolationError",
    "ConvergenceError",
    "ConvergenceTable",
    "Diagnostics",
    "ExperimentSpec",
    "FormCoefficients",
    "GraphForm",
    "HardyLevelError",
    "HarmonicStructure",
    "IdentificationOperator",
    "InfeasibleCoefficientsError",
    "LevelFunction",
    "LevelTable",
    "MetricGraph",
    "SelfSimilarMeasure",
    "SelfSimilarStructure",
    "StructureError",
    "SymbolicField",
    "VectorField",
    "act",
    "assemble",
    "assemble_form",
    "assemble_metric",
    "build_metric_graph",
    "build_vertices",
    "cells_at_level",
    "diagnose",
    "gradient",
    "green_apply",
    "hardy_bound",
    "harmonic_extension",
    "harmonic_integrator",
    "inner",
    "ks_strong_error",
    "preset_harmonic_structure",
    "preset_structure",
    "realize",
    "resistance",
    "resolvent_apply",
    "run_diagonal",
    "run_single_space",
    "run_varying_space",
    "solve_elliptic",
    "solve_parabolic",
    "trace_form",
    "vertex_measure",
]
