"""Threshold dynamics for mean curvature flow.

Graph and grid backends for MBO-type schemes (MBO, Ruuth extrapolation,
two-kernel extrapolation, unconditionally stable M-stage), with the
consistency and stability theory for the M-stage coefficients.
"""
from .exceptions import (
    Blowup,
    DegenerateScheme,
    Extinct,
    InvalidGamma,
    NoBracket,
    OutOfDomain,
    ThresholdDynamicsError,
)
from .graph import GraphInterface, StageSet, evolve, scheme_advance, scheme_step, stage_value, threshold_level
from .grid import (
    IndicatorGrid,
    RealGrid,
    component_count,
    grid_convolve,
    grid_energy,
    grid_evolve,
    grid_scheme_step,
    grid_threshold,
)
from .oracles import evolve_pde, grim_reaper, mcf_rhs, shrinking_radius
from .quadrature import QuadratureRule, convolve_graph_at, gauss_hermite_rule
from .schemes import SCHEME_NAMES, DerivativeBundle, SchemeSpec, make_scheme
from .theory import (
    BetaVector,
    GammaMatrix,
    StabilityCertificate,
    beta_recursion,
    consistency_residuals,
    exact_gamma4,
    stability_certificate,
)

__version__ = "0.1.0"
