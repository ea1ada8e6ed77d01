"""Declarative threshold schemes and closed-form one-step predictors.

A scheme is a list of stages. Each stage convolves a linear combination of
earlier stage sets (index 0 is the step's input) with Gaussians of width
``multiplier * dt`` and thresholds the result at ``level``. Backends in
:mod:`threshold_dynamics.graph` and :mod:`threshold_dynamics.grid` execute
the same :class:`SchemeSpec`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .theory import GammaMatrix, beta_recursion, exact_gamma4

SQRT2 = math.sqrt(2.0)

SCHEME_NAMES = ("mbo", "ruuth", "twokernel", "mstage4")


@dataclass(frozen=True)
class Term:
    source: int
    coefficient: float
    width: float  # kernel width as a multiple of dt

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"kernel width multiplier must be positive, got {self.width}")
        if self.source < 0:
            raise ValueError("term source index must be non-negative")


@dataclass(frozen=True)
class StageDef:
    terms: tuple[Term, ...]
    level: float = 0.5


@dataclass(frozen=True)
class SchemeSpec:
    """A multi-stage threshold scheme.

    ``output`` lists ``(stage index, coefficient)`` pairs forming the next
    step's input. It is ``((M, 1.0),)`` for every binary scheme; Ruuth's
    extrapolation carries the non-binary ``2 * 1_{S2} - 1_{S3}`` instead.
    ``report`` is the stage whose set is the interface at the end of a step.
    """

    name: str
    stages: tuple[StageDef, ...]
    output: tuple[tuple[int, float], ...] = ()
    report: int = -1
    threshold_policy: str = "1/2"

    def __post_init__(self):
        if not self.stages:
            raise ValueError("a scheme needs at least one stage")
        for m, stage in enumerate(self.stages, start=1):
            if not stage.terms:
                raise ValueError(f"stage {m} has no terms")
            for term in stage.terms:
                if term.source >= m:
                    raise ValueError(
                        f"stage {m} references stage {term.source}; only earlier stages allowed"
                    )
        M = len(self.stages)
        if not self.output:
            object.__setattr__(self, "output", ((M, 1.0),))
        if self.report == -1:
            object.__setattr__(self, "report", M)
        for idx, _ in self.output:
            if not 1 <= idx <= M:
                raise ValueError(f"output references unknown stage {idx}")
        if not 1 <= self.report <= M:
            raise ValueError(f"report stage {self.report} out of range")

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    @property
    def is_binary(self) -> bool:
        return self.output == ((self.n_stages, 1.0),)

    def widths(self) -> tuple[float, ...]:
        return tuple(sorted({t.width for s in self.stages for t in s.terms}))

    @property
    def energy_width(self) -> float:
        """Kernel width multiplier of the scheme's Lyapunov energy.

        Single-width schemes use their own kernel; mixed-width ones fall back
        to ``dt``.
        """
        widths = self.widths()
        return widths[0] if len(widths) == 1 else 1.0


def mbo() -> SchemeSpec:
    return SchemeSpec("mbo", (StageDef((Term(0, 1.0, 1.0),)),))


def ruuth() -> SchemeSpec:
    return SchemeSpec(
        "ruuth",
        (
            StageDef((Term(0, 1.0, 0.5),)),
            StageDef((Term(1, 1.0, 0.5),)),
            StageDef((Term(0, 1.0, 1.0),)),
        ),
        output=((2, 2.0), (3, -1.0)),
        report=2,
    )


def twokernel() -> SchemeSpec:
    # unnormalized second stage: sqrt2*G_{dt/2}*1_S1 - G_dt*1_S0 >= (sqrt2 - 1)/2
    return SchemeSpec(
        "twokernel",
        (
            StageDef((Term(0, 1.0, 0.5),)),
            StageDef((Term(1, SQRT2, 0.5), Term(0, -1.0, 1.0)), level=(SQRT2 - 1.0) / 2.0),
        ),
        threshold_policy="1/2, (sqrt2-1)/2",
    )


def mstage(gamma: GammaMatrix, name: str | None = None) -> SchemeSpec:
    """Same-kernel M-stage scheme with ``tau = dt / beta_1M``."""
    if not isinstance(gamma, GammaMatrix):
        gamma = GammaMatrix.from_array(gamma)
    beta1 = float(beta_recursion(gamma).beta1[-1])
    if beta1 <= 0:
        raise ValueError(f"beta_1M = {beta1} must be positive to rescale time")
    width = 1.0 / beta1
    stages = tuple(
        StageDef(tuple(Term(i, float(g), width) for i, g in enumerate(row)))
        for row in gamma.rows
    )
    return SchemeSpec(name or f"mstage{gamma.M}", stages)


def make_scheme(name: str, gamma: GammaMatrix | None = None) -> SchemeSpec:
    """Build a scheme by CLI name (``mbo``, ``ruuth``, ``twokernel``, ``mstage4``).

    ``name="mstage"`` with an explicit ``gamma`` builds a custom M-stage scheme.
    """
    key = name.lower()
    if key == "mbo":
        return mbo()
    if key == "ruuth":
        return ruuth()
    if key == "twokernel":
        return twokernel()
    if key == "mstage4":
        return mstage(exact_gamma4(), name="mstage4")
    if key == "mstage":
        if gamma is None:
            raise ValueError("mstage needs a gamma matrix")
        return mstage(gamma)
    raise ValueError(f"unknown scheme {name!r}; choose from {', '.join(SCHEME_NAMES)}")


@dataclass(frozen=True)
class DerivativeBundle:
    """Graph derivatives at the origin in the gauge ``f = f_x = f_y = 0``."""

    f_xx: float = 0.0
    f_yy: float = 0.0
    f_xy: float = 0.0
    f_xxxx: float = 0.0
    f_xxyy: float = 0.0
    f_yyyy: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_tuple())):
            raise ValueError("derivative bundle must be finite")

    def as_tuple(self):
        return (self.f_xx, self.f_yy, self.f_xy, self.f_xxxx, self.f_xxyy, self.f_yyyy)

    def _fourth(self):
        return 0.5 * (self.f_xxxx + 2.0 * self.f_xxyy + self.f_yyyy)

    def _cubic(self):
        a, b, c = self.f_xx, self.f_yy, self.f_xy
        return a**3 + 3.0 * a * c**2 + 3.0 * b * c**2 + b**3


def _displacement(d: DerivativeBundle, t, cubic_coef):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    return t * (d.f_xx + d.f_yy) + t**2 * (d._fourth() - cubic_coef * d._cubic())


def predict_mcf_displacement(d: DerivativeBundle, t):
    """Apex displacement under exact mean curvature flow, through O(t^2)."""
    return _displacement(d, t, 1.0)


def predict_mbo_displacement(d: DerivativeBundle, t):
    """Apex displacement after one MBO step of width ``t``, through O(t^2).

    Differs from the exact flow by ``t^2 / 3`` times the cubic curvature term.
    In 2D pass a bundle with all ``y`` derivatives zero.
    """
    return _displacement(d, t, 2.0 / 3.0)


def predict_twokernel_displacement(d: DerivativeBundle, t):
    """Apex displacement after one two-kernel step: matches the exact flow."""
    return _displacement(d, t, 1.0)
