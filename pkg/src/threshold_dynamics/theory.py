"""Consistency and stability theory for multistage threshold schemes.

Each stage of an ``M``-stage scheme thresholds ``G_tau * sum_i gamma[m, i] 1_{S_i}``
at one half. Two facts decide whether a coefficient matrix is useful:

* the beta recursion tracks how far every stage moves a 2D graph and how its
  curvature changes; the endpoint ratios decide second-order consistency;
* a backward substitution over the coefficients yields diagonal partial sums
  whose positivity certifies unconditional energy stability.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _gamma_constants
from .exceptions import DegenerateScheme, InvalidGamma

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class GammaMatrix:
    """Lower-triangular stage coefficients.

    ``rows[m - 1]`` holds ``gamma[m, 0..m-1]`` for stage ``m = 1..M``.
    """

    rows: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        # entries keep their numeric type so Fraction input stays exact
        rows = tuple(tuple(row) for row in self.rows)
        if not rows:
            raise InvalidGamma("gamma matrix needs at least one stage", row=0)
        for m, row in enumerate(rows, start=1):
            if len(row) != m:
                raise InvalidGamma(
                    f"stage {m} must have {m} coefficients, got {len(row)}", row=m
                )
            values = np.array([float(v) for v in row])
            if not np.all(np.isfinite(values)):
                raise InvalidGamma(f"stage {m} has non-finite coefficients", row=m)
            if abs(float(sum(row)) - 1.0) > ROW_SUM_TOL:
                raise InvalidGamma(
                    f"stage {m} coefficients sum to {float(sum(row))!r}, expected 1", row=m
                )
        object.__setattr__(self, "rows", rows)

    @property
    def M(self) -> int:
        return len(self.rows)

    def __getitem__(self, key):
        m, i = key
        return self.rows[m - 1][i]

    def to_array(self) -> np.ndarray:
        """Dense ``(M, M)`` array with ``out[m-1, i] = gamma[m, i]``."""
        out = np.zeros((self.M, self.M))
        for m, row in enumerate(self.rows):
            out[m, : m + 1] = [float(v) for v in row]
        return out

    @classmethod
    def from_array(cls, array) -> "GammaMatrix":
        a = np.asarray(array, dtype=float)
        return cls(tuple(tuple(a[m, : m + 1]) for m in range(a.shape[0])))


@dataclass(frozen=True)
class BetaVector:
    """Coefficients ``beta_k[m]`` for ``k = 1..5`` and ``m = 0..M``."""

    beta1: np.ndarray
    beta2: np.ndarray
    beta3: np.ndarray
    beta4: np.ndarray
    beta5: np.ndarray

    @property
    def M(self) -> int:
        return len(self.beta1) - 1

    def as_array(self) -> np.ndarray:
        return np.vstack([self.beta1, self.beta2, self.beta3, self.beta4, self.beta5])


def beta_recursion(gamma: GammaMatrix) -> BetaVector:
    """Run the stage-by-stage beta recursion for a 2D graph.

    Stage ``m`` moves the graph's apex by ``t b1 f_xx + t^2 (b2 f_xxxx - b3 f_xx^3)``
    and changes its curvature to ``f_xx + t (b4 f_xxxx - b5 f_xx^3)``.
    Plain Python arithmetic: ``Fraction`` coefficients give exact betas.
    """
    zero = gamma.rows[0][0] * 0
    b1, b2, b3, b4, b5 = ([zero] for _ in range(5))

    def dot(g, seq, power=1):
        return sum((gi * si**power for gi, si in zip(g, seq)), zero)

    for row in gamma.rows:
        s1 = dot(row, b1)
        s1_sq = dot(row, b1, 2)
        s1_cu = dot(row, b1, 3)
        b1.append(1 + s1)
        b2.append(_half(zero) + dot(row, b2) + dot(row, b4))
        b3.append(
            2 * _third(zero)
            + s1**3 * _third(zero) / 2
            - s1 * s1_sq / 4
            + s1_cu * _third(zero) / 4
            + dot(row, b3)
            + dot(row, b5)
        )
        b4.append(1 + dot(row, b4))
        b5.append(2 + dot(row, b5))
    return BetaVector(*(np.array(b) for b in (b1, b2, b3, b4, b5)))


def _half(zero):
    return (zero + 1) / 2


def _third(zero):
    return (zero + 1) / 3


def consistency_residuals(beta: BetaVector) -> tuple[float, float]:
    """Return ``(b2/b1^2 - 1/2, b3/b1^2 - 1)`` at the final stage.

    Both vanish exactly when the scheme, run with ``tau = dt / b1``, is
    second-order consistent with curve shortening in 2D.
    """
    b1 = beta.beta1[-1]
    if b1 == 0:
        raise DegenerateScheme("beta_1 of the final stage is zero; tau = dt / beta_1 undefined")
    b1_sq = b1 * b1
    return beta.beta2[-1] / b1_sq - _half(b1 * 0), beta.beta3[-1] / b1_sq - 1


@dataclass(frozen=True)
class StabilityCertificate:
    tilde_gamma: np.ndarray
    S: np.ndarray
    diagonal: np.ndarray
    passed: bool
    reason: str = field(default="")


def stability_certificate(gamma: GammaMatrix) -> StabilityCertificate:
    """Backward substitution test for unconditional energy stability.

    ``tilde[m, i] = gamma[m, i] - sum_{j > m} tilde[j, i] S[j, m] / S[j, j]``
    with ``S[j, m] = sum_{i < m} tilde[j, i]``, computed from ``m = M`` down.
    The scheme is energy stable if every ``S[m, m]`` is positive.

    Arrays are indexed ``[m, i]`` with row 0 unused, so ``S[m, m]`` reads as
    written above.
    """
    M = gamma.M
    g = np.zeros((M + 1, M))
    g[1:] = gamma.to_array()
    tilde = np.zeros_like(g)
    S = np.zeros((M + 1, M + 1))
    reason = ""
    for m in range(M, 0, -1):
        row = g[m].copy()
        for j in range(m + 1, M + 1):
            if S[j, j] == 0.0:
                reason = f"S[{j},{j}] = 0; certificate indeterminate"
                break
            row[:m] -= tilde[j, :m] * S[j, m] / S[j, j]
        if reason:
            break
        tilde[m, :m] = row[:m]
        S[m, 1 : M + 1] = np.cumsum(tilde[m])[:M]
    diagonal = np.array([S[m, m] for m in range(1, M + 1)])
    passed = not reason and bool(np.all(diagonal > 0))
    if not passed and not reason:
        bad = [m for m in range(1, M + 1) if not S[m, m] > 0]
        reason = "non-positive diagonal at stage(s) " + ", ".join(map(str, bad))
    return StabilityCertificate(tilde[1:], S[1:, 1:], diagonal, passed, reason)


def exact_gamma4() -> GammaMatrix:
    """The 4-stage coefficients that are both second order (2D) and stable."""
    return GammaMatrix(
        (
            (1.0,),
            (-0.25, 1.25),
            (5.0 / 6.0, -2.0 / 3.0, 5.0 / 6.0),
            (
                float(_gamma_constants.GAMMA_40),
                0.5,
                float(_gamma_constants.GAMMA_42),
                float(_gamma_constants.GAMMA_43),
            ),
        )
    )
