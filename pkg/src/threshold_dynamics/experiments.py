"""Batch experiments: convergence tables, energy traces, dumbbell, gamma report."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .graph import GraphInterface, evolve
from .grid import (
    IndicatorGrid,
    RealGrid,
    component_count,
    dumbbell,
    grid_energy,
    grid_scheme_advance,
    random_blobs,
    save_snapshot,
    write_energy_csv,
)
from .oracles import evolve_pde, grim_reaper
from .schemes import SchemeSpec, make_scheme
from .theory import (
    GammaMatrix,
    beta_recursion,
    consistency_residuals,
    exact_gamma4,
    stability_certificate,
)

log = logging.getLogger(__name__)

ENERGY_RTOL = 1e-10


@dataclass
class ConvergenceRow:
    num_steps: int
    error: float
    order: float | None = None


@dataclass
class ConvergenceReport:
    """Errors per step count with orders fitted from consecutive rows."""

    scheme: str
    problem: str
    backend: str
    resolution: int
    rows: list[ConvergenceRow] = field(default_factory=list)

    def add(self, num_steps: int, error: float) -> ConvergenceRow:
        order = None
        if self.rows:
            prev = self.rows[-1]
            if num_steps != 2 * prev.num_steps:
                raise ValueError("step counts must double from row to row")
            order = math.log2(prev.error / error) if error > 0 else math.inf
        row = ConvergenceRow(int(num_steps), float(error), order)
        self.rows.append(row)
        return row

    @property
    def steps(self) -> list[int]:
        return [r.num_steps for r in self.rows]

    @property
    def errors(self) -> list[float]:
        return [r.error for r in self.rows]

    @property
    def orders(self) -> list[float]:
        return [r.order for r in self.rows[1:]]

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["scheme", "problem", "backend", "resolution", "num_steps", "error", "order"])
        for r in self.rows:
            order = "" if r.order is None else f"{r.order:.6f}"
            writer.writerow(
                [self.scheme, self.problem, self.backend, self.resolution, r.num_steps, f"{r.error:.10e}", order]
            )
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text

    def table(self) -> str:
        lines = [f"{self.problem} / {self.scheme} ({self.backend}, resolution {self.resolution})"]
        lines.append(f"{'steps':>8} {'error':>14} {'order':>7}")
        for r in self.rows:
            order = "" if r.order is None else f"{r.order:7.3f}"
            lines.append(f"{r.num_steps:>8d} {r.error:>14.4e} {order:>7}")
        return "\n".join(lines)


def _check_steps(steps_list):
    steps = [int(s) for s in steps_list]
    if not steps or any(s < 1 for s in steps):
        raise ValueError("step counts must be positive")
    for a, b in zip(steps, steps[1:]):
        if b != 2 * a:
            raise ValueError("step counts must double from row to row")
    return steps


def l2_error(f: GraphInterface, g) -> float:
    """``sqrt(cell measure * sum (f - g)^2)`` over the tracked points."""
    heights = g.heights if isinstance(g, GraphInterface) else np.asarray(g)
    cell = float(np.prod(f.spacing))
    return math.sqrt(cell * float(np.sum((f.heights - heights) ** 2)))


def grim_reaper_initial(N: int) -> GraphInterface:
    return GraphInterface.from_function(lambda x: grim_reaper(x, 0.0), (0.0, math.pi), N, "even")


def run_grim_reaper(
    scheme: str | SchemeSpec,
    steps_list: Sequence[int],
    N: int = 4000,
    T: float = 1.0,
    method: str = "auto",
) -> ConvergenceReport:
    """Grim Reaper wave from ``arcsinh(cos x)`` on ``[0, pi]`` to ``T``."""
    if N < 100:
        raise ValueError("N must be at least 100")
    spec = make_scheme(scheme) if isinstance(scheme, str) else scheme
    steps = _check_steps(steps_list)
    f0 = grim_reaper_initial(N)
    exact = grim_reaper(f0.axes[0], T)
    report = ConvergenceReport(spec.name, "grim-reaper", f"graph-{method}", N)
    for n in steps:
        f = evolve(f0, spec, T / n, n, method=method)
        row = report.add(n, l2_error(f, exact))
        log.info("grim-reaper %s n=%d error=%.3e", spec.name, n, row.error)
    return report


def graph3d_initial(N: int) -> GraphInterface:
    def f(x, y):
        return np.cos(np.pi * y) * np.cos(np.pi * x) + 0.5 * np.cos(np.pi * y)

    return GraphInterface.from_function(f, ((-1.0, 1.0), (-1.0, 1.0)), (N, N), "periodic")


def graph3d_reference(N: int, T: float = 0.1, cfl: float = 0.1, extrapolate: bool = True) -> GraphInterface:
    """Finite-difference reference for the surface test on the scheme's lattice."""
    return evolve_pde(graph3d_initial(N), T, cfl=cfl, extrapolate=extrapolate)


def run_3d_test(
    scheme: str | SchemeSpec,
    steps_list: Sequence[int],
    N: int = 256,
    T: float = 0.1,
    method: str = "auto",
    reference: GraphInterface | None = None,
) -> ConvergenceReport:
    """Surface ``cos(pi y) cos(pi x) + cos(pi y) / 2`` on the periodic square to ``T``."""
    spec = make_scheme(scheme) if isinstance(scheme, str) else scheme
    steps = _check_steps(steps_list)
    f0 = graph3d_initial(N)
    if reference is None:
        reference = graph3d_reference(N, T)
    if reference.shape != f0.shape:
        raise ValueError("reference lattice must match the scheme lattice")
    report = ConvergenceReport(spec.name, "graph3d", f"graph-{method}", N)
    for n in steps:
        f = evolve(f0, spec, T / n, n, method=method)
        row = report.add(n, l2_error(f, reference))
        log.info("graph3d %s n=%d error=%.3e", spec.name, n, row.error)
    return report


@dataclass
class EnergyTrace:
    scheme: str
    rows: list[tuple[int, float, float]]
    tolerance: float = ENERGY_RTOL

    @property
    def energies(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])

    @property
    def max_increase(self) -> float:
        e = self.energies
        return float(np.max(np.diff(e))) if e.size > 1 else 0.0

    @property
    def monotone(self) -> bool:
        e = self.energies
        return bool(np.all(np.diff(e) <= self.tolerance * max(e[0], 0.0)))

    def to_csv(self, path_or_file):
        write_energy_csv(self.rows, path_or_file)


def energy_trace(sigma: IndicatorGrid, spec: SchemeSpec, dt: float, steps: int) -> EnergyTrace:
    """``E_tau`` after every step, with ``tau`` the scheme's own kernel width."""
    tau = spec.energy_width * dt
    state: RealGrid = sigma
    rows = [(0, 0.0, grid_energy(sigma, tau))]
    for k in range(1, steps + 1):
        state, sigma = grid_scheme_advance(state, spec, dt)
        rows.append((k, k * dt, grid_energy(sigma, tau)))
    return EnergyTrace(spec.name, rows)


def run_energy_trace(
    scheme: str | SchemeSpec,
    n: int = 256,
    dt: float = 1e-3,
    steps: int = 50,
    seed: int = 7,
    dim: int = 2,
    initial: IndicatorGrid | None = None,
) -> EnergyTrace:
    """Energy trace from a seeded random-blob set (or ``initial``)."""
    spec = make_scheme(scheme) if isinstance(scheme, str) else scheme
    sigma = initial if initial is not None else random_blobs(n, dim, seed)
    return energy_trace(sigma, spec, dt, steps)


@dataclass
class DumbbellResult:
    scheme: str
    counts: list[int]
    dt: float
    pinch_step: int | None
    snapshots: list[Path]

    @property
    def pinch_time(self) -> float | None:
        return None if self.pinch_step is None else self.pinch_step * self.dt


def first_split(counts: Sequence[int]) -> int | None:
    """First step index where the count moves from 1 to 2 or more."""
    for k in range(1, len(counts)):
        if counts[k - 1] == 1 and counts[k] >= 2:
            return k
    return None


def run_dumbbell(
    scheme: str | SchemeSpec,
    n: int = 128,
    dt: float = 2e-3,
    T: float = 0.03,
    initial: IndicatorGrid | None = None,
    outdir: str | Path | None = None,
    snapshot_every: int = 10,
) -> DumbbellResult:
    """Evolve a dumbbell, counting components after every step."""
    spec = make_scheme(scheme) if isinstance(scheme, str) else scheme
    sigma = initial if initial is not None else dumbbell(n)
    n_steps = int(round(T / dt))
    counts = [component_count(sigma)]
    snaps = []
    outdir = Path(outdir) if outdir is not None else None
    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
        save_snapshot(sigma, outdir / f"{spec.name}_{0:05d}.raw", 0.0, spec.name)
        snaps.append(outdir / f"{spec.name}_{0:05d}.raw")
    state: RealGrid = sigma
    for k in range(1, n_steps + 1):
        state, sigma = grid_scheme_advance(state, spec, dt)
        counts.append(component_count(sigma))
        if outdir is not None and (k % snapshot_every == 0 or k == n_steps):
            path = outdir / f"{spec.name}_{k:05d}.raw"
            save_snapshot(sigma, path, k * dt, spec.name)
            snaps.append(path)
        if counts[-1] == 0:
            log.info("dumbbell %s: extinct at step %d", spec.name, k)
            break
    return DumbbellResult(spec.name, counts, dt, first_split(counts), snaps)


@dataclass
class GammaReport:
    gamma: GammaMatrix
    beta: object
    residuals: tuple[float, float]
    certificate: object

    @property
    def passed(self) -> bool:
        r1, r2 = self.residuals
        return abs(r1) <= 1e-10 and abs(r2) <= 1e-10 and self.certificate.passed

    def text(self) -> str:
        M = self.gamma.M
        out = [f"M = {M}"]
        for name in ("beta1", "beta2", "beta3", "beta4", "beta5"):
            vals = np.asarray(getattr(self.beta, name), dtype=float)
            out.append(f"{name:<8}" + " ".join(f"{v:>22.15e}" for v in vals))
        r1, r2 = (float(r) for r in self.residuals)
        out.append(f"{'r1':<8}{r1:>22.15e}")
        out.append(f"{'r2':<8}{r2:>22.15e}")
        out.append("tilde gamma")
        tg = np.asarray(self.certificate.tilde_gamma, dtype=float)
        for m in range(M):
            out.append("        " + " ".join(f"{tg[m, i]:>22.15e}" for i in range(m + 1)))
        diag = np.asarray(self.certificate.diagonal, dtype=float)
        out.append(f"{'S diag':<8}" + " ".join(f"{v:>22.15e}" for v in diag))
        out.append(f"consistency {'pass' if abs(r1) <= 1e-10 and abs(r2) <= 1e-10 else 'fail'}")
        status = "pass" if self.certificate.passed else f"fail ({self.certificate.reason})"
        out.append(f"stability   {status}")
        return "\n".join(out)

    def to_csv(self, fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["quantity", "m", "value"])
        for name in ("beta1", "beta2", "beta3", "beta4", "beta5"):
            for m, v in enumerate(np.asarray(getattr(self.beta, name), dtype=float), start=1):
                writer.writerow([name, m, repr(float(v))])
        writer.writerow(["r1", "", repr(float(self.residuals[0]))])
        writer.writerow(["r2", "", repr(float(self.residuals[1]))])
        for m, v in enumerate(np.asarray(self.certificate.diagonal, dtype=float), start=1):
            writer.writerow(["S_diag", m, repr(float(v))])
        writer.writerow(["stable", "", int(self.certificate.passed)])


def verify_gamma(gamma: GammaMatrix | None = None) -> GammaReport:
    gamma = gamma or exact_gamma4()
    beta = beta_recursion(gamma)
    return GammaReport(gamma, beta, consistency_residuals(beta), stability_certificate(gamma))
