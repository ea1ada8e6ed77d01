"""Threshold dynamics for interfaces that are graphs of functions.

The set ``S = {(x, z): z <= f(x)}`` is tracked through its heights on a fixed
lattice of base points. Every stage of a scheme finds, at each base point, the
height where the stage's convolved combination equals the threshold level.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage
from scipy.special import erf

from .exceptions import NoBracket, OutOfDomain
from .quadrature import (
    LevelTable,
    QuadratureRule,
    check_width,
    convolve_graph_at,
    gauss_hermite_rule,
)
from .schemes import SchemeSpec

BOUNDARY_RULES = ("even", "periodic")
_SPLINE_MODE = {"even": "mirror", "periodic": "grid-wrap"}

ROOT_TOL = 1e-13
BRACKET_HALFWIDTH = 8.0  # in units of sqrt(t)
METHODS = ("auto", "quadrature", "lattice")


@dataclass(frozen=True, eq=False)
class GraphInterface:
    """Heights of a graph on a uniform lattice over a box.

    Parameters
    ----------
    heights : ndarray
        Shape ``(N,)`` for curves in the plane or ``(Nx, Ny)`` for surfaces.
    extents : sequence of (lo, hi)
        Box per lattice axis.
    boundary : {"even", "periodic"}
        ``even`` mirrors about both ends (homogeneous Neumann); its lattice
        includes both endpoints. ``periodic`` wraps with period ``hi - lo``
        and excludes ``hi``.
    """

    heights: np.ndarray
    extents: tuple[tuple[float, float], ...]
    boundary: str = "even"

    def __post_init__(self):
        h = np.array(self.heights, dtype=float)
        if h.ndim not in (1, 2):
            raise ValueError("heights must be a 1D or 2D lattice")
        ext = tuple((float(a), float(b)) for a, b in _as_pairs(self.extents, h.ndim))
        if len(ext) != h.ndim:
            raise ValueError(f"need {h.ndim} extents, got {len(ext)}")
        if self.boundary not in BOUNDARY_RULES:
            raise ValueError(f"boundary must be one of {BOUNDARY_RULES}")
        if min(h.shape) < 4:
            raise ValueError("need at least 4 lattice points per axis for the spline")
        if not np.all(np.isfinite(h)):
            raise ValueError("heights must be finite")
        for a, b in ext:
            if not b > a:
                raise ValueError("extents must be increasing")
        h.setflags(write=False)
        object.__setattr__(self, "heights", h)
        object.__setattr__(self, "extents", ext)

    @classmethod
    def from_function(cls, func, extents, shape, boundary="even") -> "GraphInterface":
        """Sample ``func`` on the lattice implied by ``extents`` and ``boundary``."""
        if np.isscalar(shape):
            single = len(extents) == 2 and np.isscalar(tuple(extents)[0])
            shape = (int(shape),) * (1 if single else len(extents))
        shape = tuple(shape)
        axes = _axes(_as_pairs(extents, len(shape)), shape, boundary)
        if len(axes) == 1:
            heights = func(axes[0])
        else:
            heights = func(*np.meshgrid(*axes, indexing="ij"))
        heights = np.broadcast_to(np.asarray(heights, dtype=float), shape)
        return cls(heights, extents, boundary)

    @property
    def ndim(self) -> int:
        return self.heights.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.heights.shape

    @property
    def size(self) -> int:
        return self.heights.size

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        n_cells = [n - 1 if self.boundary == "even" else n for n in self.shape]
        return tuple((b - a) / m for (a, b), m in zip(self.extents, n_cells))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return _axes(self.extents, self.shape, self.boundary)

    @cached_property
    def points(self) -> np.ndarray:
        """Base points in lattice (C) order: ``(N,)`` or ``(N, 2)``."""
        if self.ndim == 1:
            return self.axes[0]
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    @cached_property
    def _coefficients(self) -> np.ndarray:
        return ndimage.spline_filter(self.heights, order=3, mode=_SPLINE_MODE[self.boundary])

    def interpolate(self, x):
        """Cubic-spline value at ``x`` honoring the boundary rule.

        ``x`` has shape ``(...)`` for curves or ``(..., 2)`` for surfaces.
        """
        x = np.asarray(x, dtype=float)
        if self.ndim == 1:
            coords = [(x - self.extents[0][0]) / self.spacing[0]]
            out_shape = x.shape
        else:
            if x.shape[-1] != self.ndim:
                raise ValueError(f"points must have trailing dimension {self.ndim}")
            coords = [
                (x[..., k] - self.extents[k][0]) / self.spacing[k] for k in range(self.ndim)
            ]
            out_shape = x.shape[:-1]
        if not all(np.all(np.isfinite(c)) for c in coords):
            raise OutOfDomain("non-finite query point")
        flat = [c.ravel() for c in coords]
        values = ndimage.map_coordinates(
            self._coefficients,
            flat,
            order=3,
            mode=_SPLINE_MODE[self.boundary],
            prefilter=False,
        )
        return values.reshape(out_shape)

    def periodic_extension(self) -> tuple[np.ndarray, tuple[slice, ...]]:
        """Heights on a periodic lattice and the slices selecting this graph.

        Even graphs are mirrored about both ends, doubling the period.
        """
        if self.boundary == "periodic":
            return self.heights, tuple(slice(None) for _ in self.shape)
        h = self.heights
        for axis in range(self.ndim):
            n = h.shape[axis]
            mirror = np.flip(np.take(h, np.arange(1, n - 1), axis=axis), axis=axis)
            h = np.concatenate([h, mirror], axis=axis)
        return h, tuple(slice(0, n) for n in self.shape)

    def with_heights(self, heights) -> "GraphInterface":
        return GraphInterface(np.reshape(heights, self.shape), self.extents, self.boundary)

    def __add__(self, c):
        return self.with_heights(self.heights + float(c))

    # snapshot text format: header "d N... lo hi ... boundary", then one height per line
    def to_text(self) -> str:
        header = [str(self.ndim + 1), *map(str, self.shape)]
        for a, b in self.extents:
            header += [repr(a), repr(b)]
        header.append(self.boundary)
        buf = io.StringIO()
        buf.write(" ".join(header) + "\n")
        np.savetxt(buf, self.heights.ravel(), fmt="%.17g")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "GraphInterface":
        lines = text.strip().splitlines()
        head = lines[0].split()
        d = int(head[0])
        k = d - 1
        shape = tuple(int(v) for v in head[1 : 1 + k])
        bounds = [float(v) for v in head[1 + k : 1 + 3 * k]]
        boundary = head[1 + 3 * k]
        extents = tuple(zip(bounds[::2], bounds[1::2]))
        heights = np.array([float(v) for v in lines[1:]]).reshape(shape)
        return cls(heights, extents, boundary)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "GraphInterface":
        with open(path) as fh:
            return cls.from_text(fh.read())


def _as_pairs(extents, ndim):
    ext = tuple(extents)
    if ndim == 1 and len(ext) == 2 and np.isscalar(ext[0]):
        return ((ext[0], ext[1]),)
    try:
        pairs = tuple(tuple(e) for e in ext)
    except TypeError:
        raise ValueError(f"extents must be (lo, hi) pairs, got {extents!r}") from None
    if any(len(p) != 2 for p in pairs):
        raise ValueError(f"extents must be (lo, hi) pairs, got {extents!r}")
    return pairs


def _axes(extents, shape, boundary):
    out = []
    for (a, b), n in zip(extents, shape):
        if boundary == "even":
            out.append(np.linspace(a, b, n))
        else:
            out.append(a + (b - a) * np.arange(n) / n)
    return tuple(out)


@dataclass(frozen=True)
class StageSet:
    """Linear combination ``sum_i c_i 1_{S_i}`` of graph sets."""

    graphs: tuple[GraphInterface, ...]
    coefficients: tuple[float, ...]

    def __post_init__(self):
        if len(self.graphs) != len(self.coefficients) or not self.graphs:
            raise ValueError("need one coefficient per graph")
        first = self.graphs[0]
        for g in self.graphs[1:]:
            if g.shape != first.shape or g.extents != first.extents or g.boundary != first.boundary:
                raise ValueError("all stage graphs must share one lattice and boundary rule")
        object.__setattr__(self, "graphs", tuple(self.graphs))
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))

    @classmethod
    def single(cls, graph: GraphInterface) -> "StageSet":
        return cls((graph,), (1.0,))

    @property
    def total(self) -> float:
        return float(sum(self.coefficients))


def _per_term(t, n):
    widths = np.broadcast_to(np.asarray(t, dtype=float), (n,))
    return [check_width(w) for w in widths]


def stage_value(stages: StageSet, t, x, z, rule: QuadratureRule | None = None):
    """``sum_i c_i G_{t_i} * 1_{S_i}`` at ``(x, z)``.

    ``t`` is a single width or one width per graph.
    """
    widths = _per_term(t, len(stages.graphs))
    return sum(
        c * convolve_graph_at(g, w, x, z, rule)
        for g, c, w in zip(stages.graphs, stages.coefficients, widths)
    )


def solve_level(
    evaluate: Callable[[np.ndarray, np.ndarray], np.ndarray],
    guess,
    level,
    scale,
    tol: float = ROOT_TOL,
    maxiter: int = 100,
) -> np.ndarray:
    """Vectorized safeguarded secant for ``evaluate(z, idx) = level``.

    ``evaluate`` must decrease through the root. The search starts with a
    secant pair ``(guess, guess + 0.01 scale)``, widens the bracket
    geometrically up to ``8 scale`` away from ``guess``, then alternates
    secant steps with bisection whenever a step leaves the bracket or the
    bracket stops shrinking.

    Raises
    ------
    NoBracket
        If some point has no sign change within ``8 scale`` of its guess.
    """
    guess = np.asarray(guess, dtype=float).ravel()
    level = np.broadcast_to(np.asarray(level, dtype=float), guess.shape)
    n = guess.size
    all_idx = np.arange(n)

    def resid(z, idx):
        return evaluate(z, idx) - level[idx]

    z0 = guess.copy()
    r0 = resid(z0, all_idx)
    if np.any(~np.isfinite(r0)):
        raise NoBracket("stage value undefined at the guess", points=np.flatnonzero(~np.isfinite(r0)))
    # residual > 0 means the root lies above (values decrease in z)
    hi_z = np.where(r0 > 0, np.nan, z0)  # residual <= 0 side
    lo_z = np.where(r0 > 0, z0, np.nan)  # residual > 0 side
    hi_r = np.where(r0 > 0, np.nan, r0)
    lo_r = np.where(r0 > 0, r0, np.nan)
    direction = np.where(r0 > 0, 1.0, -1.0)

    # widen until every point is bracketed
    prev_z, prev_r = z0.copy(), r0.copy()
    cur_z, cur_r = z0.copy(), r0.copy()
    pending = np.flatnonzero(np.abs(r0) > tol)
    done = np.abs(r0) <= tol
    step = 0.01 * scale
    max_step = BRACKET_HALFWIDTH * scale
    while pending.size:
        need = pending[~done[pending] & (np.isnan(lo_z[pending]) | np.isnan(hi_z[pending]))]
        if need.size == 0:
            break
        if step > max_step:
            raise NoBracket(
                f"no sign change within {BRACKET_HALFWIDTH:g} sqrt(t) of the guess at "
                f"{need.size} point(s)",
                points=need,
            )
        zz = guess[need] + direction[need] * step
        rr = resid(zz, need)
        bad = ~np.isfinite(rr)
        if np.any(bad):
            raise NoBracket("stage value undefined inside the search window", points=need[bad])
        prev_z[need], prev_r[need] = cur_z[need], cur_r[need]
        cur_z[need], cur_r[need] = zz, rr
        pos = rr > 0
        lo_z[need[pos]], lo_r[need[pos]] = zz[pos], rr[pos]
        hi_z[need[~pos]], hi_r[need[~pos]] = zz[~pos], rr[~pos]
        hit = np.abs(rr) <= tol
        done[need[hit]] = True
        step = min(4.0 * step, max_step) if step < max_step else 2.0 * max_step

    best_z = np.where(np.abs(lo_r) <= np.abs(np.nan_to_num(hi_r, nan=np.inf)), lo_z, hi_z)
    best_z = np.where(done & (np.abs(cur_r) <= tol), cur_z, best_z)
    active = np.flatnonzero(~done)
    width_prev = np.abs(hi_z - lo_z)
    for _ in range(maxiter):
        if active.size == 0:
            break
        a = active
        denom = cur_r[a] - prev_r[a]
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = cur_z[a] - cur_r[a] * (cur_z[a] - prev_z[a]) / denom
        left = np.minimum(lo_z[a], hi_z[a])
        right = np.maximum(lo_z[a], hi_z[a])
        width = right - left
        use_bisect = (
            ~np.isfinite(cand) | (cand <= left) | (cand >= right) | (width > 0.5 * width_prev[a])
        )
        cand = np.where(use_bisect, 0.5 * (left + right), cand)
        width_prev[a] = width
        rr = resid(cand, a)
        if np.any(~np.isfinite(rr)):
            raise NoBracket("stage value undefined inside the bracket", points=a[~np.isfinite(rr)])
        prev_z[a], prev_r[a] = cur_z[a], cur_r[a]
        cur_z[a], cur_r[a] = cand, rr
        pos = rr > 0
        lo_z[a[pos]], lo_r[a[pos]] = cand[pos], rr[pos]
        hi_z[a[~pos]], hi_r[a[~pos]] = cand[~pos], rr[~pos]
        best_z[a] = cand
        new_width = np.abs(hi_z[a] - lo_z[a])
        finished = (np.abs(rr) <= tol) | (new_width <= tol * (1.0 + np.abs(cand)))
        active = a[~finished]
    return best_z


def threshold_level(
    stages: StageSet,
    t,
    x,
    level: float,
    guess,
    rule: QuadratureRule | None = None,
):
    """Height where ``stage_value`` crosses ``level`` above each base point."""
    widths = _per_term(t, len(stages.graphs))
    x = np.asarray(x, dtype=float)
    dim = stages.graphs[0].ndim
    scalar = x.ndim == 0 or (dim > 1 and x.ndim == 1)
    pts = x.reshape(-1) if dim == 1 else x.reshape(-1, dim)
    guess = np.broadcast_to(np.asarray(guess, dtype=float), (pts.shape[0],)).copy()

    def evaluate(z, idx):
        return stage_value(stages, widths, pts[idx], z, rule)

    z = solve_level(evaluate, guess, level, math.sqrt(max(widths)))
    return z[0] if scalar else z


class _TermCache:
    """Per-step evaluators of ``G_t * 1_S`` at the tracked points."""

    def __init__(self, method, rule, centers, halfwidth, table_options):
        self.method = method
        self.rule = rule
        self.centers = centers
        self.halfwidth = halfwidth
        self.table_options = table_options
        self._cache = {}

    def get(self, graph: GraphInterface, t: float):
        key = (id(graph), t)
        if key not in self._cache:
            self._cache[key] = (graph, self._build(graph, t))
        return self._cache[key][1]

    def _build(self, graph, t):
        if self.method == "lattice":
            periodic, tracked = graph.periodic_extension()
            return LevelTable(
                periodic,
                graph.spacing,
                t,
                tracked,
                self.centers,
                self.halfwidth,
                **self.table_options,
            )
        pts = graph.points
        rule = self.rule

        def evaluate(z, idx):
            return convolve_graph_at(graph, t, pts[idx], z, rule)

        return evaluate


def _resolve_method(method, graph):
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if method == "auto":
        # quadrature does not damp lattice-scale modes, which extrapolating
        # schemes then amplify; the lattice route applies the exact symbol
        return "lattice"
    return method


def run_stages(
    inputs: StageSet,
    spec: SchemeSpec,
    dt: float,
    *,
    method: str = "auto",
    rule: QuadratureRule | None = None,
    table_options: dict | None = None,
) -> list[GraphInterface]:
    """Execute every stage of ``spec`` once; return the stage graphs ``1..M``.

    Each stage is solved at every tracked point, seeded with the heights of
    the first input graph.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    base = inputs.graphs[0]
    method = _resolve_method(method, base)
    rule = rule or gauss_hermite_rule()
    max_width = max(w for w in spec.widths()) * dt
    halfwidth = BRACKET_HALFWIDTH * math.sqrt(max_width) * (1 + 1e-9)
    guess = base.heights.ravel()
    cache = _TermCache(method, rule, guess, halfwidth, table_options or {})

    stage_graphs: list[GraphInterface] = []
    for m, stage in enumerate(spec.stages, start=1):
        evaluators = []
        for term in stage.terms:
            t = term.width * dt
            if term.source == 0:
                pairs = zip(inputs.graphs, inputs.coefficients)
            else:
                pairs = [(stage_graphs[term.source - 1], 1.0)]
            for graph, c in pairs:
                evaluators.append((term.coefficient * c, cache.get(graph, t)))
        stage_scale = math.sqrt(max(term.width for term in stage.terms) * dt)

        def evaluate(z, idx, evaluators=evaluators):
            return sum(c * ev(z, idx) for c, ev in evaluators)

        try:
            heights = solve_level(evaluate, guess, stage.level, stage_scale)
        except NoBracket as exc:
            raise NoBracket(f"stage {m}: {exc}", stage=m, points=exc.points) from exc
        stage_graphs.append(base.with_heights(heights))
    return stage_graphs


def scheme_advance(state: StageSet, spec: SchemeSpec, dt: float, **kwargs) -> tuple[StageSet, GraphInterface]:
    """One time step from an input combination.

    Returns the next input combination and the interface reported for this step.
    """
    graphs = run_stages(state, spec, dt, **kwargs)
    nxt = StageSet(
        tuple(graphs[i - 1] for i, _ in spec.output),
        tuple(c for _, c in spec.output),
    )
    return nxt, graphs[spec.report - 1]


def scheme_step(f: GraphInterface, spec: SchemeSpec, dt: float, **kwargs) -> GraphInterface:
    """Apply one step of ``spec`` to the set below ``f``."""
    return scheme_advance(StageSet.single(f), spec, dt, **kwargs)[1]


def evolve(
    f: GraphInterface,
    spec: SchemeSpec,
    dt: float,
    n_steps: int,
    callback: Callable[[int, GraphInterface], None] | None = None,
    **kwargs,
) -> GraphInterface:
    """Run ``n_steps`` steps and return the final reported interface."""
    state = StageSet.single(f)
    current = f
    for k in range(1, n_steps + 1):
        state, current = scheme_advance(state, spec, dt, **kwargs)
        if callback is not None:
            callback(k, current)
    return current


def pointwise_step(
    f: Callable,
    spec: SchemeSpec,
    dt: float,
    points,
    guess=None,
    rule: QuadratureRule | None = None,
    dim: int | None = None,
) -> np.ndarray:
    """Reported height of one step of ``spec`` at arbitrary base points.

    ``f`` is a callable graph (or :class:`GraphInterface`). Each stage is
    solved only at the quadrature nodes that later stages need, so the cost
    grows like ``nodes ** depth``; intended for one-step consistency checks
    of shallow schemes (MBO, two-kernel) on analytic graphs.
    """
    rule = rule or gauss_hermite_rule()
    sample = f.interpolate if hasattr(f, "interpolate") else f
    pts = np.asarray(points, dtype=float)
    if dim is None:
        dim = getattr(f, "ndim", 1 if pts.ndim <= 1 else pts.shape[-1])
    if spec.output != ((spec.n_stages, 1.0),) and spec.report != spec.n_stages:
        raise ValueError("pointwise_step supports schemes reporting their last stage")
    pts = pts.reshape(-1) if dim == 1 else pts.reshape(-1, dim)
    if dim == 1:
        nodes = rule.nodes
    else:
        grids = np.meshgrid(*([rule.nodes] * dim), indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=-1)

    def stage_heights(m, x, z0):
        """Heights of stage ``m`` above base points ``x``."""
        stage = spec.stages[m - 1]
        evaluators = []
        for term in stage.terms:
            t = term.width * dt
            if term.source == 0:
                evaluators.append(
                    (term.coefficient, lambda z, idx, t=t: convolve_graph_at(sample, t, x[idx], z, rule))
                )
                continue
            # earlier stage sampled at this term's quadrature nodes around each point
            offsets = 2.0 * math.sqrt(t) * nodes
            nx = x[:, None] - offsets[None] if dim == 1 else x[:, None, :] - offsets[None]
            flat = nx.reshape(-1) if dim == 1 else nx.reshape(-1, dim)
            heights = stage_heights(term.source, flat, sample(flat)).reshape(x.shape[0], -1)
            scale = 2.0 * math.sqrt(t)
            weights = rule.weights if dim == 1 else np.multiply.outer(rule.weights, rule.weights).ravel()

            def ev(z, idx, heights=heights, scale=scale, weights=weights):
                return 0.5 + 0.5 * (erf((heights[idx] - z[:, None]) / scale) @ weights)

            evaluators.append((term.coefficient, ev))

        def evaluate(z, idx):
            return sum(c * e(z, idx) for c, e in evaluators)

        scale = math.sqrt(max(term.width for term in stage.terms) * dt)
        return solve_level(evaluate, z0, stage.level, scale)

    z0 = sample(pts) if guess is None else np.broadcast_to(np.asarray(guess, dtype=float), (pts.shape[0],))
    return stage_heights(spec.report, pts, z0)
