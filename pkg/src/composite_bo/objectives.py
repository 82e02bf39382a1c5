"""Benchmark composite objectives.

Three test-function compositions (Langermann, Dixon-Price, Ackley) and
three dynamic-pricing revenue models (independent regional demands,
correlated product demands, identical price across regions).  Every task is
cast as maximization of ``g(x) = h(f_1(x), ..., f_M(x))`` and carries a
reference optimum ``g_star`` for regret accounting.

Constituent evaluators are vectorized over rows of an (k, d) batch and are
pure, so they are safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .acquisition import CompositionFn
from .loop import Domain, pattern_search

_EPS = 1e-15
_MAX_GAMMA_ITER = 400


# ---------------------------------------------------------------------------
# Regularized upper incomplete gamma (gamma-distribution CCDF)
# ---------------------------------------------------------------------------

def _lower_regularized_series(shape: float, x: float) -> float:
    """P(shape, x) by power series; good for x < shape + 1."""
    if x == 0.0:
        return 0.0
    term = 1.0 / shape
    total = term
    denom = shape
    for _ in range(_MAX_GAMMA_ITER):
        denom += 1.0
        term *= x / denom
        total += term
        if term < total * _EPS:
            break
    log_scale = shape * math.log(x) - x - math.lgamma(shape)
    return total * math.exp(log_scale)


def _upper_regularized_contfrac(shape: float, x: float) -> float:
    """Q(shape, x) by modified Lentz continued fraction; good for x >= shape + 1."""
    tiny = 1e-300
    b = x + 1.0 - shape
    c = 1.0 / tiny
    d = 1.0 / b
    frac = d
    for i in range(1, _MAX_GAMMA_ITER + 1):
        an = -i * (i - shape)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        frac *= delta
        if abs(delta - 1.0) < _EPS:
            break
    log_scale = shape * math.log(x) - x - math.lgamma(shape)
    return frac * math.exp(log_scale)


def ccdf_gamma(p: float, alpha: float, beta: float) -> float:
    """Pr{V >= p} for V ~ Gamma(shape alpha, rate beta).

    Series branch below the ``beta * p < alpha + 1`` crossover, continued
    fraction above it; accurate to well under 1e-10 absolute and monotone
    non-increasing in p.
    """
    if p < 0.0:
        raise ValueError(f"price must be non-negative, got {p}")
    if alpha <= 0.0 or beta <= 0.0:
        raise ValueError("alpha and beta must be positive")
    x = beta * p
    if x == 0.0:
        return 1.0
    if x < alpha + 1.0:
        return 1.0 - _lower_regularized_series(alpha, x)
    return _upper_regularized_contfrac(alpha, x)


def _ccdf_gamma_batch(prices: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    return np.array([ccdf_gamma(float(p), alpha, beta) for p in np.ravel(prices)])


# ---------------------------------------------------------------------------
# Composite objective container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DemandRegionParams:
    """One region's demand curve: logit or linear, with its two parameters."""

    kind: str
    z1: float
    z2: float

    def __post_init__(self) -> None:
        if self.kind == "logit":
            ok = 1.0 <= self.z1 <= 2.0 and -1.0 <= self.z2 <= 1.0
        elif self.kind == "linear":
            ok = 0.75 <= self.z1 <= 1.0 and 2.0 / 3.0 <= self.z2 <= 0.75
        else:
            raise ValueError(f"unknown demand kind {self.kind!r}")
        if not ok:
            raise ValueError(f"parameters ({self.z1}, {self.z2}) outside the {self.kind} range")

    def demand(self, price: np.ndarray) -> np.ndarray:
        if self.kind == "logit":
            t = np.exp(-self.z1 - self.z2 * price)
            return t / (1.0 + t)
        return self.z1 - self.z2 * price


@dataclass(frozen=True)
class CompositeObjective:
    """A maximization task ``g(x) = h(f_1(x), ..., f_M(x))`` on a box domain.

    ``g_star`` is the reference global maximum used for regret; ``x_star``
    is the known maximizer when one exists in closed form.  ``separable``
    marks objectives whose g is a sum of per-coordinate terms, which the
    calibration oracle exploits.
    """

    name: str
    domain: Domain
    arity: int
    constituents: tuple[Callable[[np.ndarray], np.ndarray], ...]
    composition: CompositionFn
    g_star: float
    x_star: Optional[np.ndarray] = None
    separable: bool = False
    region_params: Optional[tuple[DemandRegionParams, ...]] = None

    def member_values(self, x) -> np.ndarray:
        """Constituent values: (M,) for a single point, (k, M) for a batch."""
        pts = np.asarray(x, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        values = np.stack([f(pts) for f in self.constituents], axis=-1)
        return values[0] if single else values

    def compose_batch(self, values: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Apply the composition to (k, M) values at their (k, d) points."""
        if self.composition.needs_point:
            return np.asarray(self.composition.eval(values, points), dtype=float)
        return np.asarray(self.composition.eval(values), dtype=float)

    def g_batch(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self.compose_batch(self.member_values(pts), pts)

    def g_value(self, x) -> float:
        pts = np.asarray(x, dtype=float).reshape(1, -1)
        return float(self.g_batch(pts)[0])


# ---------------------------------------------------------------------------
# Test-function compositions (negated so every task is maximization)
# ---------------------------------------------------------------------------

_LANGERMANN_C = np.array([1.0, 2.0, 5.0, 2.0, 3.0])
_LANGERMANN_A = np.array(
    [[3.0, 5.0], [5.0, 2.0], [2.0, 1.0], [1.0, 4.0], [7.0, 9.0]]
)
# Reference optimum of the negated weighted sum on [0, 10]^2, from the
# calibration oracle (4001-per-axis grid plus pattern-search polish).
_LANGERMANN_G_STAR = 4.644775659998534
_LANGERMANN_X_STAR = np.array([2.49070894, 1.4858996])


def _langermann_member(row: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    def member(points: np.ndarray) -> np.ndarray:
        diff = points - row
        sq_sum = np.sum(diff * diff, axis=1)
        lin_sum = np.sum(diff, axis=1)
        return np.exp(-sq_sum / math.pi) * np.cos(math.pi * lin_sum)

    return member


def langermann() -> CompositeObjective:
    """Negated Langermann-style weighted sum of five bump constituents."""
    members = tuple(_langermann_member(row) for row in _LANGERMANN_A)
    composition = CompositionFn(
        arity=5,
        eval=lambda v: -np.sum(v * _LANGERMANN_C, axis=-1),
        monotone_signs=(-1, -1, -1, -1, -1),
        grad=lambda v: np.broadcast_to(-_LANGERMANN_C, v.shape),
    )
    return CompositeObjective(
        name="langermann",
        domain=Domain(np.zeros(2), np.full(2, 10.0)),
        arity=5,
        constituents=members,
        composition=composition,
        g_star=_LANGERMANN_G_STAR,
        x_star=_LANGERMANN_X_STAR,
    )


def _dixon_price_member(index: int) -> Callable[[np.ndarray], np.ndarray]:
    def member(points: np.ndarray) -> np.ndarray:
        if index == 1:
            return (points[:, 0] - 1.0) ** 2
        return index * (2.0 * points[:, index - 1] ** 2 - points[:, index - 2]) ** 2

    return member


def dixon_price() -> CompositeObjective:
    """Negated Dixon-Price sum: one squared term per coordinate."""
    d = 5
    members = tuple(_dixon_price_member(i) for i in range(1, d + 1))
    composition = CompositionFn(
        arity=d,
        eval=lambda v: -np.sum(v, axis=-1),
        monotone_signs=(-1,) * d,
        grad=lambda v: np.broadcast_to(-np.ones(d), v.shape),
    )
    x_star = np.array([2.0 ** (-(2.0**i - 2.0) / 2.0**i) for i in range(1, d + 1)])
    return CompositeObjective(
        name="dixon-price",
        domain=Domain(np.full(d, -10.0), np.full(d, 10.0)),
        arity=d,
        constituents=members,
        composition=composition,
        g_star=0.0,
        x_star=x_star,
    )


_ACKLEY_A = 20.0
_ACKLEY_B = 0.2
_ACKLEY_C = 2.0 * math.pi


def ackley() -> CompositeObjective:
    """Negated Ackley in 5-d, split into its RMS and cosine-mean constituents."""
    d = 5

    def rms(points: np.ndarray) -> np.ndarray:
        return np.sqrt(np.mean(points * points, axis=1))

    def cos_mean(points: np.ndarray) -> np.ndarray:
        return np.mean(np.cos(_ACKLEY_C * points), axis=1)

    def compose(v: np.ndarray) -> np.ndarray:
        return (
            _ACKLEY_A * np.exp(-_ACKLEY_B * v[..., 0])
            + np.exp(v[..., 1])
            - _ACKLEY_A
            - math.e
        )

    def compose_grad(v: np.ndarray) -> np.ndarray:
        return np.stack(
            [-_ACKLEY_A * _ACKLEY_B * np.exp(-_ACKLEY_B * v[..., 0]), np.exp(v[..., 1])],
            axis=-1,
        )

    return CompositeObjective(
        name="ackley",
        domain=Domain(np.full(d, -32.768), np.full(d, 32.768)),
        arity=2,
        constituents=(rms, cos_mean),
        composition=CompositionFn(
            arity=2, eval=compose, monotone_signs=(-1, 1), grad=compose_grad
        ),
        g_star=0.0,
        x_star=np.zeros(d),
    )


# ---------------------------------------------------------------------------
# Dynamic-pricing revenue models
# ---------------------------------------------------------------------------

CANONICAL_DEMAND_SEED = 0


def _draw_region_params(seed: int) -> tuple[DemandRegionParams, ...]:
    rng = np.random.default_rng(seed)
    regions = []
    for _ in range(2):
        regions.append(
            DemandRegionParams("logit", rng.uniform(1.0, 2.0), rng.uniform(-1.0, 1.0))
        )
    for _ in range(2):
        regions.append(
            DemandRegionParams("linear", rng.uniform(0.75, 1.0), rng.uniform(2.0 / 3.0, 0.75))
        )
    return tuple(regions)


def independent_demand(seed: int = CANONICAL_DEMAND_SEED) -> CompositeObjective:
    """Four regions, each with its own price and demand curve.

    Two logit and two linear regions with parameters drawn uniformly from
    their ranges per seed; revenue is the sum of per-region price times
    demand, so the objective is separable across coordinates.
    """
    regions = _draw_region_params(seed)

    def region_member(index: int) -> Callable[[np.ndarray], np.ndarray]:
        def member(points: np.ndarray) -> np.ndarray:
            return regions[index].demand(points[:, index])

        return member

    composition = CompositionFn(
        arity=4,
        eval=lambda v, p: np.sum(v * p, axis=-1),
        needs_point=True,
        monotone_signs=(1, 1, 1, 1),
        grad=lambda v, p: np.broadcast_to(p, v.shape),
    )
    obj = CompositeObjective(
        name="indep-demand",
        domain=Domain(np.zeros(4), np.ones(4)),
        arity=4,
        constituents=tuple(region_member(i) for i in range(4)),
        composition=composition,
        g_star=0.0,
        separable=True,
        region_params=regions,
    )
    g_star, x_star = _calibrate_separable(obj, grid_density=20001)
    return replace(obj, g_star=g_star, x_star=x_star)


def _matyas(points: np.ndarray) -> np.ndarray:
    return 0.26 * (points[:, 0] ** 2 + points[:, 1] ** 2) - 0.48 * points[:, 0] * points[:, 1]


def _booth(points: np.ndarray) -> np.ndarray:
    return (points[:, 0] + 2.0 * points[:, 1] - 7.0) ** 2 + (
        2.0 * points[:, 0] + points[:, 1] - 5.0
    ) ** 2


# From the calibration oracle (4001-per-axis grid plus polish).
_CORR_DEMAND_G_STAR = 10490.539276644025
_CORR_DEMAND_X_STAR = np.array([8.54543945, 6.58984951])


def correlated_demand() -> CompositeObjective:
    """Two products whose demands respond to both prices."""

    def demand_one(points: np.ndarray) -> np.ndarray:
        return 8.0 * (100.0 - _matyas(points))

    def demand_two(points: np.ndarray) -> np.ndarray:
        return 1154.0 - _booth(points)

    composition = CompositionFn(
        arity=2,
        eval=lambda v, p: np.sum(v * p, axis=-1),
        needs_point=True,
        monotone_signs=(1, 1),
        grad=lambda v, p: np.broadcast_to(p, v.shape),
    )
    return CompositeObjective(
        name="corr-demand",
        domain=Domain(np.zeros(2), np.full(2, 10.0)),
        arity=2,
        constituents=(demand_one, demand_two),
        composition=composition,
        g_star=_CORR_DEMAND_G_STAR,
        x_star=_CORR_DEMAND_X_STAR,
    )


# Single price in [0, 3]: wide enough to contain the revenue peaks of both
# willingness-to-pay branches with margin.  From the calibration oracle
# (100001-point grid plus polish).
_IDENTICAL_PRICE_G_STAR = 0.6027512844941029
_IDENTICAL_PRICE_X_STAR = np.array([0.71176848])


def identical_price() -> CompositeObjective:
    """One price, two regions with different willingness-to-pay.

    Purchase probabilities are the CCDFs of an exponential (rate 5) and a
    gamma (shape 10, rate 10) willingness-to-pay distribution.
    """

    def demand_exp(points: np.ndarray) -> np.ndarray:
        return np.exp(-5.0 * points[:, 0])

    def demand_gamma(points: np.ndarray) -> np.ndarray:
        return _ccdf_gamma_batch(points[:, 0], 10.0, 10.0)

    composition = CompositionFn(
        arity=2,
        eval=lambda v, p: np.sum(v, axis=-1) * p[..., 0],
        needs_point=True,
        monotone_signs=(1, 1),
        grad=lambda v, p: np.broadcast_to(p[..., [0, 0]], v.shape),
    )
    return CompositeObjective(
        name="identical-price",
        domain=Domain(np.zeros(1), np.full(1, 3.0)),
        arity=2,
        constituents=(demand_exp, demand_gamma),
        composition=composition,
        g_star=_IDENTICAL_PRICE_G_STAR,
        x_star=_IDENTICAL_PRICE_X_STAR,
    )


# ---------------------------------------------------------------------------
# Task registry and reference-optimum calibration
# ---------------------------------------------------------------------------

_TASK_BUILDERS: dict[str, Callable[[], CompositeObjective]] = {
    "langermann": langermann,
    "dixon-price": dixon_price,
    "ackley": ackley,
    "indep-demand": independent_demand,
    "corr-demand": correlated_demand,
    "identical-price": identical_price,
}


def task_names() -> list[str]:
    return list(_TASK_BUILDERS)


def get_task(name: str) -> CompositeObjective:
    builder = _TASK_BUILDERS.get(name)
    if builder is None:
        raise ValueError(f"unknown task {name!r}; known tasks: {', '.join(_TASK_BUILDERS)}")
    return builder()


def _calibrate_separable(
    obj: CompositeObjective, grid_density: int
) -> tuple[float, np.ndarray]:
    """Per-coordinate grid maximization of a separable revenue sum."""
    d = obj.domain.dim
    x_star = np.empty(d)
    total = 0.0
    for axis in range(d):
        grid = np.linspace(obj.domain.lower[axis], obj.domain.upper[axis], grid_density)
        probe = np.tile(obj.domain.lower, (grid_density, 1))
        probe[:, axis] = grid
        term = grid * obj.constituents[axis](probe)
        best = int(np.argmax(term))
        total += float(term[best])
        x_star[axis] = grid[best]
    polished, polished_val = _polish(obj, x_star[None, :])
    if polished_val >= total:
        return polished_val, polished
    return total, x_star


def _polish(obj: CompositeObjective, starts: np.ndarray) -> tuple[np.ndarray, float]:
    scores = obj.g_batch(starts)
    points, values = pattern_search(
        obj.g_batch, obj.domain, starts, scores, init_step_frac=0.05, min_step_frac=1e-10
    )
    best = int(np.argmax(values))
    return points[best], float(values[best])


def calibrate_g_star(obj: CompositeObjective, grid_density: int = 201) -> float:
    """Recompute the reference optimum with the grid-plus-polish oracle.

    Dense grids for one- and two-dimensional tasks, per-coordinate grids
    for separable sums, and the known maximizer (when available) always
    joins the polish starts.
    """
    if grid_density < 2:
        raise ValueError(f"grid_density must be at least 2, got {grid_density}")
    d = obj.domain.dim
    starts = []
    if obj.x_star is not None:
        starts.append(np.asarray(obj.x_star, dtype=float))
    best_grid = -math.inf
    if obj.separable:
        best_grid, grid_argmax = _calibrate_separable(obj, max(grid_density, 2001))
        starts.append(grid_argmax)
    elif d == 1:
        grid = np.linspace(obj.domain.lower[0], obj.domain.upper[0], grid_density).reshape(-1, 1)
        values = obj.g_batch(grid)
        order = np.argsort(-values)[:3]
        best_grid = float(values[order[0]])
        starts.extend(grid[i] for i in order)
    elif d == 2:
        axes = [
            np.linspace(obj.domain.lower[j], obj.domain.upper[j], grid_density) for j in range(2)
        ]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2)
        values = obj.g_batch(mesh)
        order = np.argsort(-values)[:5]
        best_grid = float(values[order[0]])
        starts.extend(mesh[i] for i in order)
    elif not starts:
        rng = np.random.default_rng(0)
        sweep = obj.domain.sample(rng, 4096)
        values = obj.g_batch(sweep)
        order = np.argsort(-values)[:8]
        best_grid = float(values[order[0]])
        starts.extend(sweep[i] for i in order)

    _, polished = _polish(obj, np.array(starts))
    return max(polished, best_grid)
