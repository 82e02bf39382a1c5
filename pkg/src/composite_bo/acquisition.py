"""Acquisition functions over per-constituent GP posteriors.

Vanilla EI and UCB operate on a single GP modeling the objective directly.
The composite variants score a candidate from the M per-constituent
posteriors: composite EI by Monte Carlo averaging of the positive
improvement of the composed posterior draws, composite UCB by composing the
per-constituent optimistic estimates ``mean + beta * sd``.

All functions are pure given their inputs plus an explicit seed, so callers
may evaluate many candidates concurrently.  The ``*_from_moments`` variants
are the vectorized kernels used during acquisition maximization, where one
set of normal draws is shared by every candidate in a sweep (common random
numbers keep the Monte Carlo surface deterministic and optimizable).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import ndtr

from .gp import PosteriorSummary

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class CompositionFn:
    """A known, cheap composition ``h`` of M constituent values.

    ``eval`` reduces the last axis (length M) of a stacked value array, so
    the same callable serves scalar evaluation and batched sweeps.  When
    ``needs_point`` is set, ``eval`` takes the query point as a second
    argument (broadcast against the leading axes of the values); revenue
    compositions use this to weight demands by price.

    ``monotone_signs`` declares the direction of h in each argument (+1
    nondecreasing, -1 nonincreasing) when known.  Composite UCB uses it to
    keep its estimate optimistic: a nonincreasing argument takes
    ``mean - beta * sd`` instead of ``mean + beta * sd``, since optimism
    about the objective means pessimism about that constituent.

    ``grad`` supplies the partial derivatives of h with respect to its
    arguments, mapping (values, point) to the (..., M) gradient.  Composite
    UCB then bounds the composed posterior by first-order uncertainty
    propagation, ``h(means) + beta * sqrt(sum (dh_i * sd_i)^2)``, which is
    exact for linear compositions and replaces the sum of M componentwise
    bonuses with the induced scale of g itself.
    """

    arity: int
    eval: Callable[..., np.ndarray]
    needs_point: bool = False
    monotone_signs: Optional[tuple[int, ...]] = None
    grad: Optional[Callable[..., np.ndarray]] = None

    def __post_init__(self) -> None:
        if self.arity < 1:
            raise ValueError(f"arity must be at least 1, got {self.arity}")
        if self.monotone_signs is not None:
            if len(self.monotone_signs) != self.arity:
                raise ValueError(
                    f"{len(self.monotone_signs)} monotonicity signs for arity {self.arity}"
                )
            if any(s not in (-1, 1) for s in self.monotone_signs):
                raise ValueError(f"signs must be +1 or -1, got {self.monotone_signs}")

    def eval_grad(self, values: np.ndarray, point: Optional[np.ndarray] = None) -> np.ndarray:
        if self.grad is None:
            raise ValueError("composition declares no gradient")
        if self.needs_point:
            if point is None:
                raise ValueError(f"composition {self.eval} requires the query point")
            return np.asarray(self.grad(values, point), dtype=float)
        return np.asarray(self.grad(values), dtype=float)

    def __call__(self, values: np.ndarray, point: Optional[np.ndarray] = None):
        if self.needs_point:
            if point is None:
                raise ValueError(f"composition {self.eval} requires the query point")
            return self.eval(values, point)
        return self.eval(values)


@dataclass(frozen=True)
class UcbSchedule:
    """Exploration weight schedule: ``beta0`` decayed geometrically per step."""

    beta0: float
    decay: float

    def __post_init__(self) -> None:
        if self.beta0 < 0.0:
            raise ValueError(f"beta0 must be non-negative, got {self.beta0}")
        if not (0.0 < self.decay <= 1.0):
            raise ValueError(f"decay must lie in (0, 1], got {self.decay}")


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo sampling budget and seed for composite EI."""

    num_samples: int = 128
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_samples < 1:
            raise ValueError(f"num_samples must be at least 1, got {self.num_samples}")


def decay(schedule: UcbSchedule, step: int) -> float:
    """Exploration weight after ``step`` decays: ``beta0 * decay**step``."""
    if step < 0:
        raise ValueError(f"step must be non-negative, got {step}")
    return schedule.beta0 * schedule.decay**step


def ei_values(means: np.ndarray, sds: np.ndarray, best: float) -> np.ndarray:
    """Closed-form expected improvement, vectorized over candidates."""
    means = np.asarray(means, dtype=float)
    sds = np.asarray(sds, dtype=float)
    gap = means - best
    out = np.maximum(gap, 0.0)
    positive = sds > 0.0
    if np.any(positive):
        g = gap[positive]
        s = sds[positive]
        z = g / s
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
        out[positive] = g * ndtr(z) + s * pdf
    return out


def ucb_values(means: np.ndarray, sds: np.ndarray, beta: float) -> np.ndarray:
    """Upper confidence bound ``mean + beta * sd``, vectorized."""
    return np.asarray(means, dtype=float) + beta * np.asarray(sds, dtype=float)


def vanilla_ei(post: PosteriorSummary, best: float) -> float:
    """Expected improvement of one Gaussian posterior over the incumbent.

    Reduces to ``max(mean - best, 0)`` when the posterior is degenerate.
    """
    sd = math.sqrt(max(post.variance, 0.0))
    if sd == 0.0:
        return max(post.mean - best, 0.0)
    z = (post.mean - best) / sd
    return (post.mean - best) * ndtr(z) + sd * _INV_SQRT_2PI * math.exp(-0.5 * z * z)


def vanilla_ucb(post: PosteriorSummary, beta: float) -> float:
    """Optimistic estimate ``mean + beta * sd`` of one posterior."""
    return post.mean + beta * math.sqrt(max(post.variance, 0.0))


def _posts_to_moments(posts: Sequence[PosteriorSummary], arity: int) -> tuple[np.ndarray, np.ndarray]:
    if len(posts) != arity:
        raise ValueError(f"got {len(posts)} posteriors for a composition of arity {arity}")
    means = np.array([p.mean for p in posts], dtype=float)
    sds = np.array([math.sqrt(max(p.variance, 0.0)) for p in posts], dtype=float)
    return means, sds


def composite_ei_from_moments(
    means: np.ndarray,
    sds: np.ndarray,
    draws: np.ndarray,
    h: CompositionFn,
    best: float,
    points: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Monte Carlo composite EI for a batch of candidates.

    ``means``/``sds`` have shape (R, M); ``draws`` is the shared (L, M)
    standard-normal sample; ``points`` is the (R, d) candidate batch for
    point-aware compositions.  Returns the (R,) acquisition values.
    """
    samples = means[:, None, :] + sds[:, None, :] * draws[None, :, :]
    composed = h(samples, None if points is None else points[:, None, :])
    improvement = np.maximum(composed - best, 0.0)
    return improvement.mean(axis=1)


def composite_ucb_from_moments(
    means: np.ndarray,
    sds: np.ndarray,
    beta: float,
    h: CompositionFn,
    points: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Composite UCB for a batch of candidates: ``h(mean + beta * sd)``.

    With a declared gradient the bound propagates the constituent
    uncertainties through h instead (exact for linear compositions); with
    declared monotonicity the sd term is signed per argument so the result
    stays an optimistic estimate either way.
    """
    if h.grad is not None:
        weights = h.eval_grad(means, points)
        composed_sd = np.sqrt(np.sum((weights * sds) ** 2, axis=-1))
        return np.asarray(h(means, points), dtype=float) + beta * composed_sd
    if h.monotone_signs is not None:
        sds = sds * np.asarray(h.monotone_signs, dtype=float)
    return np.asarray(h(means + beta * sds, points), dtype=float)


def c_ei(
    posts: Sequence[PosteriorSummary],
    h: CompositionFn,
    best: float,
    mc: McConfig,
    x: Optional[np.ndarray] = None,
) -> float:
    """Composite expected improvement at one candidate.

    Averages the positive part of ``h(mean_i + sd_i * Z_i) - best`` over
    ``mc.num_samples`` independent M-variate standard-normal draws.
    Non-negative and deterministic given the seed.
    """
    means, sds = _posts_to_moments(posts, h.arity)
    draws = np.random.default_rng(mc.seed).standard_normal((mc.num_samples, h.arity))
    points = None if x is None else np.asarray(x, dtype=float).reshape(1, -1)
    return float(
        composite_ei_from_moments(means[None, :], sds[None, :], draws, h, best, points)[0]
    )


def c_ucb(
    posts: Sequence[PosteriorSummary],
    h: CompositionFn,
    beta: float,
    x: Optional[np.ndarray] = None,
) -> float:
    """Composite UCB at one candidate: ``h`` of per-constituent optimism."""
    means, sds = _posts_to_moments(posts, h.arity)
    points = None if x is None else np.asarray(x, dtype=float).reshape(1, -1)
    return float(composite_ucb_from_moments(means[None, :], sds[None, :], beta, h, points)[0])
