"""Single-output Gaussian process regression with a squared exponential kernel.

Exact inference on small dense problems: kernel matrix construction with a
jitter ladder, cached Cholesky factor, posterior mean/variance queries and
type-II maximum likelihood hyperparameter fitting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

# Diagonal stabilization, relative to the signal variance.  The base value is
# always added; on factorization failure it escalates tenfold per attempt up
# to the cap, after which the data is declared degenerate.
BASE_JITTER_SCALE = 1e-6
MAX_JITTER_SCALE = 1e-2

# Hyperparameter search box, relative to the input-space diagonal (for the
# lengthscale) and to the target variance (for the signal variance).
LENGTHSCALE_SPAN = (1e-3, 1e3)
SIGNAL_VARIANCE_SPAN = (1e-4, 1e4)

_LOG_2PI = math.log(2.0 * math.pi)


class DegenerateKernelError(RuntimeError):
    """Kernel matrix stayed non-factorizable at the maximum jitter level."""


@dataclass(frozen=True)
class KernelHyperparams:
    """Squared-exponential kernel parameters plus observation noise level.

    ``lengthscale`` is a single shared scale, or a tuple of per-dimension
    scales for automatic relevance determination.
    """

    signal_variance: float
    lengthscale: float | tuple[float, ...]
    noise_stddev: float = 0.0

    def __post_init__(self) -> None:
        if not (self.signal_variance > 0.0 and math.isfinite(self.signal_variance)):
            raise ValueError(f"signal_variance must be positive, got {self.signal_variance}")
        if np.ndim(self.lengthscale) > 0:
            scales = tuple(float(v) for v in self.lengthscale)
            if not all(v > 0.0 and math.isfinite(v) for v in scales):
                raise ValueError(f"lengthscales must be positive, got {scales}")
            object.__setattr__(self, "lengthscale", scales)
        elif not (self.lengthscale > 0.0 and math.isfinite(self.lengthscale)):
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")
        if not (self.noise_stddev >= 0.0 and math.isfinite(self.noise_stddev)):
            raise ValueError(f"noise_stddev must be non-negative, got {self.noise_stddev}")


@dataclass(frozen=True)
class PosteriorSummary:
    """Predictive mean and (latent) variance of one GP at one query point."""

    mean: float
    variance: float

    @property
    def stddev(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class GaussianProcess:
    """A fitted GP: immutable once constructed, safe for concurrent queries.

    ``train_inputs`` are stored in model space.  When ``input_shift`` and
    ``input_scale`` are set (fitting with domain bounds rescales inputs to
    the unit box), queries are mapped through the same affine transform.
    """

    hyperparams: KernelHyperparams
    prior_mean: float
    train_inputs: np.ndarray
    train_targets: np.ndarray
    chol_factor: np.ndarray
    alpha: np.ndarray
    input_shift: Optional[np.ndarray] = None
    input_scale: Optional[np.ndarray] = None

    @property
    def num_train(self) -> int:
        return self.train_inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.train_inputs.shape[1]

    def to_model_space(self, points: np.ndarray) -> np.ndarray:
        if self.input_shift is None:
            return points
        return (points - self.input_shift) / self.input_scale


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.ndim != 2:
        raise ValueError(f"expected an (n, d) array of points, got shape {pts.shape}")
    return pts


def _pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a2 = np.sum(a * a, axis=1)[:, None]
    b2 = np.sum(b * b, axis=1)[None, :]
    d2 = a2 + b2 - 2.0 * (a @ b.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def kernel_eval(x, x_prime, hp: KernelHyperparams) -> float:
    """Squared exponential kernel between two points.

    Returns ``sv * exp(-||x - x'||^2 / (2 l^2))``; symmetric and in (0, sv].
    """
    xa = np.asarray(x, dtype=float).ravel()
    xb = np.asarray(x_prime, dtype=float).ravel()
    if xa.shape != xb.shape:
        raise ValueError(f"dimension mismatch: {xa.shape} vs {xb.shape}")
    diff = (xa - xb) / np.asarray(hp.lengthscale, dtype=float)
    return hp.signal_variance * math.exp(-0.5 * float(diff @ diff))


def _kernel_matrix(points_a: np.ndarray, points_b: np.ndarray, hp: KernelHyperparams) -> np.ndarray:
    scale = np.asarray(hp.lengthscale, dtype=float)
    if scale.ndim == 0:
        d2 = _pairwise_sq_dists(points_a, points_b)
        d2 *= -0.5 / float(scale) ** 2
    else:
        d2 = _pairwise_sq_dists(points_a / scale, points_b / scale)
        d2 *= -0.5
    np.exp(d2, out=d2)
    d2 *= hp.signal_variance
    return d2


def _chol_with_jitter(k_noisy: np.ndarray, signal_variance: float) -> tuple[np.ndarray, float]:
    """Factor ``k_noisy + jitter*I``, escalating jitter until it succeeds."""
    n = k_noisy.shape[0]
    jitter = BASE_JITTER_SCALE * signal_variance
    cap = MAX_JITTER_SCALE * signal_variance
    while jitter <= cap * (1.0 + 1e-12):
        try:
            lower = cholesky(k_noisy + jitter * np.eye(n), lower=True, check_finite=False)
            return lower, jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise DegenerateKernelError(
        f"kernel matrix of size {n} not positive definite even with jitter {cap:g}"
    )


def build_kernel_matrix(points, hp: KernelHyperparams) -> np.ndarray:
    """Regularized kernel matrix ``K + noise^2*I + jitter*I`` of the points.

    The jitter is the smallest rung of the escalation ladder at which a
    Cholesky factorization succeeds; degenerate data raises
    :class:`DegenerateKernelError`.
    """
    pts = _as_points(points)
    if pts.shape[0] < 1:
        raise ValueError("need at least one point")
    k = _kernel_matrix(pts, pts, hp)
    k += hp.noise_stddev**2 * np.eye(pts.shape[0])
    k = 0.5 * (k + k.T)
    _, jitter = _chol_with_jitter(k, hp.signal_variance)
    return k + jitter * np.eye(pts.shape[0])


def build_gp(
    points,
    targets,
    hyperparams: KernelHyperparams,
    prior_mean: Optional[float] = None,
    *,
    input_shift: Optional[np.ndarray] = None,
    input_scale: Optional[np.ndarray] = None,
) -> GaussianProcess:
    """Condition a GP with fixed hyperparameters on the given data.

    ``prior_mean`` defaults to the sample mean of the targets.  Points are
    given in original coordinates; the optional shift/scale pair maps them
    to model space before the kernel is applied.
    """
    pts = _as_points(points)
    y = np.asarray(targets, dtype=float).ravel()
    if pts.shape[0] != y.shape[0]:
        raise ValueError(f"{pts.shape[0]} points vs {y.shape[0]} targets")
    if pts.shape[0] < 1:
        raise ValueError("need at least one observation")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")

    if input_shift is not None:
        shift = np.asarray(input_shift, dtype=float)
        scale = np.asarray(input_scale, dtype=float)
        model_pts = (pts - shift) / scale
    else:
        shift = scale = None
        model_pts = pts

    mu = float(np.mean(y)) if prior_mean is None else float(prior_mean)
    k = _kernel_matrix(model_pts, model_pts, hyperparams)
    k += hyperparams.noise_stddev**2 * np.eye(pts.shape[0])
    k = 0.5 * (k + k.T)
    lower, jitter = _chol_with_jitter(k, hyperparams.signal_variance)
    resid = y - mu
    alpha = cho_solve((lower, True), resid, check_finite=False)
    return GaussianProcess(
        hyperparams=hyperparams,
        prior_mean=mu,
        train_inputs=model_pts,
        train_targets=y,
        chol_factor=lower,
        alpha=alpha,
        input_shift=shift,
        input_scale=scale,
    )


def log_marginal_likelihood(gp: GaussianProcess) -> float:
    """Log marginal likelihood of the training targets under the GP."""
    resid = gp.train_targets - gp.prior_mean
    quad = float(resid @ gp.alpha)
    logdet_half = float(np.sum(np.log(np.diag(gp.chol_factor))))
    return -0.5 * quad - logdet_half - 0.5 * gp.num_train * _LOG_2PI


def posterior(gp: GaussianProcess, x) -> PosteriorSummary:
    """Posterior mean and latent variance at a single query point."""
    xq = np.asarray(x, dtype=float).ravel()
    if xq.shape[0] != gp.dim:
        raise ValueError(f"query has dimension {xq.shape[0]}, GP expects {gp.dim}")
    means, variances = posterior_batch(gp, xq.reshape(1, -1))
    return PosteriorSummary(mean=float(means[0]), variance=float(variances[0]))


def posterior_batch(gp: GaussianProcess, points) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized posterior over a batch of query points.

    Returns ``(means, variances)`` with variances clamped at zero.
    """
    pts = _as_points(points)
    if pts.shape[1] != gp.dim:
        raise ValueError(f"queries have dimension {pts.shape[1]}, GP expects {gp.dim}")
    model_pts = gp.to_model_space(pts)
    k_star = _kernel_matrix(gp.train_inputs, model_pts, gp.hyperparams)
    means = gp.prior_mean + k_star.T @ gp.alpha
    v = solve_triangular(gp.chol_factor, k_star, lower=True, check_finite=False)
    variances = gp.hyperparams.signal_variance - np.sum(v * v, axis=0)
    np.maximum(variances, 0.0, out=variances)
    return means, variances


@dataclass(frozen=True)
class FitConfig:
    """Settings for hyperparameter fitting.

    When domain bounds are supplied, inputs are rescaled to the unit box
    before fitting and the lengthscale search box is expressed relative to
    the unit-box diagonal; otherwise the data's bounding-box diagonal is
    used.  Noise is held fixed (zero by default, for noiseless objectives).
    ``ard`` switches from one shared lengthscale to per-dimension scales.
    """

    domain_lower: Optional[Sequence[float]] = None
    domain_upper: Optional[Sequence[float]] = None
    noise_stddev: float = 0.0
    num_starts: int = 8
    max_opt_iter: int = 30
    seed: int = 0
    ard: bool = False


def _stratified_starts(rng: np.random.Generator, num: int, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Latin-hypercube style starting points in a log box."""
    span = hi - lo
    starts = np.empty((num, lo.shape[0]))
    for j in range(lo.shape[0]):
        strata = (np.arange(num) + rng.random(num)) / num
        starts[:, j] = lo[j] + span[j] * rng.permuted(strata)
    return starts


def fit(points, targets, config: FitConfig = FitConfig()) -> GaussianProcess:
    """Fit a GP by maximizing log marginal likelihood.

    Multi-start local ascent (L-BFGS-B with finite-difference gradients)
    over (log lengthscale, log signal variance) from ``num_starts``
    stratified starting points; the prior mean is the sample mean of the
    targets and the noise level is taken from the config.  Deterministic
    for a fixed seed.
    """
    pts = _as_points(points)
    y = np.asarray(targets, dtype=float).ravel()
    if pts.shape[0] != y.shape[0]:
        raise ValueError(f"{pts.shape[0]} points vs {y.shape[0]} targets")
    if pts.shape[0] < 2:
        raise ValueError(f"need at least 2 observations to fit, got {pts.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")

    n, d = pts.shape
    if config.domain_lower is not None:
        shift = np.asarray(config.domain_lower, dtype=float)
        scale = np.asarray(config.domain_upper, dtype=float) - shift
        model_pts = (pts - shift) / scale
        diagonal = math.sqrt(d)
    else:
        shift = scale = None
        model_pts = pts
        extent = pts.max(axis=0) - pts.min(axis=0)
        diagonal = max(float(np.linalg.norm(extent)), 1e-8)

    target_var = max(float(np.var(y)), 1e-12)
    num_scales = d if config.ard else 1
    log_bounds_lo = np.log(
        [LENGTHSCALE_SPAN[0] * diagonal] * num_scales + [SIGNAL_VARIANCE_SPAN[0] * target_var]
    )
    log_bounds_hi = np.log(
        [LENGTHSCALE_SPAN[1] * diagonal] * num_scales + [SIGNAL_VARIANCE_SPAN[1] * target_var]
    )

    if config.ard:
        diffs = model_pts[:, None, :] - model_pts[None, :, :]
        per_dim_sq = np.ascontiguousarray(np.moveaxis(diffs * diffs, -1, 0))
        per_dim_sq_flat = per_dim_sq.reshape(d, -1)
        sq_dists = None
    else:
        per_dim_sq = per_dim_sq_flat = None
        sq_dists = _pairwise_sq_dists(model_pts, model_pts)
    resid = y - float(np.mean(y))
    noise_var = config.noise_stddev**2
    eye = np.eye(n)

    # For a fixed lengthscale the correlation matrix (plus relative jitter,
    # plus noise expressed relative to the signal variance) is reused across
    # the finite-difference probes that move only the variance coordinate.
    corr_cache: dict[tuple, tuple[float, float]] = {}

    def neg_lml(theta: np.ndarray) -> float:
        log_sv = float(theta[-1])
        sv = math.exp(log_sv)
        rel_noise = noise_var / sv
        key = (float(theta[0]), rel_noise)
        cached = corr_cache.get(key)
        if cached is None:
            corr = sq_dists * (-0.5 * math.exp(-2.0 * float(theta[0])))
            np.exp(corr, out=corr)
            corr += (BASE_JITTER_SCALE + rel_noise) * eye
            try:
                lower = cholesky(corr, lower=True, check_finite=False)
            except np.linalg.LinAlgError:
                return 1e12
            w = solve_triangular(lower, resid, lower=True, check_finite=False)
            quad = float(w @ w)
            logdet_half = float(np.sum(np.log(np.diag(lower))))
            cached = (quad, logdet_half)
            corr_cache[key] = cached
        quad, logdet_half = cached
        return 0.5 * (quad / sv + n * log_sv) + logdet_half + 0.5 * n * _LOG_2PI

    def neg_lml_and_grad(theta: np.ndarray) -> tuple[float, np.ndarray]:
        log_sv = float(theta[-1])
        sv = math.exp(log_sv)
        rel_noise = noise_var / sv
        inv_lsq = np.exp(-2.0 * theta[:-1])
        corr = ((-0.5 * inv_lsq) @ per_dim_sq_flat).reshape(n, n)
        np.exp(corr, out=corr)
        reg = corr + (BASE_JITTER_SCALE + rel_noise) * eye
        try:
            lower = cholesky(reg, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            return 1e12, np.zeros(d + 1)
        alpha = cho_solve((lower, True), resid, check_finite=False)
        quad = float(resid @ alpha)
        logdet_half = float(np.sum(np.log(np.diag(lower))))
        value = 0.5 * (quad / sv + n * log_sv) + logdet_half + 0.5 * n * _LOG_2PI
        # dNLL/dtheta_k = 0.5 * sum(W o dA/dtheta_k) with W = A^-1 - alpha alpha^T / sv
        reg_inv = cho_solve((lower, True), eye, check_finite=False)
        w_mat = reg_inv - np.outer(alpha, alpha) / sv
        weighted = (w_mat * corr).reshape(-1)
        grad = np.empty(d + 1)
        grad[:-1] = 0.5 * (per_dim_sq_flat @ weighted) * inv_lsq
        grad[-1] = 0.5 * (n - quad / sv) - 0.5 * rel_noise * float(np.trace(w_mat))
        return value, grad

    rng = np.random.default_rng(config.seed)
    starts = _stratified_starts(rng, config.num_starts, log_bounds_lo, log_bounds_hi)
    bounds = list(zip(log_bounds_lo, log_bounds_hi))

    objective = neg_lml_and_grad if config.ard else neg_lml
    best_theta = None
    best_val = math.inf
    for start in starts:
        start_val = objective(start)[0] if config.ard else objective(start)
        if start_val < best_val:
            best_val, best_theta = start_val, start
        result = minimize(
            objective,
            start,
            method="L-BFGS-B",
            jac=config.ard or None,
            bounds=bounds,
            options={"maxiter": config.max_opt_iter, "ftol": 1e-9},
        )
        if result.fun < best_val:
            best_val, best_theta = float(result.fun), result.x

    if config.ard:
        fitted_scale = tuple(math.exp(float(v)) for v in best_theta[:-1])
    else:
        fitted_scale = math.exp(float(best_theta[0]))
    hp = KernelHyperparams(
        signal_variance=math.exp(float(best_theta[-1])),
        lengthscale=fitted_scale,
        noise_stddev=config.noise_stddev,
    )
    return build_gp(
        pts, y, hp, prior_mean=float(np.mean(y)), input_shift=shift, input_scale=scale
    )
