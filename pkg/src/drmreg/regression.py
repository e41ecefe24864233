"""Tilted kernel density estimates and regression of the response on covariates.

The density of group j is estimated from *all* combined points, each carrying
the fitted mass ``p_i w_j(t_i)``:

    g_j(z) = sum_i p_i w_j(t_i) prod_l K((t_il - z_l) / b_l) / b_l,

with per-coordinate bandwidth ``b_l = h * scale_l`` (``scale`` is the pooled
standard deviation, so ``h`` is a bandwidth on standardized coordinates).

The semiparametric regression of the response (last coordinate) on the
covariates averages candidate responses ``y_c`` with weights proportional to
``g_j(x, y_c)``.  Nadaraya-Watson and ordinary least squares are provided as
baselines.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import DRMError, DimensionError
from .estimation import FittedModel

__all__ = [
    "NoEffectiveSupportError",
    "KERNELS",
    "TiltedKde",
    "kernel_density",
    "kde_eval",
    "RegressionPrediction",
    "predict",
    "predict_many",
    "fitted_values",
    "nadaraya_watson",
    "OlsFit",
    "ols_fit",
    "score_predictions",
]

DEFAULT_BANDWIDTH = 0.3
_TINY = 1e-280
_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


class NoEffectiveSupportError(DRMError, ValueError):
    """The query is so far from the data that every kernel weight vanishes."""


def _log_gaussian(u):
    return -0.5 * u * u - _LOG_SQRT_2PI


def _log_epanechnikov(u):
    with np.errstate(divide="ignore"):
        return np.where(np.abs(u) < 1, np.log(0.75 * np.clip(1 - u * u, 0, None)), -np.inf)


KERNELS = {"gaussian": _log_gaussian, "epanechnikov": _log_epanechnikov}


def _log_kernel(kernel):
    try:
        return KERNELS[kernel]
    except KeyError:
        raise ValueError(f"unknown kernel {kernel!r}; choose from {sorted(KERNELS)}") from None


def _log_product_kernel(points, queries, bandwidths, kernel):
    """``(Q, n)`` array of ``sum_l log[K((t_il - z_l)/b_l) / b_l]``."""
    logk = _log_kernel(kernel)
    out = np.zeros((queries.shape[0], points.shape[0]))
    for l, b in enumerate(bandwidths):
        out += logk((points[None, :, l] - queries[:, None, l]) / b) - np.log(b)
    return out


def kernel_density(points, masses, z, bandwidths, kernel="gaussian"):
    """Weighted product-kernel density of a point cloud, at one or many points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    masses = np.asarray(masses, dtype=float)
    z = np.asarray(z, dtype=float)
    single = z.ndim <= 1
    queries = z.reshape(1, -1) if single else z
    bandwidths = np.broadcast_to(np.asarray(bandwidths, dtype=float), (points.shape[1],))
    if np.any(bandwidths <= 0):
        raise ValueError("bandwidths must be positive")
    if queries.shape[1] != points.shape[1]:
        raise DimensionError("query dimension does not match the data")
    with np.errstate(divide="ignore"):
        logm = np.log(masses)
    vals = np.exp(logsumexp(_log_product_kernel(points, queries, bandwidths, kernel)
                            + logm[None, :], axis=1))
    return float(vals[0]) if single else vals


@dataclass(frozen=True)
class TiltedKde:
    """Kernel density estimate of one group's density from the fused samples."""

    model: FittedModel
    group: object
    h: float = DEFAULT_BANDWIDTH
    kernel: str = "gaussian"

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("bandwidth must be positive")
        _log_kernel(self.kernel)
        self.model.group_index(self.group)

    @property
    def bandwidths(self) -> np.ndarray:
        return self.h * self.model.scale

    @property
    def masses(self) -> np.ndarray:
        return self.model.masses(self.group)

    def __call__(self, z):
        return kernel_density(self.model.points, self.masses, z, self.bandwidths, self.kernel)


def kde_eval(kde: TiltedKde, z0):
    return kde(z0)


@dataclass(frozen=True)
class RegressionPrediction:
    x: np.ndarray
    group: object
    value: float
    candidates: np.ndarray
    weights: np.ndarray


def _candidates(model: FittedModel, j: int, candidate_set: str) -> np.ndarray:
    if candidate_set == "combined":
        return model.points[:, -1]
    if candidate_set == "group":
        return model.points[model.membership == j, -1]
    raise ValueError(f"candidate_set must be 'combined' or 'group', got {candidate_set!r}")


def _regression_weights(model, X, j, h, kernel, candidate_set, chunk=512):
    """Yield ``(row_slice, weights)`` with weights over candidates, rows summing to 1.

    Rows with no effective support come back as NaN.
    """
    if model.dimension < 2:
        raise DimensionError("regression needs at least one covariate (L >= 2)")
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    logk = _log_kernel(kernel)
    b = h * model.scale
    t = model.points
    ycand = _candidates(model, j, candidate_set)
    with np.errstate(divide="ignore"):
        logm = np.log(model.masses(j))
    log_ky = logk((t[:, -1][:, None] - ycand[None, :]) / b[-1])   # (n, C)
    ky = np.exp(log_ky)
    for start in range(0, X.shape[0], chunk):
        rows = slice(start, min(start + chunk, X.shape[0]))
        loga = _log_product_kernel(t[:, :-1], X[rows], b[:-1], kernel) + logm[None, :]
        top = loga.max(axis=1, keepdims=True)
        with np.errstate(invalid="ignore"):
            a = np.exp(loga - top)
        a[~np.isfinite(top[:, 0])] = 0.0
        g = a @ ky
        total = g.sum(axis=1)
        for r in np.flatnonzero(~(total > _TINY)):
            # Exact log-domain pass for rows the scaled product could not resolve.
            logg = logsumexp(loga[r][:, None] + log_ky, axis=0)
            peak = logg.max()
            if np.isfinite(peak):
                g[r] = np.exp(logg - peak)
                total[r] = g[r].sum()
            else:
                g[r] = np.nan
                total[r] = np.nan
        yield rows, g / total[:, None], ycand


def predict(model: FittedModel, x, group, h: float = DEFAULT_BANDWIDTH,
            kernel: str = "gaussian", candidate_set: str = "combined") -> RegressionPrediction:
    """Estimate ``E_j(y | x)`` for one covariate vector.

    ``candidate_set="combined"`` averages over every response in the combined
    data; ``"group"`` restricts the candidates to group j's own responses.
    Raises :class:`NoEffectiveSupportError` when all weights vanish.
    """
    j = model.group_index(group)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (model.dimension - 1,):
        raise DimensionError(f"expected {model.dimension - 1} covariates, got {x.shape}")
    _, w, ycand = next(_regression_weights(model, x[None, :], j, h, kernel, candidate_set))
    w = w[0]
    if not np.all(np.isfinite(w)):
        raise NoEffectiveSupportError(f"no effective support at x={x.tolist()}")
    return RegressionPrediction(x, model.labels[j], float(w @ ycand), ycand, w)


def predict_many(model: FittedModel, X, group, h: float = DEFAULT_BANDWIDTH,
                 kernel: str = "gaussian", candidate_set: str = "combined",
                 errors: str = "raise") -> np.ndarray:
    """Vectorised :func:`predict`.

    ``errors="nan"`` marks unsupported queries with NaN instead of raising.
    """
    j = model.group_index(group)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != model.dimension - 1:
        raise DimensionError(f"expected {model.dimension - 1} covariate columns")
    out = np.empty(X.shape[0])
    for rows, w, ycand in _regression_weights(model, X, j, h, kernel, candidate_set):
        out[rows] = w @ ycand
    bad = np.isnan(out)
    if bad.any() and errors == "raise":
        raise NoEffectiveSupportError(
            f"no effective support at query row(s) {np.flatnonzero(bad).tolist()}")
    return out


def fitted_values(model: FittedModel, group, h: float = DEFAULT_BANDWIDTH,
                  kernel: str = "gaussian", candidate_set: str = "combined") -> np.ndarray:
    """In-sample predictions at each of the group's own observations."""
    pts = model.group_points(group)
    return predict_many(model, pts[:, :-1], group, h, kernel, candidate_set)


def nadaraya_watson(sample, x, h, kernel: str = "gaussian"):
    """Nadaraya-Watson estimate from one group's ``(n, L)`` data, response last.

    ``h`` is a scalar or per-covariate bandwidth in the data's own units.
    Accepts a single covariate vector or a ``(Q, L-1)`` array.
    """
    sample = np.atleast_2d(np.asarray(sample, dtype=float))
    if sample.shape[0] == 0:
        raise ValueError("empty sample")
    X, y = sample[:, :-1], sample[:, -1]
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    queries = x.reshape(1, -1) if single else x
    if queries.shape[1] != X.shape[1]:
        raise DimensionError(f"expected {X.shape[1]} covariates")
    h = np.broadcast_to(np.asarray(h, dtype=float), (X.shape[1],))
    if np.any(h <= 0):
        raise ValueError("bandwidths must be positive")
    logw = _log_product_kernel(X, queries, h, kernel)
    top = logw.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(top)):
        raise NoEffectiveSupportError("no effective support: every kernel weight is zero")
    w = np.exp(logw - top)
    out = (w @ y) / w.sum(axis=1)
    return float(out[0]) if single else out


@dataclass(frozen=True)
class OlsFit:
    """Least-squares fit ``y = b0 + b' x``; ``coef = (b0, b_1, ..., b_{L-1})``."""

    coef: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.coef[0] + X @ self.coef[1:]


def ols_fit(sample) -> OlsFit:
    """Multiple regression of the last column on the others, with intercept."""
    sample = np.atleast_2d(np.asarray(sample, dtype=float))
    design = np.column_stack([np.ones(sample.shape[0]), sample[:, :-1]])
    y = sample[:, -1]
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise np.linalg.LinAlgError("design matrix is rank deficient")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    fitted = design @ coef
    return OlsFit(coef, fitted, y - fitted)


def score_predictions(truth, preds) -> tuple[float, float]:
    """``(MSE, MAE)`` of predictions against the observed responses."""
    truth = np.asarray(truth, dtype=float)
    preds = np.asarray(preds, dtype=float)
    if truth.shape != preds.shape:
        raise ValueError("truth and predictions differ in length")
    if truth.size == 0:
        raise ValueError("empty input")
    err = truth - preds
    return float(np.mean(err ** 2)), float(np.mean(np.abs(err)))
