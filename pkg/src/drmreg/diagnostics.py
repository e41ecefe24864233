"""Goodness-of-fit measures and diagnostic-plot data for a fitted model.

The fitted distribution function of group i (a tilt of the reference step
function) is compared with that group's own empirical distribution function
at the group's sample points.  Four summaries are provided:

* ``r2_alpha_k``: ``1 - exp(-(x/(n_i - x))^k)``, where ``x`` counts the points
  at which the fitted CDF falls inside a ``1 - alpha`` band around the
  empirical CDF.
* ``r2_1``: explained sum of squares of the regression predictions.
* ``r2_2``: squared correlation between responses and predictions.
* ``r2_3``: ``exp(-sqrt(n) max|gap|)``, with median and mean-square variants.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .core import DegenerateDataError, DimensionError
from .estimation import FittedModel, StepCdf, tilted_cdf
from .regression import (
    DEFAULT_BANDWIDTH,
    fitted_values,
    nadaraya_watson,
    ols_fit,
    score_predictions,
)

__all__ = [
    "empirical_cdf",
    "cdf_pairs",
    "coverage_count",
    "r2_from_count",
    "r2_alpha_k",
    "r2_1",
    "r2_2",
    "r2_3",
    "r2_3_from_gaps",
    "GroupFit",
    "GofReport",
    "gof_report",
]


def empirical_cdf(sample, t):
    """Fraction of ``sample`` rows componentwise ``<= t`` (one or many ``t``)."""
    sample = np.atleast_2d(np.asarray(sample, dtype=float))
    if sample.shape[0] == 0:
        raise ValueError("empty sample")
    t = np.asarray(t, dtype=float)
    if t.shape[-1] != sample.shape[1]:
        raise DimensionError("query dimension does not match the sample")
    return StepCdf(sample, np.full(sample.shape[0], 1.0 / sample.shape[0]))(t)


def cdf_pairs(model: FittedModel, group, points=None):
    """``(empirical, fitted)`` CDF values of one group at ``points``.

    ``points`` defaults to the group's own observations.
    """
    own = model.group_points(group)
    points = own if points is None else np.atleast_2d(np.asarray(points, dtype=float))
    return empirical_cdf(own, points), tilted_cdf(model, group)(points)


def _band_halfwidth(emp, n_i, alpha, band):
    if band == "binomial":
        z = stats.norm.ppf(1 - alpha / 2)
        return z * np.sqrt(np.clip(emp * (1 - emp), 0, None) / n_i)
    if band == "dkw":
        return np.full_like(emp, np.sqrt(np.log(2 / alpha) / (2 * n_i)))
    raise ValueError(f"band must be 'binomial' or 'dkw', got {band!r}")


def coverage_count(model: FittedModel, group, alpha: float = 0.10, band: str = "binomial") -> int:
    """Number of the group's points where the fitted CDF lies in the ``1 - alpha`` band.

    The default band is pointwise, ``Gemp +- z_{1-alpha/2} sqrt(Gemp(1-Gemp)/n_i)``;
    ``band="dkw"`` uses the uniform DKW half-width ``sqrt(log(2/alpha)/(2 n_i))``.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return _covered(*cdf_pairs(model, group), alpha, band)


def _covered(emp, fitted, alpha, band):
    half = _band_halfwidth(emp, emp.size, alpha, band)
    # Slack for rounding in the fitted masses; the band itself is untouched.
    return int(np.count_nonzero(np.abs(fitted - emp) <= half + 1e-12))


def r2_from_count(x: int, n_i: int, k: float) -> float:
    """``1 - exp(-(x/(n_i - x))^k)``, equal to 1 when every point is covered."""
    if k <= 0:
        raise ValueError("k must be positive")
    if not 0 <= x <= n_i:
        raise ValueError("count must lie in [0, n_i]")
    if x == n_i:
        return 1.0
    return float(-np.expm1(-(x / (n_i - x)) ** k))


def r2_alpha_k(model: FittedModel, group, alpha: float = 0.10, k: float = 2.0,
               band: str = "binomial") -> float:
    """Coverage-based fit measure; ``alpha=0.10, k=2`` is the 90% / squared setting."""
    x = coverage_count(model, group, alpha, band)
    return r2_from_count(x, int(model.sizes[model.group_index(group)]), k)


def r2_1(truth, preds) -> float:
    """``sum (yhat - ybar)^2 / sum (y - ybar)^2``, capped at 1."""
    y = np.asarray(truth, dtype=float)
    yhat = np.asarray(preds, dtype=float)
    if y.shape != yhat.shape:
        raise ValueError("truth and predictions differ in length")
    denom = np.sum((y - y.mean()) ** 2)
    if denom == 0:
        raise DegenerateDataError("degenerate input: constant response")
    return float(min(np.sum((yhat - y.mean()) ** 2) / denom, 1.0))


def r2_2(truth, preds) -> float:
    """Squared correlation of responses and predictions."""
    y = np.asarray(truth, dtype=float)
    yhat = np.asarray(preds, dtype=float)
    if y.shape != yhat.shape:
        raise ValueError("truth and predictions differ in length")
    if np.ptp(y) == 0 or np.ptp(yhat) == 0:
        raise DegenerateDataError("degenerate input: zero variance")
    r = np.corrcoef(y, yhat)[0, 1]
    return float(min(max(r * r, 0.0), 1.0))


def r2_3_from_gaps(gaps, n: int, variant: str = "max") -> float:
    """Apply the ``r2_3`` functional to absolute CDF gaps.

    ``"max"``: ``exp(-sqrt(n) max gap)``; ``"median"``: the median in place of
    the max; ``"meansq"``: ``exp(-mean(gap^2))``.
    """
    gaps = np.abs(np.asarray(gaps, dtype=float))
    if variant == "max":
        return float(np.exp(-np.sqrt(n) * gaps.max()))
    if variant == "median":
        return float(np.exp(-np.sqrt(n) * np.median(gaps)))
    if variant == "meansq":
        return float(np.exp(-np.mean(gaps ** 2)))
    raise ValueError(f"variant must be 'max', 'median' or 'meansq', got {variant!r}")


def _r2_3_size(model, n_i, n):
    if n == "combined":
        return model.n
    if n == "group":
        return n_i
    raise ValueError("n must be 'combined' or 'group'")


def r2_3(model: FittedModel, group, variant: str = "max", n: str = "combined") -> float:
    """``exp(-sqrt(n) max|Gemp - Gfit|)`` over the group's points.

    See :func:`r2_3_from_gaps` for the variants.  ``n="combined"`` uses the
    combined sample size, ``n="group"`` the group's.
    """
    emp, fitted = cdf_pairs(model, group)
    return r2_3_from_gaps(emp - fitted, _r2_3_size(model, emp.size, n), variant)


@dataclass
class GroupFit:
    """Fit summaries for one group."""

    label: str
    n_i: int
    alpha: float
    k: float
    x_count: int
    r2_alpha_k: float
    r2_3: float
    r2_3_median: float
    r2_3_meansq: float
    max_abs_gap: float
    empirical: np.ndarray = field(repr=False)
    semiparametric: np.ndarray = field(repr=False)
    r2_1: float | None = None
    r2_2: float | None = None
    residuals: np.ndarray | None = field(default=None, repr=False)
    errors: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("empirical", "semiparametric", "residuals"):
            val = out[key]
            out[key] = None if val is None else np.asarray(val).tolist()
        out["errors"] = {k: {"mse": v[0], "mae": v[1]} for k, v in self.errors.items()}
        return out


@dataclass
class GofReport:
    groups: list
    settings: dict

    def __getitem__(self, label) -> GroupFit:
        for g in self.groups:
            if g.label == label:
                return g
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {"settings": dict(self.settings), "groups": [g.to_dict() for g in self.groups]}

    def plot_rows(self):
        """Rows ``(group, point_index, empirical, semiparametric)``."""
        for g in self.groups:
            for i, (e, s) in enumerate(zip(g.empirical, g.semiparametric)):
                yield g.label, i, float(e), float(s)


def gof_report(model: FittedModel, h: float = DEFAULT_BANDWIDTH, kernel: str = "gaussian",
               alpha: float = 0.10, k: float = 2.0, band: str = "binomial",
               r2_3_n: str = "combined", candidate_set: str = "combined",
               nw: bool = True, regression: bool = True) -> GofReport:
    """Assemble every fit measure for every group of ``model``.

    Regression-based entries (``r2_1``, ``r2_2``, residuals, MSE/MAE of the
    semiparametric, OLS and Nadaraya-Watson fits) are computed in-sample at
    each observation's own covariates and need ``L >= 2``.  The
    Nadaraya-Watson bandwidth is ``h`` times the pooled covariate scale.
    """
    settings = dict(h=h, kernel=kernel, alpha=alpha, k=k, band=band,
                    r2_3_n=r2_3_n, candidate_set=candidate_set)
    groups = []
    for j, label in enumerate(model.labels):
        emp, fitted = cdf_pairs(model, j)
        n_i = emp.size
        x = _covered(emp, fitted, alpha, band)
        gap = np.abs(emp - fitted)
        size = _r2_3_size(model, n_i, r2_3_n)
        gf = GroupFit(
            label=label, n_i=n_i, alpha=alpha, k=k, x_count=x,
            r2_alpha_k=r2_from_count(x, n_i, k),
            r2_3=r2_3_from_gaps(gap, size, "max"),
            r2_3_median=r2_3_from_gaps(gap, size, "median"),
            r2_3_meansq=r2_3_from_gaps(gap, size, "meansq"),
            max_abs_gap=float(gap.max()),
            empirical=emp, semiparametric=fitted,
        )
        if regression and model.dimension >= 2:
            pts = model.group_points(j)
            y = pts[:, -1]
            yhat = fitted_values(model, j, h, kernel, candidate_set)
            gf.residuals = y - yhat
            gf.errors["drm"] = score_predictions(y, yhat)
            try:
                gf.r2_1 = r2_1(y, yhat)
                gf.r2_2 = r2_2(y, yhat)
            except DegenerateDataError:
                pass
            try:
                gf.errors["ols"] = score_predictions(y, ols_fit(pts).fitted)
            except np.linalg.LinAlgError:
                pass
            if nw:
                bw = h * model.scale[:-1]
                gf.errors["nw"] = score_predictions(
                    y, nadaraya_watson(pts, pts[:, :-1], bw, kernel))
        groups.append(gf)
    return GofReport(groups, settings)
