"""Empirical likelihood fitting of the density ratio model.

With the jump masses profiled out, the log empirical likelihood becomes a
function of the tilt parameters alone,

    l(theta) = -n log n_m - sum_i log D_i + sum_j sum_{i in group j} (alpha_j + beta_j' t_i),
    D_i = 1 + sum_k rho_k w_k(t_i),

which is concave.  Its maximiser is found by damped Newton iteration on the
score equations, started at ``theta = 0``.  The fitted jumps are

    p_i = 1 / (n_m D_i),

and they define the step estimate of the reference distribution function
and, after multiplying by ``w_j``, of every tilted group.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .core import (
    DRMError,
    DegenerateDataError,
    DimensionError,
    ModelParams,
    SampleSet,
    block_order,
    log_tilt,
    tilt_weights,
)

__all__ = [
    "FitOptions",
    "FittedModel",
    "StepCdf",
    "ConvergenceError",
    "ConvergenceWarning",
    "SingularHessianError",
    "fit",
    "p_hat",
    "profile_loglik",
    "score",
    "hessian",
    "reference_cdf",
    "tilted_cdf",
]

logger = logging.getLogger(__name__)


class ConvergenceError(DRMError, RuntimeError):
    pass


class ConvergenceWarning(UserWarning):
    pass


class SingularHessianError(DRMError, np.linalg.LinAlgError):
    def __init__(self, message, condition=np.inf):
        super().__init__(message)
        self.condition = condition


@dataclass(frozen=True)
class FitOptions:
    """Solver settings.

    ``tol`` bounds the largest absolute score component and ``ftol`` the
    relative change in log-likelihood between the last two iterates.  Both
    must hold for ``converged`` to be set.  The score is measured in the
    working coordinates, i.e. on standardized data when ``standardize`` is on.
    A stationary point whose smallest curvature (eigenvalue of ``-H/n``) is
    below ``min_curvature`` is not accepted: the score has only vanished
    because the groups are (quasi-)separated and the estimate has run off
    towards infinity.
    """

    tol: float = 1e-8
    ftol: float = 1e-12
    max_iter: int = 200
    max_halvings: int = 50
    standardize: bool = True
    max_condition: float = 1e13
    min_curvature: float = 1e-10
    raise_on_failure: bool = False


# -- likelihood pieces -------------------------------------------------------
#
# Everything below works on the "block" layout: a q x (1+L) array whose row j
# is (alpha_j, beta_j'), paired with a design matrix whose rows are (1, t_i').

def _log_denominator(eta, log_rho):
    """log D_i = log(1 + sum_k rho_k exp(eta_ik)), computed without overflow."""
    terms = np.column_stack([np.zeros(eta.shape[0]), eta + log_rho[None, :]])
    return logsumexp(terms, axis=1)


def _state(blocks, design, membership, log_rho, n_m):
    """Return (loglik, score, hessian, probs) for the block parameters.

    ``probs[i, j] = rho_j w_j(t_i) / D_i`` is the fitted probability that
    combined point i came from tilted group j.
    """
    q = blocks.shape[0]
    eta = design @ blocks.T
    log_d = _log_denominator(eta, log_rho)
    probs = np.exp(eta + log_rho[None, :] - log_d[:, None])
    own = membership < q
    loglik = (-design.shape[0] * np.log(n_m) - log_d.sum()
              + eta[own, membership[own]].sum())
    observed = np.stack([design[membership == j].sum(axis=0) for j in range(q)])
    grad = observed - probs.T @ design
    width = design.shape[1]
    hess = np.empty((q, width, q, width))
    for j in range(q):
        for k in range(j, q):
            c = probs[:, j] * ((j == k) - probs[:, k])
            block = -(design * c[:, None]).T @ design
            hess[j, :, k, :] = block
            hess[k, :, j, :] = block.T
    return loglik, grad, hess.reshape(q * width, q * width), probs


def _design(points):
    return np.column_stack([np.ones(points.shape[0]), points])


def _pieces(params: ModelParams, data: SampleSet):
    if params.dimension != data.dimension or params.q != data.q:
        raise DimensionError("parameter shape does not match the sample set")
    points, membership = data.combined()
    sizes = data.sizes
    return _state(params.blocks(), _design(points), membership,
                  np.log(data.rho), sizes[-1])


def profile_loglik(params: ModelParams, data: SampleSet) -> float:
    """Log empirical likelihood with the jump masses profiled out."""
    return float(_pieces(params, data)[0])


def score(params: ModelParams, data: SampleSet) -> np.ndarray:
    """Gradient of :func:`profile_loglik`, in ``theta`` order."""
    _, grad, _, _ = _pieces(params, data)
    return grad.ravel()[block_order(params.q, params.dimension)]


def hessian(params: ModelParams, data: SampleSet) -> np.ndarray:
    """Analytic Hessian of :func:`profile_loglik`, in ``theta`` order."""
    _, _, hess, _ = _pieces(params, data)
    idx = block_order(params.q, params.dimension)
    return hess[np.ix_(idx, idx)]


def p_hat(params: ModelParams, data: SampleSet) -> np.ndarray:
    """Jump masses ``p_i = (1/n_m) / (1 + sum_k rho_k w_k(t_i))``."""
    points, _ = data.combined()
    if params.dimension != data.dimension or params.q != data.q:
        raise DimensionError("parameter shape does not match the sample set")
    log_d = _log_denominator(log_tilt(params, points), np.log(data.rho))
    return np.exp(-np.log(data.sizes[-1]) - log_d)


# -- fitted model ------------------------------------------------------------

@dataclass(frozen=True)
class FittedModel:
    """Result of :func:`fit`.

    ``points`` is the combined data in group order ``(1, ..., q, reference)``
    and ``membership[i]`` the position of row i's group in ``labels``.
    ``center`` and ``scale`` are the pooled per-coordinate mean and standard
    deviation; kernel bandwidths downstream are expressed in these units.
    """

    params: ModelParams
    p_hat: np.ndarray
    points: np.ndarray
    membership: np.ndarray
    labels: tuple
    rho: np.ndarray
    log_lik: float
    converged: bool
    iterations: int
    grad_norm: float
    center: np.ndarray
    scale: np.ndarray
    standardized: bool = True

    @property
    def q(self) -> int:
        return self.params.q

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.membership, minlength=self.q + 1)

    @property
    def reference(self) -> str:
        return self.labels[-1]

    def group_index(self, group) -> int:
        """Resolve a group label, or a position in ``labels``, to that position."""
        if isinstance(group, str):
            if group not in self.labels:
                raise KeyError(f"unknown group {group!r}; have {list(self.labels)}")
            return self.labels.index(group)
        j = int(group)
        if not 0 <= j <= self.q:
            raise IndexError(f"group index {j} out of range 0..{self.q}")
        return j

    def group_points(self, group) -> np.ndarray:
        return self.points[self.membership == self.group_index(group)]

    def tilt(self, group) -> np.ndarray:
        """``w_j(t_i)`` over the combined points; all ones for the reference."""
        j = self.group_index(group)
        if j == self.q:
            return np.ones(self.n)
        return tilt_weights(self.params, self.points).w[:, j]

    def masses(self, group) -> np.ndarray:
        return self.tilt(group) * self.p_hat

    def sample_set(self) -> SampleSet:
        groups = [self.points[self.membership == j] for j in range(self.q + 1)]
        return SampleSet(groups, self.labels, reference=self.q)

    def constraint_residuals(self) -> np.ndarray:
        """``(sum p_i - 1, sum w_1 p_i - 1, ..., sum w_q p_i - 1)``."""
        sums = [self.p_hat.sum()] + [self.masses(j).sum() for j in range(self.q)]
        return np.asarray(sums) - 1.0


def _validate(data: SampleSet):
    q, dim, n = data.q, data.dimension, data.n
    if n < q * (1 + dim) + 1:
        raise DimensionError(
            f"n={n} observations cannot identify {q * (1 + dim)} parameters")
    points, _ = data.combined()
    spread = np.ptp(points, axis=0)
    flat = np.flatnonzero(spread == 0)
    if flat.size:
        raise DegenerateDataError(
            f"coordinate(s) {flat.tolist()} are constant across all data; "
            "their tilt coefficients are not identifiable")


def fit(data: SampleSet, opts: FitOptions | None = None, **overrides) -> FittedModel:
    """Fit the density ratio model by maximising the profile empirical likelihood.

    Parameters
    ----------
    data : SampleSet
    opts : FitOptions, optional
    **overrides
        Individual :class:`FitOptions` fields, e.g. ``fit(data, tol=1e-10)``.

    Returns
    -------
    FittedModel
        ``converged`` is False when ``max_iter`` was reached or the line search
        stalled before the tolerances were met; the best iterate is returned
        and a :class:`ConvergenceWarning` issued (or :class:`ConvergenceError`
        raised if ``raise_on_failure``).
    """
    opts = replace(opts or FitOptions(), **overrides)
    _validate(data)
    points, membership = data.combined()
    sizes = data.sizes
    q, dim = data.q, data.dimension
    log_rho = np.log(sizes[:-1] / sizes[-1])
    n_m = sizes[-1]

    center = points.mean(axis=0)
    scale = points.std(axis=0)
    if opts.standardize:
        work = (points - center) / scale
    else:
        work = points
    design = _design(work)

    blocks = np.zeros((q, 1 + dim))
    loglik, grad, hess, _ = _state(blocks, design, membership, log_rho, n_m)
    prev_loglik = None
    converged = False
    iterations = 0
    for iterations in range(1, opts.max_iter + 1):
        gmax = np.abs(grad).max()
        small_change = (prev_loglik is not None and
                        abs(loglik - prev_loglik) <= opts.ftol * max(1.0, abs(loglik)))
        if gmax <= opts.tol and small_change:
            converged = True
            iterations -= 1
            break
        cond = np.linalg.cond(hess)
        if not np.isfinite(cond) or cond > opts.max_condition:
            raise SingularHessianError(
                f"Hessian is singular or ill-conditioned (condition {cond:.3g})", cond)
        step = np.linalg.solve(hess, -grad.ravel()).reshape(blocks.shape)
        gnorm = np.linalg.norm(grad)
        lam = 1.0
        for _ in range(opts.max_halvings):
            trial = blocks + lam * step
            with np.errstate(over="ignore", invalid="ignore"):
                t_loglik, t_grad, t_hess, _ = _state(trial, design, membership, log_rho, n_m)
            if np.isfinite(t_loglik) and np.linalg.norm(t_grad) < gnorm:
                break
            lam *= 0.5
        else:
            # No step reduces the score norm: we are at the floating-point floor.
            converged = gmax <= opts.tol
            break
        prev_loglik = loglik
        blocks, loglik, grad, hess = trial, t_loglik, t_grad, t_hess
        logger.debug("iter %d: loglik=%.12g max|score|=%.3g step=%g",
                     iterations, loglik, np.abs(grad).max(), lam)
    grad_norm = float(np.abs(grad).max())
    separated = False
    if converged:
        curvature = np.linalg.eigvalsh(-hess).min() / data.n
        if curvature < opts.min_curvature:
            converged, separated = False, True

    if opts.standardize:
        beta = blocks[:, 1:] / scale
        alpha = blocks[:, 0] - beta @ center
    else:
        alpha, beta = blocks[:, 0], blocks[:, 1:]
    params = ModelParams(alpha.copy(), beta.copy())
    jumps = p_hat(params, data)

    if not converged:
        msg = (f"density ratio fit did not converge after {iterations} iterations "
               f"(max|score|={grad_norm:.3g})")
        if separated:
            msg = ("density ratio fit has no finite maximiser: the groups are "
                   "(quasi-)separated and the likelihood flattens out at infinity")
        if opts.raise_on_failure:
            raise ConvergenceError(msg)
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)

    return FittedModel(
        params=params,
        p_hat=jumps,
        points=points,
        membership=membership,
        labels=data.ordered_labels,
        rho=sizes[:-1] / sizes[-1],
        log_lik=float(loglik),
        converged=converged,
        iterations=iterations,
        grad_norm=grad_norm,
        center=center,
        scale=scale,
        standardized=opts.standardize,
    )


# -- step distribution functions ----------------------------------------------

@dataclass(frozen=True)
class StepCdf:
    """Distribution function with point masses at ``points``.

    ``F(t) = sum_i masses_i * I(points_i <= t)`` with ``<=`` taken
    componentwise.  Masses are not renormalised; ``total`` reports their sum.
    """

    points: np.ndarray
    masses: np.ndarray
    chunk: int = field(default=512, repr=False)

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        masses = np.asarray(self.masses, dtype=float)
        if masses.shape != (points.shape[0],):
            raise DimensionError("need one mass per support point")
        if np.any(masses < 0):
            raise ValueError("masses must be nonnegative")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "masses", masses)

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    def __call__(self, t):
        """Evaluate at one point (shape ``(L,)``) or many (shape ``(k, L)``)."""
        t = np.asarray(t, dtype=float)
        single = t.ndim <= 1
        queries = t.reshape(1, -1) if single else t
        if queries.shape[1] != self.points.shape[1]:
            raise DimensionError("query dimension does not match support points")
        out = np.empty(queries.shape[0])
        for start in range(0, queries.shape[0], self.chunk):
            block = queries[start:start + self.chunk]
            below = np.all(self.points[None, :, :] <= block[:, None, :], axis=2)
            out[start:start + self.chunk] = below @ self.masses
        return float(out[0]) if single else out


def reference_cdf(model: FittedModel) -> StepCdf:
    """Step estimate of the reference distribution function."""
    return StepCdf(model.points, model.p_hat)


def tilted_cdf(model: FittedModel, group) -> StepCdf:
    """Step estimate of a group's distribution function.

    Masses are ``w_j(t_i) p_i``; for the reference group this is
    :func:`reference_cdf`.
    """
    return StepCdf(model.points, model.masses(group))
