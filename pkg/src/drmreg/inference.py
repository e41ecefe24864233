"""Large-sample inference for the fitted tilt parameters.

``sqrt(n) (theta_hat - theta_0)`` is asymptotically normal with covariance
built from two ``q(1+L)`` square matrices: ``S``, the limit of minus the
scaled Hessian of the profile log-likelihood, and ``V``, the variance of the
scaled score.  Every population integral ``int f dG`` is replaced by the
plug-in sum ``sum_i p_i f(t_i)`` over the combined data.

Matrices use the ``theta`` ordering ``(alpha_1..alpha_q, beta_1', ..., beta_q')``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import ModelParams, block_order, tilt_weights
from .estimation import FittedModel, SingularHessianError, _log_denominator

__all__ = [
    "AsymptoticCovariance",
    "WaldResult",
    "estimate_S",
    "estimate_V",
    "PluginMoments",
    "plugin_moments",
    "asymptotic_covariance",
    "wald_test",
    "standard_errors",
]


def _plugin(model: FittedModel, params: ModelParams | None):
    """Tilts ``w`` (n x m, last column ones), plug-in masses and ``1/D``."""
    params = model.params if params is None else params
    t = model.points
    w = np.column_stack([tilt_weights(params, t).w, np.ones(model.n)])
    log_d = _log_denominator(np.log(w[:, :-1]), np.log(model.rho))
    inv_d = np.exp(-log_d)
    if params is model.params:
        mass = model.p_hat
    else:
        mass = inv_d / model.sizes[-1]
    return params, t, w, mass, inv_d


def _to_theta(blocks: np.ndarray, q: int, dim: int) -> np.ndarray:
    idx = block_order(q, dim)
    return blocks.reshape(q * (1 + dim), q * (1 + dim))[np.ix_(idx, idx)]


def estimate_S(model: FittedModel, params: ModelParams | None = None) -> np.ndarray:
    """Plug-in estimate of ``S = lim -(1/n) grad grad' l``.

    Diagonal blocks are ``rho_j/(1+sum rho) int w_j d d' (1 + sum_{k!=j} rho_k w_k)/D dG``
    and off-diagonal blocks ``-rho_j rho_j'/(1+sum rho) int w_j w_j' d d'/D dG``
    with ``d = (1, t')'``, so the alpha/beta entries are the corresponding
    sub-blocks.
    """
    params, t, w, mass, inv_d = _plugin(model, params)
    q, dim = params.q, params.dimension
    rho = model.rho
    c = 1.0 / (1.0 + rho.sum())
    d = np.column_stack([np.ones(model.n), t])
    width = 1 + dim
    out = np.empty((q, width, q, width))
    for j in range(q):
        for k in range(j, q):
            if j == k:
                others = 1.0 + (w[:, :q] @ rho) - rho[j] * w[:, j]
                f = rho[j] * c * mass * w[:, j] * others * inv_d
            else:
                f = -rho[j] * rho[k] * c * mass * w[:, j] * w[:, k] * inv_d
            block = (d * f[:, None]).T @ d
            out[j, :, k, :] = block
            out[k, :, j, :] = block.T
    S = _to_theta(out, q, dim)
    return 0.5 * (S + S.T)


@dataclass(frozen=True)
class PluginMoments:
    """Integrals against the fitted reference distribution.

    With ``r`` running over all m groups (``w_m = 1``) and ``D`` the
    jump-mass denominator:

        E[j]     = int t w_j dG              (q x L)
        A0[j, r] = int w_j w_r / D dG        (m x m)
        A1[j, r] = int w_j w_r t / D dG      (m x m x L)
        A2[j, r] = int w_j w_r t t' / D dG   (m x m x L x L)
    """

    E: np.ndarray
    A0: np.ndarray
    A1: np.ndarray
    A2: np.ndarray


def plugin_moments(model: FittedModel, params: ModelParams | None = None) -> PluginMoments:
    params, t, w, mass, inv_d = _plugin(model, params)
    g = mass * inv_d                                       # dG / D
    return PluginMoments(
        E=(mass[:, None] * w[:, :params.q]).T @ t,
        A0=(w.T * g) @ w,
        A1=np.einsum("ij,ir,i,il->jrl", w, w, g, t),
        A2=np.einsum("ij,ir,i,il,ik->jrlk", w, w, g, t, t),
    )


def estimate_V(model: FittedModel, params: ModelParams | None = None) -> np.ndarray:
    """Plug-in estimate of ``V = Var[n^{-1/2} grad l]``.

    Assembled from the :class:`PluginMoments`.  The within-sample covariance
    of the observations enters the ``beta_j, beta_j`` block only.
    """
    params, t, w, mass, _ = _plugin(model, params)
    q, dim = params.q, params.dimension
    rho_all = np.append(model.rho, 1.0)
    c = 1.0 / (1.0 + model.rho.sum())
    n = model.n
    sizes = model.sizes
    mom = plugin_moments(model, params)
    E, A0, A1, A2 = mom.E, mom.A0, mom.A1, mom.A2

    aa = np.empty((q, q))
    ab = np.empty((q, q, dim))     # Cov(d l/d alpha_j, d l/d beta_j')
    bb = np.empty((q, q, dim, dim))
    for j in range(q):
        for k in range(q):
            coef = rho_all[j] * rho_all[k] * c
            aa[j, k] = coef * (A0[j, k] - np.sum(rho_all * A0[j, :] * A0[k, :]))
            ab[j, k] = coef * (A0[j, k] * E[k]
                               - np.einsum("r,r,rl->l", rho_all, A0[j, :], A1[k, :]))
            bb[j, k] = coef * (-A2[j, k]
                               + np.outer(E[j], A1[j, k])
                               + np.outer(A1[j, k], E[k])
                               - np.einsum("r,ra,rb->ab", rho_all, A1[j, :], A1[k, :]))
        mj = mass * w[:, j]
        cov_j = (t * mj[:, None]).T @ t - np.outer(E[j], E[j])
        bb[j, j] += sizes[j] / n * cov_j

    width = 1 + dim
    out = np.empty((q, width, q, width))
    out[:, 0, :, 0] = aa
    out[:, 0, :, 1:] = ab
    out[:, 1:, :, 0] = ab.transpose(1, 2, 0)
    out[:, 1:, :, 1:] = bb.transpose(0, 2, 1, 3)
    V = _to_theta(out, q, dim)
    return 0.5 * (V + V.T)


@dataclass(frozen=True)
class AsymptoticCovariance:
    """``S``, ``V`` and the covariance ``Sigma`` of ``sqrt(n)(theta_hat - theta_0)``.

    ``form`` records how Sigma was built: ``"sandwich"`` is ``S^-1 V S^-1``,
    ``"printed"`` is ``S^-1 V S``.
    """

    S: np.ndarray
    V: np.ndarray
    Sigma: np.ndarray
    n: int
    form: str = "sandwich"
    condition: float = 1.0

    @property
    def theta_cov(self) -> np.ndarray:
        """Estimated covariance of ``theta_hat`` itself (``Sigma / n``)."""
        return self.Sigma / self.n

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.Sigma), 0, None) / self.n)


def asymptotic_covariance(model: FittedModel, form: str = "sandwich",
                          params: ModelParams | None = None) -> AsymptoticCovariance:
    S = estimate_S(model, params)
    V = estimate_V(model, params)
    cond = float(np.linalg.cond(S))
    if not np.isfinite(cond) or cond > 1e13:
        raise SingularHessianError(f"S is singular (condition {cond:.3g})", cond)
    if cond > 1e8:
        warnings.warn(f"S is ill-conditioned (condition {cond:.3g})", RuntimeWarning)
    S_inv = np.linalg.inv(S)
    if form == "sandwich":
        Sigma = S_inv @ V @ S_inv
    elif form == "printed":
        Sigma = S_inv @ V @ S
    else:
        raise ValueError(f"form must be 'sandwich' or 'printed', got {form!r}")
    Sigma = 0.5 * (Sigma + Sigma.T)
    return AsymptoticCovariance(S, V, Sigma, model.n, form, cond)


def standard_errors(model: FittedModel, cov: AsymptoticCovariance | None = None) -> ModelParams:
    """Standard errors arranged like the parameters."""
    cov = cov or asymptotic_covariance(model)
    return ModelParams.from_vector(cov.se, model.q, model.dimension)


@dataclass(frozen=True)
class WaldResult:
    statistic: float
    dof: int
    pvalue: float


def wald_test(model: FittedModel, cov: AsymptoticCovariance | None = None,
              group=None) -> WaldResult:
    """Wald test of ``beta_j = 0`` for one tilted group, or of all ``beta = 0``.

    ``group=None`` gives the joint test on ``q L`` degrees of freedom.
    """
    cov = cov or asymptotic_covariance(model)
    q, dim = model.q, model.dimension
    if group is None:
        idx = np.arange(q, q + q * dim)
    else:
        j = model.group_index(group)
        if j == q:
            raise ValueError("the reference group has no tilt parameters to test")
        idx = q + j * dim + np.arange(dim)
    beta = model.params.as_vector()[idx]
    block = cov.theta_cov[np.ix_(idx, idx)]
    try:
        stat = float(beta @ np.linalg.solve(block, beta))
    except np.linalg.LinAlgError as exc:
        raise SingularHessianError("covariance block is singular",
                                   float(np.linalg.cond(block))) from exc
    stat = max(stat, 0.0)
    return WaldResult(stat, idx.size, float(stats.chi2.sf(stat, idx.size)))
