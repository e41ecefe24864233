import warnings

import numpy as np
import pytest

from drmreg.core import SampleSet

SIGMA2 = np.array([[3.0, 1.0], [1.0, 2.0]])
MU_CASE = np.array([0.0, 0.0])
MU_CTRL = np.array([1.0, 1.0])


def gaussian_tilt_oracle(mu_case, mu_ref, sigma):
    """Exact (alpha, beta) of log N(mu_case, sigma) - log N(mu_ref, sigma)."""
    prec = np.linalg.inv(sigma)
    beta = prec @ (mu_case - mu_ref)
    alpha = 0.5 * (mu_ref @ prec @ mu_ref - mu_case @ prec @ mu_case)
    return alpha, beta


def two_gaussian(rng, n_case, n_ref, mu_case=MU_CASE, mu_ref=MU_CTRL, sigma=SIGMA2):
    a = rng.multivariate_normal(mu_case, sigma, n_case)
    b = rng.multivariate_normal(mu_ref, sigma, n_ref)
    return SampleSet([a, b], ["case", "ctrl"], "ctrl")


def loglik_oracle(alpha, beta, groups):
    """Profile empirical log-likelihood, written out from its definition.

    ``groups`` lists the samples with the reference last; ``alpha`` has one
    entry and ``beta`` one row per non-reference sample.
    """
    t = np.vstack(groups)
    sizes = [len(g) for g in groups]
    n_ref = sizes[-1]
    denom = np.ones(len(t))
    for j in range(len(groups) - 1):
        denom += sizes[j] / n_ref * np.exp(alpha[j] + t @ beta[j])
    value = -np.sum(np.log(n_ref * denom))
    for j in range(len(groups) - 1):
        value += np.sum(alpha[j] + groups[j] @ beta[j])
    return value


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(autouse=True)
def _quiet_numpy():
    with np.errstate(all="raise", under="ignore"):
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            yield


def _grid_loglik(alpha, beta, groups):
    """Vectorised oracle for q = 1 over ``G`` candidate parameters."""
    case, ref = groups
    t = np.vstack(groups)
    rho = len(case) / len(ref)
    eta = alpha[:, None] + beta @ t.T
    value = -np.sum(np.log(len(ref) * (1.0 + rho * np.exp(eta))), axis=1)
    return value + len(case) * alpha + beta @ case.sum(axis=0)


def grid_search_mle(groups, bound=8.0, points=41, levels=7, limit=40.0):
    """Coarse-to-fine grid maximiser of the profile log-likelihood (q = 1).

    Whenever the best grid point lies on the edge of the current box the box is
    re-centred at the same resolution; it only shrinks once the best point is
    interior.  Returns ``None`` when the search walks past ``limit``, which
    signals a separated instance with no finite maximiser.
    """
    dim = groups[0].shape[1]
    center = np.zeros(1 + dim)
    half = bound
    level = 0
    while level < levels:
        axes = [np.linspace(c - half, c + half, points) for c in center]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 1 + dim)
        values = _grid_loglik(mesh[:, 0], mesh[:, 1:], groups)
        best = mesh[np.argmax(values)]
        on_edge = np.any(np.isclose(np.abs(best - center), half))
        center = best
        if np.abs(center).max() > limit:
            return None
        if not on_edge:
            half = 4 * (2 * half / (points - 1))
            level += 1
    return center
