"""Shared data types for the multi-sample density ratio model.

Each of the ``m = q + 1`` groups holds L-dimensional observations ordered as
``(x_1, ..., x_{L-1}, y)`` with the response last.  One group is the reference
(baseline) distribution ``g``; every other group ``j`` is modelled as an
exponential tilt of it,

    g_j(t) / g(t) = exp(alpha_j + beta_j' t).

Group order matters throughout the package: the non-reference groups keep the
order in which they were given and the reference is appended last, so the
combined data vector is ``t = (group_1, ..., group_q, reference)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "DRMError",
    "DimensionError",
    "DegenerateDataError",
    "NumericOverflowError",
    "SampleSet",
    "ModelParams",
    "TiltWeights",
    "tilt_weights",
    "log_tilt",
    "EXP_OVERFLOW",
]

# Largest exponent for which exp() is finite in double precision.
EXP_OVERFLOW = float(np.log(np.finfo(float).max))


class DRMError(Exception):
    """Base class for all package errors."""


class DimensionError(DRMError, ValueError):
    pass


class DegenerateDataError(DRMError, ValueError):
    pass


class NumericOverflowError(DRMError, FloatingPointError):
    """exp(alpha_j + beta_j' t_i) is not representable.

    ``index`` is the ``(i, j)`` pair (combined-data row, tilt column) of the
    first offending entry.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


def _as_group(values, dimension=None) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None] if dimension in (None, 1) else arr[None, :]
    if arr.ndim != 2:
        raise DimensionError(f"group data must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError("observations must be finite")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SampleSet:
    """The ``m`` labelled samples entering one density ratio fit.

    Parameters
    ----------
    groups : sequence of array_like
        One ``(n_i, L)`` array per group.  A 1-D array is read as ``L = 1``.
    labels : sequence of str, optional
        Group names; defaults to ``"0", "1", ...``.
    reference : int or str
        Position or label of the reference group.  Defaults to the last group.
    """

    groups: tuple
    labels: tuple = ()
    reference: int = -1

    def __init__(self, groups: Sequence, labels: Sequence[str] | None = None,
                 reference: int | str = -1):
        arrays = tuple(_as_group(g) for g in groups)
        if len(arrays) < 2:
            raise DimensionError("need at least two groups (m >= 2)")
        dims = {a.shape[1] for a in arrays}
        if len(dims) != 1:
            raise DimensionError(f"groups disagree on dimension: {sorted(dims)}")
        if any(a.shape[0] == 0 for a in arrays):
            raise DimensionError("every group must be nonempty")
        if labels is None:
            labels = [str(i) for i in range(len(arrays))]
        labels = tuple(str(s) for s in labels)
        if len(labels) != len(arrays) or len(set(labels)) != len(labels):
            raise DimensionError("labels must be unique, one per group")
        if isinstance(reference, str):
            if reference not in labels:
                raise DimensionError(f"unknown reference group {reference!r}")
            reference = labels.index(reference)
        reference = int(reference) % len(arrays)
        object.__setattr__(self, "groups", arrays)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "reference", reference)

    @classmethod
    def from_mapping(cls, groups: Mapping[str, np.ndarray], reference: str) -> "SampleSet":
        return cls(list(groups.values()), list(groups.keys()), reference)

    @property
    def dimension(self) -> int:
        return self.groups[0].shape[1]

    @property
    def m(self) -> int:
        return len(self.groups)

    @property
    def q(self) -> int:
        return len(self.groups) - 1

    @property
    def order(self) -> list[int]:
        """Group positions in combined-data order (reference last)."""
        return [i for i in range(self.m) if i != self.reference] + [self.reference]

    @property
    def ordered_labels(self) -> tuple:
        return tuple(self.labels[i] for i in self.order)

    @property
    def sizes(self) -> np.ndarray:
        """Group sizes ``(n_1, ..., n_q, n_m)`` in combined order."""
        return np.array([self.groups[i].shape[0] for i in self.order])

    @property
    def n(self) -> int:
        return int(self.sizes.sum())

    @property
    def rho(self) -> np.ndarray:
        sizes = self.sizes
        return sizes[:-1] / sizes[-1]

    def combined(self) -> tuple[np.ndarray, np.ndarray]:
        """Stack the groups into ``(t, membership)``.

        ``membership[i]`` is the combined-order group index of row ``i``
        (``0..q-1`` for the tilted groups, ``q`` for the reference).
        """
        order = self.order
        points = np.vstack([self.groups[i] for i in order])
        membership = np.repeat(np.arange(self.m), self.sizes)
        return points, membership


@dataclass(frozen=True)
class ModelParams:
    """Tilt parameters ``alpha`` (length q) and ``beta`` (q x L)."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim == 1:
            beta = beta.reshape(len(alpha), -1)
        if beta.ndim != 2 or beta.shape[0] != alpha.shape[0]:
            raise DimensionError(
                f"beta must be q x L with q={alpha.shape[0]}, got shape {beta.shape}")
        alpha.setflags(write=False)
        beta.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def q(self) -> int:
        return self.beta.shape[0]

    @property
    def dimension(self) -> int:
        return self.beta.shape[1]

    @classmethod
    def zeros(cls, q: int, dimension: int) -> "ModelParams":
        return cls(np.zeros(q), np.zeros((q, dimension)))

    @classmethod
    def from_vector(cls, theta, q: int, dimension: int) -> "ModelParams":
        """Inverse of :meth:`as_vector`."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (q * (1 + dimension),):
            raise DimensionError(f"theta must have length {q * (1 + dimension)}")
        return cls(theta[:q], theta[q:].reshape(q, dimension))

    def as_vector(self) -> np.ndarray:
        """``theta = (alpha_1..alpha_q, beta_1', ..., beta_q')'``."""
        return np.concatenate([self.alpha, self.beta.ravel()])

    def blocks(self) -> np.ndarray:
        """``q x (1 + L)`` array whose row j is ``(alpha_j, beta_j')``."""
        return np.column_stack([self.alpha, self.beta])


def block_order(q: int, dimension: int) -> np.ndarray:
    """Index map from the block layout to the ``theta`` layout.

    ``theta = blocks.ravel()[block_order(q, L)]``.
    """
    width = 1 + dimension
    alphas = np.arange(q) * width
    betas = (np.arange(q)[:, None] * width + 1 + np.arange(dimension)).ravel()
    return np.concatenate([alphas, betas])


@dataclass(frozen=True)
class TiltWeights:
    w: np.ndarray
    rho: np.ndarray = field(default_factory=lambda: np.empty(0))


def _check_dims(params: ModelParams, points: np.ndarray):
    if points.shape[1] != params.dimension:
        raise DimensionError(
            f"parameter dimension {params.dimension} != data dimension {points.shape[1]}")


def log_tilt(params: ModelParams, points) -> np.ndarray:
    """``n x q`` matrix of exponents ``alpha_j + beta_j' t_i``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    _check_dims(params, points)
    return params.alpha[None, :] + points @ params.beta.T


def tilt_weights(params: ModelParams, data: SampleSet | np.ndarray) -> TiltWeights:
    """Evaluate ``w_j(t_i) = exp(alpha_j + beta_j' t_i)`` on the combined data.

    ``data`` may also be a bare ``(n, L)`` array, in which case ``rho`` is
    returned empty.  Raises :class:`NumericOverflowError` instead of letting
    an entry saturate to ``inf``.
    """
    if isinstance(data, SampleSet):
        points, _ = data.combined()
        rho = data.rho
        if data.q != params.q:
            raise DimensionError(f"data has q={data.q} tilted groups, params has q={params.q}")
    else:
        points, rho = np.atleast_2d(np.asarray(data, dtype=float)), np.empty(0)
    eta = log_tilt(params, points)
    bad = ~(eta < EXP_OVERFLOW)
    if bad.any():
        i, j = map(int, np.argwhere(bad)[0])
        raise NumericOverflowError(
            f"exp overflow in tilt {j} at combined index {i} (exponent {eta[i, j]:.6g})",
            index=(i, j))
    return TiltWeights(np.exp(eta), np.asarray(rho, dtype=float))
