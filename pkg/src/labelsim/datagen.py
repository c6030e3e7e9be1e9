"""Seeded sampling of covariates and per-labeler labels.

Every sampling routine derives an independent RNG stream from
(seed, trial, purpose), so parallel trial generation stays reproducible.
"""

from __future__ import annotations

import zlib

import numpy as np

from .links import (
    CovariateDistribution,
    CovariateKind,
    ModelSpec,
    MultiLabelDataset,
    link_eval,
)

__all__ = [
    "stream_rng",
    "sample_covariates",
    "sample_labels",
    "sample_dataset",
    "majority_vote",
    "majority_vote_matrix",
]


def stream_rng(seed: int, trial: int = 0, purpose: str = "") -> np.random.Generator:
    """RNG for one (trial, purpose) stream under a master seed."""
    tag = zlib.crc32(purpose.encode()) & 0xFFFFFFFF
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial), tag]))


def sample_covariates(dist: CovariateDistribution, n: int, seed, trial: int = 0) -> np.ndarray:
    """Draw n i.i.d. covariate rows; deterministic given (seed, trial)."""
    if n < 1:
        raise ValueError("need n >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else stream_rng(seed, trial, "covariates")
    if dist.kind is CovariateKind.ISOTROPIC_GAUSSIAN:
        return rng.standard_normal((n, dist.d))
    u = dist.direction
    z = rng.gamma(dist.beta, 1.0, size=n) * rng.choice([-1.0, 1.0], size=n)
    w = rng.standard_normal((n, dist.d))
    w -= np.outer(w @ u, u)
    return np.outer(z, u) + w


def sample_labels(model: ModelSpec, X: np.ndarray, seed, trial: int = 0) -> np.ndarray:
    """Draw Y_ij = +1 with probability sigma_j(<theta*, x_i>), i.i.d. given X."""
    X = np.asarray(X, dtype=float)
    if X.shape[1] != model.d:
        raise ValueError("covariate dimension mismatch")
    rng = seed if isinstance(seed, np.random.Generator) else stream_rng(seed, trial, "labels")
    margins = X @ model.theta_star
    n, m = X.shape[0], model.m
    Y = np.empty((n, m), dtype=np.int8)
    uniforms = rng.random((n, m))
    for j, link in enumerate(model.links):
        p = link_eval(link, margins)
        Y[:, j] = np.where(uniforms[:, j] < p, 1, -1)
    return Y


def sample_dataset(model: ModelSpec, n: int, seed: int, trial: int = 0) -> MultiLabelDataset:
    X = sample_covariates(model.covariates, n, seed, trial)
    Y = sample_labels(model, X, seed, trial)
    return MultiLabelDataset(X=X, Y=Y)


def majority_vote(y_row, seed, trial: int = 0) -> int:
    """Sign of the label sum, with exact ties broken by a seeded fair coin."""
    y_row = np.asarray(y_row)
    s = int(y_row.sum())
    if s != 0:
        return 1 if s > 0 else -1
    rng = seed if isinstance(seed, np.random.Generator) else stream_rng(seed, trial, "tiebreak")
    return 1 if rng.random() < 0.5 else -1


def majority_vote_matrix(Y: np.ndarray, seed, trial: int = 0) -> np.ndarray:
    """Row-wise majority labels for an n x m label matrix; one coin per tied row."""
    Y = np.asarray(Y)
    sums = Y.sum(axis=1)
    out = np.sign(sums).astype(np.int8)
    ties = out == 0
    if np.any(ties):
        rng = seed if isinstance(seed, np.random.Generator) else stream_rng(seed, trial, "tiebreak")
        out[ties] = np.where(rng.random(int(ties.sum())) < 0.5, 1, -1)
    return out
