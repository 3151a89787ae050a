"""Known-channel posterior corrections wrapped around fitted estimators."""
from __future__ import annotations

import numpy as np

from .estimators import PosteriorEstimate
from .noise_channel import (
    SINGULAR_DET_TOL,
    SingularChannelError,
    TransitionMatrix,
    breakdown_threshold,
    is_invertible,
)


def _clip_renormalize(P: np.ndarray) -> np.ndarray:
    """Clip negatives to zero and renormalize each row onto the simplex.

    Finite-sample estimates pushed through an inverse channel can leave the
    simplex; exact inputs pass through unchanged.
    """
    P = np.maximum(P, 0.0)
    sums = P.sum(axis=1, keepdims=True)
    # a row can only be all-zero if the input was degenerate; fall back to uniform
    bad = sums[:, 0] <= 0.0
    if np.any(bad):
        P[bad] = 1.0
        sums = P.sum(axis=1, keepdims=True)
    return P / sums


class _CorrectedPosterior(PosteriorEstimate):
    def __init__(self, est: PosteriorEstimate, transform, label: str, params: dict):
        super().__init__(est.k, {**est.meta, "mitigation": label, **params})
        self._est = est
        self._transform = transform

    def predict(self, X) -> np.ndarray:
        return _clip_renormalize(self._transform(self._est.predict(X)))


def correct_known_symmetric(
    est: PosteriorEstimate, alpha: float, k: int
) -> PosteriorEstimate:
    """Undo a known symmetric channel on the estimator's outputs.

    Applies the affine inverse q -> (q - alpha/(k-1)) / (1 - alpha - alpha/(k-1))
    entrywise, then clips and renormalizes. The map is strictly increasing below
    the breakdown threshold, so decisions are unchanged by construction.
    """
    if k != est.k:
        raise SingularChannelError(f"estimator has {est.k} classes, channel has {k}")
    if alpha >= breakdown_threshold(k):
        raise SingularChannelError(
            f"alpha={alpha} is at or above the breakdown threshold {(k - 1) / k:.6g}"
        )
    offset = alpha / (k - 1)
    coeff = 1.0 - alpha - offset

    def transform(Q):
        return (Q - offset) / coeff

    return _CorrectedPosterior(est, transform, "known-symmetric", {"alpha": alpha})


def correct_backward(est: PosteriorEstimate, A: TransitionMatrix) -> PosteriorEstimate:
    """Undo a known general channel by right-multiplying outputs with A^-1."""
    if A.k != est.k:
        raise SingularChannelError(f"estimator has {est.k} classes, channel has {A.k}")
    inv = is_invertible(A)
    if not inv:
        raise SingularChannelError(
            f"channel is singular (|det| = {inv.det_magnitude:.3g} <= {SINGULAR_DET_TOL})"
        )
    A_inv = np.linalg.inv(A.rows)

    def transform(Q):
        return Q @ A_inv

    return _CorrectedPosterior(est, transform, "backward", {})
