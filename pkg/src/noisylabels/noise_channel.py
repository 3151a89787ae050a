"""Label-noise transition channels.

A channel is a K x K row-stochastic matrix A with A[i, j] = P[Z = j+1 | Y = i+1]
(classes are 1-based in all public I/O, 0-based in the arrays themselves).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Inputs may come from file parsing; constructed outputs are exact arithmetic.
SIMPLEX_INPUT_TOL = 1e-9
SIMPLEX_OUTPUT_TOL = 1e-12
SINGULAR_DET_TOL = 1e-12


class ChannelError(ValueError):
    """Invalid channel construction or usage."""


class SingularChannelError(ChannelError):
    """Channel is not invertible at the requested noise level."""


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Validated row-stochastic label-noise channel."""

    k: int
    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[0] != rows.shape[1]:
            raise ChannelError(f"channel matrix must be square, got shape {rows.shape}")
        if self.k != rows.shape[0]:
            raise ChannelError(f"k={self.k} does not match matrix dimension {rows.shape[0]}")
        if self.k < 2:
            raise ChannelError(f"need at least 2 classes, got k={self.k}")
        if np.any(rows < 0.0) or np.any(rows > 1.0):
            bad = int(np.argwhere((rows < 0.0) | (rows > 1.0))[0][0])
            raise ChannelError(f"row {bad + 1} has an entry outside [0, 1]")
        sums = rows.sum(axis=1)
        off = np.abs(sums - 1.0)
        if np.any(off > SIMPLEX_INPUT_TOL):
            bad = int(np.argmax(off))
            raise ChannelError(f"row {bad + 1} sums to {sums[bad]:.12g}, expected 1")
        rows = rows.copy()
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    def row(self, label: int) -> np.ndarray:
        """Noise distribution of the observed label given true label (1-based)."""
        if not 1 <= label <= self.k:
            raise ChannelError(f"label {label} outside [1, {self.k}]")
        return self.rows[label - 1]


def build_symmetric(k: int, alpha: float) -> TransitionMatrix:
    """Symmetric channel: 1-alpha on the diagonal, alpha/(k-1) elsewhere."""
    _check_k_alpha(k, alpha)
    if alpha == breakdown_threshold(k):
        # exactly at the breakdown point all entries coincide at 1/k; writing
        # it directly keeps the output exactly uniform instead of off by one ulp
        return TransitionMatrix(k, np.full((k, k), 1.0 / k))
    rows = np.full((k, k), alpha / (k - 1))
    np.fill_diagonal(rows, 1.0 - alpha)
    return TransitionMatrix(k, rows)


def build_shift(k: int, alpha: float) -> TransitionMatrix:
    """Shift channel: class i flipped to (i+1) mod k with probability alpha."""
    _check_k_alpha(k, alpha)
    rows = np.zeros((k, k))
    idx = np.arange(k)
    rows[idx, idx] = 1.0 - alpha
    rows[idx, (idx + 1) % k] += alpha
    return TransitionMatrix(k, rows)


def build_general(rows) -> TransitionMatrix:
    """Validate an arbitrary square probability matrix as a channel."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] != rows.shape[1]:
        raise ChannelError(f"channel matrix must be square, got shape {rows.shape}")
    return TransitionMatrix(rows.shape[0], rows)


def breakdown_threshold(k: int) -> float:
    """Largest symmetric noise level preserving the posterior argmax: (k-1)/k."""
    if k < 2:
        raise ChannelError(f"need at least 2 classes, got k={k}")
    return (k - 1) / k


def _check_k_alpha(k: int, alpha: float):
    if k < 2:
        raise ChannelError(f"need at least 2 classes, got k={k}")
    if not 0.0 <= alpha <= 1.0:
        raise ChannelError(f"alpha={alpha} outside [0, 1]")


def _check_simplex(p: np.ndarray, k: int, tol: float = SIMPLEX_INPUT_TOL) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (k,):
        raise ChannelError(f"expected a length-{k} probability vector, got shape {p.shape}")
    if np.any(p < -tol) or abs(p.sum() - 1.0) > tol:
        raise ChannelError("vector is off the probability simplex")
    return p


def apply_to_posterior(p, A: TransitionMatrix) -> np.ndarray:
    """Noisy posterior q = p . A for a clean posterior p."""
    p = _check_simplex(p, A.k)
    return p @ A.rows


def invert_symmetric(q, alpha: float, k: int) -> np.ndarray:
    """Recover the clean posterior from a noisy one under a symmetric channel.

    p_j = (1 - alpha - alpha/(k-1))^(-1) * (q_j - alpha/(k-1)); only valid
    strictly below the breakdown threshold.
    """
    _check_k_alpha(k, alpha)
    if alpha >= breakdown_threshold(k):
        raise SingularChannelError(
            f"alpha={alpha} is at or above the breakdown threshold {(k - 1) / k:.6g}"
        )
    q = _check_simplex(q, k)
    coeff = 1.0 - alpha - alpha / (k - 1)
    return (q - alpha / (k - 1)) / coeff


@dataclass(frozen=True)
class InvertibilityResult:
    invertible: bool
    det_magnitude: float

    def __bool__(self) -> bool:
        return self.invertible


def is_invertible(A: TransitionMatrix) -> InvertibilityResult:
    """Whether the channel can be inverted, with |det A| as diagnostic."""
    det = abs(float(np.linalg.det(A.rows)))
    return InvertibilityResult(det > SINGULAR_DET_TOL, det)


def corrupt_labels(labels, A: TransitionMatrix, rng: np.random.Generator) -> np.ndarray:
    """Pass 1-based labels through the channel, one independent draw each.

    Inverse-CDF sampling over each row in natural category order, so results
    are bit-reproducible given the generator state.
    """
    labels = np.asarray(labels, dtype=int)
    if labels.size and (labels.min() < 1 or labels.max() > A.k):
        bad = labels[(labels < 1) | (labels > A.k)][0]
        raise ChannelError(f"label {bad} outside [1, {A.k}]")
    cdfs = np.cumsum(A.rows, axis=1)
    cdfs[:, -1] = 1.0  # guard against cumulative rounding at the top
    u = rng.random(labels.size)
    # vectorized right-bisect of each u into its label's row CDF
    out = (cdfs[labels - 1] <= u[:, None]).sum(axis=1) + 1
    return out.astype(int)


def load_channel(path) -> TransitionMatrix:
    """Read a channel from text: first line K, then K rows of K probabilities."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ChannelError(f"{path}: empty channel file")
    try:
        k = int(lines[0])
    except ValueError:
        raise ChannelError(f"{path}:1: expected the class count, got {lines[0]!r}") from None
    if len(lines) != k + 1:
        raise ChannelError(f"{path}: expected {k} matrix rows, found {len(lines) - 1}")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        try:
            row = [float(tok) for tok in line.split()]
        except ValueError:
            raise ChannelError(f"{path}:{i}: non-numeric entry") from None
        if len(row) != k:
            raise ChannelError(f"{path}:{i}: expected {k} entries, found {len(row)}")
        rows.append(row)
    try:
        return build_general(rows)
    except ChannelError as exc:
        raise ChannelError(f"{path}: {exc}") from None
