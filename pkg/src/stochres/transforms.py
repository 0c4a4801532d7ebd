"""Subset-lattice transforms between bitstring probabilities and product moments.

The moment for mask ``S`` is the expectation of the product of the bits in
``S``, which for a probability vector ``p`` equals ``sum_{k superset of S}
p[k]``. Computing all ``2**n`` moments at once is the superset-sum (zeta)
transform; the inverse is its Moebius transform. Both run in O(n * 2**n).

Mask convention: mask bit ``j`` (weight ``2**j``) refers to the register bit
whose weight in the bitstring index is also ``2**j``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import NegativeProbability
from .signals import MODE_MOMENT, SignalMatrix

DENSE_MAX_BITS = 14


def subset_mask(bits, n: int) -> int:
    """Mask for the product of the given register bits (big-endian indices)."""
    return sum(1 << (n - 1 - int(b)) for b in bits)


def _check_dense(n: int) -> None:
    if n > DENSE_MAX_BITS:
        raise ValueError(
            f"dense transforms limited to n <= {DENSE_MAX_BITS}; "
            "pass an explicit mask list instead"
        )


def zeta_superset(values: np.ndarray, n: int) -> np.ndarray:
    """In O(n * 2**n), replace values[m] with sum over supersets of m.

    Works on the last axis, so a (T, 2**n) matrix transforms row-wise.
    """
    _check_dense(n)
    out = np.array(values, dtype=float, copy=True)
    shape = out.shape[:-1] + (2,) * n
    t = out.reshape(shape)
    for axis in range(len(shape) - n, len(shape)):
        lo = [slice(None)] * len(shape)
        hi = [slice(None)] * len(shape)
        lo[axis], hi[axis] = 0, 1
        t[tuple(lo)] += t[tuple(hi)]
    return t.reshape(values.shape)


def mobius_superset(values: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`zeta_superset`."""
    _check_dense(n)
    out = np.array(values, dtype=float, copy=True)
    shape = out.shape[:-1] + (2,) * n
    t = out.reshape(shape)
    for axis in range(len(shape) - n, len(shape)):
        lo = [slice(None)] * len(shape)
        hi = [slice(None)] * len(shape)
        lo[axis], hi[axis] = 0, 1
        t[tuple(lo)] -= t[tuple(hi)]
    return t.reshape(values.shape)


def moments_from_probabilities(probs: np.ndarray, n: int) -> np.ndarray:
    """All 2**n product moments of a probability row (or rows)."""
    return zeta_superset(np.asarray(probs, dtype=float), n)


def probabilities_from_moments(moments: np.ndarray, n: int,
                               tol: float = 1e-10) -> np.ndarray:
    """Invert :func:`moments_from_probabilities`.

    Raises NegativeProbability when the inversion produces an entry below
    ``-tol``, which signals an inconsistent moment vector.
    """
    moments = np.asarray(moments, dtype=float)
    empty = moments[..., 0]
    if np.max(np.abs(empty - 1.0)) > 1e-9:
        raise ValueError("moment for the empty mask must be 1")
    probs = mobius_superset(moments, n)
    if np.min(probs) < -tol:
        raise NegativeProbability(
            f"inverted probabilities reach {np.min(probs):.3g}; moments inconsistent"
        )
    return probs


def moments_for_masks(probs: np.ndarray, masks: Sequence[int], n: int) -> np.ndarray:
    """Moments for an explicit mask list, without a dense 2**n vector.

    Intended for n beyond the dense limit when only a few product signals
    are needed.
    """
    probs = np.asarray(probs, dtype=float)
    idx = np.arange(probs.shape[-1], dtype=np.int64)
    out = np.empty(probs.shape[:-1] + (len(masks),))
    for j, m in enumerate(masks):
        sel = (idx & int(m)) == int(m)
        out[..., j] = probs[..., sel].sum(axis=-1)
    return out


def moments_from_samples(samples: np.ndarray, masks: Sequence[int]) -> np.ndarray:
    """Empirical product moments straight from sampled bitstrings.

    ``samples`` is any array of bitstring indices; for each mask the result
    is the fraction of samples containing that mask.
    """
    samples = np.asarray(samples, dtype=np.int64)
    out = np.empty(len(masks))
    for j, m in enumerate(masks):
        m = int(m)
        out[j] = np.mean((samples & m) == m)
    return out


def signal_moments(sm: SignalMatrix) -> SignalMatrix:
    """Row-wise moment transform of a probability/frequency signal matrix."""
    data = moments_from_probabilities(sm.data, sm.n)
    out = SignalMatrix(data, MODE_MOMENT, sm.n,
                       labels=np.arange(2 ** sm.n, dtype=np.int64),
                       weights=sm.weights, shots=sm.shots)
    out.validate()
    return out
