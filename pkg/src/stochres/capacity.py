"""Reconstruction capacities, eigentask spectra, and total processing capacity.

Three routes to the same quantity are implemented and cross-checkable:

- ``capacity`` / ``total_capacity``: least-squares reconstruction of target
  functions from the readout signals, summed over an orthonormal target
  basis ("basis-sum").
- ``gram_matrices`` + ``eigentask_decomposition`` + ``ipc_spectral``: the
  spectrum of the generalized noise-to-signal matrix built from the
  input-averaged first and second moments of the readouts ("spectral").
- ``ipc_probability_rep``: the trace shortcut available when the signals
  are the bitstring probabilities themselves ("probability-trace").

In exact-probability mode with single-shot readout semantics the spectral
and probability-trace routes agree identically whenever no signal direction
falls below the rank tolerance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    BasisNotOrthonormal,
    DegenerateSignals,
    EmptyRank,
    MissingShotMetadata,
    NotPSD,
    ZeroTarget,
)
from .signals import MODE_EMPIRICAL, MODE_EXACT, SignalMatrix

logger = logging.getLogger(__name__)

DEFAULT_RANK_TOLERANCE = 1e-10
NUMERICAL_SLACK = 1e-9


def finite_time_threshold(rows: int) -> float:
    """Capacity floor 4/sqrt(T) below which estimates are treated as noise."""
    return 4.0 / math.sqrt(rows)


# ---------------------------------------------------------------------------
# single-target capacity
# ---------------------------------------------------------------------------

@dataclass
class CapacityReport:
    """Result of reconstructing one target from the signals."""

    capacity: float
    weights: np.ndarray
    rows: int
    threshold: float
    below_threshold: bool
    clipped_by: float = 0.0
    dropped_columns: int = 0


def _resolve_signals(signals, weights):
    if isinstance(signals, SignalMatrix):
        data = signals.data
        if weights is None:
            weights = signals.row_weights()
    else:
        data = np.asarray(signals, dtype=float)
    if weights is None:
        weights = np.full(data.shape[0], 1.0 / data.shape[0])
    else:
        weights = np.asarray(weights, dtype=float)
        weights = weights / weights.sum()
    return data, weights


def capacity(signals, target, weights: Optional[np.ndarray] = None,
             threshold: Optional[float] = None) -> CapacityReport:
    """Capacity to reconstruct ``target`` linearly from the signal columns.

    Solves the weighted least-squares problem with a rank-revealing SVD
    factorization and returns ``1 - SSE/SST`` clipped into [0, 1]. Columns
    that are identically zero are dropped (and logged); a target with zero
    weighted energy raises ZeroTarget.
    """
    data, w = _resolve_signals(signals, weights)
    y = np.asarray(target, dtype=float)
    if y.shape != (data.shape[0],):
        raise ValueError("target length must match signal rows")
    sst = float(np.sum(w * y * y))
    if sst <= 0.0:
        raise ZeroTarget("target has zero weighted energy")

    keep = np.max(np.abs(data), axis=0) > 0.0
    dropped = int(np.sum(~keep))
    if dropped:
        logger.info("capacity: dropping %d all-zero signal columns", dropped)
    if not np.any(keep):
        raise DegenerateSignals("all signal columns are identically zero")
    x = data[:, keep]
    rows = data.shape[0]
    if rows < x.shape[1]:
        logger.warning("capacity: %d rows < %d columns, estimate will overfit",
                       rows, x.shape[1])

    sw = np.sqrt(w)
    sol, _, _, _ = np.linalg.lstsq(x * sw[:, None], y * sw, rcond=None)
    resid = y - x @ sol
    sse = float(np.sum(w * resid * resid))
    raw = 1.0 - sse / sst
    clipped = min(max(raw, 0.0), 1.0)
    clipped_by = raw - clipped
    if abs(clipped_by) > NUMERICAL_SLACK:
        logger.warning("capacity clipped by %.3g", clipped_by)

    thr = finite_time_threshold(rows) if threshold is None else threshold
    full_weights = np.zeros(data.shape[1])
    full_weights[keep] = sol
    return CapacityReport(
        capacity=clipped, weights=full_weights, rows=rows, threshold=thr,
        below_threshold=clipped < thr, clipped_by=clipped_by,
        dropped_columns=dropped,
    )


# ---------------------------------------------------------------------------
# gram matrices and eigentasks
# ---------------------------------------------------------------------------

def gram_matrices(signals: SignalMatrix):
    """Input-averaged first and second moment matrices (G1, G2).

    G1 is the input average of <X><X>^T and G2 the input average of <X X^T>
    under single-shot one-hot readout semantics: a single shot x is one-hot,
    so <x x^T> = diag(<x>). Exact mode uses the true probabilities;
    empirical mode plugs the observed frequencies into the same formulas
    (shot metadata required), so both estimates converge to the exact pair
    as shots and rows grow.
    """
    if signals.mode not in (MODE_EXACT, MODE_EMPIRICAL):
        raise ValueError("gram matrices need probability or frequency signals")
    if signals.mode == MODE_EMPIRICAL and signals.shots is None:
        raise MissingShotMetadata("empirical gram matrices need the shot count")
    w = signals.row_weights()
    x = signals.data
    g1 = (x * w[:, None]).T @ x
    g1 = 0.5 * (g1 + g1.T)
    g2 = np.diag(w @ x)
    return g1, g2


def shot_averaged_second_moment(g1: np.ndarray, g2: np.ndarray, shots: int) -> np.ndarray:
    """Second moment of an S-shot averaged readout.

    Averaging S one-hot shots divides the Bernoulli variance term by S:
    <f f^T> = G1 + (G2 - G1) / S. With shots = 1 this is G2 itself; as
    S grows the readout becomes noiseless and the pair (G1, result)
    approaches zero noise-to-signal ratios.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    return np.asarray(g1) + (np.asarray(g2) - np.asarray(g1)) / float(shots)


@dataclass
class EigentaskDecomposition:
    """Spectrum of the generalized noise-to-signal matrix.

    ``sigma_sq`` are the noise-to-signal ratios sorted ascending;
    ``eigentasks`` holds the matching orthonormal eigenvectors (columns) in
    the whitened signal basis; ``whitener`` maps whitened coordinates back
    to signal space, so signal-space readout weights for eigentask k are
    ``whitener @ eigentasks[:, k]``.
    """

    sigma_sq: np.ndarray
    eigentasks: np.ndarray
    retained_rank: int
    dropped_count: int
    rank_tolerance: float
    signal_dim: int
    whitener: np.ndarray
    clipped_negatives: int = 0

    def readout_weights(self, k: int) -> np.ndarray:
        return self.whitener @ self.eigentasks[:, k]


def eigentask_decomposition(g1: np.ndarray, g2: np.ndarray,
                            rank_tolerance: float = DEFAULT_RANK_TOLERANCE
                            ) -> EigentaskDecomposition:
    """Diagonalize the noise-to-signal matrix of the pair (G1, G2).

    G1 is spectrally decomposed; directions below ``rank_tolerance`` times
    the top eigenvalue are dropped; G2 is whitened by the retained part of
    G1; the eigenvalues of the whitened matrix minus one are the
    noise-to-signal ratios.
    """
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    if g1.shape != g2.shape or g1.shape[0] != g1.shape[1]:
        raise ValueError("G1 and G2 must be square matrices of equal size")
    g1 = 0.5 * (g1 + g1.T)
    g2 = 0.5 * (g2 + g2.T)

    evals, vecs = np.linalg.eigh(g1)
    top = float(evals[-1])
    if top <= 0.0:
        raise EmptyRank("G1 has no positive eigenvalues")
    if evals[0] < -1e-8 * top:
        raise NotPSD(f"G1 eigenvalue {evals[0]:.3g} below -1e-8 * max")
    g2_evals = np.linalg.eigvalsh(g2)
    if g2_evals[0] < -1e-8 * max(g2_evals[-1], 1e-300):
        raise NotPSD(f"G2 eigenvalue {g2_evals[0]:.3g} below -1e-8 * max")

    keep = evals >= rank_tolerance * top
    if not np.any(keep):
        raise EmptyRank("no eigenvalue above the rank tolerance")
    dropped = int(np.sum(~keep))
    whitener = vecs[:, keep] / np.sqrt(evals[keep])

    m = whitener.T @ g2 @ whitener
    m = 0.5 * (m + m.T)
    mu, tasks = np.linalg.eigh(m)
    sigma_sq = mu - 1.0

    clipped = int(np.sum((sigma_sq < 0.0) & (sigma_sq >= -1e-10)))
    sigma_sq = np.where((sigma_sq < 0.0) & (sigma_sq >= -1e-10), 0.0, sigma_sq)
    if np.any(sigma_sq < 0.0):
        logger.warning("noise-to-signal ratio below -1e-10: G2 does not dominate G1")

    order = np.argsort(sigma_sq)
    return EigentaskDecomposition(
        sigma_sq=sigma_sq[order],
        eigentasks=tasks[:, order],
        retained_rank=int(np.sum(keep)),
        dropped_count=dropped,
        rank_tolerance=rank_tolerance,
        signal_dim=g1.shape[0],
        whitener=whitener,
        clipped_negatives=clipped,
    )


# ---------------------------------------------------------------------------
# total capacity / IPC
# ---------------------------------------------------------------------------

@dataclass
class IPCReport:
    """Aggregate processing capacity with method provenance."""

    ipc_value: float
    method: str
    components: np.ndarray
    signal_count: int
    retained_rank: Optional[int] = None
    skipped_columns: int = 0
    truncation: Optional[dict] = None
    threshold: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "ipc": self.ipc_value,
            "method": self.method,
            "components": [float(c) for c in self.components],
            "signal_count": self.signal_count,
            "retained_rank": self.retained_rank,
            "skipped_columns": self.skipped_columns,
            "truncation": self.truncation,
            "threshold": self.threshold,
        }


def ipc_spectral(decomp: EigentaskDecomposition) -> IPCReport:
    """Total capacity from the eigentask spectrum: sum of 1/(1 + ratio)."""
    comps = 1.0 / (1.0 + decomp.sigma_sq)
    return IPCReport(
        ipc_value=float(np.sum(comps)),
        method="spectral",
        components=comps,
        signal_count=decomp.signal_dim,
        retained_rank=decomp.retained_rank,
    )


def ipc_probability_rep(signals: SignalMatrix,
                        weights: Optional[np.ndarray] = None) -> IPCReport:
    """Trace formula on probability signals: sum_k avg(p_k^2)/avg(p_k).

    Columns whose mean is exactly zero are skipped (and counted); nothing
    else is thresholded or zeroed.
    """
    if signals.mode != MODE_EXACT:
        raise ValueError("probability-trace needs exact-probability signals")
    data, w = _resolve_signals(signals, weights)
    means = w @ data
    seconds = w @ (data * data)
    keep = means > 0.0
    skipped = int(np.sum(~keep))
    if skipped:
        logger.info("probability-trace: skipping %d zero-mean columns", skipped)
    comps = seconds[keep] / means[keep]
    return IPCReport(
        ipc_value=float(np.sum(comps)),
        method="probability-trace",
        components=comps,
        signal_count=int(np.sum(keep)),
        skipped_columns=skipped,
    )


# ---------------------------------------------------------------------------
# orthonormal target basis
# ---------------------------------------------------------------------------

def _legendre_orthonormal(degree: int, x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Legendre polynomial of ``degree`` normalized to unit L2 norm under the
    uniform measure on [lo, hi]."""
    xin = (2.0 * x - (hi + lo)) / (hi - lo)
    coeffs = np.zeros(degree + 1)
    coeffs[degree] = 1.0
    return math.sqrt(2 * degree + 1) * np.polynomial.legendre.legval(xin, coeffs)


@dataclass
class TargetBasis:
    """Products of per-delay orthonormal polynomials of the drive history.

    Each generator is a multi-index ``(g_0, ..., g_D)``: the target at time
    t is the product over delays d of the degree-``g_d`` orthonormal
    polynomial evaluated at u(t - d). Indices are ordered graded
    lexicographically and truncated at ``max_delay`` and total degree
    ``max_degree``.
    """

    max_delay: int
    max_degree: int
    measure_kind: str
    lo: float = -1.0
    hi: float = 1.0
    indices: list = field(default_factory=list)

    def __post_init__(self):
        if not self.indices:
            self.indices = self._enumerate_indices()
        if self.measure_kind == "iid-uniform-binary" and self.max_degree > 1:
            raise ValueError("binary drive supports polynomial degree <= 1 only")

    def _enumerate_indices(self):
        slots = self.max_delay + 1
        found = []

        def rec(prefix, remaining):
            if len(prefix) == slots:
                found.append(tuple(prefix))
                return
            for g in range(remaining + 1):
                rec(prefix + [g], remaining - g)

        rec([], self.max_degree)
        found.sort(key=lambda idx: (sum(idx), idx))
        return found

    def __len__(self) -> int:
        return len(self.indices)

    def _phi(self, degree: int, x: np.ndarray) -> np.ndarray:
        if degree == 0:
            return np.ones_like(x)
        if self.measure_kind == "iid-uniform-binary":
            # fair coin on {0, 1}: the centered, unit-variance coordinate
            return 2.0 * x - 1.0
        return _legendre_orthonormal(degree, x, self.lo, self.hi)

    def evaluate(self, drives: np.ndarray) -> np.ndarray:
        """Target matrix with one row per time t >= max_delay.

        Row r corresponds to absolute time ``max_delay + r`` of ``drives``.
        """
        drives = np.asarray(drives, dtype=float)
        t_count = drives.size - self.max_delay
        if t_count < 1:
            raise ValueError("drive sequence shorter than max_delay")
        # cache per (delay, degree)
        cols = {}
        for idx in self.indices:
            for d, g in enumerate(idx):
                if g > 0 and (d, g) not in cols:
                    lagged = drives[self.max_delay - d:drives.size - d]
                    cols[(d, g)] = self._phi(g, lagged)
        out = np.ones((t_count, len(self.indices)))
        for j, idx in enumerate(self.indices):
            for d, g in enumerate(idx):
                if g > 0:
                    out[:, j] *= cols[(d, g)]
        return out

    def gram_error(self) -> float:
        """Max deviation of the basis Gram matrix from the identity.

        Orthonormality factorizes over delays for iid drives, so it is
        checked through one-dimensional quadrature (or exact enumeration for
        the binary drive) rather than Monte Carlo.
        """
        degrees = range(self.max_degree + 1)
        if self.measure_kind == "iid-uniform-binary":
            xs = np.array([0.0, 1.0])
            ws = np.array([0.5, 0.5])
        else:
            x, w = np.polynomial.legendre.leggauss(2 * self.max_degree + 2)
            xs = 0.5 * (self.hi + self.lo) + 0.5 * (self.hi - self.lo) * x
            ws = w / w.sum()
        vals = np.stack([self._phi(g, xs) for g in degrees])
        one_d = vals @ (ws[:, None] * vals.T)
        err = 0.0
        for a, ia in enumerate(self.indices):
            for b in range(a, len(self.indices)):
                ib = self.indices[b]
                prod = 1.0
                for d in range(self.max_delay + 1):
                    prod *= one_d[ia[d], ib[d]]
                target = 1.0 if a == b else 0.0
                err = max(err, abs(prod - target))
        return err


def build_target_basis(measure, max_delay: int, max_degree: int) -> TargetBasis:
    """Target basis matched to an :class:`InputMeasure`."""
    kind = measure.kind
    if kind == "quadrature-grid":
        kind = "iid-uniform-interval"
    return TargetBasis(max_delay, max_degree, kind, lo=measure.lo, hi=measure.hi)


def total_capacity(signals, basis: TargetBasis, drives: np.ndarray,
                   start: int, threshold: Optional[float] = None,
                   orthonormality_tol: float = 1e-6) -> IPCReport:
    """Sum of capacities over the truncated orthonormal target basis.

    ``drives`` is the full drive sequence; ``start`` is the absolute time of
    the first signal row (the washout length), which must be at least
    ``basis.max_delay``. Capacities below the finite-time threshold are
    reported but excluded from the total.
    """
    gram_err = basis.gram_error()
    if gram_err > orthonormality_tol:
        raise BasisNotOrthonormal(
            f"basis Gram deviates from identity by {gram_err:.3g}"
        )
    if start < basis.max_delay:
        raise ValueError("washout shorter than the basis max_delay")
    data, w = _resolve_signals(signals, None)
    targets = basis.evaluate(np.asarray(drives, dtype=float))
    offset = start - basis.max_delay
    targets = targets[offset:offset + data.shape[0]]
    if targets.shape[0] != data.shape[0]:
        raise ValueError("drive sequence does not cover the signal rows")

    thr = finite_time_threshold(data.shape[0]) if threshold is None else threshold
    caps = np.empty(len(basis))
    for j in range(targets.shape[1]):
        caps[j] = capacity(data, targets[:, j], weights=w, threshold=thr).capacity
    included = caps >= thr
    return IPCReport(
        ipc_value=float(np.sum(caps[included])),
        method="basis-sum",
        components=caps,
        signal_count=data.shape[1],
        truncation={"max_delay": basis.max_delay, "max_degree": basis.max_degree,
                    "targets": len(basis), "excluded_below_threshold": int(np.sum(~included))},
        threshold=thr,
    )
