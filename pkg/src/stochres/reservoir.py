"""Input-driven stochastic bit circuits.

A reservoir here is a fixed sequence of local stochastic gates applied once
per time step to a register of ``n`` bits, with gate kernels that may depend
on a scalar drive ``u``. The exact state is a probability vector over all
``2**n`` bitstrings; the sampled state is an ensemble of bitstring
trajectories. Construction enforces physicality budgets: gate locality,
per-step depth, and a bound on how fast kernel entries may change with the
drive.

Bit conventions: bit ``i`` of bitstring index ``k`` is the coefficient of
``2**(n-1-i)``, i.e. indices read the bitstring left to right, and the state
vector is ordered ``p[0] = p_{00...0}`` through ``p[2**n - 1] = p_{11...1}``.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import rng as _rng
from .errors import (
    DepthViolation,
    DriveBoundViolation,
    DriveDerivativeViolation,
    EmptyAfterWashout,
    ExactModeOverflow,
    InsufficientTrials,
    LocalityViolation,
    MixedDimensions,
    NonfiniteDrive,
    StochasticityViolation,
)

logger = logging.getLogger(__name__)

EXACT_MODE_MAX_BITS = 14
DERIVATIVE_PROBE_POINTS = 256
ROW_SUM_TOL = 1e-12
DEFAULT_K_MAX = 2
DEFAULT_WASHOUT = 1000


def default_depth_bound(n: int) -> int:
    """Gates allowed per step: linear in the bit count."""
    return 4 * n


def default_derivative_bound(n: int) -> float:
    """Max |d(kernel entry)/du| allowed: linear in the bit count."""
    return 4.0 * max(n, 1)


# ---------------------------------------------------------------------------
# drive-dependent kernel entries
# ---------------------------------------------------------------------------

def _sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def eval_drive_fn(spec: dict, u):
    """Evaluate a drive-to-probability function.

    Supported forms:

    - ``{"type": "constant", "value": v}``
    - ``{"type": "poly", "coeffs": [c0, c1, ...]}`` -- polynomial in ``u``,
      clipped into [0, 1].
    - ``{"type": "logistic", "rate": b, "center": c, "lo": l, "hi": h}`` --
      ``l + (h - l) * sigmoid(b * (u - c))``.
    """
    kind = spec["type"]
    if kind == "constant":
        return np.clip(float(spec["value"]), 0.0, 1.0) * np.ones_like(np.asarray(u, dtype=float))
    if kind == "poly":
        coeffs = np.asarray(spec["coeffs"], dtype=float)
        val = np.polynomial.polynomial.polyval(np.asarray(u, dtype=float), coeffs)
        return np.clip(val, 0.0, 1.0)
    if kind == "logistic":
        lo = float(spec.get("lo", 0.0))
        hi = float(spec.get("hi", 1.0))
        rate = float(spec["rate"])
        center = float(spec.get("center", 0.0))
        return lo + (hi - lo) * _sigmoid(rate * (np.asarray(u, dtype=float) - center))
    raise ValueError(f"unknown drive function type: {kind!r}")


# ---------------------------------------------------------------------------
# gates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StochasticGate:
    """A stochastic circuit element acting on a few bits.

    Parameters
    ----------
    support : tuple of int
        Bit indices the gate acts on, in kernel axis order.
    kind : str
        One of ``constant``, ``permutation``, ``flip``, ``set``,
        ``asymmetric_flip``, ``controlled_flip``.
    params : dict
        Kind-specific parameters (see the ``*_gate`` constructors).
    derivative_bound : float, optional
        Per-gate override for the max allowed |d(entry)/du|.
    """

    support: tuple
    kind: str
    params: dict
    derivative_bound: Optional[float] = None

    @property
    def arity(self) -> int:
        return len(self.support)

    @property
    def is_static(self) -> bool:
        """True when the kernel does not depend on the drive."""
        if self.kind in ("constant", "permutation"):
            return True
        if self.kind == "asymmetric_flip":
            return (self.params["drive01"].get("type") == "constant"
                    and self.params["drive10"].get("type") == "constant")
        return self.params.get("drive", {}).get("type") == "constant"

    def kernel(self, u: float) -> np.ndarray:
        """Row-stochastic transition matrix of shape (2**arity, 2**arity)."""
        if self.kind == "constant":
            return np.asarray(self.params["matrix"], dtype=float)
        if self.kind == "permutation":
            perm = self.params["perm"]
            dim = len(perm)
            k = np.zeros((dim, dim))
            k[np.arange(dim), perm] = 1.0
            return k
        if self.kind == "asymmetric_flip":
            a = float(eval_drive_fn(self.params["drive01"], u))
            b = float(eval_drive_fn(self.params["drive10"], u))
            return np.array([[1.0 - a, a], [b, 1.0 - b]])
        p = float(eval_drive_fn(self.params["drive"], u))
        if self.kind == "flip":
            return np.array([[1.0 - p, p], [p, 1.0 - p]])
        if self.kind == "set":
            return np.array([[1.0 - p, p], [1.0 - p, p]])
        if self.kind == "controlled_flip":
            # support order is (control, target)
            return np.array(
                [
                    [1.0, 0.0, 0.0, 0.0],
                    [0.0, 1.0, 0.0, 0.0],
                    [0.0, 0.0, 1.0 - p, p],
                    [0.0, 0.0, p, 1.0 - p],
                ]
            )
        raise ValueError(f"unknown gate kind: {self.kind!r}")


def constant_gate(support, matrix) -> StochasticGate:
    return StochasticGate(tuple(support), "constant", {"matrix": np.asarray(matrix, dtype=float).tolist()})


def permutation_gate(support, perm) -> StochasticGate:
    return StochasticGate(tuple(support), "permutation", {"perm": [int(i) for i in perm]})


def identity_gate(bit: int) -> StochasticGate:
    return permutation_gate((bit,), [0, 1])


def flip_gate(bit: int, drive) -> StochasticGate:
    """Flip ``bit`` with probability given by ``drive`` (dict or constant)."""
    if not isinstance(drive, dict):
        drive = {"type": "constant", "value": float(drive)}
    return StochasticGate((int(bit),), "flip", {"drive": drive})


def set_gate(bit: int, drive) -> StochasticGate:
    """Resample ``bit`` to 1 with probability given by ``drive``."""
    if not isinstance(drive, dict):
        drive = {"type": "constant", "value": float(drive)}
    return StochasticGate((int(bit),), "set", {"drive": drive})


def asymmetric_flip_gate(bit: int, drive01, drive10) -> StochasticGate:
    """1-bit kernel with separate 0->1 and 1->0 transition probabilities.

    The state feeds back: the chain has memory whenever the two
    probabilities do not sum to one.
    """
    if not isinstance(drive01, dict):
        drive01 = {"type": "constant", "value": float(drive01)}
    if not isinstance(drive10, dict):
        drive10 = {"type": "constant", "value": float(drive10)}
    return StochasticGate((int(bit),), "asymmetric_flip",
                          {"drive01": drive01, "drive10": drive10})


def controlled_flip_gate(control: int, target: int, drive) -> StochasticGate:
    if not isinstance(drive, dict):
        drive = {"type": "constant", "value": float(drive)}
    return StochasticGate((int(control), int(target)), "controlled_flip", {"drive": drive})


def swap_gate(i: int, j: int) -> StochasticGate:
    return permutation_gate((i, j), [0, 2, 1, 3])


def cnot_gate(control: int, target: int) -> StochasticGate:
    return permutation_gate((control, target), [0, 1, 3, 2])


# ---------------------------------------------------------------------------
# state containers
# ---------------------------------------------------------------------------

@dataclass
class BitstringDistribution:
    """Probability vector over the 2**n bitstrings of an n-bit register."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.ndim != 1 or self.probs.size < 1:
            raise ValueError("probs must be a 1-D vector")
        n = int(round(math.log2(self.probs.size)))
        if 2 ** n != self.probs.size:
            raise ValueError("probs length must be a power of two")

    @property
    def n(self) -> int:
        return int(round(math.log2(self.probs.size)))

    def validate(self, tol: float = 1e-12) -> None:
        if np.any(self.probs < -tol):
            raise ValueError("negative probability entry")
        if abs(self.probs.sum() - 1.0) > tol:
            raise ValueError(f"probabilities sum to {self.probs.sum()!r}, not 1")

    @classmethod
    def uniform(cls, n: int) -> "BitstringDistribution":
        return cls(np.full(2 ** n, 1.0 / 2 ** n))

    @classmethod
    def point_mass(cls, n: int, index: int) -> "BitstringDistribution":
        p = np.zeros(2 ** n)
        p[index] = 1.0
        return cls(p)


@dataclass(frozen=True)
class InputMeasure:
    """Distribution of the scalar drive, with its own seed.

    Kinds: ``iid-uniform-interval`` on [lo, hi], ``iid-uniform-binary`` on
    {0, 1}, and ``quadrature-grid`` (Gauss-Legendre nodes on [lo, hi] with
    probability weights), the latter used for exact input averages.
    """

    kind: str
    lo: float = -1.0
    hi: float = 1.0
    order: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("iid-uniform-interval", "iid-uniform-binary", "quadrature-grid"):
            raise ValueError(f"unknown measure kind: {self.kind!r}")
        if not self.lo < self.hi:
            raise ValueError("need lo < hi")
        if self.kind == "quadrature-grid" and self.order < 2:
            raise ValueError("quadrature order must be >= 2")

    def quadrature(self):
        """Nodes and probability weights (weights sum to 1)."""
        x, w = np.polynomial.legendre.leggauss(self.order)
        nodes = 0.5 * (self.hi + self.lo) + 0.5 * (self.hi - self.lo) * x
        return nodes, w / w.sum()

    def draw(self, length: int, generator) -> np.ndarray:
        """Sample ``length`` iid drive values using ``generator``."""
        if self.kind == "iid-uniform-interval":
            return generator.uniform(self.lo, self.hi, size=length)
        if self.kind == "iid-uniform-binary":
            return generator.integers(0, 2, size=length).astype(float)
        nodes, weights = self.quadrature()
        return generator.choice(nodes, size=length, p=weights)

    def sequence(self, length: int, washout_length: int = DEFAULT_WASHOUT,
                 history_window: int = 1, stream_path=()) -> "InputSequence":
        """Build an :class:`InputSequence` of scalar drives from this measure.

        For ``quadrature-grid`` the sequence is the node grid itself (with
        per-row weights); ``length`` is ignored and washout must be 0.
        """
        if self.kind == "quadrature-grid":
            nodes, weights = self.quadrature()
            return InputSequence(nodes[:, None], washout_length=0,
                                 history_window=history_window, weights=weights)
        gen = _rng.stream(self.seed, *stream_path)
        values = self.draw(length, gen)[:, None]
        return InputSequence(values, washout_length=washout_length,
                             history_window=history_window)


@dataclass
class InputSequence:
    """Ordered drive inputs with washout and history-window metadata.

    ``values`` has shape (T, m). The scalar drive per step is the value
    itself for m == 1 and the Euclidean norm for m > 1. A flat 1-D array is
    taken to be a sequence of scalar drives.
    """

    values: np.ndarray
    washout_length: int = DEFAULT_WASHOUT
    history_window: int = 1
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[0] == 1 and self.values.shape[1] > 1:
            # accept a flat list of scalar drives
            self.values = self.values.T
        if not np.all(np.isfinite(self.values)):
            raise NonfiniteDrive("input values must be finite")
        if self.washout_length < 0:
            raise ValueError("washout_length must be >= 0")
        if self.history_window < 1:
            raise ValueError("history_window must be >= 1")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != (len(self),):
                raise ValueError("weights must have one entry per step")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def drives(self) -> np.ndarray:
        if self.values.shape[1] == 1:
            return self.values[:, 0]
        return np.linalg.norm(self.values, axis=1)

    def check_drive_bound(self, bound: float) -> None:
        mags = np.abs(self.drives)
        if np.any(mags > bound + 1e-12):
            raise DriveBoundViolation(
                f"drive magnitude {mags.max():.6g} exceeds bound {bound:.6g}"
            )

    def post_washout_weights(self) -> Optional[np.ndarray]:
        if self.weights is None:
            return None
        w = self.weights[self.washout_length:]
        return w / w.sum()


@dataclass
class ReservoirSpec:
    """Declarative description of one reservoir: register size, the gate
    sequence applied every step, and physicality budgets."""

    n: int
    gates: list
    initial_state: Optional[BitstringDistribution] = None
    k_max: int = DEFAULT_K_MAX
    depth_bound: Optional[int] = None
    derivative_bound: Optional[float] = None
    drive_domain: tuple = (-1.0, 1.0)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one bit")
        if self.initial_state is None:
            self.initial_state = BitstringDistribution.uniform(self.n)
        if self.depth_bound is None:
            self.depth_bound = default_depth_bound(self.n)
        if self.derivative_bound is None:
            self.derivative_bound = default_derivative_bound(self.n)

    def to_json(self) -> str:
        doc = {
            "n": self.n,
            "k_max": self.k_max,
            "depth_bound": self.depth_bound,
            "derivative_bound": self.derivative_bound,
            "drive_domain": list(self.drive_domain),
            "gates": [
                {
                    "support": list(g.support),
                    "kernel_kind": g.kind,
                    "params": g.params,
                    "derivative_bound": g.derivative_bound,
                }
                for g in self.gates
            ],
            "initial_state": self.initial_state.probs.tolist(),
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ReservoirSpec":
        doc = json.loads(text)
        gates = [
            StochasticGate(
                tuple(g["support"]), g["kernel_kind"], g["params"],
                g.get("derivative_bound"),
            )
            for g in doc["gates"]
        ]
        return cls(
            n=doc["n"],
            gates=gates,
            initial_state=BitstringDistribution(np.asarray(doc["initial_state"])),
            k_max=doc.get("k_max", DEFAULT_K_MAX),
            depth_bound=doc.get("depth_bound"),
            derivative_bound=doc.get("derivative_bound"),
            drive_domain=tuple(doc.get("drive_domain", (-1.0, 1.0))),
        )


@dataclass
class TrajectoryEnsemble:
    """Sampled bitstring trajectories: ``samples[s, t]`` is the register
    state of shot ``s`` after post-washout step ``t``."""

    samples: np.ndarray
    n: int
    seed_root: int
    washout_length: int = 0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.int64)
        if np.any(self.samples < 0) or np.any(self.samples >= 2 ** self.n):
            raise ValueError("sample indices out of range for n bits")

    @property
    def shots(self) -> int:
        return self.samples.shape[0]

    @property
    def steps(self) -> int:
        return self.samples.shape[1]

    @property
    def stream_ids(self) -> np.ndarray:
        return np.arange(self.shots, dtype=np.int64)

    def save(self, path) -> None:
        """Persist as raw row-major int64 plus a JSON sidecar."""
        path = Path(path)
        self.samples.astype("<i8").tofile(path)
        sidecar = {
            "n": self.n,
            "S": int(self.shots),
            "T": int(self.steps),
            "seed": int(self.seed_root),
            "washout": int(self.washout_length),
            "dtype": "<i8",
        }
        path.with_suffix(path.suffix + ".json").write_text(
            json.dumps(sidecar, sort_keys=True)
        )

    @classmethod
    def load(cls, path) -> "TrajectoryEnsemble":
        path = Path(path)
        sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        raw = np.fromfile(path, dtype="<i8").reshape(sidecar["S"], sidecar["T"])
        return cls(raw, sidecar["n"], sidecar["seed"], sidecar.get("washout", 0))


# ---------------------------------------------------------------------------
# validated reservoir
# ---------------------------------------------------------------------------

class Reservoir:
    """A validated reservoir ready for exact or sampled propagation.

    Create via :func:`build_reservoir`; construction re-checks all
    physicality budgets.
    """

    def __init__(self, spec: ReservoirSpec, k_max: int, depth_bound: int):
        self.spec = spec
        self.n = spec.n
        self.dim = 2 ** spec.n
        self.k_max = k_max
        self.depth_bound = depth_bound
        self._static_kernels = [
            g.kernel(0.0) if g.is_static else None for g in spec.gates
        ]

    @property
    def gates(self):
        return self.spec.gates

    def kernels(self, u: float):
        """Kernels of every gate at drive ``u`` (static ones cached)."""
        return [
            k if k is not None else g.kernel(u)
            for g, k in zip(self.spec.gates, self._static_kernels)
        ]


def _probe_grid(domain, points=DERIVATIVE_PROBE_POINTS):
    return np.linspace(domain[0], domain[1], points)


def _validate_gate(gate: StochasticGate, n: int, k_max: int,
                   derivative_bound: float, domain) -> None:
    if len(set(gate.support)) != gate.arity:
        raise LocalityViolation(f"gate support has repeated bits: {gate.support}")
    if gate.arity > k_max:
        raise LocalityViolation(
            f"gate touches {gate.arity} bits, locality budget is {k_max}"
        )
    if any(b < 0 or b >= n for b in gate.support):
        raise LocalityViolation(f"gate support {gate.support} outside register 0..{n - 1}")

    dim = 2 ** gate.arity
    grid = _probe_grid(domain)
    if gate.is_static:
        stack = gate.kernel(grid[0])[None, :, :]
    else:
        stack = np.stack([gate.kernel(u) for u in grid])
    if stack.shape[1:] != (dim, dim):
        raise StochasticityViolation(
            f"kernel shape {stack.shape[1:]} does not match support size {gate.arity}"
        )
    if np.any(stack < -ROW_SUM_TOL) or np.any(stack > 1 + ROW_SUM_TOL):
        raise StochasticityViolation("kernel entries outside [0, 1]")
    row_sums = stack.sum(axis=2)
    if np.max(np.abs(row_sums - 1.0)) > ROW_SUM_TOL:
        raise StochasticityViolation(
            f"kernel rows sum to 1 +/- {np.max(np.abs(row_sums - 1.0)):.3g}"
        )

    bound = gate.derivative_bound if gate.derivative_bound is not None else derivative_bound
    if not gate.is_static:
        # central differences over the probe grid
        du = grid[1] - grid[0]
        slopes = np.abs(stack[2:] - stack[:-2]) / (2 * du)
        max_slope = float(slopes.max()) if slopes.size else 0.0
        if max_slope > bound:
            raise DriveDerivativeViolation(
                f"kernel entry slope {max_slope:.4g} exceeds bound {bound:.4g}"
            )


def build_reservoir(spec: ReservoirSpec, k_max: Optional[int] = None,
                    depth_bound: Optional[int] = None) -> Reservoir:
    """Validate ``spec`` against its physicality budgets and return a handle.

    Raises
    ------
    LocalityViolation, DepthViolation, DriveDerivativeViolation,
    StochasticityViolation
    """
    k_max = spec.k_max if k_max is None else k_max
    depth_bound = spec.depth_bound if depth_bound is None else depth_bound
    if len(spec.gates) > depth_bound:
        raise DepthViolation(
            f"{len(spec.gates)} gates per step exceeds depth budget {depth_bound}"
        )
    for gate in spec.gates:
        _validate_gate(gate, spec.n, k_max, spec.derivative_bound, spec.drive_domain)
    spec.initial_state.validate(tol=1e-12)
    if spec.initial_state.n != spec.n:
        raise MixedDimensions("initial state size does not match n")
    return Reservoir(spec, k_max, depth_bound)


# ---------------------------------------------------------------------------
# exact propagation
# ---------------------------------------------------------------------------

def _apply_kernel_exact(state: np.ndarray, n: int, support, kernel: np.ndarray) -> np.ndarray:
    s = len(support)
    tensor = state.reshape((2,) * n)
    tensor = np.moveaxis(tensor, support, range(s))
    mat = tensor.reshape(2 ** s, -1)
    out = kernel.T @ mat
    out = out.reshape((2,) * n)
    out = np.moveaxis(out, range(s), support)
    return out.reshape(-1)


def step_exact(reservoir: Reservoir, state, u: float) -> np.ndarray:
    """One exact time step: apply every gate kernel at drive ``u``.

    ``state`` may be a :class:`BitstringDistribution` or a raw probability
    vector; the result is a probability vector.
    """
    if not np.isfinite(u):
        raise NonfiniteDrive(f"drive is {u!r}")
    if reservoir.n > EXACT_MODE_MAX_BITS:
        raise ExactModeOverflow(
            f"exact mode supports up to {EXACT_MODE_MAX_BITS} bits, got {reservoir.n}"
        )
    vec = state.probs if isinstance(state, BitstringDistribution) else np.asarray(state, dtype=float)
    if vec.size != reservoir.dim:
        raise MixedDimensions("state size does not match reservoir")
    for gate, kernel in zip(reservoir.gates, reservoir.kernels(float(u))):
        vec = _apply_kernel_exact(vec, reservoir.n, gate.support, kernel)
    return vec


def run_exact(reservoir: Reservoir, inputs: InputSequence) -> np.ndarray:
    """Propagate the exact distribution and return post-washout states.

    Output row ``t`` is the distribution after processing drive
    ``washout_length + t``. Each row is clipped to the simplex to absorb
    float drift over long runs.
    """
    drives = inputs.drives
    if len(inputs) <= inputs.washout_length:
        raise EmptyAfterWashout(
            f"sequence length {len(inputs)} <= washout {inputs.washout_length}"
        )
    inputs.check_drive_bound(max(abs(reservoir.spec.drive_domain[0]),
                                 abs(reservoir.spec.drive_domain[1])))
    state = reservoir.spec.initial_state.probs.copy()
    out = np.empty((len(inputs) - inputs.washout_length, reservoir.dim))
    for t, u in enumerate(drives):
        state = step_exact(reservoir, state, u)
        np.clip(state, 0.0, None, out=state)
        state /= state.sum()
        if t >= inputs.washout_length:
            out[t - inputs.washout_length] = state
    return out


# ---------------------------------------------------------------------------
# sampled propagation
# ---------------------------------------------------------------------------

def _gate_sampling_tables(reservoir: Reservoir, u: float):
    """Per-gate (bit shifts, cumulative kernel rows) for vectorized sampling."""
    tables = []
    n = reservoir.n
    for gate, kernel in zip(reservoir.gates, reservoir.kernels(u)):
        shifts = np.array([n - 1 - b for b in gate.support], dtype=np.int64)
        cdf = np.cumsum(kernel, axis=1)
        cdf[:, -1] = 1.0
        tables.append((shifts, cdf))
    return tables


def _sample_block(reservoir: Reservoir, drives, washout, shot_slice, seed,
                  out, step_tables):
    """Simulate shots [shot_slice] with per-shot Philox streams."""
    shot_ids = range(shot_slice.start, shot_slice.stop)
    gens = [_rng.stream(seed, s) for s in shot_ids]
    m = len(gens)
    n_gates = len(reservoir.gates)
    init = reservoir.spec.initial_state.probs
    init_cdf = np.cumsum(init)
    init_cdf[-1] = 1.0

    # one uniform for the initial state, then one per (step, gate)
    r0 = np.array([g.random() for g in gens])
    states = np.searchsorted(init_cdf, r0, side="right").astype(np.int64)
    np.clip(states, 0, reservoir.dim - 1, out=states)

    chunk = 512
    t0 = 0
    while t0 < len(drives):
        t1 = min(t0 + chunk, len(drives))
        # draws[i] has shape (t1 - t0, n_gates) for shot i
        draws = np.stack([g.random((t1 - t0, n_gates)) for g in gens])
        for t in range(t0, t1):
            tables = step_tables[t]
            for gi, (shifts, cdf) in enumerate(tables):
                s = len(shifts)
                sub = np.zeros(m, dtype=np.int64)
                for j, sh in enumerate(shifts):
                    sub |= ((states >> sh) & 1) << (s - 1 - j)
                r = draws[:, t - t0, gi]
                # index = #{j : cdf_j <= r}: half-open buckets, so states of
                # probability zero are never selected
                new_sub = (cdf[sub] <= r[:, None]).sum(axis=1)
                diff = sub ^ new_sub
                for j, sh in enumerate(shifts):
                    states ^= ((diff >> (s - 1 - j)) & 1) << sh
            if t >= washout:
                out[shot_slice, t - washout] = states
        t0 = t1


def sample_trajectories(reservoir: Reservoir, inputs: InputSequence, shots: int,
                        seed: int, threads: int = 1) -> TrajectoryEnsemble:
    """Draw ``shots`` independent trajectories.

    Every shot has its own counter-based stream keyed by (seed, shot index),
    so the result is bit-identical for any ``threads`` value and any block
    schedule. Per step, each gate consumes exactly one uniform per shot.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    drives = inputs.drives
    if len(inputs) <= inputs.washout_length:
        raise EmptyAfterWashout(
            f"sequence length {len(inputs)} <= washout {inputs.washout_length}"
        )
    if not np.all(np.isfinite(drives)):
        raise NonfiniteDrive("drive sequence contains non-finite values")
    inputs.check_drive_bound(max(abs(reservoir.spec.drive_domain[0]),
                                 abs(reservoir.spec.drive_domain[1])))

    steps_out = len(inputs) - inputs.washout_length
    out = np.empty((shots, steps_out), dtype=np.int64)
    step_tables = [_gate_sampling_tables(reservoir, float(u)) for u in drives]

    block = 256
    slices = [slice(s, min(s + block, shots)) for s in range(0, shots, block)]
    if threads <= 1 or len(slices) == 1:
        for sl in slices:
            _sample_block(reservoir, drives, inputs.washout_length, sl, seed,
                          out, step_tables)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_sample_block, reservoir, drives,
                            inputs.washout_length, sl, seed, out, step_tables)
                for sl in slices
            ]
            for f in futures:
                f.result()
    return TrajectoryEnsemble(out, reservoir.n, seed, inputs.washout_length)


# ---------------------------------------------------------------------------
# fading memory
# ---------------------------------------------------------------------------

def fading_memory_error(reservoir: Reservoir, h: int, measure: InputMeasure,
                        trials: int, resamples: int = 12,
                        total_window: Optional[int] = None, seed: int = 0) -> float:
    """Monte Carlo estimate of the error of the best h-window predictor.

    For each trial a recent h-step drive window is held fixed while the
    older history is redrawn; the spread of the resulting exact output
    probabilities is the part of the state the window fails to determine.
    Returns the mean over output components of that conditional variance,
    averaged over windows. Non-increasing in ``h`` up to Monte Carlo noise.
    """
    if h < 1:
        raise ValueError("history window must be >= 1")
    if trials < 10:
        raise InsufficientTrials(f"need at least 10 trials, got {trials}")
    total = total_window if total_window is not None else max(48, h + 32)
    if total < h:
        raise ValueError("total_window must be >= h")

    acc = 0.0
    for trial in range(trials):
        gen = _rng.stream(seed, trial)
        window = measure.draw(h, gen)
        finals = np.empty((resamples, reservoir.dim))
        for r in range(resamples):
            prefix = measure.draw(total - h, gen)
            state = reservoir.spec.initial_state.probs.copy()
            for u in prefix:
                state = step_exact(reservoir, state, u)
            for u in window:
                state = step_exact(reservoir, state, u)
            finals[r] = state
        acc += float(np.mean(np.var(finals, axis=0, ddof=1)))
    return acc / trials
