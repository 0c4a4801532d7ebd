"""Shared test utilities: random physical reservoirs and independent oracles."""

import numpy as np

from stochres.reservoir import (
    ReservoirSpec,
    constant_gate,
    controlled_flip_gate,
    flip_gate,
    set_gate,
    swap_gate,
)


def random_physical_reservoir(n, gen):
    """A random reservoir with full-rank signal span.

    Backbone: rotation register absorbing the drive through a random
    polynomial (slope kept away from zero so the injected bit really
    varies), random per-bit flip noise, and optional weak couplings. Every
    gate is at most 2-local with bounded drive derivatives.
    """
    gates = [swap_gate(i, i + 1) for i in range(n - 1)]
    c0 = gen.uniform(0.4, 0.6)
    c1 = gen.choice([-1.0, 1.0]) * gen.uniform(0.15, 0.3)
    c2 = gen.uniform(-0.08, 0.08)
    gates.append(set_gate(n - 1, {"type": "poly", "coeffs": [c0, c1, c2]}))
    if n >= 2 and gen.random() < 0.7:
        i, j = gen.choice(n, size=2, replace=False)
        gates.append(controlled_flip_gate(int(i), int(j), {
            "type": "logistic", "rate": gen.uniform(0.5, 2.0),
            "center": gen.uniform(-0.3, 0.3),
            "lo": 0.0, "hi": gen.uniform(0.1, 0.35),
        }))
    if n >= 2 and gen.random() < 0.5:
        i, j = gen.choice(n, size=2, replace=False)
        mu = gen.uniform(0.0, 0.2)
        kernel = (1 - mu) * np.eye(4) + mu * gen.dirichlet(np.ones(4) * 2.0, size=4)
        gates.append(constant_gate((int(i), int(j)), kernel))
    lam_hi = 0.08 if n <= 3 else 0.04
    for b in range(n):
        gates.append(flip_gate(b, gen.uniform(0.02, lam_hi)))
    return ReservoirSpec(n=n, gates=gates, drive_domain=(-1.0, 1.0),
                         depth_bound=4 * n + 4)


def dense_gate_matrix(n, support, kernel):
    """Full 2**n transition matrix of one gate, built by direct enumeration.

    Independent of the tensor-axis implementation: loops over all index
    pairs. Row-stochastic; propagation is new_p = T.T @ p.
    """
    dim = 2 ** n
    s = len(support)
    t = np.zeros((dim, dim))
    shifts = [n - 1 - b for b in support]
    for k in range(dim):
        sub = 0
        for pos, sh in enumerate(shifts):
            sub |= ((k >> sh) & 1) << (s - 1 - pos)
        for new_sub in range(2 ** s):
            k2 = k
            for pos, sh in enumerate(shifts):
                bit = (new_sub >> (s - 1 - pos)) & 1
                k2 = (k2 & ~(1 << sh)) | (bit << sh)
            t[k, k2] += kernel[sub, new_sub]
    return t


def dense_step_oracle(spec, state, u):
    """Apply one time step through dense matrices, gate by gate."""
    vec = np.asarray(state, dtype=float)
    for gate in spec.gates:
        t = dense_gate_matrix(spec.n, gate.support, gate.kernel(u))
        vec = t.T @ vec
    return vec


def brute_force_moments(probs, n):
    """Superset sums by explicit incidence, one mask at a time."""
    probs = np.asarray(probs, dtype=float)
    idx = np.arange(2 ** n)
    out = np.empty(2 ** n)
    for m in range(2 ** n):
        out[m] = probs[(idx & m) == m].sum()
    return out
