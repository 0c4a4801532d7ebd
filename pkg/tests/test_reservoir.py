"""Reservoir construction, exact propagation, sampling, and fading memory."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import stochres as sr
from stochres.errors import (
    DepthViolation,
    DriveDerivativeViolation,
    EmptyAfterWashout,
    InsufficientTrials,
    LocalityViolation,
    NonfiniteDrive,
    StochasticityViolation,
)
from stochres.reservoir import (
    BitstringDistribution,
    InputMeasure,
    InputSequence,
    ReservoirSpec,
    asymmetric_flip_gate,
    constant_gate,
    fading_memory_error,
    flip_gate,
    identity_gate,
    permutation_gate,
    sample_trajectories,
    set_gate,
)

from helpers import dense_step_oracle, random_physical_reservoir


# --- construction and validation -------------------------------------------

def test_build_identity_accepted():
    spec = ReservoirSpec(n=2, gates=[identity_gate(0)])
    res = sr.build_reservoir(spec)
    assert res.n == 2 and res.dim == 4


def test_build_rejects_locality_violation():
    big = constant_gate((0, 1, 2, 3), np.eye(16))
    spec = ReservoirSpec(n=4, gates=[big])
    with pytest.raises(LocalityViolation):
        sr.build_reservoir(spec, k_max=2)


def test_build_rejects_depth_violation():
    spec = ReservoirSpec(n=2, gates=[identity_gate(0)] * 9, depth_bound=8)
    with pytest.raises(DepthViolation):
        sr.build_reservoir(spec)


def test_build_rejects_drive_derivative_violation():
    # clip(u^20) has slope 20*u^19, hitting 20 at |u| = 1, above the 4n = 8
    # default budget at n = 2; the finite-difference probe must catch it.
    steep = flip_gate(0, {"type": "poly", "coeffs": [0.0] * 20 + [1.0]})
    spec = ReservoirSpec(n=2, gates=[steep], drive_domain=(-1.0, 1.0))
    with pytest.raises(DriveDerivativeViolation):
        sr.build_reservoir(spec)


def test_gentle_drive_passes_derivative_check():
    spec = ReservoirSpec(n=2, gates=[flip_gate(0, {"type": "poly", "coeffs": [0.5, 0.4]})])
    sr.build_reservoir(spec)


def test_build_rejects_non_stochastic_kernel():
    bad = constant_gate((0,), [[0.5, 0.6], [0.2, 0.8]])
    with pytest.raises(StochasticityViolation):
        sr.build_reservoir(ReservoirSpec(n=1, gates=[bad]))


# --- exact stepping ----------------------------------------------------------

def test_step_identity_keeps_state():
    res = sr.build_reservoir(ReservoirSpec(n=2, gates=[identity_gate(0), identity_gate(1)]))
    state = np.array([0.1, 0.2, 0.3, 0.4])
    out = sr.step_exact(res, state, 0.3)
    np.testing.assert_allclose(out, state, atol=1e-15)


def test_step_single_bit_flip():
    res = sr.build_reservoir(ReservoirSpec(n=1, gates=[flip_gate(0, 0.3)]))
    out = sr.step_exact(res, np.array([1.0, 0.0]), 0.0)
    np.testing.assert_allclose(out, [0.7, 0.3], atol=1e-15)


def test_step_matches_dense_matrix_oracle():
    gen = np.random.default_rng(12)
    gates = []
    for _ in range(5):
        i, j = gen.choice(4, size=2, replace=False)
        gates.append(constant_gate((int(i), int(j)), gen.dirichlet(np.ones(4), size=4)))
    gates.append(flip_gate(2, {"type": "poly", "coeffs": [0.4, 0.3]}))
    spec = ReservoirSpec(n=4, gates=gates)
    res = sr.build_reservoir(spec)
    state = gen.dirichlet(np.ones(16))
    for u in (-0.8, 0.0, 0.65):
        expected = dense_step_oracle(spec, state, u)
        got = sr.step_exact(res, state, u)
        assert np.max(np.abs(got - expected)) < 1e-12


def test_step_rejects_nonfinite_drive():
    res = sr.build_reservoir(ReservoirSpec(n=1, gates=[flip_gate(0, 0.2)]))
    with pytest.raises(NonfiniteDrive):
        sr.step_exact(res, np.array([1.0, 0.0]), float("nan"))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 3))
def test_step_preserves_simplex(seed, n):
    gen = np.random.default_rng(seed)
    spec = random_physical_reservoir(n, gen)
    res = sr.build_reservoir(spec)
    state = gen.dirichlet(np.ones(2 ** n))
    out = sr.step_exact(res, state, float(gen.uniform(-1, 1)))
    assert np.all(out >= -1e-13)
    assert abs(out.sum() - 1.0) < 1e-12


# --- running sequences -------------------------------------------------------

def test_run_constant_identity_reservoir():
    init = BitstringDistribution(np.array([0.2, 0.3, 0.4, 0.1]))
    res = sr.build_reservoir(ReservoirSpec(n=2, gates=[identity_gate(0)], initial_state=init))
    seq = InputSequence(np.zeros((7, 1)), washout_length=2)
    out = sr.run_exact(res, seq)
    assert out.shape == (5, 4)
    np.testing.assert_allclose(out, np.tile(init.probs, (5, 1)), atol=1e-14)


def test_run_memoryless_ignores_earlier_inputs():
    gates = [set_gate(0, {"type": "poly", "coeffs": [0.5, 0.25]}),
             set_gate(1, {"type": "poly", "coeffs": [0.5, -0.25]})]
    res = sr.build_reservoir(ReservoirSpec(n=2, gates=gates))
    gen = np.random.default_rng(0)
    drives = gen.uniform(-1, 1, 10)
    seq_a = InputSequence(drives[:, None], washout_length=0)
    shuffled = drives.copy()
    shuffled[:-1] = shuffled[:-1][::-1]
    seq_b = InputSequence(shuffled[:, None], washout_length=0)
    out_a = sr.run_exact(res, seq_a)
    out_b = sr.run_exact(res, seq_b)
    np.testing.assert_allclose(out_a[-1], out_b[-1], atol=1e-14)


def test_run_equals_iterated_steps():
    gen = np.random.default_rng(5)
    spec = random_physical_reservoir(3, gen)
    res = sr.build_reservoir(spec)
    drives = gen.uniform(-1, 1, 12)
    seq = InputSequence(drives[:, None], washout_length=0)
    out = sr.run_exact(res, seq)
    state = spec.initial_state.probs.copy()
    for t, u in enumerate(drives):
        state = sr.step_exact(res, state, u)
        np.clip(state, 0.0, None, out=state)
        state /= state.sum()
        np.testing.assert_array_equal(out[t], state)


def test_run_mixing_matches_dense_product_oracle():
    gen = np.random.default_rng(77)
    gates = [constant_gate((0, 1), gen.dirichlet(np.ones(4), size=4)),
             flip_gate(0, {"type": "poly", "coeffs": [0.3, 0.2]})]
    spec = ReservoirSpec(n=2, gates=gates)
    res = sr.build_reservoir(spec)
    drives = gen.uniform(-1, 1, 6)
    out = sr.run_exact(res, InputSequence(drives[:, None], washout_length=0))
    state = spec.initial_state.probs.copy()
    for t, u in enumerate(drives):
        state = dense_step_oracle(spec, state, u)
        assert np.max(np.abs(out[t] - state)) < 1e-12


def test_run_requires_post_washout_steps():
    res = sr.build_reservoir(ReservoirSpec(n=1, gates=[flip_gate(0, 0.2)]))
    with pytest.raises(EmptyAfterWashout):
        sr.run_exact(res, InputSequence(np.zeros((3, 1)), washout_length=3))


# --- sampling ----------------------------------------------------------------

def test_sampling_deterministic_circuit_matches_exact():
    # all kernels 0/1 and a point-mass start: every shot must retrace the
    # exact trajectory
    gates = [permutation_gate((0, 1), [3, 2, 0, 1])]
    init = BitstringDistribution.point_mass(2, 1)
    spec = ReservoirSpec(n=2, gates=gates, initial_state=init)
    res = sr.build_reservoir(spec)
    seq = InputSequence(np.zeros((9, 1)), washout_length=0)
    exact_states = np.argmax(sr.run_exact(res, seq), axis=1)
    ens = sample_trajectories(res, seq, shots=11, seed=1)
    assert np.array_equal(ens.samples, np.tile(exact_states, (11, 1)))


def test_sampling_binomial_concentration():
    res = sr.build_reservoir(ReservoirSpec(
        n=1, gates=[set_gate(0, 0.5)],
        initial_state=BitstringDistribution.point_mass(1, 0)))
    seq = InputSequence(np.zeros((1, 1)), washout_length=0)
    shots = 10_000
    ens = sample_trajectories(res, seq, shots=shots, seed=3)
    freq = ens.samples.mean()
    assert abs(freq - 0.5) <= 3.0 * np.sqrt(0.25 / shots)


def test_sampling_thread_count_invariance():
    gen = np.random.default_rng(8)
    spec = random_physical_reservoir(3, gen)
    res = sr.build_reservoir(spec)
    seq = InputSequence(gen.uniform(-1, 1, (30, 1)), washout_length=4)
    a = sample_trajectories(res, seq, shots=700, seed=42, threads=1)
    b = sample_trajectories(res, seq, shots=700, seed=42, threads=8)
    assert np.array_equal(a.samples, b.samples)
    assert a.seed_root == b.seed_root == 42


def test_sampled_frequencies_concentrate_around_exact():
    # over seeds and cells, |freq - p| <= 5 sigma in at least 99% of cells
    gen = np.random.default_rng(21)
    spec = random_physical_reservoir(2, gen)
    res = sr.build_reservoir(spec)
    seq = InputSequence(gen.uniform(-1, 1, (15, 1)), washout_length=3)
    exact = sr.run_exact(res, seq)
    shots = 2000
    ok = total = 0
    for seed in range(6):
        ens = sample_trajectories(res, seq, shots=shots, seed=seed)
        freqs = sr.empirical_probabilities(ens).data
        sigma = np.sqrt(exact * (1 - exact) / shots)
        ok += np.sum(np.abs(freqs - exact) <= 5 * sigma + 1e-12)
        total += exact.size
    assert ok / total >= 0.99


# --- fading memory ----------------------------------------------------------

def test_fading_memory_zero_for_input_independent_reservoir():
    gates = [constant_gate((0,), [[0.7, 0.3], [0.4, 0.6]])]
    res = sr.build_reservoir(ReservoirSpec(n=1, gates=gates))
    measure = InputMeasure("iid-uniform-interval", -1, 1, seed=0)
    for h in (1, 4):
        err = fading_memory_error(res, h, measure, trials=10, resamples=6,
                                  total_window=24, seed=1)
        assert err < 1e-28


def test_fading_memory_zero_at_h1_for_memoryless_reservoir():
    res = sr.build_reservoir(ReservoirSpec(
        n=1, gates=[set_gate(0, {"type": "poly", "coeffs": [0.5, 0.4]})]))
    measure = InputMeasure("iid-uniform-interval", -1, 1, seed=0)
    err = fading_memory_error(res, 1, measure, trials=10, resamples=6,
                              total_window=20, seed=1)
    assert err < 1e-28


def test_fading_memory_decreases_and_matches_recursion_oracle():
    # 1-bit chain: P(0->1) = 0.15 + 0.1u, P(1->0) = 0.45
    spec = ReservoirSpec(n=1, gates=[asymmetric_flip_gate(
        0, {"type": "poly", "coeffs": [0.15, 0.1]}, 0.45)], drive_domain=(-1, 1))
    res = sr.build_reservoir(spec)
    measure = InputMeasure("iid-uniform-interval", -1, 1, seed=0)
    errs = {h: fading_memory_error(res, h, measure, trials=60, resamples=12,
                                   total_window=40, seed=2)
            for h in (1, 2, 4, 8, 20)}
    assert errs[1] > errs[2] > errs[4] > errs[8] > errs[20]
    assert errs[20] < 1e-10  # the deep-window tabulation pins the floor

    # independent oracle: the same chain collapses to a scalar recursion
    # p <- (1-p) a(u) + p (1 - b); estimate the same conditional variance
    gen = np.random.default_rng(9)
    acc = 0.0
    trials, resamples, total, h = 3000, 16, 40, 1
    for _ in range(trials):
        w = gen.uniform(-1, 1, h)
        finals = np.empty(resamples)
        for r in range(resamples):
            p = 0.5
            for u in np.concatenate([gen.uniform(-1, 1, total - h), w]):
                a = 0.15 + 0.1 * u
                p = (1 - p) * a + p * (1 - 0.45)
            finals[r] = p
        acc += finals.var(ddof=1)
    oracle = acc / trials  # variance identical for both components
    assert 0.4 * oracle < errs[1] < 2.5 * oracle


def test_fading_memory_requires_enough_trials():
    res = sr.build_reservoir(ReservoirSpec(n=1, gates=[flip_gate(0, 0.2)]))
    measure = InputMeasure("iid-uniform-interval", seed=0)
    with pytest.raises(InsufficientTrials):
        fading_memory_error(res, 1, measure, trials=5)


# --- measures, serialization -------------------------------------------------

def test_quadrature_measure_integrates_polynomials_exactly():
    m = InputMeasure("quadrature-grid", -1, 1, order=16)
    nodes, weights = m.quadrature()
    assert abs(weights.sum() - 1.0) < 1e-14
    assert abs(np.sum(weights * nodes ** 2) - 1.0 / 3.0) < 1e-14
    assert abs(np.sum(weights * nodes ** 7)) < 1e-14


def test_binary_measure_values():
    m = InputMeasure("iid-uniform-binary", seed=4)
    draws = m.draw(200, sr.rng.stream(4))
    assert set(np.unique(draws)) <= {0.0, 1.0}


def test_input_measure_validation():
    with pytest.raises(ValueError):
        InputMeasure("iid-uniform-interval", lo=1.0, hi=-1.0)
    with pytest.raises(ValueError):
        InputMeasure("quadrature-grid", order=1)


def test_spec_json_roundtrip_preserves_dynamics():
    gen = np.random.default_rng(3)
    spec = random_physical_reservoir(3, gen)
    clone = ReservoirSpec.from_json(spec.to_json())
    res_a = sr.build_reservoir(spec)
    res_b = sr.build_reservoir(clone)
    state = gen.dirichlet(np.ones(8))
    for u in (-0.5, 0.2):
        np.testing.assert_array_equal(sr.step_exact(res_a, state, u),
                                      sr.step_exact(res_b, state, u))
    doc = json.loads(spec.to_json())
    assert set(doc) >= {"n", "k_max", "depth_bound", "gates", "initial_state"}
    assert all({"support", "kernel_kind", "params"} <= set(g) for g in doc["gates"])


def test_trajectory_ensemble_roundtrip(tmp_path):
    gen = np.random.default_rng(0)
    ens = sr.TrajectoryEnsemble(gen.integers(0, 8, size=(5, 7)), 3, seed_root=11)
    path = tmp_path / "shots.bin"
    ens.save(path)
    back = sr.TrajectoryEnsemble.load(path)
    assert np.array_equal(back.samples, ens.samples)
    assert back.n == 3 and back.seed_root == 11


def test_stream_reproducibility_and_independence():
    a = sr.rng.stream(5, 1).random(4)
    b = sr.rng.stream(5, 1).random(4)
    c = sr.rng.stream(5, 2).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_vector_inputs_drive_through_their_norm():
    seq = InputSequence(np.array([[3.0, 4.0], [0.0, 0.5]]), washout_length=0)
    np.testing.assert_allclose(seq.drives, [5.0, 0.5])
    res = sr.build_reservoir(ReservoirSpec(
        n=1, gates=[set_gate(0, {"type": "poly", "coeffs": [0.0, 0.1]})],
        drive_domain=(0.0, 6.0)))
    out = sr.run_exact(res, seq)
    np.testing.assert_allclose(out[0], [0.5, 0.5], atol=1e-14)   # p = 0.1 * 5
    np.testing.assert_allclose(out[1], [0.95, 0.05], atol=1e-14)


def test_run_rejects_out_of_domain_drive():
    from stochres.errors import DriveBoundViolation

    res = sr.build_reservoir(ReservoirSpec(n=1, gates=[flip_gate(0, 0.2)],
                                           drive_domain=(-1.0, 1.0)))
    seq = InputSequence(np.array([[0.2], [5.0]]), washout_length=0)
    with pytest.raises(DriveBoundViolation):
        sr.run_exact(res, seq)
    with pytest.raises(DriveBoundViolation):
        sample_trajectories(res, seq, shots=3, seed=0)


def test_exact_mode_register_cap():
    from stochres.errors import ExactModeOverflow

    gates = [flip_gate(0, 0.1)]
    res = sr.build_reservoir(ReservoirSpec(n=15, gates=gates))
    with pytest.raises(ExactModeOverflow):
        sr.step_exact(res, np.full(2 ** 15, 1.0 / 2 ** 15), 0.0)


def test_step_accepts_distribution_wrapper():
    res = sr.build_reservoir(ReservoirSpec(n=1, gates=[flip_gate(0, 0.3)]))
    out = sr.step_exact(res, BitstringDistribution(np.array([1.0, 0.0])), 0.0)
    np.testing.assert_allclose(out, [0.7, 0.3], atol=1e-15)


def test_quadrature_measure_draw_samples_nodes():
    m = InputMeasure("quadrature-grid", -1.0, 1.0, order=8, seed=2)
    nodes, _ = m.quadrature()
    draws = m.draw(300, sr.rng.stream(2))
    assert set(np.round(draws, 12)) <= set(np.round(nodes, 12))
