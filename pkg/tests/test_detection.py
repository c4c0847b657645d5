import numpy as np
import pytest

from grovermesh.core import Distribution
from grovermesh.detection import (
    ChannelCorrections,
    Counts,
    binomial_sigma,
    correct_and_normalize,
    detect,
    measure,
    success_probability_estimate,
)
from grovermesh.exceptions import DegenerateStateError, DimensionError
from grovermesh.grover import GroverSpec, grover_unitary, original_success_probability
from grovermesh.hardware import mesh_transfer
from grovermesh.mesh import clements_decompose


def routing_matrix(n, target):
    t = np.zeros((n, n), dtype=complex)
    t[target, 0] = 1.0
    return t


def test_ideal_routing_counts():
    counts = detect(routing_matrix(5, 3), 0, 1000, seed=0)
    np.testing.assert_array_equal(counts.clicks, [0, 0, 0, 1000, 0])
    assert counts.no_click == 0 and counts.shots == 1000


def test_uniform_counts_expectation():
    t = np.full((4, 4), 0.5, dtype=complex)
    eta = np.array([0.8, 0.8, 0.5, 0.5])
    shots = 400_000
    counts = detect(t, 0, shots, seed=1, efficiencies=eta)
    expected = shots * eta / 4
    sigma = np.sqrt(expected)
    assert np.all(np.abs(counts.clicks - expected) < 5 * sigma)
    assert counts.shots == shots


def test_detect_errors():
    with pytest.raises(IndexError):
        detect(np.eye(3), 3, 10)
    with pytest.raises(ValueError):
        detect(np.eye(3), 0, 0)
    with pytest.raises(DimensionError):
        detect(np.eye(3), 0, 10, efficiencies=[1.0, 1.0])


def test_detect_seed_determinism():
    t = np.full((3, 3), 1 / np.sqrt(3), dtype=complex)
    a = detect(t, 0, 10_000, seed=42, efficiencies=[0.7, 0.5, 0.6])
    b = detect(t, 0, 10_000, seed=42, efficiencies=[0.7, 0.5, 0.6])
    np.testing.assert_array_equal(a.clicks, b.clicks)
    assert a.no_click == b.no_click


def test_n7_marked_frequency_within_binomial_band():
    spec = GroverSpec(7, (4,))
    shots = 1_000_000
    counts = detect(grover_unitary(spec), 0, shots, seed=3)
    p = original_success_probability(spec)
    freq = counts.clicks[4] / shots
    assert abs(freq - p) <= 3 * binomial_sigma(p, shots)


def test_correct_and_normalize_examples():
    dist = correct_and_normalize(np.array([7, 7, 7]), ChannelCorrections.uniform(3))
    np.testing.assert_allclose(dist.probabilities, 1 / 3)
    dist = correct_and_normalize(np.array([50, 100]), np.array([2.0, 1.0]))
    np.testing.assert_allclose(dist.probabilities, [0.5, 0.5])
    with pytest.raises(DegenerateStateError):
        correct_and_normalize(np.zeros(3), ChannelCorrections.uniform(3))
    with pytest.raises(DimensionError):
        correct_and_normalize(np.ones(3), ChannelCorrections.uniform(2))


def test_survival_is_click_fraction():
    counts = Counts(clicks=np.array([30, 10]), no_click=60)
    dist = correct_and_normalize(counts, ChannelCorrections.uniform(2))
    assert dist.survival == pytest.approx(0.4)
    np.testing.assert_array_equal(dist.raw_counts, [30, 10])


def test_uniform_corrections_are_idempotent():
    clicks = np.array([5, 17, 3, 0, 9])
    dist = correct_and_normalize(clicks, ChannelCorrections.from_efficiencies(np.full(5, 0.6)))
    np.testing.assert_allclose(dist.probabilities, clicks / clicks.sum())


def test_correction_factors_at_least_one(device12):
    corr = ChannelCorrections.from_hardware(device12)
    assert np.all(corr.factors >= 1.0)
    with pytest.raises(ValueError):
        ChannelCorrections(np.array([0.5, 2.0]))


def test_mismatched_detectors_corrected(device12):
    # SNSPD and APD channels differ by ~35%; correction must remove the bias
    hw = device12.submesh(6)
    u = grover_unitary(GroverSpec(6, (2,), "original"))
    prog = clements_decompose(u)
    exact = measure(mesh_transfer(prog, hw), hw, shots=None)
    ideal_with_imbalance = np.abs(
        mesh_transfer(prog, hw)[:, 0] / hw.output_transmission / hw.input_transmission[0]) ** 2
    np.testing.assert_allclose(exact.probabilities, ideal_with_imbalance, atol=1e-12)
    noisy = measure(mesh_transfer(prog, hw), hw, shots=200_000, seed=9)
    clicks = noisy.raw_counts.sum()
    sigma = np.sqrt(exact.probabilities * (1 - exact.probabilities) / clicks)
    assert np.all(np.abs(noisy.probabilities - exact.probabilities) < 5 * sigma + 1e-12)


def test_success_probability_estimate():
    assert success_probability_estimate(Distribution(np.array([0, 0, 1.0])), [2]) == 1.0
    assert success_probability_estimate(np.full(4, 0.25), [1]) == pytest.approx(0.25)
    with pytest.raises(IndexError):
        success_probability_estimate(np.full(4, 0.25), [4])


def test_estimator_consistency_at_high_shots():
    spec = GroverSpec(9, (0,))
    shots = 10_000_000
    counts = detect(grover_unitary(spec), 0, shots, seed=11)
    dist = correct_and_normalize(counts, ChannelCorrections.uniform(9))
    p = original_success_probability(spec)
    assert abs(success_probability_estimate(dist, [0]) - p) <= 5 * binomial_sigma(p, shots)


def test_measure_exact_limit_matches_sampling_mean(device12):
    hw = device12.submesh(4)
    t = mesh_transfer(np.full(hw.n_heaters, 3.0), hw)
    exact = measure(t, hw, shots=None, input_mode=1)
    sampled = measure(t, hw, shots=500_000, seed=2, input_mode=1)
    np.testing.assert_allclose(sampled.probabilities, exact.probabilities, atol=5e-3)
