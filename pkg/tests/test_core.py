import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from grovermesh.core import (
    BALANCED_SPLITTER,
    Distribution,
    apply,
    basis_state,
    embed,
    haar_unitary,
    is_unitary,
    output_distribution,
)
from grovermesh.exceptions import DegenerateStateError, DimensionError
from grovermesh.grover import GroverSpec, grover_unitary
from grovermesh.mesh import clements_decompose, recompose

# 10**(-4.2/10), evaluated at 30 digits
SURVIVAL_4P2_DB = 0.380189396321


def test_identity_is_unitary():
    assert is_unitary(np.eye(4), tol=1e-12)


def test_zero_row_is_not_unitary():
    m = np.eye(3, dtype=complex)
    m[1] = 0.0
    assert not is_unitary(m, tol=0.5)


def test_is_unitary_rejects_non_square():
    with pytest.raises(DimensionError):
        is_unitary(np.ones((2, 3)))


def test_recomposed_program_is_unitary():
    u = haar_unitary(6, 11)
    assert is_unitary(recompose(clements_decompose(u)), tol=1e-8)


def test_apply_identity(rng):
    s = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    np.testing.assert_allclose(apply(np.eye(5), s), s)


def test_balanced_splitter_convention():
    out = apply(BALANCED_SPLITTER, basis_state(2, 0))
    np.testing.assert_allclose(out, [1 / np.sqrt(2), 1j / np.sqrt(2)], atol=1e-15)


def test_grover_n4_concentrates_on_marked_mode():
    u = grover_unitary(GroverSpec(4, (3,)))
    out = apply(u, basis_state(4, 0))
    assert abs(out[3]) == pytest.approx(1.0, abs=1e-12)


def test_apply_dimension_mismatch():
    with pytest.raises(DimensionError):
        apply(np.eye(3), np.ones(4))


def test_apply_rejects_nan():
    with pytest.raises(ValueError):
        apply(np.full((2, 2), np.nan), np.ones(2))


@pytest.mark.parametrize(
    "state, expected",
    [
        ([1 / np.sqrt(2), 1 / np.sqrt(2)], [0.5, 0.5]),
        ([1, 0, 0, 0], [1, 0, 0, 0]),
    ],
)
def test_output_distribution_examples(state, expected):
    dist = output_distribution(state)
    np.testing.assert_allclose(dist.probabilities, expected, atol=1e-15)
    assert dist.survival == pytest.approx(1.0)


def test_lossy_state_records_survival():
    amp = np.sqrt(SURVIVAL_4P2_DB)
    state = amp * np.array([0.6, 0.8j, 0.0])
    dist = output_distribution(state)
    assert dist.survival == pytest.approx(SURVIVAL_4P2_DB, rel=1e-12)
    np.testing.assert_allclose(dist.probabilities, [0.36, 0.64, 0.0], atol=1e-12)


def test_zero_state_is_degenerate():
    with pytest.raises(DegenerateStateError):
        output_distribution(np.zeros(3))


def test_distribution_validates():
    with pytest.raises(ValueError):
        Distribution(np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        Distribution(np.array([1.5, -0.5]))
    with pytest.raises(DegenerateStateError):
        Distribution.from_weights(np.zeros(3))


def test_embed_places_block():
    u = haar_unitary(3, 0)
    big = embed(u, 5)
    np.testing.assert_allclose(big[:3, :3], u)
    np.testing.assert_allclose(big[3:, 3:], np.eye(2))
    with pytest.raises(DimensionError):
        embed(u, 2)


def test_basis_state_range():
    with pytest.raises(IndexError):
        basis_state(3, 3)


sizes = st.integers(min_value=1, max_value=12)
seeds = st.integers(min_value=0, max_value=2**32 - 1)


@given(n=sizes, seed=seeds)
def test_unitary_preserves_norm(n, seed):
    rng = np.random.default_rng(seed)
    u = haar_unitary(n, rng)
    s = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    s /= np.linalg.norm(s)
    assert np.linalg.norm(apply(u, s)) ** 2 == pytest.approx(1.0, abs=1e-12)


@given(n=sizes, seed=seeds)
def test_apply_composes(n, seed):
    rng = np.random.default_rng(seed)
    a, b = haar_unitary(n, rng), haar_unitary(n, rng)
    s = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    np.testing.assert_allclose(apply(a @ b, s), apply(a, apply(b, s)), atol=1e-10)


@given(st.lists(st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False),
                min_size=1, max_size=20))
def test_output_distribution_normalised(amps):
    s = np.array(amps, dtype=complex)
    if np.sum(np.abs(s) ** 2) < 1e-200:
        with pytest.raises(DegenerateStateError):
            output_distribution(s)
        return
    assert output_distribution(s).probabilities.sum() == pytest.approx(1.0, abs=1e-12)
