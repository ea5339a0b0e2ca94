import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import haar_unitary, random_channel, random_density, random_mixture
from urbench.channels import (
    ChannelError,
    QuantumChannel,
    apply,
    avg_gate_fidelity,
    bit_flip,
    compose,
    depolarizing,
    diamond_bounds,
    fidelity_unitarity_bound,
    identity_channel,
    mixed_unitary,
    to_ptm,
    unital_block,
    unitarity,
    unitarity_bitflip_closed,
    unitarity_depolarizing_closed,
    unitarity_pauli_sum,
    unitary_channel,
)
from urbench.pauli import H, X, Z
from urbench.qmath import DimensionError, basis_state, outer, validate_density

probs = st.floats(0.0, 1.0)


def test_kraus_must_not_increase_trace():
    with pytest.raises(ChannelError):
        QuantumChannel((np.eye(2), np.eye(2)))
    with pytest.raises(DimensionError):
        QuantumChannel((np.eye(2), np.eye(4)))


def test_trace_preserving_flag():
    assert bit_flip(0.3).trace_preserving
    assert not QuantumChannel((0.5 * np.eye(2),)).trace_preserving


def test_apply_examples():
    rho0 = outer(basis_state(0, 2))
    rho = validate_density(random_density(np.random.default_rng(0), 2))
    np.testing.assert_allclose(apply(identity_channel(1), rho).matrix, rho.matrix)
    np.testing.assert_allclose(apply(depolarizing(1, 0.0), rho0).matrix, np.eye(2) / 2, atol=1e-15)
    np.testing.assert_allclose(apply(bit_flip(0.8), rho0).matrix, np.diag([0.8, 0.2]), atol=1e-15)
    with pytest.raises(DimensionError):
        apply(identity_channel(2), rho0)


def test_compose_examples():
    ch = bit_flip(0.7)
    np.testing.assert_allclose(compose(identity_channel(1), ch).ptm.matrix, ch.ptm.matrix, atol=1e-14)
    np.testing.assert_allclose(
        compose(depolarizing(1, 0.6), depolarizing(1, 0.5)).ptm.matrix,
        depolarizing(1, 0.3).ptm.matrix,
        atol=1e-14,
    )
    with pytest.raises(DimensionError):
        compose(identity_channel(1), identity_channel(2))


@pytest.mark.parametrize("n", [1, 2])
def test_ptm_multiplicative(n):
    rng = np.random.default_rng(10 + n)
    for _ in range(20):
        a, b = random_channel(rng, n), random_channel(rng, n)
        np.testing.assert_allclose(to_ptm(compose(a, b)).matrix, a.ptm.matrix @ b.ptm.matrix, atol=1e-10)


def test_depolarizing_examples():
    np.testing.assert_allclose(depolarizing(1, 1.0).ptm.matrix, np.eye(4), atol=1e-15)
    rho = outer(basis_state(1, 4))
    np.testing.assert_allclose(apply(depolarizing(2, 0.0), rho).matrix, np.eye(4) / 4, atol=1e-15)
    np.testing.assert_allclose(unital_block(depolarizing(1, 0.7).ptm), 0.7 * np.eye(3), atol=1e-15)
    np.testing.assert_allclose(to_ptm(depolarizing(1, 0.4)).matrix, np.diag([1, 0.4, 0.4, 0.4]), atol=1e-15)
    with pytest.raises(ChannelError):
        depolarizing(1, 1.1)


def test_bit_flip_examples():
    np.testing.assert_allclose(bit_flip(1.0).ptm.matrix, np.eye(4), atol=1e-15)
    np.testing.assert_allclose(bit_flip(0.0).ptm.matrix, unitary_channel(X).ptm.matrix, atol=1e-15)
    np.testing.assert_allclose(unital_block(bit_flip(0.9).ptm), np.diag([1, 0.8, 0.8]), atol=1e-15)
    with pytest.raises(ChannelError):
        bit_flip(-0.1)


def test_mixed_unitary_examples():
    rng = np.random.default_rng(3)
    U = haar_unitary(rng, 2)
    assert abs(unitarity(mixed_unitary([(1.0, U)])) - 1) < 1e-12
    np.testing.assert_allclose(
        mixed_unitary([(0.3, np.eye(2)), (0.7, X)]).ptm.matrix, bit_flip(0.3).ptm.matrix, atol=1e-15
    )
    assert abs(unitarity(mixed_unitary([(0.5, np.eye(2)), (0.5, Z)])) - 1 / 3) < 1e-12


def test_mixed_unitary_errors():
    with pytest.raises(ChannelError):
        mixed_unitary([(0.5, np.eye(2)), (0.4, X)])
    with pytest.raises(ChannelError):
        mixed_unitary([(1.5, np.eye(2)), (-0.5, X)])
    with pytest.raises(ChannelError):
        mixed_unitary([(1.0, np.diag([1, 2]))])
    with pytest.raises(ChannelError):
        unitary_channel(np.ones((2, 2)))


def test_unitary_channel_examples():
    np.testing.assert_allclose(unitary_channel(np.eye(2)).ptm.matrix, np.eye(4), atol=1e-15)
    assert abs(unitarity(unitary_channel(H)) - 1) < 1e-12
    block = unital_block(unitary_channel(haar_unitary(np.random.default_rng(4), 4)).ptm)
    np.testing.assert_allclose(block.T @ block, np.eye(15), atol=1e-12)


def test_ptm_row_zero_and_range():
    rng = np.random.default_rng(5)
    for n in (1, 2):
        for _ in range(10):
            R = random_channel(rng, n).ptm.matrix
            np.testing.assert_allclose(R[0], np.eye(len(R))[0], atol=1e-10)
            assert np.all(np.abs(R) <= 1 + 1e-10)


def test_unitarity_examples():
    assert abs(unitarity(depolarizing(2, 0.8)) - 0.64) < 1e-12
    assert abs(unitarity(bit_flip(0.9)) - 0.76) < 1e-12
    assert unitarity_depolarizing_closed(1, 0.9) == pytest.approx(0.81, abs=1e-15)
    assert unitarity_depolarizing_closed(1, 0.6) == pytest.approx(0.36, abs=1e-15)
    assert unitarity_depolarizing_closed(1, 1.0) == 1
    assert unitarity_bitflip_closed(1.0) == 1
    assert unitarity_bitflip_closed(0.5) == pytest.approx(1 / 3, abs=1e-15)
    assert unitarity_bitflip_closed(0.975) == pytest.approx(0.935, abs=1e-3)


@pytest.mark.parametrize("n", [1, 2])
def test_unitarity_forms_agree(n):
    rng = np.random.default_rng(20 + n)
    for _ in range(100):
        ch = random_channel(rng, n)
        u = unitarity(ch)
        assert abs(u - unitarity_pauli_sum(ch)) < 1e-12
        assert -1e-12 <= u <= 1 + 1e-10


def test_unitarity_one_iff_orthogonal_block():
    rng = np.random.default_rng(6)
    for ch in [unitary_channel(haar_unitary(rng, 2)), random_mixture(rng, 2, 2), bit_flip(0.9)]:
        block = unital_block(ch.ptm)
        orth = np.allclose(block.T @ block, np.eye(3), atol=1e-8)
        assert orth == (abs(unitarity(ch) - 1) < 1e-8)


def test_unitarity_trace_decreasing():
    ch = QuantumChannel((0.5 * np.eye(2),))
    assert abs(unitarity(ch) - 0.0625) < 1e-12
    assert abs(unitarity_pauli_sum(ch) - 0.0625) < 1e-12


@given(probs)
def test_closed_forms_property(p):
    assert abs(unitarity(depolarizing(1, p)) - unitarity_depolarizing_closed(1, p)) < 1e-12
    assert abs(unitarity(bit_flip(p)) - unitarity_bitflip_closed(p)) < 1e-12


def test_avg_gate_fidelity_examples():
    assert avg_gate_fidelity(identity_channel(1)) == pytest.approx(1.0, abs=1e-15)
    for p in (0.0, 0.3, 0.9):
        assert avg_gate_fidelity(depolarizing(1, p)) == pytest.approx(p + (1 - p) / 2, abs=1e-12)
    with pytest.raises(ChannelError):
        avg_gate_fidelity(QuantumChannel((0.5 * np.eye(2),)))


@pytest.mark.parametrize("p", [0.3, 0.8])
def test_bit_flip_fidelity_monte_carlo(p):
    # brute-force Haar average of <psi| E(|psi><psi|) |psi>
    rng = np.random.default_rng(7)
    v = rng.normal(size=(400_000, 2)) + 1j * rng.normal(size=(400_000, 2))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    flipped = v[:, ::-1]
    overlap = np.abs(np.sum(v.conj() * flipped, axis=1)) ** 2
    estimate = np.mean(p + (1 - p) * overlap)
    assert abs(estimate - avg_gate_fidelity(bit_flip(p))) < 1e-3
    # closed form: the flip term averages |<X>|^2 = 1/3 over the sphere
    assert abs(avg_gate_fidelity(bit_flip(p)) - (1 + 2 * p) / 3) < 1e-12


def test_fidelity_unitarity_bound_examples():
    for p in (0.0, 0.4, 0.95):
        holds, slack = fidelity_unitarity_bound(depolarizing(1, p))
        assert holds and abs(slack) < 1e-12
    holds, _ = fidelity_unitarity_bound(unitary_channel(H))
    assert holds
    holds, slack = fidelity_unitarity_bound(bit_flip(0.8))
    assert holds and slack > 1e-3


def test_fidelity_unitarity_bound_random():
    rng = np.random.default_rng(8)
    for _ in range(100):
        holds, slack = fidelity_unitarity_bound(random_channel(rng, int(rng.integers(1, 3))))
        assert holds, slack


def test_diamond_bounds_examples():
    b = diamond_bounds(1.0, 1.0, 2)
    assert (b.lower, b.upper) == (0.0, 0.0)
    b = diamond_bounds(0.9, 0.81, 2)
    assert b.lower == pytest.approx(math.sqrt(0.03) / 4, abs=1e-12)
    assert b.upper == pytest.approx(math.sqrt(0.03), abs=1e-12)
    assert b.lower == pytest.approx(0.0433, abs=1e-4)
    assert b.upper == pytest.approx(0.1732, abs=1e-4)


def test_diamond_bounds_radicand():
    assert diamond_bounds(0.5, -5e-13, 2).lower == 0.0
    with pytest.raises(ChannelError):
        diamond_bounds(0.9, 0.5, 2)


@given(st.floats(0, 1), st.floats(0, 1), st.sampled_from([2, 4]))
def test_diamond_bounds_ordered(p, slack, d):
    u = min(1.0, max(0.0, 2 * p - 1) + slack * (1 - max(0.0, 2 * p - 1)))
    b = diamond_bounds(p, u, d)
    assert 0 <= b.lower <= b.upper
    if b.lower > 0:
        assert b.upper / b.lower == pytest.approx(d * d, rel=1e-12)
