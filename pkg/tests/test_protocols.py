import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qphlab.protocols import (
    CutSpec,
    extract_symmetric_copy,
    factor_swap,
    gentle_post_state,
    permutation_operator,
    product_accept_prob,
    product_effect,
    sample_swap_test,
    swap_accept_prob,
    swap_effect,
    swap_operator,
    swap_trace_identity,
    symmetric_copy_distance,
    symmetric_projector,
)
from qphlab.qstate import (
    EffectOperator,
    HilbertLayout,
    PureState,
    SeededRng,
    random_density,
    random_effect,
    random_pure_state,
    tensor,
    trace_distance,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)
EPR = PureState(np.array([1, 0, 0, 1]) / math.sqrt(2), [2, 2])


def test_permutation_operator_action():
    p = permutation_operator([2, 3], [1, 0])
    x = np.zeros(6)
    x[1 * 3 + 2] = 1  # |1, 2>
    y = p @ x
    assert y[2 * 2 + 1] == 1  # |2, 1>
    with pytest.raises(ValueError):
        permutation_operator([2, 2], [0, 0])


@pytest.mark.parametrize("d", [2, 3, 4])
def test_symmetric_projector_trace(d):
    # dimension of the symmetric subspace is d(d+1)/2
    pi = swap_effect(d).matrix
    assert np.allclose(pi @ pi, pi)
    assert np.trace(pi).real == pytest.approx(d * (d + 1) / 2)


def test_swap_operator_squares_to_identity():
    f = swap_operator(3)
    assert np.allclose(f @ f, np.eye(9))
    with pytest.raises(ValueError):
        factor_swap([2, 3], 0, 1)


@given(seeds, st.integers(min_value=2, max_value=5))
def test_swap_acceptance_formula(seed, d):
    rng = SeededRng(seed)
    rho, sigma = random_density([d], rng.derive(0)), random_density([d], rng.derive(1))
    trace_route = np.real(np.trace(swap_effect(d).matrix @ np.kron(rho.matrix, sigma.matrix)))
    assert swap_accept_prob(rho, sigma) == pytest.approx(trace_route, abs=1e-12)


@given(seeds, st.integers(min_value=2, max_value=4))
def test_swap_trace_identity(seed, d):
    rng = SeededRng(seed)
    x = rng.normal((d, d)) + 1j * rng.normal((d, d))
    y = rng.normal((d, d)) + 1j * rng.normal((d, d))
    lhs, rhs = swap_trace_identity(x, y)
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_swap_sampling_frequency():
    a, b = PureState([1, 0]), PureState([1, 1], normalize=True)
    outcomes = sample_swap_test(a, b, SeededRng(4), shots=20000)
    assert outcomes.mean() == pytest.approx(0.75, abs=0.015)


def test_product_test_on_epr_pair():
    # [DERIVED] 2^-2 (1 + 1/2 + 1/2 + 1) from the subset expansion over swapped factors
    assert product_accept_prob(EPR, EPR) == pytest.approx(0.75, abs=1e-12)


def test_product_test_accepts_identical_product_states():
    psi = tensor(random_pure_state([2], SeededRng(1)), random_pure_state([3], SeededRng(2)))
    assert product_accept_prob(psi, psi) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("d", [2, 3])
def test_product_projector_below_swap_projector(d):
    cut = CutSpec.adjacent([d, d])
    pi_swap = symmetric_projector(list(cut.layout.factor_dims), [0, 1], [2, 3])
    pi_prod = product_effect(cut).matrix
    assert np.linalg.eigvalsh(pi_swap - pi_prod)[0] >= -1e-10


@given(seeds)
def test_product_probability_at_most_swap_probability(seed):
    rng = SeededRng(seed)
    rho, sigma = random_density([2, 2], rng.derive(0)), random_density([2, 2], rng.derive(1))
    p_prod = product_accept_prob(rho, sigma)
    p_swap = np.real(np.trace(symmetric_projector([2, 2, 2, 2], [0, 1], [2, 3]) @ np.kron(rho.matrix, sigma.matrix)))
    assert p_prod <= p_swap + 1e-10


def test_cut_validation():
    with pytest.raises(ValueError):
        CutSpec(HilbertLayout([2, 3]), (0,), (1,))
    with pytest.raises(ValueError):
        CutSpec(HilbertLayout([2, 2]), (0,), (0,))
    with pytest.raises(IndexError):
        CutSpec(HilbertLayout([2, 2]), (0,), (5,))
    with pytest.raises(ValueError):
        product_accept_prob(PureState([1, 0]), PureState([1, 0, 0]))


@given(seeds, st.integers(min_value=2, max_value=5), st.floats(min_value=1e-4, max_value=0.1))
def test_gentle_measurement_bound(seed, d, target):
    rng = SeededRng(seed)
    rho = random_density([d], rng.derive("rho"))
    e = random_effect([d], rng.derive("e")).matrix
    t = min(1.0, target / np.real(np.trace(e @ rho.matrix)))
    m = EffectOperator(np.eye(d) - t * e, [d])
    eps = 1 - m.probability(rho)
    post, p = gentle_post_state(rho, m)
    assert p == pytest.approx(1 - eps)
    assert trace_distance(rho, post) <= 2 * math.sqrt(eps) + 1e-12


def test_gentle_post_state_rejects_zero_probability():
    with pytest.raises(ValueError):
        gentle_post_state(PureState([1, 0]), EffectOperator(np.diag([0.0, 1.0])))


@given(seeds, st.floats(min_value=0.0, max_value=0.6))
def test_symmetric_copy_extraction(seed, noise):
    rng = SeededRng(seed)
    psi = random_pure_state([2], rng.derive("psi"))
    rest = random_pure_state([3], rng.derive("rest"))
    junk = random_pure_state([2, 3], rng.derive("junk"))
    v = np.sqrt(1 - noise) * tensor(psi, rest).amplitudes + np.sqrt(noise) * junk.amplitudes
    phi = PureState(v, [2, 3], normalize=True)
    try:
        phi2, bound = extract_symmetric_copy(psi, phi)
    except ValueError:
        return  # SWAP acceptance at most 1/2: outside the extraction regime
    assert symmetric_copy_distance(psi, phi, phi2) <= bound + 1e-9


def test_symmetric_copy_exact_for_product():
    psi = PureState([0.6, 0.8], [2])
    rest = PureState([1, 1j], [2], normalize=True)
    phi2, bound = extract_symmetric_copy(psi, tensor(psi, rest))
    assert bound == pytest.approx(0.0, abs=1e-7)
    assert abs(phi2.overlap(rest)) == pytest.approx(1.0)
