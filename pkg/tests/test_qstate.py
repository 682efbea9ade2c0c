import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qphlab.qstate import (
    DensityOperator,
    EffectOperator,
    HilbertLayout,
    KrausChannel,
    PureState,
    SeededRng,
    apply_channel,
    dumps,
    extreme_eigpair,
    from_json_obj,
    partial_trace,
    povm_probability_bound_check,
    random_channel,
    random_density,
    random_effect,
    random_pure_state,
    random_unitary,
    tensor,
    tensor_all,
    to_json_obj,
    trace_distance,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)
dims = st.integers(min_value=2, max_value=6)


def test_layout_basics():
    lay = HilbertLayout([2, 3])
    assert lay.total_dim == 6 and lay.n_factors == 2
    assert (lay + HilbertLayout([4])).factor_dims == (2, 3, 4)
    assert lay.sub([1]).factor_dims == (3,)
    assert HilbertLayout.qubits(3).total_dim == 8
    with pytest.raises(ValueError):
        HilbertLayout([])
    with pytest.raises(ValueError):
        HilbertLayout([2, 0])


def test_pure_state_validation():
    with pytest.raises(ValueError):
        PureState([1, 1])
    s = PureState([1, 1], normalize=True)
    assert np.isclose(np.linalg.norm(s.amplitudes), 1)
    with pytest.raises(ValueError):
        PureState([0, 0], normalize=True)
    with pytest.raises(ValueError):
        PureState([1, 0, 0], [2, 2])


def test_density_validation():
    with pytest.raises(ValueError):
        DensityOperator(np.eye(2))
    with pytest.raises(ValueError):
        DensityOperator(np.array([[1.5, 0], [0, -0.5]]))
    with pytest.raises(ValueError):
        DensityOperator(np.array([[0.5, 0.3], [0.1, 0.5]]))
    assert np.allclose(DensityOperator.maximally_mixed([2, 2]).matrix, np.eye(4) / 4)


def test_effect_validation():
    with pytest.raises(ValueError):
        EffectOperator(2 * np.eye(2))
    assert EffectOperator(np.eye(2)).probability(PureState([1, 0])) == pytest.approx(1.0)


def test_partial_trace_order_and_product():
    a = random_density([2], SeededRng(1))
    b = random_density([3], SeededRng(2))
    ab = tensor(a, b)
    assert np.allclose(partial_trace(ab, {0}).matrix, a.matrix)
    assert np.allclose(partial_trace(ab, {1}).matrix, b.matrix)
    # a list keeps the requested order
    swapped = partial_trace(ab, [1, 0])
    assert swapped.layout.factor_dims == (3, 2)
    assert np.allclose(swapped.matrix, np.kron(b.matrix, a.matrix))
    with pytest.raises(IndexError):
        partial_trace(ab, {2})


def test_epr_marginal_is_maximally_mixed():
    epr = PureState(np.array([1, 0, 0, 1]) / np.sqrt(2), [2, 2])
    assert np.allclose(partial_trace(epr, {0}).matrix, np.eye(2) / 2)


@given(seeds, dims)
def test_trace_distance_metric(seed, d):
    rng = SeededRng(seed)
    x, y, z = (random_density([d], rng.derive(k)) for k in range(3))
    dxy = trace_distance(x, y)
    assert 0 <= dxy <= 1 + 1e-12
    assert dxy == pytest.approx(trace_distance(y, x), abs=1e-12)
    assert dxy <= trace_distance(x, z) + trace_distance(z, y) + 1e-12
    assert trace_distance(x, x) == pytest.approx(0, abs=1e-12)


@given(seeds, dims)
def test_pure_trace_distance_matches_density_route(seed, d):
    rng = SeededRng(seed)
    a, b = random_pure_state([d], rng.derive(0)), random_pure_state([d], rng.derive(1))
    assert trace_distance(a, b) == pytest.approx(trace_distance(a.density(), b.density()), abs=1e-9)


@given(seeds, dims)
def test_effect_probability_gap_bounded_by_distance(seed, d):
    rng = SeededRng(seed)
    m = random_effect([d], rng.derive("m"))
    assert povm_probability_bound_check(m, random_density([d], rng.derive(0)), random_density([d], rng.derive(1)))


@given(seeds, dims)
def test_random_objects_are_valid(seed, d):
    rng = SeededRng(seed)
    u = random_unitary(d, rng)
    assert np.allclose(u.conj().T @ u, np.eye(d), atol=1e-10)
    rho = random_density([d], rng, rank=1)
    assert rho.purity() == pytest.approx(1.0, abs=1e-10)
    ch = random_channel(d, 3, 2, rng)
    out = apply_channel(ch, random_density([d], rng))
    assert np.trace(out.matrix).real == pytest.approx(1.0)


def test_depolarizing_and_identity_channels():
    rho = random_density([3], SeededRng(5))
    assert np.allclose(apply_channel(KrausChannel.identity([3]), rho).matrix, rho.matrix)
    assert np.allclose(apply_channel(KrausChannel.depolarizing(3, 1.0), rho).matrix, np.eye(3) / 3, atol=1e-12)
    with pytest.raises(ValueError):
        KrausChannel([np.eye(2) * 2])


def test_extreme_eigpair():
    h = np.diag([0.2, -1.0, 3.0])
    lam, v = extreme_eigpair(h, "max")
    assert lam == pytest.approx(3.0) and abs(v[2]) == pytest.approx(1.0)
    lam, _ = extreme_eigpair(h, "min")
    assert lam == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        extreme_eigpair(np.array([[0, 1], [0, 0]]))


def test_seeded_rng_is_deterministic_and_order_independent():
    a = SeededRng(7)
    x = a.derive("cmd", 3).random(4)
    a.derive("other").random(10)
    y = SeededRng(7).derive("cmd", 3).random(4)
    assert np.array_equal(x, y)
    assert not np.array_equal(x, SeededRng(7).derive("cmd", 4).random(4))
    with pytest.raises(ValueError):
        SeededRng(-1)


def test_json_round_trip():
    rng = SeededRng(3)
    psi = random_pure_state([2, 3], rng)
    rho = random_density([2, 2], rng)
    assert np.allclose(from_json_obj(to_json_obj(psi), "pure").amplitudes, psi.amplitudes)
    back = from_json_obj(json.loads(dumps(rho)), "density")
    assert back.layout == rho.layout and np.allclose(back.matrix, rho.matrix)
    with pytest.raises(ValueError):
        from_json_obj({"layout": [2], "re": [1, 0, 0], "im": [0, 0, 0]})


def test_tensor_all_keeps_purity():
    s = tensor_all([PureState([1, 0]), PureState([0, 1]), PureState([1, 0])])
    assert isinstance(s, PureState) and s.layout.factor_dims == (2, 2, 2)
    assert abs(s.amplitudes[2]) == 1
