import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from qphlab import disentangle as dis
from qphlab.games import GameInstance, QuantifierPrefix
from qphlab.protocols import product_accept_prob
from qphlab.qstate import EffectOperator, PureState, SeededRng, random_pure_state, tensor

seeds = st.integers(min_value=0, max_value=2**32 - 1)
EPR = PureState(np.array([1, 0, 0, 1]) / math.sqrt(2), [2, 2])


def test_peaked_instance_validation_and_json():
    inst = dis.PeakedInstance([0.5, 0.5], [0.5, 0.5], [(0, 0)], 0.5)
    assert inst.eps == pytest.approx(0.25)
    back = dis.PeakedInstance.from_json(inst.to_json())
    assert back.S == inst.S and np.allclose(back.p, inst.p)
    with pytest.raises(ValueError):
        dis.PeakedInstance([0.5, 0.6], [0.5, 0.5], [(0, 0)], 0.5)
    with pytest.raises(IndexError):
        dis.PeakedInstance([0.5, 0.5], [0.5, 0.5], [(0, 2)], 0.5)
    with pytest.raises(ValueError):
        dis.PeakedInstance([0.5, 0.5], [0.5, 0.5], [(0, 0)], 0.0)


def test_small_hitting_set_by_hand():
    # [DERIVED] eps = 1/4, gamma = 1/2: ceil(8/e) = 3 draws; X = {0} covers the only row
    inst = dis.PeakedInstance([0.5, 0.5], [0.5, 0.5], [(0, 0)], 0.5)
    assert inst.bound() == 3
    x, size = dis.hitting_set_exact(inst)
    assert x == {0} and size == 1
    assert dis.conditional_coverage(inst, {0}) == pytest.approx(1.0)
    assert dis.miss_mass(inst, {1}) == pytest.approx(0.25)


def test_diagonal_event_needs_many_columns():
    n = 6
    inst = dis.PeakedInstance(np.ones(n) / n, np.ones(n) / n, [(i, i) for i in range(n)], 0.3)
    _, size = dis.hitting_set_exact(inst)
    # covering a 1 - gamma fraction of the diagonal needs ceil(0.7 n) columns
    assert size == math.ceil(0.7 * n)
    assert size <= inst.bound()


@given(seeds, st.integers(min_value=2, max_value=20), st.floats(min_value=0.05, max_value=0.9))
def test_expected_miss_mass_below_gamma_eps(seed, n, gamma):
    inst = dis.PeakedInstance.random(n, SeededRng(seed), gamma=gamma)
    assert dis.expected_miss_mass(inst, inst.bound()) <= inst.gamma * inst.eps + 1e-15


@settings(max_examples=10)
@given(seeds, st.integers(min_value=2, max_value=10))
def test_exact_hitting_set_within_bound(seed, n):
    inst = dis.PeakedInstance.random(n, SeededRng(seed), gamma=0.3)
    x, size = dis.hitting_set_exact(inst)
    assert size <= inst.bound()
    assert dis.conditional_coverage(inst, x) >= 1 - inst.gamma - 1e-9


def test_expected_miss_mass_matches_sampling():
    inst = dis.PeakedInstance.random(12, SeededRng(5), gamma=0.2)
    m = inst.bound()
    rng = SeededRng(6)
    z = [dis.miss_mass(inst, dis.hitting_set(inst, rng.derive(k))[0]) for k in range(2000)]
    se = np.std(z, ddof=1) / math.sqrt(len(z))
    assert abs(np.mean(z) - dis.expected_miss_mass(inst, m)) <= 4 * se


def test_params_from_delta():
    # [DERIVED] t = 256, alpha = 1/32, -ln(alpha delta / 4) = ln 256: ceil(256 ln 256) = 1420
    p = dis.DisentanglerParams.from_delta(1, 0.5)
    assert p.t == pytest.approx(256.0) and p.alpha == pytest.approx(1 / 32) and p.kprime == 1420
    assert p.support_bound == math.ceil(64 / (math.e * (1 - 1 / 32) * 0.25))
    with pytest.raises(ValueError):
        dis.DisentanglerParams(1, 10, 11, 0.5, 1 / 32, 1 / 32, 256.0)


def test_toy_params_respect_constraint():
    p = dis.DisentanglerParams.toy(2, 3)
    assert p.kprime >= math.ceil(-p.t * math.log(p.alpha * p.delta / 4))
    assert 0 < p.tau_floor < 1


@given(seeds)
def test_gamma_exact_on_product_inputs(seed):
    rng = SeededRng(seed)
    params = dis.DisentanglerParams.toy(2, 3)
    psi = tensor(random_pure_state([2], rng.derive(0)), random_pure_state([3], rng.derive(1)))
    ens = dis.StateEnsemble([(1.0, psi)], params.ell)
    rep = dis.gamma_channel([ens] * 4, params)
    assert len(rep.output.components) == 1
    assert rep.output.weights.sum() == pytest.approx(1.0, abs=1e-9)
    assert dis.ensemble_trace_distance_to_copies(rep.output, psi) == pytest.approx(0.0, abs=1e-9)
    assert rep.p_acc == pytest.approx(1.0)


def test_gamma_fallback_on_epr():
    params = dis.DisentanglerParams.toy(2, 3)
    ens = dis.StateEnsemble([(1.0, EPR)], params.ell)
    rep = dis.gamma_channel([ens] * 4, params)
    # [DERIVED] product test on two EPR copies passes with 3/4, k' = 3 rounds
    assert rep.p_acc == pytest.approx(0.75 ** 3, abs=1e-12)
    zero = dis.zero_state(EPR.layout)
    w0 = sum(w for w, s in rep.output.components if abs(s.overlap(zero)) ** 2 > 1 - 1e-12)
    assert w0 == pytest.approx(1 - 0.75 ** 3, abs=1e-12)
    assert rep.eps_S == pytest.approx(params.alpha * rep.p_acc)


def test_gamma_mixture_weights():
    params = dis.DisentanglerParams.toy(1, 2)
    a = tensor(PureState([1, 1j], normalize=True), PureState([0.6, 0.8]))
    b = tensor(PureState([1, -1j], normalize=True), PureState([0.6, 0.8]))
    inputs = [dis.StateEnsemble([(1.0, a)], params.ell)] * 2 + [dis.StateEnsemble([(1.0, b)], params.ell)] * 2
    rep = dis.gamma_channel(inputs, params)
    c = product_accept_prob(a, b) ** params.kprime
    assert rep.p_acc == pytest.approx(c, abs=1e-12)
    assert sum(rep.output.weights) == pytest.approx(1.0)


def test_gamma_contract_checks():
    params = dis.DisentanglerParams.toy(1, 2)
    ens = dis.StateEnsemble([(1.0, EPR)], params.ell)
    with pytest.raises(ValueError):
        dis.gamma_channel([ens] * 3, params)
    wrong = dis.StateEnsemble([(1.0, EPR)], params.ell + 1)
    with pytest.raises(ValueError):
        dis.gamma_channel([wrong] * 4, params)

    def bad_inner(first, second, out_copies):
        return dis.StateEnsemble(first.components, out_copies + 1)

    with pytest.raises(ValueError):
        dis.gamma_channel([ens] * 4, params, inner=bad_inner)


def test_ensemble_validation_and_merge():
    with pytest.raises(ValueError):
        dis.StateEnsemble([(0.5, EPR)], 1)
    s = PureState([1, 0])
    merged = dis.merge_components([(0.3, s), (0.7, PureState([1j, 0]))])
    assert len(merged) == 1 and merged[0][0] == pytest.approx(1.0)


def test_swap_repetitions():
    # [DERIVED] ceil(2 * 4 * ln 64) = ceil(33.27) = 34
    assert dis.swap_repetitions(0.5, 1 / 64) == 34


def _toy_game():
    eff = EffectOperator(np.kron(np.diag([0.9, 0.1]), np.eye(2)), [2, 2])
    return GameInstance(eff, QuantifierPrefix.parse([["E", 2, "pure"], ["A", 2, "pure"]]), 0.9, 0.1)


def test_amplifier_honest_and_exact():
    first, second = PureState([1, 0]), PureState([1, 1], normalize=True)
    fix = dis.StrategyFixture([[(1.0, dis.RoundTable([(None, first)]))],
                               [(1.0, dis.RoundTable([(first, second)]))]])
    params = dis.AmplifierParams(W=34, T=21, c=0.9, s=0.1)
    out = dis.transcript_amplifier_toy(_toy_game(), fix, params, SeededRng(3), episodes=2000)
    assert out["swap_losses"] == 0
    assert out["exact_acceptance"] == pytest.approx(stats.binom.sf(params.majority_threshold - 1, 21, 0.9))
    assert abs(out["acceptance_frequency"] - out["exact_acceptance"]) <= 4 * out["stderr"] + 1e-3


def test_amplifier_far_transcript_loses_rounds():
    first, second = PureState([1, 0]), PureState([1, 1], normalize=True)
    far = dis.far_transcript(first, 0.8, SeededRng(1))
    assert abs(first.overlap(far)) ** 2 == pytest.approx(1 - 0.64)
    fix = dis.StrategyFixture([[(1.0, dis.RoundTable([(None, first)]))],
                               [(1.0, dis.RoundTable([(far, second)]))]])
    params = dis.AmplifierParams(W=34, T=21, c=0.9, s=0.1)
    out = dis.transcript_amplifier_toy(_toy_game(), fix, params, SeededRng(3), episodes=500)
    assert out["swap_losses"] > 450


def test_amplifier_guards():
    first = PureState([1, 0])
    fix = dis.StrategyFixture([[(1.0, dis.RoundTable([(None, first)]))]])
    with pytest.raises(ValueError):
        dis.transcript_amplifier_toy(_toy_game(), fix, dis.AmplifierParams(W=1, T=1), SeededRng(0))
    with pytest.raises(ValueError):
        dis.RoundTable([])
    with pytest.raises(ValueError):
        dis.StrategyFixture([[(0.5, dis.RoundTable([(None, first)]))]])


def test_false_pass_and_hoeffding():
    out = dis.false_pass_frequency(0.5, 34, 2, SeededRng(0), 50000)
    # [DERIVED] pure states at trace distance 1/2 pass one SWAP test with 1/2 + 3/8
    assert out["exact"] == pytest.approx((0.5 + 0.5 * 0.75) ** 34)
    assert out["exact"] <= out["bound"] <= 1 / 64
    assert abs(out["frequency"] - out["exact"]) <= 4 * out["stderr"]
    m = dis.majority_rejection_frequency(0.7, dis.AmplifierParams(W=1, T=40, c=0.9, s=0.1), SeededRng(1), 50000)
    assert m["exact"] <= m["hoeffding"]
    assert abs(m["rejection_frequency"] - m["exact"]) <= 4 * m["stderr"]
    assert dis.hoeffding_rejection_bound(0.4, 0.5, 10) == 1.0
