import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qphlab import hamiltonian as ham
from qphlab.games import Purity, Quantifier
from qphlab.qstate import PureState, SeededRng, partial_trace, random_density, random_pure_state

seeds = st.integers(min_value=0, max_value=2**32 - 1)
CORPUS = ham.circuit_corpus()


def _kron_embed(local, support, n):
    # oracle: contiguous support only, built by explicit Kronecker products
    lo = support[0]
    return np.kron(np.kron(np.eye(2 ** lo), local), np.eye(2 ** (n - lo - len(support))))


@given(seeds, st.integers(min_value=2, max_value=5))
def test_embed_matches_kron_on_contiguous_support(seed, n):
    rng = SeededRng(seed)
    k = 1 + seed % 2
    lo = seed % (n - k + 1)
    local = rng.normal((2 ** k, 2 ** k)) + 1j * rng.normal((2 ** k, 2 ** k))
    support = list(range(lo, lo + k))
    assert np.allclose(ham.embed_sparse(local, support, n).toarray(), _kron_embed(local, support, n))


def test_embed_respects_support_order():
    # CNOT with control 1 and target 0 on two qubits
    m = ham.embed_sparse(ham.NAMED_GATES["CNOT"], [1, 0], 2).toarray()
    assert m[0b11, 0b01] == 1 and m[0b01, 0b11] == 1 and m[0b10, 0b10] == 1


@given(seeds)
def test_apply_local_matches_embedding(seed):
    rng = SeededRng(seed)
    v = random_pure_state([2, 2, 2], rng).amplitudes
    u = ham.NAMED_GATES["CZ"] @ np.kron(ham.ry(0.3), ham.NAMED_GATES["H"])
    targets = [2, 0]
    assert np.allclose(ham.apply_local(v, u, targets, 3), ham.embed_sparse(u, targets, 3) @ v)


def test_pauli_sum_terms():
    terms = ham.pauli_sum_terms([(0.5, "XZI"), (-1.0, "IIY")])
    mat = ham.terms_to_sparse(terms, 3).toarray()
    p = ham.PAULI
    direct = 0.5 * np.kron(np.kron(p["X"], p["Z"]), p["I"]) - np.kron(np.kron(p["I"], p["I"]), p["Y"])
    assert np.allclose(mat, direct)
    with pytest.raises(ValueError):
        ham.pauli_sum_terms([(1.0, "XQ")])


@pytest.mark.parametrize("idx", range(len(CORPUS)))
def test_kitaev_corpus_structure(idx):
    circ = CORPUS[idx]
    kh = ham.kitaev_compile(circ)
    for mat, support in kh.terms:
        assert len(support) <= 5
        assert np.allclose(mat @ mat, mat) and np.allclose(mat, mat.conj().T)
    summary = ham.spectrum_summary(kh.matrix)
    assert summary["min_eigenvalue"] >= -1e-9
    assert summary["kernel_dim"] == 2 ** circ.n_input
    assert summary["gap"] * circ.m ** 2 >= 0.2928


@settings(max_examples=15)
@given(seeds, st.integers(min_value=0, max_value=len(CORPUS) - 1))
def test_history_state_is_ground_state(seed, idx):
    circ = CORPUS[idx]
    kh = ham.kitaev_compile(circ)
    psi = random_pure_state([2] * circ.n_input, SeededRng(seed))
    h = ham.history_state(circ, psi).amplitudes
    assert np.linalg.norm(kh.matrix @ h) <= 1e-10


def test_history_state_clock_weights():
    circ = CORPUS[2]
    h = ham.history_state(circ, np.array([1, 0])).amplitudes.reshape(2 ** circ.n_work, 2 ** circ.m)
    weights = np.sum(np.abs(h) ** 2, axis=0)
    for t in range(circ.m + 1):
        assert weights[ham.clock_index(t, circ.m)] == pytest.approx(1 / (circ.m + 1))
    with pytest.raises(ValueError):
        ham.history_state(circ, np.ones(4) / 2)


def test_single_gate_gap_closed_form():
    # [DERIVED] m = 1: two-level hopping plus the input penalty gives gap 1 - 1/sqrt(2)
    summary = ham.spectrum_summary(ham.kitaev_compile(CORPUS[1]).matrix)
    assert summary["gap"] == pytest.approx(1 - 1 / math.sqrt(2), abs=1e-10)


@pytest.mark.parametrize("idx", [4, 9])
def test_lanczos_matches_dense(idx):
    mat = ham.kitaev_compile(CORPUS[idx]).matrix
    k = 2 ** CORPUS[idx].n_input + 2
    assert np.allclose(ham.lanczos_low_spectrum(mat, k), np.linalg.eigvalsh(mat)[:k], atol=1e-8)


def test_kitaev_guard():
    with pytest.raises(ValueError):
        ham.kitaev_compile(CORPUS[9], guard=5)


def test_gate_circuit_validation_and_json():
    with pytest.raises(ValueError):
        ham.GateCircuit(1, 1, [("FOO", [0])])
    with pytest.raises(IndexError):
        ham.GateCircuit(1, 1, [("X", [2])])
    with pytest.raises(ValueError):
        ham.GateCircuit(1, 1, [(np.diag([1.0, 2.0]), [0])])
    with pytest.raises(ValueError):
        ham.GateCircuit(1, 1, [("CNOT", [0])])
    with pytest.raises(ValueError):
        ham.GateCircuit(1, 1, [])
    circ = CORPUS[8]
    back = ham.GateCircuit.from_json(circ.to_json())
    psi = random_pure_state([2, 2], SeededRng(1)).amplitudes
    assert np.allclose(back.run(psi), circ.run(psi))
    named = ham.GateCircuit.from_json(json.dumps({"n_ancilla": 1, "n_input": 1,
                                                  "gates": [{"gate": "CNOT", "targets": [1, 0]}]}))
    assert named.acceptance(np.array([0, 1])) == pytest.approx(1.0)


def test_sparse_hamiltonian_round_trip_and_check():
    terms = ham.pauli_sum_terms([(1.0, "XX"), (0.5, "ZI")])
    mat = ham.terms_to_sparse(terms, 2).toarray()
    h = ham.SparseHamiltonian.from_matrix(mat)
    h.check(SeededRng(0))
    assert h.d == 2 and h.max_entry == pytest.approx(1.0)
    back = ham.SparseHamiltonian.from_json(h.to_json())
    assert np.allclose(back.to_dense(), mat)
    assert back.entry(0, 3) == pytest.approx(1.0)
    assert ham.SparseHamiltonian.from_matrix(mat).lowest_eigenvalues(1)[0] == pytest.approx(np.linalg.eigvalsh(mat)[0])
    with pytest.raises(ValueError):
        ham.SparseHamiltonian.from_matrix(mat, d=1)


def test_sparse_check_catches_non_hermitian_rows():
    bad = ham.SparseHamiltonian(1, lambda r: [(0, 1.0), (1, 1.0)] if r == 0 else [(1, 1.0)], 2, 1.0)
    with pytest.raises(ValueError):
        bad.check()


def _projection_pair(rng, n=2):
    d = 2 ** n
    h1 = rng.normal((d, d)) + 1j * rng.normal((d, d))
    h1 = (h1 + h1.conj().T) / 4
    v = ham.embed_sparse(ham.P1, [0], n).toarray()
    return h1, v


@given(seeds, st.floats(min_value=10.0, max_value=1000.0))
def test_state_projection_bounds(seed, J):
    rng = SeededRng(seed)
    h1, penalty = _projection_pair(rng)
    rho = random_density([2, 2], rng.derive("rho"))
    res = ham.state_projection_apply(h1, J * penalty, rho, J)
    assert res.distance <= res.delta_bound + 1e-9
    assert res.energy <= res.energy_bound + 1e-9
    assert np.allclose(ham.embed_sparse(ham.P1, [0], 2).toarray() @ res.sigma.matrix, 0, atol=1e-10)


def test_state_projection_rejects_bad_inputs():
    h1, penalty = _projection_pair(SeededRng(0))
    rho = random_density([2, 2], SeededRng(1))
    with pytest.raises(ValueError):
        ham.state_projection_apply(h1, penalty, rho, 0.0)
    with pytest.raises(ValueError):
        ham.state_projection_apply(h1, penalty, rho, 10.0)  # nonzero eigenvalue 1 < J
    with pytest.raises(ValueError):
        ham.state_projection_apply(h1, np.eye(4), rho, 1.0)


def test_local_marginals():
    rho = random_density([2, 2, 2], SeededRng(3))
    (m01, m2) = ham.local_marginals(rho, [[0, 1], [2]])
    assert np.allclose(m01.matrix, partial_trace(rho, {0, 1}).matrix)
    assert np.allclose(m2.matrix, partial_trace(rho, {2}).matrix)
    with pytest.raises(IndexError):
        ham.local_marginals(rho, [[0, 0]])


@settings(max_examples=20)
@given(seeds)
def test_compression_matches_direct_contraction(seed):
    rng = SeededRng(seed)
    n1, n2 = 2, 2
    terms = ham.pauli_sum_terms([(0.7, "XIZX"), (-0.3, "ZZII"), (0.2, "IIYY"), (0.4, "IYXI")])
    terms.append((ham.NAMED_GATES["CNOT"].astype(complex), [3, 1]))
    terms[-1] = ((terms[-1][0] + terms[-1][0].conj().T) / 2, terms[-1][1])
    full = ham.terms_to_sparse(terms, n1 + n2).toarray()
    rho = random_density([2, 2], rng)
    direct = np.einsum("aibj,ba->ij", full.reshape(4, 4, 4, 4), rho.matrix)
    comp = ham.compress_local_hamiltonian(terms, {(0, 1): rho}, n1, n2)
    assert np.allclose(comp, (direct + direct.conj().T) / 2, atol=1e-12)


def test_compression_needs_covering_marginal():
    terms = ham.pauli_sum_terms([(1.0, "XZ")])
    with pytest.raises(ValueError):
        ham.compress_local_hamiltonian(terms, {}, 1, 1)


def _toy_instance():
    mat = np.diag([0.1, 0.4, 0.3, 0.9]).astype(complex)
    h = ham.SparseHamiltonian.from_matrix(mat)
    return ham.QuantifiedHamiltonianInstance(h, (1, 1), 0.2, 0.5, (Quantifier.EXISTS, Quantifier.FORALL),
                                             (Purity.PURE, Purity.PURE))


def test_quantified_instance_validation_and_json():
    inst = _toy_instance()
    back = ham.QuantifiedHamiltonianInstance.from_json(inst.to_json())
    assert back.pattern == inst.pattern and np.allclose(back.H.to_dense(), inst.H.to_dense())
    assert inst.senses == [-1, 1] and inst.dims == [2, 2]
    with pytest.raises(ValueError):
        ham.QuantifiedHamiltonianInstance(inst.H, (1,), 0.2, 0.5, (Quantifier.EXISTS,), (Purity.PURE,))
    with pytest.raises(ValueError):
        ham.QuantifiedHamiltonianInstance(inst.H, (1, 1), 0.5, 0.2, inst.pattern, inst.purities)


def test_grid_energy_on_diagonal_instance():
    # [DERIVED] min over x1 of max over x2 of diag entries: min(max(0.1, 0.4), max(0.3, 0.9)) = 0.4
    assert ham.quantified_energy_grid(_toy_instance(), 0.1).value == pytest.approx(0.4, abs=1e-12)


def test_complement_is_involution_and_negates_value():
    inst = _toy_instance()
    comp = ham.complement_reduce(inst)
    assert (comp.a, comp.b) == (-inst.b, -inst.a)
    assert comp.pattern == (Quantifier.FORALL, Quantifier.EXISTS)
    twice = ham.complement_reduce(comp)
    assert twice.pattern == inst.pattern and np.allclose(twice.H.to_dense(), inst.H.to_dense())
    v = ham.quantified_energy_grid(inst, 0.1).value
    assert ham.quantified_energy_grid(comp, 0.1).value == pytest.approx(-v, abs=1e-12)


def test_classify():
    assert ham.classify(0.1, 0.2, 0.5) == "YES"
    assert ham.classify(0.6, 0.2, 0.5) == "NO"
    assert ham.classify(0.3, 0.2, 0.5) == "GAP"
    assert ham.classify(0.21, 0.2, 0.5, margin=0.02) == "YES"


@pytest.mark.parametrize("kind", ["yes", "no", "yes-graded", "no-graded"])
def test_reduction_structure(kind):
    circ, c, s = ham.psh_fixture(kind)
    red = ham.psh_hardness_reduce(circ, 2, c, s)
    m = circ.m
    assert red.J1 == pytest.approx(10 * (m + 1)) and red.J2 == pytest.approx(100 * red.J1)
    assert red.a == pytest.approx((1 - c) / (m + 1))
    assert red.b == pytest.approx((1 - c + (c - s) / 4) / (m + 1))
    assert red.instance.pattern == (Quantifier.FORALL, Quantifier.EXISTS)
    counts = np.count_nonzero(np.abs(red.matrix) > 0, axis=1)
    assert counts.max() <= red.sparsity_bound
    red.instance.H.check(SeededRng(0))


def test_reduction_honest_energy_matches_acceptance():
    circ, c, s = ham.psh_fixture("yes")
    red = ham.psh_hardness_reduce(circ, 2, c, s)
    phi = PureState([1, 1], normalize=True)
    eta = PureState([0, 1])
    state = red.honest_state([phi, eta])
    e = red.energy([phi, state])
    # history states feel only the output penalty: rejection / (m + 1)
    rej = 1 - circ.acceptance(np.kron(phi.amplitudes, eta.amplitudes))
    assert e == pytest.approx(rej / (red.m + 1), abs=1e-9)


def test_honest_grid_separates_fixtures():
    circ, c, s = ham.psh_fixture("yes")
    red = ham.psh_hardness_reduce(circ, 2, c, s)
    out = ham.honest_energy_grid(red, 0.05)
    assert ham.classify(out["value"], red.a, red.b, out["margin"]) == "YES"


def test_reduction_guards():
    circ, c, s = ham.psh_fixture("yes")
    with pytest.raises(ValueError):
        ham.psh_hardness_reduce(circ, 2, 0.3, 0.5)
    with pytest.raises(ValueError):
        ham.psh_hardness_reduce(circ, 2, c, s, J1=5.0)
    with pytest.raises(ValueError):
        ham.psh_hardness_reduce(circ, 3, c, s)
    with pytest.raises(ValueError):
        ham.psh_hardness_reduce(circ, 2, c, s, guard=4)
    with pytest.raises(ValueError):
        ham.psh_fixture("maybe")


def test_odd_depth_pattern_starts_existential():
    circ = ham.GateCircuit(1, 1, [("CNOT", [1, 0])])
    red = ham.psh_hardness_reduce(circ, 1, 1.0, 0.0)
    assert red.instance.pattern == (Quantifier.EXISTS,)
    # [DERIVED] single existential slot: ground energy of the whole Hamiltonian is a = 0
    assert np.linalg.eigvalsh(red.matrix)[0] == pytest.approx(0.0, abs=1e-9)
