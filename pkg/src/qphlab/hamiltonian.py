"""Sparse and local Hamiltonians, circuit-to-Hamiltonian compilation and quantified energies.

Qubits are numbered big-endian: qubit 0 is the most significant bit of a
basis index.  Local operators are given as ``(matrix, support)`` pairs where
the matrix acts on the support qubits in the listed order.

The quantified energy of an instance uses the opposite orientation to game
values: an existential slot *minimizes* the energy, a universal slot
maximizes it.  YES means energy ``<= a``, NO means energy ``>= b``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .games import GameValueEstimate, Purity, Quantifier, grid_quantified, solve_quantified
from .qstate import DensityOperator, PureState, SeededRng, StateLike, as_density, partial_trace, trace_distance

DENSE_QUBIT_GUARD = 12
KERNEL_TOL = 1e-9

# -- local operators ----------------------------------------------------------------

_SQ2 = 1 / math.sqrt(2)
NAMED_GATES = {
    "I": np.eye(2),
    "X": np.array([[0, 1], [1, 0]]),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1.0, -1.0]),
    "H": np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]]),
    "S": np.diag([1, 1j]),
    "T": np.diag([1, np.exp(1j * np.pi / 4)]),
    "CNOT": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]]),
    "CZ": np.diag([1.0, 1.0, 1.0, -1.0]),
    "SWAP": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]]),
}
PAULI = {k: NAMED_GATES[k].astype(complex) for k in "IXYZ"}

P0 = np.diag([1.0, 0.0])
P1 = np.diag([0.0, 1.0])


def ry(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]])


def _bits(x: np.ndarray, support: Sequence[int], n: int) -> np.ndarray:
    """Index into the support's local space for each global basis index in ``x``."""
    out = np.zeros_like(x)
    for q in support:
        out = (out << 1) | ((x >> (n - 1 - q)) & 1)
    return out


def embed_sparse(local: np.ndarray, support: Sequence[int], n: int) -> sp.csr_matrix:
    """``local`` acting on ``support`` (in that order) tensored with identity elsewhere."""
    support = list(support)
    k = len(support)
    if len(set(support)) != k or any(not 0 <= q < n for q in support):
        raise IndexError(f"bad support {support} for {n} qubits")
    local = np.asarray(local, dtype=complex)
    if local.shape != (2 ** k, 2 ** k):
        raise ValueError("local operator does not match its support size")
    dim = 2 ** n
    cols_all = np.arange(dim)
    loc = _bits(cols_all, support, n)
    mask = 0
    for q in support:
        mask |= 1 << (n - 1 - q)
    rest = cols_all & ~mask
    # global index with local bits replaced: precompute scatter of local index to global bits
    scatter = np.zeros(2 ** k, dtype=np.int64)
    for j in range(2 ** k):
        g = 0
        for pos, q in enumerate(support):
            if (j >> (k - 1 - pos)) & 1:
                g |= 1 << (n - 1 - q)
        scatter[j] = g
    rows, cols, vals = [], [], []
    nz_i, nz_j = np.nonzero(np.abs(local) > 0)
    for i, j in zip(nz_i, nz_j):
        sel = loc == j
        c = cols_all[sel]
        r = rest[sel] | scatter[i]
        rows.append(r)
        cols.append(c)
        vals.append(np.full(c.size, local[i, j]))
    if not rows:
        return sp.csr_matrix((dim, dim), dtype=complex)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim))


def terms_to_sparse(terms: Sequence[tuple[np.ndarray, Sequence[int]]], n: int,
                    weights: Sequence[float] | None = None) -> sp.csr_matrix:
    total = sp.csr_matrix((2 ** n, 2 ** n), dtype=complex)
    for idx, (mat, sup) in enumerate(terms):
        w = 1.0 if weights is None else weights[idx]
        total = total + w * embed_sparse(mat, sup, n)
    return total.tocsr()


def apply_local(vec: np.ndarray, u: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    k = len(targets)
    t = vec.reshape([2] * n)
    t = np.tensordot(u.reshape([2] * (2 * k)), t, axes=(list(range(k, 2 * k)), list(targets)))
    t = np.moveaxis(t, list(range(k)), list(targets))
    return t.reshape(-1)


def pauli_sum_terms(spec: Sequence[tuple[float, str]]) -> list[tuple[np.ndarray, list[int]]]:
    """``[(coef, "XZI"), ...]`` to local terms acting only on the non-identity positions."""
    terms = []
    for coef, word in spec:
        word = word.upper()
        if any(ch not in PAULI for ch in word):
            raise ValueError(f"bad Pauli string {word!r}")
        support = [q for q, ch in enumerate(word) if ch != "I"]
        if not support:
            support = [0]
        mat = np.array([[1.0 + 0j]])
        for q in support:
            mat = np.kron(mat, PAULI[word[q]])
        terms.append((coef * mat, support))
    return terms


# -- sparse row oracles ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SparseHamiltonian:
    """Row-oracle Hamiltonian: ``row_fn(r)`` lists ``(column, entry)`` pairs of row ``r``."""

    n_qubits: int
    row_fn: Callable[[int], list]
    d: int
    max_entry: float

    @property
    def dim(self) -> int:
        return 2 ** self.n_qubits

    def row(self, r: int) -> list:
        if not 0 <= r < self.dim:
            raise IndexError("row out of range")
        return self.row_fn(r)

    def entry(self, r: int, c: int) -> complex:
        for col, v in self.row(r):
            if col == c:
                return v
        return 0j

    @classmethod
    def from_matrix(cls, mat, d: int | None = None, tol: float = 0.0) -> "SparseHamiltonian":
        m = sp.csr_matrix(mat, dtype=complex)
        m.eliminate_zeros()
        if tol > 0:
            m.data[np.abs(m.data) <= tol] = 0
            m.eliminate_zeros()
        n = int(round(math.log2(m.shape[0])))
        if 2 ** n != m.shape[0]:
            raise ValueError("dimension must be a power of two")
        counts = np.diff(m.indptr)
        sparsity = int(counts.max()) if counts.size else 0
        if d is not None and sparsity > d:
            raise ValueError(f"matrix has {sparsity} nonzeros in a row, above the declared {d}")
        max_entry = float(np.abs(m.data).max()) if m.nnz else 0.0

        def row_fn(r: int, m=m):
            lo, hi = m.indptr[r], m.indptr[r + 1]
            return [(int(c), complex(v)) for c, v in zip(m.indices[lo:hi], m.data[lo:hi])]

        return cls(n, row_fn, d if d is not None else sparsity, max_entry)

    def to_sparse(self) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for r in range(self.dim):
            for c, v in self.row(r):
                rows.append(r)
                cols.append(c)
                vals.append(v)
        return sp.csr_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(self.dim, self.dim))

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def check(self, rng: SeededRng | None = None, n_rows: int | None = None, tol: float = 1e-12) -> None:
        """Spot-check Hermiticity, sparsity and the entry bound (all rows when ``n_rows`` is None)."""
        rows = range(self.dim) if n_rows is None else rng.integers(0, self.dim, size=n_rows)
        for r in rows:
            entries = self.row(int(r))
            if len(entries) > self.d:
                raise ValueError(f"row {r} has {len(entries)} > {self.d} nonzeros")
            for c, v in entries:
                if abs(v) > self.max_entry + tol:
                    raise ValueError(f"entry ({r},{c}) exceeds the declared bound")
                if abs(self.entry(c, int(r)) - np.conj(v)) > tol:
                    raise ValueError(f"entry ({r},{c}) breaks Hermiticity")

    def to_json(self) -> str:
        rows = {}
        for r in range(self.dim):
            ent = self.row(r)
            if ent:
                rows[str(r)] = [[c, v.real, v.imag] for c, v in ent]
        return json.dumps({"n_qubits": self.n_qubits, "d": self.d, "max_entry": self.max_entry, "rows": rows},
                          sort_keys=True)

    @classmethod
    def from_json(cls, text) -> "SparseHamiltonian":
        obj = json.loads(text) if isinstance(text, str) else text
        n = int(obj["n_qubits"])
        table = {int(r): [(int(c), complex(re, im)) for c, re, im in ent] for r, ent in obj["rows"].items()}
        return cls(n, lambda r: list(table.get(r, [])), int(obj["d"]), float(obj["max_entry"]))

    def lowest_eigenvalues(self, k: int = 1) -> np.ndarray:
        """Lanczos for large matrices, dense diagonalization otherwise."""
        m = self.to_sparse()
        if self.dim <= 256 or k >= self.dim - 1:
            return np.linalg.eigvalsh(m.toarray())[:k]
        return np.sort(eigsh(m, k=k, which="SA", return_eigenvectors=False, tol=1e-12))


# -- circuits and the clock construction ---------------------------------------------


@dataclass(frozen=True, eq=False)
class GateCircuit:
    """``U_m ... U_1`` on ``n_ancilla + n_input`` qubits (ancillas first)."""

    n_ancilla: int
    n_input: int
    gates: tuple

    def __init__(self, n_ancilla: int, n_input: int, gates: Sequence[tuple]):
        n = n_ancilla + n_input
        parsed = []
        for g in gates:
            u, targets = g
            if isinstance(u, str):
                if u not in NAMED_GATES:
                    raise ValueError(f"unknown gate {u!r}")
                u = NAMED_GATES[u]
            u = np.asarray(u, dtype=complex)
            targets = tuple(int(t) for t in targets)
            if not 1 <= len(targets) <= 2 or len(set(targets)) != len(targets):
                raise ValueError("gates act on one or two distinct qubits")
            if any(not 0 <= t < n for t in targets):
                raise IndexError(f"gate targets {targets} out of range")
            if u.shape != (2 ** len(targets),) * 2:
                raise ValueError("gate matrix does not match its targets")
            if np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) > 1e-10:
                raise ValueError("gate is not unitary")
            parsed.append((u, targets))
        if not parsed:
            raise ValueError("circuit needs at least one gate")
        if n_ancilla < 0 or n_input < 0 or n < 1:
            raise ValueError("bad register sizes")
        object.__setattr__(self, "n_ancilla", int(n_ancilla))
        object.__setattr__(self, "n_input", int(n_input))
        object.__setattr__(self, "gates", tuple(parsed))

    @property
    def m(self) -> int:
        return len(self.gates)

    @property
    def n_work(self) -> int:
        return self.n_ancilla + self.n_input

    def run(self, psi: np.ndarray, steps: int | None = None) -> np.ndarray:
        """``U_steps ... U_1 (|0^a> (x) psi)``."""
        v = np.zeros(2 ** self.n_ancilla, dtype=complex)
        v[0] = 1
        v = np.kron(v, np.asarray(psi, dtype=complex))
        for u, targets in self.gates[: self.m if steps is None else steps]:
            v = apply_local(v, u, targets, self.n_work)
        return v

    def to_json(self) -> str:
        gates = [{"targets": list(t), "re": u.real.tolist(), "im": u.imag.tolist()} for u, t in self.gates]
        return json.dumps({"n_ancilla": self.n_ancilla, "n_input": self.n_input, "gates": gates}, sort_keys=True)

    @classmethod
    def from_json(cls, text) -> "GateCircuit":
        """Gates are ``{"gate": name, "targets": [...]}`` or ``{"re": ..., "im": ..., "targets": [...]}``."""
        obj = json.loads(text) if isinstance(text, str) else text
        gates = []
        for g in obj["gates"]:
            if "gate" in g:
                u = g["gate"]
            else:
                u = np.asarray(g["re"], dtype=float) + 1j * np.asarray(g.get("im", np.zeros_like(g["re"])))
            gates.append((u, g["targets"]))
        return cls(int(obj["n_ancilla"]), int(obj["n_input"]), gates)

    def acceptance(self, psi: np.ndarray, output_qubit: int = 0) -> float:
        """Probability that ``output_qubit`` reads 1 after the circuit."""
        v = self.run(psi).reshape([2] * self.n_work)
        return float(np.sum(np.abs(np.take(v, 1, axis=output_qubit)) ** 2))


@dataclass
class KitaevHamiltonian:
    matrix: np.ndarray
    terms: list
    labels: list
    n_qubits: int
    registers: dict


def clock_index(t: int, m: int) -> int:
    """Basis index of the unary clock ``|1^t 0^(m-t)>``."""
    return ((1 << t) - 1) << (m - t)


def kitaev_terms(circ: GateCircuit, offset: int = 0) -> tuple[list, list, dict]:
    """Input, clock and propagation projectors of the unary-clock construction."""
    a, b, m = circ.n_ancilla, circ.n_input, circ.m
    anc = [offset + j for j in range(a)]
    clock = [offset + a + b + j for j in range(m)]
    terms, labels = [], []
    for j in anc:
        terms.append((np.kron(P1, P0), [j, clock[0]]))
        labels.append(f"in[{j - offset}]")
    for t in range(m - 1):
        terms.append((np.kron(P0, P1), [clock[t], clock[t + 1]]))
        labels.append(f"clock[{t + 1}]")
    for t in range(1, m + 1):
        u, targets = circ.gates[t - 1]
        targets = [offset + q for q in targets]
        if m == 1:
            csup, before, after = [clock[0]], 0b0, 0b1
            nc = 1
        elif t == 1:
            csup, before, after, nc = [clock[0], clock[1]], 0b00, 0b10, 2
        elif t == m:
            csup, before, after, nc = [clock[m - 2], clock[m - 1]], 0b10, 0b11, 2
        else:
            csup, before, after, nc = [clock[t - 2], clock[t - 1], clock[t]], 0b100, 0b110, 3
        dc = 2 ** nc
        eb = np.zeros((dc, dc))
        eb[before, before] = 1
        ea = np.zeros((dc, dc))
        ea[after, after] = 1
        up = np.zeros((dc, dc))
        up[after, before] = 1
        ident = np.eye(u.shape[0])
        mat = 0.5 * (np.kron(ident, eb) + np.kron(ident, ea) - np.kron(u, up) - np.kron(u.conj().T, up.T))
        terms.append((mat, targets + csup))
        labels.append(f"prop[{t}]")
    regs = {"A": anc, "B": [offset + a + j for j in range(b)], "C": clock}
    return terms, labels, regs


def kitaev_compile(circ: GateCircuit, guard: int = DENSE_QUBIT_GUARD) -> KitaevHamiltonian:
    n = circ.n_work + circ.m
    if n > guard:
        raise ValueError(f"{n} qubits exceed the dense guard {guard}")
    terms, labels, regs = kitaev_terms(circ)
    mat = terms_to_sparse(terms, n).toarray()
    return KitaevHamiltonian((mat + mat.conj().T) / 2, terms, labels, n, regs)


def history_state(circ: GateCircuit, psi: PureState | np.ndarray) -> PureState:
    vec = psi.amplitudes if isinstance(psi, PureState) else np.asarray(psi, dtype=complex)
    if vec.size != 2 ** circ.n_input:
        raise ValueError(f"input must have {2 ** circ.n_input} amplitudes")
    m = circ.m
    n = circ.n_work + m
    if n > 24:
        raise ValueError("history state too large")
    out = np.zeros(2 ** n, dtype=complex)
    v = circ.run(vec, 0)
    for t in range(m + 1):
        if t > 0:
            u, targets = circ.gates[t - 1]
            v = apply_local(v, u, targets, circ.n_work)
        e = np.zeros(2 ** m)
        e[clock_index(t, m)] = 1
        out += np.kron(v, e)
    out /= math.sqrt(m + 1)
    return PureState(out, [2] * n, normalize=True)


def spectrum_summary(mat: np.ndarray, tol: float = KERNEL_TOL) -> dict:
    w = np.linalg.eigvalsh(mat)
    kernel = int(np.sum(np.abs(w) <= tol))
    positive = w[w > tol]
    return {
        "min_eigenvalue": float(w[0]),
        "kernel_dim": kernel,
        "gap": float(positive[0]) if positive.size else float("inf"),
        "norm": float(np.max(np.abs(w))),
    }


def lanczos_low_spectrum(mat, k: int) -> np.ndarray:
    """Second route to the low spectrum through ARPACK's Lanczos iteration."""
    m = sp.csr_matrix(mat)
    if k >= m.shape[0] - 1:
        return np.linalg.eigvalsh(m.toarray())[:k]
    return np.sort(eigsh(m, k=k, which="SA", return_eigenvectors=False, tol=1e-12, maxiter=100000))


# -- projection and marginals ---------------------------------------------------------


class ProjectionResult(NamedTuple):
    sigma: DensityOperator
    distance: float
    energy: float
    delta_bound: float
    energy_bound: float


def state_projection_apply(h1: np.ndarray, h2: np.ndarray, rho: StateLike, J: float,
                           eps: float | None = None, tol: float = 1e-9) -> ProjectionResult:
    """Project ``rho`` onto ``ker H2`` and check the distance and energy bounds.

    ``delta = sqrt((eps + ||H1||)/J)`` and ``tr(H sigma) <= eps + 2 delta ||H1||``
    with ``eps = tr((H1 + H2) rho)``.
    """
    if J <= 0:
        raise ValueError("J must be positive")
    h1 = np.asarray(h1, dtype=complex)
    h2 = np.asarray(h2, dtype=complex)
    w, v = np.linalg.eigh((h2 + h2.conj().T) / 2)
    ker = np.abs(w) <= tol
    if not ker.any():
        raise ValueError("H2 has an empty kernel")
    if np.any(w[~ker] < J - tol):
        raise ValueError("nonzero eigenvalues of H2 must be at least J")
    proj = v[:, ker] @ v[:, ker].conj().T
    r = as_density(rho)
    h = h1 + h2
    e_rho = float(np.real(np.trace(h @ r.matrix)))
    eps = e_rho if eps is None else eps
    if e_rho > eps + tol:
        raise ValueError("tr(H rho) exceeds the given eps")
    projected = proj @ r.matrix @ proj
    weight = float(np.real(np.trace(projected)))
    if weight <= 1e-14:
        raise ValueError("rho has no weight on ker H2")
    sigma = DensityOperator(projected / weight, r.layout)
    norm_h1 = float(np.linalg.norm(h1, 2))
    delta = math.sqrt(max(eps + norm_h1, 0.0) / J)
    dist = trace_distance(r, sigma)
    energy = float(np.real(np.trace(h @ sigma.matrix)))
    ebound = eps + 2 * delta * norm_h1
    if dist > delta + tol or energy > ebound + tol:
        raise AssertionError(f"projection bounds violated: distance {dist} vs {delta}, energy {energy} vs {ebound}")
    return ProjectionResult(sigma, dist, energy, delta, ebound)


def local_marginals(rho: StateLike, supports: Sequence[Sequence[int]]) -> list[DensityOperator]:
    r = as_density(rho)
    n = r.layout.n_factors
    out = []
    for sup in supports:
        sup = list(sup)
        if not sup or len(set(sup)) != len(sup) or any(not 0 <= q < n for q in sup):
            raise IndexError(f"bad support {sup}")
        out.append(partial_trace(r, set(sup)))
    return out


def _reorder_local(mat: np.ndarray, support: Sequence[int], order: Sequence[int]) -> np.ndarray:
    """Rewrite a local operator on ``support`` so that its qubits follow ``order``."""
    k = len(support)
    perm = [list(support).index(q) for q in order]
    t = np.asarray(mat).reshape([2] * (2 * k))
    t = t.transpose(perm + [k + p for p in perm])
    return t.reshape(2 ** k, 2 ** k)


def compress_local_hamiltonian(terms: Sequence[tuple[np.ndarray, Sequence[int]]],
                               marginals: Mapping[tuple, DensityOperator], n_first: int,
                               n_second: int) -> np.ndarray:
    """Effective operator on the second slot given marginals of the first-slot state.

    Qubits ``0..n_first-1`` form the first slot.  ``marginals`` maps sorted
    tuples of first-slot qubits to reduced states; a marginal on a superset is
    reduced further as needed.
    """
    dim2 = 2 ** n_second
    out = np.zeros((dim2, dim2), dtype=complex)
    for mat, support in terms:
        s1 = sorted(q for q in support if q < n_first)
        s2 = sorted(q for q in support if q >= n_first)
        if any(q >= n_first + n_second for q in support):
            raise IndexError("term support outside the two slots")
        if not s1:
            out += embed_sparse(_reorder_local(mat, support, s2), [q - n_first for q in s2], n_second).toarray()
            continue
        rho_s1 = None
        key = tuple(s1)
        if key in marginals:
            rho_s1 = as_density(marginals[key]).matrix
        else:
            for other, marg in marginals.items():
                if set(s1) <= set(other):
                    keep = {sorted(other).index(q) for q in s1}
                    rho_s1 = partial_trace(as_density(marg), keep).matrix
                    break
        if rho_s1 is None:
            raise ValueError(f"no marginal covers first-slot qubits {s1}")
        local = _reorder_local(mat, support, s1 + s2)
        k1, k2 = len(s1), len(s2)
        t = local.reshape(2 ** k1, 2 ** k2, 2 ** k1, 2 ** k2)
        eff = np.einsum("aibj,ba->ij", t, rho_s1)
        if k2 == 0:
            out += eff[0, 0] * np.eye(dim2)
        else:
            out += embed_sparse(eff, [q - n_first for q in s2], n_second).toarray()
    return (out + out.conj().T) / 2


# -- quantified instances ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuantifiedHamiltonianInstance:
    H: SparseHamiltonian
    slot_qubits: tuple[int, ...]
    a: float
    b: float
    pattern: tuple[Quantifier, ...]
    purities: tuple[Purity, ...]
    gap: float | None = None

    def __post_init__(self):
        if sum(self.slot_qubits) != self.H.n_qubits:
            raise ValueError("slot sizes must add up to the Hamiltonian's qubit count")
        if len(self.pattern) != len(self.slot_qubits) or len(self.purities) != len(self.slot_qubits):
            raise ValueError("one quantifier and purity flag per slot")
        if self.b < self.a:
            raise ValueError("need a <= b")
        if self.gap is not None and self.b - self.a < self.gap - 1e-15:
            raise ValueError("thresholds closer than the declared gap")

    def to_json(self) -> str:
        return json.dumps({
            "H": json.loads(self.H.to_json()),
            "slot_qubits": list(self.slot_qubits),
            "a": self.a,
            "b": self.b,
            "pattern": [q.value for q in self.pattern],
            "purities": [p.value for p in self.purities],
            "gap": self.gap,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text) -> "QuantifiedHamiltonianInstance":
        obj = json.loads(text) if isinstance(text, str) else text
        return cls(SparseHamiltonian.from_json(obj["H"]), tuple(obj["slot_qubits"]), float(obj["a"]), float(obj["b"]),
                   tuple(Quantifier(q) for q in obj["pattern"]), tuple(Purity(p) for p in obj["purities"]),
                   obj.get("gap"))

    @property
    def senses(self) -> list[int]:
        # existential slots minimize energy
        return [-q.sense for q in self.pattern]

    @property
    def dims(self) -> list[int]:
        return [2 ** k for k in self.slot_qubits]


def complement_reduce(inst: QuantifiedHamiltonianInstance) -> QuantifiedHamiltonianInstance:
    """``(H, a, b) -> (-H, -b, -a)`` with every quantifier flipped."""
    src = inst.H

    def row_fn(r: int, src=src):
        return [(c, -v) for c, v in src.row(r)]

    neg = SparseHamiltonian(src.n_qubits, row_fn, src.d, src.max_entry)
    return QuantifiedHamiltonianInstance(neg, inst.slot_qubits, -inst.b, -inst.a,
                                         tuple(q.flipped() for q in inst.pattern), inst.purities, inst.gap)


def quantified_energy_grid(inst: QuantifiedHamiltonianInstance, resolution: float = 0.01,
                           matrix: np.ndarray | None = None) -> GameValueEstimate:
    mat = inst.H.to_dense() if matrix is None else matrix
    return grid_quantified(mat, inst.dims, inst.senses, resolution)


def quantified_energy_solver(inst: QuantifiedHamiltonianInstance, rng: SeededRng, restarts: int = 8,
                             matrix: np.ndarray | None = None) -> GameValueEstimate:
    mat = inst.H.to_dense() if matrix is None else matrix
    return solve_quantified(mat, inst.dims, inst.senses, list(inst.purities), rng, restarts=restarts)


def classify(value: float, a: float, b: float, margin: float = 0.0) -> str:
    if value <= a + margin:
        return "YES"
    if value >= b - margin:
        return "NO"
    return "GAP"


# -- hardness reduction --------------------------------------------------------------


@dataclass
class ReductionOutput:
    instance: QuantifiedHamiltonianInstance
    matrix: np.ndarray
    J1: float
    J2: float
    m: int
    a: float
    b: float
    c: float
    s: float
    registers: dict
    circuit: GateCircuit
    message_qubits: int
    sparsity_bound: int
    padding: int = 0
    notes: dict = field(default_factory=dict)

    def honest_state(self, messages: Sequence[PureState | np.ndarray]) -> PureState:
        """Last-slot history state on input ``messages`` (all ``i`` message registers)."""
        vec = np.array([1.0 + 0j])
        for msg in messages:
            vec = np.kron(vec, msg.amplitudes if isinstance(msg, PureState) else np.asarray(msg, dtype=complex))
        h = history_state(self.circuit, vec).amplitudes
        if self.padding:
            pad = np.zeros(2 ** self.padding)
            pad[0] = 1
            h = np.kron(h, pad)
        return PureState(h, [2] * int(round(math.log2(h.size))))

    def energy(self, states: Sequence[PureState]) -> float:
        v = np.array([1.0 + 0j])
        for s in states:
            v = np.kron(v, s.amplitudes)
        return float(np.real(np.vdot(v, self.matrix @ v)))


def psh_hardness_reduce(circ: GateCircuit, i: int, c: float, s: float, J1: float | None = None,
                        J2: float | None = None, pad: int = 0, guard: int = DENSE_QUBIT_GUARD) -> ReductionOutput:
    """Hamiltonian whose quantified ground energy separates YES from NO instances of ``circ``.

    Slots are ``H_1 .. H_{i-1}`` (one message register each) followed by the
    last slot ``A B C`` holding ancillas, a copy of all ``i`` messages and the
    clock.  Terms: an output penalty at the final clock time, a ``J1`` symmetry
    penalty between the early slots and their copies at clock time zero, and
    ``J2`` times the clock Hamiltonian of ``circ``.
    """
    if not 0 <= s < c <= 1:
        raise ValueError("need 0 <= s < c <= 1")
    if i < 1:
        raise ValueError("need at least one quantifier")
    if circ.n_ancilla < 1:
        raise ValueError("the circuit needs an ancilla output qubit")
    if circ.n_input % i:
        raise ValueError("input qubits must split evenly into i messages")
    p = circ.n_input // i
    m = circ.m
    J1 = 10.0 * (m + 1) if J1 is None else float(J1)
    J2 = 100.0 * J1 if J2 is None else float(J2)
    if not J2 >= 10 * J1 >= 100:
        raise ValueError("penalties must satisfy J2 >= 10 J1 >= 100")
    early = (i - 1) * p
    n = early + circ.n_work + m + pad
    if n > guard:
        raise ValueError(f"{n} qubits exceed the dense guard {guard}")
    kt, _, regs = kitaev_terms(circ, offset=early)
    a_reg, b_reg, c_reg = regs["A"], regs["B"], regs["C"]
    out_term = (np.kron(P0, P1), [a_reg[0], c_reg[-1]])
    terms = [out_term]
    weights = [1.0]
    if early:
        h_regs = list(range(early))
        b_copies = b_reg[:early]
        # (I - F)/2 swapping H_1..H_{i-1} with B_1..B_{i-1}, tensored with |0><0| on C_1
        k = early
        dim = 2 ** k
        f = np.zeros((dim * dim, dim * dim))
        for x in range(dim):
            for y in range(dim):
                f[y * dim + x, x * dim + y] = 1
        anti = (np.eye(dim * dim) - f) / 2
        terms.append((np.kron(P0, anti), [c_reg[0]] + h_regs + b_copies))
        weights.append(J1)
    terms += kt
    weights += [J2] * len(kt)
    mat = terms_to_sparse(terms, n, weights)
    mat = ((mat + mat.conj().T) / 2).tocsr()
    sparsity_bound = 4 * m + 2 + (1 if early else 0)
    H = SparseHamiltonian.from_matrix(mat, d=sparsity_bound)
    gamma = c - s
    a = (1 - c) / (m + 1)
    b = (1 - c + gamma / 4) / (m + 1)
    if i % 2 == 0:
        pattern = tuple(Quantifier.FORALL if j % 2 == 0 else Quantifier.EXISTS for j in range(i))
    else:
        pattern = tuple(Quantifier.EXISTS if j % 2 == 0 else Quantifier.FORALL for j in range(i))
    slots = tuple([p] * (i - 1) + [circ.n_work + m + pad])
    inst = QuantifiedHamiltonianInstance(H, slots, a, b, pattern, tuple([Purity.PURE] * i))
    layout = {"H": list(range(early)), "A": a_reg, "B": b_reg, "C": c_reg,
              "pad": list(range(n - pad, n))}
    return ReductionOutput(inst, mat.toarray(), J1, J2, m, a, b, c, s, layout, circ, p, sparsity_bound, pad)


def honest_energy_grid(red: ReductionOutput, resolution: float = 0.01) -> dict:
    """Max over gridded first messages of the best history-state energy for two-slot reductions.

    For each first message ``phi`` the last slot is restricted to history
    states of inputs ``phi (x) eta``; the energy is a quadratic form in
    ``eta`` whose minimum is an eigenvalue.  Only the output penalty can be
    nonzero on those states, so the result moves by at most ``d_tr/(m+1)``
    when ``phi`` moves; that is the reported margin.
    """
    from .games import bloch_grid

    inst = red.instance
    if len(inst.slot_qubits) != 2 or red.message_qubits != 1:
        raise ValueError("honest grid check supports two slots with one-qubit messages")
    grid, meta = bloch_grid(resolution)
    eye = np.eye(2)
    # cols[x1, x2, y] = |x1> (x) history(|x2> (x) |y>); the strategy is quadratic in phi
    cols = np.array([[[np.kron(eye[x1], red.honest_state([eye[x2], eye[y]]).amplitudes) for y in range(2)]
                      for x2 in range(2)] for x1 in range(2)])
    flat = cols.reshape(8, -1)
    g = (flat.conj() @ red.matrix @ flat.T).reshape(2, 2, 2, 2, 2, 2)
    pair = np.einsum("pa,pb->pab", grid, grid)
    gram = np.einsum("pab,pcd,abycdz->pyz", pair.conj(), pair, g, optimize=True)
    from .games import _eig2

    lo, _ = _eig2((gram + np.conj(np.swapaxes(gram, 1, 2))) / 2)
    arg = int(np.argmax(lo))
    radius = meta["covering_trace_distance"]
    return {"value": float(lo[arg]), "argmax": arg, "margin": radius / (red.m + 1), "grid": meta}


def circuit_corpus() -> list[GateCircuit]:
    """Deterministic set of small circuits (``m <= 5``, at most 10 qubits with the clock)."""
    theta = 0.7
    u2 = np.kron(ry(theta), NAMED_GATES["H"]) @ NAMED_GATES["CNOT"]
    return [
        GateCircuit(0, 1, [("I", [0])]),
        GateCircuit(1, 1, [("X", [0])]),
        GateCircuit(1, 1, [("H", [1]), ("CNOT", [1, 0])]),
        GateCircuit(1, 2, [("H", [1]), ("CNOT", [1, 0]), ("T", [0])]),
        GateCircuit(1, 2, [("H", [0]), ("CZ", [0, 2]), ("SWAP", [1, 2]), ("H", [2])]),
        GateCircuit(2, 1, [("H", [0]), ("CNOT", [0, 1]), ("CNOT", [2, 1]), ("S", [1]), ("H", [0])]),
        GateCircuit(0, 3, [("SWAP", [0, 1]), ("SWAP", [1, 2]), ("CZ", [0, 2])]),
        GateCircuit(1, 2, [(ry(theta), [0]), ("CNOT", [2, 0])]),
        GateCircuit(1, 2, [(u2, [0, 1]), (u2, [1, 2]), ("X", [0]), (u2, [2, 0])]),
        GateCircuit(2, 2, [("H", [2]), ("CNOT", [2, 3]), ("CNOT", [3, 0]), ("SWAP", [0, 1]), ("T", [1])]),
        GateCircuit(1, 3, [("H", [1]), ("CNOT", [1, 2]), ("CZ", [2, 3]), ("CNOT", [3, 0])]),
        GateCircuit(0, 2, [("H", [0]), ("H", [1]), ("CZ", [0, 1]), ("H", [0]), ("H", [1])]),
    ]


def psh_fixture(kind: str) -> tuple[GateCircuit, float, float]:
    """Two-message verifiers on ``A_1 B_1 B_2`` with thresholds ``(c, s)``.

    ``yes``/``no`` accept iff the second / first message reads 1 (``c = 1, s = 0``);
    ``yes-graded``/``no-graded`` rotate the output first so that the same test
    succeeds with probability 0.9 and fails with probability 0.1.
    """
    tilt = 2 * math.asin(math.sqrt(0.1))
    table = {
        "yes": ([("I", [1]), ("CNOT", [2, 0])], 1.0, 0.0),
        "no": ([("H", [2]), ("CNOT", [1, 0])], 1.0, 0.0),
        "yes-graded": ([(ry(tilt), [0]), ("X", [0]), ("CNOT", [2, 0])], 0.9, 0.1),
        "no-graded": ([(ry(tilt), [0]), ("I", [2]), ("CNOT", [1, 0])], 0.9, 0.1),
    }
    if kind not in table:
        raise ValueError(f"unknown fixture {kind!r}")
    gates, c, s = table[kind]
    return GateCircuit(1, 2, gates), c, s
