"""Hitting sets, an ensemble-level disentangler and a toy transcript amplifier.

States entering the disentangler are explicit convex mixtures of copies of
pure states, ``sum_i w_i |chi_i><chi_i|^{(x) n}``.  Everything downstream of the
inner channel (product-test filtering, the zero fallback, diagnostics) is
computed exactly on those components.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .games import GameInstance, Quantifier
from .protocols import CutSpec, product_accept_prob, swap_accept_prob
from .qstate import PureState, SeededRng, tensor

WEIGHT_TOL = 1e-10


# -- hitting sets ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PeakedInstance:
    """Independent distributions ``p, q`` on ``range(N)`` and an event ``S`` of pairs."""

    N: int
    p: np.ndarray
    q: np.ndarray
    S: frozenset
    gamma: float

    def __init__(self, p, q, S, gamma: float, N: int | None = None):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        n = len(p) if N is None else int(N)
        if p.shape != (n,) or q.shape != (n,):
            raise ValueError("p and q must both have length N")
        for name, v in (("p", p), ("q", q)):
            if np.any(v < 0) or abs(v.sum() - 1) > 1e-12:
                raise ValueError(f"{name} is not a probability vector")
        pairs = frozenset((int(i), int(j)) for i, j in S)
        if any(not (0 <= i < n and 0 <= j < n) for i, j in pairs):
            raise IndexError("pair index out of range")
        if not 0 < gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        object.__setattr__(self, "N", n)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "S", pairs)
        object.__setattr__(self, "gamma", float(gamma))

    @property
    def membership(self) -> np.ndarray:
        m = np.zeros((self.N, self.N), dtype=bool)
        for i, j in self.S:
            m[i, j] = True
        return m

    @property
    def row_mass(self) -> np.ndarray:
        """``q(S_i)`` for every row ``i``."""
        return self.membership.astype(float) @ self.q

    @property
    def eps(self) -> float:
        return float(self.p @ self.row_mass)

    def bound(self) -> int:
        """Size bound ``ceil(1/(e eps gamma))``."""
        return int(math.ceil(1.0 / (math.e * self.eps * self.gamma)))

    def to_json(self) -> str:
        obj = {"N": self.N, "p": self.p.tolist(), "q": self.q.tolist(), "S": sorted(list(x) for x in self.S),
               "gamma": self.gamma}
        return json.dumps(obj, sort_keys=True)

    @classmethod
    def from_json(cls, text) -> "PeakedInstance":
        obj = json.loads(text) if isinstance(text, str) else text
        return cls(obj["p"], obj["q"], obj["S"], obj["gamma"], obj["N"])

    @classmethod
    def random(cls, n: int, rng: SeededRng, density: float = 0.3, gamma: float = 0.25) -> "PeakedInstance":
        p = rng.generator.dirichlet(np.ones(n))
        q = rng.generator.dirichlet(np.ones(n))
        mask = rng.random((n, n)) < density
        if not mask.any():
            mask[0, 0] = True
        pairs = list(zip(*np.nonzero(mask)))
        return cls(p, q, pairs, gamma)


def miss_mass(inst: PeakedInstance, X) -> float:
    """``Z = sum_{i : S_i and X disjoint} p_i q(S_i)``: mass of ``S`` whose row misses ``X``."""
    cols = np.zeros(inst.N, dtype=bool)
    cols[list(X)] = True
    hit = (inst.membership & cols[None, :]).any(axis=1)
    return float(np.sum(inst.p * inst.row_mass * ~hit))


def expected_miss_mass(inst: PeakedInstance, m: int) -> float:
    """``E_X[Z] = sum_i p_i q(S_i) (1 - q(S_i))^m`` for ``m`` i.i.d. draws from ``q``."""
    r = inst.row_mass
    return float(np.sum(inst.p * r * (1 - r) ** m))


def conditional_coverage(inst: PeakedInstance, X) -> float:
    """``Pr[exists k in X with (i, k) in S | (i, j) in S]``."""
    return 1.0 - miss_mass(inst, X) / inst.eps


def hitting_set(inst: PeakedInstance, rng: SeededRng) -> tuple[set, int]:
    """Sample ``m = ceil(1/(e eps gamma))`` indices from ``q``; duplicates collapse."""
    eps = inst.eps
    if eps <= 0:
        raise ValueError("S has probability zero")
    if not 0 < inst.gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    m = inst.bound()
    draws = rng.generator.choice(inst.N, size=m, p=inst.q)
    return set(int(x) for x in draws), m


def hitting_set_exact(inst: PeakedInstance, max_n: int = 16) -> tuple[set, int]:
    """Smallest ``X`` with conditional coverage ``>= 1 - gamma``, by exhaustive search."""
    if inst.N > max_n:
        raise ValueError(f"N = {inst.N} exceeds the exhaustive-search guard {max_n}")
    eps = inst.eps
    if eps <= 0:
        raise ValueError("S has probability zero")
    target = inst.gamma * eps + 1e-12
    weight = inst.p * inst.row_mass
    rows = (inst.membership.astype(np.int64) << np.arange(inst.N, dtype=np.int64)[None, :]).sum(axis=1)
    for size in range(inst.N + 1):
        if size == 0:
            if eps <= target:
                return set(), 0
            continue
        combos = np.array(list(itertools.combinations(range(inst.N), size)), dtype=np.int64)
        masks = np.bitwise_or.reduce(np.int64(1) << combos, axis=1)
        missed = (rows[None, :] & masks[:, None]) == 0
        z = missed.astype(float) @ weight
        ok = np.nonzero(z <= target)[0]
        if ok.size:
            x = combos[ok[0]]
            return set(int(v) for v in x), size
    raise RuntimeError("no admissible set found")  # unreachable: X = [N] has Z = 0


# -- ensembles and the disentangler --------------------------------------------------


@dataclass(frozen=True, eq=False)
class StateEnsemble:
    """``sum_i w_i |chi_i><chi_i|^{(x) copy_count}``."""

    components: tuple
    copy_count: int

    def __init__(self, components: Sequence[tuple[float, PureState]], copy_count: int):
        comps = tuple((float(w), s) for w, s in components)
        if not comps:
            raise ValueError("empty ensemble")
        ws = np.array([w for w, _ in comps])
        if np.any(ws < -WEIGHT_TOL) or abs(ws.sum() - 1) > WEIGHT_TOL:
            raise ValueError(f"weights must be nonnegative and sum to 1, got sum {ws.sum()!r}")
        layout = comps[0][1].layout
        if any(s.layout != layout for _, s in comps):
            raise ValueError("ensemble components must share a layout")
        if copy_count < 1:
            raise ValueError("copy_count must be positive")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "copy_count", int(copy_count))

    @property
    def layout(self):
        return self.components[0][1].layout

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components])

    @property
    def states(self) -> list[PureState]:
        return [s for _, s in self.components]

    def single_copy_density(self) -> np.ndarray:
        return sum(w * s.density().matrix for w, s in self.components)

    def density(self) -> np.ndarray:
        """Full density matrix; only for small ``copy_count``."""
        out = 0
        for w, s in self.components:
            v = s.amplitudes
            for _ in range(self.copy_count - 1):
                v = np.kron(v, s.amplitudes)
            out = out + w * np.outer(v, v.conj())
        return out


def merge_components(components: Sequence[tuple[float, PureState]], tol: float = 1e-12) -> list:
    """Combine components equal up to global phase and drop weights ``<= tol``."""
    out: list[list] = []
    for w, s in components:
        if w <= tol:
            continue
        for entry in out:
            if abs(entry[1].overlap(s)) ** 2 >= 1 - 1e-12:
                entry[0] += w
                break
        else:
            out.append([w, s])
    total = sum(w for w, _ in out)
    return [(w / total, s) for w, s in out]


InnerDisentangler = Callable[[StateEnsemble, StateEnsemble, int], StateEnsemble]


def reference_inner(first: StateEnsemble, second: StateEnsemble, out_copies: int) -> StateEnsemble:
    """Keep one of the two input blocks uniformly at random and re-emit it with ``out_copies`` copies.

    Exact on ``|chi><chi|^{(x) 2l}``: both blocks carry ``chi`` and the output is
    ``|chi><chi|^{(x) out_copies}``.
    """
    comps = [(0.5 * w, s) for w, s in first.components] + [(0.5 * w, s) for w, s in second.components]
    return StateEnsemble(merge_components(comps), out_copies)


@dataclass(frozen=True)
class DisentanglerParams:
    k: int
    kprime: int
    ell: int
    delta: float
    alpha: float
    gamma: float
    t: float
    C: float = 1.0

    def __post_init__(self):
        if self.k < 1 or self.kprime < 1 or self.ell < 1:
            raise ValueError("k, k' and l must be positive")
        if not 0 < self.delta <= 1 or not 0 < self.alpha < 1 or not 0 < self.gamma < 1:
            raise ValueError("need delta in (0, 1], alpha and gamma in (0, 1)")
        if self.t <= 0:
            raise ValueError("t must be positive")
        need = math.ceil(-self.t * math.log(self.alpha * self.delta / 4))
        if self.kprime < need:
            raise ValueError(f"k' = {self.kprime} below ceil(-t ln(alpha delta / 4)) = {need}")

    @property
    def support_bound(self) -> int:
        """``ceil(64 / (e (1 - alpha) delta^2))``, the hitting-set size bound when ``gamma = delta/16``."""
        return int(math.ceil(64.0 / (math.e * (1 - self.alpha) * self.delta ** 2)))

    @property
    def tau_floor(self) -> float:
        """Per-pair pass-probability floor ``(alpha delta / 4)^{1/k'}`` for pairs in ``S``."""
        return (self.alpha * self.delta / 4) ** (1.0 / self.kprime)

    @classmethod
    def from_delta(cls, k: int, delta: float, C: float = 1.0, ell: int | None = None) -> "DisentanglerParams":
        t = C * k * (8 / delta) ** 2
        alpha = gamma = delta / 16
        kprime = math.ceil(-t * math.log(alpha * delta / 4))
        return cls(k, kprime, ell if ell is not None else k + kprime, delta, alpha, gamma, t, C)

    @classmethod
    def toy(cls, k: int, kprime: int, delta: float = 0.5, ell: int | None = None) -> "DisentanglerParams":
        """Small ``k'`` obtained by choosing the largest admissible ``t``."""
        alpha = gamma = delta / 16
        t = (kprime - 1e-9) / -math.log(alpha * delta / 4)
        return cls(k, kprime, ell if ell is not None else k + kprime, delta, alpha, gamma, t)


@dataclass
class GammaReport:
    output: StateEnsemble
    p_acc: float
    pass_probs: np.ndarray  # c_ij
    eps_S: float
    S: frozenset
    prob_S: float
    prob_accept_outside_S: float
    X: set | None
    S_prime: set | None
    prob_S_not_S_prime: float | None
    hitting_bound: int | None
    support_bound: int
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "output": [{"weight": w, "state": [[z.real, z.imag] for z in s.amplitudes]}
                       for w, s in self.output.components],
            "copy_count": self.output.copy_count,
            "p_acc": self.p_acc,
            "pass_probs": self.pass_probs.tolist(),
            "eps_S": self.eps_S,
            "S": sorted(list(x) for x in self.S),
            "prob_S": self.prob_S,
            "prob_accept_outside_S": self.prob_accept_outside_S,
            "X": sorted(self.X) if self.X is not None else None,
            "S_prime": sorted(self.S_prime) if self.S_prime is not None else None,
            "prob_S_not_S_prime": self.prob_S_not_S_prime,
            "hitting_bound": self.hitting_bound,
            "support_bound": self.support_bound,
            **self.diagnostics,
        }


def zero_state(layout) -> PureState:
    return PureState.basis(0, layout)


def gamma_channel(inputs: Sequence[StateEnsemble], params: DisentanglerParams,
                  inner: InnerDisentangler = reference_inner, rng: SeededRng | None = None) -> GammaReport:
    """Two inner applications, ``k'`` product tests, keep ``k`` copies or fall back to ``|0>^{(x) k}``."""
    if len(inputs) != 4:
        raise ValueError("the disentangler takes four input ensembles")
    layout = inputs[0].layout
    if any(e.layout != layout for e in inputs):
        raise ValueError("input ensembles must share a layout")
    if any(e.copy_count != params.ell for e in inputs):
        raise ValueError(f"input ensembles must carry l = {params.ell} copies")
    out_copies = params.k + params.kprime
    sigmas = [inner(inputs[0], inputs[1], out_copies), inner(inputs[2], inputs[3], out_copies)]
    for s in sigmas:
        if not isinstance(s, StateEnsemble) or s.copy_count != out_copies or s.layout != layout:
            raise ValueError("inner channel violated its contract (copies or layout)")
    p = sigmas[0].weights
    q = sigmas[1].weights
    cut = CutSpec.adjacent(layout.factor_dims)
    single = np.array([[product_accept_prob(a, b, cut) for b in sigmas[1].states] for a in sigmas[0].states])
    c = np.clip(single, 0.0, 1.0) ** params.kprime
    joint = np.outer(p, q)
    p_acc = float(np.sum(joint * c))

    survive = (joint * c).sum(axis=1)
    comps = [(float(w), s) for w, s in zip(survive, sigmas[0].states)]
    comps.append((max(0.0, 1.0 - p_acc), zero_state(layout)))
    output = StateEnsemble(merge_components(comps), params.k)

    eps_s = params.alpha * p_acc
    in_s = c >= eps_s if p_acc > 0 else np.zeros_like(c, dtype=bool)
    S = frozenset((int(i), int(j)) for i, j in zip(*np.nonzero(in_s)))
    prob_s = float(np.sum(joint * in_s))
    outside = float(np.sum(joint * c * ~in_s))

    X = S_prime = None
    miss = hbound = None
    if prob_s > 0:
        n = max(len(p), len(q))
        pp = np.pad(p, (0, n - len(p)))
        qq = np.pad(q, (0, n - len(q)))
        pp, qq = pp / pp.sum(), qq / qq.sum()
        inst = PeakedInstance(pp, qq, S, params.gamma)
        if n <= 16:
            X, _ = hitting_set_exact(inst)
        else:
            X, _ = hitting_set(inst, rng or SeededRng(0))
        hbound = inst.bound()
        S_prime = {i for i in range(len(p)) if any((i, j) in S for j in X)}
        miss = float(sum(joint[i, j] for i, j in S if i not in S_prime))
    diag = {
        "tau_floor": params.tau_floor,
        "kprime": params.kprime,
        "single_copy_pass_probs": single.tolist(),
        "inner_support": [len(s.components) for s in sigmas],
    }
    return GammaReport(output, p_acc, c, eps_s, S, prob_s, outside, X, S_prime, miss, hbound,
                       params.support_bound, diag)


def ensemble_trace_distance_to_copies(ens: StateEnsemble, psi: PureState) -> float:
    """Trace distance between ``ens`` and ``|psi><psi|^{(x) copy_count}`` (small sizes only)."""
    v = psi.amplitudes
    for _ in range(ens.copy_count - 1):
        v = np.kron(v, psi.amplitudes)
    diff = ens.density() - np.outer(v, v.conj())
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


# -- toy transcript amplifier ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TranscriptState:
    round: int
    canonical: PureState
    history: tuple = ()

    def __post_init__(self):
        if self.canonical.layout.n_factors != self.round:
            raise ValueError("canonical transcript must have one factor per completed round")


@dataclass(frozen=True, eq=False)
class RoundTable:
    """Table of (transcript, answer) pairs sent in one round; ``transcript`` is None in round 1."""

    entries: tuple

    def __init__(self, entries: Sequence[tuple[PureState | None, PureState]]):
        if not entries or len(entries) > 4:
            raise ValueError("tables hold between 1 and 4 entries")
        object.__setattr__(self, "entries", tuple(entries))


@dataclass(frozen=True, eq=False)
class StrategyFixture:
    """Per-round mixtures of tables: ``rounds[i] = [(weight, RoundTable), ...]``."""

    rounds: tuple

    def __init__(self, rounds: Sequence[Sequence[tuple[float, RoundTable]]]):
        for mix in rounds:
            w = np.array([x for x, _ in mix])
            if np.any(w < 0) or abs(w.sum() - 1) > WEIGHT_TOL:
                raise ValueError("table weights must form a distribution")
        object.__setattr__(self, "rounds", tuple(tuple(m) for m in rounds))


@dataclass(frozen=True)
class AmplifierParams:
    W: int
    T: int
    K: int | None = None
    c: float = 1.0
    s: float = 0.0

    @property
    def majority_threshold(self) -> int:
        return int(math.ceil(self.T * (self.c + self.s) / 2 - 1e-12))


def swap_repetitions(eps: float, failure: float) -> int:
    """``W = ceil(2 eps^-2 ln(1/failure))`` so that ``exp(-W eps^2 / 2) <= failure``."""
    return int(math.ceil(2.0 / eps ** 2 * math.log(1.0 / failure)))


def all_pass_probability(a: PureState, b: PureState, W: int) -> float:
    return swap_accept_prob(a, b) ** W


def _episode(base: GameInstance, fixture: StrategyFixture, params: AmplifierParams, rng: SeededRng) -> dict:
    r = len(base.prefix)
    canonical: PureState | None = None
    swap_losses = 0
    for i in range(r):
        mix = fixture.rounds[i]
        k = int(rng.generator.choice(len(mix), p=[w for w, _ in mix]))
        table = mix[k][1]
        if i == 0:
            canonical = table.entries[0][1]
            continue
        chosen = None
        for transcript, answer in table.entries:
            p = swap_accept_prob(canonical, transcript)
            if np.all(rng.random(params.W) < p):
                chosen = tensor(transcript, answer)
                break
        if chosen is None:
            swap_losses += 1
            # round i+1 in 1-based counting; the player of that round loses
            return {"accepted": (i + 1) % 2 == 0, "swap_loss": True, "n_acc": None}
        canonical = chosen
    p_acc = base.effect.probability(canonical)
    n_acc = int(np.sum(rng.random(params.T) < p_acc))
    return {"accepted": n_acc >= params.majority_threshold, "swap_loss": False, "n_acc": n_acc,
            "base_acceptance": p_acc}


def exact_amplifier_acceptance(base: GameInstance, fixture: StrategyFixture, params: AmplifierParams) -> float:
    """Acceptance probability of the toy verifier by enumerating every branch."""
    r = len(base.prefix)
    thr = params.majority_threshold

    def final(c: PureState) -> float:
        pa = base.effect.probability(c)
        return float(stats.binom.sf(thr - 1, params.T, pa))

    def go(i: int, canonical: PureState | None) -> float:
        if i == r:
            return final(canonical)
        total = 0.0
        for w, table in fixture.rounds[i]:
            if i == 0:
                total += w * go(1, table.entries[0][1])
                continue
            remaining = 1.0
            branch = 0.0
            for transcript, answer in table.entries:
                pw = swap_accept_prob(canonical, transcript) ** params.W
                branch += remaining * pw * go(i + 1, tensor(transcript, answer))
                remaining *= 1 - pw
            branch += remaining * (1.0 if (i + 1) % 2 == 0 else 0.0)
            total += w * branch
        return total

    return go(0, None)


def transcript_amplifier_toy(base: GameInstance, fixture: StrategyFixture, params: AmplifierParams,
                             rng: SeededRng, episodes: int = 1000, dim_cap: int = 2 ** 12) -> dict:
    """Seeded Monte-Carlo run of the round loop and majority vote; compared with exact enumeration."""
    r = len(base.prefix)
    if r > 2:
        raise ValueError("toy amplifier supports at most two rounds")
    if base.prefix.slots[0].quantifier is not Quantifier.EXISTS:
        raise ValueError("the first round belongs to the existential player")
    if len(fixture.rounds) != r:
        raise ValueError("fixture must supply one table mixture per round")
    d = base.prefix.dims[0]
    if any(x != d for x in base.prefix.dims):
        raise ValueError("all rounds must share one message space")
    if d ** r > dim_cap:
        raise ValueError(f"transcript dimension {d ** r} exceeds cap {dim_cap}")
    m_r = max(len(t.entries) for _, t in fixture.rounds[-1])
    k_needed = params.W * r * m_r + params.T
    if params.K is not None and params.K < k_needed:
        raise ValueError(f"K = {params.K} copies cannot cover W r M_r + T = {k_needed}")
    results = [_episode(base, fixture, params, rng.derive("episode", e)) for e in range(episodes)]
    acc = np.array([x["accepted"] for x in results], dtype=float)
    freq = float(acc.mean())
    return {
        "episodes": episodes,
        "acceptance_frequency": freq,
        "stderr": float(np.sqrt(max(freq * (1 - freq), 1e-300) / episodes)),
        "swap_losses": int(sum(x["swap_loss"] for x in results)),
        "exact_acceptance": exact_amplifier_acceptance(base, fixture, params),
        "majority_threshold": params.majority_threshold,
        "copies_needed": k_needed,
        "W": params.W,
        "T": params.T,
    }


def hoeffding_rejection_bound(base_value: float, threshold_fraction: float, T: int) -> float:
    """``exp(-2 (T (v - t))^2 / T)`` bound on ``Pr[N_acc < t T]`` when the mean is ``v > t``."""
    gap = base_value - threshold_fraction
    if gap <= 0:
        return 1.0
    return float(math.exp(-2 * (gap * T) ** 2 / T))


def majority_rejection_frequency(base_value: float, params: AmplifierParams, rng: SeededRng,
                                 episodes: int) -> dict:
    """Majority vote over ``T`` Bernoulli(base_value) runs; empirical and exact rejection rates."""
    n_acc = rng.generator.binomial(params.T, base_value, size=episodes)
    rej = n_acc < params.majority_threshold
    freq = float(rej.mean())
    return {
        "rejection_frequency": freq,
        "stderr": float(np.sqrt(max(freq * (1 - freq), 1.0 / episodes) / episodes)),
        "exact": float(stats.binom.cdf(params.majority_threshold - 1, params.T, base_value)),
        "hoeffding": hoeffding_rejection_bound(base_value, params.majority_threshold / params.T, params.T),
    }


def far_transcript(canonical: PureState, distance: float, rng: SeededRng) -> PureState:
    """A pure state at trace distance exactly ``distance`` from ``canonical``."""
    v = canonical.amplitudes
    z = rng.normal(v.size) + 1j * rng.normal(v.size)
    z = z - np.vdot(v, z) * v
    z = z / np.linalg.norm(z)
    return PureState(np.sqrt(1 - distance ** 2) * v + distance * z, canonical.layout)


def false_pass_frequency(distance: float, W: int, dim: int, rng: SeededRng, trials: int) -> dict:
    """How often ``W`` SWAP tests against a ``distance``-far transcript all pass."""
    base = PureState.basis(0, [dim])
    far = far_transcript(base, distance, rng.derive("far"))
    p = all_pass_probability(base, far, W)
    passes = rng.random((trials, W)) < swap_accept_prob(base, far)
    freq = float(np.all(passes, axis=1).mean())
    return {
        "frequency": freq,
        "stderr": float(np.sqrt(max(p * (1 - p), 1.0 / trials) / trials)),
        "exact": p,
        "bound": math.exp(-W * distance ** 2 / 2),
    }
