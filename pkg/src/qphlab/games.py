"""Alternating min-max values of quantum games.

A game is a Hermitian payoff ``M`` on ``C^{d_1} (x) ... (x) C^{d_n}`` together
with a quantifier prefix; the value is ``opt_1 opt_2 ... opt_n tr(M rho_1 (x) ... (x) rho_n)``
where ``EXISTS`` maximizes and ``FORALL`` minimizes.

Three evaluation routes are provided:

* the last mover is always solved exactly by an extreme eigenpair of the
  effective operator (a linear objective over states is optimized at a pure state);
* a two-slot game whose outer slot is mixed and whose players are opposed is a
  bilinear saddle problem, solved by a double-oracle loop over pure strategies
  with an LP for the restricted matrix game; the loop yields a certified bracket;
* everything else is a nonconvex search on the unit sphere (mixed slots are
  searched through their purifications) with restarts.

``solve_grid_pure`` is an independent brute-force oracle over a Bloch-sphere
grid for qubit slots.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp, softmax

from .qstate import (
    DensityOperator,
    EffectOperator,
    HilbertLayout,
    PureState,
    SeededRng,
    StateLike,
    as_density,
    extreme_eigpair,
    from_json_obj,
    to_json_obj,
)


class Quantifier(enum.Enum):
    EXISTS = "E"
    FORALL = "A"

    @property
    def sense(self) -> int:
        return 1 if self is Quantifier.EXISTS else -1

    def flipped(self) -> "Quantifier":
        return Quantifier.FORALL if self is Quantifier.EXISTS else Quantifier.EXISTS


class Purity(enum.Enum):
    PURE = "pure"
    MIXED = "mixed"


class Objective(enum.Enum):
    MAX = "max"
    MIN = "min"


@dataclass(frozen=True)
class Slot:
    quantifier: Quantifier
    dim: int
    purity: Purity


@dataclass(frozen=True)
class QuantifierPrefix:
    slots: tuple[Slot, ...]

    def __post_init__(self):
        if not self.slots:
            raise ValueError("a prefix needs at least one slot")
        if any(s.dim < 2 for s in self.slots):
            raise ValueError("slot dimensions must be >= 2")

    @classmethod
    def parse(cls, spec: Sequence) -> "QuantifierPrefix":
        """Build from ``[["E", 2, "pure"], ["A", 2, "mixed"], ...]``."""
        slots = []
        for q, d, p in spec:
            slots.append(Slot(Quantifier(q), int(d), Purity(p)))
        return cls(tuple(slots))

    def to_spec(self) -> list:
        return [[s.quantifier.value, s.dim, s.purity.value] for s in self.slots]

    @property
    def dims(self) -> list[int]:
        return [s.dim for s in self.slots]

    @property
    def senses(self) -> list[int]:
        return [s.quantifier.sense for s in self.slots]

    @property
    def purities(self) -> list[Purity]:
        return [s.purity for s in self.slots]

    def __len__(self) -> int:
        return len(self.slots)


@dataclass(frozen=True, eq=False)
class GameInstance:
    effect: EffectOperator
    prefix: QuantifierPrefix
    c: float | None = None
    s: float | None = None

    def __post_init__(self):
        if list(self.effect.layout.factor_dims) != self.prefix.dims:
            raise ValueError("effect layout must equal the prefix dims in order")
        if self.c is not None and self.s is not None and not 0 <= self.s < self.c <= 1:
            raise ValueError("thresholds must satisfy 0 <= s < c <= 1")

    def to_json(self) -> str:
        obj = {"effect": to_json_obj(self.effect), "prefix": self.prefix.to_spec(), "c": self.c, "s": self.s}
        return json.dumps(obj, sort_keys=True)

    @classmethod
    def from_json(cls, text: str | dict) -> "GameInstance":
        obj = json.loads(text) if isinstance(text, str) else text
        prefix = QuantifierPrefix.parse(obj["prefix"])
        effect = from_json_obj(obj["effect"], "effect")
        return cls(effect, prefix, obj.get("c"), obj.get("s"))


@dataclass
class GameValueEstimate:
    value: float
    strategy: list
    method: str
    certificate: dict = field(default_factory=dict)


# -- contractions --------------------------------------------------------------


def _as_matrix(state) -> np.ndarray:
    if isinstance(state, (PureState, DensityOperator)):
        return as_density(state).matrix
    arr = np.asarray(state, dtype=complex)
    if arr.ndim == 1:
        return np.outer(arr, arr.conj())
    return arr


def contract_slots(mat: np.ndarray, dims: Sequence[int], fixed: Mapping[int, np.ndarray]) -> tuple[np.ndarray, list[int]]:
    """``tr_fixed[M (rho_fixed (x) I_rest)]`` as an operator on the remaining slots."""
    dims = list(dims)
    n = len(dims)
    t = np.asarray(mat).reshape(dims + dims)
    remaining = list(range(n))
    for j in sorted(fixed, reverse=True):
        pos = remaining.index(j)
        k = len(remaining)
        t = np.tensordot(t, fixed[j], axes=([pos, k + pos], [1, 0]))
        remaining.pop(pos)
    d = int(np.prod([dims[r] for r in remaining])) if remaining else 1
    return t.reshape(d, d), remaining


def effective_operator(m, fixed: Mapping[int, StateLike], target: int, dims: Sequence[int] | None = None) -> np.ndarray:
    """Operator ``H'`` on slot ``target`` with ``tr(M (... sigma ...)) = tr(H' sigma)``."""
    mat = m.matrix if isinstance(m, EffectOperator) else np.asarray(m)
    if dims is None:
        if not isinstance(m, EffectOperator):
            raise ValueError("dims required for a raw matrix")
        dims = m.layout.factor_dims
    n = len(dims)
    if not 0 <= target < n:
        raise IndexError("target slot out of range")
    if set(fixed) != set(range(n)) - {target}:
        raise ValueError(f"expected fixed states for slots {sorted(set(range(n)) - {target})}, got {sorted(fixed)}")
    h, _ = contract_slots(mat, dims, {j: _as_matrix(s) for j, s in fixed.items()})
    return (h + h.conj().T) / 2


def best_response_mixed(m, fixed: Mapping[int, StateLike], target: int, objective: Objective | str) -> tuple[DensityOperator, float]:
    """Extreme eigenvector of the effective operator, returned as a rank-1 state."""
    objective = Objective(objective) if isinstance(objective, str) else objective
    h = effective_operator(m, fixed, target)
    lam, vec = extreme_eigpair(h, "max" if objective is Objective.MAX else "min")
    return PureState(vec, [h.shape[0]]).density(), lam


def _spread(mat: np.ndarray) -> float:
    w = np.linalg.eigvalsh(mat)
    return float(w[-1] - w[0])


# -- bilinear saddle problems ----------------------------------------------------


def _solve_matrix_game(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Row player maximizes ``x^T A y``; returns both optimal mixtures and the value."""
    nr, nc = a.shape
    c = np.zeros(nr + 1)
    c[-1] = -1.0
    a_ub = np.hstack([-a.T, np.ones((nc, 1))])
    b_ub = np.zeros(nc)
    a_eq = np.hstack([np.ones((1, nr)), np.zeros((1, 1))])
    bounds = [(0, None)] * nr + [(None, None)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0], bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise RuntimeError(f"matrix-game LP failed: {res.message}")
    x = np.clip(res.x[:nr], 0, None)
    y = np.clip(-res.ineqlin.marginals, 0, None)
    if y.sum() <= 0:
        y = np.full(nc, 1.0 / nc)
    return x / x.sum(), y / y.sum(), float(res.x[-1])


@dataclass
class SaddleResult:
    lower: float
    upper: float
    rho: np.ndarray
    sigma: np.ndarray
    iterations: int
    converged: bool


def solve_bilinear_saddle(k: np.ndarray, d1: int, d2: int, rng: SeededRng | None = None,
                          tol: float = 1e-9, max_iters: int = 500) -> SaddleResult:
    """``max_rho min_sigma tr(K (rho (x) sigma))`` over density matrices.

    Double oracle: pure strategies are added by exact best responses to the
    current restricted equilibrium.  ``lower`` is guaranteed by ``rho``
    (``min_sigma`` of the payoff), ``upper`` by ``sigma``; both bracket the value.
    """
    dims = [d1, d2]
    psis: list[np.ndarray] = []
    phis: list[np.ndarray] = []
    _, v = extreme_eigpair(contract_slots(k, dims, {1: np.eye(d2) / d2})[0], "max")
    psis.append(v)
    _, v = extreme_eigpair(contract_slots(k, dims, {0: np.eye(d1) / d1})[0], "min")
    phis.append(v)
    if rng is not None:
        for vecs, d in ((psis, d1), (phis, d2)):
            z = rng.normal(d) + 1j * rng.normal(d)
            vecs.append(z / np.linalg.norm(z))

    kt = np.asarray(k).reshape(d1, d2, d1, d2)
    best_lo, best_hi = -np.inf, np.inf
    best_rho = best_sigma = None
    converged = False
    stall = 0
    it = 0
    for it in range(1, max_iters + 1):
        ps = np.array(psis)
        fs = np.array(phis)
        pay = np.real(np.einsum("ai,bj,ijkl,ak,bl->ab", ps.conj(), fs.conj(), kt, ps, fs, optimize=True))
        x, y, _ = _solve_matrix_game(pay)
        rho = (ps.T * x) @ ps.conj()
        sigma = (fs.T * y) @ fs.conj()
        lo, phi_new = extreme_eigpair(_herm(contract_slots(k, dims, {0: rho})[0]), "min")
        hi, psi_new = extreme_eigpair(_herm(contract_slots(k, dims, {1: sigma})[0]), "max")
        gap_before = best_hi - best_lo
        if lo > best_lo:
            best_lo, best_rho = lo, rho
        if hi < best_hi:
            best_hi, best_sigma = hi, sigma
        if best_hi - best_lo <= tol:
            converged = True
            break
        # LP round-off eventually stops the bracket from shrinking
        stall = stall + 1 if best_hi - best_lo >= gap_before else 0
        if stall >= 15:
            break
        psis.append(psi_new)
        phis.append(phi_new)
    return SaddleResult(best_lo, best_hi, best_rho, best_sigma, it, converged)


def _herm(a: np.ndarray) -> np.ndarray:
    return (a + a.conj().T) / 2


# -- generic solver ----------------------------------------------------------------


def _normalize(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x)


class _Search:
    """Recursive evaluation of ``opt_level ... opt_n`` for fixed outer slots."""

    def __init__(self, mat, dims, senses, purities, seed, restarts, inner_restarts, max_iters, tol):
        self.mat = np.asarray(mat, dtype=complex)
        self.dims = list(dims)
        self.senses = list(senses)
        self.purities = list(purities)
        self.n = len(dims)
        self.seed = seed
        self.restarts = restarts
        self.inner_restarts = inner_restarts
        self.max_iters = max_iters
        self.tol = tol
        self.scale = max(float(np.linalg.norm(self.mat, 2)), 1e-12)
        self.evaluations = 0
        self.saddle_failures = 0

    # states are stored as density matrices keyed by slot
    def solve(self, level: int, fixed: dict) -> tuple[float, dict, dict]:
        n = self.n
        if level == n - 1:
            return self._last(fixed)
        if level == n - 2 and self.purities[level] is Purity.MIXED and self.senses[level] != self.senses[level + 1]:
            return self._saddle(level, fixed)
        return self._local(level, fixed)

    def _last(self, fixed):
        self.evaluations += 1
        j = self.n - 1
        h, _ = contract_slots(self.mat, self.dims, fixed)
        lam, vec = extreme_eigpair(_herm(h), "max" if self.senses[j] > 0 else "min")
        return lam, {j: np.outer(vec, vec.conj())}, {"pure_vec": {j: vec}}

    def _saddle(self, level, fixed):
        j1, j2 = level, level + 1
        k, _ = contract_slots(self.mat, self.dims, fixed)
        k = _herm(k)
        sign = self.senses[j1]
        rng = SeededRng(self.seed).derive("saddle", level)
        res = solve_bilinear_saddle(sign * k, self.dims[j1], self.dims[j2], rng, tol=self.tol, max_iters=self.max_iters)
        if not res.converged:
            self.saddle_failures += 1
        # outer player's guarantee is the sound side
        value = sign * res.lower
        inner_h, _ = contract_slots(k, [self.dims[j1], self.dims[j2]], {0: res.rho})
        lam, vec = extreme_eigpair(_herm(inner_h), "max" if self.senses[j2] > 0 else "min")
        info = {
            "bracket": sorted([sign * res.lower, sign * res.upper]),
            "saddle_iterations": res.iterations,
            "saddle_converged": res.converged,
            "pure_vec": {j2: vec},
            "equilibrium": {j2: res.sigma},
        }
        return value, {j1: res.rho, j2: res.sigma}, info

    def _state_of(self, level, x):
        d = self.dims[level]
        if self.purities[level] is Purity.PURE:
            return np.outer(x, x.conj())
        xm = x.reshape(d, d)
        return xm @ xm.conj().T

    def _grad_vec(self, level, x, g):
        d = self.dims[level]
        if self.purities[level] is Purity.PURE:
            return g @ x
        return (g @ x.reshape(d, d)).reshape(-1)

    def _objective(self, level, fixed, x, beta):
        """Signed objective and its Riemannian ascent direction at ``x``."""
        sense = self.senses[level]
        rho = self._state_of(level, x)
        fx = dict(fixed)
        fx[level] = rho
        if beta is not None:
            # smoothed last mover: Gibbs state replaces the extreme eigenvector
            j = self.n - 1
            h, _ = contract_slots(self.mat, self.dims, fx)
            w, v = np.linalg.eigh(_herm(h))
            s2 = self.senses[j]
            z = beta * s2 * w
            val = s2 * logsumexp(z) / beta
            sig = (v * softmax(z)) @ v.conj().T
            inner = {j: sig}
            self.evaluations += 1
        else:
            val, inner, _ = self.solve(level + 1, fx)
        others = dict(fixed)
        others.update(inner)
        g, _ = contract_slots(self.mat, self.dims, others)
        gx = self._grad_vec(level, x, _herm(g))
        direction = sense * (gx - np.real(np.vdot(x, gx)) * x)
        return sense * val, direction

    def _ascend(self, level, fixed, x, beta, iters):
        f, r = self._objective(level, fixed, x, beta)
        eta = 1.0 / self.scale
        stall = 0
        steps = 0
        for steps in range(iters):
            rn2 = float(np.real(np.vdot(r, r)))
            if np.sqrt(rn2) < self.tol * self.scale:
                break
            accepted = False
            while eta > 1e-14 / self.scale:
                xn = _normalize(x + eta * r)
                fn, rn = self._objective(level, fixed, xn, beta)
                if fn >= f + 1e-4 * eta * rn2:
                    accepted = True
                    break
                eta *= 0.5
            if not accepted:
                break
            gain = fn - f
            x, f, r = xn, fn, rn
            eta = min(eta * 2.0, 10.0 / self.scale)
            stall = stall + 1 if gain < 1e-13 * self.scale else 0
            if stall >= 5:
                break
        return x, f, steps

    def _initial_points(self, level, count):
        d = self.dims[level]
        size = d if self.purities[level] is Purity.PURE else d * d
        rng = SeededRng(self.seed).derive("init", level)
        pts = []
        for _ in range(count):
            pts.append(_normalize(rng.normal(size) + 1j * rng.normal(size)))
        return pts

    def _local(self, level, fixed):
        top = not fixed
        count = self.restarts if top else self.inner_restarts
        smooth = level == self.n - 2
        best = None
        total_steps = 0
        for x in self._initial_points(level, count):
            if smooth:
                beta = 10.0 / self.scale
                d_last = self.dims[-1]
                while np.log(d_last) / beta > 1e-9 * self.scale:
                    x, _, st = self._ascend(level, fixed, x, beta, self.max_iters)
                    total_steps += st
                    beta *= 10.0
            x, _, st = self._ascend(level, fixed, x, None, self.max_iters)
            total_steps += st
            rho = self._state_of(level, x)
            fx = dict(fixed)
            fx[level] = rho
            val, inner, info = self.solve(level + 1, fx)
            signed = self.senses[level] * val
            if best is None or signed > best[0] + 1e-13:
                best = (signed, x, val, inner, info)
        _, x, val, inner, info = best
        states = {level: self._state_of(level, x)}
        states.update(inner)
        info = dict(info)
        info["vectors"] = {**info.get("vectors", {}), level: x}
        info["steps"] = info.get("steps", 0) + total_steps
        return val, states, info


def _strategy_states(search: _Search, states: dict, info: dict) -> list:
    out = []
    for j in range(search.n):
        rho = states[j]
        d = search.dims[j]
        if search.purities[j] is Purity.PURE:
            vec = info.get("pure_vec", {}).get(j)
            if vec is None:
                vec = info.get("vectors", {}).get(j)
            if vec is None:
                w, v = np.linalg.eigh(_herm(rho))
                vec = v[:, -1]
            out.append(PureState(vec, [d], normalize=True))
        else:
            r = _herm(rho)
            out.append(DensityOperator(r / np.trace(r).real, [d]))
    return out


def solve_quantified(mat: np.ndarray, dims: Sequence[int], senses: Sequence[int], purities: Sequence[Purity],
                     rng: SeededRng, restarts: int = 8, max_iters: int = 500, tol: float = 1e-9,
                     inner_restarts: int = 2) -> GameValueEstimate:
    """Alternating solver for a raw Hermitian payoff; ``sense`` +1 maximizes."""
    search = _Search(mat, dims, senses, purities, rng.seed, restarts, inner_restarts, max_iters, tol)
    val, states, info = search.solve(0, {})
    strategy = _strategy_states(search, states, info)
    cert = {
        "restarts": restarts,
        "evaluations": search.evaluations,
        "steps": int(info.get("steps", 0)),
        "converged": search.saddle_failures == 0,
        "seed": rng.seed,
    }
    if "bracket" in info and len(dims) == 2:
        cert["lower"], cert["upper"] = info["bracket"]
        cert["saddle_iterations"] = info["saddle_iterations"]
    return GameValueEstimate(float(val), strategy, "ALTERNATING", cert)


def solve_alternating(g: GameInstance, rng: SeededRng, restarts: int = 8, max_iters: int = 500,
                      tol: float = 1e-9) -> GameValueEstimate:
    p = g.prefix
    return solve_quantified(g.effect.matrix, p.dims, p.senses, p.purities, rng, restarts, max_iters, tol)


# -- Bloch grid oracle -----------------------------------------------------------


def bloch_grid(resolution: float) -> tuple[np.ndarray, dict]:
    """Deterministic polar x azimuthal grid of qubit states.

    Ordering is polar-major; the poles appear once.  The returned metadata
    includes the per-slot trace-distance covering radius.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    n_theta = int(np.ceil(np.pi / resolution))
    n_phi = int(np.ceil(2 * np.pi / resolution))
    h_theta = np.pi / n_theta
    h_phi = 2 * np.pi / n_phi
    vecs = []
    for i in range(n_theta + 1):
        th = i * h_theta
        phis = [0.0] if i in (0, n_theta) else [j * h_phi for j in range(n_phi)]
        for ph in phis:
            vecs.append([np.cos(th / 2), np.exp(1j * ph) * np.sin(th / 2)])
    # great-circle distance to nearest grid point <= (h_theta + h_phi)/2; pure-qubit
    # trace distance is sin(angle/2)
    radius = float(np.sin(min((h_theta + h_phi) / 4, np.pi / 2)))
    meta = {"n_theta": n_theta, "n_phi": n_phi, "points": len(vecs), "covering_trace_distance": radius}
    return np.array(vecs, dtype=complex), meta


def _eig2(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (min, max) of a batch of 2x2 Hermitian matrices."""
    a = h[..., 0, 0].real
    d = h[..., 1, 1].real
    b = h[..., 0, 1]
    mid = (a + d) / 2
    rad = np.sqrt(((a - d) / 2) ** 2 + np.abs(b) ** 2)
    return mid - rad, mid + rad


def _batch_opt(h: np.ndarray, sense: int) -> np.ndarray:
    if h.shape[-1] == 2:
        lo, hi = _eig2(h)
        return hi if sense > 0 else lo
    w = np.linalg.eigvalsh(h)
    return w[..., -1] if sense > 0 else w[..., 0]


def slot_lipschitz(mat: np.ndarray, dims: Sequence[int], j: int) -> float:
    """Bound ``c_j`` with ``|value change| <= c_j * d_tr`` when slot ``j`` moves.

    ``tr(M (Delta (x) X)) = tr((M - I_j (x) N)(Delta (x) X))`` for traceless
    ``Delta``; take the better of ``N = tr_j(M)/d_j`` and a scalar shift.
    """
    dims = list(dims)
    n = len(dims)
    t = np.asarray(mat).reshape(dims + dims)
    avg = np.trace(t, axis1=j, axis2=n + j) / dims[j]
    rest = [dims[i] for i in range(n) if i != j]
    drest = int(np.prod(rest)) if rest else 1
    emb = np.kron(np.eye(dims[j]), avg.reshape(drest, drest))
    perm = list(range(n))
    from .protocols import permutation_operator

    # emb has slot j first; move it back to position j
    order = [j] + [i for i in range(n) if i != j]
    p = permutation_operator([dims[i] for i in order], list(np.argsort(order)))
    emb = p @ emb @ p.T
    c1 = 2 * float(np.linalg.norm(np.asarray(mat) - emb, 2))
    return min(c1, _spread(np.asarray(mat)))


def _contract_grid(outer: np.ndarray, mat: np.ndarray, d_rest: int) -> np.ndarray:
    """Effective operators on the remaining factors for every grid state of the first qubit."""
    t = np.asarray(mat).reshape(2, d_rest, 2, d_rest).transpose(0, 2, 1, 3).reshape(4, d_rest * d_rest)
    return (outer @ t).reshape(-1, d_rest, d_rest)


def grid_quantified(mat: np.ndarray, dims: Sequence[int], senses: Sequence[int], resolution: float = 0.01,
                    max_points: int = 2 * 10**9) -> GameValueEstimate:
    """Exact alternation over Bloch-grid qubit slots; the last slot is an exact eigenproblem."""
    dims = list(dims)
    n = len(dims)
    if n > 3:
        raise ValueError("grid oracle supports at most 3 slots")
    if any(d != 2 for d in dims[:-1]):
        raise ValueError("grid oracle needs qubit slots (all but the last)")
    mat = np.asarray(mat, dtype=complex)
    grid, meta = bloch_grid(resolution)
    p = len(grid)
    outer = (grid.conj()[:, :, None] * grid[:, None, :]).reshape(p, 4)
    if p ** (n - 1) > max_points:
        raise ValueError(f"{p ** (n - 1)} grid combinations exceed the guard {max_points}")
    d_last = dims[-1]
    if n == 1:
        lam, vec = extreme_eigpair(_herm(mat), "max" if senses[0] > 0 else "min")
        strategy = [PureState(vec, [d_last])]
        value = lam
    elif n == 2:
        # chunked so that large last slots stay within memory
        chunk = max(1, 2 ** 22 // (d_last * d_last))
        inner = np.concatenate([_batch_opt(_contract_grid(outer[k:k + chunk], mat, d_last), senses[1])
                                for k in range(0, p, chunk)])
        i1 = int(np.argmax(inner) if senses[0] > 0 else np.argmin(inner))
        value = float(inner[i1])
        h1 = _contract_grid(outer[i1:i1 + 1], mat, d_last)[0]
        lam, vec = extreme_eigpair(_herm(h1), "max" if senses[1] > 0 else "min")
        strategy = [PureState(grid[i1], [2]), PureState(vec, [d_last])]
    else:
        h1 = _contract_grid(outer, mat, 2 * d_last)
        level1 = np.empty(p)
        arg2 = np.empty(p, dtype=int)
        for g1 in range(p):
            h2 = _contract_grid(outer, h1[g1], d_last)
            inner = _batch_opt(h2, senses[2])
            k = int(np.argmax(inner) if senses[1] > 0 else np.argmin(inner))
            level1[g1] = inner[k]
            arg2[g1] = k
        i1 = int(np.argmax(level1) if senses[0] > 0 else np.argmin(level1))
        i2 = int(arg2[i1])
        value = float(level1[i1])
        t2 = h1[i1].reshape(2, d_last, 2, d_last)
        h_last = np.einsum("a,b,axby->xy", grid[i2].conj(), grid[i2], t2)
        lam, vec = extreme_eigpair(_herm(h_last), "max" if senses[2] > 0 else "min")
        strategy = [PureState(grid[i1], [2]), PureState(grid[i2], [2]), PureState(vec, [d_last])]
    consts = [slot_lipschitz(mat, dims, j) for j in range(n - 1)]
    cert = dict(meta)
    cert["resolution"] = resolution
    cert["slot_lipschitz"] = consts
    cert["lipschitz_bound"] = float(sum(c * meta["covering_trace_distance"] for c in consts))
    return GameValueEstimate(float(value), strategy, "GRID", cert)


def solve_grid_pure(g: GameInstance, resolution: float = 0.01) -> GameValueEstimate:
    """Brute-force oracle for pure qubit games with at most three slots."""
    p = g.prefix
    if len(p) > 3:
        raise ValueError("prefix too long for the grid oracle")
    if any(d != 2 for d in p.dims):
        raise ValueError("grid oracle requires qubit slots")
    if any(s is not Purity.PURE for s in p.purities[:-1]):
        raise ValueError("grid oracle requires pure slots")
    return grid_quantified(g.effect.matrix, p.dims, p.senses, resolution)


# -- named games ----------------------------------------------------------------


def copy_game_values(n_qubits: int, rng: SeededRng | None = None, verify: bool = True) -> tuple[float, float]:
    """Values of the copy game for player 2 (pure, mixed).

    Player 1 sends a state, player 2 must reproduce it and wins when the SWAP
    test passes.  With pure states player 2 always wins; with mixed states
    player 1 sends the maximally mixed state and the value drops to
    ``1/2 + 2^-(n+1)``.
    """
    if not 1 <= n_qubits <= 3:
        raise ValueError("copy game supported for 1 <= n <= 3")
    pure_value, mixed_value = 1.0, 0.5 + 2.0 ** (-(n_qubits + 1))
    if verify:
        pure_est, mixed_est = copy_game_estimates(n_qubits, rng or SeededRng(0))
        if abs(pure_est.value - pure_value) > 1e-6 or abs(mixed_est.value - mixed_value) > 1e-6:
            raise RuntimeError(
                f"solver disagrees with closed form: pure {pure_est.value}, mixed {mixed_est.value}")
    return pure_value, mixed_value


def copy_game_estimates(n_qubits: int, rng: SeededRng) -> tuple[GameValueEstimate, GameValueEstimate]:
    from .protocols import swap_effect

    d = 2 ** n_qubits
    eff = swap_effect(d)
    games = []
    for purity in (Purity.PURE, Purity.MIXED):
        prefix = QuantifierPrefix((Slot(Quantifier.FORALL, d, purity), Slot(Quantifier.EXISTS, d, purity)))
        games.append(GameInstance(eff, prefix))
    return (solve_alternating(games[0], rng.derive("copy", "pure"), restarts=2),
            solve_alternating(games[1], rng.derive("copy", "mixed")))


def swap_slots(mat: np.ndarray, d1: int, d2: int) -> np.ndarray:
    from .protocols import permutation_operator

    p = permutation_operator([d1, d2], [1, 0])
    return p @ np.asarray(mat) @ p.T


def minimax_equality_check(m: EffectOperator | np.ndarray, tol: float = 1e-6, seeds: Sequence[int] = (0, 1),
                           dims: Sequence[int] | None = None) -> dict:
    """Compare ``sup_rho inf_sigma`` with ``inf_sigma sup_rho`` over mixed states."""
    if isinstance(m, EffectOperator):
        mat, dims = m.matrix, m.layout.factor_dims
    else:
        mat = np.asarray(m)
    if dims is None or len(dims) != 2:
        raise ValueError("minimax check needs a two-slot payoff")
    d1, d2 = dims
    exists_forall = []
    forall_exists = []
    converged = True
    for seed in seeds:
        rng = SeededRng(seed)
        ea = solve_quantified(mat, [d1, d2], [1, -1], [Purity.MIXED] * 2, rng.derive("EA"), tol=tol / 10)
        ae = solve_quantified(swap_slots(mat, d1, d2), [d2, d1], [-1, 1], [Purity.MIXED] * 2, rng.derive("AE"), tol=tol / 10)
        exists_forall.append(ea.value)
        forall_exists.append(ae.value)
        converged &= ea.certificate["converged"] and ae.certificate["converged"]
    sup_inf = max(exists_forall)
    inf_sup = min(forall_exists)
    diff = abs(inf_sup - sup_inf)
    return {
        "sup_inf": sup_inf,
        "inf_sup": inf_sup,
        "difference": diff,
        "converged": bool(converged),
        "passed": bool(converged and diff <= tol),
    }
