"""Compilation of two-prover and two-alternation verifiers into single effects.

``compile_qma2_verifier`` turns a verifier for unentangled proofs ``A (x) B`` into
a pure-state existential/universal game: a SWAP test on ``A, B`` is run first
and the input is accepted outright when it fails; otherwise the original
verifier runs on the post-measurement state.  As an effect this is
``(I - P_sym) + P_sym H P_sym``.

``compile_psigma2_to_qsigma3`` adds a third (existential, mixed) register that
must copy the first one: with probability ``p`` the original verifier runs on
registers 1, 2 and otherwise registers 1, 3 are SWAP tested.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .games import (
    GameInstance,
    GameValueEstimate,
    Purity,
    Quantifier,
    QuantifierPrefix,
    Slot,
    grid_quantified,
    solve_alternating,
)
from .protocols import gentle_post_state, permutation_operator, swap_operator
from .qstate import EffectOperator, PureState, SeededRng, StateLike, as_density, to_json_obj

SQRT2 = math.sqrt(2.0)
QMA2_MIN_CONSTANT = 1.5 - SQRT2


class Construction(enum.Enum):
    QMA2_TO_PSIGMA2 = "QMA2_TO_PSIGMA2"
    PSIGMA2_TO_QSIGMA3 = "PSIGMA2_TO_QSIGMA3"


@dataclass(frozen=True, eq=False)
class CompiledVerifier:
    effect: EffectOperator
    prefix: QuantifierPrefix
    source_thresholds: tuple[float, float, float]  # (c, s, eps)
    derived_thresholds: tuple[float, float]  # (c', s')
    mix_prob: float
    tag: Construction
    permutation: tuple[int, ...] | None = None

    def __post_init__(self):
        c2, s2 = self.derived_thresholds
        if not 0 < self.mix_prob <= 1:
            raise ValueError("mixing probability must lie in (0, 1]")
        if not 0 <= s2 < c2 <= 1 + 1e-12:
            raise ValueError(f"derived thresholds violate 0 <= s' < c' <= 1: {self.derived_thresholds}")

    @property
    def game(self) -> GameInstance:
        c2, s2 = self.derived_thresholds
        return GameInstance(self.effect, self.prefix, min(c2, 1.0), s2)

    def to_json(self) -> str:
        obj = json.loads(self.game.to_json())
        obj["construction"] = {
            "tag": self.tag.value,
            "source": list(self.source_thresholds),
            "derived": list(self.derived_thresholds),
            "mix_prob": self.mix_prob,
            "permutation": list(self.permutation) if self.permutation is not None else None,
        }
        return json.dumps(obj, sort_keys=True)


def _check_square_bipartite(h: EffectOperator) -> int:
    dims = h.layout.factor_dims
    if len(dims) != 2 or dims[0] != dims[1]:
        raise ValueError(f"expected a bipartite layout with equal halves, got {dims}")
    return dims[0]


def symmetric_projector_2(d: int) -> np.ndarray:
    return (np.eye(d * d) + swap_operator(d)) / 2


def compile_qma2_verifier(h: EffectOperator, eps: float = 0.0, s: float = 0.0) -> CompiledVerifier:
    """SWAP-then-verify effect for a verifier accepting ``psi (x) psi`` with probability ``>= 1 - eps``."""
    d = _check_square_bipartite(h)
    if not 0 <= eps < 1:
        raise ValueError("eps must lie in [0, 1)")
    pi = symmetric_projector_2(d)
    mat = (np.eye(d * d) - pi) + pi @ h.matrix @ pi
    prefix = QuantifierPrefix((Slot(Quantifier.EXISTS, d, Purity.PURE), Slot(Quantifier.FORALL, d, Purity.PURE)))
    c2 = QMA2_MIN_CONSTANT * (1 - eps) ** 2
    return CompiledVerifier(EffectOperator(mat, [d, d]), prefix, (1 - eps, s, eps), (c2, s), 1.0,
                            Construction.QMA2_TO_PSIGMA2)


def simulate_qma2_verifier(h: EffectOperator, rho: StateLike, rng: SeededRng | None = None,
                           shots: int = 0) -> dict:
    """Step-by-step run: SWAP test, then the verifier on the post-measurement state.

    Returns the exact two-branch probability and, when ``shots > 0``, a
    Monte-Carlo estimate with its standard error.
    """
    d = _check_square_bipartite(h)
    rho = as_density(rho)
    pi = EffectOperator(symmetric_projector_2(d), [d, d])
    p_pass = pi.probability(rho)
    if p_pass > 1e-12:
        post, _ = gentle_post_state(rho, pi)
        v_acc = h.probability(post)
    else:
        v_acc = 0.0
    exact = (1 - p_pass) + p_pass * v_acc
    out = {"p_swap_fail": 1 - p_pass, "p_verifier_given_pass": v_acc, "exact": exact}
    if shots > 0:
        if rng is None:
            raise ValueError("sampling needs an rng")
        passed = rng.random(shots) < p_pass
        accepted = np.where(passed, rng.random(shots) < v_acc, True)
        est = float(accepted.mean())
        out["estimate"] = est
        out["stderr"] = float(np.sqrt(max(est * (1 - est), 1e-300) / shots))
    return out


def qma2_acceptance_curve(delta: float, eps: float) -> float:
    """Lower bound on acceptance when the second proof is ``delta``-far from the first."""
    if not 0 <= delta <= 1 or not 0 <= eps < 1:
        raise ValueError("need delta in [0, 1] and eps in [0, 1)")
    half = delta * delta / 2
    return half + (1 - half) * max(0.0, 1 - eps - (1 + SQRT2) * delta)


def qma2_curve_minimum(eps: float) -> tuple[float, float]:
    """Closed-form minimizer ``(1-eps)/(1+sqrt2)`` and minimum ``(3/2 - sqrt2)(1-eps)^2``."""
    if not 0 <= eps < 1:
        raise ValueError("eps must lie in [0, 1)")
    return (1 - eps) / (1 + SQRT2), QMA2_MIN_CONSTANT * (1 - eps) ** 2


def qma2_curve_grid_minimum(eps: float, step: float = 1e-5, refine: bool = True) -> tuple[float, float]:
    """Numerical minimum of the acceptance curve: grid scan, then bounded Brent around the best point."""
    deltas = np.arange(0.0, 1.0 + step / 2, step)
    half = deltas ** 2 / 2
    vals = half + (1 - half) * np.maximum(0.0, 1 - eps - (1 + SQRT2) * deltas)
    i = int(np.argmin(vals))
    if not refine:
        return float(deltas[i]), float(vals[i])
    lo, hi = max(0.0, deltas[i] - step), min(1.0, deltas[i] + step)
    res = optimize.minimize_scalar(lambda x: qma2_acceptance_curve(x, eps), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-13})
    if res.fun < vals[i]:
        return float(res.x), float(res.fun)
    return float(deltas[i]), float(vals[i])


def qsigma3_thresholds(c: float, s: float) -> tuple[float, float, float]:
    """``(p, c', s')`` with ``p = 1/(3-2s)``."""
    if not 0 <= s < c <= 1:
        raise ValueError("need 0 <= s < c <= 1")
    p = 1.0 / (3 - 2 * s)
    return p, 1 - p * (1 - c), (2 - s) / (3 - 2 * s)


def soundness_envelope(s: float, p: float) -> float:
    """Best cheating acceptance ``max(1 - p + p s, (1 + p)/2)``."""
    if not 0 <= s <= 1 or not 0 < p <= 1:
        raise ValueError("need s in [0, 1] and p in (0, 1]")
    return max(1 - p + p * s, (1 + p) / 2)


def compile_psigma2_to_qsigma3(h: EffectOperator, c: float, s: float) -> CompiledVerifier:
    """Effect on ``rho_1 (x) rho_2 (x) rho_3``: verify (1,2) w.p. ``p``, else SWAP-test (1,3)."""
    dims = h.layout.factor_dims
    if len(dims) != 2:
        raise ValueError("expected a bipartite verifier")
    p, c2, s2 = qsigma3_thresholds(c, s)
    da, db = dims
    # SWAP projector built on order (1, 3, 2), then moved to (1, 2, 3)
    perm = (0, 2, 1)
    move = permutation_operator([da, da, db], perm)
    sym13 = move @ np.kron(symmetric_projector_2(da), np.eye(db)) @ move.T
    mat = p * np.kron(h.matrix, np.eye(da)) + (1 - p) * sym13
    prefix = QuantifierPrefix((
        Slot(Quantifier.EXISTS, da, Purity.MIXED),
        Slot(Quantifier.FORALL, db, Purity.MIXED),
        Slot(Quantifier.EXISTS, da, Purity.MIXED),
    ))
    return CompiledVerifier(EffectOperator(mat, [da, db, da]), prefix, (c, s, 1 - c), (c2, s2), p,
                            Construction.PSIGMA2_TO_QSIGMA3, perm)


# -- toy fixtures ------------------------------------------------------------------


def toy_qma2_yes(psi: PureState | None = None) -> tuple[EffectOperator, float]:
    """Verifier that accepts exactly ``psi (x) psi``; returns ``(H, eps=0)``."""
    if psi is None:
        psi = PureState([np.cos(0.3), np.exp(0.7j) * np.sin(0.3)], [2])
    v = np.kron(psi.amplitudes, psi.amplitudes)
    d = psi.dim
    return EffectOperator(np.outer(v, v.conj()), [d, d]), 0.0


def toy_qma2_yes_exact_value() -> float:
    """Min over second proofs when the first is the accepted state.

    With ``x = |<psi|phi>|^2`` the SWAP test fails with probability ``(1-x)/2``
    and the verifier then sees ``psi (x) psi`` with weight ``x``: ``(1+x)/2``,
    minimized at ``x = 0``.
    """
    return 0.5


def toy_psigma2_yes() -> tuple[EffectOperator, float, float]:
    """``|0><0| (x) I`` with ``c = 1, s = 0``: the first prover wins by sending ``|0>``."""
    return EffectOperator(np.kron(np.diag([1.0, 0.0]), np.eye(2)), [2, 2]), 1.0, 0.0


def toy_psigma2_no(kind: str = "zero") -> tuple[EffectOperator, float, float]:
    """NO fixtures with ``s = 0``: the zero verifier, or ``I (x) |0><0|`` refuted by ``|1>``."""
    if kind == "zero":
        h = np.zeros((4, 4))
    elif kind == "second":
        h = np.kron(np.eye(2), np.diag([1.0, 0.0]))
    else:
        raise ValueError(f"unknown fixture {kind!r}")
    return EffectOperator(h, [2, 2]), 1.0, 0.0


# -- numerical verification ---------------------------------------------------------


@dataclass
class VerificationReport:
    yes_instance: bool
    value: float
    threshold: float
    tolerance: float
    passed: bool
    estimates: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "yes_instance": self.yes_instance,
            "value": self.value,
            "threshold": self.threshold,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "estimates": {k: {"value": e.value, "method": e.method} for k, e in self.estimates.items()},
        }


def verify_compiled_game(v: CompiledVerifier, yes_instance: bool, tol: float = 0.02,
                         resolution: float | None = None, rng: SeededRng | None = None,
                         use_solver: bool = True, threshold: float | None = None) -> VerificationReport:
    """Check a compiled toy game against its derived thresholds.

    Qubit games are evaluated on the Bloch grid with every slot pure; the
    reported value is the grid value and the tolerance grows by the grid's
    Lipschitz bound.  When ``use_solver`` is set the alternating solver is
    run on the declared (possibly mixed) game as a second estimate, and both
    estimates must clear the threshold.
    """
    c2, s2 = v.derived_thresholds
    thr = threshold if threshold is not None else (c2 if yes_instance else s2)
    dims = v.prefix.dims
    estimates: dict[str, GameValueEstimate] = {}
    margin = tol
    if all(d == 2 for d in dims[:-1]) and len(dims) <= 3:
        res = resolution if resolution is not None else (0.01 if len(dims) == 2 else 0.05)
        est = grid_quantified(v.effect.matrix, dims, v.prefix.senses, res)
        estimates["grid"] = est
        margin += est.certificate["lipschitz_bound"]
    if use_solver or not estimates:
        est = solve_alternating(v.game, rng or SeededRng(0), restarts=4)
        if not est.certificate.get("converged", True):
            raise RuntimeError("solver did not converge")
        estimates["alternating"] = est
    values = [e.value for e in estimates.values()]
    value = min(values) if yes_instance else max(values)
    passed = value >= thr - margin if yes_instance else value <= thr + margin
    return VerificationReport(yes_instance, float(value), float(thr), float(margin), bool(passed), estimates)
