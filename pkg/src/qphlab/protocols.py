"""SWAP test, product test, symmetric-subspace projectors and gentle measurement.

Tests are represented by their accepting effect operators; exact acceptance
probabilities are traces.  ``sample_*`` wrappers draw Bernoulli outcomes
from those exact probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qstate import (
    DensityOperator,
    EffectOperator,
    HilbertLayout,
    PureState,
    SeededRng,
    StateLike,
    as_density,
    tensor,
    trace_distance,
)


def permutation_operator(dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Unitary sending factor ``j`` of the input to position ``perm.index(j)``.

    The output factor order is ``perm``: ``P |x_0 ... x_{n-1}> = |x_perm[0] ... x_perm[n-1]>``.
    The result acts from ``dims`` to ``[dims[p] for p in perm]``.
    """
    dims = list(dims)
    perm = list(perm)
    if sorted(perm) != list(range(len(dims))):
        raise ValueError(f"{perm} is not a permutation of {len(dims)} factors")
    d = int(np.prod(dims))
    idx = np.arange(d).reshape(dims).transpose(perm).reshape(-1)
    out = np.zeros((d, d))
    out[np.arange(d), idx] = 1.0
    return out


def swap_operator(dim: int) -> np.ndarray:
    """``F |i, j> = |j, i>`` on ``C^dim (x) C^dim``."""
    return permutation_operator([dim, dim], [1, 0])


def factor_swap(dims: Sequence[int], i: int, j: int) -> np.ndarray:
    """Swap of factors ``i`` and ``j`` (equal dimension) inside a larger layout."""
    if dims[i] != dims[j]:
        raise ValueError("swapped factors must have equal dimension")
    perm = list(range(len(dims)))
    perm[i], perm[j] = perm[j], perm[i]
    return permutation_operator(dims, perm)


def symmetric_projector(dims: Sequence[int], a_factors: Sequence[int], b_factors: Sequence[int]) -> np.ndarray:
    """``(I + F)/2`` where ``F`` swaps register ``A`` with register ``B`` as a whole."""
    perm = list(range(len(dims)))
    for a, b in zip(a_factors, b_factors):
        if dims[a] != dims[b]:
            raise ValueError("registers must have matching local dimensions")
        perm[a], perm[b] = b, a
    f = permutation_operator(dims, perm)
    return (np.eye(f.shape[0]) + f) / 2


def swap_effect(dim_a: int) -> EffectOperator:
    if dim_a < 1:
        raise ValueError("dimension must be positive")
    f = swap_operator(dim_a)
    return EffectOperator((np.eye(dim_a * dim_a) + f) / 2, [dim_a, dim_a])


def swap_accept_prob(rho: StateLike, sigma: StateLike) -> float:
    """``1/2 + tr(rho sigma)/2``."""
    if rho.layout.factor_dims != sigma.layout.factor_dims:
        raise ValueError("layout mismatch")
    if isinstance(rho, PureState) and isinstance(sigma, PureState):
        return 0.5 + 0.5 * abs(rho.overlap(sigma)) ** 2
    r, s = as_density(rho).matrix, as_density(sigma).matrix
    return float(0.5 + 0.5 * np.real(np.sum(r * s.T)))


def sample_swap_test(rho: StateLike, sigma: StateLike, rng: SeededRng, shots: int = 1) -> np.ndarray:
    """Boolean pass outcomes of ``shots`` independent SWAP tests."""
    return rng.random(shots) < swap_accept_prob(rho, sigma)


@dataclass(frozen=True)
class CutSpec:
    """Pairing of factor ``a_factors[i]`` with ``b_factors[i]`` inside ``layout``."""

    layout: HilbertLayout
    a_factors: tuple[int, ...]
    b_factors: tuple[int, ...]

    def __post_init__(self):
        a, b = self.a_factors, self.b_factors
        n = self.layout.n_factors
        if len(a) != len(b) or not a:
            raise ValueError("registers A and B need the same positive number of factors")
        if set(a) & set(b) or len(set(a)) != len(a) or len(set(b)) != len(b):
            raise ValueError("register index sets must be disjoint and repetition-free")
        if any(not 0 <= i < n for i in a + b):
            raise IndexError("factor index out of range")
        dims = self.layout.factor_dims
        if any(dims[i] != dims[j] for i, j in zip(a, b)):
            raise ValueError("paired factors must have matching local dims")

    @classmethod
    def adjacent(cls, dims: Sequence[int]) -> "CutSpec":
        """Cut for ``rho (x) sigma`` where both live on ``dims``."""
        s = len(dims)
        return cls(HilbertLayout(list(dims) * 2), tuple(range(s)), tuple(range(s, 2 * s)))


def product_effect(cut: CutSpec) -> EffectOperator:
    dims = cut.layout.factor_dims
    d = cut.layout.total_dim
    proj = np.eye(d)
    for a, b in zip(cut.a_factors, cut.b_factors):
        proj = proj @ ((np.eye(d) + factor_swap(dims, a, b)) / 2)
    return EffectOperator(proj, cut.layout)


def product_accept_prob(rho: StateLike, sigma: StateLike, cut: CutSpec | None = None) -> float:
    if rho.layout.factor_dims != sigma.layout.factor_dims:
        raise ValueError("layout mismatch")
    if cut is None:
        cut = CutSpec.adjacent(rho.layout.factor_dims)
    if cut.layout.factor_dims != rho.layout.factor_dims * 2:
        raise ValueError("cut layout does not match rho (x) sigma")
    if isinstance(rho, PureState) and isinstance(sigma, PureState):
        v = np.kron(rho.amplitudes, sigma.amplitudes)
        return float(np.real(np.vdot(v, _product_projector(cut) @ v)))
    joint = np.kron(as_density(rho).matrix, as_density(sigma).matrix)
    return float(np.real(np.trace(_product_projector(cut) @ joint)))


_PROJ_CACHE: dict = {}


def _product_projector(cut: CutSpec) -> np.ndarray:
    key = (cut.layout.factor_dims, cut.a_factors, cut.b_factors)
    if key not in _PROJ_CACHE:
        _PROJ_CACHE[key] = product_effect(cut).matrix
    return _PROJ_CACHE[key]


def sqrtm_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def gentle_post_state(rho: StateLike, m: EffectOperator) -> tuple[DensityOperator, float]:
    """Post-measurement state ``sqrt(M) rho sqrt(M) / tr(M rho)`` and ``tr(M rho)``."""
    rho = as_density(rho)
    if rho.layout.total_dim != m.layout.total_dim:
        raise ValueError("layout mismatch")
    p = m.probability(rho)
    if p <= 1e-12:
        raise ValueError(f"acceptance probability {p!r} vanishes")
    r = sqrtm_psd(m.matrix)
    post = r @ rho.matrix @ r / p
    return DensityOperator(post, rho.layout), p


def swap_trace_identity(x: np.ndarray, y: np.ndarray) -> tuple[complex, complex]:
    """``(tr(F (X (x) Y)), tr(XY))``; the two agree for any square X, Y."""
    d = x.shape[0]
    lhs = np.trace(swap_operator(d) @ np.kron(x, y))
    return complex(lhs), complex(np.trace(x @ y))


def extract_symmetric_copy(psi: PureState, phi: PureState) -> tuple[PureState, float]:
    """Split a copy of ``psi`` off the leading register of ``phi``.

    ``phi`` lives on ``B (x) C`` where ``B`` has the factor dims of ``psi``.
    Returns ``phi_2`` on ``C`` and the certified bound ``sqrt(2 eps)`` on
    ``d_tr(phi, psi (x) phi_2)``, where ``1 - eps`` is the SWAP-test
    acceptance of ``psi`` against the ``B`` register.
    """
    nb = psi.layout.n_factors
    if phi.layout.factor_dims[:nb] != psi.layout.factor_dims:
        raise ValueError("leading factors of phi must match psi")
    if phi.layout.n_factors == nb:
        raise ValueError("phi has no remaining register C")
    db = psi.dim
    dc = phi.dim // db
    block = phi.amplitudes.reshape(db, dc)
    contracted = psi.amplitudes.conj() @ block
    weight = float(np.real(np.vdot(contracted, contracted)))  # <psi| rho_B |psi>
    eps = 1.0 - (0.5 + 0.5 * weight)
    if eps >= 0.5:
        raise ValueError(f"symmetric acceptance {1 - eps:.6f} must exceed 1/2")
    if weight <= 1e-14:
        raise ValueError("contraction has zero norm")
    phi2 = PureState(contracted / np.sqrt(weight), phi.layout.sub(range(nb, phi.layout.n_factors)))
    return phi2, float(np.sqrt(2 * max(eps, 0.0)))


def symmetric_copy_distance(psi: PureState, phi: PureState, phi2: PureState) -> float:
    return trace_distance(phi, tensor(psi, phi2))
