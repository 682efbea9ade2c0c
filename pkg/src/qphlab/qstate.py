"""Dense linear algebra for small multipartite quantum systems.

States, effects and channels are immutable values over an explicit
tensor-factored Hilbert space.  Everything is exact double-precision
matrix arithmetic; dimensions are assumed small (at most a few thousand).
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

STRUCT_TOL = 1e-10
EIG_TOL = 1e-8
CHANNEL_TOL = 1e-8


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=complex, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class HilbertLayout:
    """Ordered local dimensions of a tensor product space."""

    factor_dims: tuple[int, ...]

    def __init__(self, factor_dims: Iterable[int]):
        dims = tuple(int(d) for d in factor_dims)
        if not dims:
            raise ValueError("layout needs at least one factor")
        if any(d < 1 for d in dims):
            raise ValueError(f"factor dimensions must be >= 1, got {dims}")
        object.__setattr__(self, "factor_dims", dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.factor_dims))

    @property
    def n_factors(self) -> int:
        return len(self.factor_dims)

    def __add__(self, other: "HilbertLayout") -> "HilbertLayout":
        return HilbertLayout(self.factor_dims + other.factor_dims)

    def sub(self, indices: Sequence[int]) -> "HilbertLayout":
        return HilbertLayout([self.factor_dims[i] for i in indices])

    @classmethod
    def qubits(cls, n: int) -> "HilbertLayout":
        return cls([2] * n)


def _as_layout(layout) -> HilbertLayout:
    if isinstance(layout, HilbertLayout):
        return layout
    if isinstance(layout, (int, np.integer)):
        return HilbertLayout([layout])
    return HilbertLayout(layout)


@dataclass(frozen=True, eq=False)
class PureState:
    layout: HilbertLayout
    amplitudes: np.ndarray

    def __init__(self, amplitudes, layout=None, normalize: bool = False):
        vec = np.asarray(amplitudes, dtype=complex).reshape(-1)
        layout = _as_layout(layout if layout is not None else [vec.size])
        if vec.size != layout.total_dim:
            raise ValueError(f"{vec.size} amplitudes for layout {layout.factor_dims}")
        norm = np.linalg.norm(vec)
        if normalize:
            if norm == 0:
                raise ValueError("cannot normalize the zero vector")
            vec = vec / norm
        elif abs(norm - 1.0) > STRUCT_TOL:
            raise ValueError(f"state norm {norm!r} is not 1")
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "amplitudes", _frozen(vec))

    @property
    def dim(self) -> int:
        return self.layout.total_dim

    def density(self) -> "DensityOperator":
        v = self.amplitudes
        return DensityOperator(np.outer(v, v.conj()), self.layout)

    def overlap(self, other: "PureState") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    @classmethod
    def basis(cls, index: int, layout) -> "PureState":
        layout = _as_layout(layout)
        v = np.zeros(layout.total_dim, dtype=complex)
        v[index] = 1.0
        return cls(v, layout)


@dataclass(frozen=True, eq=False)
class DensityOperator:
    layout: HilbertLayout
    matrix: np.ndarray

    def __init__(self, matrix, layout=None):
        mat = np.asarray(matrix, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {mat.shape}")
        layout = _as_layout(layout if layout is not None else [mat.shape[0]])
        if mat.shape[0] != layout.total_dim:
            raise ValueError("matrix size does not match layout")
        if not np.allclose(mat, mat.conj().T, atol=STRUCT_TOL, rtol=0):
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(mat).real
        if abs(tr - 1.0) > STRUCT_TOL:
            raise ValueError(f"density matrix has trace {tr!r}")
        lo = np.linalg.eigvalsh(mat)[0]
        if lo < -STRUCT_TOL:
            raise ValueError(f"density matrix has negative eigenvalue {lo!r}")
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "matrix", _frozen((mat + mat.conj().T) / 2))

    @property
    def dim(self) -> int:
        return self.layout.total_dim

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    @classmethod
    def maximally_mixed(cls, layout) -> "DensityOperator":
        layout = _as_layout(layout)
        d = layout.total_dim
        return cls(np.eye(d) / d, layout)


@dataclass(frozen=True, eq=False)
class EffectOperator:
    """Hermitian ``M`` with ``0 <= M <= I``; ``tr(M rho)`` is an acceptance probability."""

    layout: HilbertLayout
    matrix: np.ndarray

    def __init__(self, matrix, layout=None):
        mat = np.asarray(matrix, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("effect must be a square matrix")
        layout = _as_layout(layout if layout is not None else [mat.shape[0]])
        if mat.shape[0] != layout.total_dim:
            raise ValueError("matrix size does not match layout")
        if not np.allclose(mat, mat.conj().T, atol=STRUCT_TOL, rtol=0):
            raise ValueError("effect is not Hermitian")
        ev = np.linalg.eigvalsh(mat)
        if ev[0] < -STRUCT_TOL or ev[-1] > 1 + STRUCT_TOL:
            raise ValueError(f"effect spectrum [{ev[0]!r}, {ev[-1]!r}] not within [0, 1]")
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "matrix", _frozen((mat + mat.conj().T) / 2))

    def probability(self, state: "DensityOperator | PureState") -> float:
        if state.layout.total_dim != self.layout.total_dim:
            raise ValueError("layout mismatch")
        if isinstance(state, PureState):
            v = state.amplitudes
            return float(np.real(np.vdot(v, self.matrix @ v)))
        return float(np.real(np.trace(self.matrix @ state.matrix)))


@dataclass(frozen=True, eq=False)
class KrausChannel:
    input_layout: HilbertLayout
    output_layout: HilbertLayout
    kraus_ops: tuple[np.ndarray, ...]

    def __init__(self, kraus_ops, input_layout=None, output_layout=None):
        ops = tuple(_frozen(k) for k in kraus_ops)
        if not ops:
            raise ValueError("a channel needs at least one Kraus operator")
        dout, din = ops[0].shape
        input_layout = _as_layout(input_layout if input_layout is not None else [din])
        output_layout = _as_layout(output_layout if output_layout is not None else [dout])
        for k in ops:
            if k.shape != (output_layout.total_dim, input_layout.total_dim):
                raise ValueError(f"Kraus operator of shape {k.shape} does not fit layouts")
        completeness = sum(k.conj().T @ k for k in ops)
        if not np.allclose(completeness, np.eye(din), atol=CHANNEL_TOL, rtol=0):
            raise ValueError("Kraus operators are not trace preserving")
        object.__setattr__(self, "input_layout", input_layout)
        object.__setattr__(self, "output_layout", output_layout)
        object.__setattr__(self, "kraus_ops", ops)

    @classmethod
    def identity(cls, layout) -> "KrausChannel":
        layout = _as_layout(layout)
        return cls([np.eye(layout.total_dim)], layout, layout)

    @classmethod
    def depolarizing(cls, dim: int, p: float = 1.0) -> "KrausChannel":
        """``rho -> (1-p) rho + p I/d`` via the Weyl operator basis."""
        if not 0 <= p <= 1:
            raise ValueError("depolarizing probability must be in [0, 1]")
        omega = np.exp(2j * np.pi / dim)
        shift = np.roll(np.eye(dim), 1, axis=0)
        clock = np.diag(omega ** np.arange(dim))
        ops = []
        for a in range(dim):
            for b in range(dim):
                w = np.linalg.matrix_power(shift, a) @ np.linalg.matrix_power(clock, b)
                coeff = p / dim**2 + (1 - p if a == 0 and b == 0 else 0.0)
                if coeff > 0:
                    ops.append(np.sqrt(coeff) * w)
        return cls(ops, [dim], [dim])


class SeededRng:
    """Explicit random stream; identical seed gives an identical stream.

    Children are derived from ``(seed, *keys)`` so that a subcommand name and
    instance index always map to the same sub-stream, independent of the
    order in which sub-streams are requested.
    """

    algorithm = "PCG64"

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self.generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, algorithm={self.algorithm!r})"

    def derive(self, *keys) -> "SeededRng":
        words = [zlib.crc32(str(k).encode()) for k in keys]
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(words))
        lo, hi = ss.generate_state(2, dtype=np.uint32)
        return SeededRng((int(hi) << 32) | int(lo))

    # thin pass-throughs used throughout the package
    def random(self, size=None):
        return self.generator.random(size)

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def choice(self, a, size=None, p=None):
        return self.generator.choice(a, size=size, p=p)


StateLike = Union[PureState, DensityOperator]


def as_density(x: StateLike) -> DensityOperator:
    return x.density() if isinstance(x, PureState) else x


def tensor(a: StateLike, b: StateLike) -> StateLike:
    """Kronecker product; pure with pure stays pure, anything else is a density."""
    layout = a.layout + b.layout
    if isinstance(a, PureState) and isinstance(b, PureState):
        return PureState(np.kron(a.amplitudes, b.amplitudes), layout)
    return DensityOperator(np.kron(as_density(a).matrix, as_density(b).matrix), layout)


def tensor_all(states: Sequence[StateLike]) -> StateLike:
    out = states[0]
    for s in states[1:]:
        out = tensor(out, s)
    return out


def reduce_matrix(matrix: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Partial trace of a raw operator, keeping factors ``keep`` in the given order."""
    dims = list(dims)
    n = len(dims)
    keep = list(keep)
    drop = [i for i in range(n) if i not in keep]
    t = np.asarray(matrix).reshape(dims + dims)
    # move kept rows, dropped rows, kept cols, dropped cols
    perm = keep + drop + [n + i for i in keep] + [n + i for i in drop]
    t = t.transpose(perm)
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    dd = int(np.prod([dims[i] for i in drop])) if drop else 1
    t = t.reshape(dk, dd, dk, dd)
    return np.einsum("ajbj->ab", t)


def partial_trace(rho: StateLike, keep) -> DensityOperator:
    """Reduced state on the factors in ``keep``.

    A set keeps factors in ascending order; a list or tuple keeps the given order.
    """
    rho = as_density(rho)
    n = rho.layout.n_factors
    order = sorted(keep) if isinstance(keep, (set, frozenset)) else list(keep)
    if any(not 0 <= i < n for i in order) or len(set(order)) != len(order):
        raise IndexError(f"factor indices {order} invalid for {n} factors")
    if not order:
        raise ValueError("must keep at least one factor")
    red = reduce_matrix(rho.matrix, rho.layout.factor_dims, order)
    return DensityOperator(red, rho.layout.sub(order))


def trace_distance(x: StateLike, y: StateLike) -> float:
    """Half the trace norm of ``x - y``."""
    if x.layout.total_dim != y.layout.total_dim or x.layout.factor_dims != y.layout.factor_dims:
        raise ValueError("layout mismatch")
    if isinstance(x, PureState) and isinstance(y, PureState):
        ov = abs(x.overlap(y)) ** 2
        return float(np.sqrt(max(0.0, 1.0 - ov)))
    diff = as_density(x).matrix - as_density(y).matrix
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


def is_hermitian(h: np.ndarray, tol: float = STRUCT_TOL) -> bool:
    h = np.asarray(h)
    scale = max(1.0, float(np.max(np.abs(h)))) if h.size else 1.0
    return bool(np.allclose(h, h.conj().T, atol=tol * scale, rtol=0))


def extreme_eigpair(h: np.ndarray, which: str = "max") -> tuple[float, np.ndarray]:
    """Largest or smallest eigenvalue of a Hermitian matrix and a unit eigenvector.

    Ties go to the first eigenvector LAPACK returns.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("expected a square matrix")
    if not is_hermitian(h):
        raise ValueError("matrix is not Hermitian")
    if which not in ("max", "min"):
        raise ValueError("which must be 'max' or 'min'")
    w, v = np.linalg.eigh((h + h.conj().T) / 2)
    idx = int(np.flatnonzero(np.isclose(w, w[-1], rtol=0, atol=1e-12))[0]) if which == "max" else 0
    lam, vec = float(w[idx]), v[:, idx]
    resid = np.linalg.norm(h @ vec - lam * vec)
    if resid > EIG_TOL * max(1.0, abs(lam)):
        raise np.linalg.LinAlgError(f"eigen-residual {resid:.3e} too large")
    return lam, vec


def apply_channel(ch: KrausChannel, rho: StateLike) -> DensityOperator:
    rho = as_density(rho)
    if rho.layout.factor_dims != ch.input_layout.factor_dims:
        raise ValueError("state layout does not match channel input")
    out = sum(k @ rho.matrix @ k.conj().T for k in ch.kraus_ops)
    return DensityOperator(out, ch.output_layout)


def povm_probability_bound_check(m: EffectOperator, rho: StateLike, sigma: StateLike) -> bool:
    """Acceptance probabilities differ by at most the trace distance."""
    gap = abs(m.probability(as_density(rho)) - m.probability(as_density(sigma)))
    return bool(gap <= trace_distance(as_density(rho), as_density(sigma)) + 1e-9)


# -- random instances --------------------------------------------------------


def random_pure_state(layout, rng: SeededRng) -> PureState:
    layout = _as_layout(layout)
    z = rng.normal(layout.total_dim) + 1j * rng.normal(layout.total_dim)
    return PureState(z, layout, normalize=True)


def random_density(layout, rng: SeededRng, rank: int | None = None) -> DensityOperator:
    """Induced-measure random state of the given rank (full rank by default)."""
    layout = _as_layout(layout)
    d = layout.total_dim
    r = d if rank is None else rank
    g = rng.normal((d, r)) + 1j * rng.normal((d, r))
    rho = g @ g.conj().T
    return DensityOperator(rho / np.trace(rho).real, layout)


def random_unitary(dim: int, rng: SeededRng) -> np.ndarray:
    z = (rng.normal((dim, dim)) + 1j * rng.normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_hermitian(dim: int, rng: SeededRng) -> np.ndarray:
    a = rng.normal((dim, dim)) + 1j * rng.normal((dim, dim))
    return (a + a.conj().T) / 2


def random_effect(layout, rng: SeededRng) -> EffectOperator:
    """Haar eigenbasis with eigenvalues uniform on [0, 1]."""
    layout = _as_layout(layout)
    d = layout.total_dim
    u = random_unitary(d, rng)
    lam = rng.random(d)
    return EffectOperator((u * lam) @ u.conj().T, layout)


def random_channel(din: int, dout: int, n_kraus: int, rng: SeededRng) -> KrausChannel:
    """Random channel from an isometry ``C^din -> C^dout (x) C^n_kraus``."""
    z = rng.normal((dout * n_kraus, din)) + 1j * rng.normal((dout * n_kraus, din))
    q, _ = np.linalg.qr(z)
    ops = [q[i * dout:(i + 1) * dout, :] for i in range(n_kraus)]
    return KrausChannel(ops, [din], [dout])


# -- serialization -----------------------------------------------------------


def to_json_obj(x: StateLike | EffectOperator | np.ndarray, layout=None) -> dict:
    """``{layout, re, im}`` with row-major flattening."""
    if isinstance(x, PureState):
        arr, layout = x.amplitudes, x.layout
    elif isinstance(x, (DensityOperator, EffectOperator)):
        arr, layout = x.matrix, x.layout
    else:
        arr = np.asarray(x, dtype=complex)
        layout = _as_layout(layout if layout is not None else [arr.shape[0]])
    flat = np.asarray(arr).reshape(-1)
    return {
        "layout": list(layout.factor_dims),
        "re": [float(v) for v in flat.real],
        "im": [float(v) for v in flat.imag],
    }


def array_from_json_obj(obj: dict) -> tuple[np.ndarray, HilbertLayout]:
    layout = HilbertLayout(obj["layout"])
    data = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
    d = layout.total_dim
    if data.size == d:
        return data, layout
    if data.size == d * d:
        return data.reshape(d, d), layout
    raise ValueError(f"{data.size} entries do not fit layout {layout.factor_dims}")


def from_json_obj(obj: dict, kind: str = "density"):
    """Rebuild a ``pure``/``density``/``effect`` value from its JSON object."""
    arr, layout = array_from_json_obj(obj)
    if kind == "pure":
        return PureState(arr, layout)
    if kind == "density":
        return DensityOperator(arr, layout)
    if kind == "effect":
        return EffectOperator(arr, layout)
    if kind == "matrix":
        return arr
    raise ValueError(f"unknown kind {kind!r}")


def dumps(x, layout=None) -> str:
    return json.dumps(to_json_obj(x, layout), sort_keys=True)
