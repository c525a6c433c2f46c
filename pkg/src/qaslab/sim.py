"""Dense state-vector and density-matrix simulation for small qubit registers.

Basis convention: qubit 0 is the most significant bit of the computational
basis index, so on three qubits ``|100>`` is index 4.

Every state array may carry one leading batch axis.  Gate angles may be
scalars or 1-D arrays matching (or broadcasting against) that batch axis,
which lets a single call evolve many parameter settings at once.  A rotation
about Pauli ``P`` is ``exp(-i * theta * P / 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
import math
from typing import Sequence, Union

import numpy as np

from .errors import CapabilityError

ROTATIONS = ("RX", "RY", "RZ")
GATE_KINDS = ROTATIONS + ("T", "CNOT", "I")
MAX_DENSE_QUBITS = 6

_T_PHASE = np.exp(1j * np.pi / 4)


@dataclass(frozen=True)
class PureState:
    n_qubits: int
    amplitudes: np.ndarray

    @property
    def batched(self) -> bool:
        return self.amplitudes.ndim == 2

    def norm(self):
        return np.sum(np.abs(self.amplitudes) ** 2, axis=-1)


@dataclass(frozen=True)
class MixedState:
    n_qubits: int
    matrix: np.ndarray

    @property
    def batched(self) -> bool:
        return self.matrix.ndim == 3

    def trace(self):
        return np.trace(self.matrix, axis1=-2, axis2=-1)


State = Union[PureState, MixedState]


@dataclass(frozen=True)
class NoiseModel:
    """Per-gate depolarizing noise: ``p1`` after one-qubit gates, ``p2`` after CNOT."""

    p1: float = 0.0
    p2: float = 0.0
    enabled: bool = False

    def __post_init__(self):
        for name in ("p1", "p2"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} outside [0, 1]")

    @classmethod
    def off(cls) -> "NoiseModel":
        return cls()

    @classmethod
    def depolarizing(cls, p1: float = 0.05, p2: float = 0.2) -> "NoiseModel":
        return cls(p1=p1, p2=p2, enabled=True)

    def prob_for(self, kind: str) -> float:
        if not self.enabled or kind == "I":
            return 0.0
        return self.p2 if kind == "CNOT" else self.p1

    @property
    def active(self) -> bool:
        return self.enabled and (self.p1 > 0.0 or self.p2 > 0.0)


# ---------------------------------------------------------------------------
# state construction


def zero_state(n_qubits: int, mixed: bool = False) -> State:
    dim = 2**n_qubits
    if mixed:
        rho = np.zeros((dim, dim), dtype=complex)
        rho[0, 0] = 1.0
        return MixedState(n_qubits, rho)
    psi = np.zeros(dim, dtype=complex)
    psi[0] = 1.0
    return PureState(n_qubits, psi)


def basis_state(bits: str) -> PureState:
    """``basis_state("10")`` is ``|10>`` (qubit 0 first)."""
    n = len(bits)
    psi = np.zeros(2**n, dtype=complex)
    psi[int(bits, 2)] = 1.0
    return PureState(n, psi)


def to_mixed(state: State) -> MixedState:
    if isinstance(state, MixedState):
        return state
    psi = state.amplitudes
    rho = psi[..., :, None] * psi[..., None, :].conj()
    return MixedState(state.n_qubits, rho)


def maximally_mixed(n_qubits: int) -> MixedState:
    dim = 2**n_qubits
    return MixedState(n_qubits, np.eye(dim, dtype=complex) / dim)


# ---------------------------------------------------------------------------
# gates


def gate_matrix(kind: str, angle=None) -> np.ndarray:
    """2x2 matrix of a single-qubit gate; shape (..., 2, 2) for array angles."""
    if kind in ROTATIONS:
        half = np.asarray(angle, dtype=float) / 2.0
        c, s = np.cos(half), np.sin(half)
        m = np.zeros(half.shape + (2, 2), dtype=complex)
        if kind == "RX":
            m[..., 0, 0] = c
            m[..., 0, 1] = -1j * s
            m[..., 1, 0] = -1j * s
            m[..., 1, 1] = c
        elif kind == "RY":
            m[..., 0, 0] = c
            m[..., 0, 1] = -s
            m[..., 1, 0] = s
            m[..., 1, 1] = c
        else:
            m[..., 0, 0] = np.exp(-1j * half)
            m[..., 1, 1] = np.exp(1j * half)
        return m
    if kind == "T":
        return np.diag([1.0, _T_PHASE])
    if kind == "I":
        return np.eye(2, dtype=complex)
    raise ValueError(f"no 2x2 matrix for gate kind {kind!r}")


def _entries(kind: str, angle):
    """Matrix entries (a, b, c, d) shaped to broadcast over (batch, hi, lo)."""
    m = gate_matrix(kind, angle)
    if m.ndim == 3:
        m = m[:, None, None, :, :]
    return m[..., 0, 0], m[..., 0, 1], m[..., 1, 0], m[..., 1, 1]


def _apply_2x2(arr: np.ndarray, hi: int, lo: int, a, b, c, d, diagonal: bool):
    """Apply [[a, b], [c, d]] to the middle axis of ``arr`` viewed as (B, hi, 2, lo)."""
    v = arr.reshape(arr.shape[0], hi, 2, lo)
    s0, s1 = v[:, :, 0, :], v[:, :, 1, :]
    if diagonal:
        out0, out1 = a * s0, d * s1
    else:
        out0, out1 = a * s0 + b * s1, c * s0 + d * s1
    out = np.stack(np.broadcast_arrays(out0, out1), axis=2)
    return out


@lru_cache(maxsize=None)
def _cnot_perm(n_qubits: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(2**n_qubits)
    cmask = 1 << (n_qubits - 1 - control)
    tmask = 1 << (n_qubits - 1 - target)
    return np.where(idx & cmask, idx ^ tmask, idx)


def _check_gate(n_qubits: int, kind: str, qubits: Sequence[int], angle) -> None:
    if kind not in GATE_KINDS:
        raise ValueError(f"unknown gate kind {kind!r}")
    want = 2 if kind == "CNOT" else 1
    if len(qubits) != want:
        raise ValueError(f"{kind} acts on {want} qubit(s), got {tuple(qubits)}")
    for q in qubits:
        if not 0 <= q < n_qubits:
            raise IndexError(f"qubit {q} out of range for {n_qubits} qubits")
    if len(set(qubits)) != len(qubits):
        raise ValueError(f"qubit indices must be distinct, got {tuple(qubits)}")
    if (kind in ROTATIONS) != (angle is not None):
        if angle is None:
            raise ValueError(f"{kind} requires an angle")
        raise ValueError(f"{kind} takes no angle")


def apply_gate(state: State, kind: str, qubits: Sequence[int], angle=None) -> State:
    """Return ``U state`` (pure) or ``U rho U^dagger`` (mixed)."""
    qubits = tuple(int(q) for q in qubits)
    n = state.n_qubits
    _check_gate(n, kind, qubits, angle)
    if kind == "I":
        return state
    dim = 2**n
    pure = isinstance(state, PureState)
    data = state.amplitudes if pure else state.matrix
    was_batched = data.ndim == (2 if pure else 3)
    arr = data if was_batched else data[None]

    if kind == "CNOT":
        perm = _cnot_perm(n, *qubits)
        out = arr[:, perm] if pure else arr[:, perm][:, :, perm]
    else:
        q = qubits[0]
        hi, lo = 2**q, 2 ** (n - q - 1)
        a, b, c, d = _entries(kind, angle)
        diagonal = kind in ("RZ", "T")
        batch_angle = np.ndim(angle) == 1
        if pure:
            out = _apply_2x2(arr, hi, lo, a, b, c, d, diagonal)
            out = out.reshape(out.shape[0], dim)
        else:
            rows = _apply_2x2(arr, hi, lo * dim, a, b, c, d, diagonal)
            rows = rows.reshape(rows.shape[0], dim, dim)
            ca, cb, cc, cd = (np.conj(x) for x in (a, b, c, d))
            out = _apply_2x2(rows, dim * hi, lo, ca, cb, cc, cd, diagonal)
            out = out.reshape(out.shape[0], dim, dim)
        was_batched = was_batched or batch_angle

    if not was_batched:
        out = out[0]
    return PureState(n, out) if pure else MixedState(n, out)


def _replace_with_mixed(arr: np.ndarray, n: int, q: int) -> np.ndarray:
    """Map (B, D, D) to ``I/2 (x) Tr_q rho`` with the identity on qubit ``q``."""
    hi, lo = 2**q, 2 ** (n - q - 1)
    v = arr.reshape(arr.shape[0], hi, 2, lo, hi, 2, lo)
    reduced = 0.5 * (v[:, :, 0, :, :, 0, :] + v[:, :, 1, :, :, 1, :])
    out = np.zeros_like(v)
    out[:, :, 0, :, :, 0, :] = reduced
    out[:, :, 1, :, :, 1, :] = reduced
    return out.reshape(arr.shape)


def apply_depolarizing(state: MixedState, qubits: Sequence[int], p: float) -> MixedState:
    """``rho -> (1 - p) rho + p * (I/2^k (x) Tr_qubits rho)`` for the k target qubits."""
    if not isinstance(state, MixedState):
        raise TypeError("depolarizing noise needs a MixedState")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"depolarizing probability {p} outside [0, 1]")
    n = state.n_qubits
    for q in qubits:
        if not 0 <= q < n:
            raise IndexError(f"qubit {q} out of range for {n} qubits")
    if p == 0.0:
        return state
    rho = state.matrix
    arr = rho if rho.ndim == 3 else rho[None]
    replaced = arr
    for q in qubits:
        replaced = _replace_with_mixed(replaced, n, q)
    out = (1.0 - p) * arr + p * replaced
    return MixedState(n, out if rho.ndim == 3 else out[0])


# ---------------------------------------------------------------------------
# observables

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class PauliString:
    coefficient: float
    letters: str

    def __post_init__(self):
        if not math.isfinite(self.coefficient):
            raise ValueError("coefficient must be finite")
        if any(ch not in "IXYZ" for ch in self.letters):
            raise ValueError(f"bad Pauli letters {self.letters!r}")

    @property
    def n_qubits(self) -> int:
        return len(self.letters)

    def to_matrix(self) -> np.ndarray:
        m = np.ones((1, 1), dtype=complex)
        for ch in self.letters:
            m = np.kron(m, _PAULI[ch])
        return self.coefficient * m


@dataclass(frozen=True)
class Hamiltonian:
    """Real-weighted sum of Pauli strings."""

    n_qubits: int
    terms: tuple[PauliString, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        for t in self.terms:
            if t.n_qubits != self.n_qubits:
                raise ValueError(
                    f"term {t.letters!r} has {t.n_qubits} qubits, expected {self.n_qubits}"
                )

    @classmethod
    def from_pairs(cls, pairs) -> "Hamiltonian":
        terms = [PauliString(float(c), s) for c, s in pairs]
        return cls(len(terms[0].letters), tuple(terms))

    @classmethod
    def single(cls, n_qubits: int, letter: str, qubit: int, coefficient: float = 1.0):
        letters = ["I"] * n_qubits
        letters[qubit] = letter
        return cls(n_qubits, (PauliString(coefficient, "".join(letters)),))

    def coefficient_of(self, letters: str) -> float:
        return sum(t.coefficient for t in self.terms if t.letters == letters)

    def norm_bound(self) -> float:
        """Upper bound on ``|<H>|`` for any state."""
        return float(sum(abs(t.coefficient) for t in self.terms))

    def to_matrix(self) -> np.ndarray:
        if self.n_qubits > MAX_DENSE_QUBITS:
            raise CapabilityError(f"dense assembly limited to {MAX_DENSE_QUBITS} qubits")
        dim = 2**self.n_qubits
        m = np.zeros((dim, dim), dtype=complex)
        for t in self.terms:
            m += t.to_matrix()
        return m

    def to_text(self) -> str:
        return "".join(f"{t.coefficient!r} {t.letters}\n" for t in self.terms)

    @classmethod
    def from_text(cls, text: str) -> "Hamiltonian":
        pairs = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            coeff, letters = line.split()
            pairs.append((float(coeff), letters))
        return cls.from_pairs(pairs)

    @cached_property
    def _compiled(self):
        """Terms grouped by X-flip mask: list of (mask, phase-weighted vector)."""
        n = self.n_qubits
        idx = np.arange(2**n)
        groups: dict[int, np.ndarray] = {}
        for t in self.terms:
            mask = 0
            phase = np.ones(2**n, dtype=complex)
            for q, ch in enumerate(t.letters):
                shift = n - 1 - q
                sign = 1 - 2 * ((idx >> shift) & 1)
                if ch in "XY":
                    mask |= 1 << shift
                if ch == "Y":
                    phase = phase * 1j * sign
                elif ch == "Z":
                    phase = phase * sign
            groups.setdefault(mask, np.zeros(2**n, dtype=complex))
            groups[mask] = groups[mask] + t.coefficient * phase
        return [(idx ^ mask, vec) for mask, vec in groups.items()]


def expectation(state: State, obs: Hamiltonian):
    """``sum_k c_k Tr(P_k rho)``; a float, or an array for batched states."""
    if obs.n_qubits != state.n_qubits:
        raise ValueError(
            f"observable on {obs.n_qubits} qubits, state on {state.n_qubits}"
        )
    total = 0.0
    if isinstance(state, PureState):
        psi = state.amplitudes
        for flipped, vec in obs._compiled:
            total = total + np.sum(psi[..., flipped].conj() * vec * psi, axis=-1)
    else:
        rho = state.matrix
        rows = np.arange(rho.shape[-1])
        for flipped, vec in obs._compiled:
            total = total + rho[..., rows, flipped] @ vec
    value = np.real(total)
    return float(value) if np.ndim(value) == 0 else value


def exact_ground_energy(h: Hamiltonian) -> float:
    if h.n_qubits > MAX_DENSE_QUBITS:
        raise CapabilityError(
            f"dense eigensolver limited to {MAX_DENSE_QUBITS} qubits, got {h.n_qubits}"
        )
    return float(np.linalg.eigvalsh(h.to_matrix())[0])
