"""Search spaces, architectures, circuit construction and parameter-shift gradients.

A layer of a subnet is laid out as: optional fixed prefix gates on every
qubit, then each qubit's rotation(s) chosen from the single-qubit pool, then a
CNOT for every active candidate pair in declaration order.

Tasks are duck-typed.  Anything with ``n_qubits``, ``observable``,
``encoding_gates()``, ``encoding_angles(split)``, ``loss(expvals, split)`` and
``loss_weights(expvals, split)`` can be evaluated and differentiated here.
"""

from __future__ import annotations

from dataclasses import dataclass
import hashlib
import itertools
import json
import re
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np

from .errors import CapabilityError
from .sim import (
    ROTATIONS,
    Hamiltonian,
    NoiseModel,
    apply_depolarizing,
    apply_gate,
    expectation,
    zero_state,
)

_LETTER = {"RX": "X", "RY": "Y", "RZ": "Z"}
_KIND = {v: k for k, v in _LETTER.items()}


def _as_op(item) -> tuple[str, ...]:
    ops = tuple(item.split("+")) if isinstance(item, str) else tuple(item)
    if not ops or any(k not in ROTATIONS for k in ops):
        raise ValueError(f"pool entry {item!r} must be one or more of {ROTATIONS}")
    return ops


def op_name(op: tuple[str, ...]) -> str:
    return "+".join(op)


@dataclass(frozen=True)
class SearchSpace:
    """Candidate circuits: a pool of per-qubit rotation choices plus optional CNOT pairs.

    Each pool entry is a tuple of rotation kinds applied in order to one
    qubit, so ``("RY", "RZ")`` is an RY followed by an RZ with two angles.
    """

    n_qubits: int
    n_layers: int
    pool: tuple[tuple[str, ...], ...]
    pairs: tuple[tuple[int, int], ...] = ()
    prefix: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "pool", tuple(_as_op(p) for p in self.pool))
        object.__setattr__(self, "pairs", tuple((int(a), int(b)) for a, b in self.pairs))
        object.__setattr__(self, "prefix", tuple(self.prefix))
        if self.n_layers < 1:
            raise ValueError("need at least one layer")
        if not self.pool:
            raise ValueError("single-qubit pool is empty")
        for a, b in self.pairs:
            if a == b or not (0 <= a < self.n_qubits and 0 <= b < self.n_qubits):
                raise ValueError(f"invalid CNOT pair {(a, b)}")
        if len(set(self.pairs)) != len(self.pairs):
            raise ValueError("duplicate CNOT pair")
        for kind in self.prefix:
            if kind not in ("T", "I"):
                raise ValueError(f"prefix gates must be fixed (T or I), got {kind!r}")

    def to_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "n_layers": self.n_layers,
            "pool": [op_name(p) for p in self.pool],
            "pairs": [list(p) for p in self.pairs],
            "prefix": list(self.prefix),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpace":
        return cls(
            n_qubits=d["n_qubits"],
            n_layers=d["n_layers"],
            pool=tuple(d["pool"]),
            pairs=tuple(tuple(p) for p in d.get("pairs", ())),
            prefix=tuple(d.get("prefix", ())),
        )

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_layers(self, n_layers: int) -> "SearchSpace":
        return SearchSpace(self.n_qubits, n_layers, self.pool, self.pairs, self.prefix)

    def max_parameters(self) -> int:
        """Weight-sharing bound: every layout of every layer materialized."""
        widest = max(len(op) for op in self.pool)
        return self.n_layers * len(self.pool) ** self.n_qubits * self.n_qubits * widest


def classification_space(n_layers: int = 3) -> SearchSpace:
    return SearchSpace(3, n_layers, (("RY",),), ((0, 1), (0, 2), (1, 2)))


def vqe_space(n_layers: int = 3) -> SearchSpace:
    return SearchSpace(4, n_layers, (("RY",), ("RZ",)), ((0, 1), (1, 2), (2, 3)))


def qas_rc_space(n_layers: int = 3) -> SearchSpace:
    """Directed pairs following a five-qubit T-shaped device restricted to qubits 0-3."""
    pairs = ((0, 1), (1, 0), (1, 2), (2, 1), (1, 3), (3, 1))
    return SearchSpace(4, n_layers, (("RY",), ("RZ",)), pairs)


def space_size(space: SearchSpace) -> int:
    per_layer = len(space.pool) ** space.n_qubits * 2 ** len(space.pairs)
    return per_layer**space.n_layers


class LayoutKey(NamedTuple):
    layer: int
    layout: tuple[tuple[str, ...], ...]


@dataclass(frozen=True)
class Architecture:
    """Pool index per (layer, qubit) and activation flag per (layer, candidate pair)."""

    single: tuple[tuple[int, ...], ...]
    pairs: tuple[tuple[bool, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "single", tuple(tuple(int(i) for i in row) for row in self.single))
        object.__setattr__(self, "pairs", tuple(tuple(bool(b) for b in row) for row in self.pairs))

    @property
    def n_layers(self) -> int:
        return len(self.single)

    def n_cnots(self) -> int:
        return sum(sum(row) for row in self.pairs)

    def layout_key(self, space: SearchSpace, layer: int) -> LayoutKey:
        return LayoutKey(layer, tuple(space.pool[i] for i in self.single[layer]))

    def layout_keys(self, space: SearchSpace) -> list[LayoutKey]:
        return [self.layout_key(space, l) for l in range(self.n_layers)]

    def genome(self) -> np.ndarray:
        return np.array(
            [i for row in self.single for i in row] + [int(b) for row in self.pairs for b in row]
        )

    @classmethod
    def from_genome(cls, space: SearchSpace, genome) -> "Architecture":
        g = np.asarray(genome, dtype=int)
        n, p, L = space.n_qubits, len(space.pairs), space.n_layers
        single = g[: L * n].reshape(L, n)
        pairs = g[L * n :].reshape(L, p).astype(bool)
        return cls(tuple(map(tuple, single)), tuple(map(tuple, pairs)))

    def to_text(self, space: SearchSpace) -> str:
        layers = []
        for l in range(self.n_layers):
            ops = "".join(_op_letters(space.pool[i]) for i in self.single[l])
            bits = "".join("1" if b else "0" for b in self.pairs[l])
            layers.append(f"{ops}:{bits}")
        return "|".join(layers)

    @classmethod
    def from_text(cls, space: SearchSpace, text: str) -> "Architecture":
        lookup = {_op_letters(op): i for i, op in enumerate(space.pool)}
        single, pairs = [], []
        for chunk in text.strip().split("|"):
            ops, _, bits = chunk.partition(":")
            tokens = re.findall(r"\[[XYZ]+\]|[XYZ]", ops)
            single.append(tuple(lookup[t] for t in tokens))
            pairs.append(tuple(ch == "1" for ch in bits))
        arch = cls(tuple(single), tuple(pairs))
        check_architecture(space, arch)
        return arch


def _op_letters(op: tuple[str, ...]) -> str:
    letters = "".join(_LETTER[k] for k in op)
    return letters if len(op) == 1 else f"[{letters}]"


def check_architecture(space: SearchSpace, arch: Architecture) -> None:
    if arch.n_layers != space.n_layers or len(arch.pairs) != space.n_layers:
        raise ValueError(f"architecture has {arch.n_layers} layers, space has {space.n_layers}")
    for row in arch.single:
        if len(row) != space.n_qubits:
            raise ValueError("single-qubit choice row has wrong length")
        if any(not 0 <= i < len(space.pool) for i in row):
            raise ValueError("single-qubit choice outside pool")
    for row in arch.pairs:
        if len(row) != len(space.pairs):
            raise ValueError("pair mask has wrong length")


def sample_uniform(space: SearchSpace, rng: np.random.Generator) -> Architecture:
    L, n, p = space.n_layers, space.n_qubits, len(space.pairs)
    single = rng.integers(0, len(space.pool), size=(L, n))
    pairs = rng.integers(0, 2, size=(L, p)).astype(bool)
    return Architecture(tuple(map(tuple, single)), tuple(map(tuple, pairs)))


def enumerate_space(space: SearchSpace) -> Iterator[Architecture]:
    L, n, p = space.n_layers, space.n_qubits, len(space.pairs)
    layer_choices = list(
        itertools.product(
            itertools.product(range(len(space.pool)), repeat=n),
            itertools.product((False, True), repeat=p),
        )
    )
    for combo in itertools.product(layer_choices, repeat=L):
        yield Architecture(tuple(c[0] for c in combo), tuple(c[1] for c in combo))


@dataclass(frozen=True)
class ParamAssignment:
    """Rotation angles, one array per layer in gate-emission order."""

    layers: tuple[np.ndarray, ...]

    def flat(self) -> np.ndarray:
        return np.concatenate(self.layers) if self.layers else np.zeros(0)

    @property
    def size(self) -> int:
        return sum(len(a) for a in self.layers)

    def split(self, vector) -> "ParamAssignment":
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.size,):
            raise ValueError(f"expected {self.size} angles, got shape {vector.shape}")
        bounds = np.cumsum([len(a) for a in self.layers])[:-1]
        return ParamAssignment(tuple(np.split(vector.copy(), bounds)))


def layer_width(space: SearchSpace, arch: Architecture, layer: int) -> int:
    return sum(len(space.pool[i]) for i in arch.single[layer])


def zero_params(space: SearchSpace, arch: Architecture) -> ParamAssignment:
    return ParamAssignment(
        tuple(np.zeros(layer_width(space, arch, l)) for l in range(space.n_layers))
    )


@dataclass(frozen=True)
class Gate:
    """One gate. ``slot`` indexes a column of a batched angle table when present."""

    kind: str
    qubits: tuple[int, ...]
    angle: Optional[float] = None
    slot: Optional[int] = None
    noisy: bool = True
    trainable: bool = False


def n_slots(gates: Sequence[Gate]) -> int:
    slots = [g.slot for g in gates if g.slot is not None]
    return max(slots) + 1 if slots else 0


def build_circuit(
    space: SearchSpace,
    arch: Architecture,
    params: ParamAssignment,
    encoding: Optional[Sequence[Gate]] = None,
) -> list[Gate]:
    check_architecture(space, arch)
    if len(params.layers) != space.n_layers:
        raise ValueError("parameter layers do not match the space")
    gates = list(encoding or ())
    slot = n_slots(gates)
    for l in range(space.n_layers):
        angles = np.asarray(params.layers[l], dtype=float)
        if angles.shape != (layer_width(space, arch, l),):
            raise ValueError(f"layer {l}: expected {layer_width(space, arch, l)} angles")
        for kind in space.prefix:
            for q in range(space.n_qubits):
                gates.append(Gate(kind, (q,)))
        k = 0
        for q, choice in enumerate(arch.single[l]):
            for kind in space.pool[choice]:
                gates.append(Gate(kind, (q,), float(angles[k]), slot, trainable=True))
                k += 1
                slot += 1
        for (a, b), active in zip(space.pairs, arch.pairs[l]):
            if active:
                gates.append(Gate("CNOT", (a, b)))
    return gates


# ---------------------------------------------------------------------------
# execution


def run_circuit(
    n_qubits: int,
    gates: Sequence[Gate],
    noise: NoiseModel,
    angle_table: Optional[np.ndarray] = None,
    mixed: Optional[bool] = None,
):
    """Evolve ``|0...0>`` through ``gates``; returns the final (possibly batched) state.

    Noise, when active, follows each gate on exactly that gate's qubits.
    """
    if mixed is None:
        mixed = noise.active
    state = zero_state(n_qubits, mixed=mixed)
    for g in gates:
        if g.kind in ROTATIONS:
            angle = angle_table[:, g.slot] if (angle_table is not None and g.slot is not None) else g.angle
        else:
            angle = None
        state = apply_gate(state, g.kind, g.qubits, angle)
        if mixed and g.noisy:
            p = noise.prob_for(g.kind)
            if p > 0.0:
                state = apply_depolarizing(state, g.qubits, p)
    return state


def run_expectations(n_qubits, gates, noise, observable: Hamiltonian, angle_table=None, mixed=None):
    state = run_circuit(n_qubits, gates, noise, angle_table, mixed)
    values = expectation(state, observable)
    if angle_table is not None:
        values = np.broadcast_to(values, (angle_table.shape[0],))
    return np.atleast_1d(values)


def angle_table(encoding_angles: Optional[np.ndarray], thetas: np.ndarray) -> np.ndarray:
    """Rows ordered theta-major: (theta_0, x_0), (theta_0, x_1), ..., (theta_1, x_0), ..."""
    thetas = np.atleast_2d(thetas)
    if encoding_angles is None or encoding_angles.shape[1] == 0:
        return thetas
    m, s = thetas.shape[0], encoding_angles.shape[0]
    enc = np.tile(encoding_angles, (m, 1))
    th = np.repeat(thetas, s, axis=0)
    return np.hstack([enc, th])


def _n_samples(task, split) -> int:
    enc = task.encoding_angles(split)
    return 1 if enc is None else enc.shape[0]


def task_expectations(space, arch, params, task, noise, thetas, split="train", mixed=None):
    """Observable values for each row of ``thetas`` and each task sample: shape (M, S)."""
    if task.n_qubits != space.n_qubits:
        raise ValueError(f"task has {task.n_qubits} qubits, space has {space.n_qubits}")
    gates = build_circuit(space, arch, params, task.encoding_gates())
    table = angle_table(task.encoding_angles(split), thetas)
    values = run_expectations(space.n_qubits, gates, noise, task.observable, table, mixed)
    return values.reshape(np.atleast_2d(thetas).shape[0], _n_samples(task, split))


def evaluate(space, arch, params, task, noise, split="train", mixed=None) -> float:
    """Task loss of ``arch`` with ``params``; deterministic."""
    ev = task_expectations(space, arch, params, task, noise, params.flat(), split, mixed)
    return float(task.loss(ev[0], split))


def loss_and_gradient(space, arch, params, task, noise, split="train", mixed=None):
    """Loss and its parameter-shift gradient from a single batched simulation."""
    gates = build_circuit(space, arch, params, task.encoding_gates())
    for g in gates:
        if g.trainable and g.kind not in ROTATIONS:
            raise CapabilityError(f"parameter shift needs Pauli rotations, got {g.kind}")
    theta = params.flat()
    P = theta.size
    shifts = np.vstack([theta, theta + np.pi / 2 * np.eye(P), theta - np.pi / 2 * np.eye(P)])
    ev = task_expectations(space, arch, params, task, noise, shifts, split, mixed)
    base = ev[0]
    dexp = 0.5 * (ev[1 : P + 1] - ev[P + 1 :])
    grad = dexp @ task.loss_weights(base, split)
    return float(task.loss(base, split)), grad


def gradient_param_shift(space, arch, params, task, noise, split="train", mixed=None) -> np.ndarray:
    return loss_and_gradient(space, arch, params, task, noise, split, mixed)[1]


def metric_diagonal(space, arch, params, task, noise, split="train") -> np.ndarray:
    """Diagonal Fubini-Study entries ``(1 - <P_j>^2) / 4`` per trainable rotation.

    ``<P_j>`` is the generator expectation on the state entering gate j,
    averaged over the task's samples.
    """
    gates = build_circuit(space, arch, params, task.encoding_gates())
    n = space.n_qubits
    table = angle_table(task.encoding_angles(split), params.flat())
    mixed = noise.active
    state = zero_state(n, mixed=mixed)
    out = []
    for g in gates:
        if g.trainable:
            letter = _LETTER[g.kind]
            gen = expectation(state, Hamiltonian.single(n, letter, g.qubits[0]))
            out.append(0.25 * (1.0 - float(np.mean(gen)) ** 2))
        angle = table[:, g.slot] if g.kind in ROTATIONS and g.slot is not None else None
        state = apply_gate(state, g.kind, g.qubits, angle)
        if mixed and g.noisy:
            p = noise.prob_for(g.kind)
            if p > 0.0:
                state = apply_depolarizing(state, g.qubits, p)
    return np.array(out)
