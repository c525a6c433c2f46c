"""Benchmark tasks: synthetic three-qubit classification and H2 ground-state search."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
import json
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .circuit import (
    Architecture,
    Gate,
    SearchSpace,
    build_circuit,
    classification_space,
    run_expectations,
)
from .sim import Hamiltonian, NoiseModel, PauliString

SPLITS = ("train", "val", "test")

# 15 pre-mapped qubit terms of the H2 Hamiltonian, in Hartree
H2_TERMS = (
    (-0.042, "IIII"),
    (0.178, "ZIII"),
    (0.178, "IZII"),
    (-0.243, "IIZI"),
    (-0.243, "IIIZ"),
    (0.171, "ZZII"),
    (0.123, "ZIZI"),
    (0.123, "IZIZ"),
    (0.168, "ZIIZ"),
    (0.168, "IZZI"),
    (0.176, "IIZZ"),
    (0.045, "YXXY"),
    (-0.045, "YYXX"),
    (-0.045, "XXYY"),
    (0.045, "XYYX"),
)
H2_EXACT_ENERGY = -1.136


def h2_hamiltonian() -> Hamiltonian:
    return Hamiltonian(4, tuple(PauliString(c, s) for c, s in H2_TERMS))


def projector_last_zero(n_qubits: int = 3) -> Hamiltonian:
    """``I (x) ... (x) |0><0|`` on the last qubit, written as ``(I + Z_last) / 2``."""
    ident = "I" * n_qubits
    z_last = "I" * (n_qubits - 1) + "Z"
    return Hamiltonian(n_qubits, (PauliString(0.5, ident), PauliString(0.5, z_last)))


# ---------------------------------------------------------------------------
# metrics


def predict(y_tilde):
    """Label 1 when the classifier output is at least 0.5."""
    return (np.asarray(y_tilde) >= 0.5).astype(int)


def mse_loss(predictions, labels) -> float:
    predictions = np.asarray(predictions, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if predictions.shape != labels.shape:
        raise ValueError(f"length mismatch: {predictions.shape} vs {labels.shape}")
    return float(np.mean((predictions - labels) ** 2))


def accuracy(predictions, labels) -> float:
    """Fraction of thresholded outputs that match ``labels``."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError(f"length mismatch: {predictions.shape} vs {labels.shape}")
    return float(np.mean(predict(predictions) == labels))


class Score(NamedTuple):
    """Ranking score: ``objective`` is minimized, ``loss`` breaks ties."""

    objective: float
    loss: float
    accuracy: Optional[float] = None


# ---------------------------------------------------------------------------
# dataset


def teacher_space() -> tuple[SearchSpace, Architecture]:
    """Three layers of RY on every qubit followed by CNOT(0,1) then CNOT(1,2)."""
    space = SearchSpace(3, 3, (("RY",),), ((0, 1), (1, 2)))
    arch = Architecture(((0, 0, 0),) * 3, ((True, True),) * 3)
    return space, arch


def encoding_gates(n_qubits: int = 3, noisy: bool = True) -> list[Gate]:
    return [Gate("RY", (q,), slot=q, noisy=noisy) for q in range(n_qubits)]


def teacher_outputs(teacher: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Noiseless measured value of the hidden teacher circuit on each row of ``x``."""
    from .circuit import ParamAssignment, angle_table

    space, arch = teacher_space()
    params = ParamAssignment(tuple(np.asarray(teacher, dtype=float)))
    gates = build_circuit(space, arch, params, encoding_gates())
    table = angle_table(np.atleast_2d(x), params.flat())
    return run_expectations(3, gates, NoiseModel.off(), projector_last_zero(3), table)


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    splits: np.ndarray
    teacher: Optional[np.ndarray] = None
    seed: Optional[int] = None
    margin: tuple[float, float] = (0.25, 0.75)
    draws: int = 0
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        self.splits = np.asarray(self.splits, dtype=str)
        if set(np.unique(self.labels)) - {0, 1}:
            raise ValueError("labels must be 0 or 1")
        self._index = {s: np.flatnonzero(self.splits == s) for s in SPLITS}

    def __len__(self) -> int:
        return len(self.labels)

    def x(self, split: str) -> np.ndarray:
        return self.features[self._index[split]]

    def y(self, split: str) -> np.ndarray:
        return self.labels[self._index[split]]

    @property
    def rejection_rate(self) -> float:
        return 1.0 - len(self) / self.draws if self.draws else 0.0

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["x1", "x2", "x3", "label", "split"])
            for xi, yi, si in zip(self.features, self.labels, self.splits):
                w.writerow([repr(float(v)) for v in xi] + [int(yi), si])
        meta = {
            "seed": self.seed,
            "margin": list(self.margin),
            "draws": self.draws,
            "teacher": None if self.teacher is None else np.asarray(self.teacher).tolist(),
        }
        path.with_suffix(path.suffix + ".meta.json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        path = Path(path)
        with path.open(newline="") as f:
            rows = list(csv.DictReader(f))
        features = [[float(r["x1"]), float(r["x2"]), float(r["x3"])] for r in rows]
        meta_path = path.with_suffix(path.suffix + ".meta.json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        teacher = meta.get("teacher")
        return cls(
            features=np.array(features),
            labels=np.array([int(r["label"]) for r in rows]),
            splits=np.array([r["split"] for r in rows]),
            teacher=None if teacher is None else np.array(teacher),
            seed=meta.get("seed"),
            margin=tuple(meta.get("margin", (0.25, 0.75))),
            draws=meta.get("draws", 0),
        )


def _split_sizes(n: int) -> tuple[int, int, int]:
    third = n // 3
    return n - 2 * third, third, third


def generate_dataset(
    seed: int,
    n: int = 300,
    margin: tuple[float, float] = (0.25, 0.75),
    window: int = 10_000,
    max_teachers: int = 20,
) -> Dataset:
    """Label uniform points in ``[0, 2pi)^3`` with a random hidden teacher circuit.

    Points whose teacher output falls strictly inside ``margin`` are redrawn.
    A teacher accepting fewer than 0.1% of a ``window`` of draws is discarded
    and a new one sampled.
    """
    if n < 1:
        raise ValueError("dataset needs at least one sample")
    lo, hi = margin
    rng = np.random.default_rng(seed)
    for _ in range(max_teachers):
        teacher = rng.uniform(0.0, 2 * np.pi, size=(3, 3))
        xs, ys = [], []
        draws = 0
        accepted_in_window, window_draws = 0, 0
        degenerate = False
        while len(ys) < n:
            batch = rng.uniform(0.0, 2 * np.pi, size=(1024, 3))
            out = teacher_outputs(teacher, batch)
            for xi, value in zip(batch, out):
                draws += 1
                window_draws += 1
                if value >= hi:
                    xs.append(xi)
                    ys.append(1)
                    accepted_in_window += 1
                elif value <= lo:
                    xs.append(xi)
                    ys.append(0)
                    accepted_in_window += 1
                if len(ys) == n:
                    break
                if window_draws >= window:
                    if accepted_in_window < 0.001 * window:
                        degenerate = True
                        break
                    accepted_in_window, window_draws = 0, 0
            if degenerate:
                break
        if not degenerate:
            break
    else:
        raise RuntimeError("could not find a non-degenerate teacher circuit")

    order = rng.permutation(n)
    n_tr, n_va, n_te = _split_sizes(n)
    splits = np.empty(n, dtype="<U5")
    splits[order[:n_tr]] = "train"
    splits[order[n_tr : n_tr + n_va]] = "val"
    splits[order[n_tr + n_va :]] = "test"
    return Dataset(
        features=np.array(xs),
        labels=np.array(ys),
        splits=splits,
        teacher=teacher,
        seed=seed,
        margin=(lo, hi),
        draws=draws,
    )


# ---------------------------------------------------------------------------
# tasks


class ClassificationTask:
    """Binary classifier: RY angle encoding, trainable circuit, projector on qubit 2."""

    n_qubits = 3
    rank_split = "val"

    def __init__(self, dataset: Dataset, encoding_noise: bool = True):
        self.dataset = dataset
        self.encoding_noise = encoding_noise
        self.observable = projector_last_zero(3)

    def encoding_gates(self) -> list[Gate]:
        return encoding_gates(3, self.encoding_noise)

    def encoding_angles(self, split: str) -> np.ndarray:
        return self.dataset.x(split)

    def loss(self, expvals, split: str) -> float:
        return mse_loss(expvals, self.dataset.y(split))

    def loss_weights(self, expvals, split: str) -> np.ndarray:
        y = self.dataset.y(split)
        return 2.0 / len(y) * (np.asarray(expvals) - y)

    def score(self, expvals, split: str) -> Score:
        acc = accuracy(expvals, self.dataset.y(split))
        return Score(-acc, self.loss(expvals, split), acc)


class VqeTask:
    """Energy of ``U(theta)|0000>`` under the H2 Hamiltonian."""

    n_qubits = 4
    rank_split = "train"

    def __init__(self, hamiltonian: Optional[Hamiltonian] = None):
        self.hamiltonian = hamiltonian if hamiltonian is not None else h2_hamiltonian()
        self.n_qubits = self.hamiltonian.n_qubits
        self.observable = self.hamiltonian

    def encoding_gates(self) -> list[Gate]:
        return []

    def encoding_angles(self, split: str = "train"):
        return None

    def loss(self, expvals, split: str = "train") -> float:
        return float(np.asarray(expvals).reshape(-1)[0])

    def loss_weights(self, expvals, split: str = "train") -> np.ndarray:
        return np.ones(1)

    def score(self, expvals, split: str = "train") -> Score:
        e = self.loss(expvals)
        return Score(e, e, None)


def classifier_output(gates, x, noise: NoiseModel, encoding_noise: bool = True):
    """``<000| U_x^dag U^dag Pi U U_x |000>`` for a trainable gate list and input(s) ``x``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    table = np.atleast_2d(x)
    body = [replace(g, slot=None) for g in gates]
    full = encoding_gates(3, encoding_noise) + body
    values = run_expectations(3, full, noise, projector_last_zero(3), table)
    values = np.clip(values, 0.0, 1.0)
    return float(values[0]) if single else values


# ---------------------------------------------------------------------------
# baselines


def baseline_classifier_space(n_layers: int = 3) -> tuple[SearchSpace, Architecture]:
    """Densest classifier: RY on every qubit and all three CNOTs in every layer."""
    space = classification_space(n_layers)
    arch = Architecture(((0, 0, 0),) * n_layers, ((True, True, True),) * n_layers)
    return space, arch


def baseline_vqe_space(n_layers: int = 3) -> tuple[SearchSpace, Architecture]:
    """Hardware-efficient VQE ansatz: RY then RZ per qubit, then a CNOT chain."""
    space = SearchSpace(4, n_layers, (("RY", "RZ"),), ((0, 1), (1, 2), (2, 3)))
    arch = Architecture(((0, 0, 0, 0),) * n_layers, ((True, True, True),) * n_layers)
    return space, arch
