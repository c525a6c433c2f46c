"""Weight-sharing parameter stores and the multi-supernet ensemble.

Within one store, two architectures read the same angles for layer ``l``
exactly when their single-qubit gate layouts in layer ``l`` coincide; CNOT
placement never matters.  An ensemble holds W independent stores and routes
every sampled architecture to one of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json
import math
from typing import Optional

import numpy as np

from .circuit import (
    Architecture,
    LayoutKey,
    ParamAssignment,
    SearchSpace,
    check_architecture,
    op_name,
    task_expectations,
    zero_params,
)
from .sim import NoiseModel

INIT_POLICIES = ("uniform",)


class SupernetStore:
    """Lazily materialized table ``LayoutKey -> angle row``.

    Rows are seeded from ``(seed, layer, layout)`` alone, so the table is the
    same whatever order keys are first touched in.
    """

    def __init__(self, space: SearchSpace, seed: int, policy: str = "uniform"):
        if policy not in INIT_POLICIES:
            raise ValueError(f"unknown init policy {policy!r}")
        self.space = space
        self.seed = int(seed)
        self.policy = policy
        self.entries: dict[LayoutKey, np.ndarray] = {}
        # optimizer bookkeeping per row; not part of the serialized store
        self.opt_state: dict[LayoutKey, dict] = {}

    def _init_row(self, key: LayoutKey) -> np.ndarray:
        codes = [self.space.pool.index(op) for op in key.layout]
        rng = np.random.default_rng([self.seed, key.layer, *codes])
        width = sum(len(op) for op in key.layout)
        return rng.uniform(0.0, 2 * np.pi, size=width)

    def row(self, key: LayoutKey) -> np.ndarray:
        if key not in self.entries:
            self.entries[key] = self._init_row(key)
        return self.entries[key]

    def get_params(self, arch: Architecture) -> ParamAssignment:
        check_architecture(self.space, arch)
        return ParamAssignment(tuple(self.row(k).copy() for k in arch.layout_keys(self.space)))

    def set_params(self, arch: Architecture, params: ParamAssignment) -> None:
        for key, angles in zip(arch.layout_keys(self.space), params.layers):
            angles = np.asarray(angles, dtype=float)
            if angles.shape != self.row(key).shape:
                raise ValueError(f"row {key} expects {self.row(key).shape[0]} angles")
            self.entries[key] = angles.copy()

    def materialize_all(self) -> None:
        from itertools import product

        n = self.space.n_qubits
        for layer in range(self.space.n_layers):
            for layout in product(self.space.pool, repeat=n):
                self.row(LayoutKey(layer, tuple(layout)))

    def n_parameters(self) -> int:
        return sum(len(v) for v in self.entries.values())

    def copy(self) -> "SupernetStore":
        other = SupernetStore(self.space, self.seed, self.policy)
        other.entries = {k: v.copy() for k, v in self.entries.items()}
        other.opt_state = {
            k: {n: (a.copy() if isinstance(a, np.ndarray) else a) for n, a in s.items()}
            for k, s in self.opt_state.items()
        }
        return other

    def to_dict(self) -> dict:
        entries = sorted(self.entries.items(), key=lambda kv: (kv[0].layer, kv[0].layout))
        return {
            "space": self.space.to_dict(),
            "space_fingerprint": self.space.fingerprint(),
            "seed": self.seed,
            "policy": self.policy,
            "entries": [
                {
                    "layer": k.layer,
                    "layout": [op_name(op) for op in k.layout],
                    "angles": [float(a) for a in v],
                }
                for k, v in entries
            ],
        }

    @classmethod
    def from_dict(cls, d: dict, space: Optional[SearchSpace] = None) -> "SupernetStore":
        space = space if space is not None else SearchSpace.from_dict(d["space"])
        if d["space_fingerprint"] != space.fingerprint():
            raise ValueError("store was saved for a different search space")
        store = cls(space, d["seed"], d.get("policy", "uniform"))
        for e in d["entries"]:
            layout = tuple(tuple(op.split("+")) for op in e["layout"])
            store.entries[LayoutKey(e["layer"], layout)] = np.array(e["angles"], dtype=float)
        return store

    def __eq__(self, other) -> bool:
        if not isinstance(other, SupernetStore):
            return NotImplemented
        return (
            self.space == other.space
            and self.seed == other.seed
            and self.entries.keys() == other.entries.keys()
            and all(np.array_equal(v, other.entries[k]) for k, v in self.entries.items())
        )


def init_store(space: SearchSpace, policy: str = "uniform", seed: int = 0, eager: bool = False):
    store = SupernetStore(space, seed, policy)
    if eager:
        store.materialize_all()
    return store


@dataclass
class SupernetEnsemble:
    space: SearchSpace
    stores: list[SupernetStore]

    @property
    def W(self) -> int:
        return len(self.stores)

    def to_dict(self) -> dict:
        return {"W": self.W, "stores": [s.to_dict() for s in self.stores]}

    @classmethod
    def from_dict(cls, d: dict) -> "SupernetEnsemble":
        stores = [SupernetStore.from_dict(s) for s in d["stores"]]
        return cls(stores[0].space, stores)

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path) -> "SupernetEnsemble":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def copy(self) -> "SupernetEnsemble":
        return SupernetEnsemble(self.space, [s.copy() for s in self.stores])


def make_ensemble(space: SearchSpace, W: int, seed: int, policy: str = "uniform"):
    """W stores whose seeds are split from ``seed`` so they start from different angles."""
    if W < 1:
        raise ValueError("need at least one supernet")
    children = np.random.SeedSequence(seed).spawn(W)
    seeds = [int(c.generate_state(1)[0]) for c in children]
    return SupernetEnsemble(space, [SupernetStore(space, s, policy) for s in seeds])


@dataclass
class AssignmentRecord:
    """One training step: per-store losses (NaN where not evaluated) and the chosen store."""

    t: int
    arch: Architecture
    losses: np.ndarray
    chosen: int

    def to_dict(self, space: SearchSpace) -> dict:
        return {
            "t": self.t,
            "arch": self.arch.to_text(space),
            "losses": [None if math.isnan(x) else float(x) for x in self.losses],
            "chosen": self.chosen,
        }

    @classmethod
    def from_dict(cls, d: dict, space: SearchSpace) -> "AssignmentRecord":
        losses = np.array([np.nan if x is None else x for x in d["losses"]], dtype=float)
        return cls(d["t"], Architecture.from_text(space, d["arch"]), losses, d["chosen"])


def store_expectations(ensemble, arch, task, noise, split, stores=None):
    """Observable values for ``arch`` under each listed store, in one batched run: (W, S)."""
    stores = range(ensemble.W) if stores is None else stores
    rows = [ensemble.stores[w].get_params(arch) for w in stores]
    thetas = np.vstack([p.flat() for p in rows])
    template = zero_params(ensemble.space, arch)
    return task_expectations(ensemble.space, arch, template, task, noise, thetas, split)


def store_losses(ensemble, arch, task, noise, split="train") -> np.ndarray:
    ev = store_expectations(ensemble, arch, task, noise, split)
    return np.array([task.loss(row, split) for row in ev])


def assign_greedy(ensemble, arch, task, noise, t: int = 0, split="train") -> AssignmentRecord:
    """Route ``arch`` to the store with the lowest loss; ties go to the lowest index."""
    losses = store_losses(ensemble, arch, task, noise, split)
    return AssignmentRecord(t, arch, losses, int(np.argmin(losses)))


@dataclass
class BanditState:
    """Exponential-weights sampler over stores, fed importance-weighted losses.

    Losses are mapped to [0, 1] through ``loss_range`` before the update.
    """

    W: int
    T: int
    rng: np.random.Generator
    loss_range: tuple[float, float] = (0.0, 1.0)
    rate: float = field(init=False)
    log_weights: np.ndarray = field(init=False)

    def __post_init__(self):
        self.rate = math.sqrt(math.log(self.W) / (self.W * max(self.T, 1)))
        self.log_weights = np.zeros(self.W)

    def probabilities(self) -> np.ndarray:
        w = np.exp(self.log_weights - self.log_weights.max())
        return w / w.sum()

    def draw(self) -> int:
        return int(self.rng.choice(self.W, p=self.probabilities()))

    def update(self, arm: int, loss: float) -> None:
        lo, hi = self.loss_range
        scaled = min(max((loss - lo) / (hi - lo), 0.0), 1.0)
        self.log_weights[arm] -= self.rate * scaled / self.probabilities()[arm]


def assign_bandit(ensemble, arch, task, noise, bandit: BanditState, t: int = 0, split="train"):
    """Evaluate only one sampled store; the other losses stay unknown (NaN)."""
    w = bandit.draw()
    ev = store_expectations(ensemble, arch, task, noise, split, stores=[w])
    loss = float(task.loss(ev[0], split))
    bandit.update(w, loss)
    losses = np.full(ensemble.W, np.nan)
    losses[w] = loss
    return AssignmentRecord(t, arch, losses, w)


def eval_min(ensemble, arch, task, noise, split="train") -> tuple[float, int]:
    """Lowest task loss over the W stores and the store achieving it."""
    losses = store_losses(ensemble, arch, task, noise, split)
    w = int(np.argmin(losses))
    return float(losses[w]), w


def eval_best(ensemble, arch, task, noise, split=None, stores=None):
    """Best ranking score over the stores (objective first, loss second)."""
    split = task.rank_split if split is None else split
    stores = list(range(ensemble.W)) if stores is None else list(stores)
    ev = store_expectations(ensemble, arch, task, noise, split, stores)
    scores = [task.score(row, split) for row in ev]
    i = min(range(len(scores)), key=lambda j: (scores[j].objective, scores[j].loss, j))
    return scores[i], stores[i]
