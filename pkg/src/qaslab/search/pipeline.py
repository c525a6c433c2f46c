"""Supernet training, subnet ranking, retraining and regret accounting."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
import logging
import math
import time
from typing import Optional

import numpy as np

from ..circuit import (
    Architecture,
    ParamAssignment,
    SearchSpace,
    loss_and_gradient,
    metric_diagonal,
    sample_uniform,
    task_expectations,
)
from ..errors import CapabilityError, NumericalError
from ..sim import NoiseModel
from ..supernet import (
    AssignmentRecord,
    BanditState,
    SupernetEnsemble,
    assign_bandit,
    assign_greedy,
    eval_best,
    make_ensemble,
)
from ..tasks import SPLITS
from .nsga import nsga2
from .optim import OPTIMIZERS, optimizer_step

log = logging.getLogger(__name__)


@dataclass
class QasConfig:
    T: int = 400
    W: int = 5
    K: int = 500
    lr: float = 0.05
    optimizer: str = "adam"
    noise: NoiseModel = field(default_factory=NoiseModel.off)
    seed: int = 0
    assignment: str = "greedy"
    ranking: str = "uniform"
    ranking_store: str = "min"
    pop_size: int = 50
    generations: int = 20
    nsga_objectives: str = "loss+cnot"
    retrain_epochs: int = 15
    retrain_lr: Optional[float] = None
    retrain_optimizer: Optional[str] = None

    def __post_init__(self):
        if self.T < 0 or self.W < 1 or self.K < 1:
            raise ValueError("need T >= 0, W >= 1, K >= 1")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.assignment not in ("greedy", "bandit"):
            raise ValueError(f"unknown assignment mode {self.assignment!r}")
        if self.ranking not in ("uniform", "evolutionary"):
            raise ValueError(f"unknown ranking mode {self.ranking!r}")
        if self.ranking_store not in ("min", "last"):
            raise ValueError(f"unknown ranking store mode {self.ranking_store!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["noise"] = asdict(self.noise)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "QasConfig":
        d = dict(d)
        if "noise" in d and isinstance(d["noise"], dict):
            d["noise"] = NoiseModel(**d["noise"])
        return cls(**d)

    def seeds(self) -> dict[str, int]:
        children = np.random.SeedSequence(self.seed).spawn(4)
        names = ("ensemble", "train", "rank", "bandit")
        return {n: int(c.generate_state(1)[0]) for n, c in zip(names, children)}


class TrainingAborted(NumericalError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


def _descent_step(space, arch, params, task, noise, kind, lr, states, split="train"):
    """Loss, then one optimizer update applied row by row with per-row state."""
    loss, grad = loss_and_gradient(space, arch, params, task, noise, split)
    if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
        raise NumericalError(f"non-finite loss or gradient (loss={loss})")
    metric = metric_diagonal(space, arch, params, task, noise, split) if kind == "diag-natural-gd" else None
    parts = params.split(grad).layers
    metric_parts = params.split(metric).layers if metric is not None else [None] * len(parts)
    new_layers = []
    for i, (row, g, m) in enumerate(zip(params.layers, parts, metric_parts)):
        new_row, states[i] = optimizer_step(kind, row, g, states[i], lr, m)
        new_layers.append(new_row)
    return loss, ParamAssignment(tuple(new_layers))


def train(config: QasConfig, space: SearchSpace, task, ensemble=None):
    """Supernet training: sample, assign, and update only the chosen store."""
    seeds = config.seeds()
    if ensemble is None:
        ensemble = make_ensemble(space, config.W, seeds["ensemble"])
    rng = np.random.default_rng(seeds["train"])
    bandit = None
    if config.assignment == "bandit":
        bound = task.observable.norm_bound() if hasattr(task, "hamiltonian") else 1.0
        lo, hi = (-bound, bound) if hasattr(task, "hamiltonian") else (0.0, 1.0)
        bandit = BanditState(ensemble.W, config.T, np.random.default_rng(seeds["bandit"]), (lo, hi))

    history: list[AssignmentRecord] = []
    for t in range(config.T):
        arch = sample_uniform(space, rng)
        if bandit is None:
            record = assign_greedy(ensemble, arch, task, config.noise, t)
        else:
            record = assign_bandit(ensemble, arch, task, config.noise, bandit, t)
        store = ensemble.stores[record.chosen]
        keys = arch.layout_keys(space)
        states = [store.opt_state.get(k) for k in keys]
        try:
            _, new = _descent_step(
                space, arch, store.get_params(arch), task, config.noise,
                config.optimizer, config.lr, states,
            )
        except NumericalError as exc:
            raise TrainingAborted(f"iteration {t}: {exc}", history) from exc
        store.set_params(arch, new)
        for k, s in zip(keys, states):
            if s is not None:
                store.opt_state[k] = s
        history.append(record)
        if (t + 1) % 100 == 0:
            log.info("iteration %d/%d, loss %.4f", t + 1, config.T, record.losses[record.chosen])
    return ensemble, history


def regret(history) -> float:
    """Cumulative chosen loss minus the best single store in hindsight."""
    if not history:
        return 0.0
    L = np.array([r.losses for r in history], dtype=float)
    if np.isnan(L).any():
        raise CapabilityError("regret needs every store's loss at every step (greedy mode)")
    chosen = L[np.arange(len(history)), [r.chosen for r in history]]
    return float(chosen.sum() - L.sum(axis=0).min())


def loss_trajectory(history) -> np.ndarray:
    return np.array([r.losses[r.chosen] for r in history])


# ---------------------------------------------------------------------------
# ranking


@dataclass
class RankingEntry:
    arch: Architecture
    text: str
    objective: float
    loss: float
    store: int
    accuracy: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "arch": self.text,
            "objective": self.objective,
            "loss": self.loss,
            "accuracy": self.accuracy,
            "store": self.store,
            "n_cnots": self.arch.n_cnots(),
        }


def _sorted(entries: list[RankingEntry]) -> list[RankingEntry]:
    return sorted(entries, key=lambda e: (e.objective, e.loss, e.text))


def _score_entry(ensemble, arch, task, noise, stores=None) -> RankingEntry:
    score, w = eval_best(ensemble, arch, task, noise, stores=stores)
    return RankingEntry(
        arch, arch.to_text(ensemble.space), float(score.objective), float(score.loss), w,
        score.accuracy,
    )


def last_assignments(history, space) -> dict[str, int]:
    return {r.arch.to_text(space): r.chosen for r in history}


def rank_uniform(ensemble, space, task, K, noise, rng, assignments=None) -> list[RankingEntry]:
    """Score K uniformly drawn subnets with the frozen stores, best first.

    With ``assignments`` (architecture text to store index), a subnet seen
    during training is scored only on its last store.
    """
    entries = []
    for _ in range(K):
        arch = sample_uniform(space, rng)
        stores = None
        if assignments is not None:
            w = assignments.get(arch.to_text(space))
            stores = None if w is None else [w]
        entries.append(_score_entry(ensemble, arch, task, noise, stores))
    return _sorted(entries)


def rank_evolutionary(
    ensemble, space, task, pop_size, generations, noise, rng, objectives="loss+cnot"
) -> list[RankingEntry]:
    """NSGA-II over architecture genomes; returns every distinct evaluated subnet, best first.

    The second objective is the active CNOT count unless ``objectives == "loss"``.
    """
    n, p, L = space.n_qubits, len(space.pairs), space.n_layers
    cardinalities = [len(space.pool)] * (L * n) + [2] * (L * p)
    scored: dict[tuple, RankingEntry] = {}

    def fitness(genome):
        arch = Architecture.from_genome(space, genome)
        entry = _score_entry(ensemble, arch, task, noise)
        scored[genome] = entry
        if objectives == "loss":
            return (entry.objective, entry.loss)
        return (entry.objective, arch.n_cnots())

    nsga2(cardinalities, fitness, pop_size, generations, rng)
    return _sorted(list(scored.values()))


def histogram(values, edges, closed: str = "left") -> list[tuple[float, float, int]]:
    """Counts per bin; ``closed="left"`` bins are [a, b), ``"right"`` bins are (a, b]."""
    values = np.asarray(values, dtype=float)
    rows = []
    for a, b in zip(edges[:-1], edges[1:]):
        if closed == "left":
            count = int(np.sum((values >= a) & (values < b)))
        else:
            count = int(np.sum((values > a) & (values <= b)))
        rows.append((float(a), float(b), count))
    return rows


def ranking_histogram(entries, task) -> list[tuple[float, float, int]]:
    if entries and entries[0].accuracy is not None:
        edges = np.round(np.linspace(0.0, 1.0, 11), 10)
        edges[-1] = 1.0 + 1e-9
        return histogram([e.accuracy for e in entries], edges, "left")
    edges = np.round(np.arange(-1.4, 0.8 + 1e-9, 0.2), 10)
    return histogram([e.loss for e in entries], edges, "right")


# ---------------------------------------------------------------------------
# retraining


def split_metrics(space, arch, params, task, noise) -> dict:
    if task.encoding_angles("train") is None:
        ev = task_expectations(space, arch, params, task, noise, params.flat())
        return {"loss": float(task.loss(ev[0]))}
    out = {}
    for split in SPLITS:
        ev = task_expectations(space, arch, params, task, noise, params.flat(), split)
        score = task.score(ev[0], split)
        out[f"{split}_loss"] = float(score.loss)
        out[f"{split}_acc"] = float(score.accuracy)
    out["loss"] = out["train_loss"]
    return out


def retrain(
    space, arch, params: ParamAssignment, task, epochs, optimizer="adam", lr=0.05,
    noise: NoiseModel = NoiseModel.off(), select_on_val: bool = True,
):
    """Plain descent on one fixed architecture, warm-started from ``params``.

    For classification the returned parameters are those with the highest
    validation accuracy seen (earliest on ties); the trajectory starts with
    the metrics of the warm start.
    """
    classify = task.encoding_angles("train") is not None
    states = [None] * space.n_layers
    trajectory = [{"epoch": 0, **split_metrics(space, arch, params, task, noise)}]
    best, best_acc = params, trajectory[0].get("val_acc", -1.0)
    for epoch in range(1, epochs + 1):
        _, params = _descent_step(space, arch, params, task, noise, optimizer, lr, states)
        metrics = split_metrics(space, arch, params, task, noise)
        trajectory.append({"epoch": epoch, **metrics})
        if classify and metrics["val_acc"] > best_acc:
            best, best_acc = params, metrics["val_acc"]
    if not (classify and select_on_val):
        best = params
    return best, trajectory


# ---------------------------------------------------------------------------
# full pipeline


@dataclass
class RunRecord:
    config: dict
    space: dict
    seed: int
    history: list
    loss_trajectory: list
    regret: Optional[float]
    ranking: list
    best_arch: str
    best_store: int
    retrain_trajectory: list
    final_params: list
    final_metrics: dict
    wall_clock: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def numeric_view(self) -> dict:
        d = self.to_dict()
        d.pop("wall_clock")
        return d


def run_search(config: QasConfig, space: SearchSpace, task, retrain_epochs=None, ensemble=None):
    """Train, rank and retrain; returns ``(record, ensemble, ranking)``."""
    start = time.perf_counter()
    seeds = config.seeds()
    ensemble, history = train(config, space, task, ensemble)
    rng = np.random.default_rng(seeds["rank"])
    if config.ranking == "uniform":
        assignments = last_assignments(history, space) if config.ranking_store == "last" else None
        ranking = rank_uniform(ensemble, space, task, config.K, config.noise, rng, assignments)
    else:
        ranking = rank_evolutionary(
            ensemble, space, task, config.pop_size, config.generations, config.noise, rng,
            config.nsga_objectives,
        )
    best = ranking[0]
    warm = ensemble.stores[best.store].get_params(best.arch)
    epochs = config.retrain_epochs if retrain_epochs is None else retrain_epochs
    final, trajectory = retrain(
        space, best.arch, warm, task, epochs,
        config.retrain_optimizer or config.optimizer,
        config.retrain_lr or config.lr,
        config.noise,
    )
    final_metrics = split_metrics(space, best.arch, final, task, config.noise)
    try:
        reg = regret(history)
    except CapabilityError:
        reg = None
    record = RunRecord(
        config=config.to_dict(),
        space=space.to_dict(),
        seed=config.seed,
        history=[r.to_dict(space) for r in history],
        loss_trajectory=[float(x) for x in loss_trajectory(history)],
        regret=reg,
        ranking=[e.to_dict() for e in ranking],
        best_arch=best.text,
        best_store=best.store,
        retrain_trajectory=trajectory,
        final_params=[[float(a) for a in row] for row in final.layers],
        final_metrics=final_metrics,
        wall_clock=time.perf_counter() - start,
    )
    return record, ensemble, ranking
