"""Diagnostics: gradient-variance sweeps over depth and ranking-correlation studies."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .circuit import (
    Architecture,
    SearchSpace,
    angle_table,
    build_circuit,
    evaluate,
    run_expectations,
    sample_uniform,
    space_size,
    zero_params,
)
from .search.pipeline import retrain
from .sim import Hamiltonian, NoiseModel
from .supernet import SupernetEnsemble, eval_min, init_store
from .tasks import baseline_vqe_space


# ---------------------------------------------------------------------------
# barren plateaus


@dataclass
class VarianceSweep:
    depths: list[int]
    samples: int
    observable: str
    variance: np.ndarray
    stderr: np.ndarray
    mean: np.ndarray

    def rows(self) -> list[tuple[int, float, float]]:
        return [(L, float(v), float(s)) for L, v, s in zip(self.depths, self.variance, self.stderr)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["L", "variance", "stderr"])
            for L, v, s in self.rows():
                w.writerow([L, repr(v), repr(s)])


def variance_with_stderr(values) -> tuple[float, float]:
    """Unbiased sample variance and its Monte-Carlo standard error (fourth-moment estimate)."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("need at least two samples")
    var = float(np.var(x, ddof=1))
    if n < 4:
        return var, float("nan")
    m4 = float(np.mean((x - x.mean()) ** 4))
    s2 = float(np.var(x))
    se2 = (m4 - s2**2 * (n - 3) / (n - 1)) / n
    return var, float(np.sqrt(max(se2, 0.0)))


def gradient_norms(
    space: SearchSpace,
    arch: Architecture,
    observable: Hamiltonian,
    thetas: np.ndarray,
    chunk: int = 128,
) -> np.ndarray:
    """``||grad <O>||_2 / d`` for each row of ``thetas``, noiseless, via parameter shift."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    d = thetas.shape[1]
    gates = build_circuit(space, arch, zero_params(space, arch))
    shift = np.pi / 2 * np.eye(d)
    out = np.empty(len(thetas))
    for start in range(0, len(thetas), chunk):
        block = thetas[start : start + chunk]
        rows = np.concatenate([block[:, None, :] + shift, block[:, None, :] - shift], axis=1)
        table = angle_table(None, rows.reshape(-1, d))
        ev = run_expectations(space.n_qubits, gates, NoiseModel.off(), observable, table)
        ev = ev.reshape(len(block), 2, d)
        grad = 0.5 * (ev[:, 0] - ev[:, 1])
        out[start : start + chunk] = np.linalg.norm(grad, axis=1) / d
    return out


def barren_sweep(
    depths: Sequence[int] = range(2, 8),
    samples: int = 2000,
    observable: Optional[Hamiltonian] = None,
    seed: int = 0,
    space_family: Callable[[int], tuple[SearchSpace, Architecture]] = baseline_vqe_space,
    architectures: Optional[dict] = None,
) -> VarianceSweep:
    """Variance of ``||grad <O>|| / d`` over uniform parameters in [0, 2pi), per depth.

    In heuristic mode each depth uses the dense circuit from ``space_family``.
    In QAS mode ``architectures`` maps depth to ``(space, arch)`` of the
    searched subnet.  The observable defaults to Z on qubit 0.
    """
    if samples < 2:
        raise ValueError("need at least two samples per depth")
    depths = [int(L) for L in depths]
    rng = np.random.default_rng(seed)
    variances, errors, means = [], [], []
    obs_name = "Z0"
    for L in depths:
        space, arch = architectures[L] if architectures is not None else space_family(L)
        obs = observable if observable is not None else Hamiltonian.single(space.n_qubits, "Z", 0)
        d = zero_params(space, arch).size
        thetas = rng.uniform(0.0, 2 * np.pi, size=(samples, d))
        norms = gradient_norms(space, arch, obs, thetas)
        var, se = variance_with_stderr(norms)
        variances.append(var)
        errors.append(se)
        means.append(float(norms.mean()))
    if observable is not None:
        obs_name = "custom"
    return VarianceSweep(depths, samples, obs_name, np.array(variances), np.array(errors), np.array(means))


# ---------------------------------------------------------------------------
# rank correlation


def _check_pair(r, s):
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    if r.shape != s.shape or r.ndim != 1:
        raise ValueError("inputs must be 1-d vectors of equal length")
    if r.size < 2:
        raise ValueError("need at least two observations")
    return r, s


def average_ranks(x) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size)
    sorted_x = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(r, s) -> float:
    """Pearson correlation of average ranks; equals ``1 - 6 sum d^2 / (n(n^2-1))`` without ties."""
    r, s = _check_pair(r, s)
    a, b = average_ranks(r), average_ranks(s)
    a -= a.mean()
    b -= b.mean()
    denom = np.sqrt(np.dot(a, a) * np.dot(b, b))
    if denom == 0:
        return 0.0
    return float(np.clip(np.dot(a, b) / denom, -1.0, 1.0))


def kendall(r, s) -> float:
    """Tau-a: ``2 / (n(n-1)) * sum_{i<j} sign(r_i - r_j) sign(s_i - s_j)``."""
    r, s = _check_pair(r, s)
    n = r.size
    sr = np.sign(r[:, None] - r[None, :])
    ss = np.sign(s[:, None] - s[None, :])
    total = np.triu(sr * ss, k=1).sum()
    return float(2.0 * total / (n * (n - 1)))


@dataclass
class CorrelationReport:
    architectures: list[str]
    independent: np.ndarray
    qas: np.ndarray
    rho_s: float
    rho_k: float

    @property
    def n(self) -> int:
        return len(self.architectures)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["subnet", "independent_score", "qas_score"])
            for a, x, y in zip(self.architectures, self.independent, self.qas):
                w.writerow([a, repr(float(x)), repr(float(y))])

    def summary(self) -> dict:
        return {"n": self.n, "spearman": self.rho_s, "kendall": self.rho_k}


def unique_subnets(space: SearchSpace, n: int, rng: np.random.Generator) -> list[Architecture]:
    """``n`` distinct uniform draws (rejection of repeats)."""
    if n > space_size(space):
        raise ValueError(f"space holds only {space_size(space)} architectures")
    seen, out = set(), []
    while len(out) < n:
        arch = sample_uniform(space, rng)
        if arch not in seen:
            seen.add(arch)
            out.append(arch)
    return out


def qas_scores(ensemble: SupernetEnsemble, archs, task, noise) -> np.ndarray:
    """Frozen-ensemble loss (best store) on the task's ranking split."""
    return np.array([eval_min(ensemble, a, task, noise, task.rank_split)[0] for a in archs])


def independent_scores(
    space, archs, task, noise, epochs=100, optimizer="adam", lr=0.05, seed=0
) -> np.ndarray:
    """Each subnet trained alone from a fresh uniform init; loss on the ranking split.

    Classification keeps the epoch with the best validation accuracy, as in retraining.
    """
    scores = []
    for i, arch in enumerate(archs):
        store = init_store(space, "uniform", int(np.random.SeedSequence([seed, i]).generate_state(1)[0]))
        params, _ = retrain(space, arch, store.get_params(arch), task, epochs, optimizer, lr, noise)
        scores.append(evaluate(space, arch, params, task, noise, task.rank_split))
    return np.array(scores)


def correlation_study(
    space: SearchSpace,
    task,
    ensemble: SupernetEnsemble,
    n_subnets: int = 100,
    epochs: int = 100,
    seed: int = 0,
    noise: NoiseModel = NoiseModel.off(),
    optimizer: str = "adam",
    lr: float = 0.05,
    independent: Optional[np.ndarray] = None,
    archs: Optional[list[Architecture]] = None,
) -> CorrelationReport:
    """Rank agreement between supernet scores and independently trained scores.

    ``independent`` (with matching ``archs``) may be passed in to reuse one
    set of independent runs across several ensembles.
    """
    if archs is None:
        archs = unique_subnets(space, n_subnets, np.random.default_rng(seed))
    if independent is None:
        independent = independent_scores(space, archs, task, noise, epochs, optimizer, lr, seed)
    qas = qas_scores(ensemble, archs, task, noise)
    return CorrelationReport(
        [a.to_text(space) for a in archs],
        np.asarray(independent, dtype=float),
        qas,
        spearman(independent, qas),
        kendall(independent, qas),
    )
