"""NSGA-II over integer genomes (nondominated sorting with crowding distance)."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


def dominates(a, b) -> bool:
    a, b = np.asarray(a), np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


def nondominated_fronts(F: np.ndarray) -> list[list[int]]:
    """Partition rows of ``F`` (minimization) into successive Pareto fronts."""
    F = np.asarray(F, dtype=float)
    n = len(F)
    dominated_by = [[] for _ in range(n)]
    counts = np.zeros(n, dtype=int)
    for i in range(n):
        for j in range(i + 1, n):
            if dominates(F[i], F[j]):
                dominated_by[i].append(j)
                counts[j] += 1
            elif dominates(F[j], F[i]):
                dominated_by[j].append(i)
                counts[i] += 1
    fronts = [[i for i in range(n) if counts[i] == 0]]
    while fronts[-1]:
        nxt = []
        for i in fronts[-1]:
            for j in dominated_by[i]:
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(j)
        fronts.append(sorted(nxt))
    return fronts[:-1]


def crowding_distance(F: np.ndarray) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    n, m = F.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for k in range(m):
        order = np.argsort(F[:, k], kind="stable")
        lo, hi = F[order[0], k], F[order[-1], k]
        dist[order[0]] = dist[order[-1]] = np.inf
        if hi == lo:
            continue
        gaps = (F[order[2:], k] - F[order[:-2], k]) / (hi - lo)
        dist[order[1:-1]] += gaps
    return dist


def rank_and_crowd(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rank = np.zeros(len(F), dtype=int)
    crowd = np.zeros(len(F))
    for r, front in enumerate(nondominated_fronts(F)):
        rank[front] = r
        crowd[front] = crowding_distance(F[front])
    return rank, crowd


def _select(F: np.ndarray, k: int) -> list[int]:
    chosen: list[int] = []
    for front in nondominated_fronts(F):
        if len(chosen) + len(front) <= k:
            chosen.extend(front)
            continue
        crowd = crowding_distance(F[front])
        order = sorted(range(len(front)), key=lambda i: (-crowd[i], front[i]))
        chosen.extend(front[i] for i in order[: k - len(chosen)])
        break
    return chosen


def nsga2(
    cardinalities: Sequence[int],
    objectives: Callable[[tuple[int, ...]], Sequence[float]],
    pop_size: int,
    generations: int,
    rng: np.random.Generator,
    crossover_rate: float = 0.9,
    mutation_rate: float | None = None,
) -> dict[tuple[int, ...], tuple[float, ...]]:
    """Evolve genomes where gene ``i`` takes values ``0..cardinalities[i]-1``.

    The initial population counts as the first generation, so at most
    ``pop_size * generations`` distinct genomes are evaluated.  Returns every
    evaluated genome with its objective vector.
    """
    if pop_size < 2:
        raise ValueError("population needs at least two members")
    card = np.asarray(cardinalities, dtype=int)
    n_genes = len(card)
    if mutation_rate is None:
        mutation_rate = 1.0 / n_genes
    cache: dict[tuple[int, ...], tuple[float, ...]] = {}

    def fitness(genome: tuple[int, ...]) -> tuple[float, ...]:
        if genome not in cache:
            cache[genome] = tuple(float(v) for v in objectives(genome))
        return cache[genome]

    pop = [tuple(int(v) for v in rng.integers(0, card)) for _ in range(pop_size)]
    F = np.array([fitness(g) for g in pop])

    for _ in range(generations - 1):
        rank, crowd = rank_and_crowd(F)

        def tournament() -> int:
            i, j = rng.integers(0, len(pop), size=2)
            if (rank[i], -crowd[i]) <= (rank[j], -crowd[j]):
                return int(i)
            return int(j)

        children = []
        while len(children) < pop_size:
            a, b = np.array(pop[tournament()]), np.array(pop[tournament()])
            if rng.random() < crossover_rate:
                child = np.where(rng.random(n_genes) < 0.5, a, b)
            else:
                child = a.copy()
            flip = rng.random(n_genes) < mutation_rate
            for i in np.flatnonzero(flip):
                if card[i] > 1:
                    # resample among the other values of this gene
                    child[i] = (child[i] + rng.integers(1, card[i])) % card[i]
            children.append(tuple(int(v) for v in child))

        merged = pop + children
        Fm = np.vstack([F, [fitness(g) for g in children]])
        # duplicates compete once, keeping the population diverse
        seen, uniq = set(), []
        for i, g in enumerate(merged):
            if g not in seen:
                seen.add(g)
                uniq.append(i)
        pool = [merged[i] for i in uniq]
        Fp = Fm[uniq]
        if len(pool) < pop_size:
            keep = list(range(len(pool)))
            keep += list(rng.integers(0, len(pool), size=pop_size - len(pool)))
        else:
            keep = _select(Fp, pop_size)
        pop = [pool[i] for i in keep]
        F = Fp[keep]
    return cache
