"""Shared fixtures and an independent dense-matrix reference simulator."""

from functools import reduce

import numpy as np
import pytest

from qaslab.circuit import classification_space, vqe_space
from qaslab.search import QasConfig, run_search
from qaslab.sim import NoiseModel
from qaslab.tasks import ClassificationTask, VqeTask, generate_dataset

# Dataset seed used wherever a fixed classification problem is needed.
DATASET_SEED = 5

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}


def ref_single(kind, angle=None):
    """Reference 2x2 gates written out from exp(-i theta P / 2) = cos I - i sin P."""
    if kind in ("RX", "RY", "RZ"):
        P = {"RX": X, "RY": Y, "RZ": Z}[kind]
        return np.cos(angle / 2) * I2 - 1j * np.sin(angle / 2) * P
    if kind == "T":
        return np.diag([1, np.exp(1j * np.pi / 4)])
    if kind == "I":
        return I2
    raise ValueError(kind)


def kron_all(mats):
    return reduce(np.kron, mats)


def ref_unitary(n, kind, qubits, angle=None):
    """Full 2^n x 2^n unitary; qubit 0 is the leftmost tensor factor."""
    if kind == "CNOT":
        c, t = qubits
        p0 = [I2] * n
        p0[c] = np.diag([1, 0]).astype(complex)
        p1 = [I2] * n
        p1[c] = np.diag([0, 1]).astype(complex)
        p1[t] = X
        return kron_all(p0) + kron_all(p1)
    ops = [I2] * n
    ops[qubits[0]] = ref_single(kind, angle)
    return kron_all(ops)


def ref_pauli(letters):
    return kron_all([PAULIS[ch] for ch in letters])


def ref_depolarize(rho, n, qubits, p):
    """Kraus form: (1 - p) rho + p / 4^k * sum over Pauli strings on the k targets."""
    from itertools import product

    k = len(qubits)
    acc = np.zeros_like(rho)
    for letters in product("IXYZ", repeat=k):
        full = ["I"] * n
        for q, ch in zip(qubits, letters):
            full[q] = ch
        P = ref_pauli(full)
        acc += P @ rho @ P.conj().T
    return (1 - p) * rho + p * acc / 4**k


def ref_run(n, gates, p1=0.0, p2=0.0):
    """Density matrix after a gate list of (kind, qubits, angle, noisy) tuples."""
    rho = np.zeros((2**n, 2**n), dtype=complex)
    rho[0, 0] = 1
    for kind, qubits, angle, noisy in gates:
        U = ref_unitary(n, kind, qubits, angle)
        rho = U @ rho @ U.conj().T
        p = 0.0 if kind == "I" or not noisy else (p2 if kind == "CNOT" else p1)
        if p:
            rho = ref_depolarize(rho, n, qubits, p)
    return rho


def random_gate_list(rng, n, depth, kinds=("RX", "RY", "RZ", "T", "CNOT", "I")):
    gates = []
    for _ in range(depth):
        kind = kinds[rng.integers(len(kinds))] if n > 1 else kinds[rng.integers(len(kinds) - 2)]
        if kind == "CNOT":
            qubits = tuple(int(q) for q in rng.choice(n, size=2, replace=False))
        else:
            qubits = (int(rng.integers(n)),)
        angle = float(rng.uniform(-2 * np.pi, 2 * np.pi)) if kind in ("RX", "RY", "RZ") else None
        gates.append((kind, qubits, angle))
    return gates


@pytest.fixture(scope="session")
def dataset():
    return generate_dataset(DATASET_SEED)


@pytest.fixture(scope="session")
def small_dataset():
    return generate_dataset(DATASET_SEED, n=30)


@pytest.fixture(scope="session")
def clf_task(dataset):
    return ClassificationTask(dataset)


@pytest.fixture(scope="session")
def small_clf_task(small_dataset):
    return ClassificationTask(small_dataset)


# ---------------------------------------------------------------------------
# full-scale runs shared between the acceptance and experiment tests

SEEDS = (0, 1, 2)
NOISY = NoiseModel.depolarizing(0.05, 0.2)


@pytest.fixture(scope="session")
def noisy_classify_runs(clf_task):
    """Noisy QAS on the classifier: T=400, W=5, K=500, Adam(0.05), 15 retraining epochs."""
    runs = []
    for seed in SEEDS:
        cfg = QasConfig(T=400, W=5, K=500, lr=0.05, optimizer="adam", noise=NOISY, seed=seed, retrain_epochs=15)
        runs.append(run_search(cfg, classification_space(), clf_task))
    return runs


@pytest.fixture(scope="session")
def noisy_vqe_runs():
    """Noisy QAS for H2 ranked by NSGA-II with a 500-subnet budget (50 x 10)."""
    runs = []
    for seed in SEEDS:
        cfg = QasConfig(
            T=500, W=5, lr=0.2, optimizer="diag-natural-gd", noise=NOISY, seed=seed,
            ranking="evolutionary", pop_size=50, generations=10, retrain_epochs=50,
        )
        runs.append(run_search(cfg, vqe_space(), VqeTask()))
    return runs


@pytest.fixture(scope="session")
def noiseless_vqe_runs():
    """Noiseless QAS for H2 (T=500, K=500, natural gradient 0.2) for W in {1, 5}, seeds 0-4."""
    runs = {}
    for W in (1, 5):
        for seed in range(5):
            cfg = QasConfig(T=500, W=W, K=500, lr=0.2, optimizer="diag-natural-gd", seed=seed, retrain_epochs=100)
            runs[W, seed] = run_search(cfg, vqe_space(), VqeTask())
    return runs


@pytest.fixture(scope="session")
def noiseless_classify_run(clf_task):
    cfg = QasConfig(T=400, W=5, K=500, lr=0.05, optimizer="adam", seed=0, retrain_epochs=15)
    return run_search(cfg, classification_space(), clf_task)


@pytest.fixture(scope="session")
def real_histories(noisy_classify_runs, noisy_vqe_runs, noiseless_vqe_runs, noiseless_classify_run):
    """Every greedy-mode run record produced in the session."""
    records = [r for r, _, _ in noisy_classify_runs + noisy_vqe_runs]
    records += [r for r, _, _ in noiseless_vqe_runs.values()]
    records.append(noiseless_classify_run[0])
    return records


# ---------------------------------------------------------------------------
# acceptance summary: one line per criterion, printed after the run

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
