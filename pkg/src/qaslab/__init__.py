"""Quantum architecture search with weight-sharing supernets, on a dense-state simulator."""

from .circuit import (
    Architecture,
    SearchSpace,
    classification_space,
    qas_rc_space,
    sample_uniform,
    vqe_space,
)
from .errors import CapabilityError, NumericalError
from .sim import Hamiltonian, NoiseModel, exact_ground_energy
from .supernet import SupernetEnsemble, make_ensemble
from .tasks import ClassificationTask, VqeTask, generate_dataset, h2_hamiltonian

__version__ = "0.1.0"
