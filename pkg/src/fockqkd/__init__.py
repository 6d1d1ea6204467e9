"""Discrete-event Fock-basis simulator for QKD optics."""

__version__ = "0.1.0"

from .detector import DetectionRecord, SpdParams, click_probability, detect
from .engine import analytic_probabilities, run_experiment, run_trial, simulate_trial
from .errors import (
    CapacityError,
    ConfigError,
    DegenerateStateError,
    FockError,
    InvalidArgumentError,
    TopologyError,
)
from .fock import (
    JonesPolarization,
    Photon,
    PhotonPool,
    PhotonState,
    SpectralMode,
    configuration_inner,
    permanent,
    pool_norm,
    spectral_overlap,
)
from .netlist import load_topology, load_topology_file
from .qcore import collapse, joint_number_distribution, merge_pools, route_number_distribution
from .sources import SourceParams, emit, truncation_point

__all__ = [
    "CapacityError",
    "ConfigError",
    "DegenerateStateError",
    "DetectionRecord",
    "FockError",
    "InvalidArgumentError",
    "JonesPolarization",
    "Photon",
    "PhotonPool",
    "PhotonState",
    "SourceParams",
    "SpdParams",
    "SpectralMode",
    "TopologyError",
    "analytic_probabilities",
    "click_probability",
    "collapse",
    "configuration_inner",
    "detect",
    "emit",
    "joint_number_distribution",
    "load_topology",
    "load_topology_file",
    "merge_pools",
    "permanent",
    "pool_norm",
    "route_number_distribution",
    "run_experiment",
    "run_trial",
    "simulate_trial",
    "spectral_overlap",
    "truncation_point",
]
