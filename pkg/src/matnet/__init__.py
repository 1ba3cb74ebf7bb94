"""Material-network surrogate for polycrystal homogenization.

Offline, a binary tree of weighted, oriented material nodes is trained
on linear-elastic stiffness data; online, the trained network couples to
finite-strain local laws (hyperelasticity or crystal plasticity) and
predicts homogenized stress, consistent tangent and texture evolution.
"""

from .network import (ParameterSet, Topology, build_topology,
                      init_parameters, node_weight, direction_vector)
from .homogenization import PhaseAssignment, h2, homogenize, laminate_oracle
from .training import (Dataset, Sample, TrainConfig, train, loss, gradient,
                       synthesize_teacher_dataset)
from .equilibrium import (EquilibriumNetwork, LoadStep, SolverConfig,
                          MacroResponse)
from .crystal import (CrystalPlasticityLaw, ElasticLaw, PlasticityParams,
                      fcc_slip_systems)

__all__ = [
    "ParameterSet", "Topology", "build_topology", "init_parameters",
    "node_weight", "direction_vector", "PhaseAssignment", "h2",
    "homogenize", "laminate_oracle", "Dataset", "Sample", "TrainConfig",
    "train", "loss", "gradient", "synthesize_teacher_dataset",
    "EquilibriumNetwork", "LoadStep", "SolverConfig", "MacroResponse",
    "CrystalPlasticityLaw", "ElasticLaw", "PlasticityParams",
    "fcc_slip_systems",
]

__version__ = "0.1.0"
