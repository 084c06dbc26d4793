"""Resource-aware reconfiguration of multi-robot teams.

Submodules: :mod:`core` (types and matrix measures), :mod:`confgen`
(topology and weight selection), :mod:`formation` (3-D placement),
:mod:`failsim` (failure sequences and baselines), :mod:`harness`
(experiments) and :mod:`cli`.
"""

from .confgen import (
    ConfigGenResult,
    Infeasible,
    NoImprovingCandidate,
    generate_configuration,
    generate_with_escalation,
    optimize_edge_weights,
)
from .core import (
    Configuration,
    GeometryParams,
    NeighborDistanceMatrix,
    ResourceMatrix,
    Topology,
    connectivity,
    distance_from_laplacian,
    nuclear_norm,
    task_inefficacy,
)
from .formation import AnnealParams, Formation, SynthesisFailed, synthesize

__all__ = [
    "AnnealParams", "ConfigGenResult", "Configuration", "Formation", "GeometryParams",
    "Infeasible", "NeighborDistanceMatrix", "NoImprovingCandidate", "ResourceMatrix",
    "SynthesisFailed", "Topology", "connectivity", "distance_from_laplacian",
    "generate_configuration", "generate_with_escalation", "nuclear_norm",
    "optimize_edge_weights", "synthesize", "task_inefficacy",
]
