"""Random resistor networks, directional effective conductivity and homogenized matrices."""

from importlib import metadata as _metadata

try:
    __version__ = _metadata.version("artifact")
except _metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .env import (Box, BondPercolation, ConstantWeights, DiscreteWeights, Environment, ExplicitEdges, LambdaEstimate,
                  LatticeRCM, MillerAbrahams, PeriodicWeights, PointCloud, UniformWeights, edge_conductance,
                  estimate_lambda_k, lattice_points, make_environment, periodic_environment, sample_energy_marks,
                  sample_poisson_points)
from .errors import (ConfigParseError, ConfigValidationError, ContractError, EstimationError, GeometryError,
                     HypothesisError, OhmError, ParameterError, PointLookupError)
from .homog import (CorrectorSolution, CrossingBound, EffectiveMatrix, assemble_effective_matrix,
                    crossings_lower_bound, direction_geometry, estimate_intensity, principal_directions,
                    solve_corrector)
from .network import (DirectionFrame, NodeClass, ResistorNetwork, aggregate_reservoirs, box_frame, build_network,
                      classify_and_prune)
from .solver import (ConductivityReport, PotentialSolution, assemble_reduced_system, competitor_energy,
                     conductivity_report, dissipated_energy, flux_through_hyperplane, solve_potential)
from .experiment import SweepConfig, SweepResult, mott_sweep, scaling_sweep, weak_convergence_probe
