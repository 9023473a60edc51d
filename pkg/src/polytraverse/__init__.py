"""Local-polytope traversal and verification for feed-forward ReLU networks."""
from ._config import Tolerances, get_tolerances, use_tolerances
from ._kernels import backend
from .errors import (InvalidInputError, ParseError, PolytraverseError, SolverStallError,
                     UnsupportedConfigurationError)
from .lp import (ConstraintSystem, FeasibilityResult, LinearConstraint, LpSolution, interior_point,
                 optimize_linear, solve_feasibility)
from .network import (ActivationCode, LayerSpec, LevelCoefficients, LocalLinearModel, Normalization,
                      ReluNetwork, encode, forward, level_coefficients, local_linear_model,
                      make_network, random_network)
from .netio import load_network, read_network, save_network, write_network
from .polytope import (BoundedRegion, Polytope, PrescreenResult, boundaries, is_empty, is_redundant,
                       one_adjacent_codes, polytope_from_code, prescreen)
from .traversal import (TraversalConfig, TraversalStats, VisitOutcome, traverse, traverse_level,
                        traverse_with_shrinking)
from .verifiers import (CounterfactualResult, CounterfactualSpec, MonotonicityReport, PropertySpec,
                        RangeResult, Verdict, adversarial_binary, adversarial_multiclass,
                        class_region, counterfactual, monotonicity, output_range, robustness_check,
                        verify_output_property)
from .oracle import EnumerationResult, enumerate_bruteforce, grid_scan

__version__ = "0.1.0"
