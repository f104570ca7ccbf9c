"""Conditional expectations between multi-matrix algebras: constants, index and tower."""
from .algebra import (DEFAULT_TOL, AlgebraShape, Element, LinearMap, Tolerances,
                      operator_norm, spectrum)
from .condexp import (CondExp, ConstructionError, density_ce, group_average_ce,
                      tensor_state_ce, trace_ce, validate_ce, weighted_corner_ce)
from .constants import compute_K, compute_L, floor_k, kadison_sweep, pimsner_popa_check
from .hilbert import index_element, jones_tower, quasi_basis, stinespring
from .inclusion import Embedding, relative_commutant
from .scenario import Scenario, load_scenario, parse_scenario, random_scenario
from .suite import SuiteReport, run_suite

__all__ = ["DEFAULT_TOL", "AlgebraShape", "Element", "LinearMap", "Tolerances", "operator_norm",
           "spectrum", "CondExp", "ConstructionError", "density_ce", "group_average_ce",
           "tensor_state_ce", "trace_ce", "validate_ce", "weighted_corner_ce", "compute_K",
           "compute_L", "floor_k", "kadison_sweep", "pimsner_popa_check", "index_element",
           "jones_tower", "quasi_basis", "stinespring", "Embedding", "relative_commutant",
           "Scenario", "load_scenario", "parse_scenario", "random_scenario", "SuiteReport",
           "run_suite"]
