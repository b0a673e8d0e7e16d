"""Density cluster trees, gradient flows and transport between level sets."""
from .cluster_tree import (ClusterTree, Grid, build_cluster_tree, build_grid,
                           component_count_profile, count_pattern, locate_component,
                           upper_level_components)
from .density import (BUILTIN_FIXTURES, CriticalPoint, GaussianMixture, KdeModel,
                      find_critical_points, load_fixture)
from .errors import (CriticalCorridor, DenominatorFloor, DimensionMismatch, EmptyLevel,
                     FixtureError, ModalFlowError, NearCritical, NoConvergence,
                     NonFiniteState, NotInUpperLevelSet)
from .flow import (NOISE, FlowKind, FlowParams, StopReason, assign_basins, flow_map_psi,
                   flow_map_psi_down, integrate_flow)
from .hybrid import HybridResult, hybrid_partition, hybrid_sweep
from .transport import (Contour, ProjectionResult, brute_force_project_2d, extract_contour_2d,
                        hausdorff_distance, iterate_projection_walk, metric_project,
                        reach_lower_bound)

__version__ = "0.1.0"
