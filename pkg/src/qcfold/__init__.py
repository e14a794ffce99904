"""qcfold: a folding self-map of the cylinder, numerically verified.

The package builds an explicit family of near-conformal self-maps of the
solid cylinder that contract a central disk while fixing the boundary,
composes similarity-rescaled copies of them over nested disjoint-ball
covers of the plane, and checks the resulting distortion, Lipschitz and
Hausdorff-content bookkeeping by direct numerical measurement.
"""

from .profiles import (RadialProfile, smooth_kernel, smooth_step,
                       smooth_step_d1, wedge_bump_poly, bump_normalization)
from .wedge import (WedgeConfig, surface_map, surface_jacobian,
                    surface_normal, offset_map, classify_region, REGION_NAMES)
from .verify import (DilatationReport, numeric_jacobian, dilatation_3d,
                     surface_dilatation, matrix_qc_delta, measure_eta,
                     lipschitz_scan, injectivity_scan, graph_scan)
from .cylinder import (CylinderMap, CalibrationError, calibrate_epsilon,
                       calibrate_s, make_cylinder_map, choose_k,
                       measure_map_stats)
from .cover import (SingularSet, CoverNode, CoverTree, CoverError,
                    build_vitali_cover, build_cover_tree, apply_level,
                    compose_depth, find_chain, chain_nodes, chain_stretch,
                    chain_dilatation, dilatation_ledger, Truncation)
from .walks import (SimParams, compute_mu, check_params, termination_prob,
                    simulate_termination, content_bound, content_tail,
                    budget_schedule, estimate_content)

__version__ = "0.1.0"
