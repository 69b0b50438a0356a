"""Balanced gauge: sources, residuals, model solvers and the gauge flow."""
from ..elliptic import SmallnessError, solve_elliptic_perturbative
from .flow import (BackgroundSampler, FlowError, GaugeFlow, GaugeFlowState, run_gauge_flow,
                   transformed_slice, transformed_snapshots)
from .halfheat import ETDRK4, parabolic_constants, solve_halfheat
from .sources import (BalancedResiduals, GaugeSource, LHHCurvature, balanced_residuals,
                      f_natural, f_perp, gauge_sources, lhh_curvature)
from .derived import DerivedResiduals, defect_identities, derived_gauge_equation_residuals
from .wedge import WedgeCheck, localiser_norm, wedge, wedge_divergence_check
