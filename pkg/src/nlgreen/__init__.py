"""Green's functions of linear ODEs with parameterized non-local boundary conditions."""
from . import _backend as backend
from .analysis import (ComparisonReport, SignRegionReport, SignSummary, comparison_check,
                       constant_sign_on_grid, periodic_family, sign_region_scan)
from .errors import (IntegrationError, NlGreenError, QuadratureError, ResonantProblem, SpecError,
                     SpectralObstruction)
from .expr import Expression
from .functionals import (CompositeFunctional, MultiPoint, WeightedIntegral, eval_functional,
                          functional_of_green_slice, positivity_class)
from .nonlocal_green import (NonlocalContext, NonlocalGreen, NonlocalSpec, SingleFunctionalGreen,
                             build_nonlocal_green, dG_ddelta, single_functional_green, solve)
from .ode_core import (FundamentalSystem, LinearODEProblem, SolutionTrajectory, cauchy_function,
                       integrate_fundamental_system, residual)
from .twopoint import (BoundaryOperatorSet, TwoPointGreen, boundary_apply, build_green,
                       eval_green, omega, omegas, rank_precheck, uniqueness_determinant)

__version__ = "0.1.0"
