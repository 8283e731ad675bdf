"""Linear stability of surface waves on two-phase circular flows."""

from .errors import CircstabError, InvalidInput, NumericalFailure
from .profiles import (Constant, PiecewiseOuter, ProblemSetup, Tabulated, TanhShear,
                       TaylorCouette)
from .rayleigh_bvp import Mode, solve_side
from .dispersion import residual, oracle_dispersion
from .mode_search import SearchRegion, count_roots, find_modes, verify_no_unstable_near
from .semicircle import bound, verify_identities
from .critical_layer import (integrate_full, integrate_limit, predict_bifurcation,
                             solve_unstable_mode, epsilon_scaling_study)

__version__ = "0.1.0"
