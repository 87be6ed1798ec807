"""Detection and certification of unavoidable crises in exchange economies."""

__version__ = "0.1.0"

from .economy import (Economy, Market, Price, ReducedMarket, UtilitySpec, quasilinear_pair,
                      cubic_market, demand, excess_demand, fold_market, jacobian_reduced,
                      load_economy, proper_excess_demand, random_economy,
                      reduced_excess_demand, symmetric_cobb_douglas)
from .manifold import (Equilibrium, Fiber, enumerate_fiber, locate_critical_equilibrium,
                       projection_differential, solve_equilibrium)
from .intrinsic import (CrisisCertificate, SingularityReport, Verdict, certify_crisis,
                        certify_map, intrinsic_second_derivative, singular_report,
                        verify_reduction)
from .degree import (DegreeResult, degree, degree_of_natural_projection, detect_bifurcation,
                     multiplicity, trivial_branch_family)
from .envelope import (CurveFamily, DiscriminantPoint, ballistic, custom_poly, discriminant,
                       duality_check, envelope_parametrization, extremal)
from .lifting import EconomyPath, LiftResult, lift_path, restore_prices_experiment
