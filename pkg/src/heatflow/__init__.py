"""Transport maps along the Ornstein-Uhlenbeck heat flow.

Construct the flow maps S (target to Gaussian) and T = S^{-1} (Gaussian to
target) driven by V_t = -grad log Q_t f, certify their Lipschitz constants
against closed-form profile integrals, and verify the downstream
consequences: Hessian eigenvalue bounds, pushforward correctness,
eigenvalue comparisons for the weighted Laplacian, dimensional functional
inequalities, and majorization of distribution functions.
"""

from .bounds import (ThetaProfile, bound_inverse_logconvex, bound_logconcave,
                     bound_mixture, integrate_profile, lipschitz_bound,
                     logconcave_profile, logconvex_profile, mixture_profile,
                     profile_for, theta_max, theta_min_logconvex)
from .errors import (FlowDivergenceError, HeatflowError, NumericsError,
                     RegimeError)
from .measures import (BoundedDensity1D, LogConvexDensity1D, MixtureSpec,
                       build_builtin, cdf_1d, chebyshev_radius, from_json,
                       relative_density, sample, to_json)
from .ou_flow import (SemigroupEval, hessian_log_q_numeric, mehler_kernel,
                      q_smooth, semigroup_eval, velocity, velocity_jacobian)
from .spectrum import (SpectrumReport, dense_spectrum_oracle, eigen_compare,
                       spectrum_1d, weighted_laplacian_1d)
from .transport import (FlowResult, IntegratorConfig, default_config,
                        flow_forward, operator_norm, roundtrip_error,
                        transport_from_gaussian, transport_map_1d)
from .verify import (VerificationReport, builtin_suite, check_hessian_bounds,
                     dimensional_entropy_check, empirical_lipschitz,
                     majorization_check, poincare_transfer, pushforward_ks_1d,
                     renyi_entropy_1d, symmetry_check, weighted_poincare_check)

__version__ = "0.1.0"
