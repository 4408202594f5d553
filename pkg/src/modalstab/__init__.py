"""Modal-decomposition boundary stabilization of the heat equation on the
disk and ball: spectrum enumeration, lifting, gain synthesis, spectral
Galerkin simulation, and decay verification."""

from .basis import (Domain, EigenMode, SpectrumSummary, boundary_inner,
                    enumerate_modes, eval_mode, normal_trace,
                    project_function)
from .controller import (GainSet, StabilityReport, auto_scale_gains,
                         boundary_control_eval, build_gram, hurwitz_margin,
                         synthesize, validate_gains)
from .diagnostics import (NormSeries, compute_norm_series, decay_rate_fit,
                          gn_exponents, gn_ratio, h2_full, h2_surrogate,
                          laplacian_l2, linf_on_grid, verify_claims)
from .lifting import (BoundaryFunction, LiftingCoefficients,
                      commutation_check, lifting_coefficients,
                      lifting_h2_full, lifting_h2_surrogate, xi_coefficients)
from .simulator import (ClosedLoopSystem, PolynomialSpec, Trajectory,
                        assemble_closed_loop, integrate, open_loop,
                        project_initial_condition, reduced_dynamics_fit)
from .special import (QuadratureRule, bessel_j, bessel_j_zero,
                      quadrature_rule, real_spherical_harmonic,
                      spherical_bessel_j, spherical_bessel_zero)

__version__ = "0.1.0"
