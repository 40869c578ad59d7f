"""polarssep: simulation and numerics workbench for the polar empirical
measure of the two-dimensional symmetric simple exclusion process."""

from .lattice import (Configuration, GeometryError, LatticeBall, SizingError,
                      TiltProfile, build_ball, build_block, constant_tilt,
                      exchange, grid_tilt, sample_product_measure, sigma_T,
                      smoothstep_tilt)
from .dynamics import (DynamicsSpec, RateOverflowError, StateSpaceError,
                       TrajectoryAccumulator, check_detailed_balance,
                       dirichlet_form_exact, run_replicas, run_trajectory,
                       stationary_check_small)
from .measures import (Bump, MesoscopicWindow, Mollifier, PolarMeasure,
                       SupportError, WindowError, annulus_average, integrate,
                       integrate_mollifier, make_window, mesoscopic_average,
                       mollified_density, polar_measure, riemann_gap)
from .functionals import (summation_by_parts_residual, v_h_energy, w_gamma,
                          w_j_delta)
from .rates import (RadialDensity, RateReport, TestBasis, energy_basis,
                    energy_closed, mobility, rate_I_Q_alpha, J_gamma_linearized,
                    solve_instanton, upsilon_closed)
from .girsanov import (GirsanovBreakdown, entropy_estimate, log_psi_dyn,
                       log_psi_pot, log_psi_stat, martingale_check)
from .verify import run_suite

__version__ = "0.1.0"
