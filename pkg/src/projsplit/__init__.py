"""Projective splitting for two-operator monotone inclusions, with bound checkers."""
from .operators import (Affine, EnlargementTriple, MonotoneOperator, NormalConeBox, OperatorError, Scaled,
                        Shifted, SubdiffAbsScaled, Zero, apply, is_member, min_enlargement, resolvent, transport)
from .separator import (DegenerateSeparatorError, IterateState, ParameterError, Separator, build_separator,
                        evaluate, gamma, relax_project)
from .engine import (ERGODIC, POINTWISE, StopCriterion, Trace, band_rho, check_stop, constant_rho, run,
                     write_trace_csv)
from .splitting import (PsmParams, PsmSchedule, band_a123, constant_schedule, psm_oracle, scaled_psm_oracle,
                        spingarn_direct, spingarn_oracle, spingarn_schedule)
from .inexact import (SigmaCriterion, parallel_inexact_oracle, sequential_inexact_oracle, sigma_approx_resolvent,
                      validate_approx)
from .analysis import (BoundCertificate, RunConstants, Variant, certificate, check_iteration, check_rates,
                       distance_to_solution, upsilon)
from .problems import Problem, brute_force_solution, suite

__version__ = "0.1.0"
