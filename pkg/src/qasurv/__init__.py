"""Survival analysis of question resolution in Stack Exchange communities."""

__version__ = "0.1.0"

from .errors import (DegenerateCovariateError, DomainError, DumpParseError,  # noqa: E402
                     InvalidInputError, InvalidRowError, InvalidStateError,
                     NonIdentifiableError, QasurvError, SchemaError)
from .survival import (LogRankResult, SurvivalCurve, SurvivalRecord,  # noqa: E402
                       chi_square_sf, km_fit, km_survival_at, logrank_test)
from .splines import SplineSpec, make_spline_spec, spline_basis  # noqa: E402
from .cox import (DEFAULT_MODEL, CoxFit, DesignMatrix, Term, build_design,  # noqa: E402
                  cox_fit, log_partial_likelihood)
from .inference import (HazardRatioSummary, PHDiagnostics, effect_curve,  # noqa: E402
                        hazard_ratio_summary, schoenfeld_test)
