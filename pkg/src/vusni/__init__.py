"""Bias-corrected VUS estimation under nonignorable verification.

Estimates the volume under the ROC surface of a continuous three-class
diagnostic test when disease-status verification may depend on the disease
itself, by jointly fitting parametric verification and disease models and
computing FI, MSI, IPW and PDR estimators with asymptotic standard errors.
"""

__version__ = "0.1.0"

from .data import (
    ColumnTransform,
    Dataset,
    ParamVector,
    Standardization,
    SubjectRecord,
    load_csv,
    standardize,
)
from .estimators import (
    METHODS,
    PseudoLabels,
    VusEstimate,
    bootstrap_se_nonparametric,
    pseudo_labels,
    vus_estimate,
    vus_nonparametric,
)
from .fit import FitOptions, LrtResult, ModelFit, fit, lrt_ignorability
from .inference import (
    InfluenceBreakdown,
    KernelTerms,
    confidence_interval,
    dG_dxi,
    estimating_kernel_terms,
    influence_values,
)
from .model import (
    ProbTable,
    SubjectProbs,
    disease_probs,
    log_likelihood,
    observed_information,
    score,
    subject_probs,
    verification_prob,
)
from .simulation import (
    McReport,
    ScenarioSpec,
    SimulatedData,
    builtin_scenario,
    generate,
    run_mc,
)
from .trisum import (
    TripleWeights,
    kernel,
    kernel_weighted_sum,
    per_subject_conditional_sums,
    product_sum,
)

__all__ = [
    "__version__",
    "ColumnTransform", "Dataset", "ParamVector", "Standardization",
    "SubjectRecord", "load_csv", "standardize",
    "METHODS", "PseudoLabels", "VusEstimate", "bootstrap_se_nonparametric",
    "pseudo_labels", "vus_estimate", "vus_nonparametric",
    "FitOptions", "LrtResult", "ModelFit", "fit", "lrt_ignorability",
    "InfluenceBreakdown", "KernelTerms", "confidence_interval", "dG_dxi",
    "estimating_kernel_terms", "influence_values",
    "ProbTable", "SubjectProbs", "disease_probs", "log_likelihood",
    "observed_information", "score", "subject_probs", "verification_prob",
    "McReport", "ScenarioSpec", "SimulatedData", "builtin_scenario",
    "generate", "run_mc",
    "TripleWeights", "kernel", "kernel_weighted_sum",
    "per_subject_conditional_sums", "product_sum",
]
