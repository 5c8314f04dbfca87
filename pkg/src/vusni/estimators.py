"""VUS estimators: nonparametric, FI, MSI, IPW and PDR.

Each bias-corrected estimator replaces the one-hot disease indicators of the
nonparametric VUS with per-subject pseudo values built from the fitted
joint model:

    FI      rows of fitted class probabilities rho_k;
    FI_ALT  v * rho_k|V=1 + (1 - v) * rho_k|V=0;
    MSI     observed one-hot rows for verified subjects, rho_k|V=0 otherwise;
    IPW     v * D_k / pi_k, keeping verified subjects only;
    PDR     v * D_k / pi_k - rho_k|V=0 * (v - pi_k) / pi_k.

Here pi_k is the verification probability at the subject's own disease
pattern, Pr(V=1 | D, T, A), which is what makes the weighted sums unbiased
under nonignorable selection (the marginal Pr(V=1 | T, A) would tilt the
verified sample toward the classes that are verified more often). The
estimate is the ratio of the kernel-weighted triple sum to the bare product
sum over the pseudo values. PDR rows may be negative; they are kept as is
and only counted as a diagnostic, since truncation would reintroduce bias.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset
from .errors import DenominatorUnderflow, EmptyClass, ExtremeWeight
from .fit import ModelFit
from .model import ProbTable
from .trisum import TripleWeights, kernel_weighted_sum, product_sum

METHODS = ("fi", "fi_alt", "msi", "ipw", "pdr")
PI_FLOOR = 1e-6


@dataclass(frozen=True)
class PseudoLabels:
    """Per-subject pseudo disease values for one estimator."""

    method: str
    dtilde: np.ndarray
    ipw_weight: Optional[np.ndarray] = None
    negative_count: int = 0


@dataclass(frozen=True)
class VusEstimate:
    method: str
    mu_hat: float
    se: Optional[float]
    ci: Optional[tuple[float, float]]
    theta_hat: tuple[float, float, float]
    level: float
    diagnostics: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "mu_hat": float(self.mu_hat),
            "se": None if self.se is None else float(self.se),
            "ci": None if self.ci is None else [float(self.ci[0]), float(self.ci[1])],
            "theta_hat": [float(x) for x in self.theta_hat],
            "level": float(self.level),
            "diagnostics": dict(self.diagnostics),
        }


def _triple_ratio(t: np.ndarray, dtilde: np.ndarray) -> float:
    w = TripleWeights(dtilde[:, 0], dtilde[:, 1], dtilde[:, 2])
    den = product_sum(w)
    if den <= 0.0:
        raise DenominatorUnderflow(f"triple product sum is {den!r}")
    return kernel_weighted_sum(t, w) / den


def vus_nonparametric(data: Dataset) -> float:
    """Nonparametric VUS on fully verified data (one-hot class weights)."""
    if np.any(data.v != 1):
        raise ValueError("nonparametric VUS requires fully verified data")
    if data.n < 3:
        raise ValueError("VUS needs at least three subjects")
    counts = data.d_onehot.sum(axis=0)
    if np.any(counts < 1):
        missing = [str(k + 1) for k in range(3) if counts[k] < 1]
        raise EmptyClass(f"no subjects in class {', '.join(missing)}")
    return _triple_ratio(data.t, data.d_onehot)


def bootstrap_se_nonparametric(data: Dataset, reps: int = 250, seed=0) -> float:
    """Standard error of the nonparametric VUS by resampling subjects."""
    rng = np.random.default_rng(seed)
    values = []
    idx_all = np.arange(data.n)
    for _ in range(reps):
        idx = rng.choice(idx_all, size=data.n, replace=True)
        dmat = data.d_onehot[idx]
        if np.any(dmat.sum(axis=0) < 1):
            continue
        values.append(_triple_ratio(data.t[idx], dmat))
    if len(values) < 2:
        raise EmptyClass("bootstrap resamples kept losing a disease class")
    return float(np.std(values, ddof=1))


def pseudo_labels(method: str, data: Dataset, fit: ModelFit,
                  probs: Optional[ProbTable] = None) -> PseudoLabels:
    """Pseudo disease values (n x 3) for one estimator."""
    method = method.lower()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if fit is not None and not fit.converged:
        raise ValueError("pseudo labels need a converged fit")
    if probs is None:
        if fit is None:
            raise ValueError("either a fit or a probability table is required")
        probs = ProbTable(fit.xi_hat, data)
    v = data.v.astype(float)
    dmat = data.d_onehot

    if method == "fi":
        dtilde = probs.rho.copy()
    elif method == "fi_alt":
        dtilde = v[:, None] * probs.rho1v + (1.0 - v)[:, None] * probs.rho0
    elif method == "msi":
        dtilde = v[:, None] * dmat + (1.0 - v)[:, None] * probs.rho0
    else:
        pi_obs = probs.pi_observed
        low = (data.v == 1) & (pi_obs < PI_FLOOR)
        if np.any(low):
            raise ExtremeWeight(
                f"{int(low.sum())} verified subjects have verification "
                f"probability below {PI_FLOOR:g}"
            )
        if method == "ipw":
            dtilde = (v / pi_obs)[:, None] * dmat
            return PseudoLabels(method=method, dtilde=dtilde, ipw_weight=v / pi_obs)
        dtilde = (v / pi_obs)[:, None] * dmat - probs.rho0 * ((v - pi_obs) / pi_obs)[:, None]
        return PseudoLabels(
            method=method,
            dtilde=dtilde,
            negative_count=int(np.sum(dtilde < 0.0)),
        )
    return PseudoLabels(method=method, dtilde=dtilde)


def _theta_hat(method: str, labels: PseudoLabels, data: Dataset) -> np.ndarray:
    if method == "ipw":
        w = labels.ipw_weight
        return (labels.dtilde.sum(axis=0)) / np.sum(w)
    return labels.dtilde.mean(axis=0)


def vus_estimate(method: str, data: Dataset, fit: ModelFit, level: float = 0.95,
                 probs: Optional[ProbTable] = None,
                 with_se: bool = True) -> VusEstimate:
    """Point estimate with asymptotic standard error and confidence interval."""
    if not 0.0 < level < 1.0:
        raise ValueError("confidence level must be in (0, 1)")
    if data.n < 3:
        raise ValueError("VUS needs at least three subjects")
    method = method.lower()
    if probs is None:
        probs = ProbTable(fit.xi_hat, data)
    labels = pseudo_labels(method, data, fit, probs=probs)
    mu_hat = _triple_ratio(data.t, labels.dtilde)
    theta = _theta_hat(method, labels, data)
    diagnostics = {}
    if method == "pdr":
        diagnostics["negative_pseudo_entries"] = labels.negative_count

    se = None
    ci = None
    if with_se:
        from . import inference

        breakdown = inference.influence_values(
            method, mu_hat, fit, data, probs=probs, labels=labels,
            theta_hat=tuple(float(x) for x in theta),
        )
        se = float(np.sqrt(breakdown.lambda_hat / data.n))
        ci = inference.confidence_interval(mu_hat, se, level)
        diagnostics["lambda_hat"] = float(breakdown.lambda_hat)
        diagnostics["mean_influence"] = float(np.mean(breakdown.q))
        diagnostics["information_condition_number"] = float(breakdown.cond)
    return VusEstimate(
        method=method,
        mu_hat=float(mu_hat),
        se=se,
        ci=ci,
        theta_hat=tuple(float(x) for x in theta),
        level=level,
        diagnostics=diagnostics,
    )
