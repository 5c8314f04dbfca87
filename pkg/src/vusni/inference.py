"""Asymptotic variance of the VUS estimators via influence functions.

Each estimator solves the triple-average estimating equation built from the
per-triple term

    G_ilr = u1_i * u2_l * u3_r * (K(ti, tl, tr) - mu),

where (u1, u2, u3) are the estimator's pseudo-label columns. The per-subject
influence value combines a plug-in correction for the fitted nuisance
parameters with the projection of the triple sum onto single subjects:

    Q_i = dG . info^{-1} . s_i
          + [slot1(G)_i + slot2(G)_i + slot3(G)_i] / ((n-1)(n-2)),

with dG the triple sum of the analytic gradient dG_ilr/dxi scaled by
1/((n-1)(n-2)), info the observed information, s_i the subject's score
contribution, and slotk(G)_i the triple sum with subject i fixed in slot k.
The variance estimate is

    Lambda = sum(Q_i^2) / (n - 1) / (theta1 * theta2 * theta3)^2,

and the standard error of the VUS estimate is sqrt(Lambda / n). Both sums
defining Q_i are exactly mean zero at the fitted (mu, xi); that identity is
asserted by the tests rather than enforced here.

For a lambda-constrained fit the correction runs over the free coordinates
only, treating lambda as known.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.linalg import solve as linalg_solve
from scipy.stats import norm

from .data import Dataset, ParamVector
from .errors import SingularInformation
from .estimators import PseudoLabels, VusEstimate, pseudo_labels
from .fit import ModelFit
from .model import ProbTable, param_slices, score_contributions
from .trisum import (
    TripleWeights,
    kernel_weighted_sum,
    per_subject_conditional_sums,
    per_subject_product_sums,
    product_sum,
)


@dataclass(frozen=True)
class InfluenceBreakdown:
    """Per-subject influence values and the variance they imply."""

    q: np.ndarray
    lambda_hat: float
    dg_dxi: np.ndarray
    score_part: np.ndarray
    kernel_part: np.ndarray
    cond: float
    theta_hat: tuple[float, float, float]


@dataclass(frozen=True)
class KernelTerms:
    """Factorized estimating-function term for one estimator.

    ``weights`` holds the three pseudo-label columns; a triple contributes
    weights[i, 0] * weights[l, 1] * weights[r, 2] * (K - mu).
    """

    method: str
    mu: float
    weights: np.ndarray

    def evaluate(self, i: int, l: int, r: int, t: np.ndarray) -> float:
        from .trisum import kernel

        k = kernel(float(t[i]), float(t[l]), float(t[r]))
        return float(
            self.weights[i, 0] * self.weights[l, 1] * self.weights[r, 2] * (k - self.mu)
        )

    def triple_average(self, t: np.ndarray) -> float:
        n = self.weights.shape[0]
        w = TripleWeights(self.weights[:, 0], self.weights[:, 1], self.weights[:, 2])
        total = kernel_weighted_sum(t, w) - self.mu * product_sum(w)
        return total / (n * (n - 1) * (n - 2))


def _labels_for(method: str, data: Dataset, xi: ParamVector,
                probs: Optional[ProbTable]) -> tuple[PseudoLabels, ProbTable]:
    if probs is None:
        probs = ProbTable(xi, data)
    labels = pseudo_labels(method, data, fit=None, probs=probs)
    return labels, probs


def estimating_kernel_terms(method: str, mu: float, xi: ParamVector, data: Dataset,
                            probs: Optional[ProbTable] = None) -> KernelTerms:
    labels, _ = _labels_for(method, data, xi, probs)
    return KernelTerms(method=method.lower(), mu=float(mu), weights=labels.dtilde)


def _rho_derivatives(probs: ProbTable, p: int) -> list[np.ndarray]:
    """d rho_k / d xi for k = 1, 2, 3, each (n, dim)."""
    n, dim = probs.u.shape[0], 8 + 3 * p
    sl = param_slices(p)
    u = probs.u
    r1, r2, r3 = probs.rho.T
    d1 = np.zeros((n, dim))
    d2 = np.zeros((n, dim))
    d1[:, sl["tau_rho1"]] = u * (r1 * (1.0 - r1))[:, None]
    d1[:, sl["tau_rho2"]] = -u * (r1 * r2)[:, None]
    d2[:, sl["tau_rho1"]] = -u * (r1 * r2)[:, None]
    d2[:, sl["tau_rho2"]] = u * (r2 * (1.0 - r2))[:, None]
    return [d1, d2, -d1 - d2]


def _rho0_derivatives(probs: ProbTable, p: int) -> list[np.ndarray]:
    """d rho_k|V=0 / d xi for k = 1, 2, 3, each (n, dim)."""
    n, dim = probs.u.shape[0], 8 + 3 * p
    sl = param_slices(p)
    u = probs.u
    r1, r2, r3 = probs.rho.T
    q10, q01, q00 = 1.0 - probs.pi10, 1.0 - probs.pi01, 1.0 - probs.pi00
    z2 = probs.z ** 2

    d1 = np.zeros((n, dim))
    d1[:, 0] = -probs.pi10 * q10 * r1 * (q01 * r2 + q00 * r3) / z2
    d1[:, 1] = r1 * r2 * probs.pi01 * q01 * q10 / z2
    d1[:, sl["tau_pi"]] = -u * (
        r1 * q10 * (r2 * q01 * (probs.pi10 - probs.pi01)
                    + r3 * q00 * (probs.pi10 - probs.pi00)) / z2
    )[:, None]
    d1[:, sl["tau_rho1"]] = u * (r1 * q10 * (r2 * q01 + r3 * q00) / z2)[:, None]
    d1[:, sl["tau_rho2"]] = -u * (r1 * r2 * q10 * q01 / z2)[:, None]

    d2 = np.zeros((n, dim))
    d2[:, 0] = r1 * r2 * probs.pi10 * q10 * q01 / z2
    d2[:, 1] = -probs.pi01 * q01 * r2 * (q10 * r1 + q00 * r3) / z2
    d2[:, sl["tau_pi"]] = -u * (
        r2 * q01 * (r1 * q10 * (probs.pi01 - probs.pi10)
                    + r3 * q00 * (probs.pi01 - probs.pi00)) / z2
    )[:, None]
    d2[:, sl["tau_rho1"]] = -u * (r1 * r2 * q10 * q01 / z2)[:, None]
    d2[:, sl["tau_rho2"]] = u * (r2 * q01 * (r1 * q10 + r3 * q00) / z2)[:, None]

    return [d1, d2, -d1 - d2]


def _rho1_derivatives(probs: ProbTable, p: int) -> list[np.ndarray]:
    """d rho_k|V=1 / d xi, the mirror of :func:`_rho0_derivatives`."""
    n, dim = probs.u.shape[0], 8 + 3 * p
    sl = param_slices(p)
    u = probs.u
    r1, r2, r3 = probs.rho.T
    p10, p01, p00 = probs.pi10, probs.pi01, probs.pi00
    m2 = probs.pi ** 2

    d1 = np.zeros((n, dim))
    d1[:, 0] = p10 * (1.0 - p10) * r1 * (p01 * r2 + p00 * r3) / m2
    d1[:, 1] = -r1 * r2 * p01 * (1.0 - p01) * p10 / m2
    d1[:, sl["tau_pi"]] = u * (
        r1 * p10 * (r2 * p01 * (p01 - p10) + r3 * p00 * (p00 - p10)) / m2
    )[:, None]
    d1[:, sl["tau_rho1"]] = u * (r1 * p10 * (r2 * p01 + r3 * p00) / m2)[:, None]
    d1[:, sl["tau_rho2"]] = -u * (r1 * r2 * p10 * p01 / m2)[:, None]

    d2 = np.zeros((n, dim))
    d2[:, 0] = -r1 * r2 * p10 * (1.0 - p10) * p01 / m2
    d2[:, 1] = p01 * (1.0 - p01) * r2 * (p10 * r1 + p00 * r3) / m2
    d2[:, sl["tau_pi"]] = u * (
        r2 * p01 * (r1 * p10 * (p10 - p01) + r3 * p00 * (p00 - p01)) / m2
    )[:, None]
    d2[:, sl["tau_rho1"]] = -u * (r1 * r2 * p10 * p01 / m2)[:, None]
    d2[:, sl["tau_rho2"]] = u * (r2 * p01 * (r1 * p10 + r3 * p00) / m2)[:, None]

    return [d1, d2, -d1 - d2]


def _inv_pi_observed_derivative(probs: ProbTable, data: Dataset, p: int) -> np.ndarray:
    """d (1 / pi at observed pattern) / d xi, zero rows where v=0."""
    n, dim = probs.u.shape[0], 8 + 3 * p
    sl = param_slices(p)
    v = data.v.astype(float)
    d1, d2, _ = data.d_onehot.T
    pi_obs = probs.pi_observed
    ratio = (1.0 - pi_obs) / pi_obs
    out = np.zeros((n, dim))
    out[:, 0] = -v * d1 * ratio
    out[:, 1] = -v * d2 * ratio
    out[:, sl["tau_pi"]] = -probs.u * (v * ratio)[:, None]
    return out


def _weight_derivatives(method: str, data: Dataset, probs: ProbTable,
                        p: int) -> list[np.ndarray]:
    """d u_k / d xi for the three pseudo-label columns, each (n, dim)."""
    method = method.lower()
    if method == "fi":
        return _rho_derivatives(probs, p)
    if method == "fi_alt":
        v = data.v.astype(float)[:, None]
        d0 = _rho0_derivatives(probs, p)
        dv = _rho1_derivatives(probs, p)
        return [v * dv[k] + (1.0 - v) * d0[k] for k in range(3)]
    if method == "msi":
        v = data.v.astype(float)[:, None]
        return [(1.0 - v) * dk for dk in _rho0_derivatives(probs, p)]
    if method == "ipw":
        dinv = _inv_pi_observed_derivative(probs, data, p)
        dmat = data.d_onehot
        return [dmat[:, k][:, None] * dinv for k in range(3)]
    if method == "pdr":
        dinv = _inv_pi_observed_derivative(probs, data, p)
        d0 = _rho0_derivatives(probs, p)
        v = data.v.astype(float)
        dmat = data.d_onehot
        ratio = (v / probs.pi_observed - 1.0)[:, None]
        out = []
        for k in range(3):
            lever = (v * (dmat[:, k] - probs.rho0[:, k]))[:, None]
            out.append(lever * dinv - ratio * d0[k])
        return out
    raise ValueError(f"unknown method {method!r}")


def dG_dxi(method: str, mu: float, xi: ParamVector, data: Dataset,
           probs: Optional[ProbTable] = None,
           labels: Optional[PseudoLabels] = None) -> np.ndarray:
    """Triple sum of dG_ilr/dxi, scaled by 1/((n-1)(n-2)); shape (8 + 3p,)."""
    if labels is None or probs is None:
        labels, probs = _labels_for(method, data, xi, probs)
    n = data.n
    u1, u2, u3 = labels.dtilde.T
    du1, du2, du3 = _weight_derivatives(method, data, probs, data.p)
    total = np.zeros(xi.dim)
    for w in (
        TripleWeights(du1, np.tile(u2[:, None], (1, xi.dim)), np.tile(u3[:, None], (1, xi.dim))),
        TripleWeights(np.tile(u1[:, None], (1, xi.dim)), du2, np.tile(u3[:, None], (1, xi.dim))),
        TripleWeights(np.tile(u1[:, None], (1, xi.dim)), np.tile(u2[:, None], (1, xi.dim)), du3),
    ):
        total += kernel_weighted_sum(data.t, w) - mu * product_sum(w)
    return total / ((n - 1) * (n - 2))


def influence_values(method: str, estimate: Union[VusEstimate, float], fit: ModelFit,
                     data: Dataset, probs: Optional[ProbTable] = None,
                     labels: Optional[PseudoLabels] = None,
                     theta_hat: Optional[tuple] = None) -> InfluenceBreakdown:
    """Per-subject influence values and the variance of one estimator."""
    if isinstance(estimate, VusEstimate):
        mu = float(estimate.mu_hat)
        if theta_hat is None:
            theta_hat = estimate.theta_hat
        method = method or estimate.method
    else:
        mu = float(estimate)
    if theta_hat is None:
        raise ValueError("theta_hat required when estimate is a bare value")
    xi = fit.xi_hat
    if labels is None or probs is None:
        labels, probs = _labels_for(method, data, xi, probs)

    n = data.n
    free = fit.free_mask
    dg = dG_dxi(method, mu, xi, data, probs=probs, labels=labels)
    info_free = fit.info[np.ix_(free, free)]
    cond = float(np.linalg.cond(info_free))
    if not np.isfinite(cond) or cond > 1.0 / np.finfo(float).eps:
        raise SingularInformation(
            f"observed information condition number {cond:.3e}"
        )
    try:
        correction = linalg_solve(info_free, dg[free], assume_a="sym")
    except np.linalg.LinAlgError as exc:
        raise SingularInformation(str(exc)) from exc
    scores = score_contributions(xi, data)[:, free]
    score_part = scores @ correction

    u1, u2, u3 = labels.dtilde.T
    w = TripleWeights(u1, u2, u3)
    slot_k = per_subject_conditional_sums(data.t, w)
    slot_p = per_subject_product_sums(w)
    # the slot sums leave out the fixed subject's own factor, so G with
    # subject i in slot k is u_k[i] * (kernel slot sum - mu * plain slot sum)
    kernel_part = sum(
        uk * (sk - mu * sp) for uk, sk, sp in zip((u1, u2, u3), slot_k, slot_p)
    )
    kernel_part = kernel_part / ((n - 1) * (n - 2))

    q = score_part + kernel_part
    th1, th2, th3 = (float(x) for x in theta_hat)
    lam = float(np.sum(q * q) / (n - 1) / (th1 * th2 * th3) ** 2)
    return InfluenceBreakdown(
        q=q,
        lambda_hat=lam,
        dg_dxi=dg,
        score_part=score_part,
        kernel_part=kernel_part,
        cond=cond,
        theta_hat=(th1, th2, th3),
    )


def confidence_interval(estimate: Union[VusEstimate, float],
                        breakdown: Union[InfluenceBreakdown, float],
                        level: float = 0.95) -> tuple[float, float]:
    """Normal-approximation interval for the VUS, truncated to [0, 1]."""
    if not 0.0 < level < 1.0:
        raise ValueError("confidence level must be in (0, 1)")
    mu = float(estimate.mu_hat) if isinstance(estimate, VusEstimate) else float(estimate)
    if isinstance(breakdown, InfluenceBreakdown):
        se = float(np.sqrt(breakdown.lambda_hat / breakdown.q.shape[0]))
    else:
        se = float(breakdown)
    z = norm.ppf(0.5 + level / 2.0)
    return (max(0.0, mu - z * se), min(1.0, mu + z * se))
