"""Joint verification/disease model: probabilities, likelihood, score.

The disease model is a multinomial logit with class 3 as reference,

    rho_k = exp(f_k) / (1 + exp(f_1) + exp(f_2)),   f_k = tau_rho_k . (1, t, a),

and the verification model is a logistic regression whose linear predictor
shifts by lambda_1 (lambda_2) when the subject belongs to class 1 (class 2),

    pi_{d1 d2} = expit(h + lambda_1 d1 + lambda_2 d2),   h = tau_pi . (1, t, a).

All probabilities are clamped to [1e-10, 1 - 1e-10] so logs stay finite; at
any realistic parameter value the clamp is inactive and the analytic score
below is the exact gradient of the log-likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import Dataset, ParamVector
from .errors import DegenerateConditional, InvalidDiseasePattern

PROB_CLAMP = 1e-10


def design_matrix(data: Dataset) -> np.ndarray:
    """Per-subject regressors (1, t, a1..ap), shape (n, 2 + p)."""
    return np.column_stack([np.ones(data.n), data.t, data.a])


def _clamp(x: np.ndarray) -> np.ndarray:
    return np.clip(x, PROB_CLAMP, 1.0 - PROB_CLAMP)


def _rho_matrix(xi: ParamVector, u: np.ndarray) -> np.ndarray:
    """Disease class probabilities, shape (n, 3); rows sum to one."""
    f1 = u @ xi.tau_rho1
    f2 = u @ xi.tau_rho2
    top = np.maximum(np.maximum(f1, f2), 0.0)
    e1 = np.exp(f1 - top)
    e2 = np.exp(f2 - top)
    e3 = np.exp(-top)
    total = e1 + e2 + e3
    rho = np.stack([e1, e2, e3], axis=1) / total[:, None]
    rho = _clamp(rho)
    return rho / rho.sum(axis=1, keepdims=True)


def _pi_components(xi: ParamVector, u: np.ndarray):
    """Verification probabilities (pi10, pi01, pi00) for each subject."""
    h = u @ xi.tau_pi
    return (
        _clamp(expit(h + xi.lam[0])),
        _clamp(expit(h + xi.lam[1])),
        _clamp(expit(h)),
    )


def _check_point(xi: ParamVector, t, a) -> np.ndarray:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.shape != (xi.p,):
        raise ValueError(f"covariate vector must have length {xi.p}, got {a.shape}")
    return np.concatenate([[1.0, float(t)], a])[None, :]


def disease_probs(xi: ParamVector, t: float, a) -> tuple[float, float, float]:
    """(rho1, rho2, rho3) at a single (t, a) point."""
    rho = _rho_matrix(xi, _check_point(xi, t, a))[0]
    return float(rho[0]), float(rho[1]), float(rho[2])


def verification_prob(xi: ParamVector, d1: int, d2: int, t: float, a) -> float:
    """Pr(V=1 | disease pattern (d1, d2), t, a)."""
    if (d1, d2) not in ((1, 0), (0, 1), (0, 0)):
        raise InvalidDiseasePattern(f"invalid disease pattern {(d1, d2)}")
    u = _check_point(xi, t, a)
    h = float((u @ xi.tau_pi)[0])
    return float(_clamp(expit(h + xi.lam[0] * d1 + xi.lam[1] * d2)))


@dataclass(frozen=True)
class SubjectProbs:
    """All model-implied probabilities at one (t, a) point."""

    rho: tuple[float, float, float]
    pi_10: float
    pi_01: float
    pi_00: float
    pi: float
    rho0: tuple[float, float, float]
    rho1v: tuple[float, float, float]


def subject_probs(xi: ParamVector, t: float, a) -> SubjectProbs:
    """Disease and verification probabilities plus both conditionals.

    ``rho0`` conditions the class probabilities on V=0, ``rho1v`` on V=1.
    """
    u = _check_point(xi, t, a)
    rho = _rho_matrix(xi, u)[0]
    pi10, pi01, pi00 = (float(x[0]) for x in _pi_components(xi, u))
    pis = np.array([pi10, pi01, pi00])
    miss = (1.0 - pis) * rho
    z = miss.sum()
    if z < 1e-300:
        raise DegenerateConditional("all (1 - pi) * rho products underflowed")
    rho0 = miss / z
    sel = pis * rho
    m = sel.sum()
    if m < 1e-300:
        raise DegenerateConditional("all pi * rho products underflowed")
    rho1v = sel / m
    return SubjectProbs(
        rho=tuple(float(x) for x in rho),
        pi_10=pi10,
        pi_01=pi01,
        pi_00=pi00,
        pi=float(m),
        rho0=tuple(float(x) for x in rho0),
        rho1v=tuple(float(x) for x in rho1v),
    )


class ProbTable:
    """Vectorized model probabilities for a whole dataset.

    Arrays: ``rho``/``rho0``/``rho1v`` are (n, 3); ``pi10``, ``pi01``,
    ``pi00``, ``pi`` (marginal) and ``z`` (the (1-pi)*rho normalizer) are
    (n,). ``pi_observed`` is the verification probability at each verified
    subject's own disease pattern, with 1.0 as a placeholder where v=0 (every
    use multiplies it by v).
    """

    def __init__(self, xi: ParamVector, data: Dataset):
        u = design_matrix(data)
        self.u = u
        self.rho = _rho_matrix(xi, u)
        self.pi10, self.pi01, self.pi00 = _pi_components(xi, u)
        pis = np.stack([self.pi10, self.pi01, self.pi00], axis=1)
        self.pi = np.sum(pis * self.rho, axis=1)
        miss = (1.0 - pis) * self.rho
        self.z = miss.sum(axis=1)
        if np.any(self.z < 1e-300):
            raise DegenerateConditional("all (1 - pi) * rho products underflowed")
        self.rho0 = miss / self.z[:, None]
        self.rho1v = (pis * self.rho) / self.pi[:, None]
        dmat = data.d_onehot
        pat = dmat[:, 0] * self.pi10 + dmat[:, 1] * self.pi01 + dmat[:, 2] * self.pi00
        self.pi_observed = np.where(data.v == 1, pat, 1.0)


def _loglik_terms(xi: ParamVector, data: Dataset):
    u = design_matrix(data)
    rho = _rho_matrix(xi, u)
    pi10, pi01, pi00 = _pi_components(xi, u)
    cell = rho[:, 0] * pi10 + rho[:, 1] * pi01 + rho[:, 2] * pi00
    return u, rho, pi10, pi01, pi00, 1.0 - cell


def log_likelihood(xi: ParamVector, data: Dataset) -> float:
    """Observed-data log-likelihood of the joint model."""
    if xi.p != data.p:
        raise ValueError("parameter and dataset covariate dimensions differ")
    _, rho, pi10, pi01, pi00, unv = _loglik_terms(xi, data)
    v = data.v
    dmat = data.d_onehot
    verified = v * (
        dmat[:, 0] * np.log(rho[:, 0] * pi10)
        + dmat[:, 1] * np.log(rho[:, 1] * pi01)
        + dmat[:, 2] * np.log(rho[:, 2] * pi00)
    )
    return float(np.sum(verified + (1 - v) * np.log(unv)))


def score_contributions(xi: ParamVector, data: Dataset) -> np.ndarray:
    """Per-subject score vectors, shape (n, 8 + 3p), blocks in flat order."""
    if xi.p != data.p:
        raise ValueError("parameter and dataset covariate dimensions differ")
    u, rho, pi10, pi01, pi00, unv = _loglik_terms(xi, data)
    v = data.v
    w = (1 - v) / unv
    d1, d2, d3 = data.d_onehot.T
    r1, r2, r3 = rho.T

    g_lam1 = d1 * v * (1.0 - pi10) - w * r1 * pi10 * (1.0 - pi10)
    g_lam2 = d2 * v * (1.0 - pi01) - w * r2 * pi01 * (1.0 - pi01)
    c_pi = v * (d1 * (1.0 - pi10) + d2 * (1.0 - pi01) + d3 * (1.0 - pi00)) - w * (
        r1 * pi10 * (1.0 - pi10) + r2 * pi01 * (1.0 - pi01) + r3 * pi00 * (1.0 - pi00)
    )
    c_r1 = v * (d1 - r1) - w * ((pi10 - pi00) * r1 * (1.0 - r1) - (pi01 - pi00) * r1 * r2)
    c_r2 = v * (d2 - r2) - w * ((pi01 - pi00) * r2 * (1.0 - r2) - (pi10 - pi00) * r1 * r2)

    return np.column_stack(
        [g_lam1, g_lam2, u * c_pi[:, None], u * c_r1[:, None], u * c_r2[:, None]]
    )


def score(xi: ParamVector, data: Dataset) -> np.ndarray:
    """Analytic gradient of :func:`log_likelihood`, shape (8 + 3p,)."""
    return score_contributions(xi, data).sum(axis=0)


def observed_information(xi: ParamVector, data: Dataset) -> np.ndarray:
    """Negative Hessian of the log-likelihood, by differencing the score.

    Central differences of the analytic gradient, per-coordinate step
    1e-5 * max(1, |xi_j|); the result is symmetrized as (H + H^T) / 2.
    """
    flat = xi.to_flat()
    dim = flat.shape[0]
    hess = np.empty((dim, dim))
    for j in range(dim):
        step = 1e-5 * max(1.0, abs(flat[j]))
        hi = flat.copy()
        hi[j] += step
        lo = flat.copy()
        lo[j] -= step
        hess[:, j] = (
            score(ParamVector.from_flat(hi, xi.p), data)
            - score(ParamVector.from_flat(lo, xi.p), data)
        ) / (2.0 * step)
    info = -hess
    return (info + info.T) / 2.0


def param_slices(p: int) -> dict[str, slice]:
    """Flat-layout slices for the five parameter blocks."""
    m = 2 + p
    return {
        "lambda1": slice(0, 1),
        "lambda2": slice(1, 2),
        "tau_pi": slice(2, 2 + m),
        "tau_rho1": slice(2 + m, 2 + 2 * m),
        "tau_rho2": slice(2 + 2 * m, 2 + 3 * m),
    }
