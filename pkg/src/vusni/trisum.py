"""Sums over ordered triples of distinct subjects with the VUS kernel.

The kernel for an ordered triple (i, l, r) of test results is

    K(ti, tl, tr) = I(ti < tl < tr) + 1/2 I(ti < tl = tr)
                    + 1/2 I(ti = tl < tr) + 1/6 I(ti = tl = tr),

with exact floating-point equality for ties. Every quantity in this module
is a sum over all ordered triples of pairwise-distinct indices of
K(ti, tl, tr) * w1_i * w2_l * w3_r (or of the bare weight product).

The fast path sorts once, groups tied values, and combines group prefix and
suffix sums so that the full sum and all per-subject "leave the subject in
one slot" sums cost O(n log n). A direct O(n^3) evaluation ships alongside
it as the reference implementation; it is limited to n <= 100.

Weights may be scalars per subject, shape (n,), or vectors per subject,
shape (n, m); vector weights are processed componentwise in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BRUTEFORCE_MAX_N = 100


@dataclass(frozen=True)
class TripleWeights:
    """Per-subject weights for the three slots of the triple sum."""

    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray

    def __post_init__(self):
        w1 = np.asarray(self.w1, dtype=float)
        w2 = np.asarray(self.w2, dtype=float)
        w3 = np.asarray(self.w3, dtype=float)
        if not (w1.shape == w2.shape == w3.shape):
            raise ValueError("weight arrays must share their shape")
        if w1.ndim not in (1, 2):
            raise ValueError("weights must be (n,) or (n, m)")
        if not all(np.all(np.isfinite(w)) for w in (w1, w2, w3)):
            raise ValueError("weights must be finite")
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "w3", w3)

    @property
    def n(self) -> int:
        return self.w1.shape[0]

    @classmethod
    def ones(cls, n: int) -> "TripleWeights":
        one = np.ones(n)
        return cls(one, one, one)


def kernel(t_i: float, t_l: float, t_r: float) -> float:
    """Ordered-triple kernel value in {0, 1/6, 1/2, 1}."""
    if t_i < t_l:
        if t_l < t_r:
            return 1.0
        if t_l == t_r:
            return 0.5
        return 0.0
    if t_i == t_l:
        if t_l < t_r:
            return 0.5
        if t_l == t_r:
            return 1.0 / 6.0
    return 0.0


def _check(t, w: TripleWeights):
    t = np.asarray(t, dtype=float)
    if t.ndim != 1:
        raise ValueError("t must be one-dimensional")
    if w.n != t.shape[0]:
        raise ValueError(f"weight length {w.n} does not match n={t.shape[0]}")
    if t.shape[0] < 3:
        raise ValueError("triple sums need n >= 3")
    return t


def _as_2d(w: np.ndarray) -> tuple[np.ndarray, bool]:
    if w.ndim == 1:
        return w[:, None], True
    return w, False


def _group_layout(t_sorted: np.ndarray):
    """Start index of each tie group in the sorted order."""
    boundaries = np.flatnonzero(t_sorted[1:] != t_sorted[:-1]) + 1
    return np.concatenate([[0], boundaries])


def _excl_prefix(x: np.ndarray) -> np.ndarray:
    out = np.cumsum(x, axis=0)
    out = np.roll(out, 1, axis=0)
    out[0] = 0.0
    return out


def _excl_suffix(x: np.ndarray) -> np.ndarray:
    return _excl_prefix(x[::-1])[::-1]


class _SortedGroups:
    """Sorted weights, tie groups, and all group-level sums the sums need."""

    def __init__(self, t: np.ndarray, w: TripleWeights):
        self.order = np.argsort(t, kind="stable")
        ts = t[self.order]
        w1, self.scalar = _as_2d(w.w1)
        w2, _ = _as_2d(w.w2)
        w3, _ = _as_2d(w.w3)
        self.w1 = w1[self.order]
        self.w2 = w2[self.order]
        self.w3 = w3[self.order]
        starts = _group_layout(ts)
        self.starts = starts
        # group totals and within-group coincidence sums, shape (G, m)
        self.W1 = np.add.reduceat(self.w1, starts, axis=0)
        self.W2 = np.add.reduceat(self.w2, starts, axis=0)
        self.W3 = np.add.reduceat(self.w3, starts, axis=0)
        self.c12 = np.add.reduceat(self.w1 * self.w2, starts, axis=0)
        self.c13 = np.add.reduceat(self.w1 * self.w3, starts, axis=0)
        self.c23 = np.add.reduceat(self.w2 * self.w3, starts, axis=0)
        self.c123 = np.add.reduceat(self.w1 * self.w2 * self.w3, starts, axis=0)
        # exclusive prefix of W1 and exclusive suffix of W3 across groups
        self.P1 = _excl_prefix(self.W1)
        self.S3 = _excl_suffix(self.W3)
        # per-subject group index in sorted order
        n = ts.shape[0]
        gidx = np.zeros(n, dtype=int)
        gidx[starts[1:]] = 1
        self.gidx = np.cumsum(gidx)

    def distinct_within_group(self) -> np.ndarray:
        """Sum over all-distinct triples drawn from one tie group, per group."""
        return (
            self.W1 * self.W2 * self.W3
            - self.W1 * self.c23
            - self.W2 * self.c13
            - self.W3 * self.c12
            + 2.0 * self.c123
        )


def _finalize(value: np.ndarray, scalar: bool):
    return float(value[0]) if scalar else value


def kernel_weighted_sum(t, w: TripleWeights, engine: str = "fast"):
    """Sum of K(ti, tl, tr) * w1_i * w2_l * w3_r over distinct triples."""
    t = _check(t, w)
    if engine == "bruteforce":
        return kernel_weighted_sum_bruteforce(t, w)
    if engine != "fast":
        raise ValueError(f"unknown engine {engine!r}")
    g = _SortedGroups(t, w)
    strict = np.sum(g.W2 * g.P1 * g.S3, axis=0)
    lt_eq = 0.5 * np.sum((g.W2 * g.W3 - g.c23) * g.P1, axis=0)
    eq_lt = 0.5 * np.sum((g.W1 * g.W2 - g.c12) * g.S3, axis=0)
    all_eq = np.sum(g.distinct_within_group(), axis=0) / 6.0
    return _finalize(strict + lt_eq + eq_lt + all_eq, g.scalar)


def product_sum(w: TripleWeights):
    """Sum of w1_i * w2_l * w3_r over distinct triples, in closed form."""
    if w.n < 3:
        raise ValueError("triple sums need n >= 3")
    w1, scalar = _as_2d(w.w1)
    w2, _ = _as_2d(w.w2)
    w3, _ = _as_2d(w.w3)
    s1 = w1.sum(axis=0)
    s2 = w2.sum(axis=0)
    s3 = w3.sum(axis=0)
    c12 = np.sum(w1 * w2, axis=0)
    c13 = np.sum(w1 * w3, axis=0)
    c23 = np.sum(w2 * w3, axis=0)
    c123 = np.sum(w1 * w2 * w3, axis=0)
    return _finalize(s1 * s2 * s3 - c12 * s3 - c13 * s2 - c23 * s1 + 2.0 * c123, scalar)


def per_subject_conditional_sums(t, w: TripleWeights):
    """Kernel-weighted triple sums with one fixed subject per slot.

    Returns (slot1, slot2, slot3): slot1[j] sums K(tj, tl, tr) w2_l w3_r over
    the remaining distinct pairs, and slots 2 and 3 fix j as the middle and
    last index respectively.
    """
    t = _check(t, w)
    g = _SortedGroups(t, w)
    # group-level accumulations over strictly later / earlier groups
    T23 = _excl_suffix(g.W2 * g.S3)          # sum over c > g of W2_c * S3_{>c}
    T12 = _excl_prefix(g.W2 * g.P1)          # sum over c < g of W2_c * P1_{<c}
    M23 = _excl_suffix(g.W2 * g.W3 - g.c23)  # distinct pairs within later groups
    M12 = _excl_prefix(g.W1 * g.W2 - g.c12)  # distinct pairs within earlier groups

    gi = g.gidx
    w1, w2, w3 = g.w1, g.w2, g.w3
    W1g, W2g, W3g = g.W1[gi], g.W2[gi], g.W3[gi]
    c12g, c13g, c23g = g.c12[gi], g.c13[gi], g.c23[gi]
    P1g, S3g = g.P1[gi], g.S3[gi]

    pair23 = (W2g - w2) * (W3g - w3) - (c23g - w2 * w3)
    pair13 = (W1g - w1) * (W3g - w3) - (c13g - w1 * w3)
    pair12 = (W1g - w1) * (W2g - w2) - (c12g - w1 * w2)

    slot1 = T23[gi] + 0.5 * M23[gi] + 0.5 * (W2g - w2) * S3g + pair23 / 6.0
    slot2 = P1g * S3g + 0.5 * P1g * (W3g - w3) + 0.5 * (W1g - w1) * S3g + pair13 / 6.0
    slot3 = T12[gi] + 0.5 * (W2g - w2) * P1g + 0.5 * M12[gi] + pair12 / 6.0

    inv = np.empty_like(g.order)
    inv[g.order] = np.arange(g.order.shape[0])
    out = []
    for s in (slot1, slot2, slot3):
        s = s[inv]
        out.append(s[:, 0] if g.scalar else s)
    return tuple(out)


def per_subject_product_sums(w: TripleWeights):
    """Bare product analogues of :func:`per_subject_conditional_sums`."""
    if w.n < 3:
        raise ValueError("triple sums need n >= 3")
    w1, scalar = _as_2d(w.w1)
    w2, _ = _as_2d(w.w2)
    w3, _ = _as_2d(w.w3)
    s1 = w1.sum(axis=0)
    s2 = w2.sum(axis=0)
    s3 = w3.sum(axis=0)
    c12 = np.sum(w1 * w2, axis=0)
    c13 = np.sum(w1 * w3, axis=0)
    c23 = np.sum(w2 * w3, axis=0)
    slot1 = (s2 - w2) * (s3 - w3) - (c23 - w2 * w3)
    slot2 = (s1 - w1) * (s3 - w3) - (c13 - w1 * w3)
    slot3 = (s1 - w1) * (s2 - w2) - (c12 - w1 * w2)
    if scalar:
        return slot1[:, 0], slot2[:, 0], slot3[:, 0]
    return slot1, slot2, slot3


# --- direct O(n^3) reference path --------------------------------------------

def _kernel_tensor(t: np.ndarray) -> np.ndarray:
    n = t.shape[0]
    if n > BRUTEFORCE_MAX_N:
        raise ValueError(f"bruteforce path is limited to n <= {BRUTEFORCE_MAX_N}")
    lt = t[:, None] < t[None, :]
    eq = t[:, None] == t[None, :]
    k = (
        1.0 * (lt[:, :, None] & lt[None, :, :])
        + 0.5 * (lt[:, :, None] & eq[None, :, :])
        + 0.5 * (eq[:, :, None] & lt[None, :, :])
        + (1.0 / 6.0) * (eq[:, :, None] & eq[None, :, :])
    )
    idx = np.arange(n)
    k[idx, idx, :] = 0.0
    k[idx, :, idx] = 0.0
    k[:, idx, idx] = 0.0
    return k


def kernel_weighted_sum_bruteforce(t, w: TripleWeights):
    t = _check(t, w)
    k = _kernel_tensor(t)
    if w.w1.ndim == 1:
        return float(np.einsum("ilr,i,l,r->", k, w.w1, w.w2, w.w3))
    return np.einsum("ilr,im,lm,rm->m", k, w.w1, w.w2, w.w3)


def product_sum_bruteforce(w: TripleWeights):
    n = w.n
    if n > BRUTEFORCE_MAX_N:
        raise ValueError(f"bruteforce path is limited to n <= {BRUTEFORCE_MAX_N}")
    if n < 3:
        raise ValueError("triple sums need n >= 3")
    mask = np.ones((n, n, n))
    idx = np.arange(n)
    mask[idx, idx, :] = 0.0
    mask[idx, :, idx] = 0.0
    mask[:, idx, idx] = 0.0
    if w.w1.ndim == 1:
        return float(np.einsum("ilr,i,l,r->", mask, w.w1, w.w2, w.w3))
    return np.einsum("ilr,im,lm,rm->m", mask, w.w1, w.w2, w.w3)


def per_subject_conditional_sums_bruteforce(t, w: TripleWeights):
    t = _check(t, w)
    k = _kernel_tensor(t)
    if w.w1.ndim == 1:
        slot1 = np.einsum("jlr,l,r->j", k, w.w2, w.w3)
        slot2 = np.einsum("ijr,i,r->j", k, w.w1, w.w3)
        slot3 = np.einsum("ilj,i,l->j", k, w.w1, w.w2)
    else:
        slot1 = np.einsum("jlr,lm,rm->jm", k, w.w2, w.w3)
        slot2 = np.einsum("ijr,im,rm->jm", k, w.w1, w.w3)
        slot3 = np.einsum("ilj,im,lm->jm", k, w.w1, w.w2)
    return slot1, slot2, slot3
