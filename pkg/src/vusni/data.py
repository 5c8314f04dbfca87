"""Subject records, dataset container, CSV ingestion and standardization.

A dataset holds one record per subject: a continuous test result ``t``, a
covariate vector ``a`` of fixed dimension ``p``, a verification flag ``v``
and, for verified subjects only, the disease class ``d`` in {1, 2, 3}.

CSV layout: header row with columns ``t, a1..ap, v, d``; the ``d`` field is
the empty string for unverified subjects.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    MalformedRow,
    NonFiniteValue,
    VerifiedLabelMismatch,
    ZeroVariance,
)


@dataclass(frozen=True)
class SubjectRecord:
    """One subject: test result, covariates, verification flag, class label."""

    t: float
    a: tuple[float, ...]
    v: int
    d: Optional[int] = None

    def __post_init__(self):
        if self.v not in (0, 1):
            raise ValueError(f"v must be 0 or 1, got {self.v!r}")
        if self.v == 1 and self.d is None:
            raise VerifiedLabelMismatch("verified subject without disease label")
        if self.v == 0 and self.d is not None:
            raise VerifiedLabelMismatch("disease label present for unverified subject")
        if self.d is not None and self.d not in (1, 2, 3):
            raise ValueError(f"d must be in {{1,2,3}}, got {self.d!r}")
        if not math.isfinite(self.t) or not all(math.isfinite(x) for x in self.a):
            raise NonFiniteValue("t and covariates must be finite")


class Dataset:
    """Immutable sequence of subject records with cached numpy views.

    The container accepts any n >= 1; operations that need triples of
    subjects (everything VUS-related) check n >= 3 themselves.
    """

    def __init__(self, records: Sequence[SubjectRecord]):
        records = tuple(records)
        if not records:
            raise ValueError("dataset must contain at least one record")
        p = len(records[0].a)
        if any(len(r.a) != p for r in records):
            raise ValueError("all records must share the covariate dimension")
        self._records = records
        self._p = p
        self._t = np.array([r.t for r in records], dtype=float)
        self._a = np.array([r.a for r in records], dtype=float).reshape(len(records), p)
        self._v = np.array([r.v for r in records], dtype=int)
        self._d = np.array([0 if r.d is None else r.d for r in records], dtype=int)
        onehot = np.zeros((len(records), 3))
        for k in (1, 2, 3):
            onehot[self._d == k, k - 1] = 1.0
        self._d_onehot = onehot
        for arr in (self._t, self._a, self._v, self._d, self._d_onehot):
            arr.setflags(write=False)

    @property
    def records(self) -> tuple[SubjectRecord, ...]:
        return self._records

    @property
    def p(self) -> int:
        return self._p

    @property
    def n(self) -> int:
        return len(self._records)

    @property
    def t(self) -> np.ndarray:
        return self._t

    @property
    def a(self) -> np.ndarray:
        return self._a

    @property
    def v(self) -> np.ndarray:
        return self._v

    @property
    def d(self) -> np.ndarray:
        """Class labels, 0 where unverified."""
        return self._d

    @property
    def d_onehot(self) -> np.ndarray:
        """n x 3 indicator matrix; all-zero rows for unverified subjects."""
        return self._d_onehot

    def __len__(self) -> int:
        return self.n

    def __iter__(self):
        return iter(self._records)

    @classmethod
    def from_arrays(cls, t, a, v, d) -> "Dataset":
        """Build from parallel arrays; entries of ``d`` are ignored where v=0."""
        t = np.asarray(t, dtype=float)
        a = np.asarray(a, dtype=float)
        if a.ndim == 1:
            a = a.reshape(-1, 1)
        v = np.asarray(v, dtype=int)
        d = np.asarray(d, dtype=int)
        recs = [
            SubjectRecord(
                t=float(t[i]),
                a=tuple(float(x) for x in a[i]),
                v=int(v[i]),
                d=int(d[i]) if v[i] == 1 else None,
            )
            for i in range(len(t))
        ]
        return cls(recs)

    def save_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"a{j + 1}" for j in range(self.p)] + ["v", "d"])
            for r in self._records:
                writer.writerow(
                    [repr(r.t)]
                    + [repr(x) for x in r.a]
                    + [r.v, "" if r.d is None else r.d]
                )


def _parse_float(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise MalformedRow(line, f"column {column!r}: cannot parse {text!r} as a number")
    if not math.isfinite(value):
        raise NonFiniteValue(f"line {line}: column {column!r} is not finite")
    return value


def load_csv(path, schema: Optional[dict] = None) -> Dataset:
    """Read a dataset from CSV.

    ``schema`` optionally maps the canonical column names to the names used
    in the file: keys ``t``, ``v``, ``d`` (strings) and ``a`` (list of
    covariate column names, in order). Without a schema the covariates are
    the columns named ``a1..ap``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow(1, "empty file, header row required")
        header = [h.strip() for h in header]
        schema = schema or {}
        t_col = schema.get("t", "t")
        v_col = schema.get("v", "v")
        d_col = schema.get("d", "d")
        if "a" in schema:
            a_cols = list(schema["a"])
        else:
            a_cols = sorted(
                (h for h in header if h.startswith("a") and h[1:].isdigit()),
                key=lambda h: int(h[1:]),
            )
        for name in [t_col, v_col, d_col, *a_cols]:
            if name not in header:
                raise MalformedRow(1, f"missing column {name!r}")
        idx = {name: header.index(name) for name in [t_col, v_col, d_col, *a_cols]}

        records = []
        for line, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise MalformedRow(line, f"expected {len(header)} fields, got {len(row)}")
            t = _parse_float(row[idx[t_col]].strip(), line, t_col)
            a = tuple(_parse_float(row[idx[c]].strip(), line, c) for c in a_cols)
            v_text = row[idx[v_col]].strip()
            if v_text not in ("0", "1"):
                raise MalformedRow(line, f"column {v_col!r}: v must be 0 or 1, got {v_text!r}")
            v = int(v_text)
            d_text = row[idx[d_col]].strip()
            if d_text == "":
                d = None
            elif d_text in ("1", "2", "3"):
                d = int(d_text)
            else:
                raise MalformedRow(line, f"column {d_col!r}: d must be empty or in {{1,2,3}}, got {d_text!r}")
            try:
                records.append(SubjectRecord(t=t, a=a, v=v, d=d))
            except VerifiedLabelMismatch as exc:
                raise VerifiedLabelMismatch(f"line {line}: {exc}") from None
    return Dataset(records)


@dataclass(frozen=True)
class ColumnTransform:
    name: str
    mean: float
    sd: float


@dataclass(frozen=True)
class Standardization:
    """Per-column location/scale used by :func:`standardize`."""

    columns: tuple[ColumnTransform, ...]

    def to_dict(self) -> dict:
        return {c.name: {"mean": c.mean, "sd": c.sd} for c in self.columns}


def standardize(data: Dataset) -> tuple[Dataset, Standardization]:
    """Center and scale ``t`` and every covariate column to mean 0, sd 1.

    Sample standard deviations use the n-1 divisor. Raises
    :class:`ZeroVariance` for any constant column.
    """
    if data.n < 2:
        raise ValueError("standardize needs at least two records")
    names = ["t"] + [f"a{j + 1}" for j in range(data.p)]
    cols = [data.t] + [data.a[:, j] for j in range(data.p)]
    transforms = []
    scaled = []
    for name, col in zip(names, cols):
        mean = float(np.mean(col))
        sd = float(np.std(col, ddof=1))
        if sd <= 0.0:
            raise ZeroVariance(f"column {name!r} has zero variance")
        transforms.append(ColumnTransform(name=name, mean=mean, sd=sd))
        scaled.append((col - mean) / sd)
    t_new = scaled[0]
    a_new = np.column_stack(scaled[1:]) if data.p > 0 else np.empty((data.n, 0))
    records = [
        SubjectRecord(
            t=float(t_new[i]),
            a=tuple(float(x) for x in a_new[i]),
            v=int(data.v[i]),
            d=int(data.d[i]) if data.v[i] == 1 else None,
        )
        for i in range(data.n)
    ]
    return Dataset(records), Standardization(columns=tuple(transforms))


class ParamVector:
    """Joint model parameters (lambda1, lambda2, tau_pi, tau_rho1, tau_rho2).

    ``tau_pi`` and each ``tau_rho`` hold (intercept, t-coefficient, then one
    coefficient per covariate), so the flat dimension is 8 + 3p. The flat
    layout keeps that block order.
    """

    __slots__ = ("lam", "tau_pi", "tau_rho1", "tau_rho2")

    def __init__(self, lam, tau_pi, tau_rho1, tau_rho2):
        lam = np.asarray(lam, dtype=float)
        tau_pi = np.asarray(tau_pi, dtype=float)
        tau_rho1 = np.asarray(tau_rho1, dtype=float)
        tau_rho2 = np.asarray(tau_rho2, dtype=float)
        if lam.shape != (2,):
            raise ValueError("lambda must have two components")
        if not (tau_pi.shape == tau_rho1.shape == tau_rho2.shape) or tau_pi.ndim != 1:
            raise ValueError("tau blocks must be 1-d and share their length")
        if tau_pi.shape[0] < 2:
            raise ValueError("tau blocks need intercept and t-coefficient")
        full = np.concatenate([lam, tau_pi, tau_rho1, tau_rho2])
        if not np.all(np.isfinite(full)):
            raise NonFiniteValue("parameter vector must be finite")
        for arr in (lam, tau_pi, tau_rho1, tau_rho2):
            arr.setflags(write=False)
        self.lam = lam
        self.tau_pi = tau_pi
        self.tau_rho1 = tau_rho1
        self.tau_rho2 = tau_rho2

    @property
    def p(self) -> int:
        return self.tau_pi.shape[0] - 2

    @property
    def dim(self) -> int:
        return 8 + 3 * self.p

    def to_flat(self) -> np.ndarray:
        return np.concatenate([self.lam, self.tau_pi, self.tau_rho1, self.tau_rho2])

    @classmethod
    def from_flat(cls, flat, p: int) -> "ParamVector":
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (8 + 3 * p,):
            raise ValueError(f"expected length {8 + 3 * p}, got {flat.shape}")
        m = 2 + p
        return cls(
            lam=flat[0:2],
            tau_pi=flat[2:2 + m],
            tau_rho1=flat[2 + m:2 + 2 * m],
            tau_rho2=flat[2 + 2 * m:2 + 3 * m],
        )

    @classmethod
    def zeros(cls, p: int) -> "ParamVector":
        return cls.from_flat(np.zeros(8 + 3 * p), p)

    def to_labeled(self) -> dict:
        return {
            "lambda1": float(self.lam[0]),
            "lambda2": float(self.lam[1]),
            "tau_pi": [float(x) for x in self.tau_pi],
            "tau_rho1": [float(x) for x in self.tau_rho1],
            "tau_rho2": [float(x) for x in self.tau_rho2],
        }

    @classmethod
    def from_labeled(cls, obj: dict) -> "ParamVector":
        return cls(
            lam=[obj["lambda1"], obj["lambda2"]],
            tau_pi=obj["tau_pi"],
            tau_rho1=obj["tau_rho1"],
            tau_rho2=obj["tau_rho2"],
        )

    def block_names(self) -> list[str]:
        """Flat-order coordinate names, e.g. lambda1, tau_pi1, tau_rho12."""
        names = ["lambda1", "lambda2"]
        for block in ("tau_pi", "tau_rho1", "tau_rho2"):
            prefix = block if block == "tau_pi" else block[:-1]
            suffix = "" if block == "tau_pi" else block[-1]
            names += [f"{prefix}{j + 1}{suffix}" for j in range(2 + self.p)]
        return names

    def __eq__(self, other):
        if not isinstance(other, ParamVector):
            return NotImplemented
        return self.p == other.p and np.array_equal(self.to_flat(), other.to_flat())

    def __repr__(self):
        return (
            f"ParamVector(lam={self.lam.tolist()}, tau_pi={self.tau_pi.tolist()}, "
            f"tau_rho1={self.tau_rho1.tolist()}, tau_rho2={self.tau_rho2.tolist()})"
        )
