"""Domain types and exact probability oracles.

A :class:`Scenario` is a fully specified generative law for ``(X, Y, S)``.
It exposes the class posterior ``y(x) = P(Y=1|X=x)``, the propensity
``e(x) = P(S=1|Y=1, X=x)`` and the labeling posterior ``s(x) = e(x) y(x)``.
Datasets drawn from it carry the hidden class label behind
:meth:`PuDataset.reveal_y`; model fitting only sees :meth:`PuDataset.observed`.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterator, NamedTuple

import numpy as np
from scipy.special import expit, ndtr

from . import rng
from .errors import ContractViolation, DomainError

LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# propensity functions


@dataclass(frozen=True)
class LogisticLinear:
    """``e(x) = sigmoid(gamma . x + intercept)``."""

    gamma: tuple
    intercept: float

    def __call__(self, x):
        return expit(x @ np.asarray(self.gamma, dtype=float) + self.intercept)

    def to_dict(self):
        return {"kind": "logistic_linear", "gamma": list(self.gamma), "intercept": self.intercept}


@dataclass(frozen=True)
class Power:
    """A logistic propensity raised to ``exponent`` (sharpens it towards a step)."""

    base: LogisticLinear
    exponent: float

    def __post_init__(self):
        if not self.exponent >= 1:
            raise ContractViolation(f"Power.exponent must be >= 1, got {self.exponent}")

    def __call__(self, x):
        return self.base(x) ** self.exponent

    def to_dict(self):
        return {"kind": "power", "base": self.base.to_dict(), "exponent": self.exponent}


@dataclass(frozen=True)
class Constant:
    c: float

    def __post_init__(self):
        if not 0.0 <= self.c <= 1.0:
            raise ContractViolation(f"Constant.c must lie in [0, 1], got {self.c}")

    def __call__(self, x):
        return np.full(x.shape[0], float(self.c))

    def to_dict(self):
        return {"kind": "constant", "c": self.c}


@dataclass(frozen=True)
class HardThreshold:
    """Every positive with ``x[axis] > a`` is labeled, none below."""

    a: float
    axis: int = 0

    def __call__(self, x):
        return (x[:, self.axis] > self.a).astype(float)

    def to_dict(self):
        return {"kind": "hard_threshold", "a": self.a, "axis": self.axis}


def propensity_from_dict(d):
    kind = d.get("kind")
    if kind == "logistic_linear":
        return LogisticLinear(tuple(float(g) for g in d["gamma"]), float(d["intercept"]))
    if kind == "power":
        return Power(propensity_from_dict(d["base"]), float(d["exponent"]))
    if kind == "constant":
        return Constant(float(d["c"]))
    if kind == "hard_threshold":
        return HardThreshold(float(d["a"]), int(d.get("axis", 0)))
    raise ContractViolation(f"unknown propensity kind {kind!r}")


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class GaussianLaw:
    """Gaussian with diagonal covariance."""

    mean: tuple
    var: tuple

    def __post_init__(self):
        if len(self.mean) != len(self.var):
            raise ContractViolation("mean and var lengths differ")
        if any(not v > 0 for v in self.var):
            raise ContractViolation("covariance entries must be strictly positive")

    def logpdf(self, x):
        m = np.asarray(self.mean)
        v = np.asarray(self.var)
        return -0.5 * (((x - m) ** 2 / v).sum(axis=1) + np.log(v).sum() + len(v) * LOG_2PI)


def _as_points(x, dims):
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dims:
        raise ContractViolation(f"expected points of dimension {dims}, got shape {np.shape(x)}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation("points must be finite")
    return arr, single


class Scenario:
    """Base class for generative laws of ``(X, Y, S)``.

    Subclasses implement ``_posterior``, ``_propensity`` and ``_draw`` on
    2-D point arrays; the public methods handle shape checks and accept a
    single point as well.
    """

    dims: int
    name: str = "scenario"

    # constructors --------------------------------------------------------
    @staticmethod
    def mixture(class_prior, positive_law, negative_law, propensity, name="mixture"):
        return MixtureScenario(class_prior, positive_law, negative_law, propensity, name)

    @staticmethod
    def direct(posterior, propensity, sampler, dims, name="direct", params=None):
        return DirectScenario(posterior, propensity, sampler, dims, name, params or {})

    @staticmethod
    def probit(a):
        """``y(x) = Phi(x)``, ``X ~ N(0,1)``, labeled iff ``x > a``."""
        return DirectScenario(
            lambda x: ndtr(x[:, 0]), HardThreshold(float(a)), lambda z: z, 1,
            "probit", {"a": float(a)},
        )

    @staticmethod
    def constant(y, e, dims=1):
        """Feature-independent posterior ``y`` and propensity ``e``."""
        yv = float(y)
        return DirectScenario(
            lambda x: np.full(x.shape[0], yv), Constant(float(e)), lambda z: z, dims,
            "constant", {"y": yv, "e": float(e)},
        )

    # oracles -------------------------------------------------------------
    def posterior(self, x):
        pts, single = _as_points(x, self.dims)
        out = self._posterior(pts)
        return float(out[0]) if single else out

    def propensity(self, x):
        pts, single = _as_points(x, self.dims)
        out = self._propensity(pts)
        return float(out[0]) if single else out

    def label_posterior(self, x):
        pts, single = _as_points(x, self.dims)
        out = self._propensity(pts) * self._posterior(pts)
        return float(out[0]) if single else out

    # sampling ------------------------------------------------------------
    @property
    def stride(self):
        # per-record columns: class uniform, label uniform, one normal per dim
        return self.dims + 2

    def draw(self, key, n, row0=0):
        """Draw records ``row0 .. row0+n-1`` of stream ``key``.

        Returns ``(x, y, u_s)``; ``u_s`` is the uniform reserved for the
        label indicator of each record.
        """
        xs, ys, us = [], [], []
        for start, size in rng.chunks(n):
            u = rng.uniforms(key, row0 + start, size, self.stride, 0, 2)
            z = rng.normals(key, row0 + start, size, self.stride, 2, self.dims)
            x, y = self._draw(u[:, 0], z)
            xs.append(x)
            ys.append(y)
            us.append(u[:, 1])
        if not xs:
            return np.empty((0, self.dims)), np.empty(0, dtype=np.int8), np.empty(0)
        return np.concatenate(xs), np.concatenate(ys), np.concatenate(us)

    def fingerprint(self):
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True)
class MixtureScenario(Scenario):
    class_prior: float
    positive_law: GaussianLaw
    negative_law: GaussianLaw
    propensity_spec: object
    name: str = "mixture"

    def __post_init__(self):
        if not 0.0 < self.class_prior < 1.0:
            raise ContractViolation(f"class_prior must lie in (0, 1), got {self.class_prior}")
        if len(self.positive_law.mean) != len(self.negative_law.mean):
            raise ContractViolation("class-conditional laws have different dimensions")

    @property
    def dims(self):
        return len(self.positive_law.mean)

    def log_odds(self, x):
        pi = self.class_prior
        return (self.positive_law.logpdf(x) + math.log(pi)) - (
            self.negative_law.logpdf(x) + math.log1p(-pi)
        )

    def _posterior(self, x):
        lp = self.positive_law.logpdf(x) + math.log(self.class_prior)
        ln = self.negative_law.logpdf(x) + math.log1p(-self.class_prior)
        return np.exp(lp - np.logaddexp(lp, ln))

    def _propensity(self, x):
        return self.propensity_spec(x)

    def _draw(self, u_class, z):
        y = (u_class < self.class_prior).astype(np.int8)
        pos = self.positive_law
        neg = self.negative_law
        x = np.asarray(neg.mean) + np.sqrt(np.asarray(neg.var)) * z
        sel = y == 1
        x[sel] = np.asarray(pos.mean) + np.sqrt(np.asarray(pos.var)) * z[sel]
        return x, y

    def logistic_coefficients(self):
        """``(beta, b)`` with ``y(x) = sigmoid(beta.x + b)``, or ``None`` if the
        class covariances differ (posterior is then not logistic)."""
        if tuple(self.positive_law.var) != tuple(self.negative_law.var):
            return None
        v = np.asarray(self.positive_law.var)
        m1 = np.asarray(self.positive_law.mean)
        m0 = np.asarray(self.negative_law.mean)
        beta = (m1 - m0) / v
        pi = self.class_prior
        b = math.log(pi / (1.0 - pi)) - 0.5 * float((m1 * m1 / v).sum() - (m0 * m0 / v).sum())
        return beta, b

    def to_dict(self):
        return {
            "kind": "mixture",
            "name": self.name,
            "class_prior": self.class_prior,
            "positive_law": {"mean": list(self.positive_law.mean), "var": list(self.positive_law.var)},
            "negative_law": {"mean": list(self.negative_law.mean), "var": list(self.negative_law.var)},
            "propensity": self.propensity_spec.to_dict(),
        }


@dataclass(frozen=True, eq=False)
class DirectScenario(Scenario):
    """Scenario given by function handles.

    ``posterior`` and ``propensity`` map an ``(n, dims)`` array to ``n``
    probabilities; ``sampler`` maps standard normals of the same shape to
    feature vectors. The class label is drawn as ``Y | X ~ Bernoulli(y(X))``.
    """

    posterior_fn: Callable
    propensity_fn: Callable
    sampler: Callable
    dims: int
    name: str = "direct"
    params: dict = field(default_factory=dict)

    def _posterior(self, x):
        return np.asarray(self.posterior_fn(x), dtype=float)

    def _propensity(self, x):
        return np.asarray(self.propensity_fn(x), dtype=float)

    def _draw(self, u_class, z):
        x = np.asarray(self.sampler(z), dtype=float)
        y = (u_class < self._posterior(x)).astype(np.int8)
        return x, y

    def to_dict(self):
        return {"kind": "direct", "name": self.name, "dims": self.dims, "params": self.params}


def exact_posterior(scenario, x):
    """Exact ``y(x) = P(Y=1 | X=x)``."""
    return scenario.posterior(x)


def exact_propensity(scenario, x):
    """Exact ``e(x) = P(S=1 | Y=1, X=x)``."""
    return scenario.propensity(x)


def exact_s(scenario, x):
    """Exact ``s(x) = e(x) y(x) = P(S=1 | X=x)``."""
    return scenario.label_posterior(x)


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class Sample:
    x: tuple
    y: int
    s: int

    def __post_init__(self):
        if self.s == 1 and self.y != 1:
            raise ContractViolation("a labeled record must be positive")


@dataclass(frozen=True)
class DatasetMeta:
    scenario_fingerprint: str
    target_c: float
    achieved_c: float
    seed: int
    n: int
    dims: int
    strategy: dict = field(default_factory=dict)


class ObservedView(NamedTuple):
    """What a learner may see: features and label indicators."""

    x: np.ndarray
    s: np.ndarray


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def label_frequency(y, s):
    n_pos = int(np.sum(y == 1))
    return float(np.sum(s == 1)) / n_pos if n_pos else float("nan")


class PuDataset:
    """Finite sample of ``(x, y, s)`` records.

    The class labels are only reachable through :meth:`reveal_y`, which
    evaluation code uses; learners take :meth:`observed`.
    """

    def __init__(self, x, y, s, meta):
        x = _frozen(x, float)
        y = _frozen(y, np.int8)
        s = _frozen(s, np.int8)
        if x.ndim != 2 or len(y) != len(x) or len(s) != len(x):
            raise ContractViolation("x, y, s have inconsistent shapes")
        if np.any((s == 1) & (y != 1)):
            raise ContractViolation("labeled records must be positive")
        self.x = x
        self._y = y
        self.s = s
        self.meta = meta

    def __len__(self):
        return len(self.x)

    @property
    def dims(self):
        return self.x.shape[1]

    def observed(self):
        return ObservedView(self.x, self.s)

    def reveal_y(self):
        return self._y

    @property
    def achieved_c(self):
        return label_frequency(self._y, self.s)

    def records(self) -> Iterator[Sample]:
        for xi, yi, si in zip(self.x.tolist(), self._y.tolist(), self.s.tolist()):
            yield Sample(tuple(xi), yi, si)

    # serialization -------------------------------------------------------
    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x_{j}" for j in range(self.dims)] + ["y", "s"])
            for xi, yi, si in zip(self.x.tolist(), self._y.tolist(), self.s.tolist()):
                w.writerow([repr(v) for v in xi] + [yi, si])

    def write(self, csv_path):
        """Write the CSV and its JSON metadata sidecar (same stem, ``.json``)."""
        csv_path = Path(csv_path)
        self.to_csv(csv_path)
        sidecar = csv_path.with_suffix(".json")
        sidecar.write_text(json.dumps(asdict(self.meta), indent=2, sort_keys=True) + "\n")
        return csv_path, sidecar

    @classmethod
    def read(cls, csv_path):
        csv_path = Path(csv_path)
        with csv_path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[-2:] != ["y", "s"]:
                raise ContractViolation(f"{csv_path}: header must end with y,s")
            rows = list(reader)
        p = len(header) - 2
        x = np.array([[float(v) for v in r[:p]] for r in rows], dtype=float).reshape(len(rows), p)
        y = np.array([int(r[p]) for r in rows], dtype=np.int8)
        s = np.array([int(r[p + 1]) for r in rows], dtype=np.int8)
        sidecar = csv_path.with_suffix(".json")
        if sidecar.exists():
            meta = DatasetMeta(**json.loads(sidecar.read_text()))
        else:
            meta = DatasetMeta("", float("nan"), label_frequency(y, s), 0, len(rows), p)
        return cls(x, y, s, meta)


# ---------------------------------------------------------------------------
# estimator pairs and risk reports

PROVENANCES = ("prophet", "semi_prophet_y", "semi_prophet_s", "fitted")


@dataclass(frozen=True, eq=False)
class EstimatorPair:
    """Plug-in estimates of ``y(x)`` and ``s(x)`` consumed by the decision rules."""

    y_hat: Callable
    s_hat: Callable
    provenance: str
    models: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ContractViolation(f"unknown provenance {self.provenance!r}")

    def predict_y(self, x):
        return np.clip(np.asarray(self.y_hat(np.atleast_2d(x)), dtype=float), 0.0, 1.0)

    def predict_s(self, x):
        return np.clip(np.asarray(self.s_hat(np.atleast_2d(x)), dtype=float), 0.0, 1.0)


class Estimate(NamedTuple):
    estimate: float
    std_error: float


@dataclass(frozen=True)
class RiskReport:
    """Monte-Carlo estimates of the Bayes risks and excess-risk bounds.

    ``l_star_pu`` uses the ``E|w(X)|`` form, ``l_star_pu_stratum`` the
    sampled-``S`` form over the unlabeled stratum; ``l_star_pu_s0`` is the
    Bayes risk conditional on ``S = 0``.
    """

    l_star: Estimate
    l_star_pu: Estimate
    l_star_pu_stratum: Estimate
    l_star_pu_s0: Estimate
    excess: Estimate
    p_s1: Estimate
    bound_lower: Estimate
    bound_upper: Estimate
    n_mc: int
    seed: int

    def __post_init__(self):
        if self.bound_lower.estimate > self.bound_upper.estimate:
            raise DomainError("lower bound exceeds upper bound")

    def to_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v._asdict() if isinstance(v, Estimate) else v
        return out
