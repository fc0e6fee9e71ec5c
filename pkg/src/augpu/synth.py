"""Synthetic benchmark scenarios and PU dataset sampling.

Four variants over a two-component Gaussian mixture with class prior 1/2:
negatives ``N(0, I)``, positives ``N(mu, I)`` (``N(mu, diag(1, 2, 1, 2, ...))``
for V3). Propensities:

* V1, V3: ``sigmoid(gamma . x + r)``
* V2: ``sigmoid(gamma . x + r) ** 10``
* SCAR: constant ``c``

The intercept ``r`` is calibrated so that ``E[e(X) | Y=1]`` hits the target
label frequency.
"""
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit

from . import rng
from .errors import CalibrationError, ConfigError, ContractViolation, LabelingError
from .model import (
    Constant,
    DatasetMeta,
    GaussianLaw,
    LogisticLinear,
    MixtureScenario,
    Power,
    PuDataset,
)

VARIANTS = ("V1", "V2", "V3", "SCAR")
MAX_DOUBLINGS = 60


@dataclass(frozen=True)
class VariantSpec:
    variant: str
    target_c: float
    dims: int = 20
    mu_per_coordinate: float = 0.25
    gamma: tuple = None
    power: float = 10.0
    calibration_draws: int = 100_000
    calibration_tol: float = 1e-6

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}", field="variant")
        if not isinstance(self.dims, int) or self.dims < 1:
            raise ConfigError(f"dims must be a positive integer, got {self.dims!r}", field="dims")
        c = self.target_c
        if not isinstance(c, (int, float)) or not math.isfinite(c):
            raise ConfigError(f"target_c must be a number, got {c!r}", field="target_c")
        if self.variant == "SCAR":
            if not 0.0 <= c <= 1.0:
                raise ConfigError(f"target_c must lie in [0, 1] for SCAR, got {c}", field="target_c")
        elif not 0.0 < c < 1.0:
            raise ConfigError(f"target_c must lie in (0, 1) for {self.variant}, got {c}", field="target_c")
        if self.gamma is not None:
            object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
            if len(self.gamma) != self.dims:
                raise ConfigError("gamma length must equal dims", field="gamma")
        if not self.power >= 1:
            raise ConfigError(f"power must be >= 1, got {self.power}", field="power")
        if int(self.calibration_draws) < 1:
            raise ConfigError("calibration_draws must be positive", field="calibration_draws")

    @property
    def gamma_vector(self):
        if self.gamma is None:
            return np.full(self.dims, 0.5)
        return np.asarray(self.gamma, dtype=float)

    @property
    def exponent(self):
        return self.power if self.variant == "V2" else 1.0

    def positive_law(self):
        mean = (float(self.mu_per_coordinate),) * self.dims
        if self.variant == "V3":
            var = tuple(1.0 if j % 2 == 0 else 2.0 for j in range(self.dims))
        else:
            var = (1.0,) * self.dims
        return GaussianLaw(mean, var)

    def negative_law(self):
        return GaussianLaw((0.0,) * self.dims, (1.0,) * self.dims)

    def to_dict(self):
        d = asdict(self)
        d["gamma"] = None if self.gamma is None else list(self.gamma)
        return d

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("variant spec must be a JSON object")
        known = set(cls.__dataclass_fields__)
        for k in d:
            if k not in known:
                raise ConfigError(f"unknown key {k!r}", field=k)
        for req in ("variant", "target_c"):
            if req not in d:
                raise ConfigError("missing required key", field=req)
        return cls(**d)


@dataclass(frozen=True)
class LabelingStrategy:
    """How positives get labeled in a sampled dataset.

    ``probabilistic`` draws ``S | Y=1, X ~ Bernoulli(e(X))``.
    ``top_quantile`` labels the ``floor(fraction * #positives)`` positives with
    the largest ``direction . x``; ``direction`` defaults to all ones and
    ``fraction`` to the dataset's target label frequency.
    """

    mode: str = "probabilistic"
    direction: tuple = None
    fraction: float = None

    def __post_init__(self):
        if self.mode not in ("probabilistic", "top_quantile"):
            raise ConfigError(f"unknown labeling mode {self.mode!r}", field="mode")
        if self.fraction is not None and not 0.0 <= self.fraction <= 1.0:
            raise ConfigError("fraction must lie in [0, 1]", field="fraction")
        if self.direction is not None:
            object.__setattr__(self, "direction", tuple(float(v) for v in self.direction))

    def to_dict(self):
        return {
            "mode": self.mode,
            "direction": None if self.direction is None else list(self.direction),
            "fraction": self.fraction,
        }

    @classmethod
    def from_dict(cls, d):
        if d is None:
            return cls()
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc), field="labeling") from None


def _mean_propensity(g, r, exponent):
    e = expit(g + r)
    if exponent != 1.0:
        e = e**exponent
    return float(np.mean(e))


def calibrate_intercept(variant, mc_positives=None, seed=0, tol=None):
    """Intercept ``r`` making the Monte-Carlo label frequency match ``target_c``.

    ``E[e(X) | Y=1]`` is strictly increasing in ``r``, so the root is found by
    bisection on a bracket that is doubled outward until it changes sign.
    The positives are drawn once, so the objective is deterministic.
    """
    if variant.variant == "SCAR":
        raise ContractViolation("SCAR propensity is constant; nothing to calibrate")
    m = int(mc_positives or variant.calibration_draws)
    tol = variant.calibration_tol if tol is None else tol
    target = variant.target_c
    if not 0.0 < target < 1.0:
        raise ContractViolation(f"target_c must lie in (0, 1), got {target}")

    law = variant.positive_law()
    key = rng.derive_key(seed, "calibrate", variant.variant)
    z = rng.normals(key, 0, m, variant.dims, 0, variant.dims)
    x = np.asarray(law.mean) + np.sqrt(np.asarray(law.var)) * z
    g = x @ variant.gamma_vector
    exponent = variant.exponent

    def f(r):
        return _mean_propensity(g, r, exponent) - target

    lo, hi = -1.0, 1.0
    f_lo, f_hi = f(lo), f(hi)
    doublings = 0
    while f_lo > 0 or f_hi < 0:
        if doublings >= MAX_DOUBLINGS:
            raise CalibrationError(
                f"could not bracket label frequency {target} after {MAX_DOUBLINGS} doublings",
                bracket=(lo, hi),
            )
        if f_lo > 0:
            lo *= 2.0
            f_lo = f(lo)
        if f_hi < 0:
            hi *= 2.0
            f_hi = f(hi)
        doublings += 1

    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) <= tol or hi - lo <= 1e-13 * max(1.0, abs(mid)):
            break
        if fm < 0:
            lo = mid
        else:
            hi = mid
    return mid


def build_scenario(variant, seed=0):
    """Mixture scenario for a variant, with calibrated propensity."""
    gamma = tuple(variant.gamma_vector.tolist())
    if variant.variant == "SCAR":
        prop = Constant(float(variant.target_c))
    else:
        r = calibrate_intercept(variant, seed=seed)
        prop = LogisticLinear(gamma, r)
        if variant.variant == "V2":
            prop = Power(prop, variant.power)
    return MixtureScenario(0.5, variant.positive_law(), variant.negative_law(), prop, name=variant.variant)


def sample_dataset(scenario, n, seed=0, strategy=None, target_c=float("nan")):
    """Draw ``n`` iid records ``(x, y, s)`` and label them per ``strategy``."""
    if n < 1:
        raise ContractViolation(f"n must be >= 1, got {n}")
    strategy = strategy or LabelingStrategy()
    key = rng.derive_key(seed, "sample")
    x, y, u = scenario.draw(key, n)
    s = np.zeros(n, dtype=np.int8)
    pos = np.flatnonzero(y == 1)

    if strategy.mode == "probabilistic":
        if len(pos):
            e = scenario.propensity(x[pos])
            s[pos] = u[pos] < e
    else:
        if len(pos) == 0:
            raise LabelingError("top-quantile labeling needs at least one positive")
        fraction = strategy.fraction if strategy.fraction is not None else target_c
        if not 0.0 <= fraction <= 1.0:
            raise LabelingError(f"top-quantile fraction must lie in [0, 1], got {fraction}")
        direction = (
            np.ones(scenario.dims) if strategy.direction is None else np.asarray(strategy.direction)
        )
        score = x[pos] @ direction
        k = math.floor(fraction * len(pos))
        order = np.lexsort((pos, -score))
        s[pos[order[:k]]] = 1

    n_pos = len(pos)
    achieved = float(s.sum()) / n_pos if n_pos else float("nan")
    meta = DatasetMeta(
        scenario_fingerprint=scenario.fingerprint(),
        target_c=float(target_c),
        achieved_c=achieved,
        seed=int(seed),
        n=int(n),
        dims=int(scenario.dims),
        strategy=strategy.to_dict(),
    )
    return PuDataset(x, y, s, meta)
