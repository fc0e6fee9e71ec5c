"""Bayes risks and excess-risk bounds.

Closed forms for the univariate probit scenario; Monte-Carlo estimates
with plug-in standard errors for any :class:`~augpu.model.Scenario`.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels, rng
from .errors import ContractViolation, DegenerateStratumError
from .model import Estimate, RiskReport

MIN_MC = 1000


def normal_cdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@dataclass(frozen=True)
class ProbitReport:
    a: float
    l_star: float
    l_star_pu: float
    excess: float
    p_s1: float
    p_s0: float

    def to_dict(self):
        return dict(self.__dict__)


def probit_closed_form(a):
    """Exact risks for ``y(x) = Phi(x)``, ``X ~ N(0, 1)``, ``e(x) = 1{x > a}``.

    >>> r = probit_closed_form(0.0)
    >>> r.l_star_pu, r.excess, r.p_s1
    (0.125, 0.125, 0.375)
    """
    phi = normal_cdf(a)
    p_s1 = 0.5 * (1.0 - phi * phi)
    p_s0 = 0.5 * (1.0 + phi * phi)
    if a > 0:
        tail = 0.5 * math.erfc(a / math.sqrt(2.0))  # 1 - Phi(a) without cancellation
        excess = 0.5 * tail * tail
        l_star_pu = 0.25 - excess
    else:
        l_star_pu = 0.5 * phi * phi
        excess = 0.25 - l_star_pu
    return ProbitReport(float(a), 0.25, l_star_pu, excess, p_s1, p_s0)


def _mean_se(v):
    v = np.ascontiguousarray(v)
    n = v.shape[0]
    return Estimate(float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(n)))


def _terms_chunk(scenario, key, start, size):
    x, _, u = scenario.draw(key, size, row0=start)
    y = scenario._posterior(x)
    s = scenario._propensity(x) * y
    t = kernels.risk_terms(y, s, u)
    return np.column_stack([t, s])


def risk_terms(scenario, n_mc, seed, workers=1):
    """Per-draw integrands, one row per Monte-Carlo draw.

    Columns: ``min(y, 1-y)``, ``(1 - s - |w|)/2``, unlabeled-stratum term
    ``1{S=0}(1 - |2 y~ - 1|)/2``, sampled ``S``, ``s 1{y < 1/2}``, ``s``.
    Rows depend only on ``(seed, row index)``, not on ``workers``.
    """
    key = rng.derive_key(seed, "risk")
    spans = list(rng.chunks(n_mc))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda sp: _terms_chunk(scenario, key, *sp), spans))
    else:
        parts = [_terms_chunk(scenario, key, *sp) for sp in spans]
    return np.concatenate(parts)


def mc_bayes_risk(scenario, n_mc, seed=0, workers=1):
    """Monte-Carlo Bayes risks of the feature-only and augmented rules.

    The augmented risk is estimated twice: once through the sampled
    unlabeled stratum, once through ``E|1 + s(X) - 2 y(X)|``; the two should
    agree up to Monte-Carlo error.
    """
    if n_mc < MIN_MC:
        raise ContractViolation(f"n_mc must be >= {MIN_MC}, got {n_mc}")
    t = risk_terms(scenario, n_mc, seed, workers)
    p_s1 = _mean_se(t[:, 5])
    p_s0 = 1.0 - p_s1.estimate
    if p_s0 <= 0.0 or np.all(t[:, 3] == 1.0):
        raise DegenerateStratumError("P(S=0) estimate is zero; the unlabeled stratum is empty")
    l_star = _mean_se(t[:, 0])
    l_pu = _mean_se(t[:, 1])
    l_pu_stratum = _mean_se(t[:, 2])
    excess = _mean_se(t[:, 0] - t[:, 1])
    lower = _mean_se(t[:, 4])
    l_pu_s0 = Estimate(l_pu.estimate / p_s0, l_pu.std_error / p_s0)
    return RiskReport(
        l_star=l_star,
        l_star_pu=l_pu,
        l_star_pu_stratum=l_pu_stratum,
        l_star_pu_s0=l_pu_s0,
        excess=excess,
        p_s1=p_s1,
        bound_lower=lower,
        bound_upper=p_s1,
        n_mc=int(n_mc),
        seed=int(seed),
    )


class ExcessRisk(NamedTuple):
    delta: Estimate
    lower: Estimate
    upper: Estimate
    margin: float

    def holds(self, n_se=3.0):
        """Bounds hold up to ``n_se`` combined standard errors."""
        lo_gap = self.delta.estimate - self.lower.estimate
        hi_gap = self.upper.estimate - self.delta.estimate
        lo_se = math.hypot(self.delta.std_error, self.lower.std_error)
        hi_se = math.hypot(self.delta.std_error, self.upper.std_error)
        return lo_gap >= -n_se * lo_se - 1e-12 and hi_gap >= -n_se * hi_se - 1e-12


def excess_from_report(report):
    d, lo, hi = report.excess, report.bound_lower, report.bound_upper
    return ExcessRisk(d, lo, hi, min(d.estimate - lo.estimate, hi.estimate - d.estimate))


def mc_excess_risk(scenario, n_mc, seed=0, workers=1):
    """Excess risk of the feature-only rule with its lower and upper bounds.

    ``margin`` is the smaller of ``delta - lower`` and ``upper - delta``;
    negative values beyond Monte-Carlo noise indicate a violated bound.
    """
    return excess_from_report(mc_bayes_risk(scenario, n_mc, seed, workers))
