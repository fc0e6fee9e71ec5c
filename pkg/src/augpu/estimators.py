"""Plug-in estimators of ``y(x)`` and ``s(x)``.

* prophets: exact oracles taken from a :class:`~augpu.model.Scenario`;
* ``fit_logistic``: weighted, L2-penalised logistic regression by
  full-batch gradient descent with backtracking;
* ``fit_s_model``: logistic regression of ``S`` on ``X``;
* ``fit_em_pu``: EM over the hidden class label with logistic models for
  the posterior and the propensity (SAR).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_expit

from .errors import DegenerateFitError, DomainError, MonotonicityViolation
from .model import EstimatorPair

PROB_CLAMP = 1e-6
# logit(0.05), logit(0.95): keeps the EM start off the absorbing e = 1 boundary
THETA_BOUND = (-2.944438979166440, 2.944438979166440)


@dataclass(frozen=True)
class LogisticHyper:
    l2: float = 1e-3
    max_iter: int = 500
    tol: float = 1e-6


@dataclass(frozen=True)
class EmHyper:
    l2_y: float = 1e-3
    l2_e: float = 1e-3
    em_iters: int = 30
    inner: LogisticHyper = LogisticHyper()

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        inner = LogisticHyper(**d.pop("inner", {}))
        return cls(inner=inner, **d)


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    l2: float = 0.0
    final_loss: float = float("nan")
    iterations: int = 0
    converged: bool = False

    def decision_function(self, x):
        return np.atleast_2d(x) @ self.weights + self.bias

    def predict(self, x):
        return expit(self.decision_function(x))

    def to_dict(self):
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "l2": self.l2,
            "final_loss": self.final_loss,
            "iterations": self.iterations,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["weights"], dtype=float), float(d["bias"]), float(d.get("l2", 0.0)),
            float(d.get("final_loss", float("nan"))), int(d.get("iterations", 0)),
            bool(d.get("converged", False)),
        )


def logistic_loss_and_grad(params, x, t, w, l2):
    """Weighted cross-entropy ``(1/n) sum w_i CE(t_i, sigmoid(z_i)) + l2/2 |beta|^2``.

    ``params`` is ``[beta..., bias]``; the bias is not penalised. Returns
    ``(loss, grad)``.
    """
    beta, b = params[:-1], params[-1]
    n = x.shape[0]
    z = x @ beta + b
    # CE = softplus(z) - t z = -log_expit(-z) - t z
    loss = float(np.dot(w, -log_expit(-z) - t * z) / n + 0.5 * l2 * np.dot(beta, beta))
    r = w * (expit(z) - t) / n
    grad = np.empty_like(params)
    grad[:-1] = x.T @ r + l2 * beta
    grad[-1] = r.sum()
    return loss, grad


def fit_logistic(features, targets, weights=None, hyper=None, init=None):
    """Minimise the weighted logistic loss by gradient descent.

    Step sizes come from Armijo backtracking, starting each iteration at
    twice the last accepted step. Stops when the max-norm of the gradient
    falls to ``hyper.tol`` or after ``hyper.max_iter`` iterations; the
    outcome is recorded on the returned model rather than raised.
    """
    hyper = hyper or LogisticHyper()
    x = np.asarray(features, dtype=float)
    t = np.asarray(targets, dtype=float)
    w = np.ones(len(t)) if weights is None else np.asarray(weights, dtype=float)
    if x.ndim != 2 or len(t) != x.shape[0] or len(w) != x.shape[0] or x.shape[0] < 1:
        raise DomainError("features, targets and weights have inconsistent shapes")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(t)) and np.all(np.isfinite(w))):
        raise DomainError("non-finite features, targets or weights")
    if np.any(w < 0) or hyper.l2 < 0:
        raise DomainError("weights and l2 must be nonnegative")

    if init is None:
        params = np.zeros(x.shape[1] + 1)
    else:
        params = np.append(np.asarray(init.weights, dtype=float), init.bias)
    loss, grad = logistic_loss_and_grad(params, x, t, w, hyper.l2)
    step = 1.0
    it = 0
    converged = False
    while True:
        if np.max(np.abs(grad)) <= hyper.tol:
            converged = True
            break
        if it >= hyper.max_iter:
            break
        g2 = float(np.dot(grad, grad))
        while True:
            cand = params - step * grad
            c_loss, c_grad = logistic_loss_and_grad(cand, x, t, w, hyper.l2)
            if c_loss <= loss - 0.5 * step * g2:
                break
            step *= 0.5
            if step < 1e-20:
                c_loss = None
                break
        if c_loss is None:
            break  # no decrease possible at machine precision
        params, loss, grad = cand, c_loss, c_grad
        step = min(step * 2.0, 1e6)
        it += 1
    return LogisticModel(params[:-1].copy(), float(params[-1]), hyper.l2, loss, it, converged)


def fit_s_model(observed, hyper=None):
    """Logistic model of ``P(S=1 | X=x)`` from the observable view."""
    x, s = observed
    s = np.asarray(s)
    if s.min() == s.max():
        raise DegenerateFitError("need at least one labeled and one unlabeled record")
    return fit_logistic(x, s.astype(float), hyper=hyper)


@dataclass
class EmPuModel:
    posterior_model: LogisticModel
    propensity_model: LogisticModel
    loglik_trace: list = field(default_factory=list)
    objective_trace: list = field(default_factory=list)

    def predict_y(self, x):
        return self.posterior_model.predict(x)

    def predict_e(self, x):
        return self.propensity_model.predict(x)

    def predict_s(self, x):
        return self.predict_e(x) * self.predict_y(x)

    def to_dict(self):
        return {
            "posterior_model": self.posterior_model.to_dict(),
            "propensity_model": self.propensity_model.to_dict(),
            "loglik_trace": list(self.loglik_trace),
            "objective_trace": list(self.objective_trace),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            LogisticModel.from_dict(d["posterior_model"]),
            LogisticModel.from_dict(d["propensity_model"]),
            list(d.get("loglik_trace", [])), list(d.get("objective_trace", [])),
        )


def observed_loglik(y_hat, e_hat, s):
    p = np.clip(y_hat * e_hat, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(np.sum(np.where(s == 1, np.log(p), np.log1p(-p))))


def _scar_nll_and_grad(params, x, s, l2):
    """Penalised observed NLL per record of ``s(x) = sigmoid(theta) * sigmoid(beta.x + b)``.

    ``params`` is ``[theta, beta..., b]``.
    """
    theta, beta, b = params[0], params[1:-1], params[-1]
    n = len(s)
    z = x @ beta + b
    log_p = log_expit(theta) + log_expit(z)
    p = np.minimum(np.exp(log_p), 1.0 - PROB_CLAMP)
    lab = s == 1
    ll = np.where(lab, log_p, np.log1p(-p))
    # d ll / d log p: 1 on labeled records, -p/(1-p) on unlabeled ones
    dlp = np.where(lab, 1.0, -p / (1.0 - p))
    d_theta = float(np.sum(dlp) * expit(-theta))
    d_z = dlp * expit(-z)
    grad = np.empty_like(params)
    grad[0] = -d_theta / n
    grad[1:-1] = -(x.T @ d_z) / n + l2 * beta
    grad[-1] = -d_z.sum() / n
    return float(-ll.sum() / n + 0.5 * l2 * beta @ beta), grad


def fit_scar_start(x, s, l2=0.0, init=None):
    """Maximum-likelihood fit of the constant-propensity submodel.

    Returns ``(posterior_model, label_frequency)``; used to start EM from a
    point where ``y_hat e_hat`` already matches the labeling rate.
    """
    if init is None:
        init = fit_logistic(x, s.astype(float), hyper=LogisticHyper(l2=l2))
    p0 = np.concatenate([[0.0], init.weights, [init.bias + np.log(2.0)]])
    bounds = [(THETA_BOUND[0], THETA_BOUND[1])] + [(None, None)] * (len(p0) - 1)
    res = minimize(_scar_nll_and_grad, p0, args=(x, s, l2), jac=True, method="L-BFGS-B", bounds=bounds)
    post = LogisticModel(res.x[1:-1].copy(), float(res.x[-1]), l2, float(res.fun), int(res.nit), bool(res.success))
    return post, float(expit(res.x[0]))


def fit_em_pu(observed, hyper=None):
    """EM for ``y(x)`` and ``e(x)`` under SAR labeling.

    E-step: a labeled record is positive; an unlabeled one is positive with
    probability ``y (1 - e) / (1 - y e)``. M-step: refit the posterior model
    on those soft targets and the propensity model on ``S`` weighted by the
    same probabilities, each warm-started from the previous iterate.

    The starting point is the maximum-likelihood fit of the constant
    propensity submodel (see :func:`fit_scar_start`); EM then relaxes the
    propensity to depend on ``x``. ``objective_trace`` holds the
    penalised observed log-likelihood per record, which EM cannot decrease;
    a drop larger than ``1e-6`` raises :class:`MonotonicityViolation`.
    """
    hyper = hyper or EmHyper()
    x, s = observed
    x = np.asarray(x, dtype=float)
    s = np.asarray(s).astype(np.int8)
    n = len(s)
    if s.sum() < 1:
        raise DegenerateFitError("EM needs at least one labeled record")
    y_hyper = LogisticHyper(hyper.l2_y, hyper.inner.max_iter, hyper.inner.tol)
    e_hyper = LogisticHyper(hyper.l2_e, hyper.inner.max_iter, hyper.inner.tol)

    if s.min() == s.max():
        post = LogisticModel(np.zeros(x.shape[1]), 0.0, hyper.l2_y)
        prop = LogisticModel(np.zeros(x.shape[1]), 0.0, hyper.l2_e)
    else:
        post, c0 = fit_scar_start(x, s, hyper.l2_y)
        post.l2 = hyper.l2_y
        c0 = min(max(c0, PROB_CLAMP), 1.0 - PROB_CLAMP)
        prop = LogisticModel(np.zeros(x.shape[1]), float(np.log(c0 / (1.0 - c0))), hyper.l2_e)

    def objective(ll):
        pen = 0.5 * hyper.l2_y * float(post.weights @ post.weights)
        pen += 0.5 * hyper.l2_e * float(prop.weights @ prop.weights)
        return ll / n - pen

    model = EmPuModel(post, prop)
    ll = observed_loglik(post.predict(x), prop.predict(x), s)
    model.loglik_trace.append(ll)
    model.objective_trace.append(objective(ll))
    labeled = s == 1
    for _ in range(hyper.em_iters):
        y_hat = np.clip(post.predict(x), PROB_CLAMP, 1.0 - PROB_CLAMP)
        e_hat = np.clip(prop.predict(x), PROB_CLAMP, 1.0 - PROB_CLAMP)
        q = np.where(labeled, 1.0, y_hat * (1.0 - e_hat) / (1.0 - y_hat * e_hat))
        post = fit_logistic(x, q, hyper=y_hyper, init=post)
        prop = fit_logistic(x, s.astype(float), weights=q, hyper=e_hyper, init=prop)
        ll = observed_loglik(post.predict(x), prop.predict(x), s)
        obj = objective(ll)
        if obj < model.objective_trace[-1] - 1e-6:
            raise MonotonicityViolation(
                f"EM objective decreased from {model.objective_trace[-1]} to {obj}"
            )
        model.loglik_trace.append(ll)
        model.objective_trace.append(obj)
    model.posterior_model = post
    model.propensity_model = prop
    return model


# ---------------------------------------------------------------------------
# estimator pairs


def prophet_pair(scenario):
    return EstimatorPair(scenario._posterior, lambda x: scenario._propensity(x) * scenario._posterior(x), "prophet")


def fitted_pair(em_model, s_model=None):
    """Fitted pair: EM posterior for ``y`` and, if given, a separate ``S`` model
    for ``s`` (otherwise ``e_hat * y_hat`` from EM)."""
    s_hat = em_model.predict_s if s_model is None else s_model.predict
    models = {"em": em_model.to_dict()}
    if s_model is not None:
        models["s_model"] = s_model.to_dict()
    return EstimatorPair(em_model.predict_y, s_hat, "fitted", models)


def semi_prophet_pair(scenario, fitted, replace):
    """Swap exactly one component of ``fitted`` for the exact oracle."""
    if replace == "y":
        return EstimatorPair(scenario._posterior, fitted.s_hat, "semi_prophet_y")
    if replace == "s":
        return EstimatorPair(
            fitted.y_hat, lambda x: scenario._propensity(x) * scenario._posterior(x), "semi_prophet_s"
        )
    raise DomainError(f"replace must be 'y' or 's', got {replace!r}")


def save_pair(pair, path):
    if pair.provenance != "fitted":
        raise DomainError("only fitted estimator pairs can be serialized")
    with open(path, "w") as fh:
        json.dump({"provenance": "fitted", **pair.models}, fh, indent=2)
        fh.write("\n")


def load_pair(path):
    with open(path) as fh:
        d = json.load(fh)
    em = EmPuModel.from_dict(d["em"])
    s_model = LogisticModel.from_dict(d["s_model"]) if "s_model" in d else None
    return fitted_pair(em, s_model)
