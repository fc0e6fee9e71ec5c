"""U-metrics, the (variant x c x method x seed) experiment grid, and aggregation."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng
from .errors import AugPUError, ConfigError, DegenerateStratumError, DomainError
from .estimators import (
    EmHyper,
    LogisticHyper,
    fit_em_pu,
    fit_s_model,
    fitted_pair,
    prophet_pair,
    semi_prophet_pair,
)
from .rules import decide_db_pu_batch, decide_naive_batch
from .synth import LabelingStrategy, VariantSpec, build_scenario, sample_dataset

METHODS = ("SProphet", "YProphet", "Fitted_dB", "Fitted_dBPU", "SemiProphetY", "SemiProphetS")
FITTED_METHODS = {"Fitted_dB", "Fitted_dBPU", "SemiProphetY", "SemiProphetS"}
# augmented-rule method -> naive method sharing its y estimate
COUNTERPART = {
    "SProphet": "YProphet",
    "SemiProphetY": "YProphet",
    "Fitted_dBPU": "Fitted_dB",
    "SemiProphetS": "Fitted_dB",
}
METRICS = ("u_accuracy", "u_balanced_accuracy", "u_positives")
DEFAULT_C_GRID = (0.02, 0.1, 0.3, 0.5, 0.7, 0.9)


def _stratum(predictions, dataset):
    pred = np.asarray(predictions)
    if pred.shape != dataset.s.shape:
        raise DomainError("one prediction per record is required")
    unl = dataset.s == 0
    if not unl.any():
        raise DegenerateStratumError("no unlabeled records")
    return pred[unl], dataset.reveal_y()[unl]


def u_accuracy(predictions, dataset):
    """Accuracy over the unlabeled (``s = 0``) records only."""
    pred, y = _stratum(predictions, dataset)
    return float(np.mean(pred == y))


def u_balanced_accuracy(predictions, dataset):
    """Mean of the per-class recalls over the unlabeled records."""
    pred, y = _stratum(predictions, dataset)
    pos = y == 1
    if pos.all() or not pos.any():
        raise DegenerateStratumError("unlabeled stratum contains a single class")
    tpr = float(np.mean(pred[pos] == 1))
    tnr = float(np.mean(pred[~pos] == 0))
    return 0.5 * (tpr + tnr)


def binomial_win_test(wins, trials):
    """One-sided exact p-value ``P(Bin(trials, 1/2) >= wins)``.

    Ties are expected to be excluded from ``trials`` already; ``trials = 0``
    gives ``None`` (no test possible).

    >>> binomial_win_test(5, 5)
    0.03125
    """
    if trials == 0:
        return None
    if trials < 0 or wins < 0 or wins > trials:
        raise DomainError(f"need 0 <= wins <= trials, got wins={wins}, trials={trials}")
    tail = sum(math.comb(trials, k) for k in range(wins, trials + 1))
    return tail / 2**trials


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExperimentConfig:
    variants: tuple = ("V1", "V2", "V3", "SCAR")
    c_grid: tuple = DEFAULT_C_GRID
    methods: tuple = METHODS
    seeds: tuple = tuple(range(10))
    n_train: int = 5000
    n_test: int = 10000
    labeling: dict = None
    em: dict = None
    s_model: dict = None

    def __post_init__(self):
        for name in ("variants", "c_grid", "methods", "seeds"):
            v = getattr(self, name)
            if isinstance(v, (str, bytes)) or not hasattr(v, "__len__"):
                raise ConfigError("must be a list", field=name)
            object.__setattr__(self, name, tuple(v))
            if not getattr(self, name):
                raise ConfigError("must be nonempty", field=name)
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct", field="seeds")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; expected one of {METHODS}", field="methods")
        for name in ("n_train", "n_test"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                raise ConfigError("must be a positive integer", field=name)
        # validate every (variant, c) combination up front
        for c in self.c_grid:
            for v in self.variants:
                self.variant_spec(v, c)
        LabelingStrategy.from_dict(self.labeling)
        self.em_hyper()
        self.s_hyper()

    @staticmethod
    def variant_label(v):
        return v if isinstance(v, str) else v.get("label", v["variant"])

    def variant_spec(self, v, c):
        d = {"variant": v} if isinstance(v, str) else {k: x for k, x in v.items() if k != "label"}
        return VariantSpec.from_dict({**d, "target_c": c})

    def em_hyper(self):
        try:
            return EmHyper.from_dict(self.em)
        except TypeError as exc:
            raise ConfigError(str(exc), field="em") from None

    def s_hyper(self):
        try:
            return LogisticHyper(**(self.s_model or {}))
        except TypeError as exc:
            raise ConfigError(str(exc), field="s_model") from None

    def to_dict(self):
        d = asdict(self)
        for k in ("variants", "c_grid", "methods", "seeds"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("experiment config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        for k in d:
            if k not in known:
                raise ConfigError(f"unknown key {k!r}", field=k)
        return cls(**d)


# ---------------------------------------------------------------------------
# running


def _predict(method, pairs, x, s):
    if method == "YProphet" or method == "Fitted_dB":
        pair = pairs["prophet" if method == "YProphet" else "fitted"]
        return decide_naive_batch(pair.predict_y(x), s)
    pair = pairs[{"SProphet": "prophet", "Fitted_dBPU": "fitted",
                  "SemiProphetY": "semi_y", "SemiProphetS": "semi_s"}[method]]
    return decide_db_pu_batch(pair.predict_y(x), pair.predict_s(x), s)


def run_cell(config, variant_index, c, seed):
    """One (variant, c, seed) cell: returns ``{method: {metric: value}}`` and errors."""
    v = config.variants[variant_index]
    errors = []
    out = {}
    try:
        spec = config.variant_spec(v, c)
        scenario = build_scenario(spec, seed=seed)
        strategy = LabelingStrategy.from_dict(config.labeling)
        test = sample_dataset(scenario, config.n_test, rng.derive_key(seed, "test"), strategy, c)
        pairs = {"prophet": prophet_pair(scenario)}
        if FITTED_METHODS & set(config.methods):
            train = sample_dataset(scenario, config.n_train, rng.derive_key(seed, "train"), strategy, c)
            em = fit_em_pu(train.observed(), config.em_hyper())
            s_model = fit_s_model(train.observed(), config.s_hyper())
            fitted = fitted_pair(em, s_model)
            pairs["fitted"] = fitted
            pairs["semi_y"] = semi_prophet_pair(scenario, fitted, "y")
            pairs["semi_s"] = semi_prophet_pair(scenario, fitted, "s")
    except AugPUError as exc:
        return out, [{"variant": config.variant_label(v), "c": c, "seed": seed, "error": f"{type(exc).__name__}: {exc}"}]

    for method in config.methods:
        pred = _predict(method, pairs, test.x, test.s)
        vals = {"u_positives": float(np.sum(pred[test.s == 0]))}
        for name, fn in (("u_accuracy", u_accuracy), ("u_balanced_accuracy", u_balanced_accuracy)):
            try:
                vals[name] = fn(pred, test)
            except AugPUError as exc:
                vals[name] = float("nan")
                errors.append({"variant": config.variant_label(v), "c": c, "seed": seed,
                               "method": method, "metric": name, "error": f"{type(exc).__name__}: {exc}"})
        out[method] = vals
    return out, errors


def _run_task(args):
    config, vi, c, seed = args
    return run_cell(config, vi, c, seed)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    values: dict = field(default_factory=dict)  # (variant, c, method, metric) -> [per-seed]
    seeds_done: dict = field(default_factory=dict)  # (variant, c) -> [seed]
    errors: list = field(default_factory=list)

    # aggregation ---------------------------------------------------------
    def cell(self, variant, c, method, metric):
        vals = np.asarray(self.values.get((variant, c, method, metric), []), dtype=float)
        vals = vals[~np.isnan(vals)]
        n = len(vals)
        mean = float(np.mean(vals)) if n else float("nan")
        sd = float(np.std(vals, ddof=1)) if n > 1 else float("nan")
        se = sd / math.sqrt(n) if n > 1 else float("nan")
        return {"mean": mean, "std_dev": sd, "std_error": se, "n": n}

    def cells(self):
        cfg = self.config
        for v in cfg.variants:
            label = cfg.variant_label(v)
            for c in cfg.c_grid:
                for m in cfg.methods:
                    yield label, c, m

    def win_tests(self, metric="u_accuracy"):
        """Cell-mean comparisons of each augmented method against its naive counterpart."""
        cfg = self.config
        out = []
        for a, b in COUNTERPART.items():
            if a not in cfg.methods or b not in cfg.methods:
                continue
            wins = losses = ties = 0
            for v in cfg.variants:
                label = cfg.variant_label(v)
                for c in cfg.c_grid:
                    ma = self.cell(label, c, a, metric)["mean"]
                    mb = self.cell(label, c, b, metric)["mean"]
                    if math.isnan(ma) or math.isnan(mb):
                        continue
                    if ma > mb:
                        wins += 1
                    elif ma < mb:
                        losses += 1
                    else:
                        ties += 1
            p = binomial_win_test(wins, wins + losses)
            out.append({"method": a, "baseline": b, "metric": metric, "wins": wins, "losses": losses,
                        "ties": ties, "test_defined": p is not None, "p_value": 1.0 if p is None else p})
        return out

    def conservativeness_violations(self):
        """Seeds where an augmented method predicts more unlabeled positives than its counterpart."""
        bad = []
        for (label, c, m, metric), vals in self.values.items():
            if metric != "u_positives" or m not in COUNTERPART:
                continue
            base = self.values.get((label, c, COUNTERPART[m], metric))
            if base is None:
                continue
            for seed, a, b in zip(self.seeds_done[(label, c)], vals, base):
                if a > b:
                    bad.append({"variant": label, "c": c, "method": m, "seed": seed, "positives": a, "baseline": b})
        return bad

    # export --------------------------------------------------------------
    def long_rows(self):
        cfg = self.config
        for label, c, m in self.cells():
            for metric in METRICS:
                vals = self.values.get((label, c, m, metric), [])
                for seed, val in zip(self.seeds_done.get((label, c), []), vals):
                    yield label, c, m, metric, seed, val

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variant", "c", "method", "metric", "seed", "value"])
        for label, c, m, metric, seed, val in self.long_rows():
            w.writerow([label, repr(float(c)), m, metric, seed, repr(float(val))])
        return buf.getvalue()

    def summary(self):
        cells = []
        for label, c, m in self.cells():
            entry = {"variant": label, "c": c, "method": m}
            for metric in METRICS:
                agg = self.cell(label, c, m, metric)
                agg["per_seed"] = list(self.values.get((label, c, m, metric), []))
                entry[metric] = agg
            cells.append(entry)
        return {
            "config": self.config.to_dict(),
            "cells": cells,
            "win_tests": self.win_tests("u_accuracy") + self.win_tests("u_balanced_accuracy"),
            "conservativeness_violations": self.conservativeness_violations(),
            "errors": self.errors,
        }

    def to_json(self):
        return json.dumps(_json_safe(self.summary()), indent=2, sort_keys=True) + "\n"

    def format_table(self, metric="u_accuracy", spread="std_error"):
        """Wide layout: rows (c, method), one column per variant, percent ``mean ± spread``."""
        cfg = self.config
        labels = [cfg.variant_label(v) for v in cfg.variants]
        head = ["c", "method"] + labels
        rows = []
        for c in cfg.c_grid:
            for m in cfg.methods:
                row = [f"{c:.2f}", m]
                for label in labels:
                    agg = self.cell(label, c, m, metric)
                    if metric == "u_positives":
                        row.append(f"{agg['mean']:.1f}")
                    elif math.isnan(agg[spread]):
                        row.append(f"{100 * agg['mean']:.2f}")
                    else:
                        row.append(f"{100 * agg['mean']:.2f} ± {100 * agg[spread]:.2f}")
                rows.append(row)
        widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
        lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths))]
        lines.append("  ".join("-" * w for w in widths))
        lines += ["  ".join(x.ljust(w) for x, w in zip(r, widths)) for r in rows]
        return "\n".join(lines)


def _json_safe(obj):
    if isinstance(obj, float):
        return None if math.isnan(obj) or math.isinf(obj) else obj
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def run_experiment(config, parallelism=1):
    """Run every (variant, c, seed) cell and collect per-seed metrics.

    Cells are independent; results do not depend on ``parallelism``.
    Failures are recorded in ``errors`` and do not stop the grid.
    """
    tasks = [(config, vi, c, seed)
             for vi in range(len(config.variants)) for c in config.c_grid for seed in config.seeds]
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            outputs = list(pool.map(_run_task, tasks))
    else:
        outputs = [_run_task(t) for t in tasks]

    result = ExperimentResult(config)
    for (cfg, vi, c, seed), (vals, errs) in zip(tasks, outputs):
        label = config.variant_label(config.variants[vi])
        result.errors.extend(errs)
        if not vals:
            continue
        result.seeds_done.setdefault((label, c), []).append(seed)
        for m, metrics in vals.items():
            for metric, val in metrics.items():
                result.values.setdefault((label, c, m, metric), []).append(val)
    return result
