"""Command-line entry point: ``augpu {gen,risk,experiment,fit,rank}``.

Every run writes into a fresh output directory (staged in a temporary
sibling and renamed on success) holding the outputs and one
``manifest.json``. The default output root is ``$AUGPU_OUTPUT_ROOT`` or
``./runs``.
"""
import argparse
import hashlib
import json
import os
import shutil
import sys
import tempfile
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .errors import AugPUError, ConfigError
from .estimators import EmHyper, LogisticHyper, fit_em_pu, fit_s_model, fitted_pair, load_pair, prophet_pair, save_pair
from .evaluation import METHODS, ExperimentConfig, run_experiment
from .model import PuDataset
from .risk import mc_bayes_risk, probit_closed_form
from .rules import likely_positive_scores
from .synth import LabelingStrategy, VariantSpec, build_scenario, sample_dataset

OUTPUT_ROOT_ENV = "AUGPU_OUTPUT_ROOT"
EXIT_OK, EXIT_CELL_ERRORS, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seeds: list
    version: str
    duration_seconds: float
    backend: str = kernels.BACKEND

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# helpers


def load_config(path):
    """Parse a JSON config, reporting the line of a syntax error."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc.msg} at column {exc.colno}", line=exc.lineno) from None
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return d


def _pop_int(d, key, default, minimum=0):
    v = d.pop(key, default)
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"{key} must be an integer >= {minimum}, got {v!r}", field=key)
    return v


def _split_spec(d):
    """Separate VariantSpec keys from the rest of a flat config."""
    known = set(VariantSpec.__dataclass_fields__)
    return {k: v for k, v in d.items() if k in known}, {k: v for k, v in d.items() if k not in known}


def _digest(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:12]


def _output_dir(args, subcommand, echo):
    if args.out:
        return Path(args.out)
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    return root / f"{subcommand}-{_digest(echo)}"


class AtomicDir:
    """Stage outputs in a temporary sibling of ``target``; rename on success."""

    def __init__(self, target, overwrite=False):
        self.target = Path(target)
        self.overwrite = overwrite

    def __enter__(self):
        if self.target.exists() and not self.overwrite:
            raise FileExistsError(f"output directory {self.target} exists (use --overwrite)")
        self.target.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{self.target.name}.", dir=self.target.parent))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.tmp, ignore_errors=True)
            return False
        if self.target.exists():
            old = self.target.with_name(f".{self.target.name}.old-{os.getpid()}")
            self.target.rename(old)
            self.tmp.rename(self.target)
            shutil.rmtree(old, ignore_errors=True)
        else:
            self.tmp.rename(self.target)
        return False


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _finish(tmp, subcommand, echo, seeds, t0):
    m = RunManifest(subcommand, echo, list(seeds), __version__, round(time.perf_counter() - t0, 3))
    (tmp / "manifest.json").write_text(m.to_json())


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args):
    t0 = time.perf_counter()
    d = load_config(args.config)
    spec_d, rest = _split_spec(d)
    n = _pop_int(rest, "n", None, 1)
    seed = _pop_int(rest, "seed", 0) if args.seed is None else args.seed
    labeling = rest.pop("labeling", None)
    if rest:
        raise ConfigError(f"unknown key {sorted(rest)[0]!r}", field=sorted(rest)[0])
    spec = VariantSpec.from_dict(spec_d)
    strategy = LabelingStrategy.from_dict(labeling)
    echo = {"scenario": spec.to_dict(), "n": n, "seed": seed, "labeling": strategy.to_dict()}

    scenario = build_scenario(spec, seed=seed)
    data = sample_dataset(scenario, n, seed, strategy, spec.target_c)
    with AtomicDir(_output_dir(args, "gen", echo), args.overwrite) as tmp:
        data.write(tmp / "dataset.csv")
        _finish(tmp, "gen", echo, [seed], t0)
    print(f"wrote {n} records (achieved c = {data.achieved_c:.4f})")
    return EXIT_OK


def cmd_risk(args):
    t0 = time.perf_counter()
    if args.probit is not None:
        echo = {"probit": args.probit}
        report = probit_closed_form(args.probit).to_dict()
        seeds = []
    else:
        if args.config is None:
            raise ConfigError("risk needs a scenario config or --probit")
        d = load_config(args.config)
        spec_d, rest = _split_spec(d)
        n_mc = _pop_int(rest, "n_mc", 1_000_000, 1000) if args.n_mc is None else args.n_mc
        seed = _pop_int(rest, "seed", 0) if args.seed is None else args.seed
        if rest:
            raise ConfigError(f"unknown key {sorted(rest)[0]!r}", field=sorted(rest)[0])
        spec = VariantSpec.from_dict(spec_d)
        echo = {"scenario": spec.to_dict(), "n_mc": n_mc, "seed": seed}
        seeds = [seed]
        r = mc_bayes_risk(build_scenario(spec, seed=seed), n_mc, seed, workers=args.parallelism)
        report = r.to_dict()
        a, b = r.l_star_pu, r.l_star_pu_stratum
        report["l_star_pu_forms_gap_se"] = abs(a.estimate - b.estimate) / float(np.hypot(a.std_error, b.std_error))
    with AtomicDir(_output_dir(args, "risk", echo), args.overwrite) as tmp:
        _write_json(tmp / "risk.json", report)
        _finish(tmp, "risk", echo, seeds, t0)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_experiment(args):
    t0 = time.perf_counter()
    d = load_config(args.config) if args.config else {}
    if args.methods:
        d["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    if args.seed is not None:
        k = len(d.get("seeds", range(10)))
        d["seeds"] = list(range(args.seed, args.seed + k))
    config = ExperimentConfig.from_dict(d)
    echo = config.to_dict()
    result = run_experiment(config, parallelism=args.parallelism)
    table = result.format_table(args.metric)
    with AtomicDir(_output_dir(args, "experiment", echo), args.overwrite) as tmp:
        (tmp / "results.csv").write_text(result.to_csv())
        (tmp / "summary.json").write_text(result.to_json())
        (tmp / "table.txt").write_text(table + "\n")
        if result.errors:
            _write_json(tmp / "errors.json", result.errors)
        _finish(tmp, "experiment", echo, config.seeds, t0)
    if args.table:
        print(table)
    for w in result.win_tests(args.metric):
        p = f"{w['p_value']:.3g}" if w["test_defined"] else "n/a"
        print(f"{w['method']} vs {w['baseline']}: {w['wins']} wins, {w['losses']} losses, {w['ties']} ties, p = {p}")
    if result.errors:
        print(f"{len(result.errors)} cell error(s); see errors.json", file=sys.stderr)
        return EXIT_CELL_ERRORS
    return EXIT_OK


def cmd_fit(args):
    t0 = time.perf_counter()
    d = load_config(args.config) if args.config else {}
    try:
        em_hyper = EmHyper.from_dict(d.pop("em", None))
        s_hyper = LogisticHyper(**d.pop("s_model", {}))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if d:
        raise ConfigError(f"unknown key {sorted(d)[0]!r}", field=sorted(d)[0])
    data = PuDataset.read(args.dataset)
    em = fit_em_pu(data.observed(), em_hyper)
    s_model = fit_s_model(data.observed(), s_hyper)
    echo = {"dataset": str(args.dataset), "em": asdict(em_hyper), "s_model": asdict(s_hyper)}
    with AtomicDir(_output_dir(args, "fit", echo), args.overwrite) as tmp:
        save_pair(fitted_pair(em, s_model), tmp / "estimator.json")
        _finish(tmp, "fit", echo, [], t0)
    print(f"EM log-likelihood {em.loglik_trace[0]:.3f} -> {em.loglik_trace[-1]:.3f}")
    return EXIT_OK


def cmd_rank(args):
    t0 = time.perf_counter()
    data = PuDataset.read(args.dataset)
    if (args.estimator is None) == (args.scenario is None):
        raise ConfigError("rank needs exactly one of --estimator or --scenario")
    if args.estimator is not None:
        pair = load_pair(args.estimator)
        source = {"estimator": str(args.estimator)}
    else:
        d = load_config(args.scenario)
        spec_d, rest = _split_spec(d)
        seed = _pop_int(rest, "seed", 0)
        if rest:
            raise ConfigError(f"unknown key {sorted(rest)[0]!r}", field=sorted(rest)[0])
        spec = VariantSpec.from_dict(spec_d)
        pair = prophet_pair(build_scenario(spec, seed=seed))
        source = {"scenario": spec.to_dict(), "seed": seed}

    idx = np.flatnonzero(data.s == 0)
    scores = likely_positive_scores(pair.predict_y(data.x[idx]), pair.predict_s(data.x[idx]))
    order = np.lexsort((idx, -scores))
    k = int(np.sum(scores > 1.0)) if args.k is None else args.k
    if not 0 <= k <= len(idx):
        raise ConfigError(f"k must lie in [0, {len(idx)}], got {k}", field="k")
    echo = {"dataset": str(args.dataset), **source, "k": k}
    with AtomicDir(_output_dir(args, "rank", echo), args.overwrite) as tmp:
        lines = ["rank,record,score"]
        lines += [f"{r + 1},{idx[j]},{float(scores[j])!r}" for r, j in enumerate(order[:k])]
        (tmp / "ranking.csv").write_text("\n".join(lines) + "\n")
        _finish(tmp, "rank", echo, [], t0)
    print(f"top {k} of {len(idx)} unlabeled records written")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="augpu", description="Augmented PU prediction toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help="output directory (default: $AUGPU_OUTPUT_ROOT/<command>-<hash>)")
        sp.add_argument("--overwrite", action="store_true", help="replace an existing output directory")

    g = sub.add_parser("gen", help="sample a synthetic PU dataset")
    g.add_argument("config", help="JSON: variant spec keys plus n, seed, labeling")
    g.add_argument("--seed", type=int)
    common(g)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("risk", help="Bayes risks: closed form (--probit) or Monte Carlo")
    r.add_argument("config", nargs="?", help="JSON: variant spec keys plus n_mc, seed")
    r.add_argument("--probit", type=float, metavar="A", help="probit scenario with threshold A")
    r.add_argument("--n-mc", type=int, dest="n_mc")
    r.add_argument("--seed", type=int)
    r.add_argument("--parallelism", type=int, default=1)
    common(r)
    r.set_defaults(func=cmd_risk)

    e = sub.add_parser("experiment", help="run the variant x c x method x seed grid")
    e.add_argument("config", nargs="?", help="JSON experiment config (defaults if omitted)")
    e.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
    e.add_argument("--parallelism", type=int, default=1)
    e.add_argument("--seed", type=int, help="use seeds seed, seed+1, ... instead of the configured list")
    e.add_argument("--table", action="store_true", help="print the wide table")
    e.add_argument("--metric", default="u_accuracy", choices=("u_accuracy", "u_balanced_accuracy", "u_positives"))
    common(e)
    e.set_defaults(func=cmd_experiment)

    f = sub.add_parser("fit", help="fit EM and S models on a dataset CSV")
    f.add_argument("dataset")
    f.add_argument("--config", help="JSON with optional 'em' and 's_model' hyperparameters")
    common(f)
    f.set_defaults(func=cmd_fit)

    k = sub.add_parser("rank", help="rank unlabeled records by likely-positive score")
    k.add_argument("dataset")
    k.add_argument("--estimator", help="estimator JSON written by 'fit'")
    k.add_argument("--scenario", help="scenario config; ranks with the exact oracles")
    k.add_argument("--k", type=int, help="number of records (default: all with score > 1)")
    common(k)
    k.set_defaults(func=cmd_rank)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "parallelism", 1) < 1:
        print("error: --parallelism must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, AugPUError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
