import json
import math

import numpy as np
import pytest

from augpu.errors import ConfigError, DegenerateStratumError, DomainError
from augpu.evaluation import (
    ExperimentConfig,
    binomial_win_test,
    run_experiment,
    u_accuracy,
    u_balanced_accuracy,
)
from augpu.model import DatasetMeta, PuDataset


def _ds(y, s):
    y = np.asarray(y)
    return PuDataset(np.zeros((len(y), 1)), y, np.asarray(s), DatasetMeta("", 0.0, 0.0, 0, len(y), 1))


def test_u_accuracy_ignores_labeled_records():
    d = _ds([1, 0, 1, 0, 1, 1], [0, 0, 0, 0, 1, 1])
    pred = [1, 0, 0, 0, 0, 0]  # 3 of 4 unlabeled correct; labeled wrong but ignored
    assert u_accuracy(pred, d) == 0.75


def test_u_accuracy_constant_zero():
    y = np.array([1] * 30 + [0] * 70)
    assert u_accuracy(np.zeros(100), _ds(y, np.zeros(100, dtype=int))) == pytest.approx(0.7)


def test_u_balanced_accuracy_examples():
    d = _ds([1, 1, 0, 0, 1], [0, 0, 0, 0, 1])
    assert u_balanced_accuracy([1, 0, 0, 0, 1], d) == 0.75
    assert u_balanced_accuracy([0, 0, 0, 0, 0], d) == 0.5
    assert u_balanced_accuracy([1, 1, 0, 0, 1], d) == 1.0


def test_metrics_coincide_on_balanced_stratum():
    rng = np.random.default_rng(0)
    y = np.array([1, 0] * 500)
    pred = rng.integers(0, 2, 1000)
    d = _ds(y, np.zeros(1000, dtype=int))
    assert abs(u_accuracy(pred, d) - u_balanced_accuracy(pred, d)) < 1e-12


def test_degenerate_strata():
    with pytest.raises(DegenerateStratumError):
        u_accuracy([1, 1], _ds([1, 1], [1, 1]))
    with pytest.raises(DegenerateStratumError):
        u_balanced_accuracy([0, 0], _ds([0, 0], [0, 0]))
    with pytest.raises(DomainError):
        u_accuracy([1], _ds([1, 0], [0, 0]))


def test_binomial_examples():
    assert binomial_win_test(5, 5) == 1 / 32
    assert binomial_win_test(0, 1) == 1.0
    assert binomial_win_test(3, 0 + 3) == 0.125
    assert binomial_win_test(0, 0) is None
    with pytest.raises(DomainError):
        binomial_win_test(4, 3)


def test_binomial_against_direct_sum():
    for n in range(1, 30):
        for k in range(n + 1):
            direct = sum(math.comb(n, j) * 0.5**n for j in range(k, n + 1))
            assert binomial_win_test(k, n) == pytest.approx(direct, rel=1e-12)


def test_config_validation():
    with pytest.raises(ConfigError, match="seeds"):
        ExperimentConfig(seeds=[1, 1])
    with pytest.raises(ConfigError, match="c_grid"):
        ExperimentConfig(c_grid=[])
    with pytest.raises(ConfigError, match="methods"):
        ExperimentConfig(methods=["Oracle"])
    with pytest.raises(ConfigError, match="target_c"):
        ExperimentConfig(c_grid=[1.5])
    with pytest.raises(ConfigError, match="bogus"):
        ExperimentConfig.from_dict({"bogus": 1})
    cfg = ExperimentConfig(variants=["V1", {"variant": "V3", "label": "V3w", "mu_per_coordinate": 0.3}])
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


@pytest.fixture(scope="module")
def prophet_result():
    cfg = ExperimentConfig(variants=["V1", "SCAR"], c_grid=[0.1, 0.9], methods=["SProphet", "YProphet"],
                           seeds=[0, 1, 2], n_test=3000)
    return run_experiment(cfg)


def test_aggregation_recomputable(prophet_result):
    r = prophet_result
    for label, c, m in r.cells():
        vals = r.values[(label, c, m, "u_accuracy")]
        agg = r.cell(label, c, m, "u_accuracy")
        assert agg["mean"] == pytest.approx(np.mean(vals), abs=1e-12)
        assert agg["std_error"] == pytest.approx(np.std(vals, ddof=1) / math.sqrt(len(vals)), abs=1e-12)
        assert agg["n"] == 3


def test_exports(prophet_result):
    r = prophet_result
    lines = r.to_csv().splitlines()
    assert lines[0] == "variant,c,method,metric,seed,value"
    assert len(lines) == 1 + 2 * 2 * 2 * 3 * 3
    summary = json.loads(r.to_json())
    assert {w["method"] for w in summary["win_tests"]} == {"SProphet"}
    table = r.format_table()
    assert "SProphet" in table and "±" in table


def test_all_ties_give_undefined_test():
    cfg = ExperimentConfig(variants=["SCAR"], c_grid=[0.0], methods=["SProphet", "YProphet"],
                           seeds=[0, 1], n_test=500)
    r = run_experiment(cfg)
    a = r.values[("SCAR", 0.0, "SProphet", "u_accuracy")]
    b = r.values[("SCAR", 0.0, "YProphet", "u_accuracy")]
    assert a == b
    (w,) = r.win_tests()
    assert w["ties"] == 1 and not w["test_defined"] and w["p_value"] == 1.0


def test_cell_errors_do_not_abort_grid():
    # SCAR at c=1 labels every positive: the unlabeled stratum has a single class
    cfg = ExperimentConfig(variants=["SCAR"], c_grid=[0.5, 1.0], methods=["SProphet"], seeds=[0], n_test=400)
    r = run_experiment(cfg)
    assert r.cell("SCAR", 0.5, "SProphet", "u_accuracy")["n"] == 1
    assert any(e["c"] == 1.0 and e["metric"] == "u_balanced_accuracy" for e in r.errors)


def test_parallel_matches_serial():
    cfg = ExperimentConfig(variants=["V2"], c_grid=[0.3, 0.7], seeds=[0, 1], n_train=800, n_test=800,
                           em={"em_iters": 3})
    assert run_experiment(cfg, parallelism=2).to_csv() == run_experiment(cfg).to_csv()
