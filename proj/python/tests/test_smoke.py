import json
import math
import os
import pathlib

import pytest

import ctxmdp

CONFIGS = pathlib.Path(os.environ.get("CTXMDP_CONFIG_DIR", pathlib.Path(__file__).parents[2] / "configs"))


def small_config():
    cfg = json.loads((CONFIGS / "bandit.json").read_text())
    cfg["agent"]["episodes"] = 200
    cfg["seeds"] = [0]
    cfg["mi_estimation"] = {"steps": 20, "batch_size": 32, "eval_batch": 64, "eval_batches": 1}
    return cfg


def test_exact_mi_of_bijection_is_log_n():
    counts = [[5 if i == j else 0 for j in range(4)] for i in range(4)]
    assert ctxmdp.exact_mi(counts) == pytest.approx(math.log(4), abs=1e-12)


def test_exact_mi_of_independent_joint_is_zero():
    assert ctxmdp.exact_mi([[1, 2], [2, 4]]) == pytest.approx(0.0, abs=1e-12)


def test_estimate_mi_returns_bounds_below_ceiling():
    est = ctxmdp.estimate_mi([[10, 0], [0, 10]], seed=1)
    assert est["exact_mi"] == pytest.approx(math.log(2))
    assert est["infonce"] <= math.log(512) + 1e-9
    assert abs(est["mine"] - est["exact_mi"]) < 0.2


def test_power_law_recovers_noise_free_curve():
    h = [0.2 + 0.1 * i for i in range(40)]
    lat = [2.0 + 3.0 * x**1.2 for x in h]
    b0, b1, alpha, r2 = ctxmdp.fit_power_law(h, lat)
    assert alpha == pytest.approx(1.2, abs=0.011)
    assert b0 == pytest.approx(2.0, rel=0.05)
    assert b1 == pytest.approx(3.0, rel=0.05)
    assert r2 > 0.999


def test_power_law_rejects_constant_entropy():
    with pytest.raises(ValueError):
        ctxmdp.fit_power_law([1.0] * 5, [2.0, 3.0, 4.0, 5.0, 6.0])


def test_summarize_respects_cap():
    out = ctxmdp.summarize("truncate", [1, 2, 3, 4, 5, 6], 4)
    assert len(out) <= 4
    compressed = ctxmdp.summarize("truncate", [1, 2, 3, 4, 5, 6], 4, meta="compress")
    assert len(compressed) <= 2


def test_relevance_keeps_only_scored_tokens():
    out = ctxmdp.summarize("relevance", [7, 1, 7, 2, 9], 4, scores={7: 1.0, 9: 0.5})
    assert set(out) <= {7, 9}


def test_sufficiency_is_zero_for_identical_policies():
    pi = [[0.5, 0.5], [0.9, 0.1]]
    assert ctxmdp.sufficiency_epsilon(pi, pi, [0.5, 0.5]) == pytest.approx(0.0, abs=1e-12)


def test_sqrt_slope_of_sqrt_curve():
    curve = [math.sqrt(t) for t in range(1, 2001)]
    assert ctxmdp.sqrt_scaling_slope(curve, 200) == pytest.approx(0.5, abs=1e-9)


def test_invalid_config_raises_value_error():
    cfg = small_config()
    cfg["budget"]["token_cap"] = 0
    with pytest.raises(ValueError):
        ctxmdp.validate_config(json.dumps(cfg))


def test_run_and_report(tmp_path):
    summaries = ctxmdp.run(small_config(), tmp_path, jobs=1)
    assert len(summaries) == 3
    assert {s["baseline"] for s in summaries} == {"none", "raw", "summarized"}
    wrote, _ = ctxmdp.report(tmp_path, regret_window=50)
    assert wrote
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["runs"]
