import io
import math
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import brute_force_cf, recurrence_scores

from secoda.data_model import MISSING, Dataset, Schema
from secoda.detector import (
    ConvergenceError,
    DetectionConfig,
    check_convergence,
    constellation_frequencies,
    detect,
    encode_constellation,
    exponential_weights,
    frequencies_from_keys,
    prune,
    schedule_step,
    update_scores,
)
from secoda.discretizer import discretize


def cat_data(values):
    return Dataset.from_rows(Schema.of(c="categorical"), [[v] for v in values])


def random_mixed(rng, n, p_num=2, p_cat=2, missing=0.1):
    schema = Schema.of(**{f"x{h}": "numerical" for h in range(p_num)}, **{f"c{h}": "categorical" for h in range(p_cat)})
    arrays = {}
    for h in range(p_num):
        v = rng.integers(0, 6, n).astype(float) * rng.choice([1.0, 0.37])
        v[rng.random(n) < missing] = np.nan
        arrays[f"x{h}"] = v
    for h in range(p_cat):
        arrays[f"c{h}"] = [None if rng.random() < missing else str(c) for c in rng.choice(list("abc"), n)]
    return Dataset.from_arrays(schema, arrays)


# ------------------------------------------------------------------ config


def test_config_defaults_and_validation():
    c = DetectionConfig()
    assert (c.anomaly_fraction, c.prune_quantile, c.prune_start_iteration) == (0.003, 0.95, 11)
    assert (c.initial_b, c.initial_s, c.max_iterations) == (2, 1.0, 1000)
    for bad in ({"anomaly_fraction": 0}, {"prune_quantile": 1.5}, {"initial_b": 1}, {"max_iterations": 0}):
        with pytest.raises(ValueError):
            DetectionConfig(**bad)
    assert not DetectionConfig.variant("pruneless").pruning_enabled
    assert not DetectionConfig.variant("stepless").accelerated_stepping
    assert not DetectionConfig.variant("unweighted").weighted_scores
    with pytest.raises(ValueError):
        DetectionConfig.variant("fast")


# ------------------------------------------------------------ constellations


def test_encode_constellation_injective():
    assert encode_constellation(("A", "B")) != encode_constellation(("AB", ""))
    assert encode_constellation((1, "red")) == encode_constellation((1, "red"))
    assert encode_constellation((MISSING, "red")) != encode_constellation(("Missing", "red"))
    assert encode_constellation((1,)) != encode_constellation(("1",))


def test_cf_examples(golden):
    ex = golden["cf_keys_example"]
    keys = np.array([{"K1": 7, "K2": 3}[k] for k in ex["keys"]])
    assert list(frequencies_from_keys(keys)) == ex["cf"] == [2, 2, 1]
    assert list(frequencies_from_keys(np.zeros(5, int))) == [5] * 5
    assert list(frequencies_from_keys(np.arange(5))) == [1] * 5


def test_cf_matches_brute_force_with_workers():
    rng = np.random.default_rng(1)
    for _ in range(30):
        n = int(rng.integers(1, 200))
        d = random_mixed(rng, n)
        view = discretize(d, int(rng.integers(2, 8)))
        expected = brute_force_cf([encode_constellation(t) for t in view.all_tokens()])
        for w in (1, 3):
            assert list(constellation_frequencies(view, w)) == expected


def test_sparse_key_path_matches_dense():
    rng = np.random.default_rng(2)
    keys = rng.integers(0, 2**40, 500)
    keys[::3] = keys[0]
    expected = brute_force_cf(list(keys))
    assert list(frequencies_from_keys(keys, 2**40)) == expected
    assert list(frequencies_from_keys(keys, 2**40, workers=4)) == expected


# ------------------------------------------------------------------ scores


def test_update_scores_examples(golden):
    assert list(update_scores(None, [7])) == [7]
    assert list(update_scores([4.0], [2.0])) == [3.0]
    aas = None
    for cf in (8, 4, 2):
        aas = update_scores(aas, [cf])
    assert aas[0] == golden["weighted_8_4_2"] == 4.0


def test_unweighted_is_running_mean():
    aas, seq = None, [8.0, 4.0, 2.0, 6.0]
    for i, cf in enumerate(seq, start=1):
        aas = update_scores(aas, [cf], weighted=False, iteration=i)
    assert aas[0] == pytest.approx(np.mean(seq), rel=1e-15)
    with pytest.raises(ValueError):
        update_scores([1.0], [1.0], weighted=False)


def test_exponential_weights_closed_form():
    assert list(exponential_weights(1)) == [1.0]
    assert list(exponential_weights(2)) == [0.5, 0.5]
    assert list(exponential_weights(3)) == [0.25, 0.25, 0.5]
    for i in range(1, 31):
        w = exponential_weights(i)
        assert w[-1] == (0.5 if i > 1 else 1.0)
        assert w.sum() == 1.0


@given(st.lists(st.integers(1, 10_000), min_size=1, max_size=30))
def test_weights_reproduce_recurrence(cf_seq):
    direct = float(exponential_weights(len(cf_seq)) @ np.array(cf_seq, dtype=float))
    assert direct == pytest.approx(recurrence_scores(cf_seq), rel=1e-9)


# ----------------------------------------------------------------- schedule


def test_schedule_examples():
    assert schedule_step(1, 1.0, 2) == (1.1, 3)
    assert schedule_step(11, 2.0, 12) == (3.0, 13)
    assert schedule_step(13, 4.0, 15) == (5.0, 18)
    assert schedule_step(12, 3.0, 13, accelerated=False) == (4.0, 14)
    with pytest.raises(ValueError):
        schedule_step(0, 1.0, 2)


def test_schedule_matches_hand_execution(golden):
    d = cat_data(["A"] * 6)
    res = detect(d)
    g = golden["schedule"]
    assert [t.b for t in res.trace[:14]] == g["b_used"]
    assert [Fraction(t.s).limit_denominator(10) for t in res.trace[:14]] == [Fraction(s) for s in g["s_after"]]
    res = detect(d, DetectionConfig.variant("stepless"))
    assert [t.b for t in res.trace[:14]] == g["stepless_b_used"]


# -------------------------------------------------------------------- prune


def test_prune_examples():
    r = prune(np.arange(100), np.arange(100, dtype=float))
    assert len(r.frozen) == 5 and not r.guarded
    scores = np.r_[np.full(80, 10.0), np.ones(20)]
    r = prune(np.arange(100), scores)
    assert r.threshold == 10 and len(r.frozen) == 80
    r = prune(np.arange(10), np.full(10, 3.0))
    assert r.guarded and len(r.frozen) == 0 and len(r.retained) == 10


@given(st.lists(st.integers(1, 20), min_size=1, max_size=300), st.sampled_from([0.5, 0.9, 0.95, 0.99]))
def test_prune_lower_bound(scores, q):
    aas = np.array(scores, dtype=float)
    r = prune(np.arange(len(aas)), aas, q)
    assert len(r.retained) + len(r.frozen) == len(aas)
    if not r.guarded:
        assert len(r.frozen) >= math.ceil(len(aas) * (1 - Fraction(str(q))))
        assert len(r.retained) >= 2
        assert np.all(r.frozen_scores >= r.threshold)


# -------------------------------------------------------------- convergence


def test_check_convergence_examples():
    assert check_convergence([1.0], 1.1, 100, 0.003) is False
    assert check_convergence([5.0, 6.0], 1.1, 100) is True
    assert check_convergence([1.0] * 3, 1.0, 1000, 0.003) is True  # exactly 0.003: strict
    assert check_convergence([1.0] * 4, 1.0, 1000, 0.003) is False


def test_s_compared_exactly():
    # 1.1 as a double is above 11/10; a score equal to that double must not count
    assert check_convergence([1.1] * 10, Fraction(11, 10), 10, 0.003) is True
    assert check_convergence([1.0] * 10, Fraction(11, 10), 10, 0.003) is False


# ----------------------------------------------------------------- detect


def test_detect_single_rare_value():
    res = detect(cat_data(["A"] * 99 + ["B"]))
    assert res.scores[99] == 1.0
    assert np.all(res.scores[:99] == 99.0)
    assert res.iterations_run == 1


def test_detect_identical_cases():
    res = detect(cat_data(["A"] * 5))
    assert np.all(res.scores == 5.0)
    assert res.iterations_run == 13
    assert all(t.pruned == 0 for t in res.trace)


def test_detect_unique_class_top_rank():
    rng = np.random.default_rng(3)
    vals = list(rng.choice(["p", "q", "r"], 300)) + ["z"]
    res = detect(Dataset.from_rows(Schema.of(c="categorical", d="categorical"), [[v, "k"] for v in vals]))
    assert res.scores[-1] == 1.0
    assert res.top(1)[0][0] == 300
    assert (res.ranks == 1).sum() == 1


def test_categorical_only_fixpoint():
    rng = np.random.default_rng(4)
    vals = list(rng.choice(list("abcdef"), 500, p=[0.5, 0.2, 0.15, 0.1, 0.04, 0.01]))
    res = detect(cat_data(vals), DetectionConfig(pruning_enabled=False))
    expected = brute_force_cf(vals)
    assert list(res.scores) == expected


def test_detect_errors_and_trace():
    with pytest.raises(ValueError):
        detect(Dataset.from_rows(Schema.of(c="categorical"), []))
    with pytest.raises(ConvergenceError) as e:
        detect(cat_data(["A"] * 50), DetectionConfig(max_iterations=3))
    assert len(e.value.trace) == 3
    res = detect(cat_data(["A"] * 5))
    buf = io.StringIO()
    res.write_trace(buf)
    lines = [json.loads(x) for x in buf.getvalue().splitlines()]
    assert len(lines) == 13
    assert set(lines[0]) == {"i", "b", "s", "working", "pruned", "below_s"}


@given(st.integers(0, 2**32 - 1), st.integers(1, 150))
def test_detect_invariants(seed, n):
    rng = np.random.default_rng(seed)
    d = random_mixed(rng, n)
    res = detect(d)
    assert res.scores.shape == (n,)
    assert np.all((res.scores >= 1) & (res.scores <= n))
    bs = [t.b for t in res.trace]
    ss = [t.s for t in res.trace]
    assert all(b1 < b2 for b1, b2 in zip(bs, bs[1:]))
    assert all(s1 <= s2 for s1, s2 in zip(ss, ss[1:]))
    assert sum(t.pruned for t in res.trace) + res.trace[-1].working - res.trace[-1].pruned == n


def test_detect_deterministic_across_workers():
    rng = np.random.default_rng(5)
    d = random_mixed(rng, 3000, missing=0.02)
    a = detect(d)
    b = detect(d, workers=4)
    assert np.array_equal(a.scores, b.scores)
    assert a.trace == b.trace


def test_global_range_policy_runs():
    rng = np.random.default_rng(6)
    d = random_mixed(rng, 800)
    res = detect(d, DetectionConfig(range_policy="global"))
    assert np.all(res.scores >= 1)
