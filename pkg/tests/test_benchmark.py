import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfhpo.benchmark import (
    BenchSpec,
    CurveTableError,
    HpConfig,
    HpSpace,
    SyntheticBenchmark,
    default_space,
    export_curve_table,
    fnv1a_64,
    load_curve_table,
    make_benchmark,
    sample_config,
)
from mfhpo.curve_model import mmf4_eval


def distinct_configs(space, n, seed=0):
    rng = np.random.default_rng(seed)
    out = set()
    while len(out) < n:
        out.add(sample_config(space, rng))
    return sorted(out)


def test_default_space_cardinality():
    space = default_space()
    assert space.size == 62208
    assert space.size == 6 * 4 * 2 * 2 * 2 * 6 * 6 * 3 * 3
    assert len(space) == 9


def test_space_rejects_bad_dimensions():
    with pytest.raises(ValueError):
        HpSpace((("a", (1,)),))
    with pytest.raises(ValueError):
        HpSpace((("a", (1, 2)), ("a", (3, 4))))


def test_fnv1a_reference_values():
    # empty input is the offset basis; one zero byte-block differs from it
    assert fnv1a_64([]) == 0xCBF29CE484222325
    assert fnv1a_64([0]) != fnv1a_64([])
    assert fnv1a_64([1, 2]) != fnv1a_64([2, 1])


def test_sample_degenerate_choices_always_same_value():
    space = HpSpace((("act", ("relu", "relu")),))
    rng = np.random.default_rng(3)
    assert {space.decode(sample_config(space, rng))["act"] for _ in range(50)} == {"relu"}


def test_sample_deterministic_given_rng_state():
    space = default_space()
    a = [sample_config(space, np.random.default_rng(11)) for _ in range(3)]
    assert a[0] == a[1] == a[2]


def test_sample_binary_dimension_is_uniform():
    space = HpSpace((("flag", (0, 1)), ("other", (0, 1, 2))))
    rng = np.random.default_rng(0)
    n = 10_000
    ones = sum(sample_config(space, rng).values[0] for _ in range(n))
    # binomial(n, 0.5): 3 sigma = 3 * sqrt(n) / 2
    assert abs(ones - n / 2) < 3 * math.sqrt(n * 0.25)


def test_query_zero_noise_is_model_value():
    bench = SyntheticBenchmark(BenchSpec("crossing", noise_sigma=0.0, master_seed=4))
    c = sample_config(bench.space, np.random.default_rng(0))
    valid, test = bench.query(c, 100)
    assert valid == test == float(mmf4_eval(bench.theta(c), 100.0))


def test_query_is_pure():
    bench = SyntheticBenchmark(BenchSpec(noise_sigma=0.05, n_seeds=3, master_seed=9))
    c = sample_config(bench.space, np.random.default_rng(1))
    assert bench.query(c, 17, 2) == bench.query(c, 17, 2)
    assert bench.query(c, 17, 2) != bench.query(c, 17, 1)
    fresh = SyntheticBenchmark(BenchSpec(noise_sigma=0.05, n_seeds=3, master_seed=9))
    assert fresh.query(c, 17, 2) == bench.query(c, 17, 2)


def test_query_errors():
    bench = SyntheticBenchmark(BenchSpec(z_max=10))
    c = sample_config(bench.space, np.random.default_rng(1))
    with pytest.raises(ValueError):
        bench.query(c, 0)
    with pytest.raises(ValueError):
        bench.query(c, 11)
    with pytest.raises(ValueError):
        bench.query(HpConfig((0, 0)), 1)
    with pytest.raises(ValueError):
        bench.query(c, 1, seed=1)


def test_theta_in_documented_ranges():
    for regime in ("dominant", "crossing"):
        bench = SyntheticBenchmark(BenchSpec(regime, master_seed=2))
        for c in distinct_configs(bench.space, 200):
            t0, t1, t2, t3 = bench.theta(c)
            assert 0.1 <= t0 <= 0.5 and 1 <= t1 <= 50 and 0.5 <= t2 <= 1.0 and 0.5 <= t3 <= 3


def test_dominant_noiseless_pairs_never_cross():
    bench = SyntheticBenchmark(BenchSpec("dominant", master_seed=5))
    configs = distinct_configs(bench.space, 200, seed=5)
    for a, b in zip(configs[::2], configs[1::2]):
        va, vb = bench.curve(a).valid, bench.curve(b).valid
        if va[0] > vb[0]:
            assert np.all(va > vb)
        else:
            assert np.all(vb >= va)


def test_crossing_regime_has_rank_inversions():
    bench = SyntheticBenchmark(BenchSpec("crossing", master_seed=5))
    configs = distinct_configs(bench.space, 2000, seed=6)
    inverted = 0
    for a, b in zip(configs[::2], configs[1::2]):
        va, vb = bench.curve(a).valid, bench.curve(b).valid
        inverted += (va[0] > vb[0]) != (va[-1] > vb[-1])
    assert inverted > 0


def test_curve_table_direct_lookup(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("config_id,seed,epoch,valid,test\nA,0,1,0.1,1.1\nA,0,2,0.2,1.2\nA,0,3,0.3,1.3\n")
    table = load_curve_table(path)
    assert table.z_max == 3
    assert table.query_id("A", 2) == (0.2, 1.2)
    with pytest.raises(KeyError):
        table.query_id("B", 2)
    with pytest.raises(ValueError):
        table.query_id("A", 4)


@pytest.mark.parametrize(
    "body, needle",
    [
        ("A,0,1,0.1,0.1\nA,0,1,0.2,0.2\n", "line 3"),
        ("A,0,1,0.1\n", "line 2"),
        ("A,0,1,abc,0.1\n", "line 2"),
        ("A,0,1,0.1,0.1\nA,0,3,0.1,0.1\n", "contiguous"),
        ("A,0,1,0.1,0.1\nA,0,2,0.1,0.1\nB,0,1,0.1,0.1\n", "z_max"),
        ("A,0,1,nan,0.1\n", "non-finite"),
    ],
)
def test_curve_table_rejects_malformed(tmp_path, body, needle):
    path = tmp_path / "bad.csv"
    path.write_text("config_id,seed,epoch,valid,test\n" + body)
    with pytest.raises(CurveTableError, match=needle):
        load_curve_table(path)


def test_curve_table_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,seed,epoch,valid,test\nA,0,1,0.1,0.1\n")
    with pytest.raises(CurveTableError, match="header"):
        load_curve_table(path)


def test_export_reload_round_trip_is_bit_exact(tmp_path):
    spec = BenchSpec("crossing", z_max=30, noise_sigma=0.03, n_seeds=2, master_seed=13)
    bench = SyntheticBenchmark(spec)
    configs = distinct_configs(bench.space, 50, seed=2)
    path = tmp_path / "bench.csv"
    assert export_curve_table(bench, configs, path) == 2 * 50 * 30
    table = load_curve_table(path)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        c = configs[rng.integers(len(configs))]
        z = int(rng.integers(1, 31))
        s = int(rng.integers(2))
        assert table.query_id(c.key, z, s) == bench.query(c, z, s)
    # a table also works through its own config handles
    c = configs[7]
    assert table.query(table.config_for(c.key), 5, 1) == bench.query(c, 5, 1)


def test_make_benchmark_file_regime(tmp_path):
    bench = SyntheticBenchmark(BenchSpec(z_max=5))
    path = tmp_path / "b.csv"
    export_curve_table(bench, distinct_configs(bench.space, 3), path)
    table = make_benchmark(BenchSpec("file", z_max=5, source_path=str(path)))
    assert table.z_max == 5 and len(table.ids) == 3
    with pytest.raises(ValueError):
        make_benchmark(BenchSpec("file", z_max=6, source_path=str(path)))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=9, max_size=9), st.integers(1, 100))
def test_query_purity_property(values, epoch):
    values = [min(v, a - 1) for v, a in zip(values, default_space().arities)]
    bench = SyntheticBenchmark(BenchSpec(noise_sigma=0.01, master_seed=1))
    c = HpConfig(tuple(values))
    assert bench.query(c, epoch) == bench.query(HpConfig(tuple(values)), epoch)
