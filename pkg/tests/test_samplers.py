import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfhpo.benchmark import HpConfig, HpSpace, default_space, sample_config
from mfhpo.samplers import (
    ForestBOSampler,
    RandomSampler,
    UcbSchedule,
    encode,
    fit_forest,
    predict,
    propose,
    transform_objective,
    ucb,
)


def test_transform_endpoints():
    assert np.allclose(transform_objective([0, 10]), [np.log(1e-3), np.log(1.001)])


def test_transform_constant():
    assert np.allclose(transform_objective([3.0, 3.0, 3.0]), np.log(0.501))
    assert np.allclose(transform_objective([7.0]), np.log(0.501))


def test_transform_rejects_bad_input():
    with pytest.raises(ValueError):
        transform_objective([])
    with pytest.raises(ValueError):
        transform_objective([0.1, np.inf])


def test_transform_monotone_1000_pairs():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        y = rng.normal(size=6)
        t = transform_objective(y)
        i, j = rng.choice(6, 2, replace=False)
        assert (y[i] < y[j]) == (t[i] < t[j])
        assert np.argmax(y) == np.argmax(t)


def test_ucb_schedule():
    s = UcbSchedule()
    assert s.kappa(0) == 1.96 and s.kappa(25) == 1.96
    ks = [s.kappa(i) for i in range(25)]
    assert all(a > b for a, b in zip(ks, ks[1:]))
    assert all(k > 0 for k in ks)
    assert s.kappa(3) == s.kappa(53)
    with pytest.raises(ValueError):
        UcbSchedule(decay_rate=0.0)


def _binary_dataset(n=200, seed=0):
    space = HpSpace((("flag", (0, 1)), ("noise_a", tuple(range(5))), ("noise_b", tuple(range(4)))))
    rng = np.random.default_rng(seed)
    configs = [sample_config(space, rng) for _ in range(n)]
    y = np.array([2.0 * c.values[0] + rng.normal(0, 0.1) for c in configs])
    return space, configs, y


def test_forest_constant_targets():
    _, configs, _ = _binary_dataset(50)
    f = fit_forest(configs, np.full(50, 0.7), rng=0, n_trees=20)
    mu, sigma = predict(f, configs[0])
    assert mu == pytest.approx(0.7) and sigma == pytest.approx(0.0, abs=1e-12)


def test_forest_group_means():
    _, configs, y = _binary_dataset()
    f = fit_forest(configs, y, rng=0)
    flags = np.array([c.values[0] for c in configs])
    for g in (0, 1):
        group_mean = y[flags == g].mean()
        mu, _ = f.predict(np.array([[g, 2, 1]]))
        assert abs(mu[0] - group_mean) < 0.05 + 0.1  # noise-level leaf spread


def test_forest_memorizes_training_points():
    _, configs, y = _binary_dataset()
    f = fit_forest(configs, y, rng=1)
    mu, _ = f.predict(encode(configs))
    assert np.median(np.abs(mu - y)) < 0.1


def test_forest_determinism_and_prior():
    _, configs, y = _binary_dataset(60)
    a = fit_forest(configs, y, rng=5, n_trees=10).predict(encode(configs))
    b = fit_forest(configs, y, rng=5, n_trees=10).predict(encode(configs))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    prior = fit_forest(configs[:1], y[:1], rng=0)
    assert predict(prior, configs[0]) == (0.0, 1.0)


def test_one_tree_has_zero_sigma():
    _, configs, y = _binary_dataset(40)
    f = fit_forest(configs, y, rng=0, n_trees=1)
    assert np.all(f.predict(encode(configs))[1] == 0)


def test_sigma_larger_far_from_data():
    space = HpSpace((("x", tuple(range(20))),))
    configs = [HpConfig((v,)) for v in (0, 1, 2, 3) for _ in range(5)]
    y = np.array([float(c.values[0]) for c in configs])
    f = fit_forest(configs, y, rng=0)
    _, s_near = f.predict(np.array([[1.0]]))
    _, s_far = f.predict(np.array([[19.0]]))
    assert s_far[0] >= s_near[0]
    assert space.size == 20


def test_propose_zero_sigma_is_mu_argmax():
    space, configs, y = _binary_dataset(80)
    f = fit_forest(configs, y, rng=0, n_trees=1)
    rng = np.random.default_rng(3)
    pool = [sample_config(space, rng) for _ in range(100)]
    mu, _ = f.predict(encode(pool))
    best = pool[int(np.argmax(mu))]
    for i in (0, 7, 24):
        assert propose(f, UcbSchedule(), i, pool) == best


def test_propose_shift_invariance():
    space, configs, y = _binary_dataset(80)
    rng = np.random.default_rng(4)
    pool = [sample_config(space, rng) for _ in range(200)]
    a = propose(fit_forest(configs, y, rng=2), UcbSchedule(), 3, pool)
    b = propose(fit_forest(configs, y + 5.0, rng=2), UcbSchedule(), 3, pool)
    assert a == b
    with pytest.raises(ValueError):
        propose(fit_forest(configs, y, rng=2), UcbSchedule(), 0, [])


def test_ucb_formula():
    assert np.allclose(ucb([1.0, 2.0], [0.5, 0.0], 2.0), [2.0, 2.0])


def test_random_sampler_ignores_history():
    space = default_space()
    a, b = RandomSampler(space, 9), RandomSampler(space, 9)
    for _ in range(20):
        b.tell(sample_config(space, np.random.default_rng(0)), 0.5)
    assert [a.ask() for _ in range(10)] == [b.ask() for _ in range(10)]


def test_forest_bo_sampler_deterministic_and_in_space():
    space = default_space()

    def drive(seed):
        s = ForestBOSampler(space, np.random.default_rng(seed), np.random.default_rng(seed + 1), n_trees=10, acq_pool=50)
        out = []
        for _ in range(15):
            c = s.ask()
            space.validate(c)
            s.tell(c, float(np.sum(c.values)))
            out.append(c)
        return out, s.n_proposals

    a, n = drive(1)
    b, _ = drive(1)
    assert a == b and n == 5


def test_forest_bo_exhaustive_finds_optimum():
    space = HpSpace((("a", tuple(range(6))), ("b", tuple(range(6)))))
    s = ForestBOSampler(space, np.random.default_rng(0), np.random.default_rng(1), n_trees=30, exhaustive=True)
    f = lambda c: -((c.values[0] - 4) ** 2) - (c.values[1] - 1) ** 2  # noqa: E731
    for _ in range(30):
        c = s.ask()
        s.tell(c, f(c))
    assert max(score for _, score in s.history) == 0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-10**6, 10**6), min_size=2, max_size=30, unique=True))
def test_transform_strictly_monotone_property(y):
    # integer-valued scores keep gaps representable after scaling
    t = transform_objective(y)
    assert np.all(np.diff(t[np.argsort(y)]) > 0)
