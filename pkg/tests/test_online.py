import numpy as np
import pytest

from tracenorm.classifier import (
    ApgConfig, LabeledSample, LinearMatrixModel, apg_fit, gradient, lipschitz_constant, objective,
)
from tracenorm.errors import DimensionError
from tracenorm.linalg import count_svd_calls
from tracenorm.online import (
    OnlineConfig, OnlineSufficientStats, online_fit, stats_update, surrogate_gradient,
)
from tracenorm.synth import SynthParams, generate


def random_samples(rng, s, m, n):
    return [LabeledSample(rng.standard_normal((m, n)), rng.choice([-1.0, 1.0])) for _ in range(s)]


def assert_stats_close(a, b, rtol=1e-12):
    for x, y in ((a.A, b.A), (a.B.gram, b.B.gram), (a.D, b.D)):
        assert np.linalg.norm(x - y) <= rtol * max(1.0, np.linalg.norm(y))
    assert a.c == pytest.approx(b.c, rel=rtol, abs=rtol)
    assert a.L == pytest.approx(b.L, rel=rtol)
    assert a.t == b.t


def test_stats_update_single_sample():
    X = np.random.default_rng(0).standard_normal((3, 2))
    st = stats_update(OnlineSufficientStats(3, 2), [LabeledSample(X, 1)])
    np.testing.assert_array_equal(st.A, X)
    np.testing.assert_array_equal(st.D, X)
    np.testing.assert_allclose(st.B.as_kron(), np.kron(X, X))
    assert st.c == 1 and st.t == 1
    assert st.L == pytest.approx(2 * 6 * np.sum(X * X))


def test_stats_update_label_twins_cancel():
    X = np.random.default_rng(1).standard_normal((2, 2))
    st = stats_update(OnlineSufficientStats(2, 2), [LabeledSample(X, 1), LabeledSample(X, -1)])
    assert not st.A.any() and st.c == 0
    np.testing.assert_array_equal(st.D, 2 * X)


def test_stats_update_returns_copy():
    base = OnlineSufficientStats(2, 2)
    stats_update(base, [LabeledSample(np.ones((2, 2)), 1)])
    assert base.t == 0 and not base.A.any()


def test_batch_equals_sequential():
    rng = np.random.default_rng(2)
    S = random_samples(rng, 5, 3, 4)
    at_once = stats_update(OnlineSufficientStats(3, 4), S)
    one_by_one = OnlineSufficientStats(3, 4)
    for s in S:
        one_by_one = stats_update(one_by_one, [s])
    assert_stats_close(at_once, one_by_one)


def test_stats_update_dimension_error_index():
    S = [LabeledSample(np.ones((2, 2)), 1), LabeledSample(np.ones((2, 3)), 1)]
    with pytest.raises(DimensionError) as err:
        OnlineSufficientStats(2, 2).update(S, offset=10)
    assert err.value.index == 11


def test_size_limit():
    with pytest.raises(ValueError):
        OnlineSufficientStats(65, 64)


def test_surrogate_gradient_single_sample():
    X = np.random.default_rng(3).standard_normal((2, 3))
    st = stats_update(OnlineSufficientStats(2, 3), [LabeledSample(X, -1)])
    np.testing.assert_allclose(surrogate_gradient(st, np.zeros((2, 3)), 0.0), 2 * X)


def test_surrogate_gradient_residual_free_is_zero():
    X = np.random.default_rng(4).standard_normal((2, 3))
    st = stats_update(OnlineSufficientStats(2, 3), [LabeledSample(X, 1), LabeledSample(X, 1)])
    W = np.random.default_rng(5).standard_normal((2, 3))
    b = 1.0 - np.sum(W * X)
    np.testing.assert_allclose(surrogate_gradient(st, W, b), 0, atol=1e-12)


def test_surrogate_gradient_twenty_samples():
    rng = np.random.default_rng(6)
    S = random_samples(rng, 20, 4, 3)
    st = stats_update(OnlineSufficientStats(4, 3), S)
    Z = rng.standard_normal((4, 3))
    b = rng.standard_normal()
    direct = gradient(S, Z, b)
    assert np.linalg.norm(surrogate_gradient(st, Z, b) - direct) <= 1e-10 * np.linalg.norm(direct)


def test_surrogate_gradient_fidelity_on_every_prefix():
    rng = np.random.default_rng(7)
    S = random_samples(rng, 30, 3, 3)
    st = OnlineSufficientStats(3, 3)
    for t, s in enumerate(S, 1):
        st.update([s])
        Z = rng.standard_normal((3, 3))
        b = rng.standard_normal()
        direct = gradient(S[:t], Z, b)
        assert np.linalg.norm(st.surrogate_gradient(Z, b) - direct) <= 1e-10 * np.linalg.norm(direct)


def test_surrogate_gradient_dimension_error():
    st = stats_update(OnlineSufficientStats(2, 3), [LabeledSample(np.ones((2, 3)), 1)])
    with pytest.raises(DimensionError):
        st.surrogate_gradient(np.ones((3, 2)), 0.0)


def test_lipschitz_monotone_and_matches_batch():
    rng = np.random.default_rng(8)
    S = random_samples(rng, 15, 3, 2) + [LabeledSample(np.zeros((3, 2)), 1)]
    st = OnlineSufficientStats(3, 2)
    prev = 0.0
    for t, s in enumerate(S, 1):
        st.update([s])
        if s.X.any():
            assert st.L > prev
        else:
            assert st.L == prev
        prev = st.L
        assert st.L == pytest.approx(lipschitz_constant(S[:t]), rel=1e-12)


def test_objective_from_stats_matches_direct():
    rng = np.random.default_rng(9)
    S = random_samples(rng, 12, 3, 4)
    st = stats_update(OnlineSufficientStats(3, 4), S)
    W = rng.standard_normal((3, 4))
    model = LinearMatrixModel(W, 0.3, 0.7)
    assert st.objective(W, 0.3, 0.7) == pytest.approx(objective(S, model), rel=1e-10)


def test_single_sample_exact_matches_batch():
    rng = np.random.default_rng(10)
    S = random_samples(rng, 1, 3, 3)
    lam = 1e-3
    # Same iteration budget as the batch solver; 200 inner steps stop short here.
    online = online_fit(S, OnlineConfig(lam=lam, inner_max_iter=2000))
    batch = apg_fit(S, ApgConfig(lam=lam, max_iter=2000))
    assert abs(objective(S, online) - objective(S, batch)) <= 1e-8


@pytest.mark.parametrize("mode", ["exact", "inexact"])
def test_huge_lambda_keeps_weights_zero(mode):
    rng = np.random.default_rng(11)
    S = random_samples(rng, 9, 2, 3)
    biases = []
    model = online_fit(S, OnlineConfig(lam=1e8, mode=mode),
                       hook=lambda step: biases.append((step.model.W.copy(), step.model.b)))
    assert not model.W.any()
    labels = np.array([s.y for s in S])
    for t, (W, b) in enumerate(biases, 1):
        assert not W.any()
        assert b == pytest.approx(labels[:t].mean())


def planted_stream():
    params = SynthParams(m=4, n=3, rank=2, n_train=200, n_test=0, noise=1.5, jitter=1.0, seed=3)
    return generate(params).train


@pytest.mark.slow
def test_two_hundred_sample_stream_vs_batch():
    S = planted_stream()
    ref = objective(S, apg_fit(S, ApgConfig(lam=1.0)))
    exact = objective(S, online_fit(S, OnlineConfig(lam=1.0, mode="exact")))
    inexact = objective(S, online_fit(S, OnlineConfig(lam=1.0, mode="inexact")))
    assert abs(exact - ref) / ref <= 0.01
    assert abs(inexact - ref) / ref <= 0.05


def test_inexact_uses_two_svds_per_sample():
    rng = np.random.default_rng(12)
    S = random_samples(rng, 25, 3, 4)
    with count_svd_calls() as counter:
        model = online_fit(S, OnlineConfig(lam=0.5, mode="inexact"))
    assert counter.calls == 2 * len(S) == model.info.n_svd
    with count_svd_calls() as exact_counter:
        online_fit(S, OnlineConfig(lam=0.5, mode="exact"))
    assert exact_counter.calls > counter.calls


@pytest.mark.slow
def test_warm_start_consistency_on_prefixes():
    S = generate(SynthParams(m=3, n=2, rank=1, n_train=50, n_test=1, noise=1.0, jitter=1.0,
                             seed=1)).train
    cap = 2000
    steps = []
    online_fit(S, OnlineConfig(lam=1.0, inner_max_iter=cap), hook=steps.append)
    assert [s.t for s in steps] == list(range(1, 51))
    for step in steps:
        prefix = S[:step.t]
        ref = objective(prefix, apg_fit(prefix, ApgConfig(lam=1.0, max_iter=cap)))
        assert abs(step.objective - ref) <= 1e-6 * max(1.0, ref)


@pytest.mark.parametrize("mu", [2, 5, 10])
def test_minibatch_stats_independent_of_batch_size(mu):
    rng = np.random.default_rng(13)
    S = random_samples(rng, 30, 3, 3)
    seq = OnlineSufficientStats(3, 3)
    for s in S:
        seq.update([s])
    batched = OnlineSufficientStats(3, 3)
    for i in range(0, len(S), mu):
        batched.update(S[i:i + mu])
    assert_stats_close(batched, seq)


def test_minibatch_hook_fires_per_batch():
    rng = np.random.default_rng(14)
    S = random_samples(rng, 50, 2, 2)
    steps = []
    online_fit(S, OnlineConfig(lam=0.5, mode="inexact", batch_size=5), hook=steps.append)
    assert [s.t for s in steps] == list(range(5, 51, 5))


def test_hook_payload_objective_matches_direct():
    rng = np.random.default_rng(15)
    S = random_samples(rng, 10, 3, 2)
    steps = []
    online_fit(S, OnlineConfig(lam=0.4), hook=steps.append)
    for step in steps:
        assert step.objective == pytest.approx(objective(S[:step.t], step.model), rel=1e-9)
    assert all(a.steps <= b.steps for a, b in zip(steps, steps[1:]))


def test_exact_mode_exit_records():
    rng = np.random.default_rng(16)
    S = random_samples(rng, 6, 2, 2)
    cfg = OnlineConfig(lam=0.5, lipschitz="tight", inner_max_iter=5000)
    model = online_fit(S, cfg)
    assert [e.t for e in model.info.exits] == list(range(1, 7))
    for e in model.info.exits:
        if e.converged:
            assert e.rel_change_w < cfg.inner_eps1 and e.rel_change_b < cfg.inner_eps2
        else:
            assert e.n_iter == cfg.inner_max_iter


def test_stream_dimension_error_index():
    S = [LabeledSample(np.ones((2, 2)), 1)] * 3 + [LabeledSample(np.ones((3, 2)), -1)]
    with pytest.raises(DimensionError) as err:
        online_fit(S, OnlineConfig(mode="inexact"))
    assert err.value.index == 3


def test_empty_stream_rejected():
    with pytest.raises(ValueError):
        online_fit([], OnlineConfig())


def test_config_validation():
    for bad in (dict(lam=0), dict(inner_eps1=0), dict(inner_max_iter=0), dict(mode="fast"),
                dict(batch_size=0), dict(lipschitz="x")):
        with pytest.raises(ValueError):
            OnlineConfig(**bad)
