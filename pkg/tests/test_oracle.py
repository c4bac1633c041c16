import numpy as np
import pytest
from numpy.testing import assert_allclose

from dstorm.oracle import (
    OracleError,
    ProblemConstants,
    RngStream,
    batched_gradient,
    delta_from_delta_prime,
    inexact_oracle_eval,
    node_streams,
    stacked_batched_gradient,
)
from dstorm.problems import gen_quadratic


def test_constants_aggregates():
    c = ProblemConstants(mu_i=[1.0, 3.0], L_i=[2.0, 5.0], sigma_i=[1.0, 2.0])
    assert c.n == 2
    assert_allclose(c.mu_g, 2.0)
    assert_allclose(c.L_g, 3.5)
    assert_allclose(c.mu_l, 1.0)
    assert_allclose(c.L_l, 5.0)
    assert_allclose(c.sigma_g_sq, 2.5)
    assert_allclose(c.kappa_g, 1.75)
    assert_allclose(c.kappa_l, 5.0)
    assert_allclose(c.L_xi, 5.0)  # defaults to L_l


def test_constants_validation():
    with pytest.raises(ValueError):
        ProblemConstants(mu_i=[0.0], L_i=[1.0], sigma_i=[0.0])
    with pytest.raises(ValueError):
        ProblemConstants(mu_i=[2.0], L_i=[1.0], sigma_i=[0.0])
    with pytest.raises(ValueError):
        ProblemConstants(mu_i=[1.0], L_i=[2.0], sigma_i=[-1.0])
    with pytest.raises(ValueError):
        ProblemConstants(mu_i=[1.0], L_i=[2.0], sigma_i=[0.0], L_xi=1.0)


def test_rng_stream_replay_is_identical():
    s = RngStream(123, 4)
    a = s.at(7).standard_normal(10)
    b = s.at(7).standard_normal(10)
    assert (a == b).all()


def test_rng_streams_distinct_nodes_differ():
    a = RngStream(123, 0).at(0).standard_normal(10)
    b = RngStream(123, 1).at(0).standard_normal(10)
    assert not np.allclose(a, b)


def test_rng_stream_counters_differ():
    s = RngStream(9, 0)
    assert not np.allclose(s.at(0).standard_normal(5), s.at(1).standard_normal(5))


def test_batched_gradient_noise_free_is_exact():
    inst = gen_quadratic(n=1, d=5, kappa_target=3.0, seed=0, sigma=0.0)
    oracle = inst.oracle(0)
    x = np.ones(5)
    g = batched_gradient(oracle, x, 7, RngStream(0, 0).at(0))
    assert_allclose(g, oracle.grad(x), atol=0)


def test_batched_gradient_r1_is_single_draw():
    inst = gen_quadratic(n=1, d=5, kappa_target=3.0, seed=0, sigma=1.0)
    oracle = inst.oracle(0)
    x = np.ones(5)
    got = batched_gradient(oracle, x, 1, RngStream(5, 0).at(0))
    rng = RngStream(5, 0).at(0)
    manual = oracle.grad(x) + (1.0 / np.sqrt(5)) * rng.standard_normal(5)
    assert_allclose(got, manual, atol=0)


def test_batched_gradient_rejects_bad_r():
    inst = gen_quadratic(n=1, d=3, kappa_target=2.0, seed=0)
    with pytest.raises(ValueError):
        batched_gradient(inst.oracle(0), np.zeros(3), 0, RngStream(0, 0).at(0))


def test_batched_gradient_variance_law():
    # sigma^2 = 1, r = 10: E||gtilde - g||^2 should sit near 0.1
    inst = gen_quadratic(n=1, d=4, kappa_target=2.0, seed=1, sigma=1.0)
    oracle = inst.oracle(0)
    x = np.zeros(4)
    g = oracle.grad(x)
    stream = RngStream(2, 0)
    trials = 100_000
    total = 0.0
    for t in range(trials):
        gt = oracle.batched_grad(x, 10, stream.at(t))
        diff = gt - g
        total += diff @ diff
    emp = total / trials
    assert 0.08 <= emp <= 0.12


def test_stacked_batched_gradient_single_node_reduction():
    inst = gen_quadratic(n=1, d=4, kappa_target=2.0, seed=3, sigma=0.5)
    X = np.ones((1, 4))
    g_stack = stacked_batched_gradient(
        inst.oracles(), X, 5, [RngStream(7, 0).at(0)]
    )
    g_single = batched_gradient(inst.oracle(0), X[0], 5, RngStream(7, 0).at(0))
    assert_allclose(g_stack[0], g_single, atol=0)


def test_stacked_batched_gradient_noise_free_matches_grads():
    inst = gen_quadratic(n=3, d=4, kappa_target=4.0, seed=4, sigma=0.0)
    rng = np.random.default_rng(0)
    X = rng.standard_normal((3, 4))
    G = stacked_batched_gradient(
        inst.oracles(), X, 2, [s.at(0) for s in node_streams(0, 3)]
    )
    for i in range(3):
        assert_allclose(G[i], inst.node_grad(i, X[i]), atol=0)


def test_stacked_batched_gradient_independent_noise_across_nodes():
    inst = gen_quadratic(n=2, d=4, kappa_target=2.0, seed=5, sigma=1.0)
    # identical oracles and identical rows, distinct streams -> rows differ
    inst.Bs[1] = inst.Bs[0].copy()
    inst.cs[1] = inst.cs[0].copy()
    X = np.zeros((2, 4))
    G = stacked_batched_gradient(
        inst.oracles(), X, 3, [s.at(0) for s in node_streams(11, 2)]
    )
    assert not np.allclose(G[0], G[1])


def test_stacked_batched_gradient_annotates_node_errors():
    inst = gen_quadratic(n=2, d=3, kappa_target=2.0, seed=6)

    class Broken:
        def batched_grad(self, x, r, rng):
            raise RuntimeError("boom")

    with pytest.raises(OracleError, match="node 1"):
        stacked_batched_gradient(
            [inst.oracle(0), Broken()], np.zeros((2, 3)), 1,
            [s.at(0) for s in node_streams(0, 2)],
        )


def test_delta_from_delta_prime_zero():
    c = ProblemConstants(mu_i=[1.0], L_i=[1.0], sigma_i=[0.0])
    assert delta_from_delta_prime(0.0, c) == 0.0


def test_delta_from_delta_prime_single_node():
    c = ProblemConstants(mu_i=[1.0], L_i=[1.0], sigma_i=[0.0])
    assert_allclose(delta_from_delta_prime(1.0, c), 1.5)


def test_delta_from_delta_prime_hand_value():
    c = ProblemConstants(mu_i=[1.0] * 4, L_i=[4.0] * 4, sigma_i=[0.0] * 4)
    assert_allclose(delta_from_delta_prime(0.01, c), 0.048750)


def test_inexact_oracle_consensual_stack():
    inst = gen_quadratic(n=3, d=5, kappa_target=5.0, seed=8, sigma=0.0)
    c = inst.constants()
    x_bar = np.random.default_rng(1).standard_normal(5)
    X = np.tile(x_bar, (3, 1))
    f_delta, g, g_tilde = inexact_oracle_eval(
        X, c, inst.oracles(), 1, [s.at(0) for s in node_streams(0, 3)]
    )
    assert_allclose(f_delta, inst.f(x_bar), atol=1e-12)
    assert_allclose(g, inst.grad_f(x_bar), atol=1e-12)
    assert_allclose(g_tilde, g, atol=0)  # noise-free


def test_inexact_oracle_envelope_two_node_instance():
    # rows x_bar +/- e: both sides of the quadratic envelope hold
    inst = gen_quadratic(n=2, d=4, kappa_target=8.0, seed=9, sigma=0.0)
    c = inst.constants()
    rng = np.random.default_rng(2)
    delta_prime = 0.01
    for _ in range(100):
        x_bar = rng.standard_normal(4)
        e = rng.standard_normal(4)
        e *= np.sqrt(delta_prime / 2.0) / np.linalg.norm(e)
        X = np.stack([x_bar + e, x_bar - e])
        f_delta, g, _ = inexact_oracle_eval(
            X, c, inst.oracles(), 1, [s.at(0) for s in node_streams(0, 2)]
        )
        delta = delta_from_delta_prime(delta_prime, c)
        y_bar = x_bar + rng.standard_normal(4) * rng.uniform(0.0, 2.0)
        lhs = inst.f(y_bar) - f_delta - g @ (y_bar - x_bar)
        dist_sq = float((y_bar - x_bar) @ (y_bar - x_bar))
        assert lhs >= c.mu_g / 4.0 * dist_sq - 1e-8
        assert lhs <= c.L_g * dist_sq + delta + 1e-8


def test_unbiasedness_quadratic_oracle():
    inst = gen_quadratic(n=1, d=4, kappa_target=3.0, seed=10, sigma=1.0)
    oracle = inst.oracle(0)
    x = np.random.default_rng(3).standard_normal(4)
    g = oracle.grad(x)
    stream = RngStream(13, 0)
    trials = 100_000
    acc = np.zeros(4)
    for t in range(trials):
        acc += oracle.sample_grad(x, stream.at(t))
    mean = acc / trials
    assert np.linalg.norm(mean - g) <= 4.0 * 1.0 / np.sqrt(trials)


def test_unbiasedness_logistic_oracle():
    from dstorm.problems import make_logistic_instance, synthetic_classification

    ds = synthetic_classification(200, 6, seed=4)
    inst = make_logistic_instance(ds, n_nodes=2, theta=0.1, partition_seed=0)
    oracle = inst.oracle(0)
    sigma = inst.sigma_i[0]
    x = np.zeros(6)
    g = oracle.grad(x)
    stream = RngStream(17, 0)
    trials = 100_000
    acc = np.zeros(6)
    for t in range(trials):
        acc += oracle.sample_grad(x, stream.at(t))
    mean = acc / trials
    assert np.linalg.norm(mean - g) <= 4.0 * sigma / np.sqrt(trials)


def test_variance_contraction_node_average():
    # E||gtilde - g||^2 <= 1.2 sigma_g^2/(n r) over 10^4 trials
    n, r = 4, 10
    inst = gen_quadratic(n=n, d=4, kappa_target=5.0, seed=12, sigma=1.0)
    c = inst.constants()
    oracles = inst.oracles()
    X = np.tile(np.random.default_rng(5).standard_normal(4), (n, 1))
    g = np.mean([oracles[i].grad(X[i]) for i in range(n)], axis=0)
    streams = node_streams(19, n)
    trials = 10_000
    total = 0.0
    for t in range(trials):
        gt = stacked_batched_gradient(
            oracles, X, r, [s.at(t) for s in streams]
        ).mean(axis=0)
        diff = gt - g
        total += diff @ diff
    assert total / trials <= 1.2 * c.sigma_g_sq / (n * r)


def test_gtilde_sequence_bitwise_deterministic():
    inst = gen_quadratic(n=3, d=4, kappa_target=4.0, seed=13, sigma=1.0)
    X = np.ones((3, 4))

    def sequence(master):
        streams = node_streams(master, 3)
        out = []
        for k in range(5):
            G = stacked_batched_gradient(
                inst.oracles(), X, 4, [s.at(k) for s in streams]
            )
            out.append(G.mean(axis=0))
        return np.array(out)

    assert (sequence(42) == sequence(42)).all()
    assert not np.allclose(sequence(42), sequence(43))
