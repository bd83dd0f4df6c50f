import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_dataset
from lnnbench.datagen import Dataset, generate_dataset
from lnnbench.models import LinearParams, LnnParams, collapse, forward_lnn, init_lnn
from lnnbench.optim import (
    LineLoss,
    Status,
    TrainConfig,
    format_trace,
    gd_step,
    grad_linear,
    grad_lnn,
    mse,
    read_trace_csv,
    train,
    write_trace_csv,
)
from lnnbench.oracle import normal_equation
from oracles import assert_fd_close, central_diff, chain_loss, loop_mse


# --- mse


def test_mse_zero_residual():
    assert mse([1.0, -2.0, 3.5], [1.0, -2.0, 3.5]) == 0.0


def test_mse_arithmetic():
    assert mse([0, 0], [1, 3]) == 5.0


def test_mse_matches_loop(rng):
    p, y = rng.standard_normal(500), rng.standard_normal(500)
    assert mse(p, y) == pytest.approx(loop_mse(p, y), rel=1e-12)


def test_mse_rejects_mismatch():
    with pytest.raises(ValueError):
        mse([1.0, 2.0], [1.0])


# --- gradients


def test_grad_linear_single_point():
    assert grad_linear(LinearParams(1, 0), Dataset([1.0], [0.0], 0, 0, 0)) == (2.0, 2.0)


def test_grad_linear_zero_at_optimum(rng):
    data = random_dataset(rng, 300)
    gm, gb = grad_linear(normal_equation(data), data)
    assert abs(gm) < 1e-9 and abs(gb) < 1e-9


def test_grad_linear_finite_differences(rng):
    for _ in range(10):
        data = random_dataset(rng, 30)
        p = rng.standard_normal(2)
        numeric = central_diff(lambda q: chain_loss(q, data.inputs, data.labels), p)
        assert_fd_close(grad_linear(LinearParams(*p), data), numeric)


def test_grad_lnn_depth_one_is_grad_linear(rng):
    data = random_dataset(rng, 40)
    w, b = rng.standard_normal(2)
    np.testing.assert_allclose(grad_lnn(LnnParams(((w, b),)), data), grad_linear(LinearParams(w, b), data), rtol=1e-14)


def test_grad_lnn_w2_entry_two_layers(rng):
    data = random_dataset(rng, 25)
    (w1, b1), (w2, b2) = rng.standard_normal((2, 2))
    yhat = w2 * w1 * data.inputs + w2 * b1 + b2
    direct = 2.0 / len(data) * np.sum((yhat - data.labels) * (w1 * data.inputs + b1))
    g = grad_lnn(LnnParams(((w1, b1), (w2, b2))), data)
    assert g[2] == pytest.approx(direct, rel=1e-12)


def test_grad_lnn_depth_three_finite_differences(rng):
    data = random_dataset(rng, 20)
    p = init_lnn(3, "normal", rng).flat()
    numeric = central_diff(lambda q: chain_loss(q, data.inputs, data.labels), p)
    g = grad_lnn(LnnParams.from_flat(p), data)
    assert g.size == 6
    assert_fd_close(g, numeric)


@settings(max_examples=40, deadline=None)
@given(depth=st.integers(1, 10), n=st.integers(2, 50), seed=st.integers(0, 10_000))
def test_gradient_correctness_property(depth, n, seed):
    rng = np.random.default_rng(seed)
    data = random_dataset(rng, n)
    p = rng.uniform(-1.2, 1.2, 2 * depth)
    numeric = central_diff(lambda q: chain_loss(q, data.inputs, data.labels), p)
    assert_fd_close(grad_lnn(LnnParams.from_flat(p), data), numeric)


def random_factorization(rng, line, depth):
    # random layers 1..L-1, last layer chosen so the chain collapses to `line`
    head = rng.uniform(0.5, 1.5, (depth - 1, 2)) * rng.choice([-1, 1], (depth - 1, 2))
    partial = collapse(LnnParams(tuple(map(tuple, head.tolist()))))
    w_last = line.slope / partial.slope
    b_last = line.intercept - w_last * partial.intercept
    return LnnParams(tuple(map(tuple, head.tolist())) + ((w_last, b_last),))


def test_stationary_manifold(rng):
    for depth in range(2, 11):
        data = random_dataset(rng, 200)
        opt = normal_equation(data)
        p = random_factorization(rng, opt, depth)
        products = np.abs(np.cumprod(p.weights[::-1]))
        assert np.linalg.norm(grad_lnn(p, data)) < 1e-8 * (1 + products.max())


# --- fast moment-based loss used inside train


def test_line_loss_matches_direct(rng):
    for n in (2, 37, 1000):
        data = random_dataset(rng, n)
        loss = LineLoss.from_dataset(data)
        for m, c in rng.standard_normal((5, 2)):
            direct = mse(m * data.inputs + c, data.labels)
            assert loss.value(m, c) == pytest.approx(direct, rel=1e-11)
            np.testing.assert_allclose(loss.grad(m, c), grad_linear(LinearParams(m, c), data), rtol=1e-9, atol=1e-12)


def test_line_loss_constant_inputs():
    data = Dataset([2.0, 2.0, 2.0], [1.0, 2.0, 6.0], 0, 0, 0)
    loss = LineLoss.from_dataset(data)
    assert loss.value(0.5, 1.0) == pytest.approx(mse([2.0] * 3, data.labels))
    np.testing.assert_allclose(loss.grad(0.5, 1.0), grad_linear(LinearParams(0.5, 1.0), data))


# --- gd_step


def test_gd_step_zero_gradient_and_rate():
    p = LnnParams(((0.3, 0.1), (-1.0, 2.0)))
    assert gd_step(p, np.zeros(4), 0.1) == p
    assert gd_step(p, np.ones(4), 0.0) == p


def test_gd_step_arithmetic():
    assert gd_step(LinearParams(1, 1), (2, -4), 0.5) == LinearParams(0, 3)


def test_gd_step_rejects_mismatch():
    with pytest.raises(ValueError):
        gd_step(LinearParams(1, 1), (1, 2, 3), 0.1)
    with pytest.raises(ValueError):
        gd_step(LnnParams(((1, 1),)), (1, 2, 3, 4), 0.1)


def test_gd_step_is_simultaneous(rng):
    data = random_dataset(rng, 30)
    p = init_lnn(4, "normal", rng)
    g = grad_lnn(p, data)
    np.testing.assert_array_equal(gd_step(p, g, 0.01).flat(), p.flat() - 0.01 * g)


# --- train


def noiseless_pair(seed, a=2.0, b=1.0, n=1000):
    rng = np.random.default_rng(seed)
    return generate_dataset(n, a, b, 0.0, rng), generate_dataset(200, a, b, 0.0, rng)


def test_train_noiseless_linear_regression():
    tr, te = noiseless_pair(0)
    res = train(LinearParams(0.1, -0.3), tr, te, TrainConfig(), normal_equation(tr))
    assert res.status is Status.CONVERGED
    assert res.final_deviation < 1e-3
    assert isinstance(res.final_params, LinearParams)


def test_train_stationary_start_converges_immediately(rng):
    tr = random_dataset(rng, 500)
    te = random_dataset(rng, 100)
    opt = normal_equation(tr)
    p = random_factorization(rng, opt, 5)
    assert np.linalg.norm(grad_lnn(p, tr)) < 1e-8
    res = train(p, tr, te, TrainConfig(), opt)
    assert res.status is Status.CONVERGED
    assert res.iterations_used == 0
    assert len(res.trace) == 1


def test_train_budget_of_one():
    tr, te = noiseless_pair(1)
    res = train(LinearParams(0.0, 0.0), tr, te, TrainConfig(max_iterations=1), normal_equation(tr))
    assert res.status is Status.BUDGET_EXHAUSTED
    assert res.iterations_used == 1
    assert list(res.trace.iteration) == [0, 1]


def test_train_zero_rate_keeps_params():
    tr, te = noiseless_pair(2)
    p = LnnParams(((0.5, 0.2), (-0.4, 0.9)))
    res = train(p, tr, te, TrainConfig(learning_rate=0.0, max_iterations=200), normal_equation(tr))
    assert res.status is Status.BUDGET_EXHAUSTED
    assert res.final_params == p


def test_train_trace_matches_direct_evaluation(rng):
    tr = random_dataset(rng, 80)
    te = random_dataset(rng, 40)
    opt = normal_equation(tr)
    p = init_lnn(3, "uniform", rng)
    res = train(p, tr, te, TrainConfig(max_iterations=50), opt)
    # replay the same steps with the per-sample gradient path
    q = p
    for t in range(1, 51):
        q = gd_step(q, grad_lnn(q, tr), 1e-3)
    line = collapse(q)
    np.testing.assert_allclose(res.final_params.flat(), q.flat(), rtol=1e-10)
    assert res.trace.train_mse[-1] == pytest.approx(mse(forward_lnn(q, tr.inputs), tr.labels), rel=1e-10)
    assert res.trace.test_mse[-1] == pytest.approx(mse(forward_lnn(q, te.inputs), te.labels), rel=1e-10)
    expected_d = abs(line.slope - opt.slope) + abs(line.intercept - opt.intercept)
    assert res.trace.deviation[-1] == pytest.approx(expected_d, rel=1e-8)


def test_train_divergence_is_a_status(rng):
    tr = random_dataset(rng, 100)
    te = random_dataset(rng, 50)
    res = train(LnnParams(((2.0, 1.0),) * 6), tr, te, TrainConfig(learning_rate=0.5), normal_equation(tr))
    assert res.status is Status.DIVERGED
    assert np.all(np.isfinite(res.trace.train_mse))
    assert np.all(np.isfinite(res.final_params.flat()))


def test_train_divergence_threshold(rng):
    tr = random_dataset(rng, 100)
    te = random_dataset(rng, 50)
    cfg = TrainConfig(divergence_threshold=1e-6)
    res = train(LinearParams(5.0, 5.0), tr, te, cfg, normal_equation(tr))
    assert res.status is Status.DIVERGED and res.iterations_used == 0


def test_train_monotone_descent_small_rate(rng):
    for _ in range(5):
        tr = random_dataset(rng, 60, noise=1.0)
        x = tr.inputs
        hess = 2 / x.size * np.array([[x @ x, x.sum()], [x.sum(), x.size]])
        lr = 0.9 / np.linalg.eigvalsh(hess).max()
        res = train(LinearParams(*rng.standard_normal(2) * 3), tr, tr, TrainConfig(learning_rate=lr, max_iterations=2000), normal_equation(tr))
        j = res.trace.train_mse
        assert np.all(np.diff(j) <= 1e-15 * j[:-1])


def test_train_deterministic(rng):
    tr = random_dataset(rng, 100)
    te = random_dataset(rng, 30)
    p = init_lnn(6, "uniform", np.random.default_rng(1))
    r1 = train(p, tr, te, TrainConfig(max_iterations=3000), normal_equation(tr))
    r2 = train(p, tr, te, TrainConfig(max_iterations=3000), normal_equation(tr))
    assert format_trace(r1) == format_trace(r2)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"learning_rate": -1e-3},
        {"learning_rate": float("nan")},
        {"max_iterations": 0},
        {"convergence_tol": 0.0},
        {"convergence_window": 0},
        {"divergence_threshold": -1.0},
        {"init_scheme": "xavier"},
    ],
)
def test_train_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_trace_csv_roundtrip(tmp_path):
    tr, te = noiseless_pair(3)
    res = train(LinearParams(0.0, 0.0), tr, te, TrainConfig(max_iterations=25), normal_equation(tr))
    path = write_trace_csv(res, tmp_path / "t.csv")
    assert path.read_text().splitlines()[0] == "iteration,train_mse,test_mse,deviation"
    back = read_trace_csv(path)
    np.testing.assert_array_equal(back.iteration, res.trace.iteration)
    np.testing.assert_array_equal(back.deviation, res.trace.deviation)
    np.testing.assert_array_equal(back.test_mse, res.trace.test_mse)
