"""Graph semantics: backward sweep, accumulation, replay, and misuse errors."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msgunet import tensor as T
from msgunet.errors import GraphError
from msgunet.tensor import Tensor


def test_mean_grad_is_uniform(rng):
    x = Tensor(rng.standard_normal((2, 3, 4, 5)), requires_grad=True)
    T.backward(T.mean(x))
    np.testing.assert_allclose(x.grad, 1.0 / x.data.size, rtol=1e-6)


def test_two_consumers_double_the_grad(rng):
    # the multi-head gradient mechanism in miniature
    x = Tensor(rng.standard_normal((1, 2, 3, 3)), requires_grad=True)
    y = T.leaky_relu(x, 0.5)
    loss = T.add(T.mean(y), T.mean(y))
    T.backward(loss)
    double = x.grad.copy()

    x2 = Tensor(x.data.copy(), requires_grad=True)
    T.backward(T.mean(T.leaky_relu(x2, 0.5)))
    np.testing.assert_allclose(double, 2.0 * x2.grad, rtol=1e-6)


@given(k=st.integers(min_value=1, max_value=6))
@settings(max_examples=10, deadline=None)
def test_grad_accumulates_once_per_consumer(k):
    x = Tensor(np.full((1, 1, 2, 2), 0.5), requires_grad=True, dtype=np.float64)
    total = None
    for _ in range(k):
        term = T.tensor_sum(x)
        total = term if total is None else T.add(total, term)
    T.backward(total)
    np.testing.assert_allclose(x.grad, float(k), rtol=1e-12)


def test_non_scalar_loss_rejected(rng):
    x = Tensor(rng.standard_normal((1, 1, 2, 2)), requires_grad=True)
    y = T.leaky_relu(x)
    with pytest.raises(GraphError, match="scalar"):
        T.backward(y)


def test_backward_twice_rejected(rng):
    x = Tensor(rng.standard_normal((1, 1, 2, 2)), requires_grad=True)
    loss = T.mean(T.square(x))
    T.backward(loss)
    with pytest.raises(GraphError, match="twice"):
        T.backward(loss)


def test_backward_twice_rejected_through_shared_subgraph(rng):
    x = Tensor(rng.standard_normal((1, 1, 2, 2)), requires_grad=True)
    y = T.square(x)
    loss1 = T.mean(y)
    T.backward(loss1)
    loss2 = T.tensor_sum(y)  # reuses the consumed node y
    with pytest.raises(GraphError, match="twice"):
        T.backward(loss2)


def test_no_grad_graph_rejected(rng):
    x = Tensor(rng.standard_normal((1, 1, 2, 2)))
    with pytest.raises(GraphError):
        T.backward(T.mean(x))


def test_detach_blocks_gradient(rng):
    x = Tensor(rng.standard_normal((1, 1, 3, 3)), requires_grad=True)
    y = T.square(x)
    z = T.mean(T.square(y.detach()))
    with pytest.raises(GraphError):
        T.backward(z)  # nothing upstream requires grad
    assert x.grad is None


def test_backward_resets_then_accumulates(rng):
    x = Tensor(rng.standard_normal((1, 1, 2, 2)), requires_grad=True)
    T.backward(T.mean(x))
    first = x.grad.copy()
    T.backward(T.tensor_sum(x))
    np.testing.assert_allclose(x.grad, np.ones_like(x.data), rtol=1e-6)
    assert not np.allclose(first, x.grad)


class TestGraphRecords:
    def test_topological_order(self, rng):
        x = Tensor(rng.standard_normal((1, 1, 3, 3)), requires_grad=True)
        w = Tensor(rng.standard_normal((2, 1, 2, 2)), requires_grad=True)
        loss = T.mean(T.leaky_relu(T.conv2d(x, w, stride=1, padding=1), 0.2))
        records = T.graph_records(loss)
        assert records, "graph should have interior records"
        for op, inputs, output in records:
            assert all(i < output for i in inputs)

    def test_replay_is_bitwise_at_64bit(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 8, 8)), requires_grad=True, dtype=np.float64)
        w = Tensor(rng.standard_normal((4, 3, 4, 4)), dtype=np.float64)
        g = Tensor(np.ones(4), dtype=np.float64)
        b = Tensor(np.zeros(4), dtype=np.float64)
        stats = T.RunningStats(4, dtype=np.float64)
        y = T.conv2d(x, w, stride=2, padding=1)
        y = T.batch_norm2d(y, g, b, stats, train=True)
        y = T.tanh(y)
        loss = T.l1_distance(y, Tensor(np.zeros_like(y.data), dtype=np.float64))
        replayed = T.replay_forward(loss)
        assert replayed.shape == loss.data.shape
        assert np.array_equal(replayed, loss.data)


def test_full_toy_generator_grads_match_fd(rng):
    """Every generator parameter matches central differences end to end.

    Smooth squared-error toy loss on a 3-scale net, so finite differences
    stay well-conditioned through the whole depth.
    """
    from helpers import assert_grad_close, sample_coords
    from msgunet.nets import ArchitectureConfig, MsgUNetGenerator

    cfg = ArchitectureConfig(scale_chain=((8, 8), (16, 16), (32, 32)),
                             bottleneck=(4, 4), channel_widths=(2, 3, 4, 5))
    gen = MsgUNetGenerator(cfg, seed=3, dtype=np.float64)
    chain = cfg.scale_chain
    x = [Tensor(rng.uniform(-1, 1, (1, 3, h, w)), dtype=np.float64) for h, w in chain]
    targets = [Tensor(rng.uniform(-1, 1, (1, 3, h, w)), dtype=np.float64)
               for h, w in chain]

    def loss_tensor():
        outs = gen.forward(x, train=True)
        total = None
        for z, t in zip(outs, targets):
            term = T.mean(T.square(T.add(z, T.scale(t, -1.0))))
            total = term if total is None else T.add(total, term)
        return total

    T.backward(loss_tensor())
    params = gen.named_parameters()
    grads = {n: p.grad.copy() if p.grad is not None else None for n, p in params.items()}
    for name, p in params.items():
        assert grads[name] is not None, f"parameter {name} received no gradient"
        coords = sample_coords(rng, p.data.size, 3)
        assert_grad_close(grads[name], lambda: float(loss_tensor().data), p.data,
                          coords, rtol=1e-2, atol=1e-6)
