"""
Tests for squash and routing by agreement
"""
import math

import numpy as np
import pytest
import torch

from domain.model.errors import InvalidShape
from domain.service.routing import route, squash


def test_squash_norm_law():
    torch.manual_seed(0)
    s = torch.randn(10000, 8, dtype=torch.float64) * torch.rand(10000, 1, dtype=torch.float64) * 4
    v = squash(s)
    n = s.norm(dim=-1)
    torch.testing.assert_close(v.norm(dim=-1), n ** 2 / (1 + n ** 2), atol=1e-6, rtol=0)
    cosine = (v * s).sum(-1) / (v.norm(dim=-1) * n)
    assert torch.all(cosine > 1 - 1e-9)


def test_squash_examples():
    v = squash(torch.tensor([3.0, 4.0], dtype=torch.float64))
    torch.testing.assert_close(v, torch.tensor([0.6, 0.8], dtype=torch.float64) * 25 / 26)
    assert squash(torch.zeros(4)).abs().sum() == 0


def test_squash_gradient_finite_at_zero():
    s = torch.zeros(3, dtype=torch.float64, requires_grad=True)
    squash(s).sum().backward()
    assert torch.all(torch.isfinite(s.grad))


def test_squash_gradcheck():
    s = torch.randn(4, 3, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(squash, (s,))


def _scalar_routing(preds, iterations):
    """Loop-by-loop routing over plain Python floats"""
    n, j, d = len(preds), len(preds[0]), len(preds[0][0])
    b = [[0.0] * j for _ in range(n)]
    history = []
    v = None
    for _ in range(iterations):
        c = []
        for i in range(n):
            m = max(b[i])
            e = [math.exp(x - m) for x in b[i]]
            c.append([x / sum(e) for x in e])
        history.append(c)
        v = []
        for jj in range(j):
            s = [sum(c[i][jj] * preds[i][jj][k] for i in range(n)) for k in range(d)]
            sq = sum(x * x for x in s)
            scale = sq / (1 + sq) / math.sqrt(sq) if sq > 0 else 0.0
            v.append([x * scale for x in s])
        for i in range(n):
            for jj in range(j):
                b[i][jj] += sum(preds[i][jj][k] * v[jj][k] for k in range(d))
    return v, history


def test_route_matches_scalar_transcription():
    rng = np.random.default_rng(0)
    preds = rng.normal(size=(2, 2, 2))
    v, state = route(torch.from_numpy(preds), iterations=3, record_history=True)
    expected_v, expected_c = _scalar_routing(preds.tolist(), 3)
    np.testing.assert_allclose(v.numpy(), expected_v, atol=1e-6)
    assert len(state.history) == 3
    for got, want in zip(state.history, expected_c):
        np.testing.assert_allclose(got.numpy(), want, atol=1e-6)
        np.testing.assert_allclose(got.sum(dim=-1).numpy(), 1.0, atol=1e-12)


def test_route_larger_instance_against_scalar():
    rng = np.random.default_rng(1)
    preds = rng.normal(size=(5, 3, 4))
    v, _ = route(torch.from_numpy(preds), iterations=4)
    expected_v, _ = _scalar_routing(preds.tolist(), 4)
    np.testing.assert_allclose(v.numpy(), expected_v, atol=1e-9)


def test_single_iteration_uses_uniform_couplings():
    preds = torch.randn(6, 3, 2, dtype=torch.float64)
    v, state = route(preds, iterations=1)
    torch.testing.assert_close(state.couplings, torch.full((6, 3), 1 / 3, dtype=torch.float64))
    torch.testing.assert_close(v, squash(preds.mean(dim=0)))


def test_zero_predictions_route_to_zero():
    v, state = route(torch.zeros(4, 2, 3), iterations=3)
    assert torch.all(v == 0)
    assert torch.all(state.logits == 0)


def test_agreement_raises_coupling_to_agreeing_output():
    # every input capsule predicts the same vector for output 0 and noise for output 1
    torch.manual_seed(0)
    preds = torch.randn(8, 2, 4, dtype=torch.float64) * 0.3
    preds[:, 0, :] = torch.tensor([1.0, 1.0, 0.0, 0.0], dtype=torch.float64)
    _, state = route(preds, iterations=3, record_history=True)
    first, last = state.history[0][:, 0].mean(), state.history[-1][:, 0].mean()
    assert last > first


def test_batch_dimensions_route_independently():
    preds = torch.randn(3, 5, 2, 4, dtype=torch.float64)
    v, _ = route(preds)
    assert v.shape == (3, 2, 4)
    for b in range(3):
        torch.testing.assert_close(v[b], route(preds[b])[0])


def test_route_gradcheck():
    preds = torch.randn(3, 2, 2, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(lambda p: route(p, iterations=3)[0], (preds,))


def test_route_rejects_bad_arguments():
    with pytest.raises(ValueError):
        route(torch.randn(2, 2, 2), iterations=0)
    with pytest.raises(InvalidShape):
        route(torch.randn(2, 2))
    with pytest.raises(InvalidShape):
        route(torch.randn(0, 2, 2))
