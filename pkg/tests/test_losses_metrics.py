import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from navdistill.errors import ContractError, DegenerateBatchError
from navdistill.losses import barlow_twins_loss, cross_correlation, mse_traj
from navdistill.metrics import ade, aoe, fde, mse
from oracles import ref_ade, ref_aoe, ref_bt_loss, ref_fde

ORTHO = torch.tensor([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]], dtype=torch.float64)
TWIN = torch.tensor([[1.0, 1.0], [-1.0, -1.0]], dtype=torch.float64)


def test_identity_correlation():
    c = cross_correlation(ORTHO, ORTHO)
    assert torch.allclose(c, torch.eye(2, dtype=torch.float64), atol=1e-12)
    assert abs(barlow_twins_loss(ORTHO, ORTHO, 5e-3).item()) < 1e-9


def test_identical_columns_give_all_ones():
    c = cross_correlation(TWIN, TWIN)
    assert torch.allclose(c, torch.ones(2, 2, dtype=torch.float64), atol=1e-12)
    assert abs(barlow_twins_loss(TWIN, TWIN, 5e-3).item() - 0.01) < 1e-9


def test_negated_batch():
    assert torch.allclose(cross_correlation(ORTHO, -ORTHO), -torch.eye(2, dtype=torch.float64), atol=1e-12)
    assert abs(barlow_twins_loss(ORTHO, -ORTHO, 5e-3).item() - 8.0) < 1e-9


def test_zero_variance_dimension_raises():
    a = torch.randn(8, 4, dtype=torch.float64)
    a[:, 2] = 3.0
    with pytest.raises(DegenerateBatchError):
        barlow_twins_loss(a, torch.randn(8, 4, dtype=torch.float64))


def test_shape_mismatch_raises():
    with pytest.raises(ContractError):
        cross_correlation(torch.randn(8, 4), torch.randn(8, 3))


def test_numpy_inputs_accepted():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    assert abs(barlow_twins_loss(a, b, 0.01).item() - ref_bt_loss(a.tolist(), b.tolist(), 0.01)) < 1e-9


def test_gradients_match_finite_differences():
    g = torch.Generator().manual_seed(0)
    a = torch.randn(8, 4, dtype=torch.float64, generator=g, requires_grad=True)
    b = torch.randn(8, 4, dtype=torch.float64, generator=g, requires_grad=True)
    assert torch.autograd.gradcheck(lambda x, y: barlow_twins_loss(x, y, 5e-3), (a, b), eps=1e-6, atol=1e-7, rtol=1e-3)


batches = arrays(np.float64, (8, 4), elements=st.floats(-3, 3)).filter(lambda x: (x.std(axis=0) > 1e-3).all())


@settings(max_examples=60, deadline=None)
@given(a=batches, b=batches)
def test_loss_matches_reference(a, b):
    got = barlow_twins_loss(a, b, 5e-3).item()
    assert abs(got - ref_bt_loss(a.tolist(), b.tolist(), 5e-3)) < 1e-9 * max(1.0, abs(got))


@settings(max_examples=60, deadline=None)
@given(a=batches)
def test_self_correlation_has_unit_diagonal(a):
    c = cross_correlation(a, a)
    assert torch.allclose(torch.diagonal(c), torch.ones(4, dtype=torch.float64), atol=1e-12)
    assert c.abs().max().item() <= 1 + 1e-6


@settings(max_examples=60, deadline=None)
@given(a=batches, b=batches)
def test_swapping_batches_transposes(a, b):
    assert torch.allclose(cross_correlation(a, b), cross_correlation(b, a).T, atol=1e-12)
    assert abs(barlow_twins_loss(a, b).item() - barlow_twins_loss(b, a).item()) < 1e-9


@settings(max_examples=60, deadline=None)
@given(a=batches, b=batches, dim=st.integers(0, 3), scale=st.floats(0.01, 100))
def test_dimension_scale_invariance(a, b, dim, scale):
    a2 = a.copy()
    a2[:, dim] *= scale
    assert abs(barlow_twins_loss(a, b).item() - barlow_twins_loss(a2, b).item()) < 1e-9


def test_mse_examples():
    z = np.zeros((5, 2))
    assert mse_traj(z, z).item() == 0.0
    ones = np.tile([1.0, 0.0], (5, 1))
    assert mse_traj(ones, z).item() == 0.5
    assert mse_traj([[3.0, 4.0]], [[0.0, 0.0]]).item() == 12.5
    assert mse(ones, z) == 0.5


def test_ade_fde_examples():
    p, g = [[1.0, 0.0], [2.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]
    assert ade(p, g) == 1.5 and fde(p, g) == 2.0
    assert ade([[0.0, 1.0]], [[0.0, 0.0]]) == 1.0 == fde([[0.0, 1.0]], [[0.0, 0.0]])
    assert ade(p, p) == 0.0 and fde(p, p) == 0.0


def test_aoe_examples():
    xs = [[float(k), 0.0] for k in range(1, 6)]
    ys = [[0.0, float(k)] for k in range(1, 6)]
    assert aoe(xs, xs) == 0.0
    assert aoe(xs, ys) == math.pi / 2
    assert aoe([[1.0, 0.0]], [[-1.0, 0.0]]) == math.pi
    assert aoe([[0.0, 0.0]], [[1.0, 0.0]]) == 0.0


def test_metric_shape_mismatch():
    with pytest.raises(ContractError):
        ade(np.zeros((5, 2)), np.zeros((4, 2)))


def test_batched_metrics_keep_leading_axes():
    rng = np.random.default_rng(3)
    p, g = rng.normal(size=(7, 5, 2)), rng.normal(size=(7, 5, 2))
    out = ade(p, g)
    assert out.shape == (7,)
    assert np.allclose(out, [ade(p[i], g[i]) for i in range(7)], atol=0, rtol=0)


def test_metrics_match_reference_on_random_pairs():
    rng = np.random.default_rng(42)
    for _ in range(100):
        h = int(rng.integers(1, 9))
        p, g = rng.normal(size=(h, 2)) * 3, rng.normal(size=(h, 2)) * 3
        if rng.random() < 0.1:
            p[0] = 0.0
        assert abs(ade(p, g) - ref_ade(p.tolist(), g.tolist())) < 1e-9
        assert abs(fde(p, g) - ref_fde(p.tolist(), g.tolist())) < 1e-9
        assert abs(aoe(p, g) - ref_aoe(p.tolist(), g.tolist())) < 1e-9


traj = arrays(np.float64, (5, 2), elements=st.floats(-10, 10))


@settings(max_examples=100, deadline=None)
@given(p=traj, g=traj, s=st.floats(0.01, 100))
def test_aoe_scale_invariant(p, g, s):
    keep = (np.linalg.norm(p, axis=1) * min(1, s) >= 1e-5) & (np.linalg.norm(g, axis=1) * min(1, s) >= 1e-5)
    p, g = p[keep], g[keep]
    if len(p):
        assert abs(aoe(p, g) - aoe(p * s, g * s)) < 1e-9


@settings(max_examples=100, deadline=None)
@given(p=traj, g=traj)
def test_ade_bounded_by_largest_error(p, g):
    assert ade(p, g) <= np.linalg.norm(p - g, axis=1).max() + 1e-12
    assert 0.0 <= aoe(p, g) <= math.pi
