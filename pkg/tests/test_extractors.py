"""Frozen ID / landmark stubs: normalization, soft-argmax, differentiability."""

import numpy as np
import torch

from styleblend import (IdExtractor, LandmarkExtractor, extract_id,
                        extract_landmarks, soft_argmax)

from oracles import leaky_relu, naive_conv2d


def test_id_embedding_unit_norm():
    ex = IdExtractor(16, seed=0)
    for s in (0, 1, 2):
        img = torch.rand(3, 32, 32, generator=torch.Generator().manual_seed(s)) * 2 - 1
        e = extract_id(img, ex)
        assert abs(e.norm().item() - 1.0) < 1e-5
        assert e.shape == (16,)


def test_id_deterministic_and_seeded():
    img = torch.linspace(-1, 1, 3 * 32 * 32).reshape(3, 32, 32)
    a = IdExtractor(16, seed=0)(img)
    b = IdExtractor(16, seed=0)(img)
    c = IdExtractor(16, seed=1)(img)
    assert torch.equal(a, b)
    assert not torch.equal(a, c)


def test_id_raw_output_matches_direct_convolution_oracle():
    ex = IdExtractor(8, seed=3).double()
    img = torch.randn(3, 16, 16, generator=torch.Generator().manual_seed(4),
                      dtype=torch.float64)
    h = img.numpy()
    for conv in (ex.conv1, ex.conv2, ex.conv3):
        h = naive_conv2d(h, conv.weight.detach().numpy(),
                         conv.bias.detach().numpy(), stride=2, pad=1)
        h = leaky_relu(h)
    pooled = h.mean(axis=(-2, -1))
    expected = ex.proj.weight.detach().numpy() @ pooled + ex.proj.bias.detach().numpy()
    got = ex.raw(img).detach().numpy()
    assert np.allclose(got, expected, atol=1e-12)


def test_soft_argmax_uniform_heatmap_centers():
    points = soft_argmax(torch.zeros(5, 8, 8))
    assert torch.allclose(points, torch.full((5, 2), 0.5), atol=1e-6)


def test_soft_argmax_sharp_peak_hits_pixel_center():
    heat = torch.zeros(1, 10, 10)
    heat[0, 7, 2] = 60.0  # heavily peaked at row 7, col 2
    point = soft_argmax(heat)[0]
    assert abs(point[0].item() - (2 + 0.5) / 10) < 1e-3  # x from column
    assert abs(point[1].item() - (7 + 0.5) / 10) < 1e-3  # y from row


def test_soft_argmax_expectation_oracle():
    rng = np.random.default_rng(5)
    heat = rng.standard_normal((3, 6, 6))
    flat = np.exp(heat.reshape(3, -1) - heat.reshape(3, -1).max(axis=1, keepdims=True))
    probs = (flat / flat.sum(axis=1, keepdims=True)).reshape(3, 6, 6)
    xs = (np.arange(6) + 0.5) / 6
    expected_x = (probs.sum(axis=1) * xs).sum(axis=1)
    expected_y = (probs.sum(axis=2) * xs).sum(axis=1)
    got = soft_argmax(torch.from_numpy(heat)).numpy()
    assert np.allclose(got[:, 0], expected_x, atol=1e-12)
    assert np.allclose(got[:, 1], expected_y, atol=1e-12)


def test_landmark_count_and_bounds():
    ex = LandmarkExtractor(19, seed=0)
    img = torch.rand(3, 64, 64) * 2 - 1
    pts = extract_landmarks(img, ex)
    assert pts.shape == (19, 2)
    assert (pts > 0).all() and (pts < 1).all()


def test_extractors_frozen():
    for ex in (IdExtractor(8, seed=0), LandmarkExtractor(5, seed=0)):
        assert all(not p.requires_grad for p in ex.parameters())


def test_extractors_differentiable_wrt_input():
    ex = IdExtractor(8, seed=0)
    img = (torch.rand(3, 16, 16) * 2 - 1).requires_grad_(True)
    (ex(img).sum()).backward()
    assert img.grad is not None and torch.isfinite(img.grad).all()
    lm = LandmarkExtractor(5, seed=0)
    img2 = (torch.rand(3, 16, 16) * 2 - 1).requires_grad_(True)
    lm(img2).sum().backward()
    assert img2.grad is not None and img2.grad.abs().sum() > 0
