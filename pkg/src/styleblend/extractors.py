"""Frozen perception stubs standing in for pretrained ID / landmark networks.

Both are small conv nets with seeded random weights, frozen for the whole run:
they define a fixed, differentiable embedding geometry so the identity and
landmark losses remain meaningful optimization targets at desk scale. Real
pretrained extractors can be dropped in behind the same two call signatures.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .core import seeded_torch_generator
from .encoder import LRELU_SLOPE


def _freeze_seeded(module, seed, label):
    gen = seeded_torch_generator(seed, label)
    with torch.no_grad():
        for p in module.parameters():
            p.copy_(torch.randn(p.shape, generator=gen) * 0.2)
    module.requires_grad_(False)


class IdExtractor(nn.Module):
    """Image -> unit-norm identity embedding of length `id_dim`."""

    def __init__(self, id_dim, seed=0, in_ch=3):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, 16, 3, 2, 1)
        self.conv2 = nn.Conv2d(16, 32, 3, 2, 1)
        self.conv3 = nn.Conv2d(32, 64, 3, 2, 1)
        self.proj = nn.Linear(64, id_dim)
        _freeze_seeded(self, seed, "frozen-id")

    def raw(self, img):
        squeeze = img.dim() == 3
        if squeeze:
            img = img.unsqueeze(0)
        h = F.leaky_relu(self.conv1(img), LRELU_SLOPE)
        h = F.leaky_relu(self.conv2(h), LRELU_SLOPE)
        h = F.leaky_relu(self.conv3(h), LRELU_SLOPE)
        e = self.proj(h.mean(dim=(-2, -1)))
        return e.squeeze(0) if squeeze else e

    def forward(self, img):
        e = self.raw(img)
        return e / e.norm(dim=-1, keepdim=True).clamp_min(1e-12)


class LandmarkExtractor(nn.Module):
    """Image -> (K, 2) keypoints in [0,1]^2 via spatial soft-argmax of K heatmaps."""

    def __init__(self, landmark_count, seed=0, in_ch=3):
        super().__init__()
        self.landmark_count = landmark_count
        self.conv1 = nn.Conv2d(in_ch, 16, 3, 2, 1)
        self.conv2 = nn.Conv2d(16, 32, 3, 2, 1)
        self.heat = nn.Conv2d(32, landmark_count, 1)
        _freeze_seeded(self, seed, "frozen-lm")

    def heatmaps(self, img):
        h = F.leaky_relu(self.conv1(img), LRELU_SLOPE)
        h = F.leaky_relu(self.conv2(h), LRELU_SLOPE)
        return self.heat(h)

    def forward(self, img):
        squeeze = img.dim() == 3
        if squeeze:
            img = img.unsqueeze(0)
        heat = self.heatmaps(img)
        points = soft_argmax(heat)
        return points.squeeze(0) if squeeze else points


def soft_argmax(heat, temperature=1.0):
    """Expected (x, y) of softmax(heatmap), with pixel-center coordinates.

    heat: (..., K, H, W); returns (..., K, 2) in (0,1)^2. A uniform heatmap
    maps to (0.5, 0.5); a sharp peak at pixel (r, c) approaches
    ((c+0.5)/W, (r+0.5)/H).
    """
    hgt, wid = heat.shape[-2:]
    probs = torch.softmax((heat / temperature).flatten(-2), dim=-1).reshape(heat.shape)
    ys = (torch.arange(hgt, dtype=heat.dtype) + 0.5) / hgt
    xs = (torch.arange(wid, dtype=heat.dtype) + 0.5) / wid
    x = (probs.sum(dim=-2) * xs).sum(dim=-1)
    y = (probs.sum(dim=-1) * ys).sum(dim=-1)
    return torch.stack([x, y], dim=-1)


def extract_id(img, extractor):
    """Functional wrapper: image -> unit identity embedding."""
    return extractor(img)


def extract_landmarks(img, extractor):
    """Functional wrapper: image -> (K, 2) landmark set."""
    return extractor(img)
