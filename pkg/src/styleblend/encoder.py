"""Facial attributes encoder: image -> (style code, feature pyramid).

A reduced SE-ResNet backbone feeds a top-down feature pyramid; each pyramid
level owns an equal share of the style heads, coarsest level first. The
pyramid is also returned so the decoder can reuse target features.
"""

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

LRELU_SLOPE = 0.2


def _groups(ch):
    return math.gcd(8, ch)


class SEGate(nn.Module):
    """Squeeze-and-Excitation channel gating: x * sigmoid(bottleneck(GAP(x)))."""

    def __init__(self, channels, reduction=4):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.fc1 = nn.Linear(channels, hidden)
        self.fc2 = nn.Linear(hidden, channels)

    def gates(self, x):
        z = x.mean(dim=(-2, -1))
        return torch.sigmoid(self.fc2(F.relu(self.fc1(z))))

    def forward(self, x):
        if x.shape[-3] != self.fc1.in_features:
            raise ValueError(
                f"SEGate expects {self.fc1.in_features} channels, got {x.shape[-3]}")
        return x * self.gates(x).unsqueeze(-1).unsqueeze(-1)


def se_block(x, gate):
    """Apply an SEGate to a feature map; shape preserved."""
    return gate(x)


class SEResBlock(nn.Module):
    """Residual block with SE gating; stride 2 downsamples and may widen."""

    def __init__(self, in_ch, out_ch, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride, 1)
        self.norm1 = nn.GroupNorm(_groups(out_ch), out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, 1, 1)
        self.norm2 = nn.GroupNorm(_groups(out_ch), out_ch)
        self.se = SEGate(out_ch)
        if stride != 1 or in_ch != out_ch:
            self.skip = nn.Conv2d(in_ch, out_ch, 1, stride, 0)
        else:
            self.skip = nn.Identity()

    def forward(self, x):
        h = F.leaky_relu(self.norm1(self.conv1(x)), LRELU_SLOPE)
        h = self.se(self.norm2(self.conv2(h)))
        return F.leaky_relu(h + self.skip(x), LRELU_SLOPE)


class StyleHead(nn.Module):
    """Conv stack reducing one pyramid level to 1x1, then FC to a style element."""

    def __init__(self, side, in_ch, width, style_dim):
        super().__init__()
        depth = max(0, math.ceil(math.log2(side)))
        convs = []
        ch = in_ch
        for _ in range(depth):
            convs.append(nn.Conv2d(ch, width, 3, 2, 1))
            ch = width
        self.convs = nn.ModuleList(convs)
        self.fc = nn.Linear(ch, style_dim)
        self.side = side

    def forward(self, feat):
        if feat.shape[-1] != self.side or feat.shape[-2] != self.side:
            raise ValueError(f"style head expects {self.side}x{self.side} input, "
                             f"got {tuple(feat.shape[-2:])}")
        h = feat
        for conv in self.convs:
            h = F.leaky_relu(conv(h), LRELU_SLOPE)
        return self.fc(h.flatten(-3))


class Encoder(nn.Module):
    """SE-ResNet backbone + FPN + per-level style heads.

    Produces an (L, D) style code whose rows 0..L/P-1 come from the coarsest
    pyramid level, subsequent groups from progressively finer levels, plus the
    P-level pyramid itself (coarse to fine).
    """

    def __init__(self, image_size, style_count, style_dim, pyramid_levels,
                 stem_ch=16):
        super().__init__()
        if style_count % pyramid_levels:
            raise ValueError("style_count must divide evenly across pyramid levels")
        self.image_size = image_size
        self.style_count = style_count
        self.style_dim = style_dim
        self.pyramid_levels = pyramid_levels
        self.pyramid_channels = min(style_dim, 128)

        self.stem = nn.Conv2d(3, stem_ch, 3, 1, 1)

        # One stride-2 stage per halving down to image_size / 2**(P+1);
        # the last P stage outputs are tapped for the pyramid.
        n_stages = pyramid_levels + 1
        cap = min(max(style_dim, stem_ch), 256)
        ch = stem_ch
        for s in range(1, n_stages + 1):
            out_ch = min(cap, stem_ch * 2 ** s)
            stage = nn.Sequential()
            stage.add_module("block1", SEResBlock(ch, out_ch, stride=2))
            stage.add_module("block2", SEResBlock(out_ch, out_ch))
            self.add_module(f"stage{s}", stage)
            ch = out_ch
        self.n_stages = n_stages

        tap_chs = [min(cap, stem_ch * 2 ** s) for s in range(2, n_stages + 1)]
        # laterals indexed coarse to fine: laterals[0] projects the deepest tap
        self.laterals = nn.ModuleList(
            nn.Conv2d(c, self.pyramid_channels, 1) for c in reversed(tap_chs))

        per_level = style_count // pyramid_levels
        sides = [image_size // 2 ** (pyramid_levels + 1 - i) for i in range(pyramid_levels)]
        head_width = min(style_dim, 64)
        self.heads = nn.ModuleList()
        for level, side in enumerate(sides):
            for _ in range(per_level):
                self.heads.append(
                    StyleHead(side, self.pyramid_channels, head_width, style_dim))
        self.per_level = per_level
        self.sides = sides

    def backbone(self, x):
        h = F.leaky_relu(self.stem(x), LRELU_SLOPE)
        taps = []
        for s in range(1, self.n_stages + 1):
            h = getattr(self, f"stage{s}")(h)
            if s >= 2:
                taps.append(h)
        return taps  # fine to coarse

    def pyramid(self, x):
        taps = self.backbone(x)
        levels = []
        prev = None
        for lateral, tap in zip(self.laterals, reversed(taps)):
            p = lateral(tap)
            if prev is not None:
                p = p + F.interpolate(prev, scale_factor=2, mode="nearest")
            levels.append(p)
            prev = p
        return levels  # coarse to fine

    def forward(self, img):
        squeeze = img.dim() == 3
        if squeeze:
            img = img.unsqueeze(0)
        if img.shape[-3:] != (3, self.image_size, self.image_size):
            raise ValueError(f"encoder expects 3x{self.image_size}x{self.image_size} "
                             f"images, got {tuple(img.shape[-3:])}")
        levels = self.pyramid(img)
        elements = []
        for i, head in enumerate(self.heads):
            elements.append(head(levels[i // self.per_level]))
        code = torch.stack(elements, dim=-2)
        if squeeze:
            return code.squeeze(0), [p.squeeze(0) for p in levels]
        return code, levels


def encode(img, encoder):
    """Functional wrapper: image -> (style code, feature pyramid)."""
    return encoder(img)
