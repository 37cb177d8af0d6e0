"""Style decoder: blended code + target pyramid + noise -> image.

Progressive blocks grow a learned 4x4 constant to full resolution. Each block
runs conv -> noise -> AdaIN once per assigned style element; blocks whose
resolution matches a pyramid level add a gated projection of the target
features afterwards. Output is tanh-bounded to [-1, 1].
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .encoder import LRELU_SLOPE

ADAIN_EPS = 1e-5


def adain(x, gamma, beta, eps=ADAIN_EPS):
    """Adaptive instance normalization over spatial positions, per channel.

    (x - mean) / (std + eps) * gamma + beta with the biased (population) std.
    gamma/beta broadcast over the spatial axes; x is (..., C, H, W).
    """
    mu = x.mean(dim=(-2, -1), keepdim=True)
    sigma = ((x - mu) ** 2).mean(dim=(-2, -1), keepdim=True).sqrt()
    if isinstance(gamma, torch.Tensor) and gamma.dim() == 1:
        gamma = gamma.view(-1, 1, 1)
    if isinstance(beta, torch.Tensor) and beta.dim() == 1:
        beta = beta.view(-1, 1, 1)
    return (x - mu) / (sigma + eps) * gamma + beta


class StyleAffine(nn.Module):
    """Affine map from a style element to AdaIN (gamma, beta).

    Bias starts at gamma=1, beta=0 so modulation begins near identity.
    """

    def __init__(self, style_dim, channels):
        super().__init__()
        self.affine = nn.Linear(style_dim, 2 * channels)
        self.channels = channels
        with torch.no_grad():
            self.affine.bias[:channels].fill_(1.0)
            self.affine.bias[channels:].zero_()

    def forward(self, w):
        gb = self.affine(w)
        return gb[..., :self.channels], gb[..., self.channels:]


def style_to_affine(w, affine):
    """Apply a StyleAffine to one style element: returns (gamma, beta)."""
    return affine(w)


def split_styles(style_count, blocks):
    """Contiguous per-block style groups, as even as possible, extras first.

    Low (coarse-block) indices come first, mirroring the coarse-to-fine
    injection order; with style_count == 2*blocks every block gets two.
    """
    base, rem = divmod(style_count, blocks)
    groups, start = [], 0
    for b in range(blocks):
        size = base + (1 if b < rem else 0)
        groups.append(list(range(start, start + size)))
        start += size
    return groups


class DecodeBlock(nn.Module):
    """One resolution's decode stage: per style element conv+noise+AdaIN."""

    def __init__(self, in_ch, out_ch, style_dim, n_styles, side):
        super().__init__()
        self.side = side
        self.n_styles = n_styles
        self.convs = nn.ModuleList()
        self.affines = nn.ModuleList()
        ch = in_ch
        for _ in range(n_styles):
            self.convs.append(nn.Conv2d(ch, out_ch, 3, 1, 1))
            self.affines.append(StyleAffine(style_dim, out_ch))
            ch = out_ch
        # per-channel noise strength per injection site, starts silent
        self.noise_scales = nn.ParameterList(
            nn.Parameter(torch.zeros(out_ch)) for _ in range(n_styles))

    def forward(self, x, styles, noise_maps):
        for w, conv, affine, scale, noise in zip(styles, self.convs, self.affines,
                                                 self.noise_scales, noise_maps):
            h = conv(x)
            h = h + noise * scale.view(-1, 1, 1)
            h = F.leaky_relu(h, LRELU_SLOPE)
            gamma, beta = affine(w)
            x = adain(h, gamma.unsqueeze(-1).unsqueeze(-1), beta.unsqueeze(-1).unsqueeze(-1))
        return x


class Decoder(nn.Module):
    """Progressive style decoder (4x4 constant up to image_size^2)."""

    def __init__(self, image_size, style_count, style_dim, blocks,
                 pyramid_sides, pyramid_channels):
        super().__init__()
        if image_size != 2 ** (blocks + 1):
            raise ValueError(f"{blocks} blocks synthesize {2 ** (blocks + 1)}^2 "
                             f"images, not {image_size}^2")
        self.image_size = image_size
        self.style_count = style_count
        self.style_dim = style_dim
        self.blocks = blocks
        self.groups = split_styles(style_count, blocks)
        self.pyramid_sides = list(pyramid_sides)

        def ch(b):
            return max(16, min(style_dim, 2 ** (blocks - b + 3)))

        self.const = nn.Parameter(torch.randn(ch(0), 4, 4))
        in_ch = ch(0)
        for b in range(1, blocks + 1):
            side = 2 ** (b + 1)
            self.add_module(f"block{b}", DecodeBlock(in_ch, ch(b), style_dim,
                                                     len(self.groups[b - 1]), side))
            in_ch = ch(b)

        # gated 1x1 shortcut projections for pyramid levels, keyed by side
        self.shortcuts = nn.ModuleDict()
        self.gates = nn.ParameterDict()
        side_to_block_ch = {2 ** (b + 1): ch(b) for b in range(1, blocks + 1)}
        for side in self.pyramid_sides:
            if side in side_to_block_ch:
                self.shortcuts[str(side)] = nn.Conv2d(
                    pyramid_channels, side_to_block_ch[side], 1)
                self.gates[str(side)] = nn.Parameter(torch.ones(()))
        self.to_rgb = nn.Conv2d(in_ch, 3, 1)

    def forward(self, code, pyramid, noise_gen):
        squeeze = code.dim() == 2
        if squeeze:
            code = code.unsqueeze(0)
            pyramid = [p.unsqueeze(0) for p in pyramid]
        if code.shape[-2:] != (self.style_count, self.style_dim):
            raise ValueError(f"decoder expects a {self.style_count}x{self.style_dim} "
                             f"style code, got {tuple(code.shape[-2:])}")
        by_side = {p.shape[-1]: p for p in pyramid}
        batch = code.shape[0]

        x = self.const.to(code.dtype).expand(batch, -1, -1, -1)
        for b in range(1, self.blocks + 1):
            block = getattr(self, f"block{b}")
            if b > 1:
                x = F.interpolate(x, scale_factor=2, mode="nearest")
            side = block.side
            noise = [torch.randn(batch, 1, side, side, generator=noise_gen,
                                 dtype=code.dtype) for _ in range(block.n_styles)]
            styles = [code[..., i, :] for i in self.groups[b - 1]]
            x = block(x, styles, noise)
            key = str(side)
            if key in self.shortcuts and side in by_side:
                x = x + self.gates[key] * self.shortcuts[key](by_side[side].to(code.dtype))
        img = torch.tanh(self.to_rgb(x))
        return img.squeeze(0) if squeeze else img


def decode(code, pyramid, noise_gen, decoder):
    """Functional wrapper: (blended code, target pyramid, noise stream) -> image."""
    return decoder(code, pyramid, noise_gen)
