"""Multi-scale patch discriminator and the hinge adversarial objectives."""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .encoder import LRELU_SLOPE


class PatchStack(nn.Module):
    """Four stride-2 convs with LeakyReLU, ending in a 1-channel patch map."""

    def __init__(self, in_ch=3, base=16, max_ch=128):
        super().__init__()
        chs = [min(base * 2 ** i, max_ch) for i in range(4)]
        layers = []
        ch = in_ch
        for c in chs:
            layers.append(nn.Conv2d(ch, c, 4, 2, 1))
            ch = c
        self.convs = nn.ModuleList(layers)
        self.score = nn.Conv2d(ch, 1, 1)

    def forward(self, x):
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LRELU_SLOPE)
        return self.score(x)


class Critic(nn.Module):
    """Patch stacks over progressively downsampled copies of the image.

    Scale s consumes the input average-pooled by 2**s; the scalar score is
    the mean over scales of each scale's mean patch score.
    """

    def __init__(self, scales=2, in_ch=3, base=16):
        super().__init__()
        if scales < 1:
            raise ValueError("need at least one critic scale")
        self.scales = scales
        for s in range(scales):
            self.add_module(f"scale{s}", PatchStack(in_ch, base))

    def patch_maps(self, img):
        squeeze = img.dim() == 3
        if squeeze:
            img = img.unsqueeze(0)
        maps = []
        x = img
        for s in range(self.scales):
            if s > 0:
                x = F.avg_pool2d(x, 2)
            maps.append(getattr(self, f"scale{s}")(x))
        return maps, squeeze

    def forward(self, img):
        """Per-sample scalar score; a lone (C,H,W) image yields a 0-dim tensor."""
        maps, squeeze = self.patch_maps(img)
        score = torch.stack([m.mean(dim=(-3, -2, -1)) for m in maps]).mean(dim=0)
        return score.squeeze(0) if squeeze else score


def critic_score(img, critic):
    """Functional wrapper around Critic.forward."""
    return critic(img)


def adv_loss_g(fake_score):
    """Generator adversarial loss: -E[V(G(...))]."""
    return -torch.as_tensor(fake_score).mean()


def adv_loss_v(real_score, fake_score):
    """Hinge discriminator loss: -E[min(0,-1+real)] - E[min(0,-1-fake)]."""
    real = torch.as_tensor(real_score)
    fake = torch.as_tensor(fake_score)
    real_term = -torch.minimum(torch.zeros_like(real), real - 1.0).mean()
    fake_term = -torch.minimum(torch.zeros_like(fake), -fake - 1.0).mean()
    return real_term + fake_term
