"""Style blending: cross-attention between source and target style codes.

Stacked MHCA layers refine both streams; the final layer's two attention maps
are turned into a pairwise-softmax partition of unity, which convexly mixes
the ORIGINAL input codes into the swapped code.
"""

import math

import torch
import torch.nn as nn
import torch.nn.functional as F


def cross_attention(q, k, v, heads, out_proj=None):
    """Multi-head attention over the style-element axis.

    q, k, v: (..., L, D) with D divisible by `heads`. Per head of width
    d = D/heads: softmax(q k^T / sqrt(d)) @ v, softmax over the key index;
    heads are concatenated and passed through `out_proj` when given.
    """
    d_model = q.shape[-1]
    if d_model % heads:
        raise ValueError(f"dim {d_model} not divisible by {heads} heads")
    if q.shape != k.shape or k.shape != v.shape:
        raise ValueError("q, k, v must share a shape")
    d = d_model // heads
    L = q.shape[-2]

    def split(x):
        return x.reshape(*x.shape[:-2], L, heads, d).transpose(-3, -2)

    qh, kh, vh = split(q), split(k), split(v)
    attn = torch.softmax(qh @ kh.transpose(-2, -1) / math.sqrt(d), dim=-1)
    out = (attn @ vh).transpose(-3, -2).reshape(*q.shape)
    if out_proj is not None:
        out = out_proj(out)
    return out


def blend_normalize(a_t, a_s):
    """Pairwise softmax over the (target, source) attention pair, elementwise.

    Returns (w_t, w_s) with w_t = exp(a_t) / (exp(a_s) + exp(a_t)); the pair
    is stabilized by subtracting the elementwise max, so magnitudes of any
    size are safe, and w_t + w_s == 1.
    """
    if a_t.shape != a_s.shape:
        raise ValueError("attention maps must share a shape")
    if not (torch.isfinite(a_t).all() and torch.isfinite(a_s).all()):
        raise ValueError("non-finite attention values")
    m = torch.maximum(a_t, a_s)
    e_t = torch.exp(a_t - m)
    e_s = torch.exp(a_s - m)
    denom = e_t + e_s
    return e_t / denom, e_s / denom


class FeedForward(nn.Module):
    def __init__(self, dim, mult=2):
        super().__init__()
        self.fc1 = nn.Linear(dim, dim * mult)
        self.fc2 = nn.Linear(dim * mult, dim)

    def forward(self, x):
        return self.fc2(F.gelu(self.fc1(x)))


class MhcaLayer(nn.Module):
    """One MHCA-transformer layer shared by the source and target streams.

    A single q/k/v/out projection quadruple serves both attention directions,
    which keeps the module symmetric under swapping its two inputs.
    """

    def __init__(self, dim, heads, final=False):
        super().__init__()
        self.heads = heads
        self.final = final
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, dim)
        if not final:
            self.norm_attn = nn.LayerNorm(dim)
            self.norm_ff = nn.LayerNorm(dim)
            self.ff = FeedForward(dim)

    def attend(self, q_stream, kv_stream):
        return cross_attention(self.q(q_stream), self.k(kv_stream),
                               self.v(kv_stream), self.heads, self.out)

    def forward(self, s, t):
        if self.final:
            # raw attention maps, consumed directly by blend_normalize
            a_t = self.attend(s, t)
            a_s = self.attend(t, s)
            return a_s, a_t
        ns, nt = self.norm_attn(s), self.norm_attn(t)
        t = t + self.attend(ns, nt)
        s = s + self.attend(nt, ns)
        s = s + self.ff(self.norm_ff(s))
        t = t + self.ff(self.norm_ff(t))
        return s, t


class Sbm(nn.Module):
    """Stack of MHCA layers ending in the pairwise blend of the input codes."""

    def __init__(self, style_dim, heads, layers=4):
        super().__init__()
        if layers < 1:
            raise ValueError("need at least one MHCA layer")
        self.layers = layers
        for i in range(1, layers + 1):
            self.add_module(f"layer{i}", MhcaLayer(style_dim, heads, final=(i == layers)))

    def forward(self, code_s, code_t):
        if code_s.shape != code_t.shape:
            raise ValueError("source/target style codes must share a shape")
        s, t = code_s, code_t
        for i in range(1, self.layers):
            s, t = getattr(self, f"layer{i}")(s, t)
        a_s, a_t = getattr(self, f"layer{self.layers}")(s, t)
        w_t, w_s = blend_normalize(a_t, a_s)
        blended = w_t * code_t + w_s * code_s
        return blended, (w_t, w_s)


def blend(code_s, code_t, sbm):
    """Functional wrapper: (source code, target code) -> (blended code, weights)."""
    return sbm(code_s, code_t)
