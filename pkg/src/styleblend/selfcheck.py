"""Float64 gradient checks and algebraic invariants on toy shapes.

Backs both the `selfcheck` CLI command and the acceptance suite. Each check
returns its worst deviation; a check passes when that stays under its
tolerance. The optional `mutate` hook deliberately corrupts one computation
so the harness itself can be tested.
"""

import math

import torch

from . import decoder as decoder_mod
from .core import seeded_rng, seeded_torch_generator
from .critic import adv_loss_g
from .decoder import Decoder, adain
from .encoder import Encoder
from .extractors import IdExtractor, LandmarkExtractor
from .losses import (contrastive_id_loss, dual_swap_loss, id_loss,
                     landmark_loss, reconstruction_loss)
from .sbm import Sbm, blend_normalize

GRAD_TOL = 1e-4
FD_STEP = 1e-5


def finite_diff_max_err(fn, tensors, n_coords=100, h=FD_STEP, seed=0):
    """Max deviation between autograd and central differences.

    `fn` maps the float64 `tensors` to a scalar and is re-evaluated after
    each perturbation, so module parameters may be passed directly;
    `n_coords` coordinates are sampled across all tensors. The deviation is
    |analytic - numeric| / max(1, |analytic|, |numeric|), i.e. relative with
    an absolute floor.
    """
    for t in tensors:
        t.requires_grad_(True)
    grads = torch.autograd.grad(fn(*tensors), tensors)
    rng = seeded_rng(seed, "fd-coords")
    sizes = [t.numel() for t in tensors]
    total = sum(sizes)
    worst = 0.0
    for _ in range(n_coords):
        flat = int(rng.integers(total))
        ti = 0
        while flat >= sizes[ti]:
            flat -= sizes[ti]
            ti += 1
        t = tensors[ti]
        with torch.no_grad():
            orig = t.view(-1)[flat].item()
            t.view(-1)[flat] = orig + h
            f_plus = float(fn(*tensors))
            t.view(-1)[flat] = orig - h
            f_minus = float(fn(*tensors))
            t.view(-1)[flat] = orig
        numeric = (f_plus - f_minus) / (2 * h)
        analytic = grads[ti].view(-1)[flat].item()
        err = abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))
        worst = max(worst, err)
    return worst


def _toy_rng(label):
    g = seeded_torch_generator(123, label)
    return lambda *shape: torch.randn(*shape, generator=g, dtype=torch.float64)


# ---------------------------------------------------------------------------
# individual checks (name, fn, tolerance)
# ---------------------------------------------------------------------------

def check_encoder_grad():
    torch.manual_seed(7)
    enc = Encoder(16, 4, 8, 2).double()
    img = _toy_rng("enc-img")(3, 16, 16) * 0.5
    return finite_diff_max_err(lambda x: enc(x)[0].sum(), [img])


def check_sbm_grad():
    torch.manual_seed(8)
    sbm = Sbm(8, 2, layers=2).double()
    r = _toy_rng("sbm-codes")
    ws, wt = r(4, 8), r(4, 8)
    params = [p for p in sbm.parameters()]

    def fn(a, b, *ps):
        return sbm(a, b)[0].pow(2).sum()

    return finite_diff_max_err(fn, [ws, wt] + params)


def check_decoder_grad():
    torch.manual_seed(9)
    dec = Decoder(16, 4, 8, 3, [2, 4], 8).double()
    r = _toy_rng("dec-inputs")
    code = r(4, 8)
    pyr = [r(8, 2, 2), r(8, 4, 4)]

    def fn(c):
        gen = seeded_torch_generator(5, "dec-noise")
        return dec(c, pyr, gen).pow(2).sum()

    return finite_diff_max_err(fn, [code])


def check_id_grad():
    ex = IdExtractor(8, seed=3).double()
    r = _toy_rng("id-img")
    img, u = r(3, 16, 16) * 0.5, r(8)
    return finite_diff_max_err(lambda x: (ex(x) * u).sum(), [img])


def check_landmark_grad():
    ex = LandmarkExtractor(5, seed=3).double()
    r = _toy_rng("lm-img")
    img, u = r(3, 16, 16) * 0.5, r(5, 2)
    return finite_diff_max_err(lambda x: (ex(x) * u).sum(), [img])


def _adain_fn(mutate=None):
    if mutate == "adain":
        def corrupted(x, gamma, beta, eps=decoder_mod.ADAIN_EPS):
            mu = x.mean(dim=(-2, -1), keepdim=True)
            sigma = ((x - mu) ** 2).mean(dim=(-2, -1), keepdim=True).sqrt().detach()
            return (x - mu) / (sigma + eps) * gamma + beta
        return corrupted
    return adain


def check_adain_grad(mutate=None):
    fn = _adain_fn(mutate)
    r = _toy_rng("adain")
    x, gamma, beta = r(4, 6, 6), r(4), r(4)
    return finite_diff_max_err(
        lambda a, g, b: fn(a, g.view(-1, 1, 1), b.view(-1, 1, 1)).pow(2).sum(),
        [x, gamma, beta])


def check_loss_grads():
    r = _toy_rng("losses")
    worst = 0.0
    e1, e2, e3 = r(8), r(8), r(8)
    negs = r(3, 8)
    worst = max(worst, finite_diff_max_err(
        lambda a, b: id_loss(a, b), [e1, e2]))
    worst = max(worst, finite_diff_max_err(
        lambda a, b, c, n: contrastive_id_loss(a, b, c, n, 0.5), [e1, e2, e3, negs]))
    out, tgt = r(3, 8, 8), r(3, 8, 8)
    worst = max(worst, finite_diff_max_err(
        lambda a, b: reconstruction_loss(a, b, True), [out, tgt]))
    p1, p2 = r(5, 2), r(5, 2)
    worst = max(worst, finite_diff_max_err(
        lambda a, b: landmark_loss(a, b), [p1, p2]))
    scores = r(6)
    worst = max(worst, finite_diff_max_err(lambda s: adv_loss_g(s), [scores]))

    # dual swap through a tiny differentiable stand-in generator
    torch.manual_seed(11)
    net = torch.nn.Conv2d(6, 3, 3, 1, 1).double()
    gen = lambda s, t: torch.tanh(net(torch.cat([s, t], dim=-3)))
    i_s, i_t = r(3, 8, 8) * 0.5, r(3, 8, 8) * 0.5
    i_st = gen(i_s, i_t).detach()
    worst = max(worst, finite_diff_max_err(
        lambda a, b, c: dual_swap_loss(gen, a, b, c), [i_s, i_t, i_st]))
    return worst


def check_partition_of_unity(pairs=1000):
    rng = seeded_rng(99, "partition")
    worst = 0.0
    for _ in range(pairs):
        scale = float(rng.uniform(0.1, 100.0))
        a_t = torch.from_numpy(rng.standard_normal((6, 4)) * scale).float()
        a_s = torch.from_numpy(rng.standard_normal((6, 4)) * scale).float()
        w_t, w_s = blend_normalize(a_t, a_s)
        if not (torch.isfinite(w_t).all() and torch.isfinite(w_s).all()):
            return math.inf
        worst = max(worst, float((w_t + w_s - 1.0).abs().max()))
    return worst


def check_blend_fixed_point(trials=100):
    worst = 0.0
    for trial in range(trials):
        torch.manual_seed(1000 + trial)
        sbm = Sbm(8, 2, layers=3)
        w = torch.randn(4, 8, generator=seeded_torch_generator(trial, "fp"))
        with torch.no_grad():
            blended, _ = sbm(w, w.clone())
        worst = max(worst, float((blended - w).abs().max()))
    return worst


CHECKS = (
    ("partition-of-unity", lambda m: check_partition_of_unity(), 1e-6),
    ("blend-fixed-point", lambda m: check_blend_fixed_point(), 1e-5),
    ("adain-grad", lambda m: check_adain_grad(m), GRAD_TOL),
    ("encoder-grad", lambda m: check_encoder_grad(), GRAD_TOL),
    ("sbm-grad", lambda m: check_sbm_grad(), GRAD_TOL),
    ("decoder-grad", lambda m: check_decoder_grad(), GRAD_TOL),
    ("id-grad", lambda m: check_id_grad(), GRAD_TOL),
    ("landmark-grad", lambda m: check_landmark_grad(), GRAD_TOL),
    ("loss-grads", lambda m: check_loss_grads(), GRAD_TOL),
)


def run_selfcheck(mutate=None, emit=print):
    """Run every check; returns the list of failing check names."""
    failures = []
    for name, fn, tol in CHECKS:
        value = fn(mutate)
        ok = value < tol
        emit(f"[{'ok' if ok else 'FAIL'}] {name}: max_err={value:.3e} (tol {tol:g})")
        if not ok:
            failures.append(name)
    return failures
