"""The six generator objective terms and their weighted sum.

Every L2-style term uses mean (not sum) reduction so the weights stay
resolution-independent. All functions accept single samples or leading batch
dimensions and reduce to a scalar.
"""

import dataclasses
import math

import torch

from .core import ConfigError


@dataclasses.dataclass(frozen=True)
class LossWeights:
    """Term weights and the contrastive temperature."""

    lambda_id: float = 10.0
    lambda_con: float = 5.0
    lambda_rec: float = 1.0
    lambda_lm: float = 100.0
    lambda_swap: float = 1.0
    tau: float = 0.07

    def __post_init__(self):
        for name in ("lambda_id", "lambda_con", "lambda_rec", "lambda_lm", "lambda_swap"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")


@dataclasses.dataclass
class LossReport:
    """Per-step scalar losses; total = adv_g + sum of weighted terms."""

    adv_g: float
    id: float
    con: float
    rec: float
    lm: float
    swap: float
    total: float
    adv_v: float = 0.0

    def to_json(self):
        return dataclasses.asdict(self)


class NonFiniteLossError(RuntimeError):
    """A loss term became NaN or infinite; carries the offending term name."""

    def __init__(self, term, value, step=None):
        self.term = term
        self.step = step
        at = f" at step {step}" if step is not None else ""
        super().__init__(f"non-finite loss term '{term}' ({value}){at}")


def _cosine(a, b):
    na = a.norm(dim=-1)
    nb = b.norm(dim=-1)
    if (na < 1e-12).any() or (nb < 1e-12).any():
        raise ValueError("zero-norm identity embedding")
    return (a * b).sum(dim=-1) / (na * nb)


def id_loss(e_swap, e_src):
    """1 - cos(e_swap, e_src); 0 for identical directions, 2 for antipodal."""
    return (1.0 - _cosine(e_swap, e_src)).mean()


def contrastive_id_loss(e_swap, e_src, e_tgt, negatives, tau,
                        include_positive_in_denominator=False):
    """InfoNCE-style identity contrast with temperature-scaled cosine logits.

    With S_x = cos(e_swap, e_x)/tau, returns -log(exp(S_s) / (exp(S_t) +
    sum_n exp(S_n))), evaluated via logsumexp. As printed, the denominator
    excludes the positive logit (which makes the loss unbounded below); the
    flag switches in the standard formulation that includes it.

    `negatives` is an (..., N, E) tensor or a possibly-empty sequence of
    embeddings; with no negatives the denominator is exp(S_t) alone.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if not isinstance(negatives, torch.Tensor):
        negatives = (torch.stack(list(negatives), dim=-2) if len(negatives)
                     else e_swap.new_zeros(e_swap.shape[:-1] + (0, e_swap.shape[-1])))
    s_s = _cosine(e_swap, e_src) / tau
    s_t = _cosine(e_swap, e_tgt) / tau
    logits = [s_t.unsqueeze(-1)]
    if negatives.shape[-2]:
        logits.append(_cosine(e_swap.unsqueeze(-2), negatives) / tau)
    if include_positive_in_denominator:
        logits.insert(0, s_s.unsqueeze(-1))
    denom = torch.logsumexp(torch.cat(logits, dim=-1), dim=-1)
    return (denom - s_s).mean()


def reconstruction_loss(output, target, same_input):
    """Pixel reconstruction: 0.5*mean((output-target)^2) where source==target.

    `same_input` is a bool (whole batch) or a per-sample bool mask; samples
    with distinct inputs contribute exactly 0.
    """
    if output.shape != target.shape:
        raise ValueError(f"shape mismatch {tuple(output.shape)} vs {tuple(target.shape)}")
    per_sample = 0.5 * (output - target).pow(2).mean(dim=(-3, -2, -1))
    if isinstance(same_input, bool):
        if not same_input:
            return output.new_zeros(())
        return per_sample.mean()
    mask = same_input.to(per_sample.dtype)
    return (per_sample * mask).mean()


def landmark_loss(lm_t, lm_swap):
    """0.5 * mean squared coordinate difference between two landmark sets."""
    if lm_t.shape != lm_swap.shape:
        raise ValueError(f"landmark count mismatch {tuple(lm_t.shape)} vs "
                         f"{tuple(lm_swap.shape)}")
    return 0.5 * (lm_t - lm_swap).pow(2).mean()


def dual_swap_loss(gen, i_s, i_t, i_st):
    """Round-trip consistency through two extra generator passes.

    gen(source, target) -> image, with i_st = gen(i_s, i_t) already in hand:
    0.5*mean((gen(i_st, i_s) - i_s)^2) + 0.5*mean((gen(i_t, i_st) - i_t)^2).
    Gradients flow through both passes unless the caller detached i_st.
    """
    back_to_s = gen(i_st, i_s)
    back_to_t = gen(i_t, i_st)
    return (0.5 * (back_to_s - i_s).pow(2).mean()
            + 0.5 * (back_to_t - i_t).pow(2).mean())


_TERMS = ("adv_g", "id", "con", "rec", "lm", "swap")


def _to_float(v):
    return float(v.detach()) if isinstance(v, torch.Tensor) else float(v)


def total_generator_loss(terms, weights, adv_v=0.0, step=None):
    """Weighted sum of the six generator terms.

    `terms` maps each of adv_g/id/con/rec/lm/swap to a float or 0-dim tensor.
    Returns (total, LossReport): the total keeps the input arithmetic (a
    tensor input yields a backpropagatable tensor), the report holds floats.
    Any non-finite term raises NonFiniteLossError naming it.
    """
    missing = [t for t in _TERMS if t not in terms]
    if missing:
        raise KeyError(f"missing loss terms: {missing}")
    for name in _TERMS:
        if not math.isfinite(_to_float(terms[name])):
            raise NonFiniteLossError(name, _to_float(terms[name]), step)
    total = (terms["adv_g"]
             + weights.lambda_id * terms["id"]
             + weights.lambda_con * terms["con"]
             + weights.lambda_rec * terms["rec"]
             + weights.lambda_lm * terms["lm"]
             + weights.lambda_swap * terms["swap"])
    if not math.isfinite(_to_float(total)):
        raise NonFiniteLossError("total", _to_float(total), step)
    report = LossReport(adv_g=_to_float(terms["adv_g"]), id=_to_float(terms["id"]),
                        con=_to_float(terms["con"]), rec=_to_float(terms["rec"]),
                        lm=_to_float(terms["lm"]), swap=_to_float(terms["swap"]),
                        total=_to_float(total), adv_v=_to_float(adv_v))
    return total, report
