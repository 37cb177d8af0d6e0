"""End-to-end adversarial training: curriculum, losses, alternating updates.

All randomness is keyed statelessly off (seed, label, step), so a resumed run
replays the exact draws of an uninterrupted one; optimizer moments ride along
inside checkpoints under the "opt/" prefix.
"""

import dataclasses
import json
import math
import os

import numpy as np
import torch

from .core import (ConfigError, Manifest, ModelConfig, save_checkpoint,
                   seeded_rng, seeded_torch_generator)
from .critic import Critic, adv_loss_g, adv_loss_v
from .decoder import Decoder
from .encoder import Encoder
from .extractors import IdExtractor, LandmarkExtractor
from .losses import (LossWeights, NonFiniteLossError, contrastive_id_loss,
                     dual_swap_loss, id_loss, landmark_loss,
                     reconstruction_loss, total_generator_loss)
from .sbm import Sbm


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """Loop hyperparameters; desk-scale defaults."""

    total_steps: int = 1000
    batch_size: int = 8
    lr: float = 1e-4
    curriculum_warm_steps: int = 250
    curriculum_decay_steps: int = 500
    phase2_start: int = 500
    phase2_lr_scale: float = 0.1
    swap_loss_detach: bool = False
    swap_fraction: float = 0.25
    metrics_every: int = 1
    checkpoint_every: int = 250
    con_denominator_includes_positive: bool = False

    def __post_init__(self):
        for name in ("total_steps", "batch_size", "metrics_every", "checkpoint_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("curriculum_warm_steps", "curriculum_decay_steps", "phase2_start"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if not 0.0 <= self.swap_fraction <= 1.0:
            raise ConfigError("swap_fraction must lie in [0, 1]")

    @classmethod
    def paper(cls, **overrides):
        fields = dict(lr=4e-5, batch_size=32)
        fields.update(overrides)
        return cls(**fields)

    @classmethod
    def from_json(cls, obj):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**obj)


def curriculum_p(step, cfg):
    """Probability that a sample trains pure reconstruction (source := target).

    1 for the warmup window, then linear decay to 0 over the decay window,
    0 afterwards; monotone nonincreasing in `step`.
    """
    if step < cfg.curriculum_warm_steps:
        return 1.0
    into = step - cfg.curriculum_warm_steps
    if cfg.curriculum_decay_steps <= 0 or into >= cfg.curriculum_decay_steps:
        return 0.0
    return 1.0 - into / cfg.curriculum_decay_steps


def phase_mask(step, cfg):
    """Trainable parameter groups at `step`: phase 1 trains encoder+SBM with
    the decoder frozen; phase 2 flips that. The critic always trains; the
    perception stubs never do."""
    if step < cfg.phase2_start:
        return frozenset(("encoder", "sbm", "critic"))
    return frozenset(("decoder", "critic"))


class SwapModel(torch.nn.Module):
    """The full face-swapping system: E, B, D, V plus frozen extractors."""

    GROUP_PREFIXES = (("encoder", "encoder"), ("sbm", "sbm"), ("decoder", "decoder"),
                      ("critic", "critic"), ("id_extractor", "frozen/id"),
                      ("landmark_extractor", "frozen/lm"))

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        with torch.random.fork_rng():
            torch.manual_seed(seeded_rng(config.seed, "init").integers(2 ** 62))
            self.encoder = Encoder(config.image_size, config.style_count,
                                   config.style_dim, config.pyramid_levels)
            self.sbm = Sbm(config.style_dim, config.heads, config.sbm_layers)
            self.decoder = Decoder(config.image_size, config.style_count,
                                   config.style_dim, config.decoder_blocks,
                                   config.pyramid_sides(),
                                   self.encoder.pyramid_channels)
            self.critic = Critic(scales=2)
        self.id_extractor = IdExtractor(config.id_dim, config.seed)
        self.landmark_extractor = LandmarkExtractor(config.landmark_count, config.seed)

    def generate(self, src, tgt, noise_gen):
        """One swap pass: gen(source, target) -> image carrying source identity."""
        code_s, _ = self.encoder(src)
        code_t, pyr_t = self.encoder(tgt)
        blended, _ = self.sbm(code_s, code_t)
        return self.decoder(blended, pyr_t, noise_gen)

    def named_params(self):
        """Checkpoint-name -> Parameter for every tensor in the system."""
        out = {}
        for attr, prefix in self.GROUP_PREFIXES:
            for name, p in getattr(self, attr).named_parameters():
                out[f"{prefix}/{name.replace('.', '/')}"] = p
        return out

    def load_tensors(self, tensors):
        params = self.named_params()
        missing = [n for n in params if n not in tensors]
        if missing:
            raise KeyError(f"checkpoint is missing {len(missing)} parameters, "
                           f"e.g. {missing[:3]}")
        with torch.no_grad():
            for name, p in params.items():
                arr = tensors[name]
                if tuple(arr.shape) != tuple(p.shape):
                    raise ValueError(f"shape mismatch for {name}: checkpoint "
                                     f"{tuple(arr.shape)} vs model {tuple(p.shape)}")
                if not arr.flags["C_CONTIGUOUS"]:
                    arr = arr.copy(order="C")
                p.copy_(torch.from_numpy(arr).to(p.dtype))


class Trainer:
    """Alternating G/V optimization over a SwapModel."""

    G_GROUPS = ("encoder", "sbm", "decoder")

    def __init__(self, model, train_cfg, loss_weights=None):
        self.model = model
        self.cfg = train_cfg
        self.weights = loss_weights if loss_weights is not None else LossWeights()
        adam = dict(betas=(0.0, 0.99), eps=1e-8)
        self.opts = {
            "encoder": torch.optim.Adam(model.encoder.parameters(), lr=train_cfg.lr, **adam),
            "sbm": torch.optim.Adam(model.sbm.parameters(), lr=train_cfg.lr, **adam),
            "decoder": torch.optim.Adam(model.decoder.parameters(),
                                        lr=train_cfg.lr * train_cfg.phase2_lr_scale, **adam),
            "critic": torch.optim.Adam(model.critic.parameters(), lr=train_cfg.lr, **adam),
        }

    # -- one optimization step -------------------------------------------

    def train_step(self, i_s, i_t, step):
        """Run the curriculum, G forward/update, then the V update.

        Returns the LossReport (adv_v filled in); raises NonFiniteLossError
        naming the offending term if any loss diverges.
        """
        model, cfg, seed = self.model, self.cfg, self.model.config.seed
        batch = i_s.shape[0]
        p_pi = curriculum_p(step, cfg)

        u = seeded_rng(seed, f"curriculum/{step}").random(batch)
        same = torch.from_numpy(u < p_pi)
        if same.any():
            i_s = torch.where(same.view(-1, 1, 1, 1), i_t, i_s)

        groups = phase_mask(step, cfg)
        for name in self.G_GROUPS:
            getattr(model, name).requires_grad_(name in groups)
        model.critic.requires_grad_(False)
        for opt in self.opts.values():
            opt.zero_grad(set_to_none=True)

        noise_gen = seeded_torch_generator(seed, f"noise/{step}")
        code_s, _ = model.encoder(i_s)
        code_t, pyr_t = model.encoder(i_t)
        blended, _ = model.sbm(code_s, code_t)
        fake = model.decoder(blended, pyr_t, noise_gen)

        terms = {"adv_g": adv_loss_g(model.critic(fake))}
        e_swap = model.id_extractor(fake)
        e_src = model.id_extractor(i_s)
        e_tgt = model.id_extractor(i_t)
        terms["id"] = id_loss(e_swap, e_src)
        terms["con"] = contrastive_id_loss(
            e_swap, e_src, e_tgt, _batch_negatives(e_src), self.weights.tau,
            cfg.con_denominator_includes_positive)
        terms["rec"] = reconstruction_loss(fake, i_t, same)
        terms["lm"] = landmark_loss(model.landmark_extractor(i_t),
                                    model.landmark_extractor(fake))

        n_swap = math.ceil(cfg.swap_fraction * batch) if cfg.swap_fraction > 0 else 0
        if n_swap:
            pick = seeded_rng(seed, f"swap-pick/{step}").choice(batch, n_swap, replace=False)
            idx = torch.from_numpy(np.sort(pick))
            sub_st = fake[idx].detach() if cfg.swap_loss_detach else fake[idx]
            swap_gen = seeded_torch_generator(seed, f"noise/{step}/swap")
            terms["swap"] = dual_swap_loss(
                lambda s, t: model.generate(s, t, swap_gen), i_s[idx], i_t[idx], sub_st)
        else:
            terms["swap"] = fake.new_zeros(())

        total, report = total_generator_loss(terms, self.weights, step=step)
        total.backward()
        for name in self.G_GROUPS:
            if name in groups:
                self.opts[name].step()

        model.critic.requires_grad_(True)
        v_loss = adv_loss_v(model.critic(i_t), model.critic(fake.detach()))
        if not math.isfinite(float(v_loss.detach())):
            raise NonFiniteLossError("adv_v", float(v_loss.detach()), step)
        v_loss.backward()
        self.opts["critic"].step()
        report.adv_v = float(v_loss.detach())
        return report

    # -- checkpointing -----------------------------------------------------

    def state_tensors(self):
        """Model parameters plus Adam moments, keyed for the archive."""
        out = dict(self.model.named_params())
        for gname, opt in self.opts.items():
            for pname, p in _group_params(self.model, gname):
                st = opt.state.get(p)
                if st:
                    out[f"opt/{pname}/step"] = st["step"].detach()
                    out[f"opt/{pname}/exp_avg"] = st["exp_avg"].detach()
                    out[f"opt/{pname}/exp_avg_sq"] = st["exp_avg_sq"].detach()
        return out

    def load_state_tensors(self, tensors):
        self.model.load_tensors(tensors)
        for gname, opt in self.opts.items():
            for pname, p in _group_params(self.model, gname):
                key = f"opt/{pname}/exp_avg_sq"
                if key in tensors:
                    opt.state[p] = {
                        "step": torch.from_numpy(tensors[f"opt/{pname}/step"].copy()),
                        "exp_avg": torch.from_numpy(tensors[f"opt/{pname}/exp_avg"].copy()),
                        "exp_avg_sq": torch.from_numpy(tensors[key].copy()),
                    }

    def save(self, path, step):
        phase = 1 if step < self.cfg.phase2_start else 2
        manifest = Manifest(config=self.model.config, step=step, phase=phase)
        save_checkpoint(path, self.state_tensors(), manifest)

    # -- full loop -----------------------------------------------------------

    def run(self, dataset, out_dir, start_step=0, log=None):
        """Train from `start_step` to total_steps, appending metrics and
        writing periodic checkpoints under `out_dir`."""
        os.makedirs(out_dir, exist_ok=True)
        metrics_path = os.path.join(out_dir, "metrics.jsonl")
        seed = self.model.config.seed
        mode = "a" if start_step else "w"
        with open(metrics_path, mode) as metrics:
            for i in range(start_step, self.cfg.total_steps):
                i_s, i_t = sample_batch(dataset, self.cfg.batch_size, seed, i)
                report = self.train_step(i_s, i_t, i)
                done = i + 1
                if done % self.cfg.metrics_every == 0:
                    record = {"step": done, "adv_g": report.adv_g, "adv_v": report.adv_v,
                              "id": report.id, "con": report.con, "rec": report.rec,
                              "lm": report.lm, "swap": report.swap, "total": report.total,
                              "p_pi": curriculum_p(i, self.cfg)}
                    metrics.write(json.dumps(record) + "\n")
                    metrics.flush()
                    if log:
                        log(record)
                if done % self.cfg.checkpoint_every == 0 or done == self.cfg.total_steps:
                    self.save(os.path.join(out_dir, f"ckpt_{done:08d}.sbld"), done)
        return metrics_path


def _batch_negatives(e_src):
    """Per-sample negative pool: the other source embeddings in the batch."""
    b, dim = e_src.shape
    if b < 2:
        return e_src.new_zeros(b, 0, dim)
    keep = ~torch.eye(b, dtype=torch.bool)
    return e_src.unsqueeze(0).expand(b, b, dim)[keep].reshape(b, b - 1, dim)


def _group_params(model, gname):
    prefix = {"encoder": "encoder", "sbm": "sbm", "decoder": "decoder",
              "critic": "critic"}[gname]
    for name, p in getattr(model, gname).named_parameters():
        yield f"{prefix}/{name.replace('.', '/')}", p


def sample_batch(dataset, batch_size, seed, step):
    """Deterministic (sources, targets) draw for one step."""
    rng = seeded_rng(seed, f"batch/{step}")
    src = rng.integers(0, len(dataset), batch_size)
    tgt = rng.integers(0, len(dataset), batch_size)
    i_s = torch.stack([dataset[int(j)] for j in src])
    i_t = torch.stack([dataset[int(j)] for j in tgt])
    return i_s, i_t
