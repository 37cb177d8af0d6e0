"""Command-line surface: train, swap, losses, selfcheck.

Exit codes: 0 success, 1 selfcheck failure, 2 invalid config/checkpoint,
3 unreadable data, 4 non-finite loss abort. Diagnostics go to stderr as one
JSON object. STYLEBLEND_SEED overrides the configured seed everywhere.
"""

import argparse
import dataclasses
import json
import os
import sys

import torch

from .core import (CheckpointError, ConfigError, ModelConfig, load_checkpoint,
                   seeded_torch_generator)
from .critic import adv_loss_g, adv_loss_v
from .data import DataError, ImageFolder, load_image, save_image
from .losses import (LossWeights, NonFiniteLossError, contrastive_id_loss,
                     dual_swap_loss, id_loss, landmark_loss,
                     reconstruction_loss, total_generator_loss)
from .selfcheck import run_selfcheck
from .trainer import SwapModel, TrainConfig, Trainer

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_BAD_CONFIG = 2
EXIT_BAD_DATA = 3
EXIT_NONFINITE = 4


def _diag(error, detail):
    json.dump({"error": error, "detail": str(detail)}, sys.stderr)
    sys.stderr.write("\n")


def load_config_file(path):
    """Flat JSON config: ModelConfig keys plus optional TrainConfig and
    LossWeights keys, all at top level."""
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config file must hold a JSON object")
    sections = [(ModelConfig, {}), (TrainConfig, {}), (LossWeights, {})]
    field_owner = {}
    for cls, picked in sections:
        for f in dataclasses.fields(cls):
            field_owner[f.name] = picked
    unknown = [k for k in obj if k not in field_owner]
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key, val in obj.items():
        field_owner[key][key] = val
    model = ModelConfig(**sections[0][1])
    train = TrainConfig(**sections[1][1])
    weights = LossWeights(**sections[2][1])
    return model, train, weights


def _apply_seed_override(model_cfg, cli_seed=None):
    seed = cli_seed
    if seed is None and "STYLEBLEND_SEED" in os.environ:
        try:
            seed = int(os.environ["STYLEBLEND_SEED"])
        except ValueError as exc:
            raise ConfigError(f"STYLEBLEND_SEED must be an integer: {exc}") from exc
    if seed is None:
        return model_cfg
    return dataclasses.replace(model_cfg, seed=seed)


def _model_from_checkpoint(path):
    manifest, tensors = load_checkpoint(path)
    model = SwapModel(manifest.config)
    try:
        model.load_tensors(tensors)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"checkpoint {path!r} does not match its declared "
                              f"config: {exc}") from exc
    return manifest, tensors, model


def cmd_train(args):
    try:
        model_cfg, train_cfg, weights = load_config_file(args.config)
        model_cfg = _apply_seed_override(model_cfg)
    except ConfigError as exc:
        _diag("config", exc)
        return EXIT_BAD_CONFIG

    start_step = 0
    resume_state = None
    if args.resume:
        try:
            manifest, resume_state = load_checkpoint(args.resume)
        except CheckpointError as exc:
            _diag("checkpoint", exc)
            return EXIT_BAD_CONFIG
        if manifest.config != model_cfg:
            _diag("config", "resume checkpoint config differs from --config")
            return EXIT_BAD_CONFIG
        start_step = manifest.step

    try:
        dataset = ImageFolder(args.data, model_cfg.image_size)
        if len(dataset) < 2:
            raise DataError(f"need at least 2 images to train, found {len(dataset)}")
        dataset[0]
    except DataError as exc:
        _diag("data", exc)
        return EXIT_BAD_DATA

    model = SwapModel(model_cfg)
    trainer = Trainer(model, train_cfg, weights)
    if resume_state is not None:
        trainer.load_state_tensors(resume_state)
    try:
        trainer.run(dataset, args.out, start_step=start_step,
                    log=(None if args.quiet else _log_record))
    except NonFiniteLossError as exc:
        _diag("non-finite-loss", exc)
        return EXIT_NONFINITE
    except DataError as exc:
        _diag("data", exc)
        return EXIT_BAD_DATA
    return EXIT_OK


def _log_record(record):
    print(json.dumps(record))


def cmd_swap(args):
    try:
        manifest, _, model = _model_from_checkpoint(args.ckpt)
    except CheckpointError as exc:
        _diag("checkpoint", exc)
        return EXIT_BAD_CONFIG
    try:
        cfg = _apply_seed_override(manifest.config, args.seed)
    except ConfigError as exc:
        _diag("config", exc)
        return EXIT_BAD_CONFIG
    try:
        src = load_image(args.source, cfg.image_size)
        tgt = load_image(args.target, cfg.image_size)
    except DataError as exc:
        _diag("data", exc)
        return EXIT_BAD_DATA
    with torch.no_grad():
        out = model.generate(src, tgt, seeded_torch_generator(cfg.seed, "swap-noise"))
    save_image(out, args.out)
    return EXIT_OK


def cmd_losses(args):
    try:
        manifest, _, model = _model_from_checkpoint(args.ckpt)
    except CheckpointError as exc:
        _diag("checkpoint", exc)
        return EXIT_BAD_CONFIG
    cfg = _apply_seed_override(manifest.config)
    try:
        src = load_image(args.source, cfg.image_size)
        tgt = load_image(args.target, cfg.image_size)
        with open(args.source, "rb") as a, open(args.target, "rb") as b:
            same_input = a.read() == b.read()
    except (DataError, OSError) as exc:
        _diag("data", exc)
        return EXIT_BAD_DATA

    weights = LossWeights()
    with torch.no_grad():
        fake = model.generate(src, tgt, seeded_torch_generator(cfg.seed, "losses-noise"))
        e_swap = model.id_extractor(fake)
        e_src = model.id_extractor(src)
        e_tgt = model.id_extractor(tgt)
        swap_gen = seeded_torch_generator(cfg.seed, "losses-swap-noise")
        terms = {
            "adv_g": adv_loss_g(model.critic(fake)),
            "id": id_loss(e_swap, e_src),
            "con": contrastive_id_loss(e_swap, e_src, e_tgt, [], weights.tau),
            "rec": reconstruction_loss(fake, tgt, same_input),
            "lm": landmark_loss(model.landmark_extractor(tgt),
                                model.landmark_extractor(fake)),
            "swap": dual_swap_loss(lambda s, t: model.generate(s, t, swap_gen),
                                   src, tgt, fake),
        }
        adv_v = adv_loss_v(model.critic(tgt), model.critic(fake))
    try:
        _, report = total_generator_loss(terms, weights, adv_v=adv_v)
    except NonFiniteLossError as exc:
        _diag("non-finite-loss", exc)
        return EXIT_NONFINITE
    print(json.dumps(report.to_json()))
    return EXIT_OK


def cmd_selfcheck(args):
    failures = run_selfcheck(mutate=args.mutate)
    if failures:
        _diag("selfcheck", f"failed check: {failures[0]}")
        return EXIT_CHECK_FAILED
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="styleblend",
                                     description="Style-blending face swapper")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on an image directory")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--data", required=True, help="directory of face images")
    p.add_argument("--out", required=True, help="output directory for metrics/checkpoints")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--quiet", action="store_true", help="suppress per-step metrics on stdout")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("swap", help="swap the source face onto the target image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--seed", type=int, help="noise seed override")
    p.set_defaults(fn=cmd_swap)

    p = sub.add_parser("losses", help="print the loss report for one image pair")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.set_defaults(fn=cmd_losses)

    p = sub.add_parser("selfcheck", help="run gradient checks and invariants")
    p.add_argument("--mutate", help="deliberately corrupt one computation (harness test)")
    p.set_defaults(fn=cmd_selfcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
