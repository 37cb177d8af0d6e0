"""Shared fixtures: synthetic face-like images and tiny trainable configs."""

import numpy as np
import pytest
import torch

from styleblend import ModelConfig, TrainConfig
from styleblend.data import save_image


def toy_faces(n, size, seed=5):
    """Deterministic smooth blob-on-gradient images in [-1, 1], (3, size, size)."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    imgs = []
    for _ in range(n):
        base = np.stack([np.full((size, size), v) for v in rng.uniform(-0.6, 0.6, 3)])
        cx, cy = rng.uniform(0.3, 0.7, 2)
        r = rng.uniform(0.15, 0.3)
        blob = np.exp(-(((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * r * r)))
        tint = rng.uniform(-0.8, 0.8, 3)[:, None, None]
        ripple = 0.15 * np.sin(2 * np.pi * xx * rng.uniform(1, 3))[None]
        img = np.clip(base + blob[None] * tint + ripple, -1, 1)
        imgs.append(torch.from_numpy(img.astype(np.float32)))
    return imgs


class ListDataset:
    def __init__(self, imgs):
        self.imgs = imgs

    def __len__(self):
        return len(self.imgs)

    def __getitem__(self, i):
        return self.imgs[i]


def tiny_model_config(**overrides):
    """32x32 config small enough for multi-step loop tests."""
    fields = dict(image_size=32, style_count=6, style_dim=16, heads=2,
                  sbm_layers=2, pyramid_levels=3, decoder_blocks=4,
                  id_dim=16, landmark_count=5, seed=11)
    fields.update(overrides)
    return ModelConfig(**fields)


def tiny_train_config(**overrides):
    fields = dict(total_steps=4, batch_size=2, lr=1e-4, curriculum_warm_steps=2,
                  curriculum_decay_steps=2, phase2_start=2, swap_fraction=0.5,
                  metrics_every=1, checkpoint_every=2)
    fields.update(overrides)
    return TrainConfig(**fields)


@pytest.fixture(scope="session")
def face_dir_32(tmp_path_factory):
    """Directory of eight 32x32 synthetic PNGs."""
    root = tmp_path_factory.mktemp("faces32")
    for i, img in enumerate(toy_faces(8, 32, seed=21)):
        save_image(img, root / f"face_{i:02d}.png")
    return root


@pytest.fixture(scope="session")
def face_dir_64(tmp_path_factory):
    root = tmp_path_factory.mktemp("faces64")
    for i, img in enumerate(toy_faces(8, 64, seed=5)):
        save_image(img, root / f"face_{i:02d}.png")
    return root
