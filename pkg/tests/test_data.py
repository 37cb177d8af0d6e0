"""Image folder loader: ordering, value range, crop/resize determinism."""

import numpy as np
import pytest
import torch
from PIL import Image

from styleblend.data import DataError, ImageFolder, load_image, save_image


def test_index_is_lexicographic(tmp_path):
    for name in ("c.png", "a.png", "b.png"):
        Image.new("RGB", (8, 8), (100, 150, 200)).save(tmp_path / name)
    ds = ImageFolder(tmp_path, 32)
    assert ds.files == ["a.png", "b.png", "c.png"]
    assert len(ds) == 3


def test_loaded_image_satisfies_invariants(face_dir_32):
    ds = ImageFolder(face_dir_32, 32)
    img = ds[0]
    assert img.shape == (3, 32, 32)
    assert img.dtype == torch.float32
    assert img.min() >= -1.0 and img.max() <= 1.0
    assert torch.isfinite(img).all()


def test_same_file_same_tensor(face_dir_32):
    a = load_image(face_dir_32 / "face_00.png", 32)
    b = load_image(face_dir_32 / "face_00.png", 32)
    assert torch.equal(a, b)


def test_center_crop_nonsquare(tmp_path):
    arr = np.zeros((10, 30, 3), np.uint8)
    arr[:, 10:20] = 255  # center band survives a center crop
    Image.fromarray(arr).save(tmp_path / "wide.png")
    img = load_image(tmp_path / "wide.png", 10)
    assert img.min().item() == pytest.approx(1.0)


def test_save_load_roundtrip_is_lossless_on_grid(tmp_path):
    # values on the exact 8-bit grid survive the affine map both ways
    levels = torch.arange(256, dtype=torch.float32) / 127.5 - 1.0
    img = levels.reshape(1, 16, 16).repeat(3, 1, 1)
    save_image(img, tmp_path / "grid.png")
    back = load_image(tmp_path / "grid.png", 16)
    assert torch.allclose(back, img, atol=1e-6)


def test_missing_dir_and_empty_dir_raise(tmp_path):
    with pytest.raises(DataError, match="exist"):
        ImageFolder(tmp_path / "nope", 32)
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(DataError, match="no images"):
        ImageFolder(empty, 32)


def test_unreadable_image_raises(tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not a png at all")
    with pytest.raises(DataError, match="cannot read"):
        load_image(bad, 32)
