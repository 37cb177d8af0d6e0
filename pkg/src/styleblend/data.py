"""Image folder loading: decode, center-crop to square, resize, map to [-1,1]."""

import os

import numpy as np
import torch
from PIL import Image


class DataError(RuntimeError):
    """Dataset directory or image file cannot be used."""


EXTENSIONS = (".png", ".jpg", ".jpeg")


def load_image(path, image_size):
    """File -> (3, image_size, image_size) float32 tensor in [-1, 1]."""
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            w, h = im.size
            side = min(w, h)
            left, top = (w - side) // 2, (h - side) // 2
            im = im.crop((left, top, left + side, top + side))
            im = im.resize((image_size, image_size), Image.BILINEAR)
            arr = np.asarray(im, dtype=np.float32)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    return torch.from_numpy(arr / 127.5 - 1.0).permute(2, 0, 1).contiguous()


def save_image(tensor, path):
    """(3, H, W) tensor in [-1, 1] -> 8-bit PNG."""
    arr = tensor.detach().cpu().numpy()
    arr = np.rint((np.clip(arr, -1.0, 1.0) + 1.0) * 127.5).astype(np.uint8)
    Image.fromarray(arr.transpose(1, 2, 0)).save(path, format="PNG")


class ImageFolder:
    """Lexicographically indexed directory of images, decoded lazily with a cache."""

    def __init__(self, root, image_size):
        if not os.path.isdir(root):
            raise DataError(f"data directory {root!r} does not exist")
        self.root = root
        self.image_size = image_size
        self.files = sorted(f for f in os.listdir(root)
                            if f.lower().endswith(EXTENSIONS))
        if not self.files:
            raise DataError(f"no images (*{'/*'.join(EXTENSIONS)}) in {root!r}")
        self._cache = {}

    def __len__(self):
        return len(self.files)

    def __getitem__(self, i):
        if i not in self._cache:
            self._cache[i] = load_image(os.path.join(self.root, self.files[i]),
                                        self.image_size)
        return self._cache[i]
