"""Domain types, model configuration, deterministic RNG streams and checkpoint I/O."""

import dataclasses
import hashlib
import json
import struct

import numpy as np
import torch

CHECKPOINT_MAGIC = b"SBLD"
CHECKPOINT_VERSION = 1

_DTYPE_TAGS = {np.dtype("float32"): 0, np.dtype("float64"): 1}
_TAG_DTYPES = {0: np.dtype("float32"), 1: np.dtype("float64")}


class ConfigError(ValueError):
    """Raised when a configuration violates one of its invariants."""


class CheckpointError(RuntimeError):
    """Base class for checkpoint archive failures."""


class CorruptArchiveError(CheckpointError):
    """Archive bytes do not parse: bad magic, truncation or malformed record."""


class UnsupportedVersionError(CheckpointError):
    """Archive declares a format_version this build cannot read."""


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    """Static shape configuration shared by every model component.

    Resolutions are all powers of two: the decoder grows 4x4 -> image_size
    over `decoder_blocks` doublings, so image_size == 2**(decoder_blocks+1).
    """

    image_size: int = 64
    style_count: int = 12
    style_dim: int = 64
    heads: int = 4
    sbm_layers: int = 4
    pyramid_levels: int = 3
    decoder_blocks: int = 5
    id_dim: int = 64
    landmark_count: int = 19
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("image_size", "style_count", "style_dim", "heads", "sbm_layers",
                     "pyramid_levels", "decoder_blocks", "id_dim", "landmark_count"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not isinstance(self.seed, int):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        if self.image_size < 32:
            raise ConfigError(f"image_size must be >= 32, got {self.image_size}")
        if self.image_size & (self.image_size - 1):
            raise ConfigError(f"image_size must be a power of two, got {self.image_size}")
        if self.style_dim % self.heads:
            raise ConfigError(
                f"style_dim ({self.style_dim}) must be divisible by heads ({self.heads})")
        if self.style_count % self.pyramid_levels:
            raise ConfigError(
                f"style_count ({self.style_count}) must be divisible by "
                f"pyramid_levels ({self.pyramid_levels})")
        if self.image_size != 2 ** (self.decoder_blocks + 1):
            raise ConfigError(
                f"image_size ({self.image_size}) must equal 2**(decoder_blocks+1) "
                f"= {2 ** (self.decoder_blocks + 1)}")

    @classmethod
    def desk(cls, **overrides):
        """Default configuration small enough to train on a CPU."""
        return cls(**overrides)

    @classmethod
    def paper(cls, **overrides):
        """Full-scale configuration (1024x1024, 18x512 codes); shape tests only."""
        fields = dict(image_size=1024, style_count=18, style_dim=512, heads=8,
                      sbm_layers=4, pyramid_levels=3, decoder_blocks=9,
                      id_dim=512, landmark_count=19, seed=0)
        fields.update(overrides)
        return cls(**fields)

    def pyramid_sides(self):
        """Spatial sides of the feature pyramid, coarse to fine.

        Finest level is image_size/4; each coarser level halves the side.
        """
        p = self.pyramid_levels
        return [self.image_size // 2 ** (p + 1 - i) for i in range(p)]

    def to_json(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj):
        if not isinstance(obj, dict):
            raise ConfigError(f"model config must be a JSON object, got {type(obj).__name__}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**obj)


# ---------------------------------------------------------------------------
# Deterministic random streams
# ---------------------------------------------------------------------------

def _stream_entropy(seed, label):
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:16], "little")


def seeded_rng(seed, label):
    """Deterministic numpy Generator for (seed, label).

    Equal (seed, label) pairs always yield the same stream; distinct labels or
    seeds yield independent streams.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(_stream_entropy(seed, label))))


def seeded_torch_generator(seed, label):
    """Deterministic torch.Generator for (seed, label); same keying as seeded_rng."""
    g = torch.Generator()
    g.manual_seed(_stream_entropy(seed, label) & 0x7FFF_FFFF_FFFF_FFFF)
    return g


# ---------------------------------------------------------------------------
# Checkpoint archive
# ---------------------------------------------------------------------------
#
# Layout (all integers little-endian):
#   magic "SBLD" | u32 format_version | u32 manifest byte length | manifest JSON
#   then per tensor, in the order listed by manifest["tensor_names"]:
#     u32 name byte length | name UTF-8 | u8 dtype tag (0=f32, 1=f64)
#     u8 rank | rank * u64 dims | raw little-endian row-major data


@dataclasses.dataclass(frozen=True)
class Manifest:
    config: ModelConfig
    step: int = 0
    phase: int = 1
    format_version: int = CHECKPOINT_VERSION

    def to_json(self):
        return {"format_version": self.format_version, "config": self.config.to_json(),
                "step": self.step, "phase": self.phase}

    @classmethod
    def from_json(cls, obj):
        return cls(config=ModelConfig.from_json(obj["config"]), step=obj["step"],
                   phase=obj["phase"], format_version=obj["format_version"])


def _as_array(t):
    if isinstance(t, torch.Tensor):
        t = t.detach().cpu().numpy()
    a = np.asarray(t)
    if a.dtype not in _DTYPE_TAGS:
        raise CheckpointError(f"unsupported tensor dtype {a.dtype}; only f32/f64 are stored")
    # ascontiguousarray would promote 0-d arrays to 1-d; copy preserves rank
    return a if a.flags["C_CONTIGUOUS"] else a.copy(order="C")


def save_checkpoint(path, tensors, manifest):
    """Write the named tensor map and manifest to `path` as an SBLD archive.

    `tensors` may be a mapping or an iterable of (name, array) pairs; names
    must be unique. Arrays are stored exactly (f32/f64), so a reload is
    bit-identical.
    """
    if isinstance(tensors, dict):
        items = list(tensors.items())
    else:
        items = [(str(n), t) for n, t in tensors]
    seen = set()
    for name, _ in items:
        if name in seen:
            raise CheckpointError(f"duplicate tensor name {name!r}")
        seen.add(name)
    items.sort(key=lambda kv: kv[0])

    meta = manifest.to_json()
    meta["tensor_names"] = [name for name, _ in items]
    manifest_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()

    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(manifest_bytes)))
        fh.write(manifest_bytes)
        for name, tensor in items:
            arr = _as_array(tensor)
            name_bytes = name.encode()
            fh.write(struct.pack("<I", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<BB", _DTYPE_TAGS[arr.dtype], arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise CorruptArchiveError(f"truncated archive while reading {what}")
    return data


def load_checkpoint(path):
    """Read an SBLD archive; returns (Manifest, dict name -> numpy array)."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != CHECKPOINT_MAGIC:
            raise CorruptArchiveError(f"{path}: not an SBLD checkpoint (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != CHECKPOINT_VERSION:
            raise UnsupportedVersionError(
                f"{path}: format_version {version} unsupported (expected {CHECKPOINT_VERSION})")
        (mlen,) = struct.unpack("<I", _read_exact(fh, 4, "manifest length"))
        try:
            meta = json.loads(_read_exact(fh, mlen, "manifest"))
            manifest = Manifest.from_json(meta)
            names = meta["tensor_names"]
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptArchiveError(f"{path}: malformed manifest ({exc})") from exc

        tensors = {}
        for expected in names:
            (nlen,) = struct.unpack("<I", _read_exact(fh, 4, "tensor name length"))
            name = _read_exact(fh, nlen, "tensor name").decode()
            if name != expected:
                raise CorruptArchiveError(
                    f"{path}: tensor order mismatch ({name!r} != {expected!r})")
            tag, rank = struct.unpack("<BB", _read_exact(fh, 2, "tensor header"))
            if tag not in _TAG_DTYPES:
                raise CorruptArchiveError(f"{path}: unknown dtype tag {tag}")
            dims = struct.unpack(f"<{rank}Q", _read_exact(fh, 8 * rank, "tensor dims"))
            dtype = _TAG_DTYPES[tag]
            count = 1
            for d in dims:
                count *= d
            raw = _read_exact(fh, count * dtype.itemsize, f"tensor {name!r} data")
            tensors[name] = np.frombuffer(raw, dtype=dtype).reshape(dims).copy()
        if fh.read(1):
            raise CorruptArchiveError(f"{path}: trailing bytes after last tensor")
    return manifest, tensors
