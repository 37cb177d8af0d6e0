"""Style-blending face swapper: encode, blend, decode, trained adversarially."""

from .core import (CheckpointError, ConfigError, CorruptArchiveError, Manifest,
                   ModelConfig, UnsupportedVersionError, load_checkpoint,
                   save_checkpoint, seeded_rng, seeded_torch_generator)
from .critic import Critic, adv_loss_g, adv_loss_v, critic_score
from .decoder import Decoder, adain, decode, style_to_affine
from .encoder import Encoder, encode, se_block
from .extractors import (IdExtractor, LandmarkExtractor, extract_id,
                         extract_landmarks, soft_argmax)
from .losses import (LossReport, LossWeights, NonFiniteLossError,
                     contrastive_id_loss, dual_swap_loss, id_loss,
                     landmark_loss, reconstruction_loss, total_generator_loss)
from .sbm import Sbm, blend, blend_normalize, cross_attention
from .trainer import (SwapModel, TrainConfig, Trainer, curriculum_p,
                      phase_mask, sample_batch)

__all__ = [
    "CheckpointError", "ConfigError", "CorruptArchiveError", "Critic",
    "Decoder", "Encoder", "IdExtractor", "LandmarkExtractor", "LossReport",
    "LossWeights", "Manifest", "ModelConfig", "NonFiniteLossError", "Sbm",
    "SwapModel", "TrainConfig", "Trainer", "UnsupportedVersionError", "adain",
    "adv_loss_g", "adv_loss_v", "blend", "blend_normalize",
    "contrastive_id_loss", "critic_score", "cross_attention", "curriculum_p",
    "decode", "dual_swap_loss", "encode", "extract_id", "extract_landmarks",
    "id_loss", "landmark_loss", "load_checkpoint", "phase_mask",
    "reconstruction_loss", "sample_batch", "save_checkpoint", "se_block",
    "seeded_rng", "seeded_torch_generator", "soft_argmax", "style_to_affine",
    "total_generator_loss",
]

__version__ = "0.1.0"
