"""Neural building blocks: temporal shift, gated convolutions, generator,
and the patch critic."""

from .tsm import LearnableTemporalShift
from .blocks import GatedTSMConv, SelfAttention2d, UpsampleGatedTSMConv
from .generator import (
    DILATION_LADDER,
    GENERATOR_LAYERS,
    INPUT_CHANNELS,
    GeneratorConfig,
    GeneratorInput,
    InpaintGenerator,
    composite,
)
from .discriminator import (
    CRITIC_INPUT_CHANNELS,
    DISCRIMINATOR_LAYERS,
    DiscriminatorConfig,
    PatchDiscriminator,
)

__all__ = [
    "LearnableTemporalShift", "GatedTSMConv", "SelfAttention2d",
    "UpsampleGatedTSMConv", "DILATION_LADDER", "GENERATOR_LAYERS",
    "INPUT_CHANNELS", "GeneratorConfig", "GeneratorInput", "InpaintGenerator",
    "composite", "CRITIC_INPUT_CHANNELS", "DISCRIMINATOR_LAYERS",
    "DiscriminatorConfig", "PatchDiscriminator",
]
