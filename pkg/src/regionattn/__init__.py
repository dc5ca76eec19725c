"""Region-aware attention masking for toy MMDiT denoising."""

from .attention import masked_attention, plain_attention, regional_oracle
from .layout import (
    BackgroundPolicy,
    LayoutError,
    LayoutSpec,
    Rect,
    RegionMaskSet,
    RegionSpec,
    ResolvedLayout,
    SegmentLayout,
    add_background_region,
    load_layout,
    parse_layout,
    rasterize_region,
    resolve_layout,
    segment_layout,
    tokenize,
    validate_cover,
)
from .masks import AttentionMask, assemble_mask, base_mask, build_regional_mask, mask_to_pgm
from .mmdit import ModelConfig, ModelWeights, denoise_pass, init_model
from .rpg import RpgConfig, rpg_step, run_rpg
from .scheduler import ControlConfig, RunResult, blend, run_denoising, step_base, step_region

__version__ = "0.1.0"
