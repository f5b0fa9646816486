"""Recurrent video super-resolution lab with hidden-state attention cleanup."""

from .autodiff import Node, Tape, backward, grad_check
from .degradation import DegradationParams, compress_standin, degrade_frame, gaussian_kernel
from .engine import (HiddenTrace, ModelWeights, RecurrentState, RunOptions,
                     ablate_zero_hidden, init_weights, inject_hidden,
                     load_model, pool_override, run_combine, run_sequence,
                     save_model, step)
from .filter_bank import (FilterBank, FilterKernel, HiddenStatePool,
                          blur_variant, build_pool, default_bank, sharp_variant)
from .flow import FlowConfig, estimate_flow
from .hsa import (AttentionMaps, SCAWeights, hsa_transform, make_query,
                  project_pool, sca_aggregate, summarize_attention)
from .trainer import (Clip, TrainingConfig, ema_update, l1_loss, psnr,
                      temporal_flip, train_stage1)

__version__ = "0.1.0"
