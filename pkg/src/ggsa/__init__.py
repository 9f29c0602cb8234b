"""Gated group self-attention encoders for answer selection."""

from .attention import (AttentionParams, GateParams, GroupLayout,
                        global_info_gate, group_layout,
                        group_multi_head_attention, local_window_attention,
                        multi_head_attention, scaled_dot_attention)
from .bench import BenchReport, FlopCounter, FlopModel, flop_count, run_benchmark
from .checkpoint import load_checkpoint, save_checkpoint
from .composition import (compose, compose_batch, cosine, pairwise_hinge_loss,
                          pointwise_bce_loss, pointwise_probabilities,
                          rank_metrics, ranking_summary)
from .config import ModelConfig, config_from_kv_text
from .data import (QAExample, SyntheticSpec, generate_dataset, read_dataset,
                   write_dataset)
from .encoder import (EncoderParams, encode, encode_batch, ggsa_block_forward,
                      global_block_forward, iggsa_answer_forward, init_params,
                      positional_encoding)
from .errors import (CheckpointError, ChecksumMismatchError, ConfigConflictError,
                     ConfigError, ContractError, DataError, DegenerateMaskError,
                     GgsaError, InputError, ShapeError, TrainingDivergedError,
                     TruncatedCheckpointError, VersionMismatchError)
from .gradcheck import check_gradients, full_model_gradcheck, relative_error
from .tensor import Tensor, backward
from .train import RmsPropMomentum, TrainSettings, evaluate, train

__version__ = "0.1.0"
