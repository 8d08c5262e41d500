"""Structural graph pre-training with conditioned downstream adaptation.

A frozen structurally pre-trained encoder is steered with downstream
node attributes: attribute similarity becomes a feature adjacency whose
positional embedding feeds a trainable encoder copy through
zero-initialized adapters. Includes the pre-trainer, fine-tuning /
prompt-tuning benchmarks, and a CLI.
"""

from .adapt import EvalReport, FinetuneConfig, RunResult, benchmark, evaluate, finetune, prompt_tune
from .condition import (
    ConditionEmbedding,
    FeatureAdjacency,
    KernelMatrix,
    condition_embedding,
    cosine_kernel,
    deepwalk_embed,
    discretize,
    soft_condition_embedding,
)
from .errors import ConfigError, DataError, GraphControlError, NumericalError, StructureOnlyError
from .graphs import (
    DataSplit,
    DatasetBundle,
    Graph,
    build_graph,
    load_dataset,
    make_fewshot_split,
    make_split,
    save_dataset,
)
from .model import (
    GinEncoder,
    GradientReport,
    GraphControlModel,
    ModelDims,
    SubgraphBatch,
    ZeroMlp,
    backprop_check,
    gin_forward,
    graphcontrol_forward,
    prompt_forward,
    readout,
)
from .prep import Preprocessor
from .pretrain import Checkpoint, PretrainConfig, infonce_loss, load_checkpoint, pretrain, save_checkpoint
from .sampler import Subgraph, induce_subgraph, rwr_sample, sample_subgraph
from .spectral import PositionalEmbedding, normalized_laplacian, positional_embedding

__version__ = "0.1.0"
