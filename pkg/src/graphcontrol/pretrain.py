"""Structural contrastive pre-training by subgraph instance discrimination.

Two restart walks from the same center give a positive pair; the other
centers in the batch are negatives. Inputs are positional embeddings
only: pre-training runs on a structure-only view of the graph, so any
attribute access is a hard error. The default objective is
normalized-similarity InfoNCE; an energy-form variant and an
edge-drop augmentation variant are available behind config flags.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError, DataError, NumericalError
from .graphs import Graph, StructureView
from .model import (
    GinEncoder,
    ModelDims,
    SubgraphBatch,
    encode_readout,
    encoder_state_numpy,
    load_encoder_state,
    read_tensor_file,
    write_tensor_file,
)
from .sampler import Subgraph, derive_seed, drop_edges, induce_subgraph, rwr_sample_batch
from .spectral import embedding_from_laplacian, laplacian_from_dense

OPTIMIZERS = ("sgd", "adam", "adamw")
OBJECTIVES = ("instance", "aug-contrast")
LOSSES = ("infonce", "eq1-literal")

# fixed stream tags so the seed derivations of independent consumers never collide
_TAG_INIT = 101
_TAG_EPOCH_PERM = 102
_TAG_WALK = 103
_TAG_EDGE_DROP = 104


@dataclass
class PretrainConfig:
    epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 0.001
    temperature: float = 0.07
    walk_steps: int = 256
    restart_rate: float = 0.8
    optimizer: str = "adam"
    weight_decay: float = 0.0
    momentum: float = 0.0
    seed: int = 0
    embed_dim: int = 32
    objective: str = "instance"
    loss: str = "infonce"
    edge_drop: float = 0.2

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")


@dataclass
class Checkpoint:
    """Encoder parameters plus the configuration that produced them."""

    dims: ModelDims
    tensors: dict[str, np.ndarray]
    config: PretrainConfig
    dataset_name: str
    loss_curve: list[float] = field(default_factory=list)
    format_version: int = 1

    def build_encoder(self, dtype: torch.dtype = torch.float32) -> GinEncoder:
        encoder = GinEncoder(self.dims, dtype=dtype)
        load_encoder_state(encoder, self.tensors)
        return encoder


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> None:
    meta = {
        "kind": "pretrain-checkpoint",
        "config": asdict(checkpoint.config),
        "dataset": checkpoint.dataset_name,
        "loss_curve": checkpoint.loss_curve,
    }
    write_tensor_file(path, checkpoint.dims, meta, checkpoint.tensors)


def load_checkpoint(path: str | Path) -> Checkpoint:
    dims, meta, tensors = read_tensor_file(path)
    if meta.get("kind") != "pretrain-checkpoint":
        raise DataError(f"{path}: not a pre-training checkpoint")
    config = PretrainConfig(**meta["config"])
    return Checkpoint(
        dims=dims,
        tensors=tensors,
        config=config,
        dataset_name=meta.get("dataset", ""),
        loss_curve=list(meta.get("loss_curve", [])),
    )


# ---------------------------------------------------------------------------
# losses


def _unit_rows(x: torch.Tensor, what: str) -> torch.Tensor:
    norms = x.norm(dim=1, keepdim=True)
    if (norms == 0).any():
        raise NumericalError(f"zero-norm {what} row: cosine similarity undefined")
    return x / norms


def infonce_loss(anchor_embeddings: torch.Tensor, positive_embeddings: torch.Tensor,
                 temperature: float) -> torch.Tensor:
    """Mean cross-entropy over cosine-similarity logits with in-batch negatives."""
    if anchor_embeddings.shape != positive_embeddings.shape:
        raise DataError("anchor and positive batches must have identical shapes")
    b = anchor_embeddings.shape[0]
    if b < 2:
        raise DataError("InfoNCE needs a batch of at least 2 pairs")
    if temperature <= 0:
        raise ConfigError("temperature must be > 0")
    a = _unit_rows(anchor_embeddings, "anchor")
    p = _unit_rows(positive_embeddings, "positive")
    logits = (a @ p.T) / temperature
    targets = torch.arange(b, dtype=torch.long)
    return torch.nn.functional.cross_entropy(logits, targets)


def eq1_literal_loss(anchor_embeddings: torch.Tensor,
                     positive_embeddings: torch.Tensor) -> torch.Tensor:
    """Energy form with the printed signs, for study only: maximizes
    positive-pair distance and log-mean-exp of squared negative distances
    (negatives = positives of the other centers)."""
    b = anchor_embeddings.shape[0]
    if b < 2:
        raise DataError("needs a batch of at least 2 pairs")
    diff_pos = ((anchor_embeddings - positive_embeddings) ** 2).sum(dim=1)
    d2 = torch.cdist(anchor_embeddings, positive_embeddings, p=2.0) ** 2
    off = ~torch.eye(b, dtype=torch.bool)
    neg = d2.masked_fill(~off, float("-inf"))
    neg_term = torch.logsumexp(neg, dim=1) - np.log(b - 1)
    return -diff_pos.mean() + neg_term.mean()


# ---------------------------------------------------------------------------
# training


def build_optimizer(params, name: str, lr: float, weight_decay: float,
                    momentum: float = 0.0) -> torch.optim.Optimizer:
    if name == "sgd":
        return torch.optim.SGD(params, lr=lr, momentum=momentum, weight_decay=weight_decay)
    if name == "adam":
        return torch.optim.Adam(params, lr=lr, betas=(0.9, 0.999), eps=1e-8,
                                weight_decay=weight_decay)
    if name == "adamw":
        return torch.optim.AdamW(params, lr=lr, betas=(0.9, 0.999), eps=1e-8,
                                 weight_decay=weight_decay)
    raise ConfigError(f"unknown optimizer {name!r}")


def subgraph_embedding(subgraph: Subgraph, k: int) -> np.ndarray:
    """Positional embedding of a subgraph's induced adjacency."""
    lap = laplacian_from_dense(subgraph.dense_adjacency())
    return embedding_from_laplacian(lap, k=k).matrix


def _batch_pairs(view: StructureView, centers: np.ndarray, config: PretrainConfig,
                 epoch: int) -> tuple[list[Subgraph], list[Subgraph]]:
    """Positive pairs for one batch of centers: either two independent
    walks per center, or two edge-dropped views of one walk."""
    if config.objective == "instance":
        doubled = np.repeat(centers, 2)
        seeds = np.array([
            derive_seed(config.seed, _TAG_WALK, epoch, int(c), j)
            for c in centers for j in (0, 1)
        ], dtype=np.uint64)
        node_sets = rwr_sample_batch(view, doubled, config.walk_steps,
                                     config.restart_rate, seeds)
        subs = [induce_subgraph(view, nodes, int(c))
                for nodes, c in zip(node_sets, doubled)]
        return subs[0::2], subs[1::2]

    seeds = np.array([
        derive_seed(config.seed, _TAG_WALK, epoch, int(c), 0) for c in centers
    ], dtype=np.uint64)
    node_sets = rwr_sample_batch(view, centers, config.walk_steps,
                                 config.restart_rate, seeds)
    anchors, positives = [], []
    for nodes, c in zip(node_sets, centers):
        base = induce_subgraph(view, nodes, int(c))
        views = []
        for j in range(2):
            rng = np.random.Generator(np.random.PCG64(
                derive_seed(config.seed, _TAG_EDGE_DROP, epoch, int(c), j)))
            views.append(drop_edges(base, config.edge_drop, rng))
        anchors.append(views[0])
        positives.append(views[1])
    return anchors, positives


def pretrain(graph: Graph | StructureView, config: PretrainConfig,
             dataset_name: str = "") -> Checkpoint:
    """Train an encoder on structure alone; returns the final checkpoint
    (its ``loss_curve`` carries the per-epoch mean batch loss)."""
    view = graph.structure_only() if isinstance(graph, Graph) else graph
    eligible = np.nonzero(view.degrees > 0)[0]
    if eligible.size < config.batch_size:
        raise DataError(
            f"pre-training needs at least batch_size={config.batch_size} non-isolated "
            f"nodes, found {eligible.size}"
        )

    dims = ModelDims(k=config.embed_dim)
    encoder = GinEncoder(dims, dtype=torch.float32)
    gen = torch.Generator().manual_seed(derive_seed(config.seed, _TAG_INIT) & 0x7FFFFFFFFFFFFFFF)
    encoder.reset_parameters(gen)
    optimizer = build_optimizer(encoder.parameters(), config.optimizer,
                                config.learning_rate, config.weight_decay, config.momentum)

    loss_fn = infonce_loss if config.loss == "infonce" else None
    curve: list[float] = []
    for epoch in range(config.epochs):
        rng = np.random.Generator(np.random.PCG64(
            derive_seed(config.seed, _TAG_EPOCH_PERM, epoch)))
        order = eligible[rng.permutation(eligible.size)]
        batch_losses = []
        for lo in range(0, order.size, config.batch_size):
            centers = order[lo : lo + config.batch_size]
            if centers.size < 2:
                continue
            anchors, positives = _batch_pairs(view, centers, config, epoch)
            a_emb = [subgraph_embedding(s, config.embed_dim) for s in anchors]
            p_emb = [subgraph_embedding(s, config.embed_dim) for s in positives]
            batch_a = SubgraphBatch.build(anchors, a_emb, dtype=torch.float32)
            batch_p = SubgraphBatch.build(positives, p_emb, dtype=torch.float32)
            za = encode_readout(encoder, batch_a.p, batch_a)
            zp = encode_readout(encoder, batch_p.p, batch_p)
            if loss_fn is not None:
                loss = loss_fn(za, zp, config.temperature)
            else:
                loss = eq1_literal_loss(za, zp)
            if not torch.isfinite(loss):
                raise NumericalError(f"pre-training loss became non-finite at epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            batch_losses.append(float(loss.detach()))
        curve.append(float(np.mean(batch_losses)) if batch_losses else float("nan"))

    return Checkpoint(
        dims=dims,
        tensors=encoder_state_numpy(encoder),
        config=config,
        dataset_name=dataset_name,
        loss_curve=curve,
    )
