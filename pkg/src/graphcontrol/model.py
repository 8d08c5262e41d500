"""Differentiable model core: GIN encoder, zero MLPs, composition, prompts.

The adapted model keeps a frozen pre-trained encoder next to a trainable
copy. The copy's input is the structural embedding plus a zero-MLP
projection of the condition embedding; its pooled output re-enters
through a second zero MLP:

    out = readout(frozen(P)) + Z2(readout(copy(P + Z1(P'))))

Both zero MLPs start at exactly zero, so a freshly adapted model is
bitwise the frozen encoder. Prompt tuning adds trainable row vectors q
and q' to P and P' before the same pipeline.

Training runs in float32; gradient verification constructs the model in
float64 and compares autograd against central finite differences.
"""

from __future__ import annotations

import copy as _copy
import io
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
import torch
from torch import nn

from .errors import ConfigError, DataError, NumericalError
from .sampler import Subgraph

_CKPT_MAGIC = b"GCCKPT\x00\x01"
_CKPT_VERSION = 1


@dataclass(frozen=True)
class ModelDims:
    k: int = 32
    l: int = 64
    layers: int = 4


def _xavier_uniform_(weight: torch.Tensor, generator: torch.Generator) -> None:
    fan_out, fan_in = weight.shape
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    with torch.no_grad():
        weight.uniform_(-bound, bound, generator=generator)


class GinLayer(nn.Module):
    def __init__(self, in_dim: int, hidden: int, dtype: torch.dtype):
        super().__init__()
        self.lin1 = nn.Linear(in_dim, hidden, dtype=dtype)
        self.lin2 = nn.Linear(hidden, hidden, dtype=dtype)
        self.eps = nn.Parameter(torch.zeros((), dtype=dtype))

    def reset_parameters(self, generator: torch.Generator) -> None:
        _xavier_uniform_(self.lin1.weight, generator)
        _xavier_uniform_(self.lin2.weight, generator)
        with torch.no_grad():
            self.lin1.bias.zero_()
            self.lin2.bias.zero_()
            self.eps.zero_()

    def forward(self, x: torch.Tensor, src: torch.Tensor, dst: torch.Tensor) -> torch.Tensor:
        agg = (1.0 + self.eps) * x
        if src.numel():
            agg = agg.index_add(0, dst, x[src])
        return self.lin2(torch.relu(self.lin1(agg)))


class GinEncoder(nn.Module):
    """Message-passing encoder: sum aggregation with learnable self-weight,
    two affine stages per layer, rectifier after every layer but the last."""

    def __init__(self, dims: ModelDims = ModelDims(), in_dim: int | None = None,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        self.dims = dims
        self.in_dim = dims.k if in_dim is None else in_dim
        layers = [GinLayer(self.in_dim, dims.l, dtype)]
        layers += [GinLayer(dims.l, dims.l, dtype) for _ in range(dims.layers - 1)]
        self.layers = nn.ModuleList(layers)

    def reset_parameters(self, generator: torch.Generator) -> None:
        for layer in self.layers:
            layer.reset_parameters(generator)

    def forward(self, x: torch.Tensor, src: torch.Tensor, dst: torch.Tensor) -> torch.Tensor:
        n = len(self.layers)
        for t, layer in enumerate(self.layers):
            x = layer(x, src, dst)
            if t < n - 1:
                x = torch.relu(x)
        return x


class ZeroMlp(nn.Module):
    """Affine map whose weight and bias are exactly zero at construction."""

    def __init__(self, dim: int, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.linear = nn.Linear(dim, dim, dtype=dtype)
        with torch.no_grad():
            self.linear.weight.zero_()
            self.linear.bias.zero_()

    def reset_parameters_random(self, generator: torch.Generator) -> None:
        # used by the no-zero ablation only
        _xavier_uniform_(self.linear.weight, generator)
        with torch.no_grad():
            self.linear.bias.zero_()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.linear(x)


class GraphControlModel(nn.Module):
    """Frozen encoder + trainable copy linked by zero MLPs, plus classifier.

    ``attr_encoder`` is only populated for the from-scratch attribute
    baseline; ``prompts`` only for prompt tuning.
    """

    def __init__(
        self,
        frozen_encoder: GinEncoder,
        num_classes: int,
        with_prompts: bool = False,
        attr_in_dim: int | None = None,
        init_seed: int = 0,
    ):
        super().__init__()
        dims = frozen_encoder.dims
        dtype = next(frozen_encoder.parameters()).dtype
        self.dims = dims
        self.num_classes = num_classes
        gen = torch.Generator().manual_seed(init_seed)

        self.frozen_encoder = frozen_encoder
        for p in self.frozen_encoder.parameters():
            p.requires_grad_(False)
        self.trainable_copy = _copy.deepcopy(frozen_encoder)
        for p in self.trainable_copy.parameters():
            p.requires_grad_(True)

        self.z1 = ZeroMlp(dims.k, dtype)
        self.z2 = ZeroMlp(dims.l, dtype)
        self.classifier = nn.Linear(dims.l, num_classes, dtype=dtype)
        _xavier_uniform_(self.classifier.weight, gen)
        with torch.no_grad():
            self.classifier.bias.zero_()

        if with_prompts:
            q = torch.empty((1, dims.k), dtype=dtype)
            q_prime = torch.empty((1, dims.k), dtype=dtype)
            with torch.no_grad():
                q.uniform_(-0.01, 0.01, generator=gen)
                q_prime.uniform_(-0.01, 0.01, generator=gen)
            self.prompts = nn.ParameterDict(
                {"q": nn.Parameter(q), "q_prime": nn.Parameter(q_prime)}
            )
        else:
            self.prompts = None

        if attr_in_dim is not None:
            self.attr_encoder = GinEncoder(dims, in_dim=attr_in_dim, dtype=dtype)
            self.attr_encoder.reset_parameters(gen)
        else:
            self.attr_encoder = None

    @property
    def has_prompts(self) -> bool:
        return self.prompts is not None

    def trainable_parameters(self) -> list[nn.Parameter]:
        return [p for p in self.parameters() if p.requires_grad]

    def trainable_param_count(self) -> int:
        return sum(p.numel() for p in self.trainable_parameters())


# ---------------------------------------------------------------------------
# batching


@dataclass
class SubgraphBatch:
    """Disjoint union of subgraphs with per-node inputs and graph index."""

    p: torch.Tensor
    p_cond: torch.Tensor | None
    src: torch.Tensor
    dst: torch.Tensor
    graph_index: torch.Tensor
    num_graphs: int
    counts: torch.Tensor
    labels: torch.Tensor | None = None
    attrs: torch.Tensor | None = None

    @staticmethod
    def build(
        subgraphs: list[Subgraph],
        p_list: list[np.ndarray],
        p_cond_list: list[np.ndarray] | None = None,
        dtype: torch.dtype = torch.float32,
        with_attrs: bool = False,
    ) -> "SubgraphBatch":
        sizes = [s.num_nodes for s in subgraphs]
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        p = torch.from_numpy(np.concatenate(p_list, axis=0)).to(dtype)
        p_cond = None
        if p_cond_list is not None:
            p_cond = torch.from_numpy(np.concatenate(p_cond_list, axis=0)).to(dtype)

        edge_parts = []
        for off, s in zip(offsets[:-1], subgraphs):
            e = s.edge_array()
            if e.size:
                edge_parts.append(e + off)
        if edge_parts:
            edges = np.concatenate(edge_parts, axis=0)
            src = torch.from_numpy(edges[:, 0]).long()
            dst = torch.from_numpy(edges[:, 1]).long()
        else:
            src = torch.empty(0, dtype=torch.long)
            dst = torch.empty(0, dtype=torch.long)

        graph_index = torch.from_numpy(
            np.repeat(np.arange(len(subgraphs)), sizes)
        ).long()
        counts = torch.tensor(sizes, dtype=dtype)

        labels = None
        if all(s.label is not None for s in subgraphs) and subgraphs:
            labels = torch.tensor([s.label for s in subgraphs], dtype=torch.long)

        attrs = None
        if with_attrs:
            if any(s.local_attributes is None for s in subgraphs):
                raise DataError("subgraph batch requested attributes but some are missing")
            attrs = torch.from_numpy(
                np.concatenate([s.local_attributes for s in subgraphs], axis=0)
            ).to(dtype)

        return SubgraphBatch(
            p=p, p_cond=p_cond, src=src, dst=dst, graph_index=graph_index,
            num_graphs=len(subgraphs), counts=counts, labels=labels, attrs=attrs,
        )


def segment_mean(x: torch.Tensor, batch: SubgraphBatch) -> torch.Tensor:
    """Per-graph arithmetic mean of node rows; (num_graphs, dim)."""
    out = torch.zeros((batch.num_graphs, x.shape[1]), dtype=x.dtype)
    out = out.index_add(0, batch.graph_index, x)
    return out / batch.counts.unsqueeze(1)


# ---------------------------------------------------------------------------
# forward passes


def readout(node_embeddings: torch.Tensor) -> torch.Tensor:
    """Arithmetic mean over node rows; returns a 1 x l row."""
    if node_embeddings.shape[0] < 1:
        raise DataError("readout requires at least one node embedding")
    return node_embeddings.mean(dim=0, keepdim=True)


def encode_readout(encoder: GinEncoder, x: torch.Tensor, batch: SubgraphBatch) -> torch.Tensor:
    return segment_mean(encoder(x, batch.src, batch.dst), batch)


def batch_forward(model: GraphControlModel, batch: SubgraphBatch) -> torch.Tensor:
    """Zero-MLP composition on a batch; (num_graphs, l)."""
    if batch.p_cond is None:
        raise DataError("batch has no condition embeddings")
    frozen_read = encode_readout(model.frozen_encoder, batch.p, batch)
    copy_in = batch.p + model.z1(batch.p_cond)
    copy_read = encode_readout(model.trainable_copy, copy_in, batch)
    return frozen_read + model.z2(copy_read)


def batch_prompt_forward(model: GraphControlModel, batch: SubgraphBatch) -> torch.Tensor:
    if not model.has_prompts:
        raise ConfigError("model has no prompt vectors")
    if batch.p_cond is None:
        raise DataError("batch has no condition embeddings")
    p = batch.p + model.prompts["q"]
    p_cond = batch.p_cond + model.prompts["q_prime"]
    frozen_read = encode_readout(model.frozen_encoder, p, batch)
    copy_read = encode_readout(model.trainable_copy, p + model.z1(p_cond), batch)
    return frozen_read + model.z2(copy_read)


def _single_batch(subgraph: Subgraph, p: np.ndarray, p_cond: np.ndarray | None,
                  dtype: torch.dtype) -> SubgraphBatch:
    cond = [np.asarray(p_cond)] if p_cond is not None else None
    return SubgraphBatch.build([subgraph], [np.asarray(p)], cond, dtype=dtype)


def gin_forward(encoder: GinEncoder, subgraph: Subgraph,
                node_inputs: np.ndarray | torch.Tensor) -> torch.Tensor:
    """Per-node embeddings of one subgraph; (N, l)."""
    dtype = next(encoder.parameters()).dtype
    x = torch.as_tensor(node_inputs, dtype=dtype)
    if x.shape[0] != subgraph.num_nodes:
        raise DataError(
            f"node_inputs has {x.shape[0]} rows for a {subgraph.num_nodes}-node subgraph"
        )
    edges = subgraph.edge_array()
    src = torch.from_numpy(edges[:, 0]).long()
    dst = torch.from_numpy(edges[:, 1]).long()
    return encoder(x, src, dst)


def graphcontrol_forward(model: GraphControlModel, subgraph: Subgraph,
                         p: np.ndarray, p_cond: np.ndarray) -> torch.Tensor:
    dtype = next(model.parameters()).dtype
    return batch_forward(model, _single_batch(subgraph, p, p_cond, dtype))


def prompt_forward(model: GraphControlModel, subgraph: Subgraph,
                   p: np.ndarray, p_cond: np.ndarray) -> torch.Tensor:
    dtype = next(model.parameters()).dtype
    return batch_prompt_forward(model, _single_batch(subgraph, p, p_cond, dtype))


# ---------------------------------------------------------------------------
# gradient verification


@dataclass(frozen=True)
class GradientReport:
    max_relative_error: float
    per_parameter: dict[str, float] = field(default_factory=dict)


def backprop_check(
    loss_fn: Callable[[], torch.Tensor],
    named_params: Iterable[tuple[str, nn.Parameter]],
    step: float = 1e-5,
    max_elements_per_tensor: int | None = None,
) -> GradientReport:
    """Autograd vs central finite differences for every trainable tensor.

    Relative error uses an absolute floor: |g - fd| / max(|g|, |fd|, 1e-6).
    Requires float64 parameters. ``max_elements_per_tensor`` limits the
    probed entries per tensor to an evenly strided subset (None = all).
    """
    params = [(n, p) for n, p in named_params if p.requires_grad]
    if not params:
        raise ConfigError("no trainable parameters to check")
    for n, p in params:
        if p.dtype != torch.float64:
            raise ConfigError(f"backprop_check requires float64 parameters ({n} is {p.dtype})")

    for _, p in params:
        p.grad = None
    loss = loss_fn()
    if not torch.isfinite(loss):
        raise NumericalError(f"loss is non-finite: {loss.item()}")
    loss.backward()
    analytic = {
        n: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
        for n, p in params
    }

    per_parameter: dict[str, float] = {}
    with torch.no_grad():
        for n, p in params:
            flat = p.view(-1)
            numel = flat.numel()
            if max_elements_per_tensor is not None and numel > max_elements_per_tensor:
                probe = np.unique(
                    np.linspace(0, numel - 1, max_elements_per_tensor).astype(np.int64)
                )
            else:
                probe = np.arange(numel)
            fd = torch.empty(probe.size, dtype=flat.dtype)
            for j, i in enumerate(probe):
                orig = flat[i].item()
                flat[i] = orig + step
                up = loss_fn().item()
                flat[i] = orig - step
                down = loss_fn().item()
                flat[i] = orig
                fd[j] = (up - down) / (2.0 * step)
            if not torch.isfinite(fd).all():
                raise NumericalError(f"non-finite finite-difference gradient for {n}")
            g = analytic[n].view(-1)[torch.from_numpy(probe)]
            if not torch.isfinite(g).all():
                raise NumericalError(f"non-finite analytic gradient for {n}")
            denom = torch.maximum(torch.maximum(g.abs(), fd.abs()),
                                  torch.full_like(fd, 1e-6))
            per_parameter[n] = float(((g - fd).abs() / denom).max())
    return GradientReport(
        max_relative_error=max(per_parameter.values()),
        per_parameter=per_parameter,
    )


# ---------------------------------------------------------------------------
# checkpoint codec: versioned binary, named float32 tensors in fixed order


def write_tensor_file(path: str | Path, dims: ModelDims, meta: dict,
                      tensors: dict[str, np.ndarray]) -> None:
    buf = io.BytesIO()
    buf.write(_CKPT_MAGIC)
    buf.write(struct.pack("<IIII", _CKPT_VERSION, dims.k, dims.l, dims.layers))
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(meta_bytes)))
    buf.write(meta_bytes)
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        arr32 = np.ascontiguousarray(arr, dtype="<f4")
        name_b = name.encode("utf-8")
        buf.write(struct.pack("<H", len(name_b)))
        buf.write(name_b)
        buf.write(struct.pack("<B", arr32.ndim))
        buf.write(struct.pack(f"<{max(arr32.ndim, 1)}I", *(arr32.shape or (1,))))
        buf.write(arr32.tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_tensor_file(path: str | Path) -> tuple[ModelDims, dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[: len(_CKPT_MAGIC)] != _CKPT_MAGIC:
        raise DataError(f"{path}: not a checkpoint file")
    off = len(_CKPT_MAGIC)
    version, k, l, layers = struct.unpack_from("<IIII", raw, off)
    off += 16
    if version != _CKPT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    (meta_len,) = struct.unpack_from("<I", raw, off)
    off += 4
    meta = json.loads(raw[off : off + meta_len].decode("utf-8"))
    off += meta_len
    (n_tensors,) = struct.unpack_from("<I", raw, off)
    off += 4
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        (name_len,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<B", raw, off)
        off += 1
        shape = struct.unpack_from(f"<{max(ndim, 1)}I", raw, off)[:ndim] if ndim else ()
        off += 4 * max(ndim, 1)
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=off).reshape(
            shape if ndim else ()
        )
        off += 4 * count
        tensors[name] = arr.astype(np.float32)
    return ModelDims(k=k, l=l, layers=layers), meta, tensors


def encoder_state_numpy(encoder: GinEncoder) -> dict[str, np.ndarray]:
    return {name: p.detach().cpu().numpy() for name, p in encoder.state_dict().items()}


def load_encoder_state(encoder: GinEncoder, tensors: dict[str, np.ndarray]) -> None:
    state = encoder.state_dict()
    if set(state) != set(tensors):
        missing = set(state).symmetric_difference(tensors)
        raise DataError(f"checkpoint tensor names do not match encoder: {sorted(missing)}")
    dtype = next(encoder.parameters()).dtype
    converted = {}
    for name, arr in tensors.items():
        if tuple(state[name].shape) != tuple(arr.shape):
            raise DataError(
                f"checkpoint tensor {name} has shape {arr.shape}, "
                f"expected {tuple(state[name].shape)}"
            )
        converted[name] = torch.from_numpy(np.ascontiguousarray(arr)).to(dtype)
    encoder.load_state_dict(converted)
