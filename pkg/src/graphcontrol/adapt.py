"""Downstream adaptation: fine-tuning, prompt tuning, ablations, benchmarks.

All variants share one pipeline: per-node preprocessing (restart-walk
subgraph, structural embedding, condition embedding from local
attributes), then cross-entropy training of mode-specific trainable
sets. Ablation arms are selected by ``mode``:

    finetune        frozen encoder + trainable copy linked by zero MLPs
    prompt          input prompt vectors; both encoders frozen
    scratch         same architecture, random init, nothing frozen
    structure_only  frozen encoder + linear classifier, no condition
    simple_concat   from-scratch attribute encoder summed with frozen branch
    no_zero         zero MLPs replaced by standard-init MLPs
    soft_condition  condition built from the clamped kernel, no threshold
    no_frozen       trainable branch only

``graphcontrol`` is accepted as an alias for ``finetune``.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError, DataError, NumericalError
from .graphs import DataSplit, DatasetBundle, make_fewshot_split, make_split
from .model import (
    GraphControlModel,
    GinEncoder,
    ModelDims,
    SubgraphBatch,
    batch_forward,
    batch_prompt_forward,
    encode_readout,
    segment_mean,
)
from .prep import Preprocessor
from .pretrain import Checkpoint, build_optimizer, load_checkpoint
from .sampler import derive_seed

MODES = (
    "finetune",
    "prompt",
    "scratch",
    "structure_only",
    "simple_concat",
    "no_zero",
    "soft_condition",
    "no_frozen",
)
MODE_ALIASES = {"graphcontrol": "finetune"}

_MAX63 = 0x7FFFFFFFFFFFFFFF
_TAG_MODEL_INIT = 301
_TAG_HEAD_INIT = 302
_TAG_NOZERO_INIT = 303
_TAG_BATCH_ORDER = 304


def canonical_mode(mode: str) -> str:
    mode = MODE_ALIASES.get(mode, mode)
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")
    return mode


def _mode_needs_condition(mode: str) -> bool:
    return mode in ("finetune", "prompt", "scratch", "no_zero", "soft_condition", "no_frozen")


def _mode_needs_attrs(mode: str) -> bool:
    return mode == "simple_concat"


def _mode_needs_checkpoint(mode: str) -> bool:
    return mode != "scratch"


@dataclass
class FinetuneConfig:
    epochs: int = 100
    learning_rate: float = 0.5
    optimizer: str = "adamw"
    weight_decay: float = 5e-4
    momentum: float = 0.0
    walk_steps: int = 256
    restart_rate: float = 0.8
    threshold: float = 0.17
    batch_size: int = 128
    seed: int = 0
    mode: str = "finetune"
    embed_dim: int = 32
    train_fraction: float = 0.1
    shots: int | None = None
    checkpoint_path: str | None = None
    prompt_train_zero_mlps: bool = False
    prep_seed: int = 0

    def __post_init__(self):
        self.mode = canonical_mode(self.mode)
        if self.optimizer not in ("sgd", "adam", "adamw"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if not math.isfinite(self.threshold):
            raise ConfigError("threshold must be finite")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must be in (0, 1)")
        if self.shots is not None and self.shots < 1:
            raise ConfigError("shots must be >= 1 when set")


@dataclass
class RunResult:
    test_accuracy: float
    curve: list[tuple[float, float, float]]  # per epoch: (loss, train_acc, test_acc)
    trainable_param_count: int
    wall_time: float
    best_epoch: int
    best_test_accuracy: float
    split_seed: int = 0
    init_seed: int = 0


@dataclass
class EvalReport:
    config: dict
    n_runs: int
    mean_accuracy: float
    std_accuracy: float
    runs: list[RunResult] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        # wall_time is volatile and kept out so identical reruns are
        # byte-identical; timings are written to a side file instead.
        return {
            "config": self.config,
            "n_runs": self.n_runs,
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "runs": [
                {
                    "split_seed": r.split_seed,
                    "init_seed": r.init_seed,
                    "test_accuracy": r.test_accuracy,
                    "best_epoch": r.best_epoch,
                    "best_test_accuracy": r.best_test_accuracy,
                    "trainable_param_count": r.trainable_param_count,
                }
                for r in self.runs
            ],
        }


# ---------------------------------------------------------------------------
# model construction per mode


def build_model(
    bundle: DatasetBundle,
    checkpoint: Checkpoint | None,
    config: FinetuneConfig,
    init_seed: int,
) -> GraphControlModel:
    mode = config.mode
    if _mode_needs_checkpoint(mode) and checkpoint is None:
        raise ConfigError(f"mode {mode!r} requires a pre-trained checkpoint")
    dims = checkpoint.dims if checkpoint is not None else ModelDims(k=config.embed_dim)
    if dims.k != config.embed_dim:
        raise ConfigError(
            f"checkpoint embedding width {dims.k} does not match config embed_dim "
            f"{config.embed_dim}"
        )

    encoder = GinEncoder(dims, dtype=torch.float32)
    if checkpoint is not None:
        encoder.load_state_dict(
            {k: torch.from_numpy(np.ascontiguousarray(v)) for k, v in checkpoint.tensors.items()}
        )
    else:
        gen = torch.Generator().manual_seed(derive_seed(_TAG_MODEL_INIT, init_seed) & _MAX63)
        encoder.reset_parameters(gen)

    attr_in_dim = None
    if _mode_needs_attrs(mode):
        if bundle.graph.attributes is None:
            raise DataError("simple_concat needs an attributed dataset")
        attr_in_dim = bundle.graph.attributes.shape[1]

    model = GraphControlModel(
        encoder,
        num_classes=bundle.num_classes,
        with_prompts=(mode == "prompt"),
        attr_in_dim=attr_in_dim,
        init_seed=derive_seed(_TAG_HEAD_INIT, init_seed) & _MAX63,
    )
    if mode == "no_zero":
        gen = torch.Generator().manual_seed(derive_seed(_TAG_NOZERO_INIT, init_seed) & _MAX63)
        model.z1.reset_parameters_random(gen)
        model.z2.reset_parameters_random(gen)

    for p in model.parameters():
        p.requires_grad_(False)
    trainable: list[torch.nn.Parameter] = list(model.classifier.parameters())
    if mode in ("finetune", "no_zero", "soft_condition", "no_frozen"):
        trainable += list(model.trainable_copy.parameters())
        trainable += list(model.z1.parameters())
        trainable += list(model.z2.parameters())
    elif mode == "scratch":
        trainable += list(model.frozen_encoder.parameters())
        trainable += list(model.trainable_copy.parameters())
        trainable += list(model.z1.parameters())
        trainable += list(model.z2.parameters())
    elif mode == "prompt":
        trainable += [model.prompts["q"], model.prompts["q_prime"]]
        if config.prompt_train_zero_mlps:
            trainable += list(model.z1.parameters())
            trainable += list(model.z2.parameters())
    elif mode == "simple_concat":
        trainable += list(model.attr_encoder.parameters())
    # structure_only: classifier only
    for p in trainable:
        p.requires_grad_(True)
    return model


def _frozen_branch_constant(mode: str) -> bool:
    # true when the frozen branch sees fixed inputs through fixed weights,
    # so its readout can be computed once per run
    return mode in ("finetune", "no_zero", "soft_condition", "structure_only", "simple_concat")


def mode_logits(
    model: GraphControlModel,
    batch: SubgraphBatch,
    mode: str,
    frozen_cache: torch.Tensor | None = None,
) -> torch.Tensor:
    if mode == "scratch":
        rep = batch_forward(model, batch)
    elif mode == "prompt":
        rep = batch_prompt_forward(model, batch)
    elif mode == "no_frozen":
        copy_in = batch.p + model.z1(batch.p_cond)
        rep = model.z2(encode_readout(model.trainable_copy, copy_in, batch))
    elif _frozen_branch_constant(mode):
        frozen = frozen_cache
        if frozen is None:
            frozen = encode_readout(model.frozen_encoder, batch.p, batch)
        if mode == "structure_only":
            rep = frozen
        elif mode == "simple_concat":
            attr = segment_mean(model.attr_encoder(batch.attrs, batch.src, batch.dst), batch)
            rep = frozen + attr
        else:
            copy_in = batch.p + model.z1(batch.p_cond)
            rep = frozen + model.z2(encode_readout(model.trainable_copy, copy_in, batch))
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    return model.classifier(rep)


# ---------------------------------------------------------------------------
# training


def _gather_batch(prep: Preprocessor, ids: np.ndarray, config: FinetuneConfig,
                  mode: str) -> SubgraphBatch:
    need_cond = _mode_needs_condition(mode)
    soft = mode == "soft_condition"
    subs, p, cond = prep.gather(ids, v=config.threshold, soft=soft, need_condition=need_cond)
    return SubgraphBatch.build(subs, p, cond, dtype=torch.float32,
                               with_attrs=_mode_needs_attrs(mode))


def _train_run(
    bundle: DatasetBundle,
    checkpoint: Checkpoint | None,
    split: DataSplit,
    config: FinetuneConfig,
    prep: Preprocessor,
    init_seed: int,
) -> tuple[GraphControlModel, RunResult]:
    mode = config.mode
    labels = bundle.graph.labels
    if labels is None:
        raise DataError("adaptation requires a labeled dataset")
    if _mode_needs_condition(mode) or _mode_needs_attrs(mode):
        if not bundle.is_attributed:
            raise DataError(
                f"mode {mode!r} needs node attributes; synthesize them first "
                "(embed subcommand) for non-attributed graphs"
            )

    start = time.perf_counter()
    model = build_model(bundle, checkpoint, config, init_seed)
    optimizer = build_optimizer(
        [p for p in model.parameters() if p.requires_grad],
        config.optimizer, config.learning_rate, config.weight_decay, config.momentum,
    )

    train_ids = np.asarray(split.train_ids)
    test_ids = np.asarray(split.test_ids)
    test_batch = _gather_batch(prep, test_ids, config, mode)
    y_train = torch.from_numpy(labels[train_ids]).long()
    y_test = torch.from_numpy(labels[test_ids]).long()

    # the frozen branch is input- and weight-constant in most modes;
    # compute its readouts once per run
    frozen_test = frozen_train = None
    train_batch_full = None
    if _frozen_branch_constant(mode):
        train_batch_full = _gather_batch(prep, train_ids, config, mode)
        with torch.no_grad():
            frozen_test = encode_readout(model.frozen_encoder, test_batch.p, test_batch)
            frozen_train = encode_readout(
                model.frozen_encoder, train_batch_full.p, train_batch_full
            )

    rng = np.random.Generator(np.random.PCG64(derive_seed(_TAG_BATCH_ORDER, init_seed)))
    curve: list[tuple[float, float, float]] = []
    n_train = train_ids.size
    for _epoch in range(config.epochs):
        order = rng.permutation(n_train)
        losses = []
        correct = 0
        for lo in range(0, n_train, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            if mode == "structure_only":
                batch = train_batch_full  # unused behind the cache
            else:
                batch = _gather_batch(prep, train_ids[idx], config, mode)
            cache = frozen_train[torch.from_numpy(idx)] if frozen_train is not None else None
            logits = mode_logits(model, batch, mode, frozen_cache=cache)
            loss = torch.nn.functional.cross_entropy(logits, y_train[idx])
            if not torch.isfinite(loss):
                raise NumericalError(f"training loss became non-finite in mode {mode!r}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
            correct += int((logits.detach().argmax(dim=1) == y_train[idx]).sum())
        with torch.no_grad():
            test_logits = mode_logits(model, test_batch, mode, frozen_cache=frozen_test)
            test_acc = float((test_logits.argmax(dim=1) == y_test).float().mean())
        curve.append((float(np.mean(losses)), correct / n_train, test_acc))

    test_accs = [row[2] for row in curve]
    best_idx = int(np.argmax(test_accs))
    result = RunResult(
        test_accuracy=curve[-1][2],
        curve=curve,
        trainable_param_count=model.trainable_param_count(),
        wall_time=time.perf_counter() - start,
        best_epoch=best_idx + 1,
        best_test_accuracy=test_accs[best_idx],
        split_seed=split.seed,
        init_seed=init_seed,
    )
    return model, result


def _make_prep(bundle: DatasetBundle, config: FinetuneConfig,
               cache_dir: str | Path | None = None) -> Preprocessor:
    return Preprocessor(
        bundle, config.walk_steps, config.restart_rate, k=config.embed_dim,
        prep_seed=config.prep_seed, cache_dir=cache_dir,
    )


def finetune(
    checkpoint: Checkpoint | None,
    dataset: DatasetBundle,
    split: DataSplit,
    config: FinetuneConfig,
    prep: Preprocessor | None = None,
    init_seed: int | None = None,
) -> tuple[GraphControlModel, RunResult]:
    """Adapt a pre-trained encoder on the given split (mode from config)."""
    if prep is None:
        prep = _make_prep(dataset, config)
    seed = config.seed if init_seed is None else init_seed
    return _train_run(dataset, checkpoint, split, config, prep, seed)


def prompt_tune(
    checkpoint: Checkpoint,
    dataset: DatasetBundle,
    split: DataSplit,
    config: FinetuneConfig,
    prep: Preprocessor | None = None,
    init_seed: int | None = None,
) -> tuple[GraphControlModel, RunResult]:
    """Prompt tuning: both encoders frozen, prompts + classifier train."""
    if config.mode != "prompt":
        config = FinetuneConfig(**{**asdict(config), "mode": "prompt"})
    return finetune(checkpoint, dataset, split, config, prep=prep, init_seed=init_seed)


def evaluate(
    model: GraphControlModel,
    dataset: DatasetBundle,
    node_ids: np.ndarray,
    config: FinetuneConfig | None = None,
    prep: Preprocessor | None = None,
    mode: str | None = None,
) -> float:
    """Accuracy of classifier argmax on the given nodes."""
    node_ids = np.asarray(node_ids, dtype=np.int64)
    if node_ids.size == 0:
        raise DataError("evaluate needs a non-empty node list")
    if dataset.graph.labels is None:
        raise DataError("evaluate requires labels")
    config = config or FinetuneConfig()
    mode = canonical_mode(mode or config.mode)
    if prep is None:
        prep = _make_prep(dataset, config)
    batch = _gather_batch(prep, node_ids, config, mode)
    y = torch.from_numpy(dataset.graph.labels[node_ids]).long()
    with torch.no_grad():
        logits = mode_logits(model, batch, mode)
    return float((logits.argmax(dim=1) == y).float().mean())


# ---------------------------------------------------------------------------
# multi-seed benchmark


def _make_run_split(bundle: DatasetBundle, config: FinetuneConfig, split_seed: int) -> DataSplit:
    if config.shots is not None:
        return make_fewshot_split(bundle.graph, config.shots, split_seed)
    return make_split(bundle.graph, config.train_fraction, split_seed)


_FORK_STATE: dict = {}


def _bench_worker(run_index: int) -> RunResult:
    torch.set_num_threads(1)
    state = _FORK_STATE
    return _single_benchmark_run(
        state["bundle"], state["checkpoint"], state["config"], state["prep"], run_index
    )[1]


def _single_benchmark_run(
    bundle: DatasetBundle,
    checkpoint: Checkpoint | None,
    config: FinetuneConfig,
    prep: Preprocessor,
    run_index: int,
):
    split_seed = config.seed + run_index
    init_seed = config.seed + 10_000 + run_index
    split = _make_run_split(bundle, config, split_seed)
    return _train_run(bundle, checkpoint, split, config, prep, init_seed)


def benchmark(
    dataset: DatasetBundle,
    config: FinetuneConfig,
    n_runs: int = 20,
    checkpoint: Checkpoint | None = None,
    prep: Preprocessor | None = None,
    out_dir: str | Path | None = None,
    cache_dir: str | Path | None = None,
    workers: int = 1,
) -> EvalReport:
    """n_runs independent (split seed, init seed) runs of the configured mode.

    Run r uses split seed ``config.seed + r`` and init seed
    ``config.seed + 10000 + r``. Preprocessing is shared across runs.
    """
    if n_runs < 1:
        raise ConfigError("n_runs must be >= 1")
    if checkpoint is None and _mode_needs_checkpoint(config.mode):
        if config.checkpoint_path is None:
            raise ConfigError(f"mode {config.mode!r} requires checkpoint_path")
        checkpoint = load_checkpoint(config.checkpoint_path)
    if prep is None:
        prep = _make_prep(dataset, config, cache_dir=cache_dir)

    results: list[RunResult]
    if workers > 1:
        import concurrent.futures as cf
        import multiprocessing as mp

        _FORK_STATE.update(
            bundle=dataset, checkpoint=checkpoint, config=config, prep=prep
        )
        # warm shared preprocessing in the parent so children inherit it
        all_ids = np.arange(dataset.graph.num_nodes)
        prep.warm(all_ids, v=config.threshold, soft=config.mode == "soft_condition",
                  need_condition=_mode_needs_condition(config.mode))
        ctx = mp.get_context("fork")
        with cf.ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            results = list(pool.map(_bench_worker, range(n_runs)))
        _FORK_STATE.clear()
    else:
        results = [
            _single_benchmark_run(dataset, checkpoint, config, prep, r)[1]
            for r in range(n_runs)
        ]

    accs = np.array([r.test_accuracy for r in results])
    report = EvalReport(
        config=asdict(config),
        n_runs=n_runs,
        mean_accuracy=float(accs.mean()),
        std_accuracy=float(accs.std()),  # population std over the run list
        runs=results,
    )
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def write_report(report: EvalReport, out_dir: str | Path) -> Path:
    """Write report.json, per-run convergence CSVs, and a timing side file."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.json"
    path.write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    curves = out / "curves"
    curves.mkdir(exist_ok=True)
    for run in report.runs:
        lines = ["epoch,loss,train_acc,test_acc"]
        for epoch, (loss, train_acc, test_acc) in enumerate(run.curve, start=1):
            lines.append(f"{epoch},{loss!r},{train_acc!r},{test_acc!r}")
        (curves / f"{run.split_seed}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    timings = ["split_seed,wall_time_s"]
    timings += [f"{run.split_seed},{run.wall_time:.3f}" for run in report.runs]
    (out / "timings.csv").write_text("\n".join(timings) + "\n", encoding="utf-8")
    return path
