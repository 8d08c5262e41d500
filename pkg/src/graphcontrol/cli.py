"""Command-line front end.

Config files are flat ``key = value`` text with one section per
subcommand plus an optional ``[common]`` section::

    [common]
    dataset = data/cora_ml_synth

    [benchmark]
    mode = graphcontrol
    n_runs = 10
    checkpoint = out_pretrain/checkpoint.bin

Resolution order: built-in defaults < dataset profile < config file
< ``--set key=value`` overrides < dedicated flags (``--seed``). Every
run writes ``config_resolved.json`` with the effective values. Exit
codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import difflib
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from .adapt import FinetuneConfig, benchmark, finetune, prompt_tune, write_report
from .condition import deepwalk_embed
from .errors import ConfigError, DataError, GraphControlError, NumericalError
from .graphs import DatasetBundle, build_graph, load_dataset, make_fewshot_split, make_split, save_dataset
from .model import GraphControlModel, backprop_check
from .prep import Preprocessor
from .pretrain import Checkpoint, PretrainConfig, load_checkpoint, pretrain, save_checkpoint
from .sampler import sample_subgraph
from .synth import make_tiny_fixture

SUBCOMMANDS = (
    "convert", "prepare", "embed", "pretrain", "finetune", "prompt-tune",
    "benchmark", "gradcheck",
)

# per-dataset defaults for the transfer phase
PROFILES: dict[str, dict] = {
    "cora_ml": dict(epochs=100, learning_rate=0.5, optimizer="adamw", weight_decay=5e-4,
                    walk_steps=256, restart_rate=0.8, threshold=0.17),
    "amazon_photo": dict(epochs=100, learning_rate=0.5, optimizer="adamw", weight_decay=5e-4,
                         walk_steps=256, restart_rate=0.8, threshold=0.2),
    "dblp": dict(epochs=100, learning_rate=0.1, optimizer="adam", weight_decay=5e-4,
                 walk_steps=256, restart_rate=0.8, threshold=0.3),
    "coauthor_physics": dict(epochs=100, learning_rate=0.01, optimizer="adam", weight_decay=1e-2,
                             walk_steps=256, restart_rate=0.8, threshold=0.15),
    "usa_airport": dict(epochs=100, learning_rate=0.3, optimizer="sgd", weight_decay=1e-3,
                        walk_steps=256, restart_rate=0.5, threshold=0.15),
    "europe_airport": dict(epochs=100, learning_rate=0.2, optimizer="sgd", weight_decay=5e-4,
                           walk_steps=256, restart_rate=0.5, threshold=0.15),
    "brazil_airport": dict(epochs=400, learning_rate=0.1, optimizer="sgd", weight_decay=1e-3,
                           walk_steps=256, restart_rate=0.3, threshold=0.3),
    "h_index": dict(epochs=100, learning_rate=0.1, optimizer="sgd", weight_decay=5e-4,
                    walk_steps=256, restart_rate=0.5, threshold=0.17),
}

_FINETUNE_KEYS: dict[str, type] = {
    "dataset": str, "profile": str, "checkpoint": str, "epochs": int,
    "learning_rate": float, "optimizer": str, "weight_decay": float, "momentum": float,
    "walk_steps": int, "restart_rate": float, "threshold": float, "batch_size": int,
    "seed": int, "mode": str, "embed_dim": int, "train_fraction": float, "shots": int,
    "prompt_train_zero_mlps": bool, "prep_seed": int, "split_seed": int,
}

SCHEMAS: dict[str, dict[str, type]] = {
    "convert": {"in_edges": str, "in_labels": str, "name": str, "num_classes": int},
    "prepare": {
        "dataset": str, "profile": str, "walk_steps": int, "restart_rate": float,
        "embed_dim": int, "threshold": float, "soft": bool, "condition": bool,
        "prep_seed": int,
    },
    "embed": {
        "dataset": str, "dim": int, "walks_per_node": int, "walk_length": int,
        "window": int, "negatives": int, "epochs": int, "seed": int,
        "learning_rate": float,
    },
    "pretrain": {
        "dataset": str, "profile": str, "epochs": int, "batch_size": int,
        "learning_rate": float, "temperature": float, "walk_steps": int,
        "restart_rate": float, "optimizer": str, "weight_decay": float,
        "momentum": float, "seed": int, "embed_dim": int, "objective": str,
        "loss": str, "edge_drop": float,
    },
    "finetune": _FINETUNE_KEYS,
    "prompt-tune": _FINETUNE_KEYS,
    "benchmark": {**_FINETUNE_KEYS, "n_runs": int, "workers": int},
    "gradcheck": {"seed": int, "tolerance": float, "elements_per_tensor": int},
}

_DEFAULTS: dict[str, dict] = {
    "convert": {"name": "converted"},
    "prepare": {"walk_steps": 256, "restart_rate": 0.8, "embed_dim": 32,
                "threshold": 0.17, "soft": False, "condition": True, "prep_seed": 0},
    "embed": {"dim": 64, "walks_per_node": 10, "walk_length": 40, "window": 5,
              "negatives": 5, "epochs": 3, "seed": 0, "learning_rate": 0.025},
    "pretrain": {k: v for k, v in asdict(PretrainConfig()).items()},
    "finetune": {**{k: v for k, v in asdict(FinetuneConfig()).items()
                    if k != "checkpoint_path"}, "split_seed": 0},
    "prompt-tune": {**{k: v for k, v in asdict(FinetuneConfig()).items()
                       if k != "checkpoint_path"}, "split_seed": 0, "mode": "prompt"},
    "benchmark": {**{k: v for k, v in asdict(FinetuneConfig()).items()
                     if k != "checkpoint_path"}, "n_runs": 20, "workers": 1},
    "gradcheck": {"seed": 0, "tolerance": 1e-4, "elements_per_tensor": 0},
}


def _parse_value(key: str, raw: str, typ: type):
    raw = raw.strip()
    if typ is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"key {key!r}: expected a boolean, got {raw!r}")
    if typ is int:
        if raw.lower() == "none":
            return None
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"key {key!r}: expected an integer, got {raw!r}") from None
    if typ is float:
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"key {key!r}: expected a number, got {raw!r}") from None
    return raw


def _reject_unknown(keys, schema: dict, where: str) -> None:
    problems = []
    for key in keys:
        if key not in schema:
            hint = difflib.get_close_matches(key, schema, n=1)
            suffix = f" (did you mean {hint[0]!r}?)" if hint else ""
            problems.append(f"unknown key {key!r} in {where}{suffix}")
    if problems:
        raise ConfigError("; ".join(problems))


def resolve_config(subcommand: str, config_path: str | None, overrides: list[str],
                   seed_flag: int | None) -> dict:
    """Defaults < profile < file < --set < --seed. Unknown keys rejected."""
    schema = SCHEMAS[subcommand]
    values = dict(_DEFAULTS[subcommand])

    file_values: dict[str, str] = {}
    if config_path:
        parser = configparser.ConfigParser()
        read = parser.read(config_path)
        if not read:
            raise ConfigError(f"config file not found: {config_path}")
        for section in ("common", subcommand):
            if parser.has_section(section):
                file_values.update(dict(parser.items(section)))

    override_values: dict[str, str] = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        override_values[key.strip()] = raw

    _reject_unknown(file_values, schema, "config file")
    _reject_unknown(override_values, schema, "--set overrides")

    # profile defaults go under the file/override values
    profile = override_values.get("profile") or file_values.get("profile")
    if profile is None:
        ds = override_values.get("dataset") or file_values.get("dataset")
        if ds:
            stem = Path(ds).name.lower()
            for known in PROFILES:
                if stem == known or stem.startswith(known + "_"):
                    profile = known
                    break
    if profile is not None:
        profile = profile.strip()
        if profile not in PROFILES:
            raise ConfigError(
                f"unknown profile {profile!r}; known: {', '.join(sorted(PROFILES))}"
            )
        for key, val in PROFILES[profile].items():
            if key in schema:
                values[key] = val
        values["profile"] = profile

    for key, raw in file_values.items():
        values[key] = _parse_value(key, raw, schema[key])
    for key, raw in override_values.items():
        values[key] = _parse_value(key, raw, schema[key])
    if seed_flag is not None and "seed" in schema:
        values["seed"] = seed_flag
    return values


def _write_resolved(values: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config_resolved.json").write_text(
        json.dumps(values, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _load_bundle(values: dict) -> DatasetBundle:
    ds = values.get("dataset")
    if not ds:
        raise ConfigError("missing required key 'dataset'")
    path = Path(ds)
    if not path.is_dir():
        raise DataError(f"dataset directory not found: {path}")
    return load_dataset(path.parent, path.name)


def _finetune_config(values: dict) -> FinetuneConfig:
    kwargs = {
        k: values[k]
        for k in (
            "epochs", "learning_rate", "optimizer", "weight_decay", "momentum",
            "walk_steps", "restart_rate", "threshold", "batch_size", "seed", "mode",
            "embed_dim", "train_fraction", "shots", "prompt_train_zero_mlps", "prep_seed",
        )
        if k in values
    }
    kwargs["checkpoint_path"] = values.get("checkpoint")
    return FinetuneConfig(**kwargs)


# ---------------------------------------------------------------------------
# subcommand bodies


def _cmd_convert(values: dict, out_dir: Path) -> int:
    src = values.get("in_edges")
    if not src:
        raise ConfigError("convert needs in_edges=<path to edge list>")
    path = Path(src)
    if not path.is_file():
        raise DataError(f"edge list not found: {path}")
    pairs = []
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith(("#", "%")):
                continue
            parts = line.replace(",", " ").split()
            if len(parts) < 2:
                raise DataError(f"{path.name}:{lineno}: expected two node ids")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise DataError(f"{path.name}:{lineno}: non-integer node id") from None
    if not pairs:
        raise DataError(f"{path.name}: no edges found")
    raw = np.asarray(pairs, dtype=np.int64)
    ids = np.unique(raw)
    remap = {int(v): i for i, v in enumerate(ids)}
    edges = np.vectorize(lambda v: remap[int(v)])(raw)
    n = ids.size

    labels = None
    num_classes = values.get("num_classes")
    if values.get("in_labels"):
        lpath = Path(values["in_labels"])
        if not lpath.is_file():
            raise DataError(f"label file not found: {lpath}")
        labels = np.full(n, -1, dtype=np.int64)
        with lpath.open("r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line or line.startswith(("#", "%")):
                    continue
                parts = line.replace(",", " ").split()
                if len(parts) != 2:
                    raise DataError(f"{lpath.name}:{lineno}: expected 'node_id label'")
                node, lab = int(parts[0]), int(parts[1])
                if node not in remap:
                    raise DataError(f"{lpath.name}:{lineno}: unknown node id {node}")
                labels[remap[node]] = lab
        if (labels < 0).any():
            missing = int(np.nonzero(labels < 0)[0][0])
            raise DataError(f"{lpath.name}: no label for node {ids[missing]}")
        if num_classes is None:
            num_classes = int(labels.max()) + 1
    if num_classes is None:
        num_classes = 1

    graph = build_graph(n, edges, labels=labels, num_classes=num_classes)
    bundle = DatasetBundle(graph=graph, name=values["name"],
                           is_attributed=False, num_classes=num_classes)
    target = save_dataset(bundle, out_dir)
    print(f"wrote {target} ({n} nodes, {graph.num_stored_edges // 2} undirected edges)")
    return 0


def _cmd_prepare(values: dict, out_dir: Path, cache_dir: Path | None) -> int:
    bundle = _load_bundle(values)
    prep = Preprocessor(
        bundle, values["walk_steps"], values["restart_rate"], k=values["embed_dim"],
        prep_seed=values["prep_seed"], cache_dir=cache_dir,
    )
    nodes = np.arange(bundle.graph.num_nodes)
    need_condition = values["condition"] and bundle.is_attributed
    prep.warm(nodes, v=values["threshold"], soft=values["soft"],
              need_condition=need_condition)
    where = prep._dir if prep._dir is not None else "memory only"
    print(f"prepared {nodes.size} nodes (condition={need_condition}) -> {where}")
    return 0


def _cmd_embed(values: dict, out_dir: Path) -> int:
    bundle = _load_bundle(values)
    emb = deepwalk_embed(
        bundle.graph, dim=values["dim"], walks_per_node=values["walks_per_node"],
        walk_length=values["walk_length"], window=values["window"],
        negatives=values["negatives"], epochs=values["epochs"], seed=values["seed"],
        learning_rate=values["learning_rate"],
    )
    ds_dir = Path(values["dataset"])
    target = ds_dir / "features.csv"
    with target.open("w", encoding="utf-8") as f:
        for row in emb:
            f.write(",".join(repr(float(x)) for x in row))
            f.write("\n")
    print(f"wrote {target} ({emb.shape[0]} x {emb.shape[1]})")
    return 0


def _cmd_pretrain(values: dict, out_dir: Path) -> int:
    bundle = _load_bundle(values)
    config = PretrainConfig(**{
        k: values[k]
        for k in (
            "epochs", "batch_size", "learning_rate", "temperature", "walk_steps",
            "restart_rate", "optimizer", "weight_decay", "momentum", "seed",
            "embed_dim", "objective", "loss", "edge_drop",
        )
    })
    checkpoint = pretrain(bundle.graph, config, dataset_name=bundle.name)
    ckpt_path = out_dir / "checkpoint.bin"
    save_checkpoint(checkpoint, ckpt_path)
    lines = ["epoch,loss"]
    lines += [f"{e + 1},{loss!r}" for e, loss in enumerate(checkpoint.loss_curve)]
    (out_dir / "pretrain_loss.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {ckpt_path}")
    return 0


def _load_ckpt(values: dict) -> Checkpoint:
    path = values.get("checkpoint")
    if not path:
        raise ConfigError("missing required key 'checkpoint'")
    if not Path(path).is_file():
        raise DataError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def _cmd_single_run(values: dict, out_dir: Path, cache_dir: Path | None,
                    prompt_mode: bool) -> int:
    bundle = _load_bundle(values)
    config = _finetune_config(values)
    checkpoint = None
    if values.get("checkpoint"):
        checkpoint = _load_ckpt(values)
    split_seed = values.get("split_seed", 0)
    if config.shots is not None:
        split = make_fewshot_split(bundle.graph, config.shots, split_seed)
    else:
        split = make_split(bundle.graph, config.train_fraction, split_seed)
    prep = Preprocessor(bundle, config.walk_steps, config.restart_rate,
                        k=config.embed_dim, prep_seed=config.prep_seed,
                        cache_dir=cache_dir)
    if prompt_mode:
        _, result = prompt_tune(checkpoint, bundle, split, config, prep=prep)
    else:
        _, result = finetune(checkpoint, bundle, split, config, prep=prep)
    run = {
        "test_accuracy": result.test_accuracy,
        "best_epoch": result.best_epoch,
        "best_test_accuracy": result.best_test_accuracy,
        "trainable_param_count": result.trainable_param_count,
        "split_seed": split_seed,
    }
    (out_dir / "run.json").write_text(json.dumps(run, indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    lines = ["epoch,loss,train_acc,test_acc"]
    for epoch, (loss, tr, te) in enumerate(result.curve, start=1):
        lines.append(f"{epoch},{loss!r},{tr!r},{te!r}")
    (out_dir / "curve.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"test accuracy {result.test_accuracy:.4f} "
          f"(best {result.best_test_accuracy:.4f} at epoch {result.best_epoch})")
    return 0


def _cmd_benchmark(values: dict, out_dir: Path, cache_dir: Path | None,
                   workers: int | None) -> int:
    bundle = _load_bundle(values)
    config = _finetune_config(values)
    checkpoint = _load_ckpt(values) if values.get("checkpoint") else None
    n_workers = workers if workers is not None else values.get("workers", 1)
    report = benchmark(
        bundle, config, n_runs=values["n_runs"], checkpoint=checkpoint,
        out_dir=out_dir, cache_dir=cache_dir, workers=n_workers,
    )
    print(f"mean accuracy {report.mean_accuracy:.4f} +- {report.std_accuracy:.4f} "
          f"over {report.n_runs} runs -> {out_dir / 'report.json'}")
    return 0


def _cmd_gradcheck(values: dict, out_dir: Path) -> int:
    torch.set_num_threads(1)
    bundle = make_tiny_fixture(seed=values["seed"])
    sub = sample_subgraph(bundle.graph, 0, walk_steps=24, restart_rate=0.3,
                          rng_seed=values["seed"])
    from .condition import attribute_condition
    from .pretrain import subgraph_embedding
    from .model import GinEncoder, ModelDims, SubgraphBatch, batch_prompt_forward

    dims = ModelDims()
    encoder = GinEncoder(dims, dtype=torch.float64)
    gen = torch.Generator().manual_seed(values["seed"] + 1)
    encoder.reset_parameters(gen)
    model = GraphControlModel(encoder, num_classes=bundle.num_classes,
                              with_prompts=True, init_seed=values["seed"] + 2)
    with torch.no_grad():
        for p in model.trainable_parameters():
            p.add_(torch.empty_like(p).uniform_(-0.05, 0.05, generator=gen))

    p_mat = subgraph_embedding(sub, dims.k)
    p_cond = attribute_condition(sub.local_attributes, v=0.2, k=dims.k).matrix
    batch = SubgraphBatch.build([sub], [p_mat], [p_cond], dtype=torch.float64)
    target = torch.tensor([sub.label if sub.label is not None else 0])

    def loss_fn() -> torch.Tensor:
        logits = model.classifier(batch_prompt_forward(model, batch))
        return torch.nn.functional.cross_entropy(logits, target)

    limit = values["elements_per_tensor"] or None
    report = backprop_check(loss_fn, model.named_parameters(),
                            max_elements_per_tensor=limit)
    print(f"max relative gradient error: {report.max_relative_error:.3e}")
    if report.max_relative_error > values["tolerance"]:
        raise NumericalError(
            f"gradient check failed: {report.max_relative_error:.3e} > "
            f"{values['tolerance']:.1e}"
        )
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphcontrol",
        description="structural pre-training and conditioned adaptation on graphs",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", default=None, help="path to a key=value config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--workers", type=int, default=None,
                        help="parallel benchmark workers (1 = fully serial)")
    parser.add_argument("--seed", type=int, default=None, help="override the run seed")
    parser.add_argument("--cache", default=None,
                        help="preprocessing cache directory (default from "
                             "GRAPHCONTROL_CACHE, else <out>/prep_cache)")
    return parser


def dispatch(args: argparse.Namespace) -> int:
    sub = args.subcommand
    values = resolve_config(sub, args.config, args.set, args.seed)
    out_dir = Path(args.out) if args.out else Path(f"out_{sub.replace('-', '_')}")
    _write_resolved(values, out_dir)

    cache_dir: Path | None
    if args.cache:
        cache_dir = Path(args.cache)
    elif os.environ.get("GRAPHCONTROL_CACHE"):
        cache_dir = Path(os.environ["GRAPHCONTROL_CACHE"])
    else:
        cache_dir = out_dir / "prep_cache"

    if sub == "convert":
        return _cmd_convert(values, out_dir)
    if sub == "prepare":
        return _cmd_prepare(values, out_dir, cache_dir)
    if sub == "embed":
        return _cmd_embed(values, out_dir)
    if sub == "pretrain":
        return _cmd_pretrain(values, out_dir)
    if sub == "finetune":
        return _cmd_single_run(values, out_dir, cache_dir, prompt_mode=False)
    if sub == "prompt-tune":
        return _cmd_single_run(values, out_dir, cache_dir, prompt_mode=True)
    if sub == "benchmark":
        return _cmd_benchmark(values, out_dir, cache_dir, args.workers)
    if sub == "gradcheck":
        return _cmd_gradcheck(values, out_dir)
    raise ConfigError(f"unknown subcommand {sub!r}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return dispatch(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 4
    except GraphControlError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
