"""Per-node preprocessing: subgraphs, structural and condition embeddings.

Every adaptation run consumes one fixed restart-walk subgraph per node,
drawn from a preparation seed that is independent of the run seeds so
the work is shared across runs (and cacheable on disk). Cache entries
are content-addressed by a dataset fingerprint plus the sampler
parameters; node lists are varint-encoded, embeddings use the 16-byte
header binary codec.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .condition import cosine_kernel, condition_embedding, discretize, soft_condition_embedding
from .errors import DataError
from .graphs import DatasetBundle
from .sampler import Subgraph, derive_seed, induce_subgraph, sample_subgraph
from .spectral import load_embedding, save_embedding
from .pretrain import subgraph_embedding

_TAG_PREP = 201


# ---------------------------------------------------------------------------
# varint codec (LEB128, unsigned)


def encode_varints(values: np.ndarray) -> bytes:
    out = bytearray()
    for v in np.asarray(values, dtype=np.uint64):
        v = int(v)
        while True:
            byte = v & 0x7F
            v >>= 7
            if v:
                out.append(byte | 0x80)
            else:
                out.append(byte)
                break
    return bytes(out)


def decode_varints(data: bytes) -> np.ndarray:
    values = []
    cur = 0
    shift = 0
    for byte in data:
        cur |= (byte & 0x7F) << shift
        if byte & 0x80:
            shift += 7
        else:
            values.append(cur)
            cur = 0
            shift = 0
    if shift:
        raise DataError("truncated varint stream")
    return np.asarray(values, dtype=np.int64)


# ---------------------------------------------------------------------------


def dataset_fingerprint(bundle: DatasetBundle) -> str:
    h = hashlib.sha256()
    g = bundle.graph
    h.update(bundle.name.encode())
    h.update(np.int64(g.num_nodes).tobytes())
    h.update(g.indptr.tobytes())
    h.update(g.indices.tobytes())
    if g.attributes is not None:
        h.update(g.attributes.tobytes())
    if g.labels is not None:
        h.update(g.labels.tobytes())
    return h.hexdigest()[:20]


def _cond_tag(v: float | None, soft: bool) -> str:
    if soft:
        return "soft"
    return f"v{v:.6g}"


class Preprocessor:
    """Computes and memoizes per-node subgraphs and embeddings.

    One instance is bound to (dataset, walk_steps, restart_rate, k,
    prep_seed). Condition embeddings are additionally keyed by the
    threshold (or the soft-kernel tag).
    """

    def __init__(
        self,
        bundle: DatasetBundle,
        walk_steps: int,
        restart_rate: float,
        k: int = 32,
        prep_seed: int = 0,
        cache_dir: str | Path | None = None,
    ):
        self.bundle = bundle
        self.graph = bundle.graph
        self.walk_steps = walk_steps
        self.restart_rate = restart_rate
        self.k = k
        self.prep_seed = prep_seed
        self._subgraphs: dict[int, Subgraph] = {}
        self._p: dict[int, np.ndarray] = {}
        self._cond: dict[tuple[str, int], np.ndarray] = {}
        self._dir: Path | None = None
        if cache_dir is not None:
            key = (
                f"{dataset_fingerprint(bundle)}-w{walk_steps}-r{restart_rate:.6g}"
                f"-k{k}-s{prep_seed}"
            )
            self._dir = Path(cache_dir) / key
            self._dir.mkdir(parents=True, exist_ok=True)

    # -- subgraphs

    def subgraph(self, node: int) -> Subgraph:
        sub = self._subgraphs.get(node)
        if sub is not None:
            return sub
        path = self._dir / f"{node:07d}.nodes" if self._dir else None
        if path is not None and path.is_file():
            ids = decode_varints(path.read_bytes())
            sub = induce_subgraph(self.graph, ids, node)
        else:
            sub = sample_subgraph(
                self.graph, node, self.walk_steps, self.restart_rate,
                derive_seed(_TAG_PREP, self.prep_seed, node),
            )
            if path is not None:
                path.write_bytes(encode_varints(sub.node_ids))
        self._subgraphs[node] = sub
        return sub

    # -- structural embeddings

    def structural(self, node: int) -> np.ndarray:
        p = self._p.get(node)
        if p is not None:
            return p
        path = self._dir / f"{node:07d}.pe" if self._dir else None
        if path is not None and path.is_file():
            p = load_embedding(path)
        else:
            p = subgraph_embedding(self.subgraph(node), self.k)
            if path is not None:
                save_embedding(path, p)
        self._p[node] = p
        return p

    # -- condition embeddings

    def condition(self, node: int, v: float | None = None, soft: bool = False) -> np.ndarray:
        tag = _cond_tag(v, soft)
        got = self._cond.get((tag, node))
        if got is not None:
            return got
        path = self._dir / f"{node:07d}.cond_{tag}" if self._dir else None
        if path is not None and path.is_file():
            emb = load_embedding(path)
        else:
            sub = self.subgraph(node)
            if sub.local_attributes is None:
                raise DataError(
                    "condition generation needs node attributes; run the embed step first"
                )
            kern = cosine_kernel(sub.local_attributes)
            if soft:
                emb = soft_condition_embedding(kern, k=self.k).matrix
            else:
                emb = condition_embedding(discretize(kern, v), k=self.k).matrix
            if path is not None:
                save_embedding(path, emb)
        self._cond[(tag, node)] = emb
        return emb

    def warm(self, nodes: np.ndarray, v: float | None = None, soft: bool = False,
             need_condition: bool = True) -> None:
        for node in nodes:
            self.structural(int(node))
            if need_condition:
                self.condition(int(node), v=v, soft=soft)

    def gather(self, nodes: np.ndarray, v: float | None = None, soft: bool = False,
               need_condition: bool = True):
        subs = [self.subgraph(int(i)) for i in nodes]
        p = [self.structural(int(i)) for i in nodes]
        cond = None
        if need_condition:
            cond = [self.condition(int(i), v=v, soft=soft) for i in nodes]
        return subs, p, cond
