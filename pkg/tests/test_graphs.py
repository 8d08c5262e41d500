import numpy as np
import pytest
from hypothesis import given, strategies as st

from graphcontrol.errors import DataError
from graphcontrol.graphs import (
    DatasetBundle,
    build_graph,
    load_dataset,
    make_fewshot_split,
    make_split,
    save_dataset,
)

from conftest import random_graph


def write_dataset(tmp_path, edges_text, meta, features=None, labels=None, name="ds"):
    root = tmp_path / name
    root.mkdir()
    (root / "edges.tsv").write_text(edges_text)
    (root / "meta.json").write_text(meta)
    if features is not None:
        (root / "features.csv").write_text(features)
    if labels is not None:
        (root / "labels.csv").write_text(labels)
    return tmp_path


class TestLoadDataset:
    def test_single_edge_degrees(self, tmp_path):
        root = write_dataset(tmp_path, "0\t1\n", '{"num_nodes": 2, "num_classes": 1, "name": "t"}')
        bundle = load_dataset(root, "ds")
        assert bundle.graph.degrees.tolist() == [1, 1]

    def test_directed_duplicates_merge(self, tmp_path):
        a = load_dataset(write_dataset(tmp_path, "0\t1\n",
                         '{"num_nodes": 2, "num_classes": 1}', name="a"), "a")
        b = load_dataset(write_dataset(tmp_path, "0\t1\n1\t0\n",
                         '{"num_nodes": 2, "num_classes": 1}', name="b"), "b")
        assert np.array_equal(a.graph.indptr, b.graph.indptr)
        assert np.array_equal(a.graph.indices, b.graph.indices)

    def test_label_out_of_range(self, tmp_path):
        root = write_dataset(tmp_path, "0\t1\n",
                             '{"num_nodes": 2, "num_classes": 2}', labels="0\n2\n")
        with pytest.raises(DataError, match="label out of range"):
            load_dataset(root, "ds")

    def test_errors_carry_file_and_line(self, tmp_path):
        root = write_dataset(tmp_path, "0\t1\n5\t0\n", '{"num_nodes": 2, "num_classes": 1}')
        with pytest.raises(DataError, match=r"edges\.tsv:2"):
            load_dataset(root, "ds")

    def test_missing_edges_file(self, tmp_path):
        (tmp_path / "ds").mkdir()
        (tmp_path / "ds" / "meta.json").write_text('{"num_nodes": 1, "num_classes": 1}')
        with pytest.raises(DataError, match="missing file"):
            load_dataset(tmp_path, "ds")

    def test_attribute_row_mismatch(self, tmp_path):
        root = write_dataset(tmp_path, "0\t1\n", '{"num_nodes": 2, "num_classes": 1}',
                             features="1.0,2.0\n")
        with pytest.raises(DataError, match="row count mismatch"):
            load_dataset(root, "ds")

    def test_malformed_feature_value(self, tmp_path):
        root = write_dataset(tmp_path, "0\t1\n", '{"num_nodes": 2, "num_classes": 1}',
                             features="1.0,2.0\n3.0,oops\n")
        with pytest.raises(DataError, match=r"features\.csv:2"):
            load_dataset(root, "ds")

    def test_self_loop_kept_and_counted_once(self, tmp_path):
        root = write_dataset(tmp_path, "0\t0\n0\t1\n", '{"num_nodes": 2, "num_classes": 1}')
        g = load_dataset(root, "ds").graph
        assert g.degrees.tolist() == [2, 1]
        assert g.has_edge(0, 0)


class TestRoundTrip:
    def test_save_load_identical(self, tmp_path, rng):
        g = random_graph(rng, 30, attrs_dim=5, num_classes=3)
        bundle = DatasetBundle(graph=g, name="rt", is_attributed=True, num_classes=3)
        save_dataset(bundle, tmp_path)
        back = load_dataset(tmp_path, "rt")
        assert np.array_equal(back.graph.indptr, g.indptr)
        assert np.array_equal(back.graph.indices, g.indices)
        assert np.array_equal(back.graph.attributes, g.attributes)
        assert np.array_equal(back.graph.labels, g.labels)


class TestMakeSplit:
    def test_one_to_nine_ratio(self, rng):
        g = random_graph(rng, 10, num_classes=2)
        split = make_split(g, 0.1, seed=0)
        assert len(split.train_ids) == 1
        assert len(split.test_ids) == 9

    def test_deterministic(self, rng):
        g = random_graph(rng, 50, num_classes=3)
        a = make_split(g, 0.2, seed=7)
        b = make_split(g, 0.2, seed=7)
        assert np.array_equal(a.train_ids, b.train_ids)
        assert np.array_equal(a.test_ids, b.test_ids)

    @given(seed=st.integers(0, 10_000))
    def test_partition_property(self, seed):
        g = random_graph(np.random.Generator(np.random.PCG64(5)), 37, num_classes=2)
        split = make_split(g, 0.3, seed=seed)
        union = np.union1d(split.train_ids, split.test_ids)
        assert np.array_equal(union, np.arange(37))
        assert np.intersect1d(split.train_ids, split.test_ids).size == 0

    def test_degenerate_fraction_rejected(self, rng):
        g = random_graph(rng, 10, num_classes=2)
        with pytest.raises(DataError):
            make_split(g, 0.01, seed=0)

    def test_requires_labels(self, rng):
        g = random_graph(rng, 10)
        with pytest.raises(DataError):
            make_split(g, 0.5, seed=0)


class TestFewshotSplit:
    @staticmethod
    def balanced_graph(n=480, classes=4):
        labels = np.arange(n) % classes
        edges = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1)  # path graph
        return build_graph(n, edges, labels=labels, num_classes=classes)

    def test_shot_count(self):
        g = self.balanced_graph()
        split = make_fewshot_split(g, shots=3, seed=1)
        assert len(split.train_ids) == 12  # 4 classes x 3 shots

    def test_per_class_exact(self):
        g = self.balanced_graph()
        split = make_fewshot_split(g, shots=3, seed=2)
        counts = np.bincount(g.labels[split.train_ids], minlength=4)
        assert counts.tolist() == [3, 3, 3, 3]

    def test_train_from_candidate_pool_test_is_nine_tenths(self):
        g = self.balanced_graph()
        split = make_fewshot_split(g, shots=3, seed=3)
        base = make_split(g, 0.1, seed=3)
        assert np.array_equal(split.test_ids, base.test_ids)
        assert np.isin(split.train_ids, base.train_ids).all()

    def test_insufficient_candidates_names_class(self):
        n = 50
        labels = np.zeros(n, dtype=np.int64)
        labels[:2] = 1  # class 1 has 2 nodes; candidate pool of 5 rarely holds 5 of them
        g = build_graph(n, np.array([[0, 1]]), labels=labels, num_classes=2)
        with pytest.raises(DataError, match="class 1"):
            make_fewshot_split(g, shots=5, seed=0)

    def test_deterministic(self):
        g = self.balanced_graph()
        a = make_fewshot_split(g, shots=5, seed=9)
        b = make_fewshot_split(g, shots=5, seed=9)
        assert np.array_equal(a.train_ids, b.train_ids)
