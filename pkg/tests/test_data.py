import json

import numpy as np
import pytest

from samvdpc import data as dt
from samvdpc.data import DataError, MultiViewDataset, SyntheticSpec
from samvdpc.numerics import ConfigError, Rng


@pytest.fixture
def on_disk(tmp_path):
    """A small leaves-shaped dataset written in manifest format."""
    ds = dt.generate_synthetic(SyntheticSpec(scheme="shared+specific", n_samples=96,
                                             n_views=3, n_classes=6, view_dim=64,
                                             noise=0.2, seed=42))
    ds.name = "leaves-shaped"
    return dt.write_dataset(ds, tmp_path / "leaves"), ds


class TestLoadDataset:
    def test_roundtrip_counts(self, on_disk):
        manifest, original = on_disk
        ds = dt.load_dataset(manifest)
        assert ds.n_views == 3
        assert ds.n_classes == 6
        assert ds.n_samples == 96
        assert ds.view_dims == [64, 64, 64]
        assert np.array_equal(ds.labels, original.labels)
        for a, b in zip(ds.views, original.views):
            assert np.allclose(a, b, atol=1e-15)

    def test_single_view_rejected(self, tmp_path, on_disk):
        manifest_path, _ = on_disk
        manifest = json.loads(manifest_path.read_text())
        manifest["views"] = manifest["views"][:1]
        manifest_path.write_text(json.dumps(manifest))
        with pytest.raises(DataError, match="at least 2 views"):
            dt.load_dataset(manifest_path)

    def test_label_out_of_range(self, on_disk):
        manifest_path, _ = on_disk
        labels = manifest_path.parent / "labels.txt"
        lines = labels.read_text().splitlines()
        lines[3] = "6"
        labels.write_text("\n".join(lines))
        with pytest.raises(DataError, match=r"labels\.txt:4.*outside \[0, 6\)"):
            dt.load_dataset(manifest_path)

    def test_missing_file(self, on_disk):
        manifest_path, _ = on_disk
        (manifest_path.parent / "view1.csv").unlink()
        with pytest.raises(DataError, match="view1.csv.*not found"):
            dt.load_dataset(manifest_path)

    def test_non_numeric_cell_names_line(self, on_disk):
        manifest_path, _ = on_disk
        view = manifest_path.parent / "view0.csv"
        lines = view.read_text().splitlines()
        lines[4] = lines[4].replace(lines[4].split(",")[0], "oops", 1)
        view.write_text("\n".join(lines))
        with pytest.raises(DataError, match="view0.csv:5"):
            dt.load_dataset(manifest_path)

    def test_row_count_mismatch(self, on_disk):
        manifest_path, _ = on_disk
        view = manifest_path.parent / "view2.csv"
        lines = view.read_text().splitlines()
        view.write_text("\n".join(lines[:-1]))
        with pytest.raises(DataError, match="view 2"):
            dt.load_dataset(manifest_path)

    def test_unknown_manifest_key(self, on_disk):
        manifest_path, _ = on_disk
        manifest = json.loads(manifest_path.read_text())
        manifest["extra"] = 1
        manifest_path.write_text(json.dumps(manifest))
        with pytest.raises(DataError, match="unknown manifest keys"):
            dt.load_dataset(manifest_path)

    def test_header_row_skipped(self, on_disk):
        manifest_path, _ = on_disk
        view = manifest_path.parent / "view0.csv"
        view.write_text("f0,f1,f2\n" + view.read_text())
        # header consumes line 1; data still parses to the right shape
        ds = dt.load_dataset(manifest_path)
        assert ds.views[0].shape == (96, 64)

    def test_whitespace_delimiter(self, tmp_path):
        ds = dt.generate_synthetic(SyntheticSpec(scheme="xor2", n_samples=30,
                                                 view_dim=3, noise=0.1, seed=3))
        manifest_path = dt.write_dataset(ds, tmp_path)
        for v in range(2):
            path = tmp_path / f"view{v}.csv"
            path.write_text(path.read_text().replace(",", " "))
        loaded = dt.load_dataset(manifest_path)
        assert np.allclose(loaded.views[0], ds.views[0], atol=1e-15)


class TestNormalize:
    def test_train_stats(self):
        ds = dt.generate_synthetic(SyntheticSpec(scheme="xor2", n_samples=200,
                                                 view_dim=5, noise=0.2, seed=1))
        splits = dt.split(ds, 0)
        normalized, stats = dt.normalize(ds, splits.train)
        for x in normalized.views:
            train = x[splits.train]
            assert np.abs(train.mean(axis=0)).max() < 1e-9
            assert np.abs(train.std(axis=0) - 1.0).max() < 1e-9

    def test_constant_column_zeroed(self):
        views = [np.ones((20, 3)), np.arange(60.0).reshape(20, 3)]
        ds = MultiViewDataset("c", views, np.arange(20) % 2, 2)
        normalized, _ = dt.normalize(ds, np.arange(10))
        assert np.array_equal(normalized.views[0], np.zeros((20, 3)))

    def test_double_normalization_guarded(self):
        ds = dt.generate_synthetic(SyntheticSpec(scheme="xor2", n_samples=50,
                                                 view_dim=3, noise=0.1, seed=2))
        normalized, _ = dt.normalize(ds, np.arange(30))
        with pytest.raises(DataError, match="already normalized"):
            dt.normalize(normalized, np.arange(30))

    def test_stored_stats_transform(self):
        ds = dt.generate_synthetic(SyntheticSpec(scheme="xor2", n_samples=50,
                                                 view_dim=3, noise=0.1, seed=2))
        normalized, stats = dt.normalize(ds, np.arange(30))
        again = dt.apply_normalization(ds.views, stats)
        for a, b in zip(again, normalized.views):
            assert np.array_equal(a, b)


class TestSplit:
    def test_balanced_100(self):
        views = [np.zeros((100, 2)), np.zeros((100, 2))]
        views[0][:, 0] = np.arange(100)
        labels = np.arange(100) % 2
        ds = MultiViewDataset("b", views, labels, 2)
        splits = dt.split(ds, 3)
        assert (len(splits.train), len(splits.val), len(splits.test)) == (60, 20, 20)
        for idx in (splits.train, splits.val, splits.test):
            counts = np.bincount(labels[idx], minlength=2)
            assert counts[0] == counts[1]

    def test_same_seed_identical(self, ):
        ds = dt.generate_synthetic(SyntheticSpec(scheme="xor2", n_samples=123,
                                                 view_dim=3, noise=0.1, seed=4))
        a, b = dt.split(ds, 17), dt.split(ds, 17)
        assert np.array_equal(a.train, b.train)
        assert np.array_equal(a.val, b.val)
        assert np.array_equal(a.test, b.test)

    def test_disjoint_and_exhaustive(self):
        for seed in range(5):
            ds = dt.generate_synthetic(SyntheticSpec(scheme="shared+specific", n_samples=97,
                                                     n_views=2, n_classes=5, view_dim=4,
                                                     noise=0.3, seed=seed))
            splits = dt.split(ds, seed)
            union = np.concatenate([splits.train, splits.val, splits.test])
            assert len(union) == ds.n_samples
            assert len(np.unique(union)) == ds.n_samples

    def test_class_proportions_within_one(self):
        rng = Rng(6)
        for seed in range(5):
            n = int(rng.integers(60, 200))
            labels = np.asarray(rng.integers(0, 4, n))
            while len(np.unique(labels)) < 4 or np.bincount(labels).min() < 3:
                labels = np.asarray(rng.integers(0, 4, n))
            ds = MultiViewDataset("p", [np.zeros((n, 2)), np.zeros((n, 2))], labels, 4)
            splits = dt.split(ds, seed)
            for idx, frac in ((splits.train, 0.6), (splits.val, 0.2), (splits.test, 0.2)):
                counts = np.bincount(labels[idx], minlength=4)
                for cls in range(4):
                    expected = frac * np.bincount(labels)[cls]
                    assert abs(counts[cls] - expected) <= 1 + 1e-9

    def test_tiny_class_warns(self):
        labels = np.array([0] * 20 + [1] * 2)
        ds = MultiViewDataset("t", [np.zeros((22, 2)), np.zeros((22, 2))], labels, 2)
        with pytest.warns(UserWarning, match="class 1"):
            dt.split(ds, 0)


class TestMinibatches:
    def test_chunk_sizes(self):
        batches = dt.minibatches(np.arange(10), 4, Rng(0))
        assert [len(b) for b in batches] == [4, 4, 2]

    def test_partition(self):
        idx = np.arange(37)
        batches = dt.minibatches(idx, 5, Rng(1))
        union = np.concatenate(batches)
        assert sorted(union.tolist()) == idx.tolist()

    def test_oversized_batch_warns(self):
        with pytest.warns(UserWarning, match="batch size"):
            batches = dt.minibatches(np.arange(5), 10, Rng(2))
        assert len(batches) == 1 and len(batches[0]) == 5

    def test_invalid_batch_size(self):
        with pytest.raises(ConfigError):
            dt.minibatches(np.arange(5), 0, Rng(0))


class TestSynthetic:
    def test_xor2_noiseless_bayes(self):
        ds = dt.generate_synthetic(SyntheticSpec(scheme="xor2", n_samples=400,
                                                 view_dim=4, noise=0.0, seed=7))
        # noise 0: each view collapses to exactly two points; label is their XOR
        bits = []
        for v in range(2):
            unique = np.unique(np.round(ds.views[v], 12), axis=0)
            assert len(unique) == 2
            bits.append(ds.views[v] @ ds.views[v][0] > 0)
        recovered = bits[0] ^ bits[1]
        agree = (recovered == ds.labels.astype(bool)).mean()
        assert agree in (0.0, 1.0)  # joint bits determine the label exactly

    def test_xor2_single_view_uninformative(self):
        ds = dt.generate_synthetic(SyntheticSpec(scheme="xor2", n_samples=4000,
                                                 view_dim=4, noise=0.0, seed=8))
        # enumerate the 4 latent configurations: within one view-value group,
        # labels are ~50/50, so mutual information with either view is 0
        for v in range(2):
            keys = np.round(ds.views[v], 9)
            for key in np.unique(keys, axis=0):
                group = ds.labels[(keys == key).all(axis=1)]
                assert abs(group.mean() - 0.5) < 0.05

    def test_same_seed_identical(self):
        spec = SyntheticSpec(scheme="xor2", n_samples=100, view_dim=5, noise=0.3, seed=9)
        a, b = dt.generate_synthetic(spec), dt.generate_synthetic(spec)
        assert np.array_equal(a.labels, b.labels)
        for va, vb in zip(a.views, b.views):
            assert np.array_equal(va, vb)

    def test_unknown_scheme(self):
        with pytest.raises(ConfigError, match="unknown scheme"):
            dt.generate_synthetic(SyntheticSpec(scheme="nope"))

    def test_shared_specific_shape(self):
        ds = dt.generate_synthetic(SyntheticSpec(scheme="shared+specific", n_samples=90,
                                                 n_views=3, n_classes=4, view_dim=7,
                                                 noise=0.2, seed=10))
        assert ds.n_views == 3
        assert ds.view_dims == [7, 7, 7]
        assert set(np.unique(ds.labels)) == {0, 1, 2, 3}


class TestPipelineInvariants:
    def test_counts_preserved(self, tmp_path):
        ds = dt.generate_synthetic(SyntheticSpec(scheme="xor2", n_samples=120,
                                                 view_dim=6, noise=0.2, seed=11))
        manifest = dt.write_dataset(ds, tmp_path)
        loaded = dt.load_dataset(manifest)
        splits = dt.split(loaded, 2)
        normalized, _ = dt.normalize(loaded, splits.train)
        batches = dt.minibatches(splits.train, 16, Rng(3))
        assert normalized.n_samples == 120
        assert normalized.n_views == 2
        assert normalized.view_dims == [6, 6]
        assert normalized.n_classes == 2
        assert sum(len(b) for b in batches) == len(splits.train)
