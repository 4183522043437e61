import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qmlbench import datagen as g


def one_nn_accuracy(ds):
    D = ((ds.X_test[:, None, :] - ds.X_train[None, :, :]) ** 2).sum(-1)
    return float(np.mean(ds.y_train[D.argmin(1)] == ds.y_test))


@pytest.fixture(scope="module")
def mnist_dir(tmp_path_factory):
    """Small synthetic IDX files: random 28x28 digits with labels 0-9."""
    root = tmp_path_factory.mktemp("mnist")
    rng = np.random.default_rng(5)
    for prefix, n in (("train", 1500), ("t10k", 1500)):
        labels = rng.integers(0, 10, n).astype(np.uint8)
        imgs = rng.integers(0, 256, size=(n, 28, 28)).astype(np.uint8)
        imgs[labels == 5, 10:18, 10:18] = 255
        g.write_idx(root / f"{prefix}-images-idx3-ubyte", imgs)
        g.write_idx(root / f"{prefix}-labels-idx1-ubyte", labels, labels=True)
    return root


class TestSplits:
    @given(st.integers(20, 400), st.integers(0, 1000))
    def test_ratio_and_stratification(self, n, seed):
        y = np.where(np.random.default_rng(seed).random(n) < 0.5, 1, -1)
        if min((y == 1).sum(), (y == -1).sum()) < 3:
            return
        train, test = g.stratified_split(y, 0.2, seed)
        assert len(np.intersect1d(train, test)) == 0 and len(train) + len(test) == n
        assert abs(len(test) - n / 6) <= 1
        for c in (-1, 1):
            assert abs((y[test] == c).sum() - (y == c).sum() / 6) <= 0.5 + 1e-9

    def test_dataset_validation(self):
        with pytest.raises(g.DataError):
            g.Dataset(np.zeros((2, 1)), np.array([0, 1]), np.arange(1), np.arange(1, 2))
        with pytest.raises(g.DataError):
            g.Dataset(np.array([[np.nan], [0.0]]), np.array([-1, 1]), np.arange(1), np.arange(1, 2))


class TestLinearlySeparable:
    def test_margin(self):
        for d in (2, 5, 10):
            ds = g.gen_linearly_separable(d, 300, seed=d)
            assert np.all(np.abs(ds.inputs.sum(1)) > 0.02 * d)
            assert np.all(np.abs(ds.inputs) <= 1)

    def test_balanced(self):
        ds = g.gen_linearly_separable(4, 301, seed=1)
        assert abs((ds.labels == 1).sum() - (ds.labels == -1).sum()) <= 1

    def test_reproducible_small(self):
        a, b = g.gen_linearly_separable(2, 4, seed=11), g.gen_linearly_separable(2, 4, seed=11)
        assert a.inputs.shape == (4, 2) and a.inputs.tobytes() == b.inputs.tobytes()

    def test_labels_follow_hyperplane(self):
        ds = g.gen_linearly_separable(3, 300, seed=2)
        assert np.all(ds.labels == np.where(ds.inputs.sum(1) > np.median(ds.inputs.sum(1)), 1, -1))

    def test_needs_two_features(self):
        with pytest.raises(g.DataError):
            g.gen_linearly_separable(1)


class TestBarsAndStripes:
    def test_noiseless_structure(self):
        ds = g.gen_bars_and_stripes(4, 50, 0.0, seed=0)
        imgs = ds.inputs.reshape(-1, 4, 4)
        for img, label in zip(imgs, ds.labels):
            if label == -1:
                assert np.all(img == img[0:1, :])
            else:
                assert np.all(img == img[:, 0:1])
            assert set(np.unique(img)) <= {-1.0, 1.0}

    def test_noise_level(self):
        clean = g.gen_bars_and_stripes(10, 100, 0.0, seed=4).inputs
        noisy = g.gen_bars_and_stripes(10, 100, 0.5, seed=4).inputs
        assert (noisy - clean).size == 10**4
        assert 0.47 <= (noisy - clean).std() <= 0.53

    def test_negative_noise(self):
        with pytest.raises(g.DataError):
            g.gen_bars_and_stripes(4, 10, -1.0)


class TestHiddenManifold:
    def test_contract(self):
        ds = g.gen_hidden_manifold(7, 300, 6, seed=0)
        assert abs((ds.labels == 1).sum() - (ds.labels == -1).sum()) <= 1
        assert np.all(np.abs(ds.inputs) < 1)

    def test_reproducible(self):
        a, b = g.gen_hidden_manifold(3, 6, 2, seed=9), g.gen_hidden_manifold(3, 6, 2, seed=9)
        assert a.inputs.tobytes() == b.inputs.tobytes()

    def test_inputs_lie_on_low_dimensional_manifold(self):
        ds = g.gen_hidden_manifold(10, 300, 2, seed=1)
        # arctanh recovers an affine image of the 2d latent space
        Z = np.arctanh(np.clip(ds.inputs, -1 + 1e-12, 1 - 1e-12))
        s = np.linalg.svd(Z - Z.mean(0), compute_uv=False)
        assert s[2] / s[0] < 1e-8

    def test_bad_dimension(self):
        with pytest.raises(g.DataError):
            g.gen_hidden_manifold(3, 10, 0)


class TestTwoCurves:
    def test_zero_offset_is_uninformative(self):
        ds = g.gen_two_curves(3, 600, 5, 0.0, 0.0, seed=0)
        assert abs(one_nn_accuracy(ds) - 0.5) < 0.15

    def test_large_offset_is_separable(self):
        ds = g.gen_two_curves(3, 300, 5, 10.0, 0.0, seed=0)
        assert one_nn_accuracy(ds) == 1.0

    def test_offset_shifts_every_dimension(self):
        a = g.gen_two_curves(4, 100, 3, 0.0, 0.0, seed=2)
        b = g.gen_two_curves(4, 100, 3, 0.7, 0.0, seed=2)
        shift = b.inputs - a.inputs
        assert np.allclose(shift[a.labels == -1], 0.7) and np.allclose(shift[a.labels == 1], 0.0)

    def test_diff_offset(self):
        assert g.two_curves_diff_offset(10) == 0.05
        ds = g.gen_two_curves_diff(10, seed=0)
        assert ds.config["offset"] == 0.05 and ds.n_features == 10

    def test_bad_degree(self):
        with pytest.raises(g.DataError):
            g.gen_two_curves(2, 10, 0)


class TestHyperplanes:
    def test_single_hyperplane(self, rng):
        C = rng.normal(size=(50, 3))
        w, b = rng.uniform(-1, 1, (1, 3)), rng.uniform(-1, 1, 1)
        vote = np.where(C @ w[0] + b[0] > 0, 1, -1)
        assert np.all(g.parity_labels(C, w, b) == -vote)

    def test_flipping_one_hyperplane_flips_every_label(self, rng):
        C = rng.normal(size=(50, 3))
        for k in (1, 2, 3, 4):
            w, b = rng.uniform(-1, 1, (k, 3)), rng.uniform(-1, 1, k)
            w2, b2 = w.copy(), b.copy()
            j = rng.integers(k)
            w2[j], b2[j] = -w[j], -b[j]
            assert np.all(g.parity_labels(C, w, b) == -g.parity_labels(C, w2, b2))

    def test_balanced_and_standardised(self):
        ds = g.gen_hyperplanes_parity(10, 1000, 3, 3, seed=0)
        assert (ds.labels == 1).sum() == (ds.labels == -1).sum() == 500
        assert np.allclose(ds.inputs.mean(0), 0, atol=1e-10)
        assert np.linalg.matrix_rank(ds.inputs, tol=1e-8) == 3

    def test_hidden_dimension_bound(self):
        with pytest.raises(g.DataError):
            g.gen_hyperplanes_parity(2, 100, 1, 3)


class TestMNIST:
    def test_idx_round_trip(self, tmp_path, rng):
        imgs = rng.integers(0, 256, size=(3, 4, 5)).astype(np.uint8)
        g.write_idx(tmp_path / "i", imgs)
        g.write_idx(tmp_path / "l", np.array([1, 2, 3], dtype=np.uint8), labels=True)
        assert np.array_equal(g.read_idx_images(tmp_path / "i"), imgs)
        assert list(g.read_idx_labels(tmp_path / "l")) == [1, 2, 3]
        with pytest.raises(g.DataError):
            g.read_idx_images(tmp_path / "l")

    def test_missing_files(self, tmp_path):
        with pytest.raises(g.DataError):
            g.load_mnist_35(tmp_path)

    def test_filters_digits(self, mnist_dir):
        X_tr, y_tr, X_te, y_te = g.load_mnist_35(mnist_dir)
        assert set(np.unique(y_tr)) == {-1, 1} and X_tr.shape[1:] == (28, 28)

    def test_pca(self, mnist_dir):
        ds = g.gen_mnist_pca(mnist_dir, 2)
        assert ds.n_features == 2
        assert np.max(np.abs(ds.X_train.mean(0))) < 1e-8

    def test_pca_minus(self, mnist_dir):
        ds = g.gen_mnist_pca(mnist_dir, 3, subsample=250, seed=0)
        assert len(ds.train_idx) == 250 and len(ds.test_idx) == 250

    def test_coarse_grained(self, mnist_dir):
        ds = g.gen_mnist_cg(mnist_dir, 4)
        assert ds.n_features == 16 and np.allclose(ds.X_train.mean(0), 0, atol=1e-10)


class TestBilinear:
    def test_identity_size(self, rng):
        img = rng.uniform(0, 255, size=(28, 28))
        assert np.max(np.abs(g.bilinear_resize(img, 28) - img)) < 1e-6

    def test_constant(self):
        assert np.allclose(g.bilinear_resize(np.full((28, 28), 3.0), 8), 3.0)

    def test_checkerboard_upsample(self):
        out = g.bilinear_resize(np.array([[0.0, 1.0], [1.0, 0.0]]), 4)
        ref = np.array([[0.0, 0.25, 0.75, 1.0],
                        [0.25, 0.375, 0.625, 0.75],
                        [0.75, 0.625, 0.375, 0.25],
                        [1.0, 0.75, 0.25, 0.0]])
        assert np.allclose(out, ref, atol=1e-15)


class TestFiles:
    @pytest.mark.parametrize("make", [
        lambda: g.gen_linearly_separable(3, 60, seed=1),
        lambda: g.gen_bars_and_stripes(4, 60, seed=1),
        lambda: g.gen_hidden_manifold(4, 60, seed=1),
        lambda: g.gen_two_curves(3, 60, seed=1),
        lambda: g.gen_hyperplanes_parity(5, 60, 2, 3, seed=1),
    ])
    def test_byte_identical_csv(self, make, tmp_path):
        a = g.write_dataset(make(), tmp_path / "a")
        b = g.write_dataset(make(), tmp_path / "b")
        for key in a:
            assert a[key].read_bytes() == b[key].read_bytes()
        header = a["train"].read_text().splitlines()[0]
        assert header.endswith(",y") and header.startswith("x0,")

    def test_round_trip(self, tmp_path):
        ds = g.gen_two_curves(3, 60, seed=4)
        back = g.read_dataset(g.write_dataset(ds, tmp_path)["train"])
        assert np.array_equal(back.X_train, ds.X_train) and np.array_equal(back.y_test, ds.y_test)
        assert back.config == ds.config


class TestBenchmarks:
    def test_linearly_separable_sweep(self):
        sets = g.benchmark_datasets("linearly_separable")
        assert [s.config["d"] for s in sets] == list(range(2, 21)) and {s.config["N"] for s in sets} == {300}

    def test_fixed_settings(self):
        tc = g.benchmark_datasets("two_curves", values=[3])[0].config
        assert tc["degree"] == 5 and tc["offset"] == 0.1
        assert g.benchmark_datasets("two_curves_diff", values=[4])[0].config["d"] == 10
        hp = g.benchmark_datasets("hyperplanes_diff", values=[2])[0].config
        assert (hp["d"], hp["m"], hp["N"]) == (10, 3, 1000)
        hm = g.benchmark_datasets("hidden_manifold_diff", values=[4])[0].config
        assert (hm["d"], hm["m"]) == (10, 4)

    def test_mnist_benchmarks_need_files(self):
        with pytest.raises(g.DataError):
            g.benchmark_datasets("mnist_pca")

    def test_unknown(self):
        with pytest.raises(g.DataError):
            g.benchmark_datasets("spirals")
