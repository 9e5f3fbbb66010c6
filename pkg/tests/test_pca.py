import numpy as np
import pytest

from domainsift import pca
from domainsift.embeddings import read_embeddings, write_embeddings
from domainsift.errors import (
    BadMagic,
    DegenerateSample,
    DimsMismatch,
    NonFiniteInput,
    VersionMismatch,
)


def fit_on_line(seed=0, rows=200):
    # points on the line y = 2x, plus the fitted model
    rng = np.random.default_rng(seed)
    t = rng.standard_normal(rows)
    X = np.stack([t, 2 * t], axis=1).astype(np.float32)
    return X, pca.fit_pca(X, 2)


class TestFit:
    def test_points_on_a_line(self):
        _, model = fit_on_line()
        direction = np.array([1.0, 2.0]) / np.sqrt(5.0)
        assert np.allclose(np.abs(model.components[0]), direction, atol=1e-5)
        # sign convention: largest-magnitude entry positive
        assert model.components[0, 1] > 0
        assert model.explained_variance[1] < 1e-8

    def test_axis_aligned_variances(self):
        X = np.array([[2, 0], [-2, 0], [0, 1], [0, -1]], dtype=np.float32)
        model = pca.fit_pca(X, 2)
        assert np.allclose(model.components, np.eye(2), atol=1e-6)
        # sample variances with the n-1 divisor: (4+4)/3 and (1+1)/3
        assert np.allclose(model.explained_variance, [8 / 3, 2 / 3], atol=1e-5)

    def test_variance_sum_equals_total(self):
        # oracle: total variance computed per column with the explicit
        # two-pass formula, independent of the eigendecomposition
        rng = np.random.default_rng(4)
        X = (rng.standard_normal((1000, 16)) * rng.uniform(0.1, 3, 16)).astype(np.float32)
        model = pca.fit_pca(X, 16)
        X64 = X.astype(np.float64)
        col_means = X64.sum(axis=0) / 1000
        total_var = (((X64 - col_means) ** 2).sum(axis=0) / 999).sum()
        got = float(model.explained_variance.astype(np.float64).sum())
        assert abs(got - total_var) / total_var < 1e-4

    def test_components_orthonormal(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((500, 24)).astype(np.float32)
        model = pca.fit_pca(X, 8)
        gram = model.components.astype(np.float64) @ model.components.astype(np.float64).T
        assert np.abs(gram - np.eye(8)).max() <= 1e-5

    def test_explained_variance_non_increasing(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((300, 12)).astype(np.float32)
        model = pca.fit_pca(X, 12)
        ev = model.explained_variance
        assert (ev[:-1] >= ev[1:]).all()
        assert (ev >= 0).all()

    def test_row_order_invariant(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((400, 10)).astype(np.float32)
        a = pca.fit_pca(X, 4)
        b = pca.fit_pca(X[::-1].copy(), 4)
        assert np.allclose(a.mean, b.mean, atol=1e-6)
        assert np.allclose(a.components, b.components, atol=1e-6)

    def test_degenerate_sample(self):
        with pytest.raises(DegenerateSample):
            pca.fit_pca(np.ones((3, 8), dtype=np.float32), 4)

    def test_non_finite_rejected(self):
        X = np.ones((10, 4), dtype=np.float32)
        X[3, 2] = np.nan
        with pytest.raises(NonFiniteInput):
            pca.fit_pca(X, 2)

    def test_stream_fit_matches_in_memory(self, tmp_path):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((256, 6)).astype(np.float32)
        path = tmp_path / "x.emb"
        write_embeddings(X, path)
        direct = pca.fit_pca(X, 3)
        streamed = pca.fit_pca_stream(lambda: read_embeddings(path, chunk_rows=37), 3)
        assert np.allclose(direct.mean, streamed.mean, atol=1e-6)
        assert np.allclose(direct.components, streamed.components, atol=1e-6)
        assert np.allclose(direct.explained_variance, streamed.explained_variance,
                           rtol=1e-5)


class TestTransform:
    def test_mean_maps_to_zero(self):
        X, model = fit_on_line(seed=1)
        out = pca.transform(model.mean.reshape(1, -1), model)
        assert np.allclose(out, 0.0, atol=1e-6)

    def test_mean_plus_component_maps_to_e1(self):
        X, model = fit_on_line(seed=2)
        x = (model.mean + model.components[0]).reshape(1, -1)
        out = pca.transform(x, model)
        assert np.allclose(out, [[1.0, 0.0]], atol=1e-5)

    def test_small_matrix_matches_loop_oracle(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((40, 4)).astype(np.float32)
        model = pca.fit_pca(X, 3)
        M = rng.standard_normal((5, 4)).astype(np.float32)
        got = pca.transform(M, model)
        # brute-force dense projection, element by element
        expected = np.zeros((5, 3))
        for i in range(5):
            for j in range(3):
                acc = 0.0
                for k in range(4):
                    acc += float(model.components[j, k]) * (
                        float(M[i, k]) - float(model.mean[k])
                    )
                expected[i, j] = acc
        assert np.allclose(got, expected, atol=1e-5)

    def test_projected_variance_matches_explained(self):
        rng = np.random.default_rng(10)
        X = (rng.standard_normal((2000, 20)) * rng.uniform(0.5, 2, 20)).astype(np.float32)
        model = pca.fit_pca(X, 6)
        proj = pca.transform(X, model).astype(np.float64)
        var = proj.var(axis=0, ddof=1)
        assert np.allclose(var, model.explained_variance.astype(np.float64),
                           rtol=1e-3)

    def test_projection_is_contraction(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((300, 10)).astype(np.float32)
        model = pca.fit_pca(X, 5)
        A = rng.standard_normal((30, 10)).astype(np.float32)
        B = rng.standard_normal((30, 10)).astype(np.float32)
        pa, pb = pca.transform(A, model), pca.transform(B, model)
        lhs = np.linalg.norm((pa - pb).astype(np.float64), axis=1)
        rhs = np.linalg.norm((A - B).astype(np.float64), axis=1)
        assert (lhs <= rhs + 1e-5).all()

    def test_dims_mismatch(self):
        _, model = fit_on_line(seed=3)
        with pytest.raises(DimsMismatch):
            pca.transform(np.ones((2, 5), dtype=np.float32), model)


class TestPcaFile:
    def test_file_layout_bit_exact(self, tmp_path):
        _, model = fit_on_line(seed=12)
        path = tmp_path / "m.pca"
        pca.save_pca(model, path)
        raw = path.read_bytes()
        assert raw[0:4] == b"PCA1"
        assert int.from_bytes(raw[4:6], "little") == 1   # version
        assert int.from_bytes(raw[6:10], "little") == 2  # in_dims
        assert int.from_bytes(raw[10:14], "little") == 2 # out_dims
        payload = np.frombuffer(raw[14:], dtype="<f4")
        assert len(payload) == 2 + 2 * 2 + 2             # mean, components, ev
        assert np.array_equal(payload[:2], model.mean)
        assert np.array_equal(payload[2:6], model.components.ravel())
        assert np.array_equal(payload[6:], model.explained_variance)

    def test_save_load_round_trip(self, tmp_path):
        _, model = fit_on_line(seed=4)
        path = tmp_path / "m.pca"
        pca.save_pca(model, path)
        back = pca.load_pca(path)
        assert back.in_dims == model.in_dims
        assert back.out_dims == model.out_dims
        assert np.array_equal(back.mean, model.mean)
        assert np.array_equal(back.components, model.components)
        assert np.array_equal(back.explained_variance, model.explained_variance)

    def test_corrupt_header(self, tmp_path):
        path = tmp_path / "bad.pca"
        path.write_bytes(b"WHAT" + bytes(30))
        with pytest.raises(BadMagic):
            pca.load_pca(path)

    def test_version_mismatch(self, tmp_path):
        _, model = fit_on_line(seed=5)
        path = tmp_path / "v.pca"
        pca.save_pca(model, path)
        raw = bytearray(path.read_bytes())
        raw[4] = 3
        path.write_bytes(bytes(raw))
        with pytest.raises(VersionMismatch):
            pca.load_pca(path)

    def test_loaded_model_still_checks_dims(self, tmp_path):
        _, model = fit_on_line(seed=6)
        path = tmp_path / "m.pca"
        pca.save_pca(model, path)
        back = pca.load_pca(path)
        with pytest.raises(DimsMismatch):
            pca.transform(np.ones((1, 7), dtype=np.float32), back)
