import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdlens.errors import CholeskyFailure, DimMismatch, ModelFormatError, NotSymmetric, RankDeficient
from crowdlens.numeric import format_mat, gen_eig, gram_pca, parse_mat, read_mat, sym_eig, write_mat


def random_sym(rng, n):
    a = rng.normal(size=(n, n))
    return (a + a.T) / 2


def check_signs(v):
    for col in v.T:
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        assert col[nz[0]] >= 0


class TestSymEig:
    def test_identity(self):
        e = sym_eig(np.eye(3))
        assert np.allclose(e.values, 1)
        assert np.allclose(e.vectors.T @ e.vectors, np.eye(3))

    def test_two_by_two(self):
        e = sym_eig([[2.0, 1.0], [1.0, 2.0]])
        assert np.allclose(e.values, [3, 1], atol=1e-12)
        s = 1 / np.sqrt(2)
        assert np.allclose(np.abs(e.vectors[:, 0]), [s, s])
        assert np.allclose(np.abs(e.vectors[:, 1]), [s, s])
        assert e.vectors[0, 1] * e.vectors[1, 1] < 0

    def test_diagonal(self):
        e = sym_eig(np.diag([2.0, 5.0, 0.0]))
        assert np.allclose(e.values, [5, 2, 0])
        assert np.allclose(e.vectors, np.eye(3)[:, [1, 0, 2]])

    def test_not_symmetric(self):
        with pytest.raises(NotSymmetric):
            sym_eig([[1.0, 2.0], [0.0, 1.0]])

    @pytest.mark.parametrize("n", [1, 2, 5, 17, 40])
    def test_against_numpy(self, rng, n):
        a = random_sym(rng, n)
        e = sym_eig(a)
        ref = np.linalg.eigvalsh(a)[::-1]
        fro = np.linalg.norm(a)
        assert np.allclose(e.values, ref, atol=1e-10 * fro)
        assert np.all(np.diff(e.values) <= 0)
        assert np.allclose(e.vectors.T @ e.vectors, np.eye(n), atol=1e-8)
        assert np.linalg.norm(e.vectors @ np.diag(e.values) @ e.vectors.T - a) <= 1e-8 * fro
        assert abs(e.values.sum() - np.trace(a)) <= 1e-9 * abs(np.trace(a)) + 1e-12 * max(fro, 1)
        check_signs(e.vectors)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_properties(self, n, seed):
        a = random_sym(np.random.default_rng(seed), n) * 10
        e = sym_eig(a)
        fro = np.linalg.norm(a)
        for lam, v in zip(e.values, e.vectors.T):
            assert np.linalg.norm(a @ v - lam * v) <= 1e-8 * max(fro, 1e-300)


class TestGenEig:
    def test_identity_pair(self):
        e = gen_eig(np.eye(3), np.eye(3))
        assert np.allclose(e.values, 1 / (1 + e.reg))
        assert e.reg == pytest.approx(1e-6)

    def test_reduces_to_sym_eig(self):
        e = gen_eig(np.diag([4.0, 0.0]), np.eye(2))
        assert e.values[0] == pytest.approx(4, rel=1e-5)
        assert np.allclose(np.abs(e.vectors[:, 0]), [1, 0], atol=1e-9)

    def test_zero_between(self):
        assert np.allclose(gen_eig(np.zeros((3, 3)), np.eye(3)).values, 0)

    def test_zero_within_uses_floor(self):
        e = gen_eig(np.eye(2), np.zeros((2, 2)))
        assert e.reg == 1e-6

    def test_errors(self):
        with pytest.raises(DimMismatch):
            gen_eig(np.eye(2), np.eye(3))
        with pytest.raises(CholeskyFailure):
            gen_eig(np.eye(2), -np.eye(2))

    @pytest.mark.parametrize("n", [2, 6, 15])
    def test_residual_and_scipy(self, rng, n):
        from scipy.linalg import eigh

        b = rng.normal(size=(n, 2))
        s_b = b @ b.T
        wmat = rng.normal(size=(n, 3 * n))
        s_w = wmat @ wmat.T
        e = gen_eig(s_b, s_w)
        metric = s_w + e.reg * np.eye(n)
        bound = 1e-6 * (np.linalg.norm(s_b) + np.linalg.norm(s_w))
        for lam, v in zip(e.values, e.vectors.T):
            assert np.linalg.norm(s_b @ v - lam * metric @ v) <= bound
            assert np.linalg.norm(v) == pytest.approx(1)
        ref = eigh(s_b, metric, eigvals_only=True)[::-1]
        assert np.allclose(e.values, ref, atol=1e-9 * max(1, ref[0]))


class TestGramPca:
    def test_rank_one(self):
        c = np.array([3.0, 0.0, 4.0])
        basis = gram_pca(c[:, None], 1)
        assert np.allclose(basis[:, 0], c / 5)

    def test_plane_reconstruction(self, rng):
        plane = np.linalg.qr(rng.normal(size=(100, 2)))[0]
        pts = plane @ rng.normal(size=(2, 3))
        pts -= pts.mean(axis=1, keepdims=True)
        basis = gram_pca(pts, 2)
        assert np.allclose(basis.T @ basis, np.eye(2), atol=1e-8)
        recon = basis @ (basis.T @ pts)
        assert np.linalg.norm(recon - pts) <= 1e-8 * np.linalg.norm(pts)

    def test_matches_covariance_eigvecs(self, rng):
        data = rng.normal(size=(30, 8))
        data -= data.mean(axis=1, keepdims=True)
        basis = gram_pca(data, 4)
        ref = np.linalg.eigh(data @ data.T)[1][:, ::-1][:, :4]
        assert np.allclose(np.abs(basis.T @ ref), np.eye(4), atol=1e-8)

    def test_errors(self, rng):
        with pytest.raises(ValueError):
            gram_pca(rng.normal(size=(5, 3)), 4)
        dup = np.tile(rng.normal(size=(5, 1)), (1, 3))
        with pytest.raises(RankDeficient):
            gram_pca(dup - dup.mean(axis=1, keepdims=True), 1)


class TestMatText:
    def test_roundtrip(self, rng):
        m = rng.normal(size=(3, 4)) * 10.0 ** rng.integers(-20, 20, size=(3, 4))
        text = format_mat(m)
        assert text.startswith("MAT 3 4\n")
        assert np.array_equal(parse_mat(text.splitlines()), m)
        buf = io.StringIO()
        write_mat(buf, m)
        buf.seek(0)
        assert np.array_equal(read_mat(buf), m)

    def test_malformed(self):
        with pytest.raises(ModelFormatError):
            parse_mat(["MAT 2 2", "1 2", "3"])
        with pytest.raises(ModelFormatError):
            parse_mat(["MATRIX 1 1", "1"])
