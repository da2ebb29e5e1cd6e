import numpy as np
import pytest

from sdtdl.hooi import eig_sym_topk, hooi, hosvd
from sdtdl.tensor import frobenius_norm, multi_product, multi_product_skip


def rand_orth(rng, n, k):
    q, r = np.linalg.qr(rng.standard_normal((n, k)))
    return q * np.sign(np.diag(r))


def recon_error(t, res, skip_last=False):
    if skip_last:
        rec = multi_product_skip(res.core, list(res.factors) + [None], skip=t.ndim - 1)
    else:
        rec = multi_product(res.core, res.factors)
    return frobenius_norm(t - rec)


class TestEigSymTopk:
    def test_diagonal(self):
        vals, vecs = eig_sym_topk(np.diag([3.0, 1.0, 2.0]), 2)
        assert np.allclose(vals, [3.0, 2.0])
        assert np.allclose(np.abs(vecs), [[1, 0], [0, 0], [0, 1]], atol=1e-12)
        # sign rule: largest-magnitude entry positive
        assert vecs[0, 0] > 0 and vecs[2, 1] > 0

    def test_identity(self):
        vals, vecs = eig_sym_topk(np.eye(4), 4)
        assert np.allclose(vals, np.ones(4))
        assert np.allclose(vecs.T @ vecs, np.eye(4), atol=1e-10)

    def test_random_residuals(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((6, 6))
        s = a + a.T
        vals, vecs = eig_sym_topk(s, 6)
        norm = np.linalg.norm(s)
        for i in range(6):
            assert np.linalg.norm(s @ vecs[:, i] - vals[i] * vecs[:, i]) <= 1e-8 * norm
        assert np.all(np.diff(vals) <= 1e-12)

    def test_rejects_nonsymmetric(self):
        with pytest.raises(ValueError, match="not symmetric"):
            eig_sym_topk(np.array([[0.0, 1.0], [0.0, 0.0]]), 1)

    def test_k_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            eig_sym_topk(np.eye(3), 4)
        with pytest.raises(ValueError, match="out of range"):
            eig_sym_topk(np.eye(3), 0)


class TestHosvd:
    def test_full_rank_exact(self):
        rng = np.random.default_rng(1)
        t = rng.standard_normal((3, 4, 5))
        res = hosvd(t, t.shape)
        assert recon_error(t, res) <= 1e-10

    def test_rank_one_exact(self):
        rng = np.random.default_rng(2)
        vecs = [rng.standard_normal(d) for d in (3, 4, 5)]
        t = np.einsum("i,j,k->ijk", *vecs)
        res = hosvd(t, (1, 1, 1))
        assert recon_error(t, res) <= 1e-10 * frobenius_norm(t)

    def test_beats_random_factors(self):
        rng = np.random.default_rng(3)
        t = rng.standard_normal((4, 4, 4))
        res = hosvd(t, (2, 2, 2))
        err = recon_error(t, res)
        for _ in range(100):
            ws = [rand_orth(rng, 4, 2) for _ in range(3)]
            rand_err = frobenius_norm(t - multi_product(t, [w @ w.T for w in ws]))
            assert err <= rand_err + 1e-10

    def test_factors_orthonormal(self):
        rng = np.random.default_rng(4)
        res = hosvd(rng.standard_normal((5, 6, 4)), (2, 3, 2))
        for u in res.factors:
            assert np.max(np.abs(u.T @ u - np.eye(u.shape[1]))) <= 1e-8

    def test_skip_last(self):
        rng = np.random.default_rng(5)
        t = rng.standard_normal((4, 5, 7))
        res = hosvd(t, (2, 2), skip_last=True)
        assert len(res.factors) == 2
        assert res.core.shape == (2, 2, 7)


class TestHooi:
    def test_full_rank_one_sweep(self):
        rng = np.random.default_rng(6)
        t = rng.standard_normal((3, 4, 5))
        res = hooi(t, t.shape, max_sweeps=1)
        assert recon_error(t, res) <= 1e-10

    def test_refines_hosvd(self):
        rng = np.random.default_rng(7)
        for seed in range(10):
            t = np.random.default_rng(seed).standard_normal((4, 5, 6))
            base = recon_error(t, hosvd(t, (2, 2, 2)))
            refined = recon_error(t, hooi(t, (2, 2, 2)))
            assert refined <= base + 1e-10

    def test_fit_history_monotone(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            t = rng.standard_normal((4, 4, 4))
            res = hooi(t, (2, 2, 2), max_sweeps=10, tol=1e-14)
            hist = np.array(res.fit_history)
            assert np.all(np.diff(hist) >= -1e-10)

    def test_long_run_self_oracle(self):
        rng = np.random.default_rng(8)
        t = rng.standard_normal((3, 3, 3))
        short = hooi(t, (2, 2, 2))
        long = hooi(t, (2, 2, 2), max_sweeps=500, tol=1e-15)
        assert abs(short.fit_history[-1] - long.fit_history[-1]) <= 1e-6 * max(
            1.0, long.fit_history[-1]
        )

    def test_pythagoras(self):
        rng = np.random.default_rng(9)
        t = rng.standard_normal((4, 5, 6))
        res = hooi(t, (2, 3, 2))
        total = frobenius_norm(t) ** 2
        core = frobenius_norm(res.core) ** 2
        err = recon_error(t, res) ** 2
        assert abs(total - (core + err)) <= 1e-8 * total

    def test_deterministic(self):
        rng = np.random.default_rng(10)
        t = rng.standard_normal((4, 4, 4))
        r1 = hooi(t, (2, 2, 2))
        r2 = hooi(t, (2, 2, 2))
        assert np.array_equal(r1.core, r2.core)
        for a, b in zip(r1.factors, r2.factors):
            assert np.array_equal(a, b)

    def test_warm_start(self):
        rng = np.random.default_rng(11)
        t = rng.standard_normal((4, 4, 4))
        first = hooi(t, (2, 2, 2))
        warmed = hooi(t, (2, 2, 2), init_factors=first.factors)
        assert warmed.fit_history[-1] >= first.fit_history[-1] - 1e-10

    def test_skip_last_preserves_sample_mode(self):
        rng = np.random.default_rng(12)
        t = rng.standard_normal((4, 5, 9))
        res = hooi(t, (2, 2), skip_last=True)
        assert res.core.shape == (2, 2, 9)
        for u in res.factors:
            assert np.max(np.abs(u.T @ u - np.eye(u.shape[1]))) <= 1e-8

    def test_bad_args(self):
        t = np.zeros((3, 3))
        with pytest.raises(ValueError, match="ranks"):
            hooi(t, (2,))
        with pytest.raises(ValueError, match="out of range"):
            hooi(t, (4, 2))
        with pytest.raises(ValueError, match="max_sweeps"):
            hooi(t, (2, 2), max_sweeps=0)
        with pytest.raises(ValueError, match="tol"):
            hooi(t, (2, 2), tol=0.0)
