"""Matrix-layer tests: exact Hermiticity, word traces, Jacobi, samplers."""

import math

import numpy as np
import pytest

from freelab import matcore, rng
from freelab.matcore import MatrixTuple, SelfAdjointMatrix


def _rand_herm(k, seed):
    g = rng.normals(seed, 0, 2 * k * k)
    raw = g[: k * k].reshape(k, k) + 1j * g[k * k :].reshape(k, k)
    return SelfAdjointMatrix.hermitian_part(raw)


def test_constructor_rejects_non_hermitian():
    with pytest.raises(ValueError):
        SelfAdjointMatrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        SelfAdjointMatrix(np.array([[0.0, np.inf], [np.inf, 0.0]]))


def test_hermitian_part_is_exact():
    for s in range(20):
        m = _rand_herm(5, s)
        assert np.array_equal(m.array, m.array.conj().T)


def test_tuple_rejects_mixed_dims():
    with pytest.raises(ValueError):
        MatrixTuple([_rand_herm(2, 0), _rand_herm(3, 1)])


def test_trace_of_unit_is_one():
    for k in (1, 2, 7):
        assert matcore.normalized_trace(SelfAdjointMatrix(np.eye(k))) == 1.0


def test_empty_word_is_unit():
    t = MatrixTuple([_rand_herm(3, 5)])
    assert matcore.eval_word_trace(t, ()) == 1.0


def test_word_trace_against_direct_product():
    # oracle: explicit matrix product and trace, k=2 complex entries
    a = np.array([[1.0, 2.0 - 1.0j], [2.0 + 1.0j, -0.5]])
    b = np.array([[0.25, 0.5j], [-0.5j, 3.0]])
    t = MatrixTuple([SelfAdjointMatrix(a), SelfAdjointMatrix(b)])
    word = (1, 2, 2, 1)
    want = np.trace(a @ b @ b @ a).real / 2.0
    assert abs(matcore.eval_word_trace(t, word) - want) < 1e-13


def test_word_trace_cyclic_invariance():
    t = MatrixTuple([_rand_herm(4, 11), _rand_herm(4, 12), _rand_herm(4, 13)])
    w = (1, 3, 2, 2, 1)
    vals = [
        matcore.eval_word_trace(t, w[i:] + w[:i]) for i in range(len(w))
    ]
    assert max(vals) - min(vals) < 1e-12


def test_word_trace_index_bounds():
    t = MatrixTuple([_rand_herm(2, 1)])
    with pytest.raises(IndexError):
        matcore.eval_word_trace(t, (0,))
    with pytest.raises(IndexError):
        matcore.eval_word_trace(t, (2,))


def test_coords_roundtrip_and_parseval():
    for s in range(5):
        m = _rand_herm(6, 100 + s).array
        c = matcore.to_coords(m)
        assert np.allclose(matcore.from_coords(c, 6), m, atol=1e-14)
        assert abs(np.sum(c * c) - np.trace(m @ m).real) < 1e-10


def test_eigenvalues_satisfy_char_poly():
    # oracle: |det(m - lam I)| relative to the determinant scale
    for s in range(10):
        m = _rand_herm(3, 200 + s)
        ev = matcore.eigenvalues(m)
        assert ev.shape == (3,)
        assert (np.diff(ev) >= 0).all()
        scale = np.linalg.norm(m.array) ** 3 + 1.0
        for lam in ev:
            d = np.linalg.det(m.array - lam * np.eye(3))
            assert abs(d) / scale < 1e-9


def test_eigenvalue_shift_identity():
    m = _rand_herm(5, 300)
    ev = matcore.eigenvalues(m)
    ev_shift = matcore.eigenvalues(m.shifted(2.5))
    assert np.allclose(ev_shift, ev + 2.5, atol=1e-10)


def test_eigenvalues_diagonal_exact():
    d = np.diag([3.0, -1.0, 0.5])
    assert np.allclose(matcore.eigenvalues(SelfAdjointMatrix(d)), [-1.0, 0.5, 3.0])


def test_one_by_one_shapes():
    m = SelfAdjointMatrix(np.array([[2.5]], dtype=complex))
    assert matcore.eigenvalues(m).shape == (1,)
    stack = np.array([[[1.0]], [[-3.0]]], dtype=complex)
    assert np.allclose(matcore.operator_norms(stack), [1.0, 3.0])
    assert list(matcore.norms_leq(stack, 2.0)) == [True, False]


def test_jacobi_matches_lapack_oracle():
    for k in (2, 5, 16):
        m = _rand_herm(k, 400 + k)
        assert np.allclose(
            matcore.eigenvalues(m), np.linalg.eigvalsh(m.array), atol=1e-10
        )


def test_gue_second_moment_mean():
    # mean of tau(x^2) over many seeds; E = variance, batched draws
    k, n = 64, 10000
    stack = matcore.gue_stack(k, n, 1.0, seed=77)
    taus = np.einsum("mij,mji->m", stack, stack).real / k
    se = taus.std(ddof=1) / math.sqrt(n)
    assert abs(taus.mean() - 1.0) < 3 * se


def test_gue_determinism_and_block_alignment():
    a = matcore.gue_stack(4, 8, 2.0, seed=5)
    b = matcore.gue_stack(4, 8, 2.0, seed=5)
    assert (a == b).all()
    # batch draw equals the per-index draws bit for bit
    singles = np.stack(
        [matcore.sample_gue(4, 2.0, seed=5, index=i).array for i in range(8)]
    )
    assert (a == singles).all()


def test_gue_spectrum_matches_semicircle():
    # KS distance between the ESD at k=256 and the semicircle CDF
    k = 256
    x = matcore.gue_stack(k, 1, 1.0, seed=31415)[0]
    ev = np.sort(matcore._jacobi_stack(x[None])[0])

    def semicirc_cdf(t):
        t = np.clip(t / 2.0, -1.0, 1.0)
        return 0.5 + (t * np.sqrt(1 - t * t) + np.arcsin(t)) / np.pi

    grid_cdf = semicirc_cdf(ev)
    emp_hi = np.arange(1, k + 1) / k
    emp_lo = np.arange(0, k) / k
    ks = max(np.abs(emp_hi - grid_cdf).max(), np.abs(emp_lo - grid_cdf).max())
    assert ks < 0.05


def test_ball_sampler_norms_and_determinism():
    t = matcore.sample_ball(2, 3, 1.5, seed=9)
    assert t.n == 3 and t.dim == 2
    for m in t:
        assert matcore.eigenvalues(m)[-1] <= 1.5 + 1e-12
        assert matcore.eigenvalues(m)[0] >= -1.5 - 1e-12
    t2 = matcore.sample_ball(2, 3, 1.5, seed=9)
    assert all((a.array == b.array).all() for a, b in zip(t, t2))


def test_ball_sampler_k1_is_uniform_interval():
    xs = np.array(
        [matcore.sample_ball(1, 1, 2.0, seed=s).mats[0].array[0, 0].real
         for s in range(400)]
    )
    assert (np.abs(xs) <= 2.0).all()
    # mean 0, var R^2/3 for U(-2,2)
    assert abs(xs.mean()) < 3 * 2.0 / math.sqrt(3 * 400)
    assert abs(xs.var() - 4.0 / 3.0) < 0.35


def test_ball_sampler_op_ball_ratio():
    # P(||x||_op <= R/2) for draws uniform in the op-ball of radius R
    # equals vol(R/2-ball)/vol(R-ball).  Oracle: independent rejection
    # count from the HS ball using closed-form 2x2 eigenvalues.
    k, R = 2, 1.0
    cand = matcore.ball_stack(k, 10**6, R, seed=606)
    tr = np.einsum("mii->m", cand).real
    # eigenvalues of a 2x2 Hermitian: tr/2 +- sqrt((tr/2)^2 - det)
    det = (cand[:, 0, 0] * cand[:, 1, 1] - cand[:, 0, 1] * cand[:, 1, 0]).real
    half = tr / 2.0
    disc = np.sqrt(np.maximum(half * half - det, 0.0))
    opn = np.maximum(np.abs(half + disc), np.abs(half - disc))
    n_R = int((opn <= R).sum())
    n_half = int((opn <= R / 2).sum())
    ratio_oracle = n_half / n_R
    se = math.sqrt(ratio_oracle * (1 - ratio_oracle) / n_R)

    draws = matcore.ball_stack(k, 4096, R, seed=707)
    keep = matcore.norms_leq(draws, R)
    inner = matcore.norms_leq(draws[keep], R / 2)
    p_hat = inner.mean()
    se_hat = math.sqrt(p_hat * (1 - p_hat) / keep.sum())
    assert abs(p_hat - ratio_oracle) < 3 * math.hypot(se, se_hat)


def test_ball_log_volume_closed_forms():
    # k=1: interval of length 2R; d=1 ball formula
    assert abs(matcore.ball_log_volume(1, 2.0) - math.log(4.0)) < 1e-12
    # k=2: 4-ball of radius R*sqrt(2): V = pi^2 rho^4 / 2
    want = 2 * math.log(math.pi) + 4 * math.log(1.5 * math.sqrt(2)) - math.log(2)
    assert abs(matcore.ball_log_volume(2, 1.5) - want) < 1e-12
