"""Self-adjoint matrix tuples, word traces, eigenvalues, and samplers.

Volume element convention used throughout the package: on the real
vector space of k x k Hermitian matrices we use the inner product
<a, b> = Tr(ab) with the NON-normalized trace.  An orthonormal
coordinate system is

    x_ii                      (k diagonal entries),
    sqrt(2) * Re x_ij         (i < j),
    sqrt(2) * Im x_ij         (i < j),

k^2 real coordinates in total, and "lambda" always means Lebesgue
measure in these coordinates.  Tuples carry the product measure.
"""

import math
from functools import lru_cache

import numpy as np

from . import rng

_HERM_TOL = 0.0  # Hermiticity is exact by construction, not approximate
_JACOBI_SWEEP_CAP = 100
_JACOBI_OFF_TOL = 1e-12


class JacobiConvergenceError(RuntimeError):
    """Cyclic Jacobi failed to reach the off-diagonal tolerance."""


class SamplingStallError(RuntimeError):
    """Rejection sampler acceptance collapsed; use the Gaussian estimator."""


class SelfAdjointMatrix:
    """Immutable k x k Hermitian matrix.

    Hermiticity is enforced exactly at construction: entry (i, j) must
    equal the complex conjugate of entry (j, i) bit for bit.  Build
    from unstructured data with :meth:`hermitian_part`, which produces
    exactly Hermitian output in IEEE arithmetic.
    """

    __slots__ = ("array",)

    def __init__(self, array):
        arr = np.array(array, dtype=np.complex128)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr.view(np.float64))):
            raise ValueError("matrix entries must be finite")
        if not np.array_equal(arr, arr.conj().T):
            raise ValueError("matrix is not exactly Hermitian; use hermitian_part")
        arr.setflags(write=False)
        self.array = arr

    @classmethod
    def hermitian_part(cls, raw) -> "SelfAdjointMatrix":
        raw = np.asarray(raw, dtype=np.complex128)
        return cls((raw + raw.conj().T) / 2.0)

    @property
    def dim(self) -> int:
        return self.array.shape[0]

    def shifted(self, c: float) -> "SelfAdjointMatrix":
        """m + c * identity."""
        return SelfAdjointMatrix(self.array + c * np.eye(self.dim))

    def __repr__(self):
        return f"SelfAdjointMatrix(dim={self.dim})"


class MatrixTuple:
    """Tuple (x_1, ..., x_n) of Hermitian matrices of one dimension."""

    __slots__ = ("mats",)

    def __init__(self, mats):
        mats = tuple(mats)
        if not mats:
            raise ValueError("tuple must contain at least one matrix")
        for m in mats:
            if not isinstance(m, SelfAdjointMatrix):
                raise TypeError("tuple entries must be SelfAdjointMatrix")
        dims = {m.dim for m in mats}
        if len(dims) != 1:
            raise ValueError(f"mixed dimensions in tuple: {sorted(dims)}")
        self.mats = mats

    @classmethod
    def from_arrays(cls, arrays) -> "MatrixTuple":
        return cls([SelfAdjointMatrix(a) for a in arrays])

    @property
    def n(self) -> int:
        return len(self.mats)

    @property
    def dim(self) -> int:
        return self.mats[0].dim

    def stack(self) -> np.ndarray:
        """(n, k, k) array view of the tuple."""
        return np.stack([m.array for m in self.mats])

    def concat(self, other: "MatrixTuple") -> "MatrixTuple":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch in tuple concatenation")
        return MatrixTuple(self.mats + other.mats)

    def __iter__(self):
        return iter(self.mats)

    def __repr__(self):
        return f"MatrixTuple(n={self.n}, dim={self.dim})"


def normalized_trace(m: SelfAdjointMatrix) -> float:
    """tau(m) = Tr(m)/k.  The imaginary part must vanish to 1e-14."""
    t = np.trace(m.array) / m.dim
    if abs(t.imag) > 1e-14 * max(1.0, abs(t.real)):
        raise ValueError(f"trace has non-real part {t.imag:g}")
    return float(t.real)


def eval_word_trace(t: MatrixTuple, word) -> float:
    """tau of the product x_{i_1} ... x_{i_p}; indices are 1-based.

    The empty word is the unit: tau(1) = 1.
    """
    word = tuple(word)
    if not word:
        return 1.0
    for i in word:
        if not 1 <= i <= t.n:
            raise IndexError(f"variable index {i} outside 1..{t.n}")
    acc = t.mats[word[0] - 1].array
    for i in word[1:]:
        acc = acc @ t.mats[i - 1].array
    tr = np.trace(acc) / t.dim
    return float(tr.real)


@lru_cache(maxsize=64)
def sa_basis(k: int) -> np.ndarray:
    """(k^2, k, k) orthonormal Hermitian basis for <a,b> = Tr(ab).

    Order: diagonal units E_ii (i ascending), then for each i < j the
    pair (E_ij + E_ji)/sqrt(2), (iE_ij - iE_ji)/sqrt(2), row-major in
    (i, j).  Coordinates in this basis are exactly the lambda
    coordinates of the module docstring.
    """
    basis = np.zeros((k * k, k, k), dtype=np.complex128)
    pos = 0
    for i in range(k):
        basis[pos, i, i] = 1.0
        pos += 1
    inv = 1.0 / math.sqrt(2.0)
    for i in range(k):
        for j in range(i + 1, k):
            basis[pos, i, j] = inv
            basis[pos, j, i] = inv
            pos += 1
            basis[pos, i, j] = 1j * inv
            basis[pos, j, i] = -1j * inv
            pos += 1
    basis.setflags(write=False)
    return basis


_SQRT2 = math.sqrt(2.0)
_INV_SQRT2 = 1.0 / _SQRT2


def to_coords(h: np.ndarray) -> np.ndarray:
    """Lambda coordinates of a Hermitian matrix (or (..., k, k) stack).

    Layout matches :func:`sa_basis`: k diagonal entries, then
    (sqrt(2) Re x_ij, sqrt(2) Im x_ij) for i < j in row-major order.
    """
    h = np.asarray(h)
    k = h.shape[-1]
    lead = h.shape[:-2]
    iu, ju = np.triu_indices(k, 1)
    out = np.empty(lead + (k * k,))
    out[..., :k] = np.einsum("...ii->...i", h).real
    off = h[..., iu, ju]
    out[..., k::2] = _SQRT2 * off.real
    out[..., k + 1 :: 2] = _SQRT2 * off.imag
    return out


def from_coords(c: np.ndarray, k: int) -> np.ndarray:
    """Inverse of :func:`to_coords`; returns (..., k, k) exactly Hermitian."""
    c = np.asarray(c, dtype=np.float64)
    lead = c.shape[:-1]
    iu, ju = np.triu_indices(k, 1)
    out = np.zeros(lead + (k, k), dtype=np.complex128)
    vals = (c[..., k::2] + 1j * c[..., k + 1 :: 2]) * _INV_SQRT2
    out[..., iu, ju] = vals
    out[..., ju, iu] = np.conj(vals)
    out[..., np.arange(k), np.arange(k)] = c[..., :k]
    return out


# ---------------------------------------------------------------------------
# Cyclic Jacobi eigenvalues


def _jacobi_stack(stack: np.ndarray) -> np.ndarray:
    """Eigenvalues of a (m, k, k) Hermitian stack by cyclic Jacobi.

    Threshold sweeps: each sweep visits every (p, q) pair in row order
    and applies the phase-plus-rotation update wherever the off-diagonal
    entry exceeds a small per-sweep threshold; entries below it are
    rotated by angle zero (no-op).  Terminates when the off-diagonal
    Frobenius mass of every matrix drops below 1e-12 of its norm, and
    raises after 100 sweeps otherwise.
    """
    a = np.array(stack, dtype=np.complex128)
    if a.ndim == 2:
        a = a[None]
    m, k, _ = a.shape
    if k == 1:
        return a[:, 0, 0].real.copy()[:, None]
    norm = np.linalg.norm(a.reshape(m, -1), axis=1)
    goal = _JACOBI_OFF_TOL * np.maximum(norm, 1e-300)
    offmask = ~np.eye(k, dtype=bool)
    for _ in range(_JACOBI_SWEEP_CAP):
        # direct off-diagonal sum; subtracting diag from the total norm
        # would cancel catastrophically near convergence
        off = np.sqrt(np.einsum("mij,ij->m", np.abs(a) ** 2, offmask))
        if np.all(off <= goal):
            diag = np.einsum("mii->mi", a).real
            return np.sort(diag, axis=1)
        thresh = goal / (k * k)
        for p in range(k - 1):
            for q in range(p + 1, k):
                apq = a[:, p, q]
                absb = np.abs(apq)
                act = absb > thresh
                if not np.any(act):
                    continue
                safe = np.where(absb > 0, absb, 1.0)
                ph = np.where(absb > 0, apq / safe, 1.0)
                app = a[:, p, p].real
                aqq = a[:, q, q].real
                theta = (aqq - app) / (2.0 * safe)
                with np.errstate(divide="ignore", invalid="ignore"):
                    t = np.where(
                        theta >= 0,
                        1.0 / (theta + np.sqrt(theta * theta + 1.0)),
                        -1.0 / (-theta + np.sqrt(theta * theta + 1.0)),
                    )
                t = np.where(act, t, 0.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                phc = np.conj(ph)
                colp = a[:, :, p].copy()
                colq = a[:, :, q].copy()
                a[:, :, p] = c[:, None] * colp - (s * phc)[:, None] * colq
                a[:, :, q] = s[:, None] * colp + (c * phc)[:, None] * colq
                rowp = a[:, p, :].copy()
                rowq = a[:, q, :].copy()
                a[:, p, :] = c[:, None] * rowp - (s * ph)[:, None] * rowq
                a[:, q, :] = s[:, None] * rowp + (c * ph)[:, None] * rowq
                zeroed = np.where(act, 0.0, a[:, p, q])
                a[:, p, q] = zeroed
                a[:, q, p] = np.conj(zeroed)
                a[:, p, p] = a[:, p, p].real
                a[:, q, q] = a[:, q, q].real
    raise JacobiConvergenceError(
        f"off-diagonal mass above tolerance after {_JACOBI_SWEEP_CAP} sweeps"
    )


def eigenvalues(m: SelfAdjointMatrix) -> np.ndarray:
    """Ascending eigenvalues via cyclic Jacobi rotations."""
    return _jacobi_stack(m.array[None])[0]


def operator_norms(stack: np.ndarray) -> np.ndarray:
    """max |eigenvalue| for each matrix in a (m, k, k) Hermitian stack."""
    ev = _jacobi_stack(stack)
    return np.maximum(np.abs(ev[:, 0]), np.abs(ev[:, -1]))


def norms_leq(stack: np.ndarray, radius: float) -> np.ndarray:
    """Boolean mask: operator norm <= radius, per stack entry.

    Frobenius shortcut: ||x||_op <= ||x||_F, so entries whose Frobenius
    norm already fits need no eigenvalue solve; only the unresolved band
    goes through Jacobi.
    """
    m = stack.shape[0]
    frob = np.linalg.norm(stack.reshape(m, -1), axis=1)
    out = frob <= radius
    band = ~out
    if np.any(band):
        out[band] = operator_norms(stack[band]) <= radius
    return out


# ---------------------------------------------------------------------------
# Samplers


def gue_stack(k: int, count: int, variance: float, seed: int, start: int = 0) -> np.ndarray:
    """(count, k, k) Hermitian GUE stack with E[tau(x^2)] = variance.

    In lambda coordinates the law is iid N(0, variance/k) on all k^2
    coordinates (diagonal entries N(0, v/k), off-diagonal real and
    imaginary parts N(0, v/2k)).  Sample ``index`` consumes the counter
    block ``[B*(start+index), B*(start+index+1))`` with block size
    B = 2*ceil(k^2/2), so disjoint index ranges are independent.
    """
    if variance <= 0:
        raise ValueError("variance must be positive")
    block = 2 * ((k * k + 1) // 2)
    coords = np.empty((count, k * k))
    # one contiguous counter range; per-sample blocks are aligned inside it
    flat = rng.normals(seed, block * start, block * count).reshape(count, block)
    coords[:] = flat[:, : k * k]
    coords *= math.sqrt(variance / k)
    return from_coords(coords, k)


def sample_gue(k: int, variance: float, seed: int, index: int = 0) -> SelfAdjointMatrix:
    """Single GUE draw; ``index`` selects the counter block."""
    return SelfAdjointMatrix(gue_stack(k, 1, variance, seed, start=index)[0])


def ball_log_volume(k: int, radius: float) -> float:
    """log lambda-volume of the Hilbert-Schmidt ball Tr(x^2) <= k R^2.

    The HS ball of radius R*sqrt(k) is a Euclidean ball of that radius
    in the k^2 lambda coordinates: log V = (d/2) log pi - lgamma(d/2+1)
    + d log rho with d = k^2, rho = R sqrt(k).
    """
    d = k * k
    rho = radius * math.sqrt(k)
    return 0.5 * d * math.log(math.pi) - math.lgamma(0.5 * d + 1.0) + d * math.log(rho)


def ball_stack(k: int, count: int, radius: float, seed: int, start: int = 0) -> np.ndarray:
    """(count, k, k) stack uniform in the HS ball of radius R*sqrt(k).

    Gaussian direction times U^(1/d) radius in lambda coordinates.
    Sample ``index`` uses counter block size B = 2*ceil(k^2/2) + 2; the
    word at offset B-2 feeds the radius uniform (B-1 is spare).
    """
    d = k * k
    npairs = 2 * ((d + 1) // 2)
    block = npairs + 2
    rho = radius * math.sqrt(k)
    w = rng.words(seed, block * start, block * count).reshape(count, block)
    g = rng.normals_from_words(w[:, :npairs])[:, :d]
    u = rng.uniforms_from_words(w[:, npairs])
    r = np.linalg.norm(g, axis=1)
    r[r == 0.0] = 1.0  # measure-zero guard
    coords = g * (rho * u ** (1.0 / d) / r)[:, None]
    return from_coords(coords, k)


def sample_ball(k: int, n: int, radius: float, seed: int) -> MatrixTuple:
    """Uniform draw from {(x_1..x_n): each ||x_i||_op <= radius} under lambda.

    Rejection from the per-coordinate HS ball (which contains the
    operator-norm ball since Tr(x^2) <= k ||x||_op^2).  Raises
    SamplingStallError when the empirical acceptance rate drops below
    1e-6 over a 10^6-proposal window; at that point the Gaussian
    importance estimator is the tool to use.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    out = []
    tries = 0
    accepts = 0
    for i in range(n):
        sub = rng.derive(seed, 0x5BA11, i)
        idx = 0
        while True:
            cand = ball_stack(k, 64, radius, sub, start=idx)
            idx += 64
            ok = norms_leq(cand, radius)
            tries += 64
            hit = np.flatnonzero(ok)
            if hit.size:
                accepts += 1
                out.append(SelfAdjointMatrix(cand[hit[0]]))
                break
            if tries >= 10**6 and accepts / tries < 1e-6:
                raise SamplingStallError(
                    f"acceptance below 1e-6 after {tries} proposals at k={k}; "
                    "rejection from the HS ball is hopeless here, use the "
                    "Gaussian importance estimator"
                )
    return MatrixTuple(out)
