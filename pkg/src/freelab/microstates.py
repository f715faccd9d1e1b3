"""Microstate sets and Monte Carlo volume estimation.

A tracial specification assigns target trace values to words in n
self-adjoint variables X and m reference variables Y.  A tuple of k x k
Hermitian matrices is a microstate when every matrix has operator norm
at most R and every word of length 1..l traces within eps of its
target.  The relative variant fixes a Y-tuple and measures the volume
of matching X-tuples; the per-k entropy value is

    (1/k^2) log lambda(Gamma) + (n/2) log k

with lambda the Lebesgue measure induced by the non-normalized trace
inner product (matcore's lambda coordinates), and the reported
extrapolation is max over k of (value - stderr).

Targets come from an explicit table (tracial symmetry enforced: values
constant on cyclic rotations and reversals, words canonicalized by
minimal rotation) or from a generator that can emit targets to any
length: a free family of scalar laws (moments via non-crossing cumulant
sums) or an explicit matrix model.

Estimators: ball rejection (uniform in the Hilbert-Schmidt ball that
contains the operator-norm ball) and Gaussian importance sampling with
the reference density matched to the target second moments.  Zero
acceptances yield -inf with a recorded one-sided upper bound.  Sampling
is chunked over fixed index ranges of the counter-based generator and
reduced in chunk order, so results are bit-identical for any thread
count.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations, product
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import matcore, rng, spectra

_CHUNK = 4096
_TARGET_TOL = 1e-12


class SpecTooShallow(ValueError):
    """A membership test needed a word the specification cannot price."""


def canonical_word(word) -> Tuple[int, ...]:
    """Minimal cyclic rotation over the word and its reversal."""
    w = tuple(int(i) for i in word)
    if not w:
        return w
    best = w
    for base in (w, w[::-1]):
        for s in range(len(base)):
            rot = base[s:] + base[:s]
            if rot < best:
                best = rot
    return best


# --- free-family moments ----------------------------------------------------


@lru_cache(maxsize=None)
def _nc_partitions(p: int):
    """Non-crossing partitions of {0..p-1}, each a tuple of sorted blocks."""
    if p == 0:
        return ((),)
    out = []
    rest = tuple(range(1, p))
    for r in range(p):
        for extra in combinations(rest, r):
            block = (0,) + extra
            bounds = block + (p,)
            gap_parts = []
            for a, b in zip(bounds, bounds[1:]):
                inner = _nc_partitions(b - a - 1)
                gap_parts.append(
                    tuple(
                        tuple(tuple(i + a + 1 for i in bl) for bl in part)
                        for part in inner
                    )
                )
            for combo in product(*gap_parts):
                blocks = (block,) + tuple(bl for part in combo for bl in part)
                out.append(blocks)
    return tuple(out)


def _cumulants(moments: List[float]) -> List[float]:
    """Free cumulants kappa[1..P] from moments m[1..P] (index 0 unused)."""
    P = len(moments) - 1
    kappa = [0.0] * (P + 1)
    for p in range(1, P + 1):
        rest = 0.0
        for part in _nc_partitions(p):
            if len(part) == 1:
                continue
            v = 1.0
            for bl in part:
                v *= kappa[len(bl)]
            rest += v
        kappa[p] = moments[p] - rest
    return kappa


class FreeModel:
    """Free family of scalar laws; letters may share a factor (aliasing)."""

    kind = "free"

    def __init__(self, factors: Sequence[spectra.SpectralMeasure], assign: Sequence[int]):
        self.factors = list(factors)
        self.assign = tuple(int(a) for a in assign)
        if not self.factors:
            raise ValueError("free model needs at least one factor")
        if any(a < 0 or a >= len(self.factors) for a in self.assign):
            raise ValueError("factor assignment out of range")
        self._kappa: Dict[int, List[float]] = {}
        self._cache: Dict[Tuple[int, ...], float] = {}

    def _cum(self, fi: int, p: int) -> List[float]:
        cur = self._kappa.get(fi)
        if cur is None or len(cur) <= p:
            mom = [0.0] + [self.factors[fi].moment(q) for q in range(1, p + 1)]
            cur = _cumulants(mom)
            self._kappa[fi] = cur
        return cur

    def word_moment(self, word: Tuple[int, ...]) -> float:
        p = len(word)
        if p == 0:
            return 1.0
        if word in self._cache:
            return self._cache[word]
        letters = [self.assign[i - 1] for i in word]
        for fi in set(letters):
            self._cum(fi, p)
        total = 0.0
        for part in _nc_partitions(p):
            v = 1.0
            for bl in part:
                fi = letters[bl[0]]
                if any(letters[i] != fi for i in bl[1:]):
                    v = 0.0
                    break
                v *= self._kappa[fi][len(bl)]
                if v == 0.0:
                    break
            total += v
        self._cache[word] = total
        return total

    def restrict(self, letters: Sequence[int]) -> "FreeModel":
        return FreeModel(self.factors, [self.assign[i - 1] for i in letters])


class MatrixModel:
    """Targets read off a fixed tuple of Hermitian matrices."""

    kind = "matrix"

    def __init__(self, mats: Sequence[np.ndarray]):
        self.tuple = matcore.MatrixTuple(
            [matcore.SelfAdjointMatrix.hermitian_part(np.asarray(a)) for a in mats]
        )
        self._cache: Dict[Tuple[int, ...], float] = {}

    def word_moment(self, word: Tuple[int, ...]) -> float:
        if not word:
            return 1.0
        if word not in self._cache:
            self._cache[word] = matcore.eval_word_trace(self.tuple, word)
        return self._cache[word]

    def restrict(self, letters: Sequence[int]) -> "MatrixModel":
        return MatrixModel([self.tuple.mats[i - 1].array for i in letters])


class TracialSpec:
    """Target word traces for n X-letters followed by m Y-letters."""

    def __init__(self, n: int, m: int, l_max: int, *, targets=None, generator=None):
        self.n = int(n)
        self.m = int(m)
        self.l_max = int(l_max)
        if self.n < 0 or self.m < 0 or self.n + self.m < 1:
            raise ValueError("need at least one variable")
        if self.l_max < 0:
            raise ValueError("l_max must be >= 0")
        if (targets is None) == (generator is None):
            raise ValueError("provide exactly one of targets or generator")
        self.generator = generator
        self.targets: Dict[Tuple[int, ...], float] = {}
        if targets is not None:
            letters = self.n + self.m
            for word, value in targets.items():
                w = tuple(int(i) for i in word)
                if any(i < 1 or i > letters for i in w):
                    raise ValueError(f"letter out of range in word {w}")
                if len(w) > self.l_max:
                    raise ValueError(f"word {w} longer than l_max={self.l_max}")
                v = float(value)
                if not w:
                    if abs(v - 1.0) > _TARGET_TOL:
                        raise ValueError("empty word must target 1")
                    continue
                c = canonical_word(w)
                if c in self.targets and abs(self.targets[c] - v) > _TARGET_TOL:
                    raise ValueError(
                        f"tracial symmetry conflict at word {w}: "
                        f"{self.targets[c]} vs {v}"
                    )
                self.targets[c] = v
        self._words_cache: Dict[int, Tuple[Tuple[int, ...], ...]] = {}

    # factories -----------------------------------------------------------

    @classmethod
    def from_targets(cls, n, m, l_max, targets) -> "TracialSpec":
        return cls(n, m, l_max, targets=targets)

    @classmethod
    def free_model(cls, n, m, l_max, factors, assign) -> "TracialSpec":
        if len(assign) != n + m:
            raise ValueError("need one factor assignment per letter")
        return cls(n, m, l_max, generator=FreeModel(factors, assign))

    @classmethod
    def matrix_model(cls, n, m, l_max, mats) -> "TracialSpec":
        if len(mats) != n + m:
            raise ValueError("need one model matrix per letter")
        return cls(n, m, l_max, generator=MatrixModel(mats))

    # lookups ---------------------------------------------------------------

    @property
    def letters(self) -> int:
        return self.n + self.m

    def target(self, word) -> float:
        w = canonical_word(word)
        if not w:
            return 1.0
        if self.generator is not None:
            return self.generator.word_moment(w)
        if len(w) > self.l_max:
            raise SpecTooShallow(
                f"word of length {len(w)} exceeds l_max={self.l_max}"
            )
        if w not in self.targets:
            raise SpecTooShallow(f"no target for word {w}")
        return self.targets[w]

    def has_target(self, word) -> bool:
        w = canonical_word(word)
        if self.generator is not None:
            return True
        return not w or w in self.targets

    def required_words(self, l: int) -> Tuple[Tuple[int, ...], ...]:
        """Canonical representatives of all words of length 1..l."""
        if l not in self._words_cache:
            seen = set()
            for length in range(1, l + 1):
                for w in product(range(1, self.letters + 1), repeat=length):
                    seen.add(canonical_word(w))
            self._words_cache[l] = tuple(sorted(seen, key=lambda w: (len(w), w)))
        return self._words_cache[l]

    # marginals ---------------------------------------------------------------

    def marginal(self, letters: Sequence[int]) -> "TracialSpec":
        """Sub-specification on the given 1-based letters, all as X."""
        letters = tuple(int(i) for i in letters)
        if any(i < 1 or i > self.letters for i in letters):
            raise ValueError("marginal letter out of range")
        if self.generator is not None:
            return TracialSpec(
                len(letters), 0, self.l_max, generator=self.generator.restrict(letters)
            )
        new: Dict[Tuple[int, ...], float] = {}
        for length in range(1, self.l_max + 1):
            for w in product(range(1, len(letters) + 1), repeat=length):
                old = tuple(letters[i - 1] for i in w)
                c = canonical_word(old)
                if c in self.targets:
                    new[canonical_word(w)] = self.targets[c]
        return TracialSpec(len(letters), 0, self.l_max, targets=new)

    def x_marginal(self) -> "TracialSpec":
        return self.marginal(range(1, self.n + 1))

    def y_marginal(self) -> "TracialSpec":
        if self.m == 0:
            raise ValueError("specification has no Y letters")
        return self.marginal(range(self.n + 1, self.n + self.m + 1))

    def all_as_x(self) -> "TracialSpec":
        """Same constraints with every letter treated as an X variable."""
        if self.m == 0:
            return self
        return self.marginal(range(1, self.letters + 1))

    # serialization ------------------------------------------------------------

    def to_dict(self) -> dict:
        d = {"n": self.n, "m": self.m, "l_max": self.l_max}
        if self.generator is None:
            d["targets"] = [
                {"word": list(w), "value": self.targets[w]}
                for w in sorted(self.targets, key=lambda w: (len(w), w))
            ]
        elif isinstance(self.generator, FreeModel):
            d["generator"] = {
                "kind": "free",
                "factors": [spectra.measure_to_dict(f) for f in self.generator.factors],
                "assign": list(self.generator.assign),
            }
        else:
            d["generator"] = {
                "kind": "matrix",
                "matrices": [
                    [[[float(z.real), float(z.imag)] for z in row] for row in m.array]
                    for m in self.generator.tuple.mats
                ],
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TracialSpec":
        n, m, l_max = int(d["n"]), int(d["m"]), int(d["l_max"])
        if "generator" in d:
            g = d["generator"]
            if g.get("kind") == "free":
                factors = [spectra.measure_from_dict(f) for f in g["factors"]]
                return cls.free_model(n, m, l_max, factors, g["assign"])
            if g.get("kind") == "matrix":
                mats = [
                    np.array([[complex(re, im) for re, im in row] for row in mat])
                    for mat in g["matrices"]
                ]
                return cls.matrix_model(n, m, l_max, mats)
            raise ValueError(f"unknown generator kind {g.get('kind')!r}")
        targets = {tuple(e["word"]): float(e["value"]) for e in d.get("targets", [])}
        return cls.from_targets(n, m, l_max, targets)

    def save(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path: str) -> "TracialSpec":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def suggested_radius(spec: TracialSpec) -> float:
    """Default R: 2 + 2 max|support| for bounded-support models, else 4."""
    gen = spec.generator
    if isinstance(gen, MatrixModel):
        stack = gen.tuple.stack()
        return 2.0 + 2.0 * float(matcore.operator_norms(stack).max())
    if isinstance(gen, FreeModel):
        bound = 0.0
        has_bound = False
        for f in gen.factors:
            if f.kind == "atomic":
                bound = max(bound, max(abs(a[0]) for a in f.atoms))
                has_bound = True
            elif f.kind in ("uniform", "grid"):
                bound = max(bound, abs(f.support[0]), abs(f.support[1]))
                has_bound = True
        if has_bound:
            return 2.0 + 2.0 * bound
    return 4.0


# --- membership ---------------------------------------------------------------


@dataclass(frozen=True)
class MicrostateParams:
    k: int
    l: int
    eps: float
    radius: float

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.l < 0:
            raise ValueError("l must be >= 0")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.radius <= 0:
            raise ValueError("radius must be positive")


def _spec_words(spec: TracialSpec, l: int):
    if l > spec.l_max and spec.generator is None:
        raise SpecTooShallow(f"l={l} exceeds the table depth l_max={spec.l_max}")
    words = spec.required_words(l)
    return words, np.array([spec.target(w) for w in words])


def _word_trace_batch(words, targets, xstack, n_x, yarrs, eps):
    """Mask over samples: every word traces within eps of target."""
    count, _, k, _ = xstack.shape
    ok = np.ones(count, dtype=bool)
    for w, tgt in zip(words, targets):
        cur = None
        for letter in w:
            if letter <= n_x:
                a = xstack[:, letter - 1]
            else:
                a = yarrs[letter - 1 - n_x][None]
            cur = a if cur is None else cur @ a
        tr = np.einsum("...ii->...", cur) / k
        dev = np.abs(tr - tgt)
        if dev.shape == ():
            if not dev < eps:
                ok[:] = False
        else:
            ok &= dev < eps
        if not ok.any():
            break
    return ok


def _member_mask(xstack, spec, p, yarrs=None, n_x=None):
    n_x = xstack.shape[1] if n_x is None else n_x
    count, _, k, _ = xstack.shape
    flat = xstack.reshape(count * xstack.shape[1], k, k)
    mask = matcore.norms_leq(flat, p.radius).reshape(count, -1).all(axis=1)
    if yarrs is not None and len(yarrs):
        if not matcore.norms_leq(np.asarray(yarrs), p.radius).all():
            return np.zeros(count, dtype=bool)
    if p.l == 0 or not mask.any():
        return mask
    words, targets = _spec_words(spec, p.l)
    sub = xstack[mask]
    mask[mask] = _word_trace_batch(words, targets, sub, n_x, yarrs, p.eps)
    return mask


def is_microstate(t: matcore.MatrixTuple, spec: TracialSpec, p: MicrostateParams) -> bool:
    """Norms <= R and every word of length 1..l within eps of target."""
    if t.n != spec.letters:
        raise ValueError(f"tuple has {t.n} matrices, spec names {spec.letters}")
    if t.dim != p.k:
        raise ValueError(f"tuple dimension {t.dim} != k={p.k}")
    stack = t.stack()[None]
    return bool(_member_mask(stack, spec, p, n_x=spec.letters)[0])


def is_relative_microstate(
    x: matcore.MatrixTuple, y: matcore.MatrixTuple, spec: TracialSpec, p: MicrostateParams
) -> bool:
    """Joint membership of the concatenated tuple (x then y)."""
    if x.n != spec.n or y.n != spec.m:
        raise ValueError("tuple arities do not match the specification")
    return is_microstate(x.concat(y), spec, p)


# --- volume estimators ----------------------------------------------------------


@dataclass
class VolumeEstimate:
    log_volume: float
    stderr_log: float
    samples: int
    method: str
    accepted: int
    upper_bound: Optional[float] = None


def _chunk_starts(nsamples: int):
    return range(0, nsamples, _CHUNK)


def _run_chunks(work, starts, threads: int):
    if threads <= 1:
        return [work(c) for c in starts]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(work, starts))


def _ball_volume(spec, p, yarr, nsamples, seed, threads) -> VolumeEstimate:
    n, k = spec.n, p.k
    # the second-moment window already confines the set to the HS ball of
    # radius sqrt(k (m2 + eps)), so shrink the sampling region to match
    radii = []
    for i in range(1, n + 1):
        r = p.radius
        if p.l >= 2 and spec.has_target((i, i)):
            r = min(r, math.sqrt(max(spec.target((i, i)), 0.0) + p.eps))
        radii.append(r)
    log_region = sum(matcore.ball_log_volume(k, r) for r in radii)

    def work(c0):
        count = min(_CHUNK, nsamples - c0)
        stack = np.stack(
            [
                matcore.ball_stack(k, count, radii[i], rng.derive(seed, 0xBA11, i), start=c0)
                for i in range(n)
            ],
            axis=1,
        )
        return int(_member_mask(stack, spec, p, yarrs=yarr, n_x=n).sum())

    accepted = sum(_run_chunks(work, _chunk_starts(nsamples), threads))
    if accepted == 0:
        return VolumeEstimate(
            float("-inf"),
            float("inf"),
            nsamples,
            "ball-rejection",
            0,
            upper_bound=log_region - math.log(nsamples),
        )
    phat = accepted / nsamples
    stderr = math.sqrt((1.0 - phat) / (phat * nsamples))
    return VolumeEstimate(
        log_region + math.log(phat), stderr, nsamples, "ball-rejection", accepted
    )


def _importance_volume(spec, p, yarr, nsamples, seed, threads) -> VolumeEstimate:
    n, k = spec.n, p.k
    variances = []
    for i in range(1, n + 1):
        v = spec.target((i, i)) if spec.has_target((i, i)) else 1.0
        variances.append(max(float(v), 0.5 * p.eps))
    log_norm = sum(0.5 * k * k * math.log(2.0 * math.pi * v / k) for v in variances)

    def work(c0):
        count = min(_CHUNK, nsamples - c0)
        stack = np.stack(
            [
                matcore.gue_stack(k, count, variances[i], rng.derive(seed, 0x6A55, i), start=c0)
                for i in range(n)
            ],
            axis=1,
        )
        mask = _member_mask(stack, spec, p, yarrs=yarr, n_x=n)
        if not mask.any():
            return (0, float("-inf"), 0.0, 0.0)
        sub = stack[mask]
        logw = np.full(sub.shape[0], log_norm)
        for i in range(n):
            frob2 = np.sum(np.abs(sub[:, i]) ** 2, axis=(1, 2))
            logw += k * frob2 / (2.0 * variances[i])
        mx = float(logw.max())
        return (
            int(mask.sum()),
            mx,
            float(np.sum(np.exp(logw - mx))),
            float(np.sum(np.exp(2.0 * (logw - mx)))),
        )

    acc, mx, s1, s2 = 0, float("-inf"), 0.0, 0.0
    for ca, cm, c1, c2 in _run_chunks(work, _chunk_starts(nsamples), threads):
        if ca == 0:
            continue
        m2 = max(mx, cm)
        r_old = math.exp(mx - m2) if acc else 0.0
        r_new = math.exp(cm - m2)
        s1 = s1 * r_old + c1 * r_new
        s2 = s2 * r_old**2 + c2 * r_new**2
        mx = m2
        acc += ca
    if acc == 0:
        bound = n * matcore.ball_log_volume(k, p.radius) - math.log(nsamples)
        return VolumeEstimate(
            float("-inf"), float("inf"), nsamples, "gaussian-importance", 0, upper_bound=bound
        )
    log_volume = mx + math.log(s1) - math.log(nsamples)
    rel_var = max(nsamples * s2 / (s1 * s1) - 1.0, 0.0)
    stderr = math.sqrt(rel_var / nsamples)
    return VolumeEstimate(log_volume, stderr, nsamples, "gaussian-importance", acc)


def estimate_volume(
    spec: TracialSpec,
    p: MicrostateParams,
    sampler: str = "auto",
    y: Optional[matcore.MatrixTuple] = None,
    nsamples: int = 100_000,
    seed: int = 0,
    threads: int = 1,
) -> VolumeEstimate:
    """Monte Carlo estimate of log lambda(Gamma) at fixed k.

    With a fixed ``y`` the X-section of the joint microstate set is
    measured; the specification must then carry m = y.n Y-letters.
    """
    if nsamples < 100:
        raise ValueError("need at least 100 samples")
    if y is None:
        if spec.m != 0:
            raise ValueError("spec has Y letters: pass the fixed y tuple")
        yarr = None
    else:
        if y.n != spec.m or spec.m == 0:
            raise ValueError("y arity does not match the specification")
        if y.dim != p.k:
            raise ValueError("y dimension != k")
        yarr = y.stack()
    method = sampler
    if sampler == "auto":
        method = "ball" if p.k <= 2 else "importance"
    if method == "ball":
        return _ball_volume(spec, p, yarr, nsamples, seed, threads)
    if method == "importance":
        return _importance_volume(spec, p, yarr, nsamples, seed, threads)
    raise ValueError(f"unknown sampler {sampler!r}")


# --- chi estimators ---------------------------------------------------------------


@dataclass
class ChiPoint:
    k: int
    log_volume: float
    value: float
    stderr: float


@dataclass
class ChiEstimate:
    per_k: List[ChiPoint]
    extrapolated: float
    y_used: str
    n: int
    l: int
    eps: float
    radius: float
    samples_per_k: int
    method: str

    def to_dict(self) -> dict:
        return {
            "per_k": [
                {
                    "k": pt.k,
                    "log_volume": pt.log_volume,
                    "value": pt.value,
                    "stderr": pt.stderr,
                }
                for pt in self.per_k
            ],
            "extrapolated": self.extrapolated,
            "y_used": self.y_used,
            "n": self.n,
            "l": self.l,
            "eps": self.eps,
            "radius": self.radius,
            "samples_per_k": self.samples_per_k,
            "method": self.method,
        }


def _chi_point(spec, k, ve) -> ChiPoint:
    if ve.log_volume == float("-inf"):
        return ChiPoint(k, ve.log_volume, float("-inf"), float("inf"))
    value = ve.log_volume / (k * k) + 0.5 * spec.n * math.log(k)
    return ChiPoint(k, ve.log_volume, value, ve.stderr_log / (k * k))


def _extrapolate(points: List[ChiPoint]) -> float:
    finite = [pt.value - pt.stderr for pt in points if pt.value > float("-inf")]
    return max(finite) if finite else float("-inf")


def estimate_chi(
    spec: TracialSpec,
    params: MicrostateParams,
    k_list: Sequence[int],
    nsamples: int = 100_000,
    seed: int = 0,
    sampler: str = "auto",
    threads: int = 1,
) -> ChiEstimate:
    """Per-k normalized values over a k sweep; params.k is ignored."""
    if spec.m != 0:
        raise ValueError("spec has Y letters: use estimate_chi_relative")
    ks = [int(k) for k in k_list]
    if not ks or ks != sorted(ks):
        raise ValueError("k_list must be nonempty and ascending")
    pts = []
    for k in ks:
        p = MicrostateParams(k=k, l=params.l, eps=params.eps, radius=params.radius)
        ve = estimate_volume(
            spec, p, sampler, None, nsamples, rng.derive(seed, 0xC41, k), threads
        )
        pts.append(_chi_point(spec, k, ve))
    return ChiEstimate(
        pts,
        _extrapolate(pts),
        "",
        spec.n,
        params.l,
        params.eps,
        params.radius,
        nsamples,
        sampler,
    )


def _haar_unitary(k: int, seed: int) -> np.ndarray:
    """Haar unitary from a Ginibre draw, orthonormalized column by column."""
    w = rng.normals(seed, 0, 2 * k * k)
    g = (w[: k * k] + 1j * w[k * k :]).reshape(k, k) / math.sqrt(2.0)
    q = np.zeros((k, k), dtype=np.complex128)
    for j in range(k):
        v = g[:, j].copy()
        for _ in range(2):  # re-orthogonalize once for stability
            if j:
                v -= q[:, :j] @ (q[:, :j].conj().T @ v)
        q[:, j] = v / np.linalg.norm(v)
    return q


def y_candidates(
    spec: TracialSpec, p: MicrostateParams, pool: int, seed: int
) -> List[Tuple[str, matcore.MatrixTuple]]:
    """Model-aware Y-tuples passing the Y-marginal membership test.

    Atomic/grid laws contribute Haar-conjugated quantile diagonals,
    semicircular laws GUE draws, matrix models block embeddings of the
    model (conjugated after the first candidate).  Aliased letters reuse
    one base matrix, so exact-correlation constraints stay satisfied.
    """
    if spec.generator is None:
        raise ValueError("spec has no generator to propose y candidates")
    ymarg = spec.y_marginal()
    gen = ymarg.generator
    k = p.k
    out: List[Tuple[str, matcore.MatrixTuple]] = []
    for attempt in range(64 * pool):
        sub = rng.derive(seed, 0x9001, attempt)
        if isinstance(gen, MatrixModel):
            d = gen.tuple.dim
            if k % d != 0:
                break  # no embedding of the model into dimension k
            rep = np.eye(k // d)
            mats = [np.kron(m.array, rep) for m in gen.tuple.mats]
            if attempt > 0:
                q = _haar_unitary(k, sub)
                mats = [q @ m @ q.conj().T for m in mats]
            tup = matcore.MatrixTuple(
                [matcore.SelfAdjointMatrix.hermitian_part(m) for m in mats]
            )
            desc = f"model#{attempt}"
        else:
            bases: Dict[int, matcore.SelfAdjointMatrix] = {}
            for fi in set(gen.assign):
                f = gen.factors[fi]
                fseed = rng.derive(sub, fi)
                if f.kind == "semicircle":
                    bases[fi] = matcore.sample_gue(k, f.variance, fseed)
                else:
                    locs = f.quantile((np.arange(k) + 0.5) / k)
                    q = _haar_unitary(k, fseed)
                    m = (q * locs[None, :]) @ q.conj().T
                    bases[fi] = matcore.SelfAdjointMatrix.hermitian_part(m)
            tup = matcore.MatrixTuple([bases[fi] for fi in gen.assign])
            desc = f"free#{attempt}"
        if is_microstate(tup, ymarg, p):
            out.append((desc, tup))
            if len(out) == pool:
                break
    return out


def estimate_chi_relative(
    spec: TracialSpec,
    params: MicrostateParams,
    k_list: Sequence[int],
    y_pool: int = 32,
    nsamples: int = 100_000,
    seed: int = 0,
    sampler: str = "auto",
    threads: int = 1,
) -> ChiEstimate:
    """Relative chi: per k, max volume over a pool of Y-candidates."""
    if spec.m == 0:
        return estimate_chi(spec, params, k_list, nsamples, seed, sampler, threads)
    ks = [int(k) for k in k_list]
    if not ks or ks != sorted(ks):
        raise ValueError("k_list must be nonempty and ascending")
    pts = []
    used = []
    for k in ks:
        p = MicrostateParams(k=k, l=params.l, eps=params.eps, radius=params.radius)
        cands = y_candidates(spec, p, y_pool, rng.derive(seed, 0x9CA, k))
        if not cands:
            pts.append(ChiPoint(k, float("-inf"), float("-inf"), float("inf")))
            used.append(f"k={k}:none (no {k}-dim Y-microstates found; empty sup)")
            continue
        best = None
        best_desc = ""
        for ci, (desc, ytup) in enumerate(cands):
            ve = estimate_volume(
                spec, p, sampler, ytup, nsamples, rng.derive(seed, 0xE57, k, ci), threads
            )
            if best is None or ve.log_volume > best.log_volume:
                best = ve
                best_desc = desc
        pts.append(_chi_point(spec, k, best))
        used.append(f"k={k}:{best_desc}")
    return ChiEstimate(
        pts,
        _extrapolate(pts),
        "; ".join(used),
        spec.n,
        params.l,
        params.eps,
        params.radius,
        nsamples,
        sampler,
    )


@dataclass
class ChiPrime:
    value: float
    per_k_diff: List[Tuple[int, float]]
    joint: ChiEstimate
    reference: Optional[ChiEstimate]


def chi_prime(
    spec: TracialSpec,
    params: MicrostateParams,
    k_list: Sequence[int],
    nsamples: int = 100_000,
    seed: int = 0,
    sampler: str = "auto",
    threads: int = 1,
) -> ChiPrime:
    """Joint-minus-reference difference of two chi runs.

    The reference term is approximated by the Y-marginal estimator at
    the same parameters; with m = 0 the reference is exactly zero.
    """
    joint = estimate_chi(
        spec.all_as_x(), params, k_list, nsamples, rng.derive(seed, 1), sampler, threads
    )
    if spec.m == 0:
        diffs = [(pt.k, pt.value) for pt in joint.per_k]
        return ChiPrime(joint.extrapolated, diffs, joint, None)
    ref = estimate_chi(
        spec.y_marginal(), params, k_list, nsamples, rng.derive(seed, 2), sampler, threads
    )
    diffs = []
    for jp, rp in zip(joint.per_k, ref.per_k):
        diffs.append((jp.k, jp.value - rp.value))
    if joint.extrapolated == float("-inf"):
        value = float("-inf")
    else:
        value = joint.extrapolated - ref.extrapolated
    return ChiPrime(value, diffs, joint, ref)


# --- block maps -----------------------------------------------------------------


def block_split(z: matcore.MatrixTuple, order: int) -> matcore.MatrixTuple:
    """Hermitian block parts of each matrix, (i, j, input) lexicographic.

    The (i, j) block X of a matrix maps to (X + X*)/2 when i >= j and to
    (X - X*)/(2i) when i < j, each a Hermitian matrix of the block size.
    """
    if order < 1:
        raise ValueError("block order must be >= 1")
    k = z.dim
    if k % order != 0:
        raise ValueError(f"dimension {k} not divisible by block order {order}")
    kp = k // order
    out = []
    for i in range(order):
        for j in range(order):
            for r in range(z.n):
                x = z.mats[r].array[i * kp : (i + 1) * kp, j * kp : (j + 1) * kp]
                if i >= j:
                    y = 0.5 * (x + x.conj().T)
                else:
                    y = (-0.5j) * (x - x.conj().T)
                out.append(matcore.SelfAdjointMatrix(y))
    return matcore.MatrixTuple(out)


def block_assemble(entries: matcore.MatrixTuple, order: int) -> matcore.MatrixTuple:
    """Inverse of block_split; checks the Hilbert-Schmidt mass balance.

    The split is measure preserving for the lambda inner product with
    weight 1 on diagonal blocks and 2 off the diagonal:
    Tr(Z^2) = sum_i Tr(Y_ii^2) + 2 sum_{i != j} Tr(Y_ij^2).
    """
    if order < 1:
        raise ValueError("block order must be >= 1")
    cnt = entries.n
    if cnt % (order * order) != 0:
        raise ValueError(f"{cnt} entries do not fill {order}x{order} blocks")
    nout = cnt // (order * order)
    kp = entries.dim
    k = order * kp

    def ent(i, j, r):
        return entries.mats[(i * order + j) * nout + r].array

    out = []
    for r in range(nout):
        z = np.zeros((k, k), dtype=np.complex128)
        for i in range(order):
            z[i * kp : (i + 1) * kp, i * kp : (i + 1) * kp] = ent(i, i, r)
            for j in range(i):
                x = ent(i, j, r) - 1j * ent(j, i, r)
                z[i * kp : (i + 1) * kp, j * kp : (j + 1) * kp] = x
                z[j * kp : (j + 1) * kp, i * kp : (i + 1) * kp] = x.conj().T
        total = float(np.sum(np.abs(z) ** 2))
        parts = 0.0
        for i in range(order):
            for j in range(order):
                w = 1.0 if i == j else 2.0
                parts += w * float(np.sum(np.abs(ent(i, j, r)) ** 2))
        if abs(total - parts) > 1e-10 * max(1.0, total):
            raise AssertionError("block basis lost Hilbert-Schmidt mass")
        out.append(matcore.SelfAdjointMatrix(z))
    return matcore.MatrixTuple(out)
