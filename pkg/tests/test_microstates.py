"""Moment targets, membership windows, Monte Carlo volume estimators,
chi sweeps (plain and relative), and block decompositions."""

import json
import math

import numpy as np
import pytest

from freelab import matcore, microstates as ms, rng, spectra
from freelab.microstates import MicrostateParams, TracialSpec


def semicircle():
    return spectra.SpectralMeasure.semicircle(1.0)


def two_atom(a=1.0):
    return spectra.SpectralMeasure.atomic([(-a, 0.5), (a, 0.5)])


def sc_spec(l_max=4):
    return TracialSpec.free_model(1, 0, l_max, [semicircle()], [0])


def free_pair_spec(l_max=4):
    return TracialSpec.free_model(1, 1, l_max, [semicircle(), two_atom()], [0, 1])


def gue_tuple(k, seed):
    return matcore.MatrixTuple([matcore.sample_gue(k, 1.0, seed)])


# --- canonical words and moment engines ---------------------------------------


def test_canonical_word_minimizes_over_rotations_and_reversal():
    w = (2, 1, 1, 3)
    orbit = set()
    for base in (w, w[::-1]):
        for s in range(len(base)):
            orbit.add(base[s:] + base[:s])
    assert ms.canonical_word(w) == min(orbit)
    assert ms.canonical_word(()) == ()
    assert ms.canonical_word((5,)) == (5,)
    assert ms.canonical_word((1, 2)) == ms.canonical_word((2, 1))


def test_free_model_semicircle_moments_are_catalan():
    gen = ms.FreeModel([semicircle()], [0])
    catalan = [1, 2, 5, 14, 42]
    for p, c in enumerate(catalan, start=1):
        assert gen.word_moment((1,) * (2 * p)) == pytest.approx(c, abs=1e-10)
        assert gen.word_moment((1,) * (2 * p - 1)) == pytest.approx(0.0, abs=1e-12)


def test_free_model_mixed_moments():
    gen = ms.FreeModel([semicircle(), two_atom()], [0, 1])
    assert gen.word_moment((1, 2)) == pytest.approx(0.0, abs=1e-12)
    assert gen.word_moment((1, 2, 1, 2)) == pytest.approx(0.0, abs=1e-12)
    assert gen.word_moment((1, 1, 2, 2)) == pytest.approx(1.0, abs=1e-12)
    assert gen.word_moment((2, 2)) == pytest.approx(1.0, abs=1e-12)
    assert gen.word_moment((2, 2, 2)) == pytest.approx(0.0, abs=1e-12)
    assert gen.word_moment((2, 2, 2, 2)) == pytest.approx(1.0, abs=1e-12)


def test_free_model_aliased_letters_are_perfectly_correlated():
    gen = ms.FreeModel([semicircle()], [0, 0])
    # tau((x - y)^2) = m2 - 2 tau(xy) + m2 must vanish when x = y
    second = (
        gen.word_moment((1, 1))
        - 2.0 * gen.word_moment((1, 2))
        + gen.word_moment((2, 2))
    )
    assert second == pytest.approx(0.0, abs=1e-12)


def test_matrix_model_moments_are_normalized_traces():
    a = np.diag([1.0, -1.0])
    b = np.array([[0.0, 1.0], [1.0, 0.0]])
    gen = ms.MatrixModel([a, b])
    assert gen.word_moment((1,)) == pytest.approx(0.0, abs=1e-14)
    assert gen.word_moment((1, 1)) == pytest.approx(1.0, abs=1e-14)
    assert gen.word_moment((1, 2)) == pytest.approx(np.trace(a @ b).real / 2, abs=1e-14)
    assert gen.word_moment((1, 2, 1, 2)) == pytest.approx(-1.0, abs=1e-14)


# --- tracial specifications ----------------------------------------------------


def test_from_targets_canonicalizes_words():
    spec = TracialSpec.from_targets(2, 0, 2, {(1, 2): 0.5, (1,): 0.0})
    assert spec.target((2, 1)) == pytest.approx(0.5)
    assert spec.has_target((2, 1))
    assert spec.target(()) == 1.0


def test_from_targets_rejects_tracial_conflicts():
    with pytest.raises(ValueError, match="tracial symmetry conflict"):
        TracialSpec.from_targets(2, 0, 2, {(1, 2): 0.5, (2, 1): 0.3})
    with pytest.raises(ValueError, match="out of range"):
        TracialSpec.from_targets(1, 0, 2, {(3,): 0.0})
    with pytest.raises(ValueError, match="longer than l_max"):
        TracialSpec.from_targets(1, 0, 1, {(1, 1): 1.0})


def test_target_lookup_depth_errors():
    spec = TracialSpec.from_targets(1, 0, 2, {(1,): 0.0, (1, 1): 1.0})
    with pytest.raises(ms.SpecTooShallow):
        spec.target((1, 1, 1))
    sparse = TracialSpec.from_targets(1, 0, 2, {(1,): 0.0})
    assert not sparse.has_target((1, 1))
    with pytest.raises(ms.SpecTooShallow):
        sparse.target((1, 1))


def test_required_words_lists_canonical_classes():
    spec = TracialSpec.from_targets(2, 0, 2, {(1,): 0.0})
    assert spec.required_words(2) == ((1,), (2,), (1, 1), (1, 2), (2, 2))


def test_marginals_restrict_the_letter_set():
    joint = free_pair_spec()
    xm = joint.x_marginal()
    assert (xm.n, xm.m) == (1, 0)
    for p, want in [(1, 0.0), (2, 1.0), (3, 0.0), (4, 2.0)]:
        assert xm.target((1,) * p) == pytest.approx(want, abs=1e-12)
    ym = joint.y_marginal()
    for p, want in [(1, 0.0), (2, 1.0), (3, 0.0), (4, 1.0)]:
        assert ym.target((1,) * p) == pytest.approx(want, abs=1e-12)
    flat = joint.all_as_x()
    assert (flat.n, flat.m) == (2, 0)
    assert flat.target((1, 1, 2, 2)) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        sc_spec().y_marginal()


def test_spec_serialization_roundtrip(tmp_path):
    specs = [
        free_pair_spec(3),
        TracialSpec.from_targets(1, 0, 2, {(1,): 0.0, (1, 1): 1.0}),
        TracialSpec.matrix_model(0, 1, 2, [np.diag([1.0, -1.0])]),
    ]
    for spec in specs:
        blob = json.dumps(spec.to_dict())
        back = TracialSpec.from_dict(json.loads(blob))
        assert (back.n, back.m, back.l_max) == (spec.n, spec.m, spec.l_max)
        for w in spec.required_words(2):
            if spec.has_target(w):
                assert back.target(w) == pytest.approx(spec.target(w), abs=1e-12)
    path = tmp_path / "spec.json"
    specs[0].save(str(path))
    loaded = TracialSpec.load(str(path))
    assert loaded.target((1, 1, 2)) == pytest.approx(specs[0].target((1, 1, 2)))


def test_suggested_radius_tracks_support_bounds():
    assert ms.suggested_radius(sc_spec()) == pytest.approx(4.0)
    wide = TracialSpec.free_model(1, 1, 2, [semicircle(), two_atom(2.0)], [0, 1])
    assert ms.suggested_radius(wide) == pytest.approx(6.0)
    model = TracialSpec.matrix_model(0, 1, 2, [np.diag([3.0, -1.0])])
    assert ms.suggested_radius(model) == pytest.approx(8.0)


# --- membership -----------------------------------------------------------------


def test_two_atom_membership_window():
    spec = TracialSpec.free_model(1, 0, 2, [two_atom()], [0])
    p = MicrostateParams(k=2, l=2, eps=0.01, radius=4.0)
    good = matcore.MatrixTuple.from_arrays([np.diag([1.0, -1.0])])
    bad = matcore.MatrixTuple.from_arrays([np.eye(2)])
    assert ms.is_microstate(good, spec, p)
    assert not ms.is_microstate(bad, spec, p)


def test_gue_samples_are_usually_semicircle_microstates():
    spec = sc_spec()
    p = MicrostateParams(k=64, l=4, eps=0.3, radius=4.0)
    hits = sum(ms.is_microstate(gue_tuple(64, rng.derive(3, i)), spec, p) for i in range(20))
    assert hits / 20 > 0.5


def test_independent_draws_are_usually_relative_microstates():
    spec = free_pair_spec(3)
    k = 64
    locs = two_atom().quantile((np.arange(k) + 0.5) / k)
    y = matcore.MatrixTuple.from_arrays([np.diag(locs)])
    p = MicrostateParams(k=k, l=3, eps=0.35, radius=4.0)
    hits = sum(
        ms.is_relative_microstate(gue_tuple(k, rng.derive(5, i)), y, spec, p)
        for i in range(10)
    )
    assert hits / 10 > 0.3


def test_membership_windows_are_nested_in_eps_and_l():
    spec = sc_spec()
    k = 6
    tuples = [gue_tuple(k, rng.derive(77, i)) for i in range(400)]

    def members(l, eps):
        p = MicrostateParams(k=k, l=l, eps=eps, radius=4.0)
        return [ms.is_microstate(t, spec, p) for t in tuples]

    tight = members(2, 0.2)
    loose = members(2, 0.5)
    deep = members(4, 0.5)
    assert 0 < sum(tight) < sum(loose)
    assert 0 < sum(deep) <= sum(loose)
    assert all(l for t, l in zip(tight, loose) if t)
    assert all(l for d, l in zip(deep, loose) if d)


def test_membership_validation_errors():
    spec = TracialSpec.from_targets(1, 0, 2, {(1,): 0.0, (1, 1): 1.0})
    t = gue_tuple(4, 0)
    with pytest.raises(ms.SpecTooShallow):
        ms.is_microstate(t, spec, MicrostateParams(k=4, l=3, eps=0.1, radius=4.0))
    with pytest.raises(ValueError, match="dimension"):
        ms.is_microstate(t, spec, MicrostateParams(k=5, l=2, eps=0.1, radius=4.0))
    pair = free_pair_spec()
    with pytest.raises(ValueError, match="matrices"):
        ms.is_microstate(t, pair, MicrostateParams(k=4, l=2, eps=0.1, radius=4.0))
    with pytest.raises(ValueError, match="arities"):
        ms.is_relative_microstate(t, t, pair.all_as_x(), MicrostateParams(k=4, l=2, eps=0.1, radius=4.0))


def test_params_validation():
    for bad in [dict(k=0, l=2, eps=0.1, radius=4.0), dict(k=2, l=-1, eps=0.1, radius=4.0),
                dict(k=2, l=2, eps=0.0, radius=4.0), dict(k=2, l=2, eps=0.1, radius=0.0)]:
        with pytest.raises(ValueError):
            MicrostateParams(**bad)


# --- volume estimators -----------------------------------------------------------


def test_unconstrained_interval_volume_is_exact():
    spec = TracialSpec.from_targets(1, 0, 0, {})
    p = MicrostateParams(k=1, l=0, eps=0.1, radius=2.0)
    ve = ms.estimate_volume(spec, p, sampler="ball", nsamples=1000, seed=1)
    assert ve.log_volume == pytest.approx(math.log(4.0), abs=1e-14)
    assert ve.stderr_log == 0.0
    assert ve.accepted == ve.samples == 1000
    assert ve.method == "ball-rejection"
    vi = ms.estimate_volume(spec, p, sampler="importance", nsamples=20000, seed=2)
    assert vi.method == "gaussian-importance"
    assert abs(vi.log_volume - math.log(4.0)) < 3.0 * vi.stderr_log


def test_point_mass_window_volume_matches_interval():
    spec = TracialSpec.free_model(1, 0, 2, [spectra.SpectralMeasure.atomic([(0.0, 1.0)])], [0])
    p = MicrostateParams(k=1, l=2, eps=0.01, radius=2.0)
    ve = ms.estimate_volume(spec, p, sampler="ball", nsamples=200_000, seed=4)
    # the first-moment window |x| < eps binds: volume 2 eps
    assert abs(ve.log_volume - math.log(0.02)) < 3.0 * ve.stderr_log
    assert ve.stderr_log < 0.01


def test_ball_and_importance_estimates_agree():
    spec = sc_spec(2)
    p = MicrostateParams(k=4, l=2, eps=0.5, radius=4.0)
    vb = ms.estimate_volume(spec, p, sampler="ball", nsamples=200_000, seed=7)
    vi = ms.estimate_volume(spec, p, sampler="importance", nsamples=200_000, seed=8)
    assert vb.accepted > 1000 and vi.accepted > 1000
    sigma = math.hypot(vb.stderr_log, vi.stderr_log)
    assert abs(vb.log_volume - vi.log_volume) < 3.0 * sigma


def test_volume_is_thread_count_invariant_and_rerunnable():
    spec = sc_spec(2)
    p = MicrostateParams(k=3, l=2, eps=0.4, radius=4.0)
    one = ms.estimate_volume(spec, p, sampler="importance", nsamples=30_000, seed=9, threads=1)
    four = ms.estimate_volume(spec, p, sampler="importance", nsamples=30_000, seed=9, threads=4)
    again = ms.estimate_volume(spec, p, sampler="importance", nsamples=30_000, seed=9, threads=1)
    assert one.log_volume == four.log_volume == again.log_volume
    assert one.stderr_log == four.stderr_log == again.stderr_log
    pb = MicrostateParams(k=2, l=2, eps=0.4, radius=4.0)
    b1 = ms.estimate_volume(spec, pb, sampler="ball", nsamples=20_000, seed=10, threads=1)
    b3 = ms.estimate_volume(spec, pb, sampler="ball", nsamples=20_000, seed=10, threads=3)
    assert b1.log_volume == b3.log_volume


def test_zero_acceptance_reports_an_upper_bound():
    # scalar microstates cannot satisfy tau(y) ~ 0 and tau(y^2) ~ 1 at once
    spec = TracialSpec.free_model(1, 0, 2, [two_atom()], [0])
    p = MicrostateParams(k=1, l=2, eps=0.1, radius=2.0)
    ve = ms.estimate_volume(spec, p, sampler="ball", nsamples=1000, seed=3)
    assert ve.log_volume == float("-inf")
    assert ve.accepted == 0
    assert np.isfinite(ve.upper_bound)
    vi = ms.estimate_volume(spec, p, sampler="importance", nsamples=1000, seed=3)
    assert vi.log_volume == float("-inf")
    assert vi.upper_bound == pytest.approx(
        matcore.ball_log_volume(1, 2.0) - math.log(1000), abs=1e-12
    )


def test_volume_validation_errors():
    spec = sc_spec(2)
    p = MicrostateParams(k=2, l=2, eps=0.4, radius=4.0)
    with pytest.raises(ValueError, match="100 samples"):
        ms.estimate_volume(spec, p, nsamples=50)
    with pytest.raises(ValueError, match="unknown sampler"):
        ms.estimate_volume(spec, p, sampler="quadrature")
    pair = free_pair_spec(2)
    with pytest.raises(ValueError, match="pass the fixed y"):
        ms.estimate_volume(pair, p)
    y_bad = matcore.MatrixTuple.from_arrays([np.eye(3)])
    with pytest.raises(ValueError, match="dimension"):
        ms.estimate_volume(pair, p, y=y_bad)
    two_y = matcore.MatrixTuple.from_arrays([np.eye(2), np.eye(2)])
    with pytest.raises(ValueError, match="arity"):
        ms.estimate_volume(pair, p, y=two_y)


# --- chi sweeps -------------------------------------------------------------------


def test_chi_normalization_identity():
    spec = TracialSpec.from_targets(1, 0, 0, {})
    p = MicrostateParams(k=1, l=0, eps=0.1, radius=2.0)
    est = ms.estimate_chi(spec, p, [1, 2], nsamples=1000, seed=1, sampler="ball")
    # k = 1: interval volume is exact and the stderr vanishes
    assert est.per_k[0].value == pytest.approx(math.log(4.0), abs=1e-14)
    assert est.per_k[0].stderr == 0.0
    for pt in est.per_k:
        want = pt.log_volume / pt.k**2 + 0.5 * spec.n * math.log(pt.k)
        assert pt.value == pytest.approx(want, abs=1e-14)
    assert est.extrapolated == pytest.approx(
        max(pt.value - pt.stderr for pt in est.per_k), abs=1e-14
    )
    d = est.to_dict()
    assert set(d) == {
        "per_k", "extrapolated", "y_used", "n", "l", "eps",
        "radius", "samples_per_k", "method",
    }
    assert set(d["per_k"][0]) == {"k", "log_volume", "value", "stderr"}


def test_chi_semicircle_sweep_approaches_the_limit():
    spec = sc_spec()
    p = MicrostateParams(k=1, l=4, eps=0.4, radius=4.0)
    est = ms.estimate_chi(spec, p, [2, 3, 4], nsamples=30_000, seed=11)
    vals = [pt.value for pt in est.per_k]
    assert vals[0] < vals[1] < vals[2]
    assert 1.0 < est.extrapolated < 1.45


def test_chi_rerun_is_bitwise_deterministic():
    spec = sc_spec(2)
    p = MicrostateParams(k=1, l=2, eps=0.4, radius=4.0)
    a = ms.estimate_chi(spec, p, [2, 3], nsamples=20_000, seed=5)
    b = ms.estimate_chi(spec, p, [2, 3], nsamples=20_000, seed=5)
    assert a.to_dict() == b.to_dict()


def test_chi_input_validation():
    spec = sc_spec(2)
    p = MicrostateParams(k=1, l=2, eps=0.4, radius=4.0)
    with pytest.raises(ValueError, match="ascending"):
        ms.estimate_chi(spec, p, [3, 2], nsamples=1000)
    with pytest.raises(ValueError, match="ascending"):
        ms.estimate_chi(spec, p, [], nsamples=1000)
    with pytest.raises(ValueError, match="relative"):
        ms.estimate_chi(free_pair_spec(2), p, [2], nsamples=1000)


# --- relative chi -------------------------------------------------------------------


def test_y_candidates_pass_the_marginal_test():
    spec = free_pair_spec(3)
    p = MicrostateParams(k=8, l=3, eps=0.3, radius=4.0)
    cands = ms.y_candidates(spec, p, 4, seed=6)
    assert len(cands) == 4
    ymarg = spec.y_marginal()
    for desc, tup in cands:
        assert desc.startswith("free#")
        assert ms.is_microstate(tup, ymarg, p)
    flip = np.array([[0.0, 1.0], [1.0, 0.0]])
    model = TracialSpec.matrix_model(1, 1, 2, [flip, np.diag([1.0, -1.0])])
    pm = MicrostateParams(k=4, l=2, eps=0.2, radius=4.0)
    mcands = ms.y_candidates(model, pm, 2, seed=6)
    assert mcands and all(d.startswith("model#") for d, _ in mcands)
    podd = MicrostateParams(k=3, l=2, eps=0.2, radius=4.0)
    assert ms.y_candidates(model, podd, 2, seed=6) == []


def test_relative_chi_of_a_free_pair_matches_the_x_marginal():
    spec = free_pair_spec()
    p = MicrostateParams(k=1, l=3, eps=0.4, radius=4.0)
    est = ms.estimate_chi_relative(spec, p, [2, 3], y_pool=6, nsamples=20_000, seed=21)
    assert 0.8 < est.extrapolated < 1.5
    assert est.y_used.startswith("k=2:") and "; k=3:" in est.y_used


def test_relative_chi_detects_exact_correlation():
    corr = TracialSpec.free_model(1, 1, 4, [semicircle()], [0, 0])
    p = MicrostateParams(k=1, l=2, eps=0.2, radius=4.0)
    rel = ms.estimate_chi_relative(corr, p, [3, 4], y_pool=4, nsamples=30_000, seed=22)
    plain = ms.estimate_chi(corr.x_marginal(), p, [3, 4], nsamples=30_000, seed=23)
    for rp, pp in zip(rel.per_k, plain.per_k):
        assert pp.value - rp.value > 0.25


def test_relative_reduces_to_plain_without_y_letters():
    spec = sc_spec(2)
    p = MicrostateParams(k=1, l=2, eps=0.4, radius=4.0)
    a = ms.estimate_chi_relative(spec, p, [2], nsamples=5000, seed=3)
    b = ms.estimate_chi(spec, p, [2], nsamples=5000, seed=3)
    assert a.to_dict() == b.to_dict()


def test_relative_empty_pool_reports_minus_inf():
    spec = free_pair_spec(2)
    p = MicrostateParams(k=1, l=2, eps=0.05, radius=4.0)
    est = ms.estimate_chi_relative(spec, p, [1], y_pool=4, nsamples=200, seed=25)
    assert est.extrapolated == float("-inf")
    assert "empty sup" in est.y_used
    assert est.per_k[0].value == float("-inf")


def test_chi_prime_reduces_to_chi_without_y():
    spec = sc_spec(2)
    p = MicrostateParams(k=1, l=2, eps=0.2, radius=4.0)
    cp = ms.chi_prime(spec, p, [2, 3], nsamples=20_000, seed=24)
    assert cp.reference is None
    assert cp.value == cp.joint.extrapolated
    assert cp.per_k_diff == [(pt.k, pt.value) for pt in cp.joint.per_k]


def test_chi_prime_orders_free_above_correlated():
    p = MicrostateParams(k=1, l=2, eps=0.2, radius=4.0)
    corr = TracialSpec.free_model(1, 1, 4, [semicircle()], [0, 0])
    free = TracialSpec.free_model(1, 1, 4, [semicircle(), semicircle()], [0, 1])
    cpc = ms.chi_prime(corr, p, [2, 3], nsamples=30_000, seed=31)
    cpf = ms.chi_prime(free, p, [2, 3], nsamples=30_000, seed=31)
    for (kf, df), (kc, dc) in zip(cpf.per_k_diff, cpc.per_k_diff):
        assert kf == kc and df > dc
    assert cpf.per_k_diff[1][1] - cpc.per_k_diff[1][1] > 0.3


# --- block maps ----------------------------------------------------------------------


def test_block_split_scalar_blocks():
    z = matcore.MatrixTuple.from_arrays(
        [np.array([[2.0, 3.0 + 4.0j], [3.0 - 4.0j, 5.0]])]
    )
    parts = ms.block_split(z, 2)
    # (i, j) lexicographic: diagonal entries, Im of the upper block,
    # Re of the lower block
    got = [float(m.array[0, 0].real) for m in parts.mats]
    assert got == pytest.approx([2.0, 4.0, 3.0, 5.0], abs=1e-14)


def test_block_roundtrip_and_parseval():
    for k, order, seed in [(6, 2, 1), (6, 3, 2), (8, 4, 3)]:
        z = gue_tuple(k, seed)
        parts = ms.block_split(z, order)
        assert parts.n == order * order
        back = ms.block_assemble(parts, order)
        assert np.max(np.abs(back.mats[0].array - z.mats[0].array)) < 1e-13
        # Tr z^2 = sum_i Tr Y_ii^2 + 2 sum_{i != j} Tr Y_ij^2
        total = 0.0
        for idx in range(order * order):
            i, j = divmod(idx, order)
            w = 1.0 if i == j else 2.0
            y = parts.mats[idx].array
            total += w * float(np.trace(y @ y).real)
        want = float(np.trace(z.mats[0].array @ z.mats[0].array).real)
        assert total == pytest.approx(want, rel=1e-12)


def test_block_split_order_one_is_identity():
    z = gue_tuple(4, 9)
    parts = ms.block_split(z, 1)
    assert parts.n == 1
    assert np.array_equal(parts.mats[0].array, z.mats[0].array)


def test_block_map_validation_errors():
    z = gue_tuple(6, 1)
    with pytest.raises(ValueError, match="not divisible"):
        ms.block_split(z, 4)
    with pytest.raises(ValueError, match=">= 1"):
        ms.block_split(z, 0)
    parts = ms.block_split(z, 2)
    short = matcore.MatrixTuple(list(parts.mats[:3]))
    with pytest.raises(ValueError, match="do not fill"):
        ms.block_assemble(short, 2)
