"""Check battery: deterministic tier at defaults, statistical tier at a
reduced sweep, report plumbing and serialization."""

import json
import math

import pytest

from freelab import theorems as th

SMALL = dict(k_list=(2, 3, 4), nsamples=20_000, y_pool=4)


# --- registry and report plumbing ---------------------------------------------


def test_registry_names_every_check():
    assert len(th.CHECK_IDS) == 14
    assert th.DETERMINISTIC_IDS <= set(th.CHECK_IDS)
    assert len(th.DETERMINISTIC_IDS) == 6


def test_unknown_id_lists_the_registry():
    with pytest.raises(ValueError, match="T-CHAIN"):
        th.check("T-NOPE")


def test_reports_serialize_to_json():
    r = th.check("T-BLOCK")
    blob = json.dumps(r.to_dict(), sort_keys=True)
    back = json.loads(blob)
    assert back["id"] == "T-BLOCK"
    assert back["passed"] is True
    assert back["statistical"] is False
    assert th.report_text(r).startswith("[PASS] T-BLOCK (deterministic)")


def test_minus_inf_values_become_strings():
    # k = 1 admits no Y-microstate for the three-atom law, so both runs
    # report empty sups and the per-k tables contain -inf entries
    r = th.check("T-GEN", k_list=(1,), nsamples=500, y_pool=2)
    blob = json.dumps(r.to_dict())
    assert '"-inf"' in blob
    assert not r.passed


def test_run_all_subset_keeps_order():
    reports = th.run_all(["T-BLOCK", "T-MAX"])
    assert [r.id for r in reports] == ["T-BLOCK", "T-MAX"]
    assert all(r.passed for r in reports)


def test_gen_rejects_bad_generating_sets():
    with pytest.raises(ValueError, match="nonempty"):
        th.check("T-GEN", gen_powers=())
    with pytest.raises(ValueError, match=">= 1"):
        th.check("T-GEN", gen_powers=(0,))


# --- deterministic tier ---------------------------------------------------------


def test_cov1_battery_and_identity():
    r = th.check("T-COV1")
    assert r.passed and not r.statistical
    assert r.lhs < 2e-3
    assert r.diagnostics["identity_correction"] == 0.0
    assert len(r.diagnostics["cases"]) == 6


def test_covgen_three_routes_agree():
    r = th.check("T-COVGEN")
    assert r.passed
    d = r.diagnostics
    assert d["matrix_vs_scalar"] < 1e-8
    assert abs(d["route_matrix"] - d["route_quadrature"]) < 2e-2
    assert abs(d["rotation_logabs"]) < 1e-8


def test_brown_margins_and_variances():
    r = th.check("T-BROWN")
    assert r.passed
    for case in r.diagnostics["cases"]:
        assert case["chi"] - case["bound"] > 0.3
        assert case["variance"] == pytest.approx(1.0 + case["t"], abs=2e-3)


def test_conj_derivative_matches_pairing():
    r = th.check("T-CONJ")
    assert r.passed
    assert r.lhs < 1e-2
    assert r.diagnostics["series_invertible"] is True
    moments = [case["moment_route"] for case in r.diagnostics["cases"]]
    assert moments == pytest.approx([1.0, 0.0, 2.0], abs=2e-2)


def test_max_margins_and_stationarity_violations():
    r = th.check("T-MAX")
    assert r.passed
    assert r.lhs > 0.05
    d = r.diagnostics
    assert 0.0 < d["uniform_gap"] < 0.05
    assert d["chi"]["two-atom"] == float("-inf")
    assert d["j_deviation_sup"]["uniform"] > 0.1
    assert d["j_deviation_sup"]["arcsine"] > 1.0


def test_block_closed_forms_are_exact():
    r = th.check("T-BLOCK")
    assert r.passed
    assert r.lhs <= 1e-12
    assert r.diagnostics["roundtrip_residual"] < 1e-10
    assert r.diagnostics["parseval_residual"] < 1e-10
    assert len(r.diagnostics["cases"]) == 4


def test_deterministic_tier_all_passes():
    for cid in sorted(th.DETERMINISTIC_IDS):
        assert th.check(cid).passed, cid


# --- statistical tier -------------------------------------------------------------


@pytest.mark.statistical
def test_statistical_tier_passes_at_reduced_sweep():
    for cid in ("T-CHAIN", "T-MONO-Y", "T-VS-JOINT", "T-SUBADD", "T-FREE-B", "T-FREECRIT"):
        r = th.check(cid, **SMALL)
        assert r.statistical
        assert r.passed, th.report_text(r)


@pytest.mark.statistical
def test_maxbound_respects_the_variance_bound():
    r = th.check("T-MAXBOUND", **SMALL)
    assert r.passed
    assert r.rhs == pytest.approx(0.5 * math.log(2.0 * math.pi * math.e), abs=1e-12)
    assert r.diagnostics["window_fattened_bound"] > r.rhs


@pytest.mark.statistical
def test_gen_agreement_is_two_sided():
    r = th.check("T-GEN", nsamples=20_000, y_pool=4)
    assert r.passed
    assert r.relation == "=="
    assert abs(r.lhs - r.rhs) <= r.tolerance


@pytest.mark.statistical
def test_checks_are_rerun_stable():
    a = th.check("T-VS-JOINT", **SMALL)
    b = th.check("T-VS-JOINT", **SMALL)
    assert a.to_dict() == b.to_dict()
