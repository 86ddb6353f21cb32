"""Ensembles, estimators, scans, and raw-table persistence."""

import math

import numpy as np
import pytest

from polymerlab import (
    FPP,
    POLYMER,
    EnsembleSpec,
    ModelParams,
    PolymerlabError,
    RawTable,
    ValidationError,
    concentration_scan,
    continuity_scan,
    estimate_free_energy,
    estimate_time_constant,
    fit_log_slope,
    fpp_half_width,
    hash64,
    hd_rescale,
    hd_trend_check,
    max_jump_scan,
    read_raw_table,
    run_ensemble,
    spec_from_dict,
    superadditivity_check,
    write_raw_table,
)
from polymerlab.env import NEG_INFINITY


def make_params(**kw):
    base = dict(d=1, alpha=2.0, c2=1.0, p=0.5)
    base.update(kw)
    return ModelParams(**base)


def small_spec(**kw):
    base = dict(
        params=make_params(),
        n_list=(8, 16),
        replicas=4,
        master_seed=101,
        targets=(FPP,),
    )
    base.update(kw)
    return EnsembleSpec(**base)


# ---------------------------------------------------------------------------
# spec validation
# ---------------------------------------------------------------------------


def test_spec_requires_increasing_sizes():
    with pytest.raises(ValidationError):
        small_spec(n_list=(16, 8))
    with pytest.raises(ValidationError):
        small_spec(n_list=())
    with pytest.raises(ValidationError):
        small_spec(n_list=(0, 4))


def test_spec_requires_replicas_and_targets():
    with pytest.raises(ValidationError):
        small_spec(replicas=1)
    with pytest.raises(ValidationError):
        small_spec(targets=("FPP", "BOGUS"))
    with pytest.raises(ValidationError):
        small_spec(targets=())


def test_spec_round_trips_through_dict():
    spec = small_spec(params=make_params(beta=NEG_INFINITY), targets=(POLYMER,))
    back = spec_from_dict(spec.to_dict())
    assert back == spec
    assert back.params.beta == NEG_INFINITY


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------


def test_ensemble_rows_are_deterministic():
    spec = small_spec()
    a = run_ensemble(spec)
    b = run_ensemble(spec)
    assert a.rows == b.rows


def test_ensemble_parallel_equals_serial():
    spec = small_spec()
    serial = run_ensemble(spec, n_jobs=1)
    parallel = run_ensemble(spec, n_jobs=2)
    assert serial.rows == parallel.rows


def test_ensemble_row_shape_and_seeds():
    spec = small_spec(targets=(FPP, POLYMER), params=make_params(beta=-1.0))
    table = run_ensemble(spec)
    assert len(table.rows) == 2 * 2 * 4
    for row in table.rows:
        assert row["seed"] == hash64(101, row["n"], row["replica"])
        assert row["ok"]
    fpp_rows = table.select(FPP, 16)
    assert all(r["scaled_value"] is not None for r in fpp_rows)
    poly_rows = table.select(POLYMER, 16)
    assert all(r["certificate"] is not None for r in poly_rows)
    assert all(r["max_jump"] is None for r in poly_rows)


def test_ensemble_p_zero_values_vanish():
    spec = small_spec(params=make_params(p=0.0))
    table = run_ensemble(spec)
    assert all(r["value"] == 0.0 for r in table.rows)
    assert all(r["scaled_value"] is None for r in table.rows)


def test_ensemble_aborts_when_every_replica_fails():
    spec = small_spec(n_list=(8,), replicas=2)
    with pytest.raises(PolymerlabError) as err:
        run_ensemble(spec, max_cells=8)
    assert err.value.context["errors"] == ["capacity"]
    assert err.value.context["n"] == 8


def test_independent_seeds_agree_statistically():
    # two disjoint master seeds estimate the same constant
    spec_a = small_spec(n_list=(16,), replicas=40, master_seed=1)
    spec_b = small_spec(n_list=(16,), replicas=40, master_seed=2)
    est_a = estimate_time_constant(run_ensemble(spec_a), 16)
    est_b = estimate_time_constant(run_ensemble(spec_b), 16)
    combined = math.hypot(est_a.stderr, est_b.stderr)
    assert abs(est_a.value - est_b.value) <= 4.0 * combined


# ---------------------------------------------------------------------------
# point estimates
# ---------------------------------------------------------------------------


def test_time_constant_uses_scaled_values():
    spec = small_spec(n_list=(16,), replicas=6)
    table = run_ensemble(spec)
    est = estimate_time_constant(table, 16, chi=0.6)
    vals = [r["scaled_value"] for r in table.select(FPP, 16)]
    assert est.value == pytest.approx(np.mean(vals) / 16)
    assert est.rate_margin == pytest.approx(16 ** (-0.4))
    assert est.value >= 0.0


def test_free_energy_requires_matching_beta():
    spec = small_spec(params=make_params(beta=-1.0), targets=(POLYMER,))
    table = run_ensemble(spec)
    est = estimate_free_energy(table, 16, beta=-1.0)
    assert est.value <= 0.0  # Z <= 1 for beta <= 0
    with pytest.raises(ValidationError):
        estimate_free_energy(table, 16, beta=-2.0)


def test_estimates_need_two_replicas():
    spec = small_spec(n_list=(8,), replicas=2)
    table = run_ensemble(spec)
    table.rows[0]["ok"] = False
    with pytest.raises(ValidationError):
        estimate_time_constant(table, 8)


# ---------------------------------------------------------------------------
# slope fitting
# ---------------------------------------------------------------------------


def test_slope_fit_recovers_planted_exponent():
    ns = np.array([64, 128, 256, 512])
    sds = 0.37 * ns**0.5
    fit = fit_log_slope(ns, sds)
    assert fit.slope == pytest.approx(0.5, abs=1e-6)
    assert fit.stderr == pytest.approx(0.0, abs=1e-9)
    assert fit.ci_low <= 0.5 <= fit.ci_high
    assert fit.points == 4


def test_slope_fit_validates_input():
    with pytest.raises(ValidationError):
        fit_log_slope([8, 16], [1.0, 2.0])
    with pytest.raises(ValidationError):
        fit_log_slope([8, 16, 32], [1.0, 0.0, 2.0])


# ---------------------------------------------------------------------------
# concentration
# ---------------------------------------------------------------------------


def test_concentration_report_counts_every_row():
    spec = small_spec(n_list=(8, 16, 32), replicas=10)
    table = run_ensemble(spec)
    report = concentration_scan(table, delta=0.1, zeta=0.5)
    assert sum(r["count"] + r["excluded"] for r in report.rows) == len(table.rows)
    for row in report.rows:
        assert 0.0 <= row["tail_freq"] <= 1.0
        assert row["sd"] >= 0.0
    assert report.slopes[FPP] is not None
    assert [r["n"] for r in report.max_jump_rows] == [8, 16, 32]


def test_concentration_degenerate_cells_skip_slope():
    # beta=0 log Z is identically zero, so sd vanishes at every size
    spec = small_spec(
        params=make_params(beta=0.0), n_list=(4, 8, 16), replicas=3, targets=(POLYMER,)
    )
    report = concentration_scan(run_ensemble(spec), delta=0.1, zeta=0.5)
    assert report.slopes[POLYMER] is None
    assert len(report.degenerate) == 3


def test_concentration_validates_delta():
    table = run_ensemble(small_spec(n_list=(8,), replicas=2))
    with pytest.raises(ValidationError):
        concentration_scan(table, delta=0.7, zeta=0.5)


def test_max_jump_scan_fractions():
    table = run_ensemble(small_spec(n_list=(16,), replicas=8))
    rows = max_jump_scan(table, zeta=0.5)
    assert rows[0]["n"] == 16 and rows[0]["count"] == 8
    assert rows[0]["band"] == pytest.approx(4.0)
    assert 0.0 <= rows[0]["fraction"] <= 1.0


# ---------------------------------------------------------------------------
# superadditivity
# ---------------------------------------------------------------------------


def test_superadditivity_gaps_and_gluing():
    params = make_params()
    report = superadditivity_check(params, n=8, replicas=12, seed=77)
    assert report.replicas_used == 12
    assert report.glue_violations == 0
    assert len(report.gaps) == len(report.midpoint_in_box) == 12
    for gap, inside in zip(report.gaps, report.midpoint_in_box):
        if inside:
            assert gap >= -1e-9
    assert report.negative_gaps == sum(g < -1e-9 * (1 + abs(t)) for g, t in zip(report.gaps, [report.mean_t2n] * 12))
    expected_c = (2.0 * report.mean_tn - report.mean_t2n) / 8**0.6
    assert report.c_fit == pytest.approx(expected_c)


def test_superadditivity_zero_environment():
    params = make_params(p=0.0)
    report = superadditivity_check(params, n=4, replicas=3, seed=5)
    assert report.mean_t2n == 0.0 and report.mean_tn == 0.0
    assert all(g == 0.0 for g in report.gaps)
    assert report.negative_gaps == 0


def test_superadditivity_validates_replicas():
    with pytest.raises(ValidationError):
        superadditivity_check(make_params(), n=4, replicas=1, seed=1)


# ---------------------------------------------------------------------------
# continuity scans
# ---------------------------------------------------------------------------


def test_continuity_constant_grid_is_flat():
    params = make_params()
    curve = continuity_scan(params, [0.5, 0.5], n=16, replicas=5, kind="p", master_seed=3)
    assert curve.estimates[0] == curve.estimates[1]
    assert curve.jump_ok == (True,)


def test_continuity_grid_from_zero():
    params = make_params()
    curve = continuity_scan(params, [0.0, 0.1], n=16, replicas=5, kind="p", master_seed=3)
    assert curve.estimates[0] == 0.0
    assert curve.counts == (5, 5)


def test_continuity_beta_grid_couples_seeds():
    params = make_params(beta=-1.0)
    curve = continuity_scan(
        params, [-1.0, -0.999], n=16, replicas=5, kind="beta", master_seed=9
    )
    assert curve.kind == "beta"
    # nearly identical betas on identical slabs: the move is tiny
    assert abs(curve.estimates[1] - curve.estimates[0]) < 1e-3
    assert curve.jump_ok == (True,)


def test_continuity_validates_kind_and_grid():
    params = make_params()
    with pytest.raises(ValidationError):
        continuity_scan(params, [0.4, 0.5], n=8, replicas=3, kind="gamma", master_seed=1)
    with pytest.raises(ValidationError):
        continuity_scan(params, [0.4], n=8, replicas=3, kind="p", master_seed=1)


# ---------------------------------------------------------------------------
# high-density trend
# ---------------------------------------------------------------------------


def test_hd_rescale_synthetic_blowup():
    # phi = -C (1-p)^(-alpha/d) rescales to the constant -C with zero slope
    ps = [0.5, 0.7, 0.9]
    phi = [-2.0 * (1.0 - p) ** (-2.0) for p in ps]
    rescaled, slopes = hd_rescale(ps, phi, alpha=2.0, d=1)
    assert np.allclose(rescaled, -2.0)
    assert np.allclose(slopes, 0.0, atol=1e-12)


def test_hd_rescale_validates_domain():
    with pytest.raises(ValidationError):
        hd_rescale([0.5, 1.0], [-1.0, -2.0], alpha=2.0, d=1)
    with pytest.raises(ValidationError):
        hd_rescale([0.5], [-1.0], alpha=0.0, d=1)


def test_hd_trend_runs_on_soft_kernel():
    # alpha=1 with small c2 keeps long jumps affordable at high density
    params = make_params(alpha=1.0, c2=0.5)
    report = hd_trend_check(params, [0.3, 0.5, 0.7], n=8, replicas=4, master_seed=21)
    assert report.counts == (4, 4, 4)
    assert all(phi < 0 for phi in report.phi)
    assert len(report.log_slopes) == 2
    assert isinstance(report.flattening, bool)


def test_hd_trend_validates_grid():
    params = make_params(alpha=1.0)
    with pytest.raises(ValidationError):
        hd_trend_check(params, [0.5, 0.4], n=8, replicas=3, master_seed=1)
    with pytest.raises(ValidationError):
        hd_trend_check(params, [0.0, 0.5], n=8, replicas=3, master_seed=1)


# ---------------------------------------------------------------------------
# raw-table persistence
# ---------------------------------------------------------------------------


def test_raw_table_round_trip(tmp_path):
    spec = small_spec(targets=(FPP, POLYMER), params=make_params(beta=-1.0))
    table = run_ensemble(spec)
    path = tmp_path / "raw.csv"
    write_raw_table(path, table)
    back = read_raw_table(path)
    assert back.spec == spec
    assert back.version == table.version
    assert back.rows == table.rows  # repr round trip keeps floats exact


def test_raw_table_round_trip_hard_mode(tmp_path):
    spec = small_spec(
        params=make_params(p=0.2, beta=NEG_INFINITY), n_list=(8,), targets=(POLYMER,)
    )
    table = run_ensemble(spec)
    path = tmp_path / "raw.csv"
    write_raw_table(path, table)
    back = read_raw_table(path)
    assert back.spec.params.beta == NEG_INFINITY
    assert back.rows == table.rows


def test_raw_table_extra_meta_guard(tmp_path):
    table = run_ensemble(small_spec(n_list=(8,), replicas=2))
    with pytest.raises(ValidationError):
        write_raw_table(tmp_path / "x.csv", table, extra_meta={"spec": "boom"})
    write_raw_table(tmp_path / "x.csv", table, extra_meta={"config_hash": "abc"})
    assert read_raw_table(tmp_path / "x.csv").rows == table.rows


def test_raw_table_reader_requires_spec(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# note=hello\ntarget,n\nFPP,8\n")
    with pytest.raises(ValidationError):
        read_raw_table(path)
