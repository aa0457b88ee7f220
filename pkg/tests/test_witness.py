import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdmcluster.config import CALIBRATED_PUMP, CALIBRATION_TARGET_DB, RunConfig
from tdmcluster.detection import design_filter_chain, identity_chain
from tdmcluster.errors import CoverageError, IncompleteDataError, NonZeroMeanWarning, ParameterError, SizeError
from tdmcluster.modes import weight_function
from tdmcluster.network import NetworkConfig
from tdmcluster.source import Orientation, SqueezerSpec
from tdmcluster.witness import (
    BOUND_DB,
    Bipartition,
    VarianceAccumulator,
    analytic_variance_oracle,
    bipartition_bound,
    brute_force_bipartitions,
    calibrate_pump,
    enumerate_block_bipartitions,
    full_inseparability_test,
    nullifier_coefficients,
    nullifier_variance,
    pattern_bound,
    squeezing_db,
    summary_text,
    write_variance_csv,
)

LOSSLESS = NetworkConfig(fiber_loss=0.0, visibility=1.0, quantum_efficiency=1.0)


def _pair(x):
    return SqueezerSpec(x), SqueezerSpec(x, orientation=Orientation.SQUEEZE_P)


def _report(vx, vp, n_k=5, frames=50, seed=0):
    """Report whose per-k mean squares equal ``vx``/``vp`` exactly."""
    rng = np.random.default_rng(seed)
    acc = VarianceAccumulator(n_k)
    for _ in range(frames):
        acc.add(rng.choice([-1, 1], n_k) * np.sqrt(vx), rng.choice([-1, 1], n_k) * np.sqrt(vp))
    return acc.report()


def test_nullifier_variance():
    v = np.random.default_rng(1).normal(0, np.sqrt(2.0), 20_000)
    var, se = nullifier_variance(v)
    assert abs(var - 2.0) < 5 * se
    assert nullifier_variance([0.0, 0.0]) == (0.0, 0.0)
    with pytest.raises(SizeError):
        nullifier_variance([1.0])
    with pytest.warns(NonZeroMeanWarning):
        nullifier_variance(np.random.default_rng(2).normal(1.0, 0.1, 100))


def test_squeezing_db():
    assert squeezing_db(2.0) == 0.0
    assert squeezing_db(1.0) == pytest.approx(-3.0103, abs=1e-4)
    assert squeezing_db(2 * 10 ** (-0.43)) == pytest.approx(-4.3)
    assert BOUND_DB == pytest.approx(-3.0103, abs=1e-4)
    with pytest.raises(ParameterError):
        squeezing_db(0.0)
    with pytest.raises(ParameterError):
        squeezing_db(1.0, reference=0.0)


def test_seven_patterns_and_bounds():
    pats = enumerate_block_bipartitions(0)
    assert [p.name for p in pats] == list("abcdefg")
    assert [pattern_bound(p) for p in pats] == [2, 2, 2, 2, 4, 2, 2]
    assert {p.bipartition.key() for p in pats} == brute_force_bipartitions([("A", 0), ("B", 0), ("A", 1), ("B", 1)])
    g = pats[6].bipartition
    assert g.subset_alpha == {("A", 0), ("B", 1)} and g.subset_beta == {("B", 0), ("A", 1)}
    assert [p.p_offset for p in pats] == [0, 0, 0, 0, 0, 1, 1]
    assert [pattern_bound(p) for p in enumerate_block_bipartitions(9)] == [2, 2, 2, 2, 4, 2, 2]


def test_bipartition_validation():
    with pytest.raises(ValueError):
        Bipartition(frozenset(), frozenset({("A", 0)}))
    with pytest.raises(ValueError):
        Bipartition(frozenset({("A", 0)}), frozenset({("A", 0), ("B", 0)}))
    b = enumerate_block_bipartitions(0)[0].bipartition
    cx = nullifier_coefficients(0, "X")
    dp = nullifier_coefficients(0, "P")
    del dp[("B", 1)]
    with pytest.raises(IncompleteDataError):
        bipartition_bound(b, cx, dp)


def test_verdict_examples():
    good = full_inseparability_test(_report(0.743, 0.743))
    assert good.overall and good.implied
    np.testing.assert_allclose(good.margin_db, squeezing_db(0.743) - BOUND_DB)
    assert good.margin_db[0] == pytest.approx(-1.29, abs=0.01)
    assert good.partial[-1] and not good.partial[0]
    vac = full_inseparability_test(_report(2.0, 2.0))
    assert not vac.passed.any() and not vac.overall
    vx = np.full(5, 0.5)
    vx[2] = 1.0
    edge = full_inseparability_test(_report(vx, np.full(5, 0.5)))
    assert not edge.passed[2] and edge.passed[[0, 1, 3, 4]].all() and not edge.overall
    with pytest.raises(CoverageError):
        full_inseparability_test(_report(0.5, 0.5), k_max=10)


def test_accumulator_merge_and_report():
    rng = np.random.default_rng(5)
    frames = [(rng.normal(size=6), rng.normal(size=6)) for _ in range(30)]
    whole = VarianceAccumulator(6)
    a, b = VarianceAccumulator(6), VarianceAccumulator(6)
    for i, (x, p) in enumerate(frames):
        whole.add(x, p)
        (a if i < 12 else b).add(x, p)
    a.merge(b)
    ra, rw = a.report(), whole.report()
    np.testing.assert_allclose(ra.variance["X"], rw.variance["X"])
    np.testing.assert_allclose(ra.std_error["P"], rw.std_error["P"])
    mean_db, std_db = rw.aggregate("X")
    db = squeezing_db(rw.variance["X"])
    assert mean_db == pytest.approx(db.mean()) and std_db == pytest.approx(db.std(ddof=1))
    assert np.all(rw.std_error["X"] >= 0) and np.all(rw.variance["X"] >= 0)
    with pytest.raises(SizeError):
        whole.add(np.zeros(3), np.zeros(3))


def test_variance_csv_and_summary(tmp_path):
    rep = _report(0.7, 0.8, n_k=3)
    p = tmp_path / "v.csv"
    write_variance_csv(p, rep, header="config_sha256=x")
    lines = p.read_text().splitlines()
    assert lines[:2] == ["# config_sha256=x", "k,type,variance,std_error,db,pass"]
    assert len(lines) == 2 + 6
    assert lines[2].startswith("0,X,0.70000000,")
    text = summary_text(rep, full_inseparability_test(rep))
    assert "overall: PASS" in text


def test_oracle_vacuum_and_flat_limit():
    chain, w = design_filter_chain(), weight_function()
    a, b = _pair(0.0)
    for kind in "XP":
        assert analytic_variance_oracle(a, b, NetworkConfig(), chain, w, kind, n_grid=1 << 14) == pytest.approx(2.0)
    x = 1 / 3  # S_sq(0) = 0.25 with a cavity far wider than the detection band
    fa, fb = SqueezerSpec(x, 1e13), SqueezerSpec(x, 1e13, Orientation.SQUEEZE_P)
    for kind in "XP":
        v = analytic_variance_oracle(fa, fb, LOSSLESS, identity_chain(), w, kind, n_grid=1 << 14)
        assert v == pytest.approx(2 * 0.25, rel=1e-6)


def test_oracle_dark_noise_moves_toward_vacuum():
    chain, w = design_filter_chain(), weight_function()
    a, b = _pair(0.5)
    clean = analytic_variance_oracle(a, b, NetworkConfig(), chain, w, "X", n_grid=1 << 14)
    dark = analytic_variance_oracle(a, b, NetworkConfig(), chain, w, "X", dark_noise_db=-10, n_grid=1 << 14)
    assert clean < dark < 2.0


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 0.8), st.floats(0.0, 0.4), st.floats(0.0, 0.3))
def test_oracle_loss_monotone(pump, loss, extra):
    chain, w = design_filter_chain(), weight_function()
    a, b = _pair(pump)
    v1 = analytic_variance_oracle(a, b, NetworkConfig(fiber_loss=loss), chain, w, "X", n_grid=1 << 13)
    v2 = analytic_variance_oracle(a, b, NetworkConfig(fiber_loss=min(loss + extra, 1.0)), chain, w, "X",
                                  n_grid=1 << 13)
    v3 = analytic_variance_oracle(a, b, NetworkConfig(fiber_loss=loss, extra_efficiency=1 - extra), chain, w, "X",
                                  n_grid=1 << 13)
    assert abs(v2 - 2.0) <= abs(v1 - 2.0) + 1e-9
    assert abs(v3 - 2.0) <= abs(v1 - 2.0) + 1e-9


def test_calibrated_default_pump():
    cfg = RunConfig()
    chain, w = cfg.filter_chain(), cfg.weight_function()
    for kind in "XP":
        v = analytic_variance_oracle(cfg.squeezer_a, cfg.squeezer_b, cfg.network, chain, w, kind)
        assert squeezing_db(v) == pytest.approx(CALIBRATION_TARGET_DB, abs=0.005)
    x = calibrate_pump(CALIBRATION_TARGET_DB, cfg.squeezer_a, cfg.squeezer_b, cfg.network, chain, w, "X")
    assert x == pytest.approx(CALIBRATED_PUMP, abs=1e-4)
    with pytest.raises(ParameterError):
        calibrate_pump(-40.0, cfg.squeezer_a, cfg.squeezer_b, cfg.network, chain, w, "X")
