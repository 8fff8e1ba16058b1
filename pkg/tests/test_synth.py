"""Synthetic generator tests: determinism, calibration, and loader
compatibility."""

import math

import numpy as np
import pytest

from tsmom.backtester import tsmom_returns
from tsmom.classical_rules import sgn_returns
from tsmom.market_data import compute_returns, exante_vol, load_csv
from tsmom.perf_metrics import annualised_sharpe
from tsmom.synth import synth_prices, write_manifest, write_wide_csv


def test_fixed_seed_is_deterministic():
    a, _ = synth_prices(n_assets=10, periods=2520, seed=7)
    b, _ = synth_prices(n_assets=10, periods=2520, seed=7)
    for x, y in zip(a, b):
        assert x.asset_id == y.asset_id
        assert np.array_equal(x.prices.to_numpy(), y.prices.to_numpy())
    c, _ = synth_prices(n_assets=10, periods=2520, seed=8)
    assert not np.array_equal(a[0].prices.to_numpy(), c[0].prices.to_numpy())


def test_kind_controls_asset_mix():
    trend, m1 = synth_prices(n_assets=4, periods=300, seed=1, kind="trend")
    assert [a.asset_id[0] for a in trend] == ["T"] * 4
    noise, m2 = synth_prices(n_assets=4, periods=300, seed=1, kind="noise")
    assert [a.asset_id[0] for a in noise] == ["N"] * 4
    mixed, m3 = synth_prices(n_assets=4, periods=300, seed=1, kind="mixed")
    assert [a.asset_id[0] for a in mixed] == ["T", "T", "N", "N"]
    assert (m1["n_trend_assets"], m2["n_trend_assets"], m3["n_trend_assets"]) == (4, 0, 2)
    with pytest.raises(ValueError):
        synth_prices(kind="drift")


def test_prices_positive_and_noise_scale_matches():
    assets, _ = synth_prices(n_assets=6, periods=1000, seed=3, kind="mixed")
    for a in assets:
        p = a.prices.to_numpy()
        assert np.isfinite(p).all() and (p > 0).all()
        daily = np.diff(p) / p[:-1]
        assert 0.009 <= daily.std() <= 0.012


def test_manifest_records_generator_knobs():
    assets, manifest = synth_prices(n_assets=5, periods=400, seed=9,
                                    kind="mixed", snr=0.8)
    assert manifest["seed"] == 9
    assert manifest["snr_annualised"] == 0.8
    assert manifest["periods"] == 400
    assert manifest["asset_ids"] == [a.asset_id for a in assets]
    assert manifest["regime_mean_days"] == 750.0


def test_trend_panel_sgn_sharpe_clears_calibration_bar():
    assets, _ = synth_prices(n_assets=10, periods=2520, seed=7, kind="trend")
    rets = compute_returns(assets)
    vol = exante_vol(rets)
    strat = tsmom_returns(sgn_returns(rets), rets, vol)
    assert annualised_sharpe(strat.portfolio) > 0.5


def test_noise_panel_sgn_sharpe_inside_null_band():
    assets, _ = synth_prices(n_assets=10, periods=2520, seed=7, kind="noise")
    rets = compute_returns(assets)
    vol = exante_vol(rets)
    strat = tsmom_returns(sgn_returns(rets), rets, vol)
    n = len(strat.portfolio)
    band = 1.96 * math.sqrt(252.0 / n)
    assert abs(annualised_sharpe(strat.portfolio)) <= band


def test_wide_csv_roundtrips_through_loader(tmp_path):
    assets, manifest = synth_prices(n_assets=3, periods=50, seed=5)
    path = tmp_path / "panel.csv"
    write_wide_csv(assets, path)
    write_manifest(manifest, tmp_path / "panel.json")
    loaded = load_csv(path, schema="wide")
    assert loaded.dropped_rows == 0
    by_id = {a.asset_id: a for a in loaded.assets}
    assert set(by_id) == {a.asset_id for a in assets}
    for a in assets:
        got = by_id[a.asset_id].prices
        assert np.array_equal(got.index.to_numpy(), a.prices.index.to_numpy())
        # csv float parsing is accurate to ~1 ULP, not bit-exact
        assert np.allclose(got.to_numpy(), a.prices.to_numpy(), rtol=1e-12, atol=0)
