"""From raw prices to trading signals, the classical way.

Generates a small synthetic futures panel, walks it through the data
pipeline (daily returns, ex-ante volatility, normalised features) and
prints the three rule-based position sets side by side.

Run: python demos/01_features_and_classical_rules.py
"""

import pandas as pd

from tsmom.classical_rules import long_only, macd_rule, sgn_returns
from tsmom.market_data import build_features, compute_returns, exante_vol
from tsmom.synth import synth_prices

pd.set_option("display.width", 120)

assets, manifest = synth_prices(n_assets=4, periods=900, seed=42, kind="mixed")
print(f"panel: {manifest['n_assets']} assets x {manifest['periods']} days, "
      f"{manifest['n_trend_assets']} trending")

returns = compute_returns(assets)
vol = exante_vol(returns)
features = build_features(assets, returns, vol)

aid = assets[0].asset_id
frame = features.frames[aid]
first_valid = frame.index[frame["valid"]][0]
print(f"\nfeatures for {aid} warm up on {first_valid.date()} "
      f"(vol span + slowest MACD scale + longest return window):")
print(frame.loc[frame["valid"]].head(3).round(3))

# the three reference rules: always long, sign of the past year,
# and the MACD curve phi(.) that shades overextended trends back down
rules = {
    "long_only": long_only(vol),
    "sgn": sgn_returns(returns),
    "macd": macd_rule(assets),
}
snapshot = pd.DataFrame({name: pos.positions[aid] for name, pos in rules.items()})
print(f"\npositions for {aid} (last 5 tradeable days):")
print(snapshot.dropna().tail(5).round(3))

print("\nposition bounds per rule:")
for name, pos in rules.items():
    stacked = pos.positions.stack()
    print(f"  {name:10s} [{stacked.min():+.3f}, {stacked.max():+.3f}] "
          f"on {stacked.size} asset-days")
