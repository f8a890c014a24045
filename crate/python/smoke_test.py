"""Smoke test for the rating_protocol_py extension module.

Build the module and place it next to this script first:

    cargo build -p rating-protocol-py --release
    cp target/release/librating_protocol_py.so python/rating_protocol_py.so

Then run:  python3 python/smoke_test.py
"""

import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

import rating_protocol_py as rp


def check(name, cond):
    print(f"{'ok  ' if cond else 'FAIL'} {name}")
    if not cond:
        sys.exit(1)


params = rp.IntrinsicParams(b=1.0, c=0.4, s=0.2, epsilon=0.05, omega=0.95)
protocol = rp.Protocol("full", rp.DesignParams.all_ones(), lam=0.5)

# Stationary distribution at the all-ones design: eta0 = eps/2 exactly.
eta0, eta1 = rp.stationary_distribution(rp.DesignParams.all_ones(), 0.05)
check("eta0 = eps/2 at all-ones design", abs(eta0 - 0.025) < 1e-12)
check("distribution sums to one", abs(eta0 + eta1 - 1.0) < 1e-12)

# Existence threshold for full compliance at the reference point.
thr = rp.existence_threshold(params, "full")
check("full threshold ~ 0.865838", abs(thr - 0.865838) < 1e-4)
check("omega above threshold sustains full", rp.is_sustainable(protocol, params)["sustainable"])
below = rp.is_sustainable(protocol, params.with_omega(0.8))
check("omega below threshold does not", not below["sustainable"])

# Long-term utilities and welfare are consistent.
v0, v1 = rp.long_term_utilities(protocol, params)
check("good rating worth more than bad", v1 > v0)
w = rp.social_welfare(protocol, params)
check("welfare positive at reference point", w > 0.0)

# Deviating to over-request while rated good has negative one-shot gain here.
gain = rp.deviation_gain(protocol, params, "second-stage:1")
check("over-request deviation unprofitable", gain < 0.0)

# Designed protocol: full strategy with interior punishment factors.
best = rp.select_protocol(params)
check("designer selects full", best["strategy"] == "full")
check("designed beta0 ~ 0.530", abs(best["beta0"] - 0.530) < 5e-3)
check("designed beta1 ~ 0.518", abs(best["beta1"] - 0.518) < 5e-3)
check("designed eta0 below all-ones eta0", best["eta0"] < 0.025)
check("designed welfare exceeds all-ones welfare", best["welfare"] > w)

# Per-strategy optimizer agrees with the selector on the winning strategy.
full = rp.alternate_optimize(params, "full")
check("optimizer feasible", full["feasible"])
check("optimizer matches selector", abs(full["eta0"] - best["eta0"]) < 1e-9)

# A short simulation settles near the analytic stationary distribution.
s = rp.simulate(protocol, params, n=2000, periods=200, seed=7)
check("simulated eta0 near analytic", abs(s["eta0"] - 0.025) < 0.01)
check("simulated welfare positive", s["mean_welfare"] > 0.0)

# Empirical deviation gain brackets zero-or-negative for a sustainable protocol.
est = rp.estimate_deviation_gain(protocol, params, "second-stage:1",
                                 n=800, periods=80, period=40, reps=4)
g = est[1]
check("empirical gain consistent with unprofitability",
      g["mean"] - g["ci_half_width"] < 0.0)

# Validation errors surface as ValueError.
try:
    rp.IntrinsicParams(b=0.5, c=0.4, s=0.2, epsilon=0.05, omega=0.95)
    check("inadmissible params rejected", False)
except ValueError:
    check("inadmissible params rejected", True)

print("smoke test passed")
