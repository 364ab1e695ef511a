#!/usr/bin/env python3
"""Smoke test for the volslice_py extension module.

Build the module first:

    cargo build -p volslice-py --release

then run:

    python3 python/smoke_test.py
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_module():
    candidates = [
        REPO / "target" / "release" / "libvolslice_py.so",
        REPO / "target" / "debug" / "libvolslice_py.so",
    ]
    for built in candidates:
        if built.exists():
            stage = Path(tempfile.mkdtemp(prefix="volslice_py_"))
            shutil.copy(built, stage / "volslice_py.so")
            sys.path.insert(0, str(stage))
            import volslice_py

            return volslice_py
    sys.exit("libvolslice_py.so not found; run: cargo build -p volslice-py --release")


def main():
    vs = import_module()

    # Log-normal kernel.
    dist = vs.LogNormal(shape=1.0, location=0.0, scale=1.0)
    assert abs(dist.pdf(1.0) - 1.0 / math.sqrt(2.0 * math.pi)) < 1e-9
    assert abs(dist.mean() - math.exp(0.5)) < 1e-12
    assert dist.pdf(0.0) == 0.0

    draws = vs.LogNormal(shape=0.5, scale=100_000.0).sample(10_000, seed=7)
    assert draws == vs.LogNormal(shape=0.5, scale=100_000.0).sample(10_000, seed=7)
    fit = vs.LogNormal.fit(draws)
    assert abs(fit.shape - 0.5) < 0.02, fit.shape
    assert abs(fit.scale / 100_000.0 - 1.0) < 0.02, fit.scale

    # Forecast helpers.
    lam = vs.lambda_from_half_life(5.0)
    assert abs(lam - 0.129449) < 1e-6
    assert abs((1.0 - lam) ** 5 - 0.5) < 1e-12
    assert abs(vs.ewma([10.47, 7.37], lam) - (lam * 7.37 + (1 - lam) * 10.47)) < 1e-12
    assert vs.mape([100.0, 200.0], [110.0, 180.0]) == 10.0

    # Full pipeline over a synthetic month.
    with tempfile.TemporaryDirectory() as tmp:
        csv_path = str(Path(tmp) / "month.csv")
        n = vs.write_synthetic_month(csv_path, days=8, seed=42, kind="tsla")
        assert n == 8 * 390, n

        pred = vs.predict_csv(csv_path, "2024-10-16", seed=1, iterations=4000, burn_in=1000)
        assert pred["target_date"] == "2024-10-16"
        assert pred["expected_range_5min"] > 0.0
        assert pred["predicted_volume"] > 0.0
        assert 5 <= pred["chosen_k"] <= 10

        again = vs.predict_csv(csv_path, "2024-10-16", seed=1, iterations=4000, burn_in=1000)
        assert pred == again, "prediction is not deterministic"

        report = vs.backtest_csv(csv_path, seed=1, iterations=4000, burn_in=1000)
        assert len(report["dates"]) == 3
        assert math.isfinite(report["mape_volume"])
        assert math.isfinite(report["mape_range"])
        assert all(v > 0 for v in report["predicted_volume"])

    print("volslice_py smoke test passed")


if __name__ == "__main__":
    main()
