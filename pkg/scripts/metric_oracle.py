"""Regenerate tests/data/metric_fixture.json with exact rational arithmetic.

Independent of the package: every value is computed from Fractions and only
the final square root is taken in floating point.
"""

import json
import math
from fractions import Fraction
from pathlib import Path

CASES = [
    ([100, 200], [110, 180]),
    ([5, 5, 5], [5, 5, 5]),
    ([0, 10, 20, 0], [3, 12, 14, 1]),
    ([1200, 3400, 560, 78, 9100, 15000], [1000, 3900, 600, 50, 8000, 17250]),
    ([0, 0], [1, 2]),
]


def oracle(y, yhat):
    n = len(y)
    err = [Fraction(a) - Fraction(b) for a, b in zip(y, yhat)]
    mse = sum(e * e for e in err) / n
    mae = sum(abs(e) for e in err) / n
    pos = [(abs(e), Fraction(a)) for e, a in zip(err, y) if a > 0]
    mape = 100 * sum(e / a for e, a in pos) / len(pos) if pos else None
    return {
        "observed": y,
        "predicted": yhat,
        "rmse": math.sqrt(mse),
        "mae": float(mae),
        "mape_pct": None if mape is None else float(mape),
        "mape_excluded": n - len(pos),
    }


def main():
    out = Path(__file__).resolve().parent.parent / "tests" / "data" / "metric_fixture.json"
    out.write_text(json.dumps([oracle(y, p) for y, p in CASES], indent=1) + "\n", encoding="utf-8")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
