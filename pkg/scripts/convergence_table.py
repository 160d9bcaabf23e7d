# scripts/convergence_table.py
import sys
import os
from fractions import Fraction

# repo root on sys.path so that "import src..." works
ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from src.bellman import Exponents
from src.config import TABLES_DIR
from src.harness import convergence_study


def main():
    # Reference pair: the exact value at (f, A) = (1, 25/21) is 7
    exps = Exponents(3.0, 2.0)
    f, A = 1.0, 25.0 / 21.0
    alphas = [Fraction(1, 2 ** i) for i in range(1, 11)]
    print(f"Convergence study p={exps.p:g} q={exps.q:g} f={f:g} A={A:.15g}")

    table = convergence_study(exps, f, A, alphas, m=2, depth=16)
    print(table.to_string(index=False))

    if not table["lower_analytic"].is_monotonic_increasing:
        raise SystemExit("Analytic lower bounds are not increasing along the alpha list")
    final_gap = table["gap"].iloc[-1]
    print(f"\nGap to the exact value at alpha=2^-10: {final_gap:.4%}")

    TABLES_DIR.mkdir(parents=True, exist_ok=True)
    parquet_path = TABLES_DIR / "convergence_p3_q2.parquet"
    csv_path = TABLES_DIR / "convergence_p3_q2.csv"
    table.to_parquet(parquet_path, index=False)
    table.to_csv(csv_path, index=False, float_format="%.15g")
    print(f"Saved: {parquet_path}")
    print(f"Saved: {csv_path}")


if __name__ == "__main__":
    main()
