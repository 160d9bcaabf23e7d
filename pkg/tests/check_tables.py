import pandas as pd
from src.config import TABLES_DIR


def test_convergence_table_exists_and_has_expected_columns():
    """Check the table written by scripts/convergence_table.py."""
    path = TABLES_DIR / "convergence_p3_q2.parquet"
    assert path.exists(), f"{path} not found; run scripts/convergence_table.py first"

    df = pd.read_parquet(path)
    required_cols = {"alpha", "z", "F_alpha", "lower_analytic", "lower_tree", "exact", "gap"}
    assert required_cols.issubset(df.columns), f"Missing columns in {path}"
    assert not df.empty

    # lower bounds increase as alpha decreases and stay below the exact value
    assert df["lower_analytic"].is_monotonic_increasing
    assert (df["lower_analytic"] <= df["exact"]).all()
    assert df["gap"].iloc[-1] <= 0.05
