# scripts/run_suites.py
import sys
import os

# repo root on sys.path for imports
ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

import pandas as pd

from src.config import TABLES_DIR
from src.harness import SUITES, SuiteConfig, run_suite, summarize


def main():
    trials = int(sys.argv[1]) if len(sys.argv) > 1 else 1000
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 7
    config = SuiteConfig(seed=seed, trials=trials, m=2, depth=10)
    print(f"Running {len(SUITES)} suites, {trials} trials, seed {seed}")

    out_dir = TABLES_DIR / f"suites_seed{seed}"
    out_dir.mkdir(parents=True, exist_ok=True)
    summaries = []
    for suite in SUITES:
        report = run_suite(suite, config)
        report.to_parquet(out_dir / f"{suite}.parquet", index=False)
        summaries.append(summarize(suite, report))
        print(f"  {suite}: {summaries[-1]['checks']} checks, {summaries[-1]['violations']} violations")

    summary = pd.DataFrame(summaries)
    summary.to_csv(out_dir / "summary.csv", index=False)
    print(summary)
    print(f"Saved reports to {out_dir}")
    if (summary["violations"] > 0).any():
        raise SystemExit(1)


if __name__ == "__main__":
    main()
