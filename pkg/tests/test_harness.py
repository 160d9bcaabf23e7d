# tests/test_harness.py
import os
from fractions import Fraction

import numpy as np
import pytest

from src import harness
from src.bellman import Exponents, h_inv
from src.errors import DomainError
from src.harness import (SUITES, SuiteConfig, check_brute_force, check_domination, check_maximal_inequality,
                         check_stopping_cells, check_weak_type, convergence_study, failure_dir, random_step,
                         run_suite, summarize, surface_domination, triple_of)
from src.tree import MAdicTree, StepFunction, integrate, load_step_function, maximal_operator

REF = Exponents(3.0, 2.0)
FULL_SUITES = bool(os.getenv("BELLMAN_FULL_SUITES"))


def test_random_step_is_deterministic():
    config = SuiteConfig(seed=0)
    for trial in range(5):
        a, b = random_step(config, trial), random_step(config, trial)
        assert a.tree == b.tree
        assert np.array_equal(a.values, b.values)
    assert not np.array_equal(random_step(config, 0, mode="uniform").values,
                              random_step(SuiteConfig(seed=1), 0, mode="uniform").values)


def test_random_step_modes():
    config = SuiteConfig(seed=4, depth=8)
    for trial in range(20):
        sparse = random_step(config, trial, mode="sparse")
        assert 0 < np.count_nonzero(sparse.values) <= sparse.tree.depth
        assert random_step(config, trial, mode="constant").is_constant()
        assert sparse.tree.depth <= 8
    small = random_step(config, 0, mode="integer", max_leaves=64)
    assert small.tree.n_leaves <= 64
    assert np.all(small.values == np.round(small.values))
    with pytest.raises(DomainError):
        random_step(config, 0, mode="gaussian")


def test_maximal_inequality_examples():
    const = StepFunction.constant(MAdicTree(2, 4), 2.0)
    row = check_maximal_inequality(const, REF)
    assert abs(row["slack"]) <= 1e-12 and row["passed"]

    phi = StepFunction(MAdicTree(2, 1), [2.0, 0.0])
    row = check_maximal_inequality(phi, REF)
    assert row["lhs"] == 4.5
    assert abs(row["rhs"] - 7.0) <= 1e-12
    assert row["passed"]


def test_domination_examples():
    phi = StepFunction(MAdicTree(2, 1), [2.0, 0.0])
    assert (triple_of(phi, REF).f, triple_of(phi, REF).A, triple_of(phi, REF).F) == (1.0, 2.0, 4.0)
    row = check_domination(phi, REF)
    assert row["k"] == 1.25
    assert abs(row["upper"] - 4.0 * h_inv(REF, 1.25) ** 3) <= 1e-12
    assert row["empirical"] == 4.5
    assert row["upper"] >= 4.5 and row["passed"]

    const = StepFunction.constant(MAdicTree(2, 3), 1.7)
    row = check_domination(const, REF)
    assert row["passed"] and row["upper"] == row["F"]


def test_domination_fills_empirical_value():
    rng = np.random.default_rng(9)
    phi = StepFunction(MAdicTree(2, 6), rng.uniform(0.0, 4.0, 64))
    row = check_domination(phi, REF)
    assert row["empirical"] == integrate(maximal_operator(phi), REF.p)
    assert row["empirical"] <= row["upper"] and row["passed"]


def test_maximal_inequality_is_equality_on_constants():
    report = run_suite("maximal", SuiteConfig(seed=0, trials=200))
    constants = report[report["constant"]]
    assert len(constants) > 0
    assert (constants["slack"].abs() <= 1e-12 * constants["lhs"]).all()


def test_checks_reject_zero_function():
    zero = StepFunction(MAdicTree(2, 2), np.zeros(4))
    with pytest.raises(DomainError):
        check_maximal_inequality(zero, REF)


def test_weak_type_and_stopping_cells():
    phi = StepFunction(MAdicTree(2, 2), [4.0, 0.0, 0.0, 0.0])
    row = check_weak_type(phi, REF)
    assert row["passed"]
    assert row["min_slack_weak"] >= 0
    assert check_stopping_cells(phi, REF)["passed"]


def test_brute_force_limit():
    assert check_brute_force(StepFunction(MAdicTree(2, 3), np.arange(8.0)))["passed"]
    with pytest.raises(DomainError):
        check_brute_force(StepFunction(MAdicTree(2, 7), np.ones(128)))


SUITE_TRIALS = {"stopping": 30, "weaktype": 100}


@pytest.mark.parametrize("suite", [s for s in SUITES if s != "surface"])
def test_suite_has_no_violations(suite, tmp_path):
    config = SuiteConfig(seed=0, trials=SUITE_TRIALS.get(suite, 200))
    report = run_suite(suite, config, failures_base=tmp_path)
    assert summarize(suite, report) == {"suite": suite, "checks": len(report), "violations": 0,
                                        "status": "PASS"}
    assert not any(tmp_path.iterdir())


@pytest.mark.skipif(not FULL_SUITES, reason="set BELLMAN_FULL_SUITES=1 for 1000-trial runs")
@pytest.mark.parametrize("suite", ["maximal", "weaktype", "domination", "bruteforce"])
def test_full_suites(suite, tmp_path):
    report = run_suite(suite, SuiteConfig(seed=7, trials=1000), failures_base=tmp_path)
    assert summarize(suite, report)["violations"] == 0


def test_surface_suite():
    report = run_suite("surface", SuiteConfig())
    assert len(report) == 150
    assert report["passed"].all()
    assert report["on_surface"].all()
    ref = report[(report["p"] == 3.0) & np.isclose(report["A"], 25 / 21)]
    assert len(ref) == 1
    assert abs(ref["exact"].iloc[0] - 7.0) <= 1e-9


def test_surface_domination_point_count():
    report = surface_domination([Exponents(2.0, 1.5)], n_points=5)
    assert len(report) == 5 and report["passed"].all()


def test_failures_are_dumped(monkeypatch, tmp_path):
    monkeypatch.setitem(harness.CHECKS, "doob", lambda phi, exps, tol: {"passed": False})
    config = SuiteConfig(seed=3, trials=2, exponents=(REF,))
    report = run_suite("doob", config, failures_base=tmp_path)
    assert summarize("doob", report)["status"] == "FAIL"
    out_dir = failure_dir("doob", 3, tmp_path)
    dumped = sorted(p.name for p in out_dir.iterdir())
    assert dumped == ["trial_00000.txt", "trial_00001.txt"]
    phi = load_step_function(out_dir / "trial_00001.txt")
    assert np.array_equal(phi.values, random_step(config, 1).values)
    assert report["dump"].notna().all()


def test_unknown_suite():
    with pytest.raises(DomainError):
        run_suite("nonexistent", SuiteConfig())


def test_parallel_runs_match_serial(tmp_path):
    serial = run_suite("maximal", SuiteConfig(seed=5, trials=20, n_jobs=1), failures_base=tmp_path)
    parallel = run_suite("maximal", SuiteConfig(seed=5, trials=20, n_jobs=2), failures_base=tmp_path)
    assert serial[["trial", "lhs", "rhs"]].equals(parallel[["trial", "lhs", "rhs"]])


def test_convergence_study():
    alphas = [Fraction(1, 2 ** i) for i in range(1, 11)]
    table = convergence_study(REF, 1.0, 25 / 21, alphas, depth=12)
    assert len(table) == 10
    assert table["lower_analytic"].is_monotonic_increasing
    assert (table["lower_analytic"] < table["exact"]).all()
    assert table["gap"].iloc[-1] <= 0.05
    assert abs(table["lower_analytic"].iloc[2] - 6.62) <= 1e-2
    # truncated bounds are realised on the tree
    hosted = table[table["max_rank"] >= 0]
    assert (hosted["lower_tree"] >= hosted["lower_truncated"] * (1 - 1e-9)).all()
    assert table["max_rank"].iloc[-1] == 0


def test_convergence_study_single_alpha():
    table = convergence_study(REF, 1.0, 25 / 21, [Fraction(1, 4)])
    assert len(table) == 1
