import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .bellman import (ConstraintTriple, Exponents, bellman_on_surface, critical_f, doob_constant, hp,
                      two_variable_bellman, upper_bound)
from .config import FAILURES_DIR, INEQUALITY_RTOL, N_JOBS
from .errors import DomainError
from .extremal import (ExtremalParams, analytic_norms, build_phi, build_s, parse_alpha)
from .tree import (MAdicTree, StepFunction, dump_step_function, integrate, integrate_leafwise,
                   layer_cake, maximal_operator, stopping_cells)

logger = logging.getLogger(__name__)
if not logger.handlers:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - %(message)s")

DEFAULT_EXPONENTS = (Exponents(3.0, 2.0), Exponents(2.0, 1.5), Exponents(5.0, 3.0))

# Mixture used when no mode is requested
MODES = ("uniform", "heavy", "sparse", "constant")
MODE_WEIGHTS = (0.35, 0.3, 0.25, 0.1)

# Leaf budget of the naive ancestor enumeration
BRUTE_FORCE_LEAVES = 64


@dataclass(frozen=True)
class SuiteConfig:
    seed: int = 0
    trials: int = 200
    m: int = 2
    depth: int = 10
    exponents: Tuple[Exponents, ...] = field(default=DEFAULT_EXPONENTS)
    tolerance: float = INEQUALITY_RTOL
    n_jobs: int = N_JOBS

    def __post_init__(self):
        if self.trials < 1:
            raise DomainError(f"trials must be >= 1, got {self.trials}")
        if not self.tolerance > 0:
            raise DomainError(f"tolerance must be positive, got {self.tolerance}")


def random_step(config: SuiteConfig, trial: int = 0, mode: Optional[str] = None,
                max_leaves: Optional[int] = None) -> StepFunction:
    """
    Random nonnegative step function, reproducible from (seed, trial).
    Modes: uniform, heavy (Pareto tail), sparse (at most D spikes), constant,
    integer (small integers, exact sums) and zero.
    """
    rng = np.random.default_rng([config.seed, trial])
    max_depth = config.depth
    if max_leaves is not None:
        max_depth = min(max_depth, int(math.log(max_leaves, config.m) + 1e-9))
    depth = int(rng.integers(1, max_depth + 1)) if max_depth >= 1 else 0
    tree = MAdicTree(config.m, depth)
    n = tree.n_leaves
    if mode is None:
        mode = str(rng.choice(MODES, p=MODE_WEIGHTS))

    if mode == "uniform":
        values = rng.uniform(0.0, 10.0, n)
    elif mode == "heavy":
        values = rng.pareto(1.5, n)
    elif mode == "sparse":
        spikes = int(rng.integers(1, max(depth, 1) + 1))
        values = np.zeros(n)
        where = rng.choice(n, size=min(spikes, n), replace=False)
        values[where] = 10.0 * (1.0 + rng.pareto(1.5, where.size))
    elif mode == "constant":
        values = np.full(n, rng.uniform(0.1, 10.0))
    elif mode == "integer":
        values = rng.integers(0, 1000, n).astype(float)
    elif mode == "zero":
        values = np.zeros(n)
    else:
        raise DomainError(f"unknown mode {mode!r}")
    return StepFunction(tree, values)


def triple_of(phi: StepFunction, exps: Exponents) -> ConstraintTriple:
    return ConstraintTriple(integrate(phi, 1.0), integrate(phi, exps.q), integrate(phi, exps.p))


def _require_nonzero(phi: StepFunction):
    if not np.any(phi.values > 0):
        raise DomainError("the check needs a function that is not identically 0")


def check_maximal_inequality(phi: StepFunction, exps: Exponents,
                             tolerance: float = INEQUALITY_RTOL) -> Dict:
    """
    ∫(Mφ)^p <= f^p - p/(p-q) f^(p-q) A + p/(p-q) ∫(Mφ)^(p-q) φ^q, both sides on the tree.
    Equality holds for constants.
    """
    _require_nonzero(phi)
    p, q = exps.p, exps.q
    f, A = integrate(phi, 1.0), integrate(phi, q)
    mphi = maximal_operator(phi)
    lhs = integrate(mphi, p)
    cross = integrate_leafwise(phi.tree, mphi.values ** (p - q) * phi.values ** q)
    c = p / (p - q)
    # the bracket vanishes exactly for constants
    rhs = f ** p + c * (cross - f ** (p - q) * A)
    slack = rhs - lhs
    return {"lhs": lhs, "rhs": rhs, "slack": slack,
            "passed": slack >= -tolerance * max(abs(lhs), abs(rhs))}


def check_weak_type(phi: StepFunction, exps: Exponents, tolerance: float = INEQUALITY_RTOL) -> Dict:
    """
    λ μ(E_λ) <= ∫_{E_λ} φ and λ^q μ(E_λ) <= ∫_{E_λ} φ^q with E_λ = {Mφ >= λ},
    at every distinct value of Mφ and every midpoint between consecutive values.
    """
    _require_nonzero(phi)
    q = exps.q
    n = phi.tree.n_leaves
    mphi = maximal_operator(phi)
    order = np.argsort(-mphi.values, kind="stable")
    m_desc = mphi.values[order]
    cum_phi = np.concatenate(([0.0], np.cumsum(phi.values[order]))) / n
    cum_phi_q = np.concatenate(([0.0], np.cumsum(phi.values[order] ** q))) / n

    distinct = np.unique(m_desc)[::-1]
    distinct = distinct[distinct > 0]
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    lams = np.concatenate((distinct, mids))
    # leaves with Mφ >= λ form a prefix of the descending order
    counts = np.searchsorted(-m_desc, -lams, side="right")
    measure = counts / n
    slack_one = cum_phi[counts] - lams * measure
    slack_q = cum_phi_q[counts] - lams ** q * measure
    ok_one = slack_one >= -tolerance * cum_phi[counts]
    ok_q = slack_q >= -tolerance * cum_phi_q[counts]
    return {"levels": int(lams.size),
            "min_slack_weak": float(slack_one.min()),
            "min_slack_holder": float(slack_q.min()),
            "passed": bool(ok_one.all() and ok_q.all())}


def check_domination(phi: StepFunction, exps: Exponents, tolerance: float = INEQUALITY_RTOL) -> Dict:
    """∫(Mφ)^p <= F h^(-1)(k)^p. Constants go to the equality case k = q, bound = F."""
    _require_nonzero(phi)
    triple = triple_of(phi, exps)
    empirical = integrate(maximal_operator(phi), exps.p)
    if phi.is_constant():
        bound = triple.F
        return {"f": triple.f, "A": triple.A, "F": triple.F, "k": exps.q, "upper": bound,
                "empirical": empirical, "exact": None, "on_surface": False,
                "passed": abs(empirical - bound) <= tolerance * bound}
    try:
        report = upper_bound(exps, triple)
    except DomainError:
        # a nearly constant φ can round onto the boundary of the triple domain
        logger.warning("triple %s rounds onto the domain boundary; bounding without validation", triple)
        report = upper_bound(exps, triple, validate=False)
    report = replace(report, lower_bound_empirical=empirical)
    row = {"f": triple.f, "A": triple.A, "F": triple.F, **report.as_dict()}
    row["passed"] = report.is_consistent(tolerance)
    return row


def check_doob(phi: StepFunction, exps: Exponents, tolerance: float = INEQUALITY_RTOL) -> Dict:
    """‖Mφ‖_p <= p/(p-1) ‖φ‖_p."""
    _require_nonzero(phi)
    p = exps.p
    lhs = integrate(maximal_operator(phi), p) ** (1.0 / p)
    rhs = doob_constant(p) * integrate(phi, p) ** (1.0 / p)
    return {"lhs": lhs, "rhs": rhs, "slack": rhs - lhs, "passed": lhs <= rhs * (1.0 + tolerance)}


def check_two_variable(phi: StepFunction, exps: Exponents, tolerance: float = INEQUALITY_RTOL) -> Dict:
    """∫(Mφ)^p <= F ω_p(f^p/F)^p: dropping the L^q constraint can only raise the supremum."""
    _require_nonzero(phi)
    p = exps.p
    f, F = integrate(phi, 1.0), integrate(phi, p)
    # Jensen gives f^p <= F; constants can overshoot by rounding
    F = max(F, f ** p)
    lhs = integrate(maximal_operator(phi), p)
    rhs = two_variable_bellman(p, f, F)
    return {"lhs": lhs, "rhs": rhs, "slack": rhs - lhs, "passed": lhs <= rhs * (1.0 + tolerance)}


def check_layer_cake(phi: StepFunction, exps: Exponents, tolerance: float = INEQUALITY_RTOL) -> Dict:
    mphi = maximal_operator(phi)
    direct = integrate(mphi, exps.p)
    layered = layer_cake(mphi, exps.p)
    residual = abs(direct - layered) / max(direct, 1e-300)
    return {"lhs": direct, "rhs": layered, "slack": -residual, "passed": residual <= tolerance}


def check_stopping_cells(phi: StepFunction, exps: Exponents, tolerance: float = INEQUALITY_RTOL,
                         max_levels: int = 16) -> Dict:
    """Maximal cells with average >= λ are disjoint, cover {Mφ >= λ} exactly, and obey the weak type bound."""
    _require_nonzero(phi)
    tree = phi.tree
    mphi = maximal_operator(phi)
    distinct = np.unique(mphi.values)
    distinct = distinct[distinct > 0]
    lams = distinct[np.linspace(0, distinct.size - 1, min(max_levels, distinct.size)).astype(int)]
    ok = True
    for lam in lams:
        coverage = np.zeros(tree.n_leaves, dtype=np.int64)
        for level, index in stopping_cells(phi, lam):
            start, end = tree.leaf_range(level, index)
            coverage[start:end] += 1
            avg = phi.values[start:end].mean()
            ok &= bool(avg >= lam * (1.0 - tolerance))
        ok &= bool(coverage.max() <= 1)
        ok &= bool(np.array_equal(coverage == 1, mphi.values >= lam))
    return {"levels": int(lams.size), "passed": ok}


def maximal_operator_naive(phi: StepFunction) -> np.ndarray:
    """Mφ by enumerating every ancestor of every leaf; only for small trees."""
    tree = phi.tree
    out = np.empty(tree.n_leaves)
    for leaf in range(tree.n_leaves):
        best = 0.0
        for level, index in tree.ancestors(leaf):
            start, end = tree.leaf_range(level, index)
            best = max(best, phi.values[start:end].sum() / (end - start))
        out[leaf] = best
    return out


def check_brute_force(phi: StepFunction, exps: Optional[Exponents] = None,
                      tolerance: float = 0.0) -> Dict:
    if phi.tree.n_leaves > BRUTE_FORCE_LEAVES:
        raise DomainError(f"naive enumeration is limited to {BRUTE_FORCE_LEAVES} leaves")
    fast = maximal_operator(phi).values
    naive = maximal_operator_naive(phi)
    return {"max_abs_diff": float(np.max(np.abs(fast - naive))), "passed": bool(np.array_equal(fast, naive))}


CHECKS: Dict[str, Callable[..., Dict]] = {
    "maximal": check_maximal_inequality,
    "weaktype": check_weak_type,
    "domination": check_domination,
    "doob": check_doob,
    "bellman2": check_two_variable,
    "layercake": check_layer_cake,
    "stopping": check_stopping_cells,
    "bruteforce": check_brute_force,
}
SUITES = tuple(CHECKS) + ("surface",)

# Older names accepted on the command line
SUITE_ALIASES = {"lemma41": "maximal"}


def resolve_suite(name: str) -> str:
    name = SUITE_ALIASES.get(name, name)
    if name not in SUITES:
        raise DomainError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return name


def _run_trial(suite: str, config: SuiteConfig, trial: int) -> List[Dict]:
    check = CHECKS[suite]
    if suite == "bruteforce":
        phi = random_step(config, trial, mode="integer", max_leaves=BRUTE_FORCE_LEAVES)
        return [{"trial": trial, "depth": phi.tree.depth, **check(phi)}]
    phi = random_step(config, trial)
    rows = []
    for exps in config.exponents:
        row = check(phi, exps, config.tolerance)
        rows.append({"trial": trial, "p": exps.p, "q": exps.q, "depth": phi.tree.depth,
                     "constant": phi.is_constant(), **row})
    return rows


def failure_dir(suite: str, seed: int, base: Optional[Path] = None) -> Path:
    return Path(base or FAILURES_DIR) / f"{suite}_seed{seed}"


def surface_domination(exponents: Sequence[Exponents] = DEFAULT_EXPONENTS, n_points: int = 50,
                       f: float = 1.0, tolerance: float = INEQUALITY_RTOL) -> pd.DataFrame:
    """
    upper bound >= exact value at surface points (f, A, F(f, A)). A ranges over the
    interior of (f^q, f^q / H_q(p/(p-1))); the reference point A = 25/21 is added for (3, 2).
    """
    rows = []
    for exps in exponents:
        tau_min = hp(exps.q, exps.p / (exps.p - 1.0))
        taus = np.linspace(tau_min, 1.0, n_points + 2)[1:-1]
        a_values = [f ** exps.q / t for t in taus]
        if (exps.p, exps.q) == (3.0, 2.0):
            a_values[-1] = 25.0 / 21.0 * f ** exps.q
        for A in a_values:
            F = critical_f(exps, f, A)
            report = upper_bound(exps, ConstraintTriple(f, A, F))
            exact = bellman_on_surface(exps, f, A)
            rows.append({"p": exps.p, "q": exps.q, "f": f, "A": A, "F": F, "exact": exact,
                         "upper": report.upper_bound, "k": report.k, "on_surface": report.on_surface,
                         "passed": report.upper_bound >= exact * (1.0 - tolerance)})
    return pd.DataFrame(rows)


def run_suite(suite: str, config: SuiteConfig, failures_base: Optional[Path] = None) -> pd.DataFrame:
    """
    Run one suite over `config.trials` random functions. Trials fan out over a
    joblib pool; rows come back ordered by trial. Every failing function is
    written to `<failures>/<suite>_seed<seed>/trial_<n>.txt`.
    """
    suite = resolve_suite(suite)
    if suite == "surface":
        report = surface_domination(config.exponents, tolerance=config.tolerance)
    else:
        batches = Parallel(n_jobs=config.n_jobs)(
            delayed(_run_trial)(suite, config, trial) for trial in range(config.trials))
        report = pd.DataFrame([row for batch in batches for row in batch])

    failed = report[~report["passed"]]
    if not failed.empty and suite != "surface":
        out_dir = failure_dir(suite, config.seed, failures_base)
        dumps = {}
        for trial in sorted(set(failed["trial"])):
            mode = "integer" if suite == "bruteforce" else None
            leaves = BRUTE_FORCE_LEAVES if suite == "bruteforce" else None
            phi = random_step(config, int(trial), mode=mode, max_leaves=leaves)
            dumps[trial] = str(dump_step_function(phi, out_dir / f"trial_{int(trial):05d}.txt"))
        report["dump"] = report["trial"].map(dumps)
        logger.warning("Suite %s: %d violations, functions written to %s", suite, len(failed), out_dir)
    else:
        logger.info("Suite %s: %d checks, 0 violations", suite, len(report))
    return report


def summarize(suite: str, report: pd.DataFrame) -> Dict:
    violations = int((~report["passed"]).sum())
    return {"suite": suite, "checks": int(len(report)), "violations": violations,
            "status": "PASS" if violations == 0 else "FAIL"}


def convergence_study(exps: Exponents, f: float, A: float, alphas: Sequence, m: int = 2,
                      depth: int = 16) -> pd.DataFrame:
    """
    Extremal lower bounds along a decreasing list of base-m alphas. Each row has
    the analytic bound z^p F(α), the truncated bound realised on a tree of at most
    `depth` levels, the tree value of ∫(Mφ)^p, and the gap to the exact value.
    """
    exact = bellman_on_surface(exps, f, A)
    rows = []
    for alpha in alphas:
        params = ExtremalParams.from_constraint(exps, f, A, alpha)
        full = analytic_norms(params)
        _, k = parse_alpha(params.alpha, m)
        max_rank = depth // k - 1
        truncated = tree_value = math.nan
        if max_rank >= 0:
            cons = build_s(MAdicTree(m, k * (max_rank + 1)), params.alpha, max_rank)
            phi = build_phi(params, cons)
            tree_value = integrate(maximal_operator(phi), exps.p)
            truncated = analytic_norms(params, max_rank)["lower_bound_truncated"]
        else:
            logger.warning("alpha=%s needs %d levels per rank; depth %d cannot host rank 0",
                           params.alpha, k, depth)
        rows.append({
            "alpha": float(params.alpha),
            "z": params.z,
            "F_alpha": full["lp"],
            "lower_analytic": full["lower_bound"],
            "max_rank": max_rank,
            "lower_truncated": truncated,
            "lower_tree": tree_value,
            "exact": exact,
            "gap": (exact - full["lower_bound"]) / exact,
        })
    table = pd.DataFrame(rows)
    if not table["lower_analytic"].is_monotonic_increasing:
        logger.warning("analytic lower bounds are not increasing along the alpha list")
    return table
