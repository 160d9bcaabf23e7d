# src/extremal.py
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .bellman import ConstraintTriple, Exponents, construction_root, upper_bound
from .config import INEQUALITY_RTOL
from .errors import DepthError, DivergenceError, DomainError, RepresentationError
from .tree import (MAdicTree, StepFunction, dump_step_function, integrate, maximal_operator,
                   node_averages)

logger = logging.getLogger(__name__)
if not logger.handlers:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - %(message)s")

AlphaLike = Union[Fraction, str, float, int]


def as_fraction(alpha: AlphaLike) -> Fraction:
    # Fraction(float) is exact, so 0.125 becomes 1/8
    frac = Fraction(alpha)
    if not 0 < frac < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    return frac


def parse_alpha(alpha: AlphaLike, m: int, max_k: int = 60) -> Tuple[int, int]:
    """Return (j, k) with alpha = j / m^k and k minimal."""
    frac = as_fraction(alpha)
    for k in range(1, max_k + 1):
        scaled = frac * m ** k
        if scaled.denominator == 1:
            return int(scaled.numerator), k
    raise RepresentationError(f"alpha={frac} has no base-{m} expansion with at most {max_k} digits")


def _expm1_power_gap(z: float, alpha: float, r: float) -> float:
    """(1-alpha)^(r-1) z^r - (z-alpha)^r without cancellation."""
    gap = (r - 1.0) * math.log1p(-alpha) - r * math.log1p(-alpha / z)
    return (z - alpha) ** r * math.expm1(gap)


def _geometric(ratio: float, max_rank: Optional[int]) -> float:
    if max_rank is None:
        if ratio >= 1.0:
            raise DivergenceError(f"geometric ratio {ratio!r} >= 1")
        return 1.0 / (1.0 - ratio)
    return math.fsum(ratio ** r for r in range(max_rank + 1))


@dataclass(frozen=True)
class ExtremalParams:
    """Weights of the extremal family: φ equals lam * alpha^(-1/q) * gamma^r on the residual sets of rank r."""
    exps: Exponents
    f: float
    alpha: Fraction
    z: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", as_fraction(self.alpha))
        if not self.f > 0:
            raise DomainError(f"f must be positive, got {self.f!r}")
        if not self.z > 1:
            raise DomainError(f"z must exceed 1, got {self.z!r}")
        if self.ratio_q >= 1.0:
            raise DivergenceError(f"gamma^q (1 - alpha) = {self.ratio_q!r} >= 1")

    @classmethod
    def from_constraint(cls, exps: Exponents, f: float, A: float, alpha: AlphaLike) -> "ExtremalParams":
        """Pick z so that the full construction has ∫φ = f and ∫φ^q = A."""
        if not (f > 0 and f ** exps.q < A):
            raise DomainError(f"need 0 < f^q < A, got f={f!r}, A={A!r}")
        frac = as_fraction(alpha)
        z = construction_root(exps.q, float(frac), f ** exps.q / A)
        return cls(exps, f, frac, z)

    @property
    def a(self) -> float:
        return float(self.alpha)

    @property
    def beta(self) -> float:
        return (self.z - 1.0) / (1.0 - self.a)

    @property
    def gamma(self) -> float:
        return (self.z - self.a) / (self.z * (1.0 - self.a))

    @property
    def lam(self) -> float:
        return self.f * self.a ** (-1.0 / self.exps.q_conj) * (1.0 - self.gamma * (1.0 - self.a))

    @property
    def rho(self) -> float:
        # gamma (1 - alpha) = (z - alpha) / z
        return (self.z - self.a) / self.z

    @property
    def ratio_q(self) -> float:
        return self.gamma ** self.exps.q * (1.0 - self.a)

    @property
    def ratio_p(self) -> float:
        return self.gamma ** self.exps.p * (1.0 - self.a)

    def phi_value(self, rank: int) -> float:
        return self.lam * self.a ** (-1.0 / self.exps.q) * self.gamma ** rank

    def x_weight(self, rank: int, measure: float) -> float:
        return self.lam * self.gamma ** rank * measure ** (1.0 / self.exps.q)

    def truncated_average(self, rank: int, max_rank: Optional[int]) -> float:
        """Average of the truncated φ over a member of the given rank."""
        if max_rank is None:
            return self.z * self.phi_value(rank)
        tail = 1.0 - self.rho ** (max_rank - rank + 1)
        return self.a * self.phi_value(rank) * tail / (1.0 - self.rho)


@dataclass(frozen=True, eq=False)
class Construction:
    """
    The stopping family on a tree. Rank-r members sit at level k*r; their
    children in the family are the first m^k - j descendants k levels down,
    and the residual set is the contiguous block of the last j.
    """
    tree: MAdicTree
    alpha: Fraction
    j: int
    k: int
    max_rank: int
    members: Tuple[np.ndarray, ...]

    def level_of_rank(self, rank: int) -> int:
        return self.k * rank

    def member_count(self, rank: int) -> int:
        return int(self.members[rank].size)

    def residual_ranges(self, rank: int) -> Tuple[np.ndarray, np.ndarray]:
        m, depth = self.tree.m, self.tree.depth
        level = self.level_of_rank(rank)
        width = m ** (depth - level)
        sub = m ** (depth - level - self.k)
        idx = self.members[rank]
        return idx * width + (m ** self.k - self.j) * sub, (idx + 1) * width

    def residual_measure(self, rank: int) -> Fraction:
        starts, ends = self.residual_ranges(rank)
        return Fraction(int(ends[0] - starts[0]), self.tree.n_leaves)

    def rank_measure(self, rank: int) -> Fraction:
        """b_rank(X): total measure of the members of this rank."""
        return self.member_count(rank) * self.tree.node_measure(self.level_of_rank(rank))


def build_s(tree: MAdicTree, alpha: AlphaLike, max_rank: int) -> Construction:
    if max_rank < 0:
        raise DomainError(f"max_rank must be >= 0, got {max_rank}")
    j, k = parse_alpha(alpha, tree.m)
    needed = k * (max_rank + 1)
    if tree.depth < needed:
        raise DepthError(
            f"alpha={Fraction(alpha)} needs {k} levels per rank; max_rank={max_rank} "
            f"needs depth >= {needed}, tree has {tree.depth}")
    block = tree.m ** k
    kept = np.arange(block - j, dtype=np.int64)
    members = [np.zeros(1, dtype=np.int64)]
    for _ in range(max_rank):
        members.append((members[-1][:, None] * block + kept[None, :]).ravel())
    logger.info("Built stopping family: alpha=%s, %d ranks, %d members",
                Fraction(alpha), max_rank + 1, sum(len(x) for x in members))
    return Construction(tree, as_fraction(alpha), j, k, max_rank, tuple(members))


def _check_pair(params: ExtremalParams, cons: Construction):
    if params.alpha != cons.alpha:
        raise DomainError(f"params alpha={params.alpha} but construction alpha={cons.alpha}")


def _residual_index(cons: Construction, rank: int) -> np.ndarray:
    starts, ends = cons.residual_ranges(rank)
    width = int(ends[0] - starts[0])
    return starts[:, None] + np.arange(width, dtype=np.int64)[None, :]


def build_phi(params: ExtremalParams, cons: Construction) -> StepFunction:
    """φ = x_I / a_I^(1/q) on each residual set of rank <= max_rank, 0 elsewhere."""
    _check_pair(params, cons)
    values = np.zeros(cons.tree.n_leaves)
    for rank in range(cons.max_rank + 1):
        values[_residual_index(cons, rank)] = params.phi_value(rank)
    return StepFunction(cons.tree, values)


def analytic_norms(params: ExtremalParams, max_rank: Optional[int] = None,
                   include_p: bool = True) -> Dict[str, float]:
    """
    ∫φ, ∫φ^q, ∫φ^p and the lower bound z^p ∫φ^p, as full sums (max_rank=None)
    or exact partial sums over ranks 0..max_rank. `lower_bound_truncated` sums
    a_I y_I^p with the averages of the truncated function.
    include_p=False returns l1 and lq only, for parameters whose p-series diverges.
    """
    p, q = params.exps.p, params.exps.q
    a, f, z = params.a, params.f, params.z
    lam = params.lam
    if max_rank is None:
        norms = {"l1": f, "lq": f ** q * a * (1.0 - a) ** (q - 1.0) / _expm1_power_gap(z, a, q)}
        if not include_p:
            return norms
        den_p = _expm1_power_gap(z, a, p)
        if den_p <= 0:
            raise DivergenceError(f"gamma^p (1 - alpha) = {params.ratio_p!r} >= 1; ∫φ^p diverges")
        lp = f ** p * a * (1.0 - a) ** (p - 1.0) / den_p
        norms.update(lp=lp, lower_bound=z ** p * lp, lower_bound_truncated=z ** p * lp)
        return norms
    norms = {
        "l1": lam * a ** (1.0 / params.exps.q_conj) * _geometric(params.rho, max_rank),
        "lq": lam ** q * _geometric(params.ratio_q, max_rank),
    }
    if not include_p:
        return norms
    lp = lam ** p * a ** (1.0 - p / q) * _geometric(params.ratio_p, max_rank)
    truncated = math.fsum(
        a * (1.0 - a) ** r * params.truncated_average(r, max_rank) ** p for r in range(max_rank + 1))
    norms.update(lp=lp, lower_bound=z ** p * lp, lower_bound_truncated=truncated)
    return norms


def _row(check: str, observed: float, expected: float, residual: float, passed: bool) -> dict:
    return {"check": check, "observed": observed, "expected": expected,
            "residual": residual, "passed": bool(passed)}


def verify_construction(params: ExtremalParams, cons: Construction, phi: StepFunction,
                        rtol: float = 1e-10) -> pd.DataFrame:
    """
    Compare the tree-realised φ with its analytic description. One row per check:
    norms, the rank-wise average identity, exact measures, the lower bound for
    ∫(Mφ)^p, pointwise Mφ >= y_I on residual sets, and the general upper bound.
    """
    _check_pair(params, cons)
    if phi.tree != cons.tree:
        raise DomainError("step function and construction live on different trees")
    p, q = params.exps.p, params.exps.q
    R = cons.max_rank
    rows = []

    expected = analytic_norms(params, R)
    observed = {"l1": integrate(phi, 1.0), "lq": integrate(phi, q), "lp": integrate(phi, p)}
    for name in ("l1", "lq", "lp"):
        res = abs(observed[name] - expected[name]) / expected[name]
        rows.append(_row(f"norm {name}", observed[name], expected[name], res, res <= rtol))

    # exact m-adic measures
    exact_ok = all(
        cons.residual_measure(r) == cons.alpha * cons.tree.node_measure(cons.level_of_rank(r))
        and cons.rank_measure(r) == (1 - cons.alpha) ** r
        for r in range(R + 1))
    rows.append(_row("exact measures", float(exact_ok), 1.0, 0.0 if exact_ok else 1.0, exact_ok))

    averages = node_averages(phi)
    mphi = maximal_operator(phi)
    lower_terms = []
    pointwise_ok = True
    for r in range(R + 1):
        measure = float(cons.tree.node_measure(cons.level_of_rank(r)))
        y_obs = averages[cons.level_of_rank(r)][cons.members[r]]
        a_i = params.a * measure
        lhs = a_i ** (1.0 / q) * y_obs
        rhs = params.a * (1.0 - params.rho ** (R - r + 1)) / (1.0 - params.rho) * params.x_weight(r, measure)
        res = float(np.max(np.abs(lhs - rhs))) / rhs
        rows.append(_row(f"average identity rank {r}", float(lhs.max()), rhs, res, res <= rtol))
        lower_terms.extend((a_i * y_obs ** p).tolist())
        floor = mphi.values[_residual_index(cons, r)].min(axis=1)
        pointwise_ok &= bool(np.all(floor >= y_obs * (1.0 - INEQUALITY_RTOL)))
    rows.append(_row("pointwise Mphi >= y_I", float(pointwise_ok), 1.0, 0.0, pointwise_ok))

    maximal_p = integrate(mphi, p)
    lower = math.fsum(lower_terms)
    rows.append(_row("lower bound", maximal_p, lower, (lower - maximal_p) / lower,
                     maximal_p >= lower * (1.0 - INEQUALITY_RTOL)))

    triple = ConstraintTriple(observed["l1"], observed["lq"], observed["lp"])
    bound = upper_bound(params.exps, triple).upper_bound
    rows.append(_row("upper bound", maximal_p, bound, (maximal_p - bound) / bound,
                     maximal_p <= bound * (1.0 + INEQUALITY_RTOL)))

    report = pd.DataFrame(rows)
    failed = report[~report["passed"]]
    if failed.empty:
        logger.info("Construction verified: %d checks passed", len(report))
    else:
        logger.warning("Construction verification failed: %s", failed["check"].tolist())
    return report


def construction_table(params: ExtremalParams, cons: Construction) -> pd.DataFrame:
    """One row per rank with counts, exact b_rank and cumulative partial sums."""
    rows = []
    for r in range(cons.max_rank + 1):
        partial = analytic_norms(params, r)
        rows.append({
            "rank": r,
            "level": cons.level_of_rank(r),
            "count": cons.member_count(r),
            "b_rank": float(cons.rank_measure(r)),
            "phi_value": params.phi_value(r),
            "y_value": params.truncated_average(r, cons.max_rank),
            "partial_l1": partial["l1"],
            "partial_lq": partial["lq"],
            "partial_lp": partial["lp"],
            "partial_lower": partial["lower_bound"],
        })
    return pd.DataFrame(rows)


def export_construction(params: ExtremalParams, cons: Construction, phi: StepFunction,
                        path: Union[str, Path]) -> Tuple[Path, Path]:
    """Step-function dump plus a sidecar csv listing (rank, level, index, x_I) per member."""
    path = dump_step_function(phi, path)
    frames = []
    for r in range(cons.max_rank + 1):
        measure = float(cons.tree.node_measure(cons.level_of_rank(r)))
        frames.append(pd.DataFrame({
            "rank": r,
            "level": cons.level_of_rank(r),
            "index": cons.members[r],
            "x_I": params.x_weight(r, measure),
        }))
    sidecar = path.with_suffix(".members.csv")
    pd.concat(frames, ignore_index=True).to_csv(sidecar, index=False, float_format="%.17g")
    logger.info("Saved member listing to %s", sidecar)
    return path, sidecar
