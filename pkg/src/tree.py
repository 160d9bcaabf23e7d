import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from .config import MAX_LEAVES
from .errors import DepthError, DomainError

logger = logging.getLogger(__name__)
if not logger.handlers:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - %(message)s")


@dataclass(frozen=True)
class MAdicTree:
    """
    Depth-D truncation of the homogeneous m-adic tree on a probability space.
    Node (level, index) covers leaves [index * m^(D-level), (index+1) * m^(D-level)).
    """
    m: int
    depth: int

    def __post_init__(self):
        if self.m < 2:
            raise DomainError(f"branching must be >= 2, got {self.m}")
        if self.depth < 0:
            raise DomainError(f"depth must be >= 0, got {self.depth}")
        if self.m ** self.depth > MAX_LEAVES:
            raise DepthError(f"{self.m}^{self.depth} leaves exceeds the limit of {MAX_LEAVES}")

    @property
    def n_leaves(self) -> int:
        return self.m ** self.depth

    def level_size(self, level: int) -> int:
        return self.m ** level

    def node_measure(self, level: int) -> Fraction:
        return Fraction(1, self.m ** level)

    def leaf_range(self, level: int, index: int) -> Tuple[int, int]:
        width = self.m ** (self.depth - level)
        return index * width, (index + 1) * width

    def ancestors(self, leaf: int) -> List[Tuple[int, int]]:
        """(level, index) of every cell containing the leaf, root first."""
        return [(level, leaf // self.m ** (self.depth - level)) for level in range(self.depth + 1)]


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Nonnegative function constant on the leaves of a tree, stored in level order."""
    tree: MAdicTree
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.tree.n_leaves,):
            raise DomainError(f"expected {self.tree.n_leaves} leaf values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise DomainError("leaf values must be finite and nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, tree: MAdicTree, c: float) -> "StepFunction":
        return cls(tree, np.full(tree.n_leaves, float(c)))

    def is_constant(self) -> bool:
        return bool(self.values.min() == self.values.max())


def integrate_leafwise(tree: MAdicTree, leaf_values: np.ndarray) -> float:
    """∫ g dμ for g given leafwise, accumulated with math.fsum (correctly rounded sum)."""
    return math.fsum(np.asarray(leaf_values, dtype=float).tolist()) / tree.n_leaves


def integrate(phi: StepFunction, r: float = 1.0) -> float:
    if r < 1:
        raise DomainError(f"integrate needs r >= 1, got {r!r}")
    return integrate_leafwise(phi.tree, phi.values ** r)


def node_sums(phi: StepFunction) -> List[np.ndarray]:
    """Sums of leaf values under every node, one array per level (root first)."""
    m = phi.tree.m
    levels = [np.asarray(phi.values)]
    for _ in range(phi.tree.depth):
        levels.append(levels[-1].reshape(-1, m).sum(axis=1))
    return levels[::-1]


def node_averages(phi: StepFunction) -> List[np.ndarray]:
    """Average of φ over every node: node sum divided by the node's leaf count."""
    tree = phi.tree
    return [s / (tree.n_leaves // tree.level_size(level)) for level, s in enumerate(node_sums(phi))]


def maximal_operator(phi: StepFunction) -> StepFunction:
    """
    Mφ on each leaf: the largest average over the cells containing it.
    One top-down pass carrying the running maximum along each chain.
    """
    m = phi.tree.m
    averages = node_averages(phi)
    running = averages[0]
    for level_avg in averages[1:]:
        running = np.maximum(np.repeat(running, m), level_avg)
    return StepFunction(phi.tree, running)


def level_set_count(mphi: StepFunction, lam: float) -> int:
    return int(np.count_nonzero(mphi.values >= lam))


def level_set_measure(mphi: StepFunction, lam: float) -> float:
    """μ({Mφ >= λ}); closed level sets."""
    if lam < 0:
        raise DomainError(f"lambda must be >= 0, got {lam!r}")
    return level_set_count(mphi, lam) / mphi.tree.n_leaves


def stopping_cells(phi: StepFunction, lam: float) -> List[Tuple[int, int]]:
    """
    Maximal cells whose average is >= λ, as (level, index).
    They are pairwise disjoint and their union is {Mφ >= λ}.
    """
    m = phi.tree.m
    averages = node_averages(phi)
    cells = []
    covered = np.zeros(1, dtype=bool)
    for level, level_avg in enumerate(averages):
        if level:
            covered = np.repeat(covered, m)
        hits = (level_avg >= lam) & ~covered
        cells.extend((level, int(i)) for i in np.flatnonzero(hits))
        covered = covered | hits
    return cells


def layer_cake(mphi: StepFunction, p: float) -> float:
    """
    ∫_0^∞ p λ^(p-1) μ({Mφ >= λ}) dλ evaluated exactly on the breakpoints:
    sum over distinct values v_1 < ... < v_n of (v_i^p - v_(i-1)^p) μ({Mφ >= v_i}).
    """
    vals = np.sort(mphi.values)
    distinct, first = np.unique(vals, return_index=True)
    above = (vals.size - first) / mphi.tree.n_leaves
    steps = np.diff(np.concatenate(([0.0], distinct ** p)))
    return math.fsum((steps * above).tolist())


def dump_step_function(phi: StepFunction, path: Union[str, Path]) -> Path:
    """Write `m D` then one leaf value per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, phi.values, fmt="%.17g", header=f"{phi.tree.m} {phi.tree.depth}", comments="")
    logger.info("Saved step function (%d leaves) to %s", phi.tree.n_leaves, path)
    return path


def load_step_function(path: Union[str, Path]) -> StepFunction:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().split()
    if len(header) != 2:
        raise DomainError(f"{path}: header must be 'm D', got {header}")
    tree = MAdicTree(int(header[0]), int(header[1]))
    values = np.loadtxt(path, skiprows=1, ndmin=1)
    return StepFunction(tree, values)
