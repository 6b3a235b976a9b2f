"""Combinatorics of hyperbolicity-ratio vectors.

Graphic number, Cherkas stability, the alternation count of partial ratio
products over saddle orderings, and the [CH] subset-product condition.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

__all__ = [
    "TOL",
    "ExpulsionPlan",
    "ratio_from_eigenvalues",
    "graphic_number",
    "stability",
    "delta_for_permutation",
    "delta_max",
    "check_ch_conditions",
]

TOL = 1e-9
MAX_EXHAUSTIVE = 10
MAX_CH = 20


def _check_ratios(r: Sequence[float]) -> tuple:
    r = tuple(float(v) for v in r)
    if not r:
        raise ValueError("empty ratio vector")
    if not all(math.isfinite(v) and v > 0 for v in r):
        raise ValueError("ratios must be positive and finite")
    return r


@dataclass(frozen=True)
class ExpulsionPlan:
    """Saddle ordering with its partial products and alternation flags.

    ``permutation`` is 1-based; ``partial_products[0]`` is ``1/R_1`` and
    ``partial_products[i]`` is ``R_i``.
    """

    permutation: tuple
    partial_products: tuple
    sign_changes: tuple
    delta: int

    @property
    def expelled(self) -> int:
        """Saddle removed first by the bifurcation cascade (last in the ordering)."""
        return self.permutation[-1]

    def to_json(self) -> dict:
        return {"permutation": list(self.permutation),
                "partial_products": list(self.partial_products),
                "sign_changes": list(self.sign_changes),
                "delta": self.delta}


def ratio_from_eigenvalues(lambda_s: float, lambda_u: float) -> float:
    """``|lambda_s| / lambda_u`` for a saddle with ``lambda_s < 0 < lambda_u``."""
    if not lambda_s < 0 < lambda_u:
        raise ValueError(f"not a saddle: eigenvalues {lambda_s}, {lambda_u}")
    return -lambda_s / lambda_u


def graphic_number(r: Sequence[float]) -> float:
    return math.prod(_check_ratios(r))


def stability(r: Sequence[float], tol: float = TOL) -> str:
    g = graphic_number(r)
    if g > 1 + tol:
        return "stable"
    if g < 1 - tol:
        return "unstable"
    return "undetermined"


def _side(x: float, tol: float) -> int:
    if x > 1 + tol:
        return 1
    if x < 1 - tol:
        return -1
    return 0


def delta_for_permutation(r: Sequence[float], sigma: Sequence[int], tol: float = TOL) -> ExpulsionPlan:
    r = _check_ratios(r)
    n = len(r)
    sigma = tuple(int(s) for s in sigma)
    if sorted(sigma) != list(range(1, n + 1)):
        raise ValueError("sigma must be a permutation of 1..n")
    prods = []
    acc = 1.0
    for s in sigma:
        acc *= r[s - 1]
        prods.append(acc)
    prods = [1.0 / prods[0]] + prods
    sides = [_side(x, tol) for x in prods]
    changes = tuple(sides[i] * sides[i - 1] < 0 for i in range(1, n + 1))
    return ExpulsionPlan(sigma, tuple(prods), changes, sum(changes))


def delta_max(r: Sequence[float], tol: float = TOL) -> tuple:
    """Exhaustive maximum of the alternation count over all orderings.

    Ties go to the lexicographically smallest permutation, which is also the
    enumeration order of :func:`itertools.permutations`.
    """
    r = _check_ratios(r)
    n = len(r)
    if n > MAX_EXHAUSTIVE:
        raise ValueError(f"exhaustive search limited to n <= {MAX_EXHAUSTIVE}")
    best_sigma, best_delta = None, -1
    for sigma in itertools.permutations(range(1, n + 1)):
        # inline count; the plan object is built once for the winner
        acc = r[sigma[0] - 1]
        prev = _side(1.0 / acc, tol)
        cur = _side(acc, tol)
        d = int(prev * cur < 0)
        for s in sigma[1:]:
            acc *= r[s - 1]
            nxt = _side(acc, tol)
            d += cur * nxt < 0
            cur = nxt
        if d > best_delta:
            best_sigma, best_delta = sigma, d
            if d == n:
                break
    plan = delta_for_permutation(r, best_sigma, tol)
    return plan.delta, plan


def check_ch_conditions(r: Sequence[float], tol: float = TOL) -> tuple:
    """[CH]: no nonempty subset product equals 1.

    Returns ``(passed, witness)`` with a 1-based violating subset or ``None``.
    """
    r = _check_ratios(r)
    n = len(r)
    if n > MAX_CH:
        raise ValueError(f"subset enumeration limited to n <= {MAX_CH}")
    logs = [math.log(v) for v in r]
    # subset sums by increasing bitmask; lowbit recurrence keeps it O(2^n)
    sums = [0.0] * (1 << n)
    for mask in range(1, 1 << n):
        low = mask & -mask
        sums[mask] = sums[mask ^ low] + logs[low.bit_length() - 1]
    best = None
    for mask in range(1, 1 << n):
        if abs(math.exp(sums[mask]) - 1.0) <= tol:
            subset = tuple(i + 1 for i in range(n) if mask >> i & 1)
            if best is None or (len(subset), subset) < (len(best), best):
                best = subset
    return best is None, best
