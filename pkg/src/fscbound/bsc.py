"""Closed-form upper bound for the two-state chain observed through a BSC.

The chain has a self-loop on ``s1`` and the two-cycle ``s1 -> s2 -> s1``; the
state is seen through a binary symmetric channel with crossover ``p``.  The
test law is ``q = [[a, 1-a], [1-b, b]]``.  For a cycle weight ``mu`` on the
self-loop the inner minimization over ``(a, b)`` separates into two scalar
problems with explicit minimizers, leaving a concave function of ``mu`` on an
interval cut out by the budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import xlogy

from .dual import COST_EPS, BoundResult, CycleWeights, TestDistribution
from .errors import DegenerateCostError, InfeasibleBudgetError

LN2 = math.log(2.0)


def _lg(coef, x):
    """``coef * log2(x)`` with ``0 * log 0 = 0``."""
    return xlogy(coef, x) / LN2


def binary_entropy(p: float) -> float:
    return float(-(_lg(p, p) + _lg(1.0 - p, 1.0 - p)))


@dataclass(frozen=True)
class BscExample:
    """Crossover ``p``, edge costs ``(k(s1|s1), k(s2|s1), k(s1|s2))`` and budget."""

    p: float
    costs: tuple[float, float, float]
    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"crossover probability must lie in [0, 1], got {self.p}")
        if len(self.costs) != 3 or any(k < 0 or not math.isfinite(k) for k in self.costs):
            raise ValueError("costs must be three finite nonnegative numbers")
        if not math.isfinite(self.gamma):
            raise ValueError("gamma must be finite")

    @property
    def cycle_costs(self) -> tuple[float, float]:
        k11, k21, k12 = self.costs
        return float(k11), 0.5 * (k21 + k12)


def bsc_branch_metrics(p: float, a: float, b: float) -> tuple[float, float, float]:
    """Branch metrics ``m(s1,s1), m(s1,s2), m(s2,s1)`` in bits."""
    pb, ab, bb = 1.0 - p, 1.0 - a, 1.0 - b
    h = binary_entropy(p)
    m11 = -h - _lg(pb * pb, a) - _lg(p * pb, ab) - _lg(p * pb, bb) - _lg(p * p, b)
    m12 = -h - _lg(pb * pb, ab) - _lg(p * pb, a) - _lg(p * pb, b) - _lg(p * p, bb)
    m21 = -h - _lg(pb * pb, bb) - _lg(p * pb, a) - _lg(p * pb, b) - _lg(p * p, ab)
    return float(m11), float(m12), float(m21)


def _coeffs(p: float, mu: float):
    pb, mb = 1.0 - p, 1.0 - mu
    cross = mu * p * pb + 0.5 * mb * (p * p + pb * pb)
    return pb * (pb * mu + p * mb), p * (p * mu + pb * mb), cross


def g_term(a: float, mu: float, p: float) -> float:
    ca, _, cross = _coeffs(p, mu)
    return float(-_lg(ca, a) - _lg(cross, 1.0 - a))


def h_term(b: float, mu: float, p: float) -> float:
    _, cb, cross = _coeffs(p, mu)
    return float(-_lg(cb, b) - _lg(cross, 1.0 - b))


def gh(a: float, b: float, mu: float, p: float) -> float:
    return g_term(a, mu, p) + h_term(b, mu, p)


def opt_ab(p: float, mu: float) -> tuple[float, float]:
    """Minimizers of ``g(.; mu)`` and ``h(.; mu)`` over ``(0, 1)``.

    The denominators are the probabilities of the previous output being 0 and
    1.  Both vanish only at ``mu = 1`` with ``p`` in {0, 1}, where the
    continuous limit ``(1 - p, p)`` is returned.
    """
    pb = 1.0 - p
    den_a = (0.5 - p) * mu + 0.5
    den_b = -(0.5 - p) * mu + 0.5
    a = (-pb * (p - pb) * mu + p * pb) / den_a if den_a > 0 else pb
    b = (p * (p - pb) * mu + p * pb) / den_b if den_b > 0 else p
    return float(a), float(b)


def mu_threshold(costs, gamma: float) -> float:
    """Self-loop weight at which the budget binds, clipped to [0, 1]."""
    k11, k21, k12 = costs
    c1, c2 = float(k11), 0.5 * (k21 + k12)
    if abs(c2 - c1) <= COST_EPS:
        raise DegenerateCostError("both cycles have the same average cost")
    return float(min(max((c2 - gamma) / (c2 - c1), 0.0), 1.0))


def _value(p: float, mu: float) -> float:
    a, b = opt_ab(p, mu)
    return -binary_entropy(p) + gh(a, b, mu, p)


def _slope(p: float, mu: float) -> float:
    # d/dmu of -H(p) + gh(a*, b*; mu); by the envelope argument only the
    # explicit mu-dependence at fixed (a*, b*) contributes
    a, b = opt_ab(p, mu)
    pb = 1.0 - p
    dcross = p * pb - 0.5 * (p * p + pb * pb)
    terms = [-_lg(pb * (pb - p), a), -_lg(dcross, 1.0 - a), -_lg(p * (p - pb), b), -_lg(dcross, 1.0 - b)]
    if any(np.isinf(t) for t in terms):
        # a diverging term means the other symbol row vanishes; only its sign matters
        return float(np.clip(sum(t for t in terms if np.isinf(t)), -1e300, 1e300))
    return float(sum(terms))


def closed_form_upper_bound(example: BscExample) -> BoundResult:
    """Upper bound for the BSC example via the explicit ``(a*, b*)``.

    The bound is the maximum of ``-H(p) + gh(a*, b*; mu)`` over the feasible
    interval of ``mu``.  Candidates are the interval ends (one of which is the
    budget threshold) and, when the budget is slack enough, the interior point
    where both cycle metrics coincide.
    """
    p = example.p
    flipped = p > 0.5
    if flipped:
        p = 1.0 - p
    c1, c2 = example.cycle_costs
    gamma = example.gamma
    if gamma < min(c1, c2) - COST_EPS:
        raise InfeasibleBudgetError(gamma, min(c1, c2))

    try:
        th = mu_threshold(example.costs, gamma)
        lo, hi = (th, 1.0) if c2 >= c1 else (0.0, th)
    except DegenerateCostError:
        lo, hi = 0.0, 1.0

    cands = [lo, hi]
    if hi > lo and p < 0.5:
        s_lo, s_hi = _slope(p, lo), _slope(p, hi)
        if s_lo > 0.0 > s_hi:
            cands.append(brentq(lambda m: _slope(p, m), lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))
    mu = max(cands, key=lambda m: _value(p, m))
    a, b = opt_ab(p, mu)
    if flipped:
        a, b = b, a
    a = min(max(a, 0.0), 1.0)
    b = min(max(b, 0.0), 1.0)
    return BoundResult(
        value=_value(p, mu),
        mu=CycleWeights(np.array([mu, 1.0 - mu])),
        q=TestDistribution.binary(a, b),
        iterations=len(cands),
        extra={"a": a, "b": b, "mu_candidates": cands},
    )
