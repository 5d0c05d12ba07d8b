"""Single-letter dual-capacity upper bound for cost-constrained sensing channels.

The test output process is a unit-memory Markov chain ``q(y2 | y1)``.  For a
walk on the pruned chain the divergence between the true output law and the
test law splits into per-transition branch metrics, and in the long run only
the cycle weights ``mu_i`` matter.  The bound is

    min_q  max_mu  sum_i mu_i * mbar_q(c_i)
    s.t.   mu >= 0,  sum mu = 1,  sum mu_i * Pbar(c_i) <= Gamma

which is solved in its max-min form: for fixed ``mu`` the best ``q`` is the
conditional of the induced output-pair law, leaving a smooth concave problem
over the cycle-weight polytope.  All values are in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import xlogy

from .channel import PrunedChain
from .cycles import Cycle, gamma_min
from .errors import InfeasibleBudgetError, InfiniteMetricError

LN2 = math.log(2.0)
COST_EPS = 1e-12
_Q_FLOOR = 1e-300


@dataclass(frozen=True)
class TestDistribution:
    """Unit-memory test law; ``q[y1, y2] = q(y2 | y1)``."""

    __test__ = False  # not a pytest class

    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError("test distribution must be a square |Y| x |Y| matrix")
        if np.any(q < 0) or np.any(q > 1) or np.any(np.abs(q.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("test distribution rows must be probability vectors")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @classmethod
    def binary(cls, a: float, b: float) -> "TestDistribution":
        """The 2x2 law with ``q(0|0) = a`` and ``q(1|1) = b``."""
        return cls(np.array([[a, 1.0 - a], [1.0 - b, b]]))


@dataclass(frozen=True)
class CycleWeights:
    mu: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        if mu.ndim != 1 or np.any(mu < -1e-12) or abs(mu.sum() - 1.0) > 1e-9:
            raise ValueError("cycle weights must be nonnegative and sum to 1")
        mu = np.clip(mu, 0.0, None)
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)


@dataclass(frozen=True)
class BoundResult:
    """Outcome of a bound computation.

    Upper bounds fill ``mu`` and ``q``; lower bounds fill ``source``,
    ``std_error`` and ``avg_cost``.
    """

    value: float
    mu: CycleWeights | None = None
    q: TestDistribution | None = None
    iterations: int = 0
    gap_estimate: float = 0.0
    converged: bool = True
    source: np.ndarray | None = None
    std_error: float = 0.0
    avg_cost: float = float("nan")
    extra: dict = field(default_factory=dict)


def branch_metric(q: TestDistribution, chain: PrunedChain, s_prev, s_next) -> float:
    """Expected log-ratio between ``p(.|s_next)`` and ``q(.|y1)``, ``y1 ~ p(.|s_prev)``."""
    i, j = chain.index(s_prev), chain.index(s_next)
    if not chain.adjacency[i, j]:
        raise ValueError(f"{chain.states[i]}->{chain.states[j]} is not an edge of the pruned chain")
    p1 = chain.emission[i]
    p2 = chain.emission[j]
    w = np.outer(p1, p2)
    qq = q.q
    if np.any((w > 0) & (qq == 0)):
        raise InfiniteMetricError(
            f"metric for {chain.states[i]}->{chain.states[j]} is infinite: "
            "test distribution has a zero where the output pair has positive probability"
        )
    ratio_terms = xlogy(w, np.broadcast_to(p2, w.shape)) - xlogy(w, qq)
    return float(ratio_terms.sum() / LN2)


def walk_kl(q: TestDistribution, walk: Sequence, chain: PrunedChain) -> float:
    """Divergence of a walk ``s_0, s_1, ..., s_N`` as a sum of branch metrics."""
    if len(walk) < 2:
        raise ValueError("walk needs at least one transition")
    return float(sum(branch_metric(q, chain, a, b) for a, b in zip(walk[:-1], walk[1:])))


def cycle_metric(q: TestDistribution, cycle: Cycle, chain: PrunedChain) -> float:
    return sum(branch_metric(q, chain, a, b) for a, b in cycle.edges) / cycle.length


class CycleTerms:
    """Per-cycle quantities the bound is linear in.

    ``pairs[i]`` is the output-pair law averaged over the transitions of cycle
    ``i`` and ``next_entropy[i]`` the matching average of ``H(Y | S = s')``.
    """

    def __init__(self, cycles: Sequence[Cycle], chain: PrunedChain):
        em = chain.emission
        ny = em.shape[1]
        h_state = -xlogy(em, em).sum(axis=1) / LN2
        self.pairs = np.zeros((len(cycles), ny, ny))
        self.next_entropy = np.zeros(len(cycles))
        for k, c in enumerate(cycles):
            for i, j in c.edges:
                self.pairs[k] += np.outer(em[i], em[j])
                self.next_entropy[k] += h_state[j]
            self.pairs[k] /= c.length
            self.next_entropy[k] /= c.length
        self.costs = np.array([c.avg_cost for c in cycles])

    def joint(self, mu: np.ndarray) -> np.ndarray:
        return np.tensordot(mu, self.pairs, axes=1)

    def objective(self, mu: np.ndarray) -> float:
        A = self.joint(mu)
        rows = A.sum(axis=1, keepdims=True)
        h_cond = (xlogy(rows, rows).sum() - xlogy(A, A).sum()) / LN2
        return float(h_cond - mu @ self.next_entropy)

    def gradient(self, mu: np.ndarray) -> np.ndarray:
        # d/dmu_i of the objective is the normalized metric of cycle i at q*(mu)
        q = _conditional(self.joint(mu))
        logq = np.log2(np.maximum(q, _Q_FLOOR))
        return -self.next_entropy - np.tensordot(self.pairs, logq, axes=([1, 2], [0, 1]))


def _conditional(A: np.ndarray) -> np.ndarray:
    rows = A.sum(axis=1, keepdims=True)
    ny = A.shape[1]
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.where(rows > 0, A / np.where(rows > 0, rows, 1.0), 1.0 / ny)
    return q


def _weights(mu) -> np.ndarray:
    if isinstance(mu, CycleWeights):
        return mu.mu
    return CycleWeights(mu).mu


def induced_pair_distribution(mu, cycles: Sequence[Cycle], chain: PrunedChain) -> np.ndarray:
    """Joint law ``A[y1, y2]`` of consecutive outputs under cycle weights ``mu``."""
    return CycleTerms(cycles, chain).joint(_weights(mu))


def optimal_q_for_mu(mu, cycles: Sequence[Cycle], chain: PrunedChain) -> TestDistribution:
    """Best test law for fixed cycle weights: the row-normalized pair law.

    Rows without mass are set uniform.
    """
    return TestDistribution(_conditional(induced_pair_distribution(mu, cycles, chain)))


def maxmin_objective(mu, cycles: Sequence[Cycle], chain: PrunedChain) -> float:
    """``sum_i mu_i * mbar(c_i)`` evaluated at the best test law for ``mu``.

    Equals ``H(Y2 | Y1)`` under the induced pair law minus the weighted
    next-state emission entropy; concave in ``mu``.
    """
    return CycleTerms(cycles, chain).objective(_weights(mu))


class _Polytope:
    """``{mu >= 0, sum mu = 1, costs @ mu <= gamma}`` with a vertex LP oracle.

    Vertices are unit vectors of affordable cycles and two-cycle blends that
    meet the budget exactly.  A vertex is keyed by ``(i,)`` or ``(i, j)``.
    """

    def __init__(self, costs: np.ndarray, gamma: float):
        self.costs = costs
        self.gamma = gamma
        self.single = np.nonzero(costs <= gamma + COST_EPS)[0]
        self.cheap = np.nonzero(costs < gamma - COST_EPS)[0]
        self.dear = np.nonzero(costs > gamma + COST_EPS)[0]

    def blend(self, i: int, j: int) -> float:
        return (self.costs[j] - self.gamma) / (self.costs[j] - self.costs[i])

    def vertex(self, key: tuple[int, ...]) -> np.ndarray:
        v = np.zeros(len(self.costs))
        if len(key) == 1:
            v[key[0]] = 1.0
        else:
            t = self.blend(*key)
            v[key[0]] = t
            v[key[1]] = 1.0 - t
        return v

    def best_vertex(self, g: np.ndarray) -> tuple[tuple[int, ...], float]:
        k = self.single[np.argmax(g[self.single])]
        best_key, best_val = (int(k),), float(g[k])
        if len(self.cheap) and len(self.dear):
            ci = self.cheap
            for start in range(0, len(self.dear), 4096):
                dj = self.dear[start : start + 4096]
                t = (self.costs[dj][None, :] - self.gamma) / (
                    self.costs[dj][None, :] - self.costs[ci][:, None]
                )
                val = t * g[ci][:, None] + (1.0 - t) * g[dj][None, :]
                a, b = np.unravel_index(np.argmax(val), val.shape)
                if val[a, b] > best_val:
                    best_key, best_val = (int(ci[a]), int(dj[b])), float(val[a, b])
        return best_key, best_val

    def start_keys(self) -> list[tuple[int, ...]]:
        keys = [(int(i),) for i in self.single]
        if len(self.cheap):
            i0 = int(self.cheap[np.argmin(self.costs[self.cheap])])
            keys += [(i0, int(j)) for j in self.dear]
        return keys


def _line_max(slope, gmax: float) -> float:
    # concave objective: its directional derivative is non-increasing, so
    # the line maximum is the root of the slope (derivatives stay accurate
    # where objective differences are lost to rounding)
    if slope(0.0) <= 0.0:
        return 0.0
    if slope(gmax) >= 0.0:
        return gmax
    return float(brentq(slope, 0.0, gmax, xtol=1e-15, rtol=4 * np.finfo(float).eps))


def _away_step_fw(terms: CycleTerms, poly: _Polytope, tol: float, max_iter: int):
    keys = poly.start_keys()
    active = {k: 1.0 / len(keys) for k in keys}
    mu = sum(w * poly.vertex(k) for k, w in active.items())
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        g = terms.gradient(mu)
        s_key, s_val = poly.best_vertex(g)
        gap = s_val - g @ mu
        if gap <= tol:
            break
        a_key = min(active, key=lambda k: g @ poly.vertex(k))
        v_away = poly.vertex(a_key)
        s_vec = poly.vertex(s_key)
        if gap >= g @ (mu - v_away):
            d = s_vec - mu
            gmax = 1.0
            away = False
        else:
            alpha = active[a_key]
            d = mu - v_away
            gmax = alpha / (1.0 - alpha) if alpha < 1.0 else 1e12
            away = True
        step = _line_max(lambda s: float(terms.gradient(np.clip(mu + s * d, 0.0, None)) @ d), gmax)
        if step == 0.0:
            # no ascent along the chosen direction at machine precision
            break
        if not away:
            for k in active:
                active[k] *= 1.0 - step
            active[s_key] = active.get(s_key, 0.0) + step
            if step == 1.0:
                active = {s_key: 1.0}
        else:
            for k in active:
                active[k] *= 1.0 + step
            active[a_key] -= step
            if step == gmax or active[a_key] <= 1e-15:
                del active[a_key]
        total = sum(active.values())
        active = {k: w / total for k, w in active.items()}
        mu = sum(w * poly.vertex(k) for k, w in active.items())
    return mu, it, gap


def _interval_solve(terms: CycleTerms, gamma: float):
    c1, c2 = terms.costs
    lo, hi = 0.0, 1.0
    if c2 > c1 + COST_EPS:
        lo = min(max((c2 - gamma) / (c2 - c1), 0.0), 1.0)
    elif c1 > c2 + COST_EPS:
        hi = min(max((gamma - c2) / (c1 - c2), 0.0), 1.0)

    def value(t: float) -> float:
        return terms.objective(np.array([t, 1.0 - t]))

    cands = [lo, hi]
    nfev = 2
    if hi - lo > 0:
        res = minimize_scalar(lambda t: -value(t), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-13})
        cands.append(float(res.x))
        nfev += res.nfev
    t = max(cands, key=value)
    return np.array([t, 1.0 - t]), nfev


def upper_bound(
    chain: PrunedChain,
    cycles: Sequence[Cycle],
    gamma: float,
    tol: float = 1e-9,
    max_iter: int = 100_000,
) -> BoundResult:
    """Cost-constrained dual-capacity upper bound in bits per channel use.

    Two cycles reduce the feasible set to an interval, searched by bounded
    Brent; otherwise away-step Frank-Wolfe runs over the cycle-weight
    polytope until the Frank-Wolfe gap drops below ``tol``.
    """
    gmin = gamma_min(cycles)
    if gamma < gmin - COST_EPS:
        raise InfeasibleBudgetError(gamma, gmin)
    gamma = max(gamma, gmin)
    terms = CycleTerms(cycles, chain)
    poly = _Polytope(terms.costs, gamma)

    if len(cycles) == 1:
        mu, iters = np.ones(1), 0
    elif len(cycles) == 2:
        mu, iters = _interval_solve(terms, gamma)
    else:
        mu, iters, _ = _away_step_fw(terms, poly, tol, max_iter)

    mu = np.clip(mu, 0.0, None)
    mu /= mu.sum()
    g = terms.gradient(mu)
    gap = max(0.0, poly.best_vertex(g)[1] - g @ mu)
    weights = CycleWeights(mu)
    return BoundResult(
        value=terms.objective(mu),
        mu=weights,
        q=TestDistribution(_conditional(terms.joint(mu))),
        iterations=iters,
        gap_estimate=float(gap),
        converged=bool(gap <= max(tol, 1e-7)),
        extra={"gamma": gamma, "avg_cost": float(terms.costs @ mu)},
    )


def saturation_budget(chain: PrunedChain, cycles: Sequence[Cycle], **kw) -> float:
    """Average cost of the cycle weights that maximize the unconstrained bound.

    Beyond this budget the constraint is slack and the bound stays flat.
    """
    res = upper_bound(chain, cycles, float(max(c.avg_cost for c in cycles)), **kw)
    return res.extra["avg_cost"]
