"""Exhaustive exact evaluation of policies on tiny finite-alphabet models.

Two independent evaluators are provided on purpose:

* ``exact_eval``    — depth-first enumeration of the joint randomization tree
  (action draw x observation) with exact pruning of zero-probability
  branches;
* ``backward_eval`` — a backward dynamic program over merged count-matrix
  states, valid for fixed-horizon i.i.d.-rule policies.

They share no arithmetic, so their agreement (within accumulation error) is
a meaningful cross-check of both.  ``exact_pairwise`` additionally computes
the exact pairwise posterior-comparison error rates under i.i.d. actions and
the discrimination-exponent sandwich they are predicted to satisfy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np

from .divergences import alpha_max
from .exceptions import BudgetError, HorizonError
from .model import ObservationModel
from .policies import Policy


@dataclass(frozen=True)
class OracleBudget:
    """Hard caps on the enumeration: depth and total visited states."""

    horizon: int = 32
    nodes: int = 10_000_000

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.nodes < 1:
            raise ValueError(f"node budget must be >= 1, got {self.nodes}")


@dataclass(frozen=True)
class ExactEvaluation:
    """Exact objective value of a policy, plus enumeration diagnostics."""

    expected_tau: float
    pe: float
    cost: float
    nodes: int
    truncated_mass: float
    entering_mass: tuple  # probability mass arriving at each depth
    stopped_mass: tuple   # probability mass stopping at each depth

    def mass_residuals(self) -> np.ndarray:
        """|entering[d] - stopped[d] - entering[d+1]| per depth.

        All residuals are at accumulation-error level when the enumeration
        covered a valid probability space.
        """
        entering = np.asarray(self.entering_mass)
        stopped = np.asarray(self.stopped_mass)
        nxt = np.append(entering[1:], 0.0)
        return np.abs(entering - stopped - nxt)


def _require_finite(model: ObservationModel):
    if not model.is_finite:
        raise ValueError("exact evaluation requires a finite observation kernel")


def exact_eval(model: ObservationModel, policy: Policy, budget: OracleBudget | None = None) -> ExactEvaluation:
    """Exact E[stopping time], error probability, and total cost of a policy.

    Enumerates every (action draw, observation) branch depth-first, carrying
    the unnormalized posterior weight vector; zero-probability children are
    pruned exactly.  Paths the policy truncates at its own safety horizon
    stop there (mirroring the simulator); a path still live at
    ``budget.horizon`` raises HorizonError, and visiting more than
    ``budget.nodes`` states raises BudgetError.
    """
    _require_finite(model)
    if budget is None:
        budget = OracleBudget()
    q = model.kernel.probs  # (M, K, Z)
    K = model.K
    L = model.penalty
    H = budget.horizon
    fh = policy.safety_horizon

    entering = [0.0] * (H + 1)
    stopped = [0.0] * (H + 1)
    exp_tau = 0.0
    err_mass = 0.0
    trunc_mass = 0.0
    nodes = 0

    stack = [(np.asarray(model.prior, dtype=float), 0)]
    while stack:
        v, d = stack.pop()
        nodes += 1
        if nodes > budget.nodes:
            raise BudgetError(f"enumeration exceeded node budget {budget.nodes}")
        s = float(v.sum())
        entering[d] += s
        probs = v / s
        w = policy.action_weights(probs, d)
        truncates = w is not None and fh is not None and d >= fh
        if w is None or truncates:
            stopped[d] += s
            exp_tau += d * s
            err_mass += s - float(v.max())
            if truncates:
                trunc_mass += s
            continue
        if d >= H:
            raise HorizonError(f"path still live at horizon {H}")
        for a in range(K):
            if w[a] <= 0.0:
                continue
            children = (w[a] * v)[:, None] * q[:, a, :]  # (M, Z)
            for z in range(children.shape[1]):
                child = children[:, z]
                if child.sum() > 0.0:
                    stack.append((child, d + 1))

    max_d = max(i for i in range(H + 1) if entering[i] > 0.0)
    return ExactEvaluation(
        expected_tau=exp_tau,
        pe=err_mass,
        cost=exp_tau + L * err_mass,
        nodes=nodes,
        truncated_mass=trunc_mass,
        entering_mass=tuple(entering[: max_d + 1]),
        stopped_mass=tuple(stopped[: max_d + 1]),
    )


def _count_matrices(cells: int, n: int):
    """All ways to spread n draws over ``cells`` categories (sorted order)."""
    for combo in combinations_with_replacement(range(cells), n):
        c = [0] * cells
        for idx in combo:
            c[idx] += 1
        yield tuple(c)


def _n_count_matrices(cells: int, n: int) -> int:
    return math.comb(n + cells - 1, cells - 1)


def _multinomial(counts) -> float:
    total = sum(counts)
    out = math.factorial(total)
    for c in counts:
        out //= math.factorial(c)
    return float(out)


def backward_eval(model: ObservationModel, rule, n: int, budget: OracleBudget | None = None) -> ExactEvaluation:
    """Backward dynamic program for an i.i.d.-rule, fixed-horizon policy.

    States are the (action, symbol) count matrices — a sufficient statistic
    when actions are i.i.d. — and the value function is propagated from the
    horizon back to the root using posterior-weighted transition
    probabilities.  Deliberately different arithmetic from ``exact_eval``.
    """
    _require_finite(model)
    if n < 0:
        raise ValueError("horizon must be nonnegative")
    if budget is None:
        budget = OracleBudget()
    w = np.asarray(getattr(rule, "weights", rule), dtype=float)
    q = model.kernel.probs
    M, K, Z = q.shape
    cells = [(a, z) for a in range(K) for z in range(Z) if w[a] > 0.0 and q[:, a, z].sum() > 0.0]
    total_states = sum(_n_count_matrices(len(cells), d) for d in range(n + 1))
    if total_states > budget.nodes:
        raise BudgetError(
            f"backward DP needs {total_states} states, over node budget {budget.nodes}"
        )
    prior = np.asarray(model.prior, dtype=float)
    cell_prob = np.array([[w[a] * q[i, a, z] for (a, z) in cells] for i in range(M)])  # (M, C)

    @lru_cache(maxsize=None)
    def weight_vec(counts):
        v = prior.copy()
        for c_idx, cnt in enumerate(counts):
            if cnt:
                v = v * cell_prob[:, c_idx] ** cnt
        return v

    @lru_cache(maxsize=None)
    def value(counts):
        v = weight_vec(counts)
        s = v.sum()
        if s == 0.0:
            return 0.0
        depth = sum(counts)
        if depth == n:
            return 1.0 - float(v.max()) / s
        acc = 0.0
        post = v / s
        for c_idx in range(len(cells)):
            p_trans = float(post @ cell_prob[:, c_idx])
            if p_trans > 0.0:
                child = list(counts)
                child[c_idx] += 1
                acc += p_trans * value(tuple(child))
        return acc

    pe = value(tuple([0] * len(cells)))
    return ExactEvaluation(
        expected_tau=float(n),
        pe=pe,
        cost=float(n) + model.penalty * pe,
        nodes=total_states,
        truncated_mass=0.0,
        entering_mass=(1.0,),
        stopped_mass=(0.0,),
    )


@dataclass(frozen=True)
class PairSandwich:
    """Observed vs predicted discrimination exponent for one pair."""

    i: int
    j: int
    n: int
    exponent: float      # -log max(e_ij, e_ji) / n
    alpha_star: float
    predicted: float     # best mixed discrimination exponent for the rule
    gap: float           # |exponent - predicted|


@dataclass(frozen=True)
class PairwiseExact:
    """Exact pairwise posterior-comparison error rates at horizon n."""

    rates: np.ndarray     # rates[i, j] = P(posterior of j strictly beats i | truth i)
    ties: np.ndarray      # ties[i, j] = P(posteriors of i and j tied | truth i)
    n: int
    sandwiches: tuple


def exact_pairwise(model: ObservationModel, rule, n: int, budget: OracleBudget | None = None) -> PairwiseExact:
    """Exact e_ij(n) matrix under i.i.d. actions from ``rule``.

    e_ij(n) is the probability, given hypothesis i is true, that after n
    i.i.d.-rule steps the posterior of j strictly exceeds that of i.  Because
    actions are i.i.d., the (action, symbol) count matrix is a sufficient
    statistic, and the enumeration runs over count matrices (multinomial
    multiplicity attached) instead of raw paths; the node budget counts those
    states.  Count classes whose log-likelihood sums agree up to accumulated
    rounding (which happens structurally when kernel rows are permutations of
    one another) are reported as ties rather than being split between the two
    strict rates by last-bit noise, so rates[i, j] == rates[j, i] whenever the
    model has an (i <-> j)-swap symmetry that the rule respects.  For each pair the result records the observed decay exponent
    next to the predicted one (the alpha-optimized mixed discrimination
    exponent for the pairwise error decay, computable to rate order only).
    """
    _require_finite(model)
    if n < 1:
        raise ValueError("horizon must be >= 1")
    if budget is None:
        budget = OracleBudget()
    w = np.asarray(getattr(rule, "weights", rule), dtype=float)
    q = model.kernel.probs
    M, K, Z = q.shape
    cells = [(a, z) for a in range(K) for z in range(Z) if w[a] > 0.0]
    n_states = _n_count_matrices(len(cells), n)
    if n_states > budget.nodes:
        raise BudgetError(f"pairwise enumeration needs {n_states} states, over budget {budget.nodes}")

    prior = np.asarray(model.prior, dtype=float)
    with np.errstate(divide="ignore"):
        log_prior = np.log(prior)
        logq = np.where(q > 0.0, np.log(np.where(q > 0.0, q, 1.0)), -np.inf)
    # per-hypothesis generation prob of one draw in each cell, and the
    # log-likelihood each cell contributes to each hypothesis' posterior
    gen = np.array([[w[a] * q[i, a, z] for (a, z) in cells] for i in range(M)])  # (M, C)
    cell_loglike = np.array([[logq[i, a, z] for (a, z) in cells] for i in range(M)])  # (M, C)
    with np.errstate(divide="ignore"):
        log_gen = np.where(gen > 0.0, np.log(np.where(gen > 0.0, gen, 1.0)), -np.inf)
    abs_loglike = np.where(np.isfinite(cell_loglike), np.abs(cell_loglike), 0.0)
    abs_log_prior = np.where(np.isfinite(log_prior), np.abs(log_prior), 0.0)

    rates = np.zeros((M, M))
    ties = np.zeros((M, M))
    for counts in _count_matrices(len(cells), n):
        mult = _multinomial(counts)
        carr = np.asarray(counts, dtype=float)
        active = carr > 0
        # P(count matrix | theta = i), including the action-draw probabilities
        path_log = (carr[None, :] * np.where(active[None, :], log_gen, 0.0)).sum(axis=1)
        path_prob = mult * np.exp(path_log)
        # terminal log posterior masses (common action probs cancel)
        lm = log_prior + (carr[None, :] * np.where(active[None, :], cell_loglike, 0.0)).sum(axis=1)
        # tie tolerance: rounding in the lm sums accumulates to at most a few
        # ulps of the total term magnitude, far below the spacing of distinct
        # lattice values, so this snaps exactly the structurally tied classes
        magnitude = abs_log_prior + (carr[None, :] * np.where(active[None, :], abs_loglike, 0.0)).sum(axis=1)
        tol = 1e-12 * max(float(magnitude.max()), 1.0)
        for i in range(M):
            if path_prob[i] == 0.0:
                continue
            with np.errstate(invalid="ignore"):
                diff = lm - lm[i]
                beats = diff > tol
                equal = (np.abs(diff) <= tol) | (np.isneginf(lm) & np.isneginf(lm[i]))
            equal[i] = False
            rates[i] += path_prob[i] * beats
            ties[i] += path_prob[i] * equal

    sandwiches = []
    for i in range(M):
        for j in range(i + 1, M):
            worst = max(rates[i, j], rates[j, i])
            exponent = math.inf if worst == 0.0 else -math.log(worst) / n
            opt = alpha_max(model, i, j, w)
            sandwiches.append(
                PairSandwich(
                    i=i,
                    j=j,
                    n=n,
                    exponent=exponent,
                    alpha_star=opt.alpha_star,
                    predicted=opt.value,
                    gap=abs(exponent - opt.value) if math.isfinite(exponent) else math.inf,
                )
            )
    return PairwiseExact(rates=rates, ties=ties, n=n, sandwiches=tuple(sandwiches))
