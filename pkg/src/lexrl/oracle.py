"""Exact verification on explicit finite MDPs.

Everything here is computed by linear solves and enumeration, so it can serve
as ground truth for the lexicographic agent on problems small enough to
enumerate every deterministic policy.
"""

from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

VALUE_TOL = 1e-9


class Comparison(enum.Enum):
    BETTER = "better"
    WORSE = "worse"
    EQUAL = "equal"


class Feasibility(enum.Enum):
    FEASIBLE_FOR_10 = "feasible_for_10"  # every constraint met in every state
    FEASIBLE_FOR_6_ONLY = "feasible_for_6_only"  # met only on average under the initial distribution
    INFEASIBLE = "infeasible"


class MdpFormatError(ValueError):
    """Malformed MDP file; the message names the offending line or field."""


@dataclass(frozen=True)
class TabularMdp:
    """Finite constrained MDP.

    ``transitions[u, s, s']`` are the per-action transition matrices,
    ``costs[v, s, u, s']`` the one-step costs of channel ``v`` (0 = primary),
    ``thresholds[c - 1]`` the discounted budget of constraint ``c``.
    """

    transitions: np.ndarray
    costs: np.ndarray
    gamma: float
    thresholds: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        T = np.asarray(self.transitions, dtype=np.float64)
        R = np.asarray(self.costs, dtype=np.float64)
        K = np.asarray(self.thresholds, dtype=np.float64).reshape(-1)
        chi = np.asarray(self.initial, dtype=np.float64)
        if T.ndim != 3 or T.shape[1] != T.shape[2]:
            raise ValueError(f"transitions must have shape (A, S, S), got {T.shape}")
        n_actions, n_states, _ = T.shape
        if R.ndim == 3:
            R = np.repeat(R[..., None], n_states, axis=3)
        if R.shape[1:] != (n_states, n_actions, n_states):
            raise ValueError(f"costs must have shape (C+1, S, A[, S]), got {np.shape(self.costs)}")
        if np.any(T < 0) or np.any(np.abs(T.sum(axis=2) - 1.0) > 1e-12):
            raise ValueError("every transition row must be non-negative and sum to 1")
        if np.any(R < 0) or not np.all(np.isfinite(R)):
            raise ValueError("costs must be finite and non-negative")
        if K.size != R.shape[0] - 1:
            raise ValueError(f"{R.shape[0] - 1} constraint channels but {K.size} thresholds")
        if chi.shape != (n_states,) or np.any(chi < 0) or abs(chi.sum() - 1.0) > 1e-12:
            raise ValueError("initial distribution must be non-negative and sum to 1")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        for name, value in (("transitions", T), ("costs", R), ("thresholds", K), ("initial", chi)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def num_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_constraints(self) -> int:
        return self.costs.shape[0] - 1

    def expected_costs(self, v: int) -> np.ndarray:
        """``r_v[s, u] = sum_s' T(u)[s, s'] * rho_v(s, u, s')``."""
        return np.einsum("ust,sut->su", self.transitions, self.costs[v])


def _check_policy(mdp: TabularMdp, policy) -> np.ndarray:
    policy = np.asarray(policy, dtype=np.intp)
    if policy.shape != (mdp.num_states,) or np.any(policy < 0) or np.any(policy >= mdp.num_actions):
        raise ValueError(f"policy must assign one of {mdp.num_actions} actions to each of {mdp.num_states} states")
    return policy


def policy_q_values(mdp: TabularMdp, policy, v: int) -> np.ndarray:
    """Exact ``Q_v^pi(s, u)`` by solving ``(I - gamma P_pi) V = r_pi``."""
    policy = _check_policy(mdp, policy)
    states = np.arange(mdp.num_states)
    r = mdp.expected_costs(v)
    P_pi = mdp.transitions[policy, states, :]
    V = np.linalg.solve(np.eye(mdp.num_states) - mdp.gamma * P_pi, r[states, policy])
    return r + mdp.gamma * np.einsum("ust,t->su", mdp.transitions, V)


def all_policy_values(mdp: TabularMdp, policy) -> np.ndarray:
    """``V_v^pi(s)`` for every channel, shape ``(C+1, S)``."""
    policy = _check_policy(mdp, policy)
    states = np.arange(mdp.num_states)
    return np.stack([policy_q_values(mdp, policy, v)[states, policy] for v in range(mdp.num_constraints + 1)])


def expected_cost(mdp: TabularMdp, policy, v: int) -> float:
    policy = _check_policy(mdp, policy)
    q = policy_q_values(mdp, policy, v)
    return float(mdp.initial @ q[np.arange(mdp.num_states), policy])


def met_count(values: np.ndarray, thresholds: np.ndarray, tol: float = VALUE_TOL) -> int:
    """Number of leading constraints met; ``values[c - 1]`` is ``Q_c``."""
    v = 0
    for q, k in zip(values, thresholds):
        if q > k + tol:
            break
        v += 1
    return v


def lex_key(values: np.ndarray, thresholds: np.ndarray, tol: float = VALUE_TOL) -> tuple[int, float]:
    """``(v, deciding value)`` where the deciding value is ``Q_{v+1}`` or ``Q_0`` if all are met.

    ``values`` is ``(Q_0, Q_1, ..., Q_C)`` at one state.
    """
    C = len(thresholds)
    v = met_count(values[1:], thresholds, tol)
    return v, float(values[0] if v == C else values[v + 1])


def compare_keys(a: tuple[int, float], b: tuple[int, float], tol: float = VALUE_TOL) -> Comparison:
    if a[0] != b[0]:
        return Comparison.BETTER if a[0] > b[0] else Comparison.WORSE
    if a[1] < b[1] - tol:
        return Comparison.BETTER
    if b[1] < a[1] - tol:
        return Comparison.WORSE
    return Comparison.EQUAL


def lex_compare(mdp: TabularMdp, first, second, state: int, tol: float = VALUE_TOL) -> Comparison:
    """Compare two policies at one state by their own action-values."""
    a = all_policy_values(mdp, first)[:, state]
    b = all_policy_values(mdp, second)[:, state]
    return compare_keys(lex_key(a, mdp.thresholds, tol), lex_key(b, mdp.thresholds, tol), tol)


def _policy_keys(mdp: TabularMdp, policies: np.ndarray, tol: float):
    """Per-policy, per-state met counts and deciding values."""
    C = mdp.num_constraints
    values = np.stack([all_policy_values(mdp, p) for p in policies])  # (P, C+1, S)
    met = values[:, 1:, :] <= mdp.thresholds[None, :, None] + tol
    # leading run of met constraints
    counts = np.cumprod(met, axis=1).sum(axis=1) if C else np.zeros((len(policies), mdp.num_states), dtype=int)
    idx = np.where(counts == C, 0, counts + 1)
    deciding = np.take_along_axis(values, idx[:, None, :], axis=1)[:, 0, :]
    return counts, deciding


def enumerate_policies(mdp: TabularMdp) -> np.ndarray:
    """All deterministic policies in lexicographic encoding order."""
    return np.array(list(itertools.product(range(mdp.num_actions), repeat=mdp.num_states)), dtype=np.intp)


def brute_force_lex_optimal(mdp: TabularMdp, budget: int = 100_000, return_all: bool = False, tol: float = VALUE_TOL):
    """Enumerate every deterministic policy and keep the undominated ones.

    ``first`` dominates ``second`` when it is at least as good in every state
    and strictly better in one. Among undominated policies the one meeting
    the most constraints summed over states is returned, then the first in
    encoding order. With ``return_all`` the whole undominated set comes back.
    """
    n = mdp.num_actions ** mdp.num_states
    if n > budget:
        raise ValueError(f"{n} policies exceed the enumeration budget of {budget}")
    policies = enumerate_policies(mdp)
    counts, deciding = _policy_keys(mdp, policies, tol)

    # pairwise per-state comparison: better[i, j, s] when policy i beats j at s
    ci, cj = counts[:, None, :], counts[None, :, :]
    di, dj = deciding[:, None, :], deciding[None, :, :]
    better = (ci > cj) | ((ci == cj) & (di < dj - tol))
    worse = (ci < cj) | ((ci == cj) & (dj < di - tol))
    dominates = (~worse).all(axis=2) & better.any(axis=2)
    undominated = np.flatnonzero(~dominates.any(axis=0))

    if return_all:
        return policies[undominated]
    met_total = counts[undominated].sum(axis=1)
    best = undominated[np.flatnonzero(met_total == met_total.max())[0]]
    return policies[best]


def value_iteration(mdp: TabularMdp, v: int = 0, tol: float = 1e-12, max_iter: int = 100_000):
    """Unconstrained optimal policy and values for channel ``v``."""
    r = mdp.expected_costs(v)
    V = np.zeros(mdp.num_states)
    for _ in range(max_iter):
        Q = r + mdp.gamma * np.einsum("ust,t->su", mdp.transitions, V)
        V_new = Q.min(axis=1)
        if np.max(np.abs(V_new - V)) < tol:
            V = V_new
            break
        V = V_new
    Q = r + mdp.gamma * np.einsum("ust,t->su", mdp.transitions, V)
    return np.argmin(Q, axis=1), V


def feasibility_check(mdp: TabularMdp, policy, tol: float = VALUE_TOL) -> Feasibility:
    values = all_policy_values(mdp, policy)[1:]
    K = mdp.thresholds[:, None]
    if np.all(values <= K + tol):
        return Feasibility.FEASIBLE_FOR_10
    if np.all(values @ mdp.initial <= mdp.thresholds + tol):
        return Feasibility.FEASIBLE_FOR_6_ONLY
    return Feasibility.INFEASIBLE


# file format --------------------------------------------------------------

_REQUIRED = ("gamma", "transitions", "costs", "initial")


def mdp_from_dict(data: dict) -> TabularMdp:
    """Build a :class:`TabularMdp` from parsed JSON, naming the bad field on error.

    Keys: ``gamma``, ``transitions`` (A x S x S), ``costs`` (C+1 channels, each
    S x A or S x A x S), ``thresholds`` (C discounted budgets) or
    ``raw_thresholds`` (C per-step probabilities), ``initial`` (S).
    """
    if not isinstance(data, dict):
        raise MdpFormatError("top level must be an object")
    missing = [k for k in _REQUIRED if k not in data]
    if missing:
        raise MdpFormatError(f"missing field(s): {', '.join(missing)}")
    known = set(_REQUIRED) | {"thresholds", "raw_thresholds", "num_states", "num_actions", "name", "description"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise MdpFormatError(f"unknown field(s): {', '.join(unknown)}")

    def array(field, ndim):
        try:
            arr = np.asarray(data[field], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise MdpFormatError(f"field '{field}': not a rectangular numeric array ({exc})") from None
        if arr.ndim not in ndim:
            raise MdpFormatError(f"field '{field}': expected {' or '.join(map(str, ndim))} dimensions, got {arr.ndim}")
        return arr

    gamma = data["gamma"]
    if not isinstance(gamma, (int, float)) or not 0 < gamma < 1:
        raise MdpFormatError(f"field 'gamma': must be a number in (0, 1), got {gamma!r}")
    T = array("transitions", (3,))
    n_actions, n_states = T.shape[0], T.shape[1]
    if T.shape[2] != n_states:
        raise MdpFormatError(f"field 'transitions': each matrix must be square, got {T.shape[1:]}")
    for key, expected in (("num_states", n_states), ("num_actions", n_actions)):
        if key in data and data[key] != expected:
            raise MdpFormatError(f"field '{key}': declares {data[key]} but transitions imply {expected}")
    for u in range(n_actions):
        for s in range(n_states):
            row = T[u, s]
            if np.any(row < 0) or abs(row.sum() - 1.0) > 1e-12:
                raise MdpFormatError(
                    f"field 'transitions[{u}][{s}]': row must be non-negative and sum to 1, sums to {row.sum()!r}"
                )
    R = array("costs", (3, 4))
    if R.shape[1:3] != (n_states, n_actions) or (R.ndim == 4 and R.shape[3] != n_states):
        raise MdpFormatError(f"field 'costs': expected (C+1, {n_states}, {n_actions}[, {n_states}]), got {R.shape}")
    if np.any(R < 0):
        bad = tuple(int(i) for i in np.argwhere(R < 0)[0])
        raise MdpFormatError(f"field 'costs{list(bad)}': costs must be non-negative")
    n_constraints = R.shape[0] - 1
    if "thresholds" in data and "raw_thresholds" in data:
        raise MdpFormatError("give either 'thresholds' or 'raw_thresholds', not both")
    if "raw_thresholds" in data:
        K = array("raw_thresholds", (1,)) / (1.0 - gamma)
        kfield = "raw_thresholds"
    else:
        K = array("thresholds", (1,)) if "thresholds" in data else np.zeros(0)
        kfield = "thresholds"
    if K.size != n_constraints:
        raise MdpFormatError(f"field '{kfield}': {n_constraints} constraint channels need {n_constraints} values, got {K.size}")
    chi = array("initial", (1,))
    if chi.shape != (n_states,) or np.any(chi < 0) or abs(chi.sum() - 1.0) > 1e-12:
        raise MdpFormatError(f"field 'initial': must be {n_states} non-negative entries summing to 1")
    return TabularMdp(T, R, float(gamma), K, chi)


def mdp_to_dict(mdp: TabularMdp) -> dict:
    return {
        "gamma": mdp.gamma,
        "transitions": mdp.transitions.tolist(),
        "costs": mdp.costs.tolist(),
        "thresholds": mdp.thresholds.tolist(),
        "initial": mdp.initial.tolist(),
    }


def load_mdp(path) -> TabularMdp:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MdpFormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return mdp_from_dict(data)
    except MdpFormatError as exc:
        raise MdpFormatError(f"{path}: {exc}") from None


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int, n_constraints: int, gamma: float = 0.9,
               threshold_scale: float | None = None) -> TabularMdp:
    """Random dense MDP for property checks.

    Thresholds default to a uniform draw inside the range of achievable
    constraint values, so some instances are feasible and some are not.
    """
    T = rng.random((n_actions, n_states, n_states)) ** 3
    T /= T.sum(axis=2, keepdims=True)
    R = rng.random((n_constraints + 1, n_states, n_actions, n_states))
    R[1:] = (R[1:] < 0.4).astype(float)
    chi = rng.random(n_states)
    chi /= chi.sum()
    hi = 1.0 / (1.0 - gamma) if threshold_scale is None else threshold_scale
    K = rng.uniform(0.1 * hi, 0.6 * hi, size=n_constraints)
    return TabularMdp(T, R, gamma, K, chi)
