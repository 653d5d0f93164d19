"""Subsidy-MDP solvers, indexability checks, and Whittle index tables.

The single-arm subsidy MDP pays the active reward under activation and a
subsidy ``lam`` under passivity. The Whittle index of a state is the smallest
subsidy at which staying passive is (weakly) optimal there. Indices are found
by solving the subsidy MDP on a grid of subsidies, locating the first grid
point where each state turns passive, and bisecting inside the bracketing
interval. The value iteration is vectorized across subsidies, so one sweep
solves the whole grid at once.

A brute-force product-MDP solver (``solve_joint_mdp``) is included for
desk-scale optimality comparisons; the product state space is guarded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import product
from math import prod
from typing import Optional, Sequence

import numpy as np

from .arm_env import ArmModel


class SolverError(RuntimeError):
    """Value iteration failed to reach the requested residual."""


class IndexabilityError(ValueError):
    """Whittle indices requested for an arm that failed the indexability check."""


class JointSizeError(ValueError):
    """Product state space exceeds the brute-force guard."""


DEFAULT_BETA = 0.95
DEFAULT_VI_TOL = 1e-8
DEFAULT_MAX_ITER = 100_000
DEFAULT_GRID_POINTS = 201
DEFAULT_BISECT_TOL = 1e-6


@dataclass(frozen=True)
class SubsidySolution:
    """Converged solution of a single-arm subsidy MDP at one subsidy."""

    subsidy: float
    values: np.ndarray  # V over states
    q_active: np.ndarray
    q_passive: np.ndarray
    passive_set: frozenset[int]  # states where Q_passive >= Q_active


@dataclass(frozen=True)
class IndexabilityReport:
    indexable: bool
    violation: Optional[str]  # description of the first violation, if any
    grid: np.ndarray


@dataclass(frozen=True)
class WhittleTable:
    indices: np.ndarray  # W over states, dollars
    indexable: bool
    grid: np.ndarray
    beta: float


def _validate(rewards: np.ndarray, p_active: np.ndarray, p_passive: np.ndarray,
              beta: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rewards = np.asarray(rewards, dtype=float)
    p_active = np.asarray(p_active, dtype=float)
    p_passive = np.asarray(p_passive, dtype=float)
    n = rewards.shape[0]
    for name, kernel in (("p_active", p_active), ("p_passive", p_passive)):
        if kernel.shape != (n, n):
            raise ValueError(f"{name} must be ({n}, {n}), got {kernel.shape}")
        if not np.allclose(kernel.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError(f"{name} rows must sum to 1")
    if not (0 < beta < 1):
        # beta = 1 would break value-iteration convergence; discounted only.
        raise ValueError(f"beta must be in (0, 1), got {beta}")
    return rewards, p_active, p_passive


def _solve_grid(
    rewards: np.ndarray,
    p_active: np.ndarray,
    p_passive: np.ndarray,
    subsidies: np.ndarray,
    beta: float,
    tol: float,
    max_iter: int,
    v_init: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Value-iterate the subsidy MDP for a whole vector of subsidies at once.

    Returns (V, Q_active, Q_passive, passive) with shape (len(subsidies), S);
    passive marks states where Q_passive >= Q_active (ties passive).
    """
    lam = np.asarray(subsidies, dtype=float).reshape(-1, 1)  # (L, 1)
    v = np.zeros((lam.shape[0], rewards.shape[0])) if v_init is None else v_init.copy()
    p_active_t = p_active.T
    p_passive_t = p_passive.T
    for _ in range(max_iter):
        q1 = rewards + beta * (v @ p_active_t)
        q0 = lam + beta * (v @ p_passive_t)
        v_next = np.maximum(q1, q0)
        residual = np.max(np.abs(v_next - v))
        v = v_next
        if residual <= tol:
            break
    else:
        raise SolverError(
            f"value iteration did not converge in {max_iter} iterations "
            f"(residual {residual:.3e}, tol {tol:.3e})"
        )
    q1 = rewards + beta * (v @ p_active_t)
    q0 = lam + beta * (v @ p_passive_t)
    return v, q1, q0, q0 >= q1


def solve_subsidy_mdp(
    rewards: np.ndarray,
    p_active: np.ndarray,
    p_passive: np.ndarray,
    subsidy: float,
    beta: float = DEFAULT_BETA,
    tol: float = DEFAULT_VI_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SubsidySolution:
    """Solve one single-arm subsidy MDP to a sup-norm Bellman residual <= tol."""
    rewards, p_active, p_passive = _validate(rewards, p_active, p_passive, beta)
    if tol <= 0:
        raise ValueError("tol must be positive")
    v, q1, q0, passive = _solve_grid(
        rewards, p_active, p_passive, np.array([subsidy]), beta, tol, max_iter
    )
    return SubsidySolution(
        subsidy=float(subsidy),
        values=v[0],
        q_active=q1[0],
        q_passive=q0[0],
        passive_set=frozenset(np.flatnonzero(passive[0]).tolist()),
    )


def default_grid(rewards: np.ndarray, n_points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Subsidy grid spanning [min r - 1, max r + 1].

    Passive reward is zero, so subsidies beyond the reward range by a margin
    of one dollar force all-active / all-passive boundary behavior.
    """
    rewards = np.asarray(rewards, dtype=float)
    return np.linspace(rewards.min() - 1.0, rewards.max() + 1.0, n_points)


def _monotone_violation(passive: np.ndarray, grid: np.ndarray) -> Optional[str]:
    """First violation of boundary or monotone passive-set expansion, if any."""
    if passive[0].any():
        state = int(np.flatnonzero(passive[0])[0])
        return (f"passive set not empty at grid min {grid[0]:.6g} "
                f"(state {state} already passive)")
    if not passive[-1].all():
        state = int(np.flatnonzero(~passive[-1])[0])
        return (f"passive set not full at grid max {grid[-1]:.6g} "
                f"(state {state} still active)")
    shrink = passive[:-1] & ~passive[1:]
    if shrink.any():
        k, state = map(int, np.argwhere(shrink)[0])
        return (f"state {state} left the passive set between subsidies "
                f"{grid[k]:.6g} and {grid[k + 1]:.6g}")
    return None


def check_indexability(
    rewards: np.ndarray,
    p_active: np.ndarray,
    p_passive: np.ndarray,
    grid: Optional[np.ndarray] = None,
    beta: float = DEFAULT_BETA,
    tol: float = DEFAULT_VI_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> IndexabilityReport:
    """Numerically verify monotone passive-set expansion along a subsidy grid.

    Indexable means the passive set is empty at the grid minimum, the full
    state set at the grid maximum, and never loses a state as the subsidy
    increases. A violation is a valid result, not an error.
    """
    rewards, p_active, p_passive = _validate(rewards, p_active, p_passive, beta)
    grid = default_grid(rewards) if grid is None else np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.shape[0] < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing with >= 2 points")
    _, _, _, passive = _solve_grid(rewards, p_active, p_passive, grid, beta, tol, max_iter)
    violation = _monotone_violation(passive, grid)
    return IndexabilityReport(indexable=violation is None, violation=violation, grid=grid)


def whittle_index(
    rewards: np.ndarray,
    p_active: np.ndarray,
    p_passive: np.ndarray,
    beta: float = DEFAULT_BETA,
    grid: Optional[np.ndarray] = None,
    bisect_tol: float = DEFAULT_BISECT_TOL,
    tol: float = DEFAULT_VI_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    require_indexable: bool = True,
) -> WhittleTable:
    """Compute per-state Whittle indices.

    Each index is the infimum subsidy at which the state joins the passive
    set: the first grid crossing is located, then refined by bisection to
    within bisect_tol. With require_indexable the arm must pass the
    monotone-expansion check; otherwise the first crossing is used as-is
    (the caller's override for e.g. posterior-sampled models).
    """
    rewards, p_active, p_passive = _validate(rewards, p_active, p_passive, beta)
    grid = default_grid(rewards) if grid is None else np.asarray(grid, dtype=float)
    _, _, _, passive = _solve_grid(rewards, p_active, p_passive, grid, beta, tol, max_iter)
    violation = _monotone_violation(passive, grid)
    if violation is not None and require_indexable:
        raise IndexabilityError(violation)

    n_states = rewards.shape[0]
    # First grid point at which each state is passive.
    first = np.full(n_states, grid.shape[0], dtype=int)
    for s in range(n_states):
        hits = np.flatnonzero(passive[:, s])
        if hits.size:
            first[s] = hits[0]

    lo = np.empty(n_states)
    hi = np.empty(n_states)
    for s in range(n_states):
        if first[s] == 0:  # passive from the start: index pinned to grid min
            lo[s] = hi[s] = grid[0]
        elif first[s] == grid.shape[0]:  # never passive: pinned to grid max
            lo[s] = hi[s] = grid[-1]
        else:
            lo[s], hi[s] = grid[first[s] - 1], grid[first[s]]

    # Bisect all states at once: solve the MDP at each state's midpoint and
    # read that state's own passivity off the diagonal.
    while np.max(hi - lo) > bisect_tol:
        mid = 0.5 * (lo + hi)
        _, _, _, passive_mid = _solve_grid(
            rewards, p_active, p_passive, mid, beta, tol, max_iter
        )
        on_diag = passive_mid[np.arange(n_states), np.arange(n_states)]
        hi = np.where(on_diag, mid, hi)
        lo = np.where(on_diag, lo, mid)

    return WhittleTable(
        indices=0.5 * (lo + hi),
        indexable=violation is None,
        grid=grid,
        beta=beta,
    )


def arm_whittle_table(arm: ArmModel, beta: float = DEFAULT_BETA, **kwargs) -> WhittleTable:
    """Whittle table for a ground-truth arm."""
    return whittle_index(arm.rewards, arm.p_active, arm.p_passive, beta=beta, **kwargs)


def arm_indexability(arm: ArmModel, beta: float = DEFAULT_BETA, **kwargs) -> IndexabilityReport:
    """Indexability report for a ground-truth arm."""
    return check_indexability(arm.rewards, arm.p_active, arm.p_passive, beta=beta, **kwargs)


def whittle_table_to_json(table: WhittleTable) -> str:
    """Serialize a table for golden-file regression comparisons."""
    payload = {
        "indices": [round(float(w), 12) for w in table.indices],
        "indexable": table.indexable,
        "grid_min": round(float(table.grid[0]), 12),
        "grid_max": round(float(table.grid[-1]), 12),
        "grid_points": int(table.grid.shape[0]),
        "beta": table.beta,
    }
    return json.dumps(payload, indent=2, sort_keys=True)


@dataclass(frozen=True)
class JointSolution:
    """Exact solution of the budget-constrained product MDP."""

    values: np.ndarray  # optimal discounted value per joint state
    policy: np.ndarray  # index into `actions` per joint state
    actions: tuple[tuple[int, ...], ...]  # feasible activation vectors
    shape: tuple[int, ...]  # per-arm state counts

    def joint_index(self, states: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(states), self.shape))


def solve_joint_mdp(
    arms: Sequence[ArmModel],
    budget: int,
    beta: float = DEFAULT_BETA,
    tol: float = DEFAULT_VI_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    max_states: int = 10_000,
) -> JointSolution:
    """Exact value iteration over the product MDP with a per-round budget.

    Actions are every activation vector with at most ``budget`` ones. Only
    meant for desk-scale instances; raises JointSizeError beyond max_states
    product states.
    """
    shape = tuple(arm.n_states for arm in arms)
    n_joint = prod(shape)
    if n_joint > max_states:
        raise JointSizeError(f"product space has {n_joint} states (guard {max_states})")
    if not (0 < beta < 1):
        raise ValueError(f"beta must be in (0, 1), got {beta}")
    actions = tuple(a for a in product((0, 1), repeat=len(arms)) if sum(a) <= budget)

    kernels = []
    reward_vecs = []
    for act in actions:
        p_joint = np.ones((1, 1))
        for arm, a in zip(arms, act):
            p_joint = np.kron(p_joint, arm.p_active if a else arm.p_passive)
        kernels.append(p_joint)
        r_joint = np.zeros(shape)
        for i, (arm, a) in enumerate(zip(arms, act)):
            if a:
                expand = [1] * len(arms)
                expand[i] = shape[i]
                r_joint = r_joint + arm.rewards.reshape(expand)
        reward_vecs.append(r_joint.reshape(-1))

    v = np.zeros(n_joint)
    for _ in range(max_iter):
        q = np.stack([r + beta * (p @ v) for r, p in zip(reward_vecs, kernels)])
        v_next = q.max(axis=0)
        residual = np.max(np.abs(v_next - v))
        v = v_next
        if residual <= tol:
            break
    else:
        raise SolverError(f"joint value iteration did not converge (residual {residual:.3e})")
    q = np.stack([r + beta * (p @ v) for r, p in zip(reward_vecs, kernels)])
    return JointSolution(values=v, policy=q.argmax(axis=0), actions=actions, shape=shape)
