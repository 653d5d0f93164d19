"""Ground-truth restless arm for one data center.

Each arm is a cyclic VM job queue split into batches of ``batch_size`` jobs;
the queue position is the arm's state. Passive arms execute the default next
batch (deterministic cyclic advance). Activated arms look ahead ``lookahead``
jobs, run the lowest-power substitute batch, and earn the clipped net benefit
of the swap; the queue then advances by a random number of batches drawn from
the configured kick distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from .workload import VmJob

# One batch is one hour of wall time, so watts convert to kWh via /1000.
WATTS_TO_KWH = 1e-3

DEFAULT_LMP = 0.03  # dollars per kWh
DEFAULT_KICK = {1: 0.7, 2: 0.3}  # batches advanced under activation


class ArmShapeError(ValueError):
    """Raised when the job list cannot be partitioned into batches."""


@dataclass(frozen=True)
class ArmModel:
    """Immutable ground truth for one arm."""

    arm_id: int
    jobs: tuple[VmJob, ...]
    batch_size: int  # N_j: jobs executed per state
    lookahead: int  # N_f >= N_j: jobs inspected under activation
    n_states: int  # N_m / N_j
    rewards: np.ndarray  # (n_states,) active reward in dollars
    p_active: np.ndarray  # (n_states, n_states) row-stochastic
    p_passive: np.ndarray  # (n_states, n_states) row-stochastic
    lmp: float
    delay_mult: float


def batch_indices(arm: ArmModel, state: int) -> tuple[int, ...]:
    """Indices into arm.jobs of the default batch B_s."""
    start = state * arm.batch_size
    return tuple((start + i) % len(arm.jobs) for i in range(arm.batch_size))


def lookahead_indices(arm: ArmModel, state: int) -> tuple[int, ...]:
    """Indices into arm.jobs of the lookahead window W_s (wraps cyclically)."""
    start = state * arm.batch_size
    return tuple((start + i) % len(arm.jobs) for i in range(arm.lookahead))


def reschedule(arm: ArmModel, state: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Pick the substitute batch C_s and the delayed set D_s for a state.

    C_s is the batch_size lowest-power jobs in the lookahead window, ties
    broken by queue order (stable). D_s is the part of the default batch
    that got swapped out. Returns (chosen, delayed) as job indices.
    """
    window = lookahead_indices(arm, state)
    # Stable sort of window positions by power: queue order wins ties.
    order = sorted(range(len(window)), key=lambda k: arm.jobs[window[k]].power)
    chosen = tuple(window[k] for k in sorted(order[: arm.batch_size]))
    chosen_set = set(chosen)
    delayed = tuple(j for j in batch_indices(arm, state) if j not in chosen_set)
    return chosen, delayed


def active_reward(arm: ArmModel, state: int) -> float:
    """Clipped net benefit of activating in a state, in dollars.

    Savings are lmp * (default - chosen) batch energy over a one-hour batch;
    the penalty is the QoS cost of delayed interactive jobs times delay_mult.
    Passive reward is always zero and not represented here.
    """
    chosen, delayed = reschedule(arm, state)
    p_def = sum(arm.jobs[j].power for j in batch_indices(arm, state))
    p_sel = sum(arm.jobs[j].power for j in chosen)
    c_delay = sum(arm.jobs[j].qos_cost for j in delayed if arm.jobs[j].interactive)
    savings = arm.lmp * (p_def - p_sel) * WATTS_TO_KWH
    return max(0.0, savings - arm.delay_mult * c_delay)


def _kick_kernel(n_states: int, kick: Mapping[int, float]) -> np.ndarray:
    kernel = np.zeros((n_states, n_states))
    for advance, prob in kick.items():
        for s in range(n_states):
            kernel[s, (s + advance) % n_states] += prob
    return kernel


def build_arm(
    jobs: list[VmJob],
    batch_size: int,
    lookahead: int,
    lmp: float = DEFAULT_LMP,
    delay_mult: float = 1.0,
    kick: Mapping[int, float] | None = None,
    arm_id: int = 0,
) -> ArmModel:
    """Construct the ground-truth ArmModel from a job list.

    The job count must be divisible by batch_size and yield at least two
    states. The passive kernel is the deterministic cyclic shift; the active
    kernel advances by k batches with probability kick[k].
    """
    if batch_size < 1:
        raise ArmShapeError("batch_size must be at least 1")
    if len(jobs) % batch_size != 0:
        raise ArmShapeError(
            f"{len(jobs)} jobs not divisible by batch_size {batch_size}"
        )
    if lookahead < batch_size:
        raise ArmShapeError("lookahead must be at least batch_size")
    if lookahead > len(jobs):
        raise ArmShapeError("lookahead cannot exceed the queue length")
    n_states = len(jobs) // batch_size
    if n_states < 2:
        raise ArmShapeError("need at least 2 states")
    kick = dict(DEFAULT_KICK if kick is None else kick)
    total = sum(kick.values())
    if not np.isclose(total, 1.0, atol=1e-9):
        raise ArmShapeError(f"kick probabilities sum to {total}, expected 1")
    if any(adv < 1 or prob < 0 for adv, prob in kick.items()):
        raise ArmShapeError("kick advances must be >= 1 with nonnegative probability")

    p_passive = _kick_kernel(n_states, {1: 1.0})
    p_active = _kick_kernel(n_states, kick)
    arm = ArmModel(
        arm_id=arm_id,
        jobs=tuple(jobs),
        batch_size=batch_size,
        lookahead=lookahead,
        n_states=n_states,
        rewards=np.zeros(n_states),
        p_active=p_active,
        p_passive=p_passive,
        lmp=lmp,
        delay_mult=delay_mult,
    )
    rewards = np.array([active_reward(arm, s) for s in range(n_states)])
    return replace(arm, rewards=rewards)


def step(
    arm: ArmModel, state: int, action: int, rng: np.random.Generator
) -> tuple[int, float]:
    """Advance one round: sample the next state, return (next_state, reward)."""
    kernel = arm.p_active if action == 1 else arm.p_passive
    next_state = int(rng.choice(arm.n_states, p=kernel[state]))
    reward = float(arm.rewards[state]) if action == 1 else 0.0
    return next_state, reward


def arm_snapshot(arm: ArmModel) -> str:
    """Structured text snapshot of the arm (for golden-file comparisons)."""
    lines = [
        f"arm_id {arm.arm_id}",
        f"n_states {arm.n_states} batch_size {arm.batch_size} lookahead {arm.lookahead}",
        f"lmp {arm.lmp:.12g} delay_mult {arm.delay_mult:.12g}",
        "rewards " + " ".join(f"{r:.12g}" for r in arm.rewards),
    ]
    for name, kernel in (("p_passive", arm.p_passive), ("p_active", arm.p_active)):
        lines.append(name)
        for row in kernel:
            lines.append("  " + " ".join(f"{p:.12g}" for p in row))
    return "\n".join(lines) + "\n"
