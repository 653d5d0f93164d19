"""Bayesian posteriors over arm models and context weights.

Transition rows carry a Dirichlet-Categorical posterior per (arm, state,
action); active rewards carry a Gaussian posterior with known observation
noise per (arm, state); the context model is a per-arm Bayesian linear
regression. Passive rewards are known to be zero and are not learned.
All posteriors serialize to plain dicts for checkpoint/restart.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

DEFAULT_DIRICHLET_ALPHA = 1.0
DEFAULT_REWARD_PRIOR_MEAN = 0.0
DEFAULT_REWARD_PRIOR_VAR = 1.0
DEFAULT_OBS_VAR = 0.25


class TransitionPosterior:
    """Dirichlet concentration parameters per (arm, state, action) row."""

    def __init__(self, n_states: Sequence[int], prior_alpha: float = DEFAULT_DIRICHLET_ALPHA):
        if prior_alpha <= 0:
            raise ValueError("prior_alpha must be positive")
        self.prior_alpha = float(prior_alpha)
        # alpha[arm] has shape (S_arm, 2, S_arm): rows over next states.
        self.alpha = [np.full((s, 2, s), float(prior_alpha)) for s in n_states]

    @property
    def n_arms(self) -> int:
        return len(self.alpha)

    def update(self, arm: int, state: int, action: int, next_state: int) -> None:
        """Conjugate count update: one observed transition."""
        self.alpha[arm][state, action, next_state] += 1.0

    def mean(self, arm: int) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean kernels (p_active, p_passive); rows sum to 1."""
        a = self.alpha[arm]
        mean = a / a.sum(axis=2, keepdims=True)
        return mean[:, 1, :], mean[:, 0, :]

    def sample(self, arm: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Exact Dirichlet draw of (p_active, p_passive) row by row.

        Uses the gamma representation so all rows draw in one call.
        """
        gammas = rng.gamma(shape=self.alpha[arm])
        rows = gammas / gammas.sum(axis=2, keepdims=True)
        return rows[:, 1, :], rows[:, 0, :]

    def to_dict(self) -> dict:
        return {
            "prior_alpha": self.prior_alpha,
            "alpha": [a.tolist() for a in self.alpha],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TransitionPosterior":
        post = cls([len(a) for a in payload["alpha"]], payload["prior_alpha"])
        post.alpha = [np.asarray(a, dtype=float) for a in payload["alpha"]]
        return post


class RewardPosterior:
    """Gaussian posterior over the active reward of each (arm, state).

    The observation noise variance obs_var is treated as known, so each
    update is the standard conjugate normal-mean update.
    """

    def __init__(
        self,
        n_states: Sequence[int],
        prior_mean: float = DEFAULT_REWARD_PRIOR_MEAN,
        prior_var: float = DEFAULT_REWARD_PRIOR_VAR,
        obs_var: float = DEFAULT_OBS_VAR,
    ):
        if prior_var <= 0 or obs_var <= 0:
            raise ValueError("variances must be positive")
        self.prior_mean = float(prior_mean)
        self.prior_var = float(prior_var)
        self.obs_var = float(obs_var)
        self.mean = [np.full(s, float(prior_mean)) for s in n_states]
        self.var = [np.full(s, float(prior_var)) for s in n_states]
        self.count = [np.zeros(s, dtype=int) for s in n_states]

    def update(self, arm: int, state: int, reward: float) -> None:
        if not np.isfinite(reward):
            raise ValueError(f"observed reward must be finite, got {reward}")
        precision = 1.0 / self.var[arm][state] + 1.0 / self.obs_var
        mean = (self.mean[arm][state] / self.var[arm][state] + reward / self.obs_var) / precision
        self.mean[arm][state] = mean
        self.var[arm][state] = 1.0 / precision
        self.count[arm][state] += 1

    def std(self, arm: int) -> np.ndarray:
        return np.sqrt(self.var[arm])

    def sample(self, arm: int, rng: np.random.Generator, clip_at_zero: bool = True) -> np.ndarray:
        """One Gaussian draw per state; clipped at zero (rewards are nonnegative)."""
        draw = self.mean[arm] + np.sqrt(self.var[arm]) * rng.standard_normal(self.mean[arm].shape)
        return np.maximum(draw, 0.0) if clip_at_zero else draw

    def to_dict(self) -> dict:
        return {
            "prior_mean": self.prior_mean,
            "prior_var": self.prior_var,
            "obs_var": self.obs_var,
            "mean": [m.tolist() for m in self.mean],
            "var": [v.tolist() for v in self.var],
            "count": [c.tolist() for c in self.count],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RewardPosterior":
        post = cls(
            [len(m) for m in payload["mean"]],
            payload["prior_mean"], payload["prior_var"], payload["obs_var"],
        )
        post.mean = [np.asarray(m, dtype=float) for m in payload["mean"]]
        post.var = [np.asarray(v, dtype=float) for v in payload["var"]]
        post.count = [np.asarray(c, dtype=int) for c in payload["count"]]
        return post


class ArmModelPosterior:
    """Bundle of transition and reward posteriors for a set of arms."""

    def __init__(
        self,
        n_states: Sequence[int],
        prior_alpha: float = DEFAULT_DIRICHLET_ALPHA,
        reward_prior_mean: float = DEFAULT_REWARD_PRIOR_MEAN,
        reward_prior_var: float = DEFAULT_REWARD_PRIOR_VAR,
        obs_var: float = DEFAULT_OBS_VAR,
    ):
        self.transition = TransitionPosterior(n_states, prior_alpha)
        self.reward = RewardPosterior(n_states, reward_prior_mean, reward_prior_var, obs_var)

    def update_transition(self, arm: int, state: int, action: int, next_state: int) -> None:
        self.transition.update(arm, state, action, next_state)

    def update_reward(self, arm: int, state: int, reward: float) -> None:
        self.reward.update(arm, state, reward)

    def sample_arm_model(
        self, arm: int, rng: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """One posterior draw (rewards, p_active, p_passive) for Thompson steps."""
        rewards = self.reward.sample(arm, rng)
        p_active, p_passive = self.transition.sample(arm, rng)
        return rewards, p_active, p_passive

    def to_dict(self) -> dict:
        return {"transition": self.transition.to_dict(), "reward": self.reward.to_dict()}

    @classmethod
    def from_dict(cls, payload: dict) -> "ArmModelPosterior":
        post = cls([1, 1])
        post.transition = TransitionPosterior.from_dict(payload["transition"])
        post.reward = RewardPosterior.from_dict(payload["reward"])
        return post


def sample_context_score(
    mean: np.ndarray, cov: np.ndarray, x: np.ndarray, rng: np.random.Generator
) -> float:
    """Thompson score from a Gaussian weight posterior: x . (weight draw).

    A zero covariance collapses the draw onto the mean exactly.
    """
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    if x.shape != mean.shape:
        raise ValueError(f"context shape {x.shape} does not match weights {mean.shape}")
    if not np.any(cov):
        return float(x @ mean)
    draw = mean + np.linalg.cholesky(cov) @ rng.standard_normal(mean.shape[0])
    return float(x @ draw)


class ContextPosterior:
    """Per-arm Bayesian linear regression of reward on the context vector.

    Kept in precision form (Lambda, b): updates are rank-one accumulations,
    so batch and sequential updates agree to machine precision.
    """

    def __init__(self, n_arms: int, dim: int, prior_var: float = 1.0, noise_var: float = DEFAULT_OBS_VAR):
        if prior_var <= 0 or noise_var <= 0:
            raise ValueError("variances must be positive")
        self.dim = int(dim)
        self.noise_var = float(noise_var)
        self.prior_var = float(prior_var)
        self.precision = [np.eye(dim) / prior_var for _ in range(n_arms)]
        self.shift = [np.zeros(dim) for _ in range(n_arms)]

    @property
    def n_arms(self) -> int:
        return len(self.precision)

    def update(self, arm: int, x: np.ndarray, reward: float) -> None:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"context must have shape ({self.dim},), got {x.shape}")
        if not (np.all(np.isfinite(x)) and np.isfinite(reward)):
            raise ValueError("context and reward must be finite")
        self.precision[arm] = self.precision[arm] + np.outer(x, x) / self.noise_var
        self.shift[arm] = self.shift[arm] + x * reward / self.noise_var

    def mean_weights(self, arm: int) -> np.ndarray:
        return np.linalg.solve(self.precision[arm], self.shift[arm])

    def covariance(self, arm: int) -> np.ndarray:
        return np.linalg.inv(self.precision[arm])

    def sample_score(self, arm: int, x: np.ndarray, rng: np.random.Generator) -> float:
        """Thompson score: inner product of the context with a weight draw."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"context must have shape ({self.dim},), got {x.shape}")
        return sample_context_score(self.mean_weights(arm), self.covariance(arm), x, rng)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "noise_var": self.noise_var,
            "prior_var": self.prior_var,
            "precision": [p.tolist() for p in self.precision],
            "shift": [s.tolist() for s in self.shift],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ContextPosterior":
        post = cls(len(payload["precision"]), payload["dim"],
                   payload["prior_var"], payload["noise_var"])
        post.precision = [np.asarray(p, dtype=float) for p in payload["precision"]]
        post.shift = [np.asarray(s, dtype=float) for s in payload["shift"]]
        return post
