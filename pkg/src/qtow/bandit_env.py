"""Two-armed Bernoulli bandit."""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence


class Arm(IntEnum):
    A = 0
    B = 1

    @property
    def other(self) -> "Arm":
        return Arm.B if self is Arm.A else Arm.A


@dataclass(frozen=True)
class BanditEnv:
    p_a: float
    p_b: float

    def __post_init__(self):
        for name in ("p_a", "p_b"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p!r} outside [0, 1]")

    @property
    def g(self) -> float:
        """Environmental strength p_a + p_b."""
        return self.p_a + self.p_b

    def prob(self, arm: Arm) -> float:
        return self.p_a if arm == Arm.A else self.p_b

    def swapped(self) -> "BanditEnv":
        return BanditEnv(self.p_b, self.p_a)


def sample_reward(env: BanditEnv, arm: Arm, rng) -> int:
    """One Bernoulli draw; ``rng`` is anything with ``uniform()``."""
    return int(rng.uniform() < env.prob(arm))


def reward_from_uniform(env: BanditEnv, arm: Arm, u: float) -> int:
    return int(u < env.prob(arm))


def per_trial_reward_prob(env: BanditEnv, p_choose_a: float) -> float:
    if not 0.0 <= p_choose_a <= 1.0:
        raise ValueError(f"p_choose_a={p_choose_a!r} outside [0, 1]")
    return p_choose_a * env.p_a + (1.0 - p_choose_a) * env.p_b


def optimal_arm(env: BanditEnv) -> Arm:
    # ties go to A
    return Arm.A if env.p_a >= env.p_b else Arm.B


@dataclass(frozen=True)
class ScheduledEnv:
    """Piecewise-stationary wrapper: ``envs[k]`` is active from ``starts[k]`` on."""

    starts: Sequence[int]
    envs: Sequence[BanditEnv]

    def __post_init__(self):
        if len(self.starts) != len(self.envs) or not self.envs:
            raise ValueError("starts and envs must be non-empty and of equal length")
        if self.starts[0] != 0 or list(self.starts) != sorted(self.starts):
            raise ValueError("starts must begin at 0 and be increasing")

    def at(self, t: int) -> BanditEnv:
        k = 0
        for i, s in enumerate(self.starts):
            if t >= s:
                k = i
        return self.envs[k]
