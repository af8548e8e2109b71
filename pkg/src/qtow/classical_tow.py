"""Classical tug-of-war baseline.

The pair (x_A, x_B) with x_A + x_B held constant collapses to the single
difference x = x_A - x_B. A pull of +1 on a reward and -w on a miss is
applied to the chosen side; the choice is the sign of x + noise.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._accel import njit
from .bandit_env import Arm, BanditEnv, reward_from_uniform
from .rng import STREAM_NOISE, STREAM_REWARD, derive_seed, uniform_block, box_muller


@dataclass(frozen=True)
class ClassicalTowAgent:
    x: float = 0.0
    sigma: float = 1.0
    w: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.x):
            raise ValueError("x must be finite")
        if self.sigma < 0 or self.w < 0:
            raise ValueError("sigma and w must be non-negative")

    def pair(self, total: float = 0.0) -> tuple[float, float]:
        """(x_A, x_B) with x_A + x_B = total."""
        return 0.5 * (total + self.x), 0.5 * (total - self.x)

    @classmethod
    def from_pair(cls, x_a: float, x_b: float, **kw) -> "ClassicalTowAgent":
        return cls(x=x_a - x_b, **kw)


@dataclass(frozen=True)
class ClassicalTrial:
    t: int
    arm: Arm
    reward: int
    x: float


def choose_from_noise(agent: ClassicalTowAgent, xi: float) -> Arm:
    # x + xi == 0 goes to A
    return Arm.A if agent.x + agent.sigma * xi >= 0.0 else Arm.B


def ctow_choose(agent: ClassicalTowAgent, rng) -> Arm:
    """Sign rule with Gaussian noise; ``rng`` must provide ``normal()``."""
    return choose_from_noise(agent, rng.normal())


def ctow_update(agent: ClassicalTowAgent, arm: Arm, outcome: int) -> ClassicalTowAgent:
    step = 1.0 if outcome else -agent.w
    if arm == Arm.B:
        step = -step
    return replace(agent, x=agent.x + step)


def ctow_run_trial(agent, env: BanditEnv, noise_rng, reward_rng, t: int = 0):
    arm = ctow_choose(agent, noise_rng)
    reward = reward_from_uniform(env, arm, reward_rng.uniform())
    agent = ctow_update(agent, arm, reward)
    return agent, ClassicalTrial(t, arm, reward, agent.x)


@njit
def classical_kernel(x0, sigma, w0, p_a, p_b, noise, u_reward,
                     adaptive, g0, eta, eps, arms, rewards, xs, g_hats):
    """Episode loop; ``adaptive`` switches w to w(g_hat) with the online estimator."""
    x = x0
    g = g0
    lo = eps
    hi = 2.0 - eps
    for t in range(noise.shape[0]):
        if adaptive:
            w = g / (2.0 - g)
        else:
            w = w0
        if x + sigma * noise[t] >= 0.0:
            arm = 0
            p = p_a
        else:
            arm = 1
            p = p_b
        win = 1 if u_reward[t] < p else 0
        step = 1.0 if win == 1 else -w
        if arm == 1:
            step = -step
        x += step
        if adaptive:
            g = g + eta * (win - g)
            if g < lo:
                g = lo
            elif g > hi:
                g = hi
        arms[t] = arm
        rewards[t] = win
        xs[t] = x
        g_hats[t] = g
    return x


def run_classical_episode(env: BanditEnv, trials: int, seed: int, *, x0=0.0, sigma=1.0,
                          w=None, eta=0.05, epsilon=0.01, g0=1.0):
    """Classical TOW episode.

    With ``w=None`` the loss weight follows w(g_hat) from the online estimator
    (started at ``g0``); otherwise ``w`` is fixed.

    Returns a dict of per-trial arrays: arm, reward, x, g_hat.
    """
    noise_key = derive_seed(seed, STREAM_NOISE)
    u = uniform_block(noise_key, 0, 2 * trials)
    noise = box_muller(u[0::2], u[1::2])
    u_reward = uniform_block(derive_seed(seed, STREAM_REWARD), 0, trials)
    arms = np.empty(trials, dtype=np.int64)
    rewards = np.empty(trials, dtype=np.int64)
    xs = np.empty(trials)
    g_hats = np.empty(trials)
    adaptive = w is None
    classical_kernel(float(x0), float(sigma), 1.0 if adaptive else float(w), env.p_a, env.p_b,
                     noise, u_reward, adaptive, float(g0), float(eta), float(epsilon),
                     arms, rewards, xs, g_hats)
    return {"arm": arms, "reward": rewards, "x": xs, "g_hat": g_hats}
