"""Quantum tug-of-war agent.

Two realizations share every update formula:

``device``
    A fresh qutrit is prepared each trial from two classical settings, the
    decision angle ``alpha`` and the memory weight ``mu``::

        |psi> = sqrt(1-mu) (cos alpha |A> + sin alpha |B>) + sqrt(mu) |perp>

    The photon is discarded after the decision; history lives in
    (alpha, mu, g_hat) only.

``state``
    One persistent qutrit is measured (Lueders collapse) and rotated trial
    after trial.

Orientation: a positive ``rotation_ab`` angle carries amplitude from A to
B. A win pulls toward the chosen arm by ``theta``, a loss pushes away from
it by ``phi = w(g_hat) * theta`` with ``w(g) = g / (2 - g)``.

In device mode alpha is kept in [0, pi/2] by reflection. cos^2 is even and
symmetric about pi/2, so the reflected setting prepares a state with the
same decision statistics as the unreflected rotation.

Two entry points: the step functions (``qtow_decide``,
``qtow_learning_update``, ``memory_feedback``, ``run_trial``) built on
``quantum_core``, and ``run_episode`` which drives the compiled kernel over
a whole episode. Both consume the same counter-based draws and produce the
same trajectory.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from . import quantum_core as qc
from ._accel import njit
from .bandit_env import Arm, BanditEnv
from .rng import STREAM_DECISION, STREAM_REWARD, derive_seed, uniform_block

log = logging.getLogger(__name__)

MODES = ("device", "state")
PERP_POLICIES = ("postselect", "strict")
ESTIMATORS = ("known", "classical", "memory")

class ForcedPerpError(RuntimeError):
    """Postselection requested on a state with an empty decision subspace."""

    def __init__(self, t: Optional[int] = None):
        self.t = t
        where = "" if t is None else f" at trial {t}"
        super().__init__(f"P(A) + P(B) = 0{where}; postselection impossible (mu = 1?)")


@dataclass(frozen=True)
class AgentConfig:
    theta: float = 0.1
    mode: str = "device"
    perp_policy: str = "postselect"
    estimator: str = "classical"
    g: float = 1.0
    eta: float = 0.05
    epsilon: float = 0.01
    eta_mu: float = 0.05
    kappa: float = 0.05
    initial_alpha: float = math.pi / 4
    initial_mu: float = 0.5
    initial_g_hat: Optional[float] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.perp_policy not in PERP_POLICIES:
            raise ValueError(f"perp_policy must be one of {PERP_POLICIES}, got {self.perp_policy!r}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        for name in ("theta", "kappa", "initial_alpha"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon={self.epsilon!r} outside (0, 1)")
        if not 0.0 < self.eta < 1.0:
            raise ValueError(f"eta={self.eta!r} outside (0, 1)")
        if not 0.0 < self.eta_mu < 1.0:
            raise ValueError(f"eta_mu={self.eta_mu!r} outside (0, 1)")
        if not 0.0 <= self.initial_mu <= 1.0:
            raise ValueError(f"initial_mu={self.initial_mu!r} outside [0, 1]")
        if not 0.0 <= self.g <= 2.0:
            raise ValueError(f"g={self.g!r} outside [0, 2]")

    @property
    def mu_bounds(self) -> tuple[float, float]:
        return 0.5 * self.epsilon, 1.0 - 0.5 * self.epsilon

    def start_g_hat(self) -> float:
        if self.estimator == "known":
            g = self.g
        elif self.initial_g_hat is not None:
            g = self.initial_g_hat
        elif self.estimator == "memory":
            g = 2.0 * self.initial_mu
        else:
            g = 1.0
        return clamp(g, self.epsilon, 2.0 - self.epsilon)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AgentState:
    """Either ``psi`` (state mode) or the device settings ``alpha``/``mu`` carry history."""

    g_hat: float
    psi: Optional[np.ndarray] = None
    alpha: Optional[float] = None
    mu: Optional[float] = None

    def __post_init__(self):
        if (self.psi is None) == (self.alpha is None):
            raise ValueError("exactly one of psi (state mode) or alpha (device mode) must be set")

    @property
    def is_device(self) -> bool:
        return self.psi is None

    def current_psi(self) -> np.ndarray:
        if self.is_device:
            return prepare_device_state(self.alpha, self.mu)
        return self.psi

    def memory_weight(self) -> float:
        if self.is_device:
            return self.mu
        return float(abs(self.psi[qc.IDX_PERP]) ** 2)


@dataclass(frozen=True)
class TrialRecord:
    t: int
    arm: Optional[Arm]
    reward: Optional[int]
    p_a_pre: float
    g_hat: float
    mu: Optional[float]
    phi_t: float
    cumulative_regret: float


def clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


def asymmetry_w(g: float, epsilon: float = 0.01) -> float:
    """Loss/win weight ratio g / (2 - g); g at or above 2 is pulled back to 2 - epsilon."""
    if g < 0.0:
        raise ValueError(f"g={g!r} must be non-negative")
    if g > 2.0 - epsilon:
        log.warning("g=%r clamped to %r to keep w finite", g, 2.0 - epsilon)
        g = 2.0 - epsilon
    return g / (2.0 - g)


def estimator_step(g_hat: float, indicator: int, eta: float, epsilon: float) -> float:
    return clamp(g_hat + eta * (indicator - g_hat), epsilon, 2.0 - epsilon)


@njit
def _fold(a):
    a = abs(a)  # cos^2 is even; also avoids a/pi underflowing to -0.0
    a = a - np.pi * math.floor(a / np.pi)
    if a > 0.5 * np.pi:
        a = np.pi - a
    return a


def fold_angle(alpha: float) -> float:
    """Map alpha onto [0, pi/2] preserving cos^2(alpha)."""
    return float(_fold(float(alpha)))


def prepare_device_state(alpha: float, mu: float) -> np.ndarray:
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"mu={mu!r} outside [0, 1]")
    r = math.sqrt(1.0 - mu)
    return np.array([r * math.cos(alpha), r * math.sin(alpha), math.sqrt(mu)], dtype=np.complex128)


def initial_state(config: AgentConfig, psi0=None) -> AgentState:
    g_hat = config.start_g_hat()
    if config.mode == "device":
        return AgentState(g_hat=g_hat, alpha=fold_angle(config.initial_alpha), mu=config.initial_mu)
    if psi0 is None:
        psi0 = prepare_device_state(config.initial_alpha, config.initial_mu)
    return AgentState(g_hat=g_hat, psi=qc.check_state(psi0))


def decision_probabilities(psi) -> tuple[float, float, float]:
    return (qc.born_probability(psi, qc.M_A), qc.born_probability(psi, qc.M_B),
            qc.born_probability(psi, qc.M_PERP))


def qtow_decide(state: AgentState, config: AgentConfig, u: float):
    """Decision measurement driven by one uniform draw ``u``.

    Returns ``(arm, post_state)``; ``arm`` is None for a strict-policy
    perp outcome.
    """
    psi = state.current_psi()
    p_a, p_b, _ = decision_probabilities(psi)
    if config.perp_policy == "postselect":
        if p_a + p_b < qc.TOL_ZERO_BRANCH:
            raise ForcedPerpError()
        arm = Arm.A if u < p_a / (p_a + p_b) else Arm.B
    else:
        arm = Arm.A if u < p_a else Arm.B if u < p_a + p_b else None
    if state.is_device:
        return arm, state
    proj = qc.M_PERP if arm is None else (qc.M_A if arm == Arm.A else qc.M_B)
    post, _ = qc.lueders_collapse(psi, proj)
    return arm, replace(state, psi=post)


def loss_angle(state: AgentState, config: AgentConfig) -> float:
    return asymmetry_w(state.g_hat, config.epsilon) * config.theta


def learning_angle(arm: Arm, outcome: int, theta: float, phi: float) -> float:
    """Signed rotation_ab angle: toward the chosen arm on a win, away on a loss."""
    toward = -1.0 if arm == Arm.A else 1.0
    return toward * theta if outcome else -toward * phi


def qtow_learning_update(state: AgentState, arm: Arm, outcome: int, config: AgentConfig) -> AgentState:
    angle = learning_angle(arm, outcome, config.theta, loss_angle(state, config))
    if state.is_device:
        return replace(state, alpha=fold_angle(state.alpha + angle))
    return replace(state, psi=qc.apply_unitary(state.psi, qc.rotation_ab(angle)))


def memory_feedback(state: AgentState, indicator: int, config: AgentConfig,
                    arm: Arm = Arm.A) -> AgentState:
    """Reward-driven update of the memory weight mu and its readout g_hat = 2 mu."""
    lo, hi = config.mu_bounds
    if state.is_device:
        mu = clamp(state.mu + config.eta_mu * (indicator - state.mu), lo, hi)
        return replace(state, mu=mu, g_hat=2.0 * mu)
    rot = qc.rotation_a_perp if arm == Arm.A else qc.rotation_b_perp
    kappa = config.kappa if indicator else -config.kappa
    psi = qc.apply_unitary(state.psi, rot(kappa))
    mu = float(abs(psi[qc.IDX_PERP]) ** 2)
    return replace(state, psi=psi, g_hat=clamp(2.0 * mu, config.epsilon, 2.0 - config.epsilon))


def run_trial(state: AgentState, config: AgentConfig, env: BanditEnv, t: int,
              u_decision: float, u_reward: float, cumulative_regret: float = 0.0):
    """Decide, draw the reward, rotate, update the estimate. Returns (state, TrialRecord)."""
    best = max(env.p_a, env.p_b)
    p_a_pre = qc.born_probability(state.current_psi(), qc.M_A)
    phi = loss_angle(state, config)
    arm, state = qtow_decide(state, config, u_decision)
    if arm is None:
        # strict policy, perp outcome: no play, no reward, nothing to learn from
        rec = TrialRecord(t, None, None, p_a_pre, state.g_hat, state.memory_weight(), phi,
                          cumulative_regret + best)
        return state, rec
    reward = int(u_reward < env.prob(arm))
    state = qtow_learning_update(state, arm, reward, config)
    if config.estimator == "classical":
        state = replace(state, g_hat=estimator_step(state.g_hat, reward, config.eta, config.epsilon))
    elif config.estimator == "memory":
        state = memory_feedback(state, reward, config, arm)
    regret = cumulative_regret + (best - env.prob(arm))
    return state, TrialRecord(t, arm, reward, p_a_pre, state.g_hat, state.memory_weight(), phi, regret)


def run_episode_steps(config: AgentConfig, env: BanditEnv, trials: int, seed: int, psi0=None):
    """Reference episode through the step API (slow; used to cross-check the kernel)."""
    u_dec, u_rew = episode_draws(seed, trials)
    state = initial_state(config, psi0)
    regret = 0.0
    records = []
    for t in range(trials):
        state, rec = run_trial(state, config, env, t, u_dec[t], u_rew[t], regret)
        regret = rec.cumulative_regret
        records.append(rec)
    return state, records


def episode_draws(seed: int, trials: int):
    return (uniform_block(derive_seed(seed, STREAM_DECISION), 0, trials),
            uniform_block(derive_seed(seed, STREAM_REWARD), 0, trials))


# -- compiled episode loop ----------------------------------------------------

MODE_CODE = {"device": 0, "state": 1}
POLICY_CODE = {"postselect": 0, "strict": 1}
ESTIMATOR_CODE = {"known": 0, "classical": 1, "memory": 2}


@njit
def _rotate(psi, i, j, angle):
    c = math.cos(angle)
    s = math.sin(angle)
    x = psi[i]
    y = psi[j]
    psi[i] = c * x - s * y
    psi[j] = s * x + c * y


@njit
def qtow_kernel(mode, policy, estimator, theta, eta, eps, eta_mu, kappa,
                alpha0, mu0, g0, psi0, p_a, p_b, u_dec, u_rew,
                arms, rewards, p_a_pre, q_a, g_hats, mus, phis, regrets):
    """Run one episode in place. Returns -1 on success or the trial index of a forced-perp failure."""
    n = u_dec.shape[0]
    alpha = alpha0
    mu = mu0
    g = g0
    psi = psi0.copy()
    mu_lo = 0.5 * eps
    mu_hi = 1.0 - 0.5 * eps
    best = max(p_a, p_b)
    regret = 0.0
    for t in range(n):
        if mode == 0:
            r = math.sqrt(1.0 - mu)
            a = r * math.cos(alpha)
            b = r * math.sin(alpha)
            pa = a * a
            pb = b * b
        else:
            pa = psi[0].real ** 2 + psi[0].imag ** 2
            pb = psi[1].real ** 2 + psi[1].imag ** 2
        phi = g / (2.0 - g) * theta
        p_a_pre[t] = pa
        phis[t] = phi
        u = u_dec[t]
        if policy == 0:
            if pa + pb < 1e-15:
                return t
            q = pa / (pa + pb)
            q_a[t] = q
            arm = 0 if u < q else 1
        else:
            q_a[t] = pa
            if u < pa:
                arm = 0
            elif u < pa + pb:
                arm = 1
            else:
                arm = -1
        if mode == 1:
            k = arm if arm >= 0 else 2
            amp = psi[k]
            amp = amp / abs(amp)
            psi[0] = 0.0
            psi[1] = 0.0
            psi[2] = 0.0
            psi[k] = amp
        if arm < 0:
            regret += best
            arms[t] = -1
            rewards[t] = -1
            g_hats[t] = g
            mus[t] = mu if mode == 0 else psi[2].real ** 2 + psi[2].imag ** 2
            regrets[t] = regret
            continue
        p_arm = p_a if arm == 0 else p_b
        win = 1 if u_rew[t] < p_arm else 0
        toward = -1.0 if arm == 0 else 1.0
        angle = toward * theta if win == 1 else -toward * phi
        if mode == 0:
            alpha = _fold(alpha + angle)
        else:
            _rotate(psi, 0, 1, angle)
        if estimator == 1:
            g = g + eta * (win - g)
            if g < eps:
                g = eps
            elif g > 2.0 - eps:
                g = 2.0 - eps
        elif estimator == 2:
            if mode == 0:
                mu = mu + eta_mu * (win - mu)
                if mu < mu_lo:
                    mu = mu_lo
                elif mu > mu_hi:
                    mu = mu_hi
                g = 2.0 * mu
            else:
                kap = kappa if win == 1 else -kappa
                _rotate(psi, arm, 2, kap)
                m = psi[2].real ** 2 + psi[2].imag ** 2
                g = 2.0 * m
                if g < eps:
                    g = eps
                elif g > 2.0 - eps:
                    g = 2.0 - eps
        regret += best - p_arm
        arms[t] = arm
        rewards[t] = win
        g_hats[t] = g
        mus[t] = mu if mode == 0 else psi[2].real ** 2 + psi[2].imag ** 2
        regrets[t] = regret
    return -1


@dataclass
class Episode:
    """Per-trial arrays of one run. ``arm``/``reward`` use -1 for no-play trials."""

    config: AgentConfig
    env: BanditEnv
    seed: int
    arm: np.ndarray
    reward: np.ndarray
    p_a_pre: np.ndarray
    q_a: np.ndarray
    g_hat: np.ndarray
    mu: np.ndarray
    phi: np.ndarray
    cum_regret: np.ndarray

    def __len__(self):
        return len(self.arm)

    def records(self) -> list[TrialRecord]:
        out = []
        for t in range(len(self)):
            arm = None if self.arm[t] < 0 else Arm(int(self.arm[t]))
            reward = None if self.reward[t] < 0 else int(self.reward[t])
            out.append(TrialRecord(t, arm, reward, float(self.p_a_pre[t]), float(self.g_hat[t]),
                                   float(self.mu[t]), float(self.phi[t]), float(self.cum_regret[t])))
        return out

    def summary(self, window: int = 1000) -> dict:
        return summarize(self.arm, self.reward, self.g_hat, self.mu, self.cum_regret, window)


def summarize(arm, reward, g_hat, mu, cum_regret, window: int = 1000) -> dict:
    n = len(arm)
    window = max(1, min(window, n))
    tail = arm[n - window:]
    return {
        "trials": n,
        "freq_a": float(np.mean(arm == 0)),
        "freq_b": float(np.mean(arm == 1)),
        "freq_none": float(np.mean(arm < 0)),
        "terminal_window": window,
        "terminal_freq_a": float(np.mean(tail == 0)),
        "total_reward": int(np.sum(reward == 1)),
        "cum_regret": float(cum_regret[-1]),
        "final_g_hat": float(g_hat[-1]),
        "final_mu": float(mu[-1]),
    }


def run_episode(config: AgentConfig, env: BanditEnv, trials: int, seed: int, psi0=None) -> Episode:
    """Whole episode through the compiled kernel. Deterministic in (config, env, seed)."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    u_dec, u_rew = episode_draws(seed, trials)
    st = initial_state(config, psi0)
    psi = st.current_psi().astype(np.complex128)
    alpha0 = st.alpha if st.is_device else 0.0
    mu0 = st.mu if st.is_device else 0.0
    arms = np.empty(trials, dtype=np.int64)
    rewards = np.empty(trials, dtype=np.int64)
    buf = {k: np.empty(trials) for k in ("p_a_pre", "q_a", "g_hat", "mu", "phi", "cum_regret")}
    bad = qtow_kernel(MODE_CODE[config.mode], POLICY_CODE[config.perp_policy],
                      ESTIMATOR_CODE[config.estimator], float(config.theta), float(config.eta),
                      float(config.epsilon), float(config.eta_mu), float(config.kappa),
                      float(alpha0), float(mu0), float(st.g_hat), psi, env.p_a, env.p_b,
                      u_dec, u_rew, arms, rewards, buf["p_a_pre"], buf["q_a"], buf["g_hat"],
                      buf["mu"], buf["phi"], buf["cum_regret"])
    if bad >= 0:
        raise ForcedPerpError(int(bad))
    return Episode(config, env, seed, arms, rewards, buf["p_a_pre"], buf["q_a"], buf["g_hat"],
                   buf["mu"], buf["phi"], buf["cum_regret"])
