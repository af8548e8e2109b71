"""Experiment configuration and batch execution.

Precedence, lowest first: built-in defaults, ``QTOW_SEED`` from the
environment, the config file, command-line flags.

Per-run seeds are ``derive_seed(seed, run_index)`` (see :mod:`qtow.rng`),
so a run's output does not depend on how runs are spread over workers.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from . import contextuality as ctx
from . import quantum_core as qc
from ._accel import backend
from .bandit_env import BanditEnv
from .classical_tow import run_classical_episode
from .emit import csv_text, json_text, sidecar_path, write_text
from .qtow_agent import AgentConfig, asymmetry_w, episode_draws, run_episode, summarize
from .rng import MASK64, derive_seed

EXPERIMENTS = ("kcbs", "lemma-a1", "bandit", "estimator", "compare")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


# key -> (parser, default). Keys mirror the CLI flag names.
def _int(lo, hi=None):
    def parse(key, raw):
        try:
            v = int(str(raw), 0)
        except ValueError:
            raise ConfigError(key, f"expected an integer, got {raw!r}") from None
        if v < lo or (hi is not None and v > hi):
            rng = f"[{lo}, {hi}]" if hi is not None else f">= {lo}"
            raise ConfigError(key, f"value {v} out of range {rng}")
        return v
    return parse


def _float(lo=-math.inf, hi=math.inf, open_lo=False, open_hi=False):
    def parse(key, raw):
        try:
            v = float(raw)
        except ValueError:
            raise ConfigError(key, f"expected a number, got {raw!r}") from None
        bad = (not math.isfinite(v) or (v <= lo if open_lo else v < lo)
               or (v >= hi if open_hi else v > hi))
        if bad:
            rng = ("(" if open_lo else "[") + f"{lo}, {hi}" + (")" if open_hi else "]")
            raise ConfigError(key, f"value {raw} out of range {rng}")
        return v
    return parse


def _choice(*options):
    def parse(key, raw):
        if raw not in options:
            raise ConfigError(key, f"{raw!r} not one of {', '.join(options)}")
        return raw
    return parse


def _bool(key, raw):
    if isinstance(raw, bool):
        return raw
    s = str(raw).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected true/false, got {raw!r}")


def _path(key, raw):
    return None if raw in (None, "", "-") else str(raw)


def parse_beta_grid(key, raw) -> tuple:
    parts = str(raw).split(":")
    if len(parts) != 3:
        raise ConfigError(key, f"expected start:stop:step, got {raw!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(key, f"expected start:stop:step numbers, got {raw!r}") from None
    if step <= 0 or stop < start:
        raise ConfigError(key, "need step > 0 and stop >= start")
    grid = (start, stop, step)
    b = beta_values(grid)
    if b[0] < 0 or b[-1] > math.pi / 2 + 1e-6:
        raise ConfigError(key, "beta values must lie in [0, pi/2]")
    return grid


def parse_state(key, raw):
    s = str(raw).strip()
    if s.startswith("custom"):
        s = s[len("custom"):].lstrip(" :=")
    if s in ("perp", "z", "A", "B", "mixed"):
        return s
    try:
        amps = [complex(x.replace(" ", "")) for x in s.split(",")]
    except ValueError:
        raise ConfigError(key, f"expected perp|z|A|B|mixed|custom a,b,c, got {raw!r}") from None
    if len(amps) != 3:
        raise ConfigError(key, f"custom state needs 3 amplitudes, got {len(amps)}")
    if not math.isclose(sum(abs(a) ** 2 for a in amps), 1.0, abs_tol=1e-9):
        raise ConfigError(key, "custom state must be normalized")
    return ",".join(_amp_str(a) for a in amps)


def _amp_str(a: complex) -> str:
    return repr(a.real) if a.imag == 0 else repr(a).strip("()")


SCHEMA = {
    "seed": (_int(0, MASK64), 42),
    "out": (_path, None),
    "format": (_choice("csv", "json"), None),
    "runs": (_int(1), 100),
    "trials": (_int(1), 20000),
    "workers": (_int(1), 1),
    "window": (_int(1), 1000),
    "summary-only": (_bool, False),
    "pa": (_float(0.0, 1.0), 0.8),
    "pb": (_float(0.0, 1.0), 0.2),
    "theta": (_float(), 0.1),
    "eta": (_float(0.0, 1.0, True, True), 0.05),
    "epsilon": (_float(0.0, 1.0, True, True), 0.01),
    "eta-mu": (_float(0.0, 1.0, True, True), 0.05),
    "kappa": (_float(), 0.05),
    "alpha0": (_float(), math.pi / 4),
    "mu0": (_float(0.0, 1.0), 0.5),
    "mode": (_choice("device", "state"), "device"),
    "perp-policy": (_choice("postselect", "strict"), "postselect"),
    "estimator": (_choice("known", "classical", "memory"), "classical"),
    "g": (_float(0.0, 2.0), 1.0),
    "sigma": (_float(0.0), 1.0),
    "beta-grid": (parse_beta_grid, (0.0, math.pi / 2, math.pi / 32)),
    "state": (parse_state, "perp"),
    "samples": (_int(1), 100_000),
}

_BANDIT_KEYS = ("seed", "format", "runs", "trials", "window", "summary-only", "pa", "pb", "theta",
                "eta", "epsilon", "eta-mu", "kappa", "alpha0", "mu0", "mode", "perp-policy",
                "estimator", "g")
ECHO_KEYS = {
    "kcbs": ("seed", "format", "state", "samples"),
    "lemma-a1": ("seed", "format", "beta-grid", "state", "samples"),
    "bandit": _BANDIT_KEYS,
    "estimator": _BANDIT_KEYS,
    "compare": _BANDIT_KEYS + ("sigma",),
}

# per-experiment default overrides
EXPERIMENT_DEFAULTS = {
    "estimator": {"theta": 0.0, "trials": 10000, "window": 2000},
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    values: dict = field(repr=False)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def fmt(self) -> str:
        fmt = self.values["format"]
        if fmt is None:
            out = self.values["out"]
            fmt = "csv" if out and out.endswith(".csv") else "json"
        return fmt

    @property
    def env(self) -> BanditEnv:
        return BanditEnv(self.values["pa"], self.values["pb"])

    @property
    def agent(self) -> AgentConfig:
        v = self.values
        return AgentConfig(theta=v["theta"], mode=v["mode"], perp_policy=v["perp-policy"],
                           estimator=v["estimator"], g=v["g"], eta=v["eta"], epsilon=v["epsilon"],
                           eta_mu=v["eta-mu"], kappa=v["kappa"], initial_alpha=v["alpha0"],
                           initial_mu=v["mu0"])

    def echo(self, full: bool = False) -> dict:
        """Keys that determine the results; ``full`` adds everything (out, workers, ...)."""
        out = {"experiment": self.experiment}
        keys = tuple(self.values) if full else ECHO_KEYS[self.experiment]
        for k in keys:
            v = self.fmt if k == "format" else self.values[k]
            out[k] = list(v) if isinstance(v, tuple) else v
        return out


def normalize_key(key: str) -> str:
    return key.strip().replace("_", "-")


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror or exc}") from None
    out = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("config", f"{path}:{n}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[normalize_key(k)] = v.strip()
    return out


def parse_config(experiment: str, flags: Optional[dict] = None, config_file=None,
                 environ=None) -> ExperimentConfig:
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"{experiment!r} not one of {', '.join(EXPERIMENTS)}")
    environ = os.environ if environ is None else environ
    raw = {k: d for k, (_, d) in SCHEMA.items()}
    raw.update(EXPERIMENT_DEFAULTS.get(experiment, {}))
    layers = []
    if environ.get("QTOW_SEED"):
        layers.append({"seed": environ["QTOW_SEED"]})
    if config_file is not None:
        layers.append(read_config_file(config_file))
    layers.append({normalize_key(k): v for k, v in (flags or {}).items() if v is not None})
    parsed = dict(raw)
    for layer in layers:
        for k, v in layer.items():
            if k not in SCHEMA:
                raise ConfigError(k, "unknown key")
            parsed[k] = SCHEMA[k][0](k, v)
    return ExperimentConfig(experiment, parsed)


def run_seed(seed: int, run_index: int) -> int:
    return derive_seed(seed, run_index)


def resolve_state(name: str):
    if name in ("perp", "z"):
        return qc.KET_PERP.copy()
    if name == "A":
        return qc.KET_A.copy()
    if name == "B":
        return qc.KET_B.copy()
    if name == "mixed":
        return qc.maximally_mixed()
    return qc.state([complex(x) for x in name.split(",")], normalize=True)


# -- per-run workers (module level so they pickle) ---------------------------

def _bandit_run(args):
    cfg, run_index = args
    ep = run_episode(cfg.agent, cfg.env, cfg["trials"], run_seed(cfg.seed, run_index))
    q = ep.q_a if cfg.agent.perp_policy == "postselect" else ep.p_a_pre
    return {"arm": ep.arm, "reward": ep.reward, "p_a_pre": ep.p_a_pre, "g_hat": ep.g_hat,
            "mu": ep.mu, "phi": ep.phi, "cum_regret": ep.cum_regret, "q_a": q}


def _compare_run(args):
    cfg, run_index = args
    seed = run_seed(cfg.seed, run_index)
    env, trials = cfg.env, cfg["trials"]
    best = max(env.p_a, env.p_b)
    out = {}
    ep = run_episode(cfg.agent, env, trials, seed)
    out["qtow"] = (ep.arm, ep.reward, ep.cum_regret)
    w = asymmetry_w(cfg["g"], cfg["epsilon"]) if cfg["estimator"] == "known" else None
    cl = run_classical_episode(env, trials, seed, sigma=cfg["sigma"], w=w, eta=cfg["eta"],
                               epsilon=cfg["epsilon"])
    probs = np.where(cl["arm"] == 0, env.p_a, env.p_b)
    out["classical"] = (cl["arm"], cl["reward"], np.cumsum(best - probs))
    u_dec, u_rew = episode_draws(seed, trials)
    arm = (u_dec >= 0.5).astype(np.int64)
    probs = np.where(arm == 0, env.p_a, env.p_b)
    out["random"] = (arm, (u_rew < probs).astype(np.int64), np.cumsum(best - probs))
    return out


def _map_runs(func, cfg: ExperimentConfig):
    jobs = [(cfg, i) for i in range(cfg["runs"])]
    if cfg["workers"] == 1 or cfg["runs"] == 1:
        return [func(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=cfg["workers"]) as pool:
        return list(pool.map(func, jobs, chunksize=max(1, len(jobs) // (4 * cfg["workers"]))))


def _stats(values) -> dict:
    a = np.asarray(values, dtype=np.float64)
    sd = float(a.std(ddof=1)) if a.size > 1 else 0.0
    return {"mean": float(a.mean()), "std": sd, "sem": sd / math.sqrt(a.size) if a.size else 0.0}


def z_vs_random(stats: dict, runs: int, window: int) -> float:
    """z of the mean terminal frequency of A against a fair coin.

    sigma is the larger of the cross-run standard error and the binomial
    sigma of runs * window fair-coin choices.
    """
    sigma = max(stats["sem"], math.sqrt(0.25 / (runs * window)))
    return (stats["mean"] - 0.5) / sigma


# -- experiments --------------------------------------------------------------

BANDIT_HEADER = ("run_id", "t", "arm", "reward", "p_a_pre", "g_hat", "mu", "phi_t", "cum_regret")
ESTIMATOR_HEADER = ("run_id", "t", "reward", "g_hat", "mu", "p_bar")
COMPARE_HEADER = ("run_id", "agent", "freq_a", "terminal_freq_a", "total_reward", "cum_regret")
KCBS_HEADER = ("i", "vx", "vy", "vz", "expectation", "sampled_left", "sampled_right", "discrepancy_z")
LEMMA_HEADER = ("beta", "p_no_probe", "p_with_probe", "p_no_probe_sampled", "p_with_probe_sampled",
                "sigma_sampled", "z_score")

_ARM = {0: "A", 1: "B", -1: None}


def _bandit_rows(results):
    for run_id, r in enumerate(results):
        arm, rew = r["arm"], r["reward"]
        for t in range(len(arm)):
            a = int(arm[t])
            yield (run_id, t, _ARM[a], None if a < 0 else int(rew[t]), r["p_a_pre"][t],
                   r["g_hat"][t], r["mu"][t], r["phi"][t], r["cum_regret"][t])


def _bandit(cfg):
    results = _map_runs(_bandit_run, cfg)
    window = cfg["window"]
    per_run = [summarize(r["arm"], r["reward"], r["g_hat"], r["mu"], r["cum_regret"], window)
               for r in results]
    summary = {"per_run": per_run, "across_runs": {
        k: _stats([p[k] for p in per_run])
        for k in ("freq_a", "terminal_freq_a", "cum_regret", "final_g_hat", "final_mu", "total_reward")}}
    summary["terminal_freq_a_z_vs_random"] = z_vs_random(summary["across_runs"]["terminal_freq_a"],
                                                         cfg["runs"], per_run[0]["terminal_window"])
    rows = None if cfg["summary-only"] else _bandit_rows(results)
    return BANDIT_HEADER, rows, summary


def _estimator(cfg):
    results = _map_runs(_bandit_run, cfg)
    env, window = cfg.env, cfg["window"]
    per_run = []
    for r in results:
        p_bar = env.p_b + r["q_a"] * (env.p_a - env.p_b)
        n = len(r["g_hat"])
        lo = n - min(window, n)
        per_run.append({"mean_g_hat_window": float(np.mean(r["g_hat"][lo:])),
                        "mean_p_bar_window": float(np.mean(p_bar[lo:])),
                        "final_g_hat": float(r["g_hat"][-1]), "final_mu": float(r["mu"][-1])})
        r["p_bar"] = p_bar
    summary = {"window": window, "per_run": per_run, "across_runs": {
        k: _stats([p[k] for p in per_run]) for k in per_run[0]}}

    def rows():
        for run_id, r in enumerate(results):
            for t in range(len(r["g_hat"])):
                rew = int(r["reward"][t])
                yield (run_id, t, None if rew < 0 else rew, r["g_hat"][t], r["mu"][t], r["p_bar"][t])
    return ESTIMATOR_HEADER, None if cfg["summary-only"] else rows(), summary


def _compare(cfg):
    results = _map_runs(_compare_run, cfg)
    window = cfg["window"]
    rows, per_agent = [], {"qtow": [], "classical": [], "random": []}
    for run_id, r in enumerate(results):
        for name in ("qtow", "classical", "random"):
            arm, rew, reg = r[name]
            n = len(arm)
            rec = {"freq_a": float(np.mean(arm == 0)),
                   "terminal_freq_a": float(np.mean(arm[n - min(window, n):] == 0)),
                   "total_reward": int(np.sum(rew == 1)), "cum_regret": float(reg[-1])}
            per_agent[name].append(rec)
            rows.append((run_id, name, rec["freq_a"], rec["terminal_freq_a"], rec["total_reward"],
                         rec["cum_regret"]))
    summary = {}
    for name, recs in per_agent.items():
        s = {k: _stats([x[k] for x in recs]) for k in recs[0]}
        s["terminal_freq_a_z_vs_random"] = z_vs_random(s["terminal_freq_a"], cfg["runs"],
                                                       min(window, cfg["trials"]))
        summary[name] = s
    return COMPARE_HEADER, rows, summary


def _kcbs(cfg):
    kset = ctx.build_kcbs()
    st = resolve_state(cfg["state"])
    res = ctx.kcbs_witness(st, kset)
    nc_max, argmax = ctx.noncontextual_max(kset)
    sampled = ctx.kcbs_sampled_contexts(st, kset, cfg["samples"], cfg.seed)
    summary = dict(res.as_dict())
    summary["noncontextual_max"] = nc_max
    summary["noncontextual_argmax"] = [list(b) for b in argmax]
    summary["vectors"] = kset.vectors.tolist()
    summary["sampled"] = {
        "n_per_context": sampled.n_per_context, "sum": sampled.sum, "sum_sigma": sampled.sum_sigma,
        "z_score": sampled.z_score, "expectations": sampled.expectations.tolist(),
        "left": sampled.left.tolist(), "right": sampled.right.tolist(),
        "discrepancy_z": sampled.discrepancy_z.tolist(), "counts": sampled.counts.tolist()}
    rows = [(i + 1, *kset.vectors[i], res.expectations[i], sampled.left[i], sampled.right[i],
             sampled.discrepancy_z[i]) for i in range(5)]
    return KCBS_HEADER, rows, summary


def beta_values(grid) -> np.ndarray:
    start, stop, step = grid
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def _lemma(cfg):
    st = resolve_state(cfg["state"])
    pure = np.ndim(st) == 1
    rows, points = [], []
    for k, beta in enumerate(beta_values(cfg["beta-grid"])):
        beta = float(beta)
        an = ctx.lemma_a1_analytic(st, beta)
        if pure:
            sm = ctx.lemma_a1_sampled(st, beta, cfg["samples"], derive_seed(cfg.seed, k))
            sig = math.sqrt(max(an.p_with_probe * (1 - an.p_with_probe), 0.0) / cfg["samples"])
            z = (sm.p_with_probe - an.p_with_probe) / sig if sig > 0 else (
                0.0 if sm.p_with_probe == an.p_with_probe else math.inf)
            row = (beta, an.p_no_probe, an.p_with_probe, sm.p_no_probe, sm.p_with_probe, sig, z)
        else:
            row = (beta, an.p_no_probe, an.p_with_probe, None, None, None, None)
        rows.append(row)
        points.append(dict(zip(LEMMA_HEADER, row)))
    peak = max(points, key=lambda p: p["p_with_probe"])
    return LEMMA_HEADER, rows, {"points": points, "peak_beta": peak["beta"]}


DISPATCH = {"kcbs": _kcbs, "lemma-a1": _lemma, "bandit": _bandit, "estimator": _estimator,
            "compare": _compare}


@dataclass
class RunSummary:
    config: dict
    summary: dict
    wall_clock: float
    paths: list

    def metadata(self) -> dict:
        return {"tool": "qtow", "version": __version__, "seed": self.config["seed"],
                "config": self.config, "summary": self.summary, "wall_clock_s": self.wall_clock}


def render(cfg: ExperimentConfig, header, rows, summary) -> str:
    if cfg.fmt == "csv":
        return csv_text(header, rows if rows is not None else ())
    doc = {"config": cfg.echo(), "version": __version__, "summary": summary}
    if rows is not None:
        doc["columns"] = list(header)
        doc["rows"] = [list(r) for r in rows]
    return json_text(doc)


def run_experiment(cfg: ExperimentConfig, stdout=None) -> RunSummary:
    """Run, write the main output (and a ``.meta.json`` sidecar when writing to a file)."""
    t0 = time.perf_counter()
    header, rows, summary = DISPATCH[cfg.experiment](cfg)
    text = render(cfg, header, rows, summary)
    wall = time.perf_counter() - t0
    rs = RunSummary(cfg.echo(full=True), summary, wall, [])
    out = cfg["out"]
    if out is None:
        if stdout is not None:
            stdout.write(text)
        return rs
    write_text(out, text)
    meta = rs.metadata()
    meta["backend"] = backend()
    write_text(sidecar_path(out), json_text(meta))
    rs.paths = [out, sidecar_path(out)]
    return rs
