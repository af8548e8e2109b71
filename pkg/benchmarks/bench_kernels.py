"""Time the episode kernels with numba and with the plain-Python fallback.

    python3 benchmarks/bench_kernels.py [--trials N] [--repeat R]

Each backend runs in its own interpreter because the switch is read at import.
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = """
import json, sys, time
from qtow import _accel
from qtow.bandit_env import BanditEnv
from qtow.classical_tow import run_classical_episode
from qtow.qtow_agent import AgentConfig, run_episode

trials, repeat = int(sys.argv[1]), int(sys.argv[2])
env = BanditEnv(0.8, 0.2)
cases = {
    "qtow_device": lambda s: run_episode(AgentConfig(), env, trials, s),
    "qtow_memory": lambda s: run_episode(AgentConfig(estimator="memory"), env, trials, s),
    "qtow_state": lambda s: run_episode(AgentConfig(mode="state"), env, trials, s),
    "classical": lambda s: run_classical_episode(env, trials, s),
}
out = {"backend": _accel.backend(), "trials": trials, "best_s": {}}
for name, fn in cases.items():
    fn(0)  # compile / warm up
    best = float("inf")
    for r in range(repeat):
        t0 = time.perf_counter()
        fn(r + 1)
        best = min(best, time.perf_counter() - t0)
    out["best_s"][name] = best
print(json.dumps(out))
"""


def measure(disable: bool, trials: int, repeat: int) -> dict:
    env = dict(os.environ, QTOW_DISABLE_NUMBA="1" if disable else "0")
    r = subprocess.run([sys.executable, "-c", WORKER, str(trials), str(repeat)],
                       capture_output=True, text=True, env=env, check=True)
    return json.loads(r.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    fast = measure(False, args.trials, args.repeat)
    slow = measure(True, args.trials, args.repeat)
    print(f"{args.trials} trials per episode, best of {args.repeat}")
    print(f"{'kernel':<14}{fast['backend']:>12}{slow['backend']:>12}{'speedup':>10}")
    for name, t_fast in fast["best_s"].items():
        t_slow = slow["best_s"][name]
        print(f"{name:<14}{t_fast * 1e3:>10.2f}ms{t_slow * 1e3:>10.2f}ms{t_slow / t_fast:>9.1f}x")


if __name__ == "__main__":
    main()
