"""The numba kernels and their plain-Python fallback must agree."""
import json
import os
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from qtow import _accel

SCRIPT = textwrap.dedent("""
    import json, sys
    from qtow import _accel
    from qtow.bandit_env import BanditEnv
    from qtow.classical_tow import run_classical_episode
    from qtow.qtow_agent import AgentConfig, run_episode

    env = BanditEnv(0.8, 0.2)
    out = {"backend": _accel.backend(), "runs": []}
    for mode in ("device", "state"):
        for policy in ("postselect", "strict"):
            for est in ("known", "classical", "memory"):
                cfg = AgentConfig(mode=mode, perp_policy=policy, estimator=est, initial_mu=0.4)
                ep = run_episode(cfg, env, 400, 11)
                out["runs"].append({k: getattr(ep, k).tolist() for k in
                                    ("arm", "reward", "p_a_pre", "g_hat", "mu", "phi", "cum_regret")})
    c = run_classical_episode(env, 400, 11)
    out["classical"] = {k: v.tolist() for k, v in c.items()}
    json.dump(out, sys.stdout)
""")


def _run(disable):
    env = dict(os.environ, QTOW_DISABLE_NUMBA="1" if disable else "0")
    r = subprocess.run([sys.executable, "-c", SCRIPT], capture_output=True, text=True, env=env,
                       check=True)
    return json.loads(r.stdout)


def _same(a, b):
    for k in a:
        x, y = np.asarray(a[k]), np.asarray(b[k])
        if x.dtype.kind in "iu":
            assert np.array_equal(x, y), k
        else:
            np.testing.assert_allclose(x, y, rtol=0, atol=1e-12, err_msg=k)


def test_flag_selects_python():
    assert _run(True)["backend"] == "python"


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")
def test_numba_matches_fallback():
    fast, slow = _run(False), _run(True)
    assert fast["backend"] == "numba"
    assert len(fast["runs"]) == 12
    for a, b in zip(fast["runs"], slow["runs"]):
        _same(a, b)
    _same(fast["classical"], slow["classical"])
