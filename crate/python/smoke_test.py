"""Smoke test for the sscontrol extension.

Build and run from the workspace root:

    cargo build --release -p ssc-py
    cp target/release/libsscontrol.so python/sscontrol.so
    python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import sscontrol  # noqa: E402


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    m = sscontrol.Model(0.5, 0.4)
    assert close(m.c_o, 0.4, 1e-15), m.c_o
    assert close(m.c_hat, 0.7, 1e-15), m.c_hat
    assert close(m.gamma_o, -1.0, 1e-15), m.gamma_o

    hi = m.boundary(0.9)
    assert hi["regime"] == "ConstantLower"
    assert hi["gamma_hat"] == -1.0 and math.isinf(hi["beta_hat"])
    lo = m.boundary(0.2)
    assert lo["regime"] == "SingleUpper" and lo["gamma_hat"] == -math.inf

    rows = m.boundaries([0.45, 0.5, 0.55, 0.6, 0.65])
    gammas = [r["gamma_hat"] for r in rows]
    betas = [r["beta_hat"] for r in rows]
    assert all(r["regime"] == "TwoSided" for r in rows)
    assert gammas == sorted(gammas) and betas == sorted(betas, reverse=True)

    v = m.value(0.0, 0.7)
    assert close(v["W"], -0.09 / math.e, 1e-12), v
    assert m.value(0.3, 1.0)["W"] == 0.0

    pde, slack = m.hjb(1.0, 0.9)
    assert abs(pde) < 1e-10 and slack > 0.0

    assert m.minorant(0.0, 0.2) == 0.0
    assert m.minorant(0.5, 0.55) <= min(m.obstacle(0.5, 0.55), 0.0)

    est = m.simulate(0.0, 0.55, n_paths=4000, dt=2e-3, seed=1)
    w = m.value(0.0, 0.55)["W"]
    assert abs(est["mean"] - w) <= 3 * est["std_error"] + est["bias_budget"], (est, w)
    again = m.simulate(0.0, 0.55, n_paths=4000, dt=2e-3, seed=1)
    assert again == est

    ok, checks = m.verify()
    failed = [c for c in checks if not c[1]]
    assert ok and not failed, failed

    for bad in (lambda: sscontrol.Model(0.5, 1.5), lambda: m.simulate(0.0, 0.5, policy="sideways")):
        try:
            bad()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")

    print(f"sscontrol smoke test ok: {len(checks)} checks, MC {est['mean']:.5f} vs W {w:.5f}")


if __name__ == "__main__":
    main()
