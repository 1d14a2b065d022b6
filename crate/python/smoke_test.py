"""Smoke test for the skewlab Python extension.

Build and install first:  pip install -e crates/py --no-build-isolation
"""

import math

import skewlab


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    s = skewlab.FiberMap("standard", r=100.0)
    y = s.eval([1.0, 2.0])
    assert close(y[0], (2.0 * 1.0 - 2.0 + 100.0 * math.sin(1.0)) % (2 * math.pi), 1e-12), y
    assert close(y[1], 1.0, 1e-15)
    back = s.inverse(y)
    assert close(back[0], 1.0, 1e-9) and close(back[1], 2.0, 1e-9), back

    j = s.jacobian([1.0, 2.0])
    det = j[0][0] * j[1][1] - j[0][1] * j[1][0]
    assert close(det, 1.0, 1e-12), det

    bands = skewlab.critical_region(s)
    length = sum(hi - lo for lo, hi in bands)
    assert close(length, 0.40067, 1e-5), length

    f = skewlab.SkewProduct(s, [[2, 1], [1, 1]], 4, 2)
    m = [0.1, 0.2, 0.3, 0.4]
    back = f.inverse(f.eval(m))
    assert all(close(a, b, 1e-8) for a, b in zip(back, m)), back

    parry = skewlab.parry_measure([[1, 1], [1, 0]])
    assert close(parry["lambda"], (1 + 5 ** 0.5) / 2, 1e-12), parry

    rep = skewlab.lyapunov(skewlab.FiberMap("standard", r=50.0), n=50_000, seeds=[0, 1])
    lam = rep["exponents"]
    assert lam[0] > 0.6 * math.log(50.0), lam
    assert abs(sum(lam)) < 1e-2, lam

    h = skewlab.hypothesis_report(skewlab.FiberMap("standard", r=1e4), grid_n=512)
    assert h["s1"]["pass"], h["s1"]

    cfg = skewlab.preset_config("shift")
    out = skewlab.run_config(cfg.replace("n = 1000000", "n = 20000"))
    assert out["pass"], out["checks"]

    print("smoke test passed")


if __name__ == "__main__":
    main()
