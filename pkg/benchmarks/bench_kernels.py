"""Timing and agreement comparison of the two DP/simulation backends.

Run:  python3 benchmarks/bench_kernels.py
"""

import math
import time

import numpy as np

from vlsfbc._kernels import _purepy

try:
    from vlsfbc._kernels import _core
except ImportError:
    _core = None

from vlsfbc.channel import analyze, make_bsc, replicate
from vlsfbc.simulator import _score_tables
from vlsfbc.walks import increment_law, quantize


def _t(fn, *a, **k):
    t0 = time.perf_counter()
    out = fn(*a, **k)
    return time.perf_counter() - t0, out


def main():
    backends = [("numpy", _purepy)]
    if _core is not None:
        backends.append(("cython", _core))
    else:
        print("compiled backend unavailable; timing the numpy backend only")

    ch = replicate(make_bsc(0.11), 2)
    an = analyze(ch)
    law = increment_law(an.pstar, ch.users[0], "achievability")

    # --- two-atom passage DP ------------------------------------------------
    gamma = 400.0
    T = int(1.5 * gamma / law.drift) + 16
    a_hi, a_lo = float(law.atoms[1]), float(law.atoms[0])
    p_lo, p_hi = float(law.probs[0]), float(law.probs[1])
    print(f"two_atom_stop: gamma={gamma}, T={T}")
    ref = None
    for name, mod in backends:
        dt, out = _t(mod.two_atom_stop, a_hi, a_lo, p_hi, p_lo, gamma, T, 1, -40.0)
        f = out[0]
        if ref is None:
            ref = f
        print(f"  {name:7s} {dt * 1e3:9.2f} ms   max|df| vs numpy: "
              f"{np.max(np.abs(f - ref)):.3g}")

    # --- general lattice DP -------------------------------------------------
    h = 2e-3
    lw = quantize(law, h, rounding="floor")
    gamma2 = 40.0
    m_idx = int(math.ceil(gamma2 / h))
    T2 = int(1.6 * gamma2 / law.drift) + 16
    print(f"lattice_stop: h={h}, gamma={gamma2}, T={T2}")
    ref = None
    for name, mod in backends:
        dt, out = _t(mod.lattice_stop, lw.int_atoms, lw.probs, h, m_idx, T2, 1, -40.0)
        f = out[0]
        if ref is None:
            ref = f
        print(f"  {name:7s} {dt * 1e3:9.2f} ms   max|df| vs numpy: "
              f"{np.max(np.abs(f - ref)):.3g}")

    # --- Monte Carlo kernel -------------------------------------------------
    cw_cdf, out_cdf, inc = _score_tables(ch, an.pstar)
    M, q, g3, cap, n = 64, 0.0, math.log(63000.0), 600, 20000
    print(f"simulate_trials: M={M}, gamma={g3:.3f}, {n} trials")
    ref = None
    for name, mod in backends:
        dt, out = _t(mod.simulate_trials, 7, 0, n, M, q, g3, cap,
                     cw_cdf, out_cdf, inc, False)
        err, tau, tr = out
        same = "" if ref is None else (
            "   identical to numpy" if (np.array_equal(err, ref[0])
                                        and np.array_equal(tau, ref[1])
                                        and np.array_equal(tr, ref[2]))
            else "   MISMATCH vs numpy")
        if ref is None:
            ref = out
        print(f"  {name:7s} {dt * 1e3:9.2f} ms   err={err.mean():.2e} "
              f"mean tau*={tau.mean():.3f}{same}")


if __name__ == "__main__":
    main()
