"""Benchmark the hot kernels: numba backend vs the pure-numpy fallback.

Runs the layered-network integrator and the MMD permutation sweep through
both implementations on identical inputs, reports wall times, and checks
that the outputs agree.  The package-level switch is the POSCM_NUMBA env
var; here both backends are imported directly so one process can time both.

    python benchmarks/bench_kernels.py [--steps 2000] [--perms 300]
"""

import argparse
import time

import numpy as np

from poscm import layered, rng, stats
from poscm.kernels import _numba, _numpy


def _time(fn, repeat=5):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_integrator(steps: int):
    inst = layered.instantiate(layered.demo_net(), seed=0)
    n = inst.n_cells
    nsyn = inst.syn_pre.size
    g_signed = np.array([layered.signed_conductance(p) for p in inst.syn_params])
    thr = np.array([p.v_thr for p in inst.syn_params])
    slope = np.array([p.v_slope for p in inst.syn_params])
    tau = np.array([p.tau_syn for p in inst.syn_params])
    e_rev = np.array([p.e_rev for p in inst.syn_params])
    g_leak = np.full(n, 0.02)
    e_leak = np.full(n, -65.0)
    cap = np.full(n, 0.2)
    i_stim = np.zeros(n)
    i_stim[:12] = 0.12
    clamp_mask = np.zeros(n, dtype=bool)
    clamp_value = np.zeros(n)
    args = (e_leak.copy(), np.zeros(nsyn), inst.syn_pre, inst.syn_post, g_signed,
            thr, slope, tau, e_rev, g_leak, e_leak, cap, i_stim,
            clamp_mask, clamp_value, 0.1, steps)

    _numba.integrate_layered(*args)  # compile outside the timed region
    t_nb, (tr_nb, ok_nb) = _time(lambda: _numba.integrate_layered(*args))
    t_np, (tr_np, ok_np) = _time(lambda: _numpy.integrate_layered(*args))
    gap = float(np.max(np.abs(tr_nb - tr_np)))
    return {"name": f"layered integrator ({n} cells, {nsyn} synapses, {steps} steps)",
            "numba_s": t_nb, "numpy_s": t_np, "max_abs_diff": gap,
            "agree": gap < 1e-9 and ok_nb and ok_np}


def bench_mmd(perms: int, n: int = 400):
    gen = rng.generator(1, rng.DOMAIN_TEST)
    x = gen.standard_normal(n)
    y = gen.standard_normal(n) + 0.3
    pooled = np.concatenate([x, y])[:, None]
    K = stats.rbf_gram(pooled, pooled, 1.0)
    perm_idx = np.stack([gen.permutation(2 * n) for _ in range(perms)])

    _numba.mmd_perm_stats(K, n, perm_idx[:2])  # compile
    t_nb, s_nb = _time(lambda: _numba.mmd_perm_stats(K, n, perm_idx))
    t_np, s_np = _time(lambda: _numpy.mmd_perm_stats(K, n, perm_idx))
    gap = float(np.max(np.abs(s_nb - s_np)))
    return {"name": f"MMD permutation sweep ({2*n} pooled, {perms} perms)",
            "numba_s": t_nb, "numpy_s": t_np, "max_abs_diff": gap,
            "agree": gap < 1e-9}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--perms", type=int, default=300)
    args = ap.parse_args()

    rows = [bench_integrator(args.steps), bench_mmd(args.perms)]
    width = max(len(r["name"]) for r in rows)
    print(f"{'kernel':<{width}}  {'numba':>9}  {'numpy':>9}  {'speedup':>7}  agree")
    for r in rows:
        speed = r["numpy_s"] / r["numba_s"]
        print(f"{r['name']:<{width}}  {r['numba_s']*1e3:8.2f}ms  "
              f"{r['numpy_s']*1e3:8.2f}ms  {speed:6.1f}x  "
              f"{r['agree']} (gap {r['max_abs_diff']:.2e})")
    if not all(r["agree"] for r in rows):
        raise SystemExit("backend outputs disagree")


if __name__ == "__main__":
    main()
