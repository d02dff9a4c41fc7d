"""Numba-jitted kernels; mirrors the numpy semantics loop for loop."""

import numpy as np
from numba import njit

KINETICS_EPS = 1e-3
ABORT_ABS_V = 500.0


@njit(cache=True, nogil=True)
def _integrate(v, s, pre, post, g_signed, thr, slope, tau_syn, e_rev,
               g_leak, e_leak, cap, i_stim, clamp_mask, clamp_value,
               dt, nsteps, traces):
    ncells = v.size
    nsyn = pre.size
    for i in range(ncells):
        if clamp_mask[i]:
            v[i] = clamp_value[i]
    for t in range(nsteps):
        i_syn = np.zeros(ncells)
        for k in range(nsyn):
            s_inf = np.tanh((v[pre[k]] - thr[k]) / slope[k])
            if s_inf < 0.0:
                s_inf = 0.0
            den = 1.0 - s_inf
            if den < KINETICS_EPS:
                den = KINETICS_EPS
            alpha = dt / (tau_syn[k] * den)
            if alpha > 1.0:
                alpha = 1.0
            s[k] = s[k] + alpha * (s_inf - s[k])
            i_syn[post[k]] += g_signed[k] * s[k] * (v[post[k]] - e_rev[k])
        blown = False
        for i in range(ncells):
            v[i] = v[i] + dt * (-g_leak[i] * (v[i] - e_leak[i]) + i_stim[i] + i_syn[i]) / cap[i]
            if clamp_mask[i]:
                v[i] = clamp_value[i]
            traces[t, i] = v[i]
            if abs(v[i]) > ABORT_ABS_V:
                blown = True
        if blown:
            return t + 1
    return nsteps


def integrate_layered(v0, s0, pre, post, g_signed, thr, slope, tau_syn, e_rev,
                      g_leak, e_leak, cap, i_stim, clamp_mask, clamp_value,
                      dt, nsteps):
    traces = np.empty((nsteps, v0.size))
    done = _integrate(v0.copy(), s0.copy(), pre, post, g_signed, thr, slope,
                      tau_syn, e_rev, g_leak, e_leak, cap, i_stim,
                      clamp_mask, clamp_value, dt, nsteps, traces)
    return traces[:done], done == nsteps


@njit(cache=True, nogil=True)
def _mmd_perm(K, nx, perms, out):
    n = K.shape[0]
    ny = n - nx
    for b in range(perms.shape[0]):
        sxx = 0.0
        sxy = 0.0
        syy = 0.0
        for a in range(n):
            ia = perms[b, a]
            for c in range(n):
                ic = perms[b, c]
                k = K[ia, ic]
                if a < nx and c < nx:
                    sxx += k
                elif a >= nx and c >= nx:
                    syy += k
                else:
                    sxy += k
        out[b] = sxx / nx**2 - sxy / (nx * ny) + syy / ny**2


def mmd_perm_stats(K, nx, perms):
    out = np.empty(perms.shape[0])
    _mmd_perm(np.ascontiguousarray(K), nx, np.ascontiguousarray(perms), out)
    return out
