"""Pure-numpy reference implementations of the hot kernels.

These define the semantics; the numba backend mirrors them loop for loop.
"""

import numpy as np

KINETICS_EPS = 1e-3
ABORT_ABS_V = 500.0


def integrate_layered(v0, s0, pre, post, g_signed, thr, slope, tau_syn, e_rev,
                      g_leak, e_leak, cap, i_stim, clamp_mask, clamp_value,
                      dt, nsteps):
    """Forward-Euler integration of a graded-synapse network.

    Per step: each synapse relaxes toward the rectified drive
    s_inf = max(0, tanh((v_pre - thr)/slope)) with rate
    1/(tau * max(1 - s_inf, eps)); synaptic currents g_signed * s *
    (v_post - e_rev) and leak/stimulus drive the voltage update; clamped
    cells are pinned after the update.  Rectification keeps s in [0, 1), so
    conductance-signed synapses stay dissipative.  Returns (traces with
    shape (nsteps, ncells), ok) where ok=False flags a blow-up (|v| > 500).
    """
    v = v0.copy()
    s = s0.copy()
    v[clamp_mask] = clamp_value[clamp_mask]
    traces = np.empty((nsteps, v.size))
    for t in range(nsteps):
        s_inf = np.maximum(np.tanh((v[pre] - thr) / slope), 0.0)
        den = np.maximum(1.0 - s_inf, KINETICS_EPS)
        # relaxation coefficient capped at 1: the effective time constant
        # tau*den can drop below dt near saturation and plain Euler would
        # overshoot explosively
        alpha = np.minimum(dt / (tau_syn * den), 1.0)
        s = s + alpha * (s_inf - s)
        i_syn = np.zeros(v.size)
        np.add.at(i_syn, post, g_signed * s * (v[post] - e_rev))
        v = v + dt * (-g_leak * (v - e_leak) + i_stim + i_syn) / cap
        v[clamp_mask] = clamp_value[clamp_mask]
        traces[t] = v
        if np.any(np.abs(v) > ABORT_ABS_V):
            return traces[: t + 1], False
    return traces, True


def mmd_perm_stats(K, nx, perms):
    """Squared-MMD V-statistics for each row of a permutation index matrix.

    K is the pooled Gram matrix; the first nx entries of each permuted index
    vector form sample X, the rest sample Y.  Vectorized as one GEMM over the
    0/1 membership matrix.
    """
    n = K.shape[0]
    ny = n - nx
    B = perms.shape[0]
    Z = np.zeros((n, B))
    for b in range(B):
        Z[perms[b, :nx], b] = 1.0
    K1 = K.sum(axis=1)
    total = K1.sum()
    M = K @ Z
    sxx = np.einsum("nb,nb->b", Z, M)
    zk1 = Z.T @ K1
    sxy = zk1 - sxx
    syy = total - 2.0 * zk1 + sxx
    return sxx / nx**2 - 2.0 * sxy / (nx * ny) + syy / ny**2
