"""Event-driven exclusion kernel.

Sampling scheme: occupied sites times the four directions form a pool of
constant size (exchanges conserve the particle count), attempted at the
uniform rate cap = (T/2) e^{max dGamma}.  Each attempt draws one
(site, direction) pair and thins to the true jump rate, which keeps event
selection exact in distribution while the per-event work stays O(1).

Site and bond occupation-time integrals are accumulated lazily: a counter is
flushed whenever one of its sites flips, and once more at the horizon, so the
integrals are exact for the piecewise-constant trajectory.
"""

import numpy as np
from numba import njit, uint64, float64


@njit(inline="always")
def _rotl(x, k):
    return uint64((x << k) | (x >> (uint64(64) - k)))


@njit(inline="always")
def _next(s):
    res = uint64(_rotl(uint64(s[0] + s[3]), uint64(23)) + s[0])
    t = uint64(s[1] << uint64(17))
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], uint64(45))
    return res


@njit(inline="always")
def _u01(s):
    return float64(_next(s) >> uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, fastmath=True)
def run_kernel(eta, nbr, site_bonds, bond_u, bond_v, acc, tilted, cap, horizon,
               track_bonds, occ_time, last_site, disag_time, signed_time, last_bond,
               state_time, track_states, rstate):
    """Advance the exclusion process to the horizon; all accumulators in-place.

    Returns (event_count, attempt_count).
    """
    S = eta.shape[0]
    B = bond_u.shape[0]

    occ_list = np.empty(S, np.int32)
    n_occ = 0
    for i in range(S):
        if eta[i] == 1:
            occ_list[n_occ] = i
            n_occ += 1

    mask = uint64(0)
    if track_states:
        for i in range(S):
            if eta[i] == 1:
                mask |= uint64(1) << uint64(i)

    t = 0.0
    t_state = 0.0
    events = 0
    attempts = 0

    if 0 < n_occ < S:
        lam = 4.0 * cap * n_occ
        while True:
            dt = -np.log(1.0 - _u01(rstate)) / lam
            if t + dt >= horizon:
                t = horizon
                break
            t += dt
            attempts += 1
            k = int(_u01(rstate) * n_occ)
            if k >= n_occ:
                k = n_occ - 1
            w = occ_list[k]
            q = int(_u01(rstate) * 4.0)
            if q >= 4:
                q = 3
            n = nbr[w, q]
            if n < 0 or eta[n] == 1:
                continue
            if tilted and _u01(rstate) >= acc[w, q]:
                continue

            # jump w -> n at time t
            occ_time[w] += t - last_site[w]
            last_site[w] = t
            last_site[n] = t
            if track_bonds:
                for s0 in (w, n):
                    for j in range(4):
                        bb = site_bonds[s0, j]
                        if bb < 0:
                            continue
                        ev = eta[bond_v[bb]]
                        eu = eta[bond_u[bb]]
                        if ev != eu:
                            dtb = t - last_bond[bb]
                            disag_time[bb] += dtb
                            if ev == 1:
                                signed_time[bb] += dtb
                            else:
                                signed_time[bb] -= dtb
                        last_bond[bb] = t
            if track_states:
                state_time[mask] += t - t_state
                t_state = t
                mask ^= (uint64(1) << uint64(w)) | (uint64(1) << uint64(n))
            eta[w] = 0
            eta[n] = 1
            occ_list[k] = n
            events += 1
    else:
        t = horizon

    for i in range(S):
        if eta[i] == 1:
            occ_time[i] += t - last_site[i]
        last_site[i] = t
    if track_bonds:
        for bb in range(B):
            ev = eta[bond_v[bb]]
            eu = eta[bond_u[bb]]
            if ev != eu:
                dtb = t - last_bond[bb]
                disag_time[bb] += dtb
                if ev == 1:
                    signed_time[bb] += dtb
                else:
                    signed_time[bb] -= dtb
            last_bond[bb] = t
    if track_states:
        state_time[mask] += t - t_state

    return events, attempts
