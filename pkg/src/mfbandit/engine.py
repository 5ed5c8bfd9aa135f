"""Compiled episode loop.

One numba kernel advances a whole episode: select, sample, update, account.
It is an exact (to floating-point reassociation) counterpart of the
reference loop built from the policies module, and the simulator tests pin
the two against each other trace for trace.

Speed notes: bounds are evaluated as mean_pz[k, m] + c_t * isc[k, m], where
mean_pz caches sums/counts + zeta and isc caches 1/sqrt(counts); both are
updated only for the cell just played, and c_t = sqrt(c_psi * rho * log t)
is one sqrt per round. Rewards consume one pre-drawn variate per play
(standard normal for Gaussian instances, uniform for Bernoulli), so the
kernel never touches an RNG and episodes stay deterministic under any
thread schedule. The kernel holds no GIL and shares no state.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["episode_kernel", "warmup"]

STATUS_OK = 0
STATUS_VARIATES_EXHAUSTED = 1


@njit(cache=True, nogil=True)
def episode_kernel(
    mu,  # (K, M) arm means
    mu_top,  # (K,) target means, mu[:, M-1] contiguous
    zetas,  # (M,) bias allowances
    costs,  # (M,) play costs
    gammas,  # (M-1,) switch thresholds
    c_psi,  # psi(eps) = eps^2 / c_psi
    rho,
    capital,
    checkpoints,  # (J,) ascending, each <= capital
    variates,  # (nmax,) pre-drawn variates, one per potential play
    is_bernoulli,  # reward transform selector
    sigma,  # Gaussian observation scale (ignored for Bernoulli)
    mf_policy,  # True: multi-fidelity rule; False: top-fidelity baseline
    counts,  # (K, M) int64 out, zero-initialized
    sums,  # (K, M) float64 out, zero-initialized
    mean_pz,  # (K, M) float64 scratch, zero-initialized
    isc,  # (K, M) float64 scratch, zero-initialized
    ck_spent,  # (J,) float64 out: capital spent within checkpoint j
    ck_q,  # (J,) float64 out: sum of cost * target-mean within checkpoint j
    ck_n,  # (J,) int64 out: plays within checkpoint j
    record,  # whether to log the play sequence
    plays_arm,  # (nmax,) int32 out when record
    plays_fid,  # (nmax,) int32 out when record
    plays_reward,  # (nmax,) float64 out when record
):
    """Run one episode; returns (status, spent, cum_q, N)."""
    K, M = counts.shape
    J = checkpoints.shape[0]
    nmax = variates.shape[0]
    top = M - 1
    t = 1
    spent = 0.0
    cum_q = 0.0
    j = 0
    while True:
        logt = np.log(np.float64(t))
        c_t = np.sqrt(c_psi * rho * logt)
        best_k = 0
        best_v = -np.inf
        if mf_policy:
            for k in range(K):
                b = np.inf
                for m in range(M):
                    if counts[k, m] > 0:
                        v = mean_pz[k, m] + c_t * isc[k, m]
                        if v < b:
                            b = v
                if b > best_v:
                    best_v = b
                    best_k = k
            fid = top
            for m in range(top):
                if counts[best_k, m] == 0 or c_t * isc[best_k, m] >= gammas[m]:
                    fid = m
                    break
        else:
            for k in range(K):
                if counts[k, top] > 0:
                    b = mean_pz[k, top] + c_t * isc[k, top]
                else:
                    b = np.inf
                if b > best_v:
                    best_v = b
                    best_k = k
            fid = top
        cost = costs[fid]
        # Checkpoints whose budget the pending play would overshoot close at
        # the current prefix, whether or not the play itself executes.
        while j < J and spent + cost > checkpoints[j]:
            ck_spent[j] = spent
            ck_q[j] = cum_q
            ck_n[j] = t - 1
            j += 1
        if spent + cost > capital:
            break
        if t > nmax:
            return STATUS_VARIATES_EXHAUSTED, spent, cum_q, t - 1
        u = variates[t - 1]
        if is_bernoulli:
            reward = 1.0 if u < mu[best_k, fid] else 0.0
        else:
            reward = mu[best_k, fid] + sigma * u
        counts[best_k, fid] += 1
        s = counts[best_k, fid]
        sums[best_k, fid] += reward
        mean_pz[best_k, fid] = sums[best_k, fid] / s + zetas[fid]
        isc[best_k, fid] = 1.0 / np.sqrt(np.float64(s))
        spent += cost
        cum_q += cost * mu_top[best_k]
        if record:
            plays_arm[t - 1] = best_k
            plays_fid[t - 1] = fid
            plays_reward[t - 1] = reward
        t += 1
    while j < J:
        ck_spent[j] = spent
        ck_q[j] = cum_q
        ck_n[j] = t - 1
        j += 1
    return STATUS_OK, spent, cum_q, t - 1


_warmed = False


def warmup() -> None:
    """Force kernel compilation (or cache load) once, before any thread pool."""
    global _warmed
    if _warmed:
        return
    K, M, J = 2, 2, 1
    for mf in (True, False):
        for bern in (True, False):
            episode_kernel(
                np.full((K, M), 0.5),
                np.full(K, 0.5),
                np.array([0.1, 0.0]),
                np.array([1.0, 2.0]),
                np.array([0.05]),
                0.5,
                2.0,
                6.0,
                np.array([6.0]),
                np.full(6, 0.5),
                bern,
                1.0,
                mf,
                np.zeros((K, M), np.int64),
                np.zeros((K, M)),
                np.zeros((K, M)),
                np.zeros((K, M)),
                np.zeros(J),
                np.zeros(J),
                np.zeros(J, np.int64),
                False,
                np.zeros(0, np.int32),
                np.zeros(0, np.int32),
                np.zeros(0),
            )
    _warmed = True
