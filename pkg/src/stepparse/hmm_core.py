"""Compiled kernels for the discrete sequence model.

All recursions run in log space over the active-state block of one video.
Emission logs are finite (callers clamp probabilities away from {0, 1}),
but transition matrices may carry structural zeros, so the reductions
tolerate -inf entries.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _logsumexp(v):
    m = v[0]
    for i in range(1, v.shape[0]):
        if v[i] > m:
            m = v[i]
    if m == -np.inf:  # every branch impossible: exp(-inf - -inf) would be nan
        return m
    s = 0.0
    for i in range(v.shape[0]):
        s += np.exp(v[i] - m)
    return m + np.log(s)


@njit(cache=True)
def forward_loglik_core(ll, log_pi, log_pi0):
    """log p(y_1..T) for one sequence; ll is (T, K) per-frame emission logs."""
    t_len, k = ll.shape
    alpha = log_pi0 + ll[0]
    work = np.empty(k)
    for t in range(1, t_len):
        new = np.empty(k)
        for s in range(k):
            for j in range(k):
                work[j] = alpha[j] + log_pi[j, s]
            new[s] = _logsumexp(work) + ll[t, s]
        alpha = new
    return _logsumexp(alpha)


@njit(cache=True)
def forward_messages(ll, log_pi, log_pi0):
    """alpha[t, s] = log p(y_1..t, z_t = s)."""
    t_len, k = ll.shape
    alpha = np.empty((t_len, k))
    alpha[0] = log_pi0 + ll[0]
    work = np.empty(k)
    for t in range(1, t_len):
        for s in range(k):
            for j in range(k):
                work[j] = alpha[t - 1, j] + log_pi[j, s]
            alpha[t, s] = _logsumexp(work) + ll[t, s]
    return alpha


@njit(cache=True)
def backward_messages(ll, log_pi):
    """beta[t, s] = log p(y_{t+1}..y_T | z_t = s)."""
    t_len, k = ll.shape
    beta = np.zeros((t_len, k))
    work = np.empty(k)
    for t in range(t_len - 2, -1, -1):
        for s in range(k):
            for j in range(k):
                work[j] = log_pi[s, j] + ll[t + 1, j] + beta[t + 1, j]
            beta[t, s] = _logsumexp(work)
    return beta


@njit(cache=True)
def sample_path_core(ll, log_pi, log_pi0, uniforms):
    """Draw z ~ p(z | y) by backward filtering and forward sampling.

    One pre-drawn uniform per frame keeps random number consumption
    independent of the state count.
    """
    t_len, k = ll.shape
    beta = backward_messages(ll, log_pi)
    z = np.empty(t_len, dtype=np.int64)
    logp = np.empty(k)
    for s in range(k):
        logp[s] = log_pi0[s] + ll[0, s] + beta[0, s]
    z[0] = _sample_from_logits(logp, uniforms[0])
    for t in range(1, t_len):
        for s in range(k):
            logp[s] = log_pi[z[t - 1], s] + ll[t, s] + beta[t, s]
        z[t] = _sample_from_logits(logp, uniforms[t])
    return z


@njit(cache=True)
def _sample_from_logits(logp, u):
    m = logp[0]
    for i in range(1, logp.shape[0]):
        if logp[i] > m:
            m = logp[i]
    total = 0.0
    for i in range(logp.shape[0]):
        total += np.exp(logp[i] - m)
    acc = 0.0
    for i in range(logp.shape[0]):
        acc += np.exp(logp[i] - m) / total
        if u < acc:
            return i
    return logp.shape[0] - 1


def state_marginals_core(ll: np.ndarray, log_pi: np.ndarray,
                         log_pi0: np.ndarray) -> np.ndarray:
    """Posterior marginals p(z_t = s | y) from forward-backward messages."""
    alpha = forward_messages(ll, log_pi, log_pi0)
    beta = backward_messages(ll, log_pi)
    logm = alpha + beta
    logm -= logm.max(axis=1, keepdims=True)
    probs = np.exp(logm)
    probs /= probs.sum(axis=1, keepdims=True)
    return probs
