"""Posterior inference for the feature-coupled sequence model.

One sweep updates, in order: shared step ownership (Metropolis-Hastings
flips with the step path integrated out), per-video unique steps (birth
and death moves), transition weights, step paths, emission parameters,
and finally pruning of steps no video owns.

Ownership moves score proposals by the marginal sequence likelihood from
the forward recursion, so the step path plays no role in their acceptance;
the path of an affected video is redrawn immediately after any accepted
move, which keeps every subsequent conditional exact.

Birth and death of unique steps form a reversible jump pair.  With n
current unique steps of a video and lam = gamma * beta / (beta + N - 1)
the innovation mass at N videos, a birth (parameters drawn from the
prior, which cancels against the proposal) is accepted with probability
min(1, lam / (n + 1) * likelihood_ratio) and a death of a uniformly
chosen unique step with min(1, n / lam * likelihood_ratio).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .bphmm import (
    Hyperparams,
    ModelState,
    clamp_theta,
    emission_loglik_matrix,
    sample_ibp,
    transition_matrix,
)
from .corpus import ValidationError
from .hmm_core import forward_loglik_core, sample_path_core, state_marginals_core

__all__ = [
    "SamplerDiagnostics",
    "forward_loglik",
    "state_marginals",
    "sample_states",
    "sample_theta",
    "sample_eta",
    "sample_shared_features",
    "sample_unique_features",
    "prune_empty_steps",
    "ibp_log_prior",
    "joint_log_density",
    "run_chain",
    "run_chains",
]


# ---------------------------------------------------------------------------
# public single-video operations


def _check_step_params(thetas: np.ndarray, pi: np.ndarray, pi0: np.ndarray) -> None:
    k = thetas.shape[0]
    if k < 1:
        raise ValidationError("need at least one step")
    if pi.shape != (k, k):
        raise ValidationError(f"transition matrix shape {pi.shape}, expected ({k}, {k})")
    if pi0.shape != (k,):
        raise ValidationError(f"initial distribution shape {pi0.shape}, expected ({k},)")
    if np.any(pi < 0) or np.any(pi0 < 0):
        raise ValidationError("transition probabilities must be non-negative")
    if not np.allclose(pi.sum(axis=1), 1.0, atol=1e-8):
        raise ValidationError("transition rows must sum to 1")
    if not np.isclose(pi0.sum(), 1.0, atol=1e-8):
        raise ValidationError("initial distribution must sum to 1")


def forward_loglik(y: np.ndarray, thetas: np.ndarray, pi: np.ndarray,
                   pi0: np.ndarray) -> float:
    """Marginal log-likelihood of one descriptor sequence, paths summed out."""
    y = np.asarray(y, dtype=np.float64)
    thetas = np.asarray(thetas, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.float64)
    pi0 = np.asarray(pi0, dtype=np.float64)
    _check_step_params(thetas, pi, pi0)
    if y.shape[0] == 0:
        return 0.0
    ll = emission_loglik_matrix(y, thetas)
    with np.errstate(divide="ignore"):
        return float(forward_loglik_core(ll, np.log(pi), np.log(pi0)))


def state_marginals(y: np.ndarray, thetas: np.ndarray, pi: np.ndarray,
                    pi0: np.ndarray) -> np.ndarray:
    """(T, K) posterior step probabilities per frame."""
    y = np.asarray(y, dtype=np.float64)
    _check_step_params(np.asarray(thetas), np.asarray(pi), np.asarray(pi0))
    if y.shape[0] == 0:
        return np.zeros((0, np.asarray(thetas).shape[0]))
    ll = emission_loglik_matrix(y, np.asarray(thetas, dtype=np.float64))
    with np.errstate(divide="ignore"):
        return state_marginals_core(
            ll, np.log(np.asarray(pi, dtype=np.float64)),
            np.log(np.asarray(pi0, dtype=np.float64)),
        )


def sample_states(y: np.ndarray, thetas: np.ndarray, pi: np.ndarray,
                  pi0: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw a step path from its posterior by backward filtering."""
    y = np.asarray(y, dtype=np.float64)
    thetas = np.asarray(thetas, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.float64)
    pi0 = np.asarray(pi0, dtype=np.float64)
    _check_step_params(thetas, pi, pi0)
    if y.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    ll = emission_loglik_matrix(y, thetas)
    uniforms = rng.random(y.shape[0])
    with np.errstate(divide="ignore"):
        return sample_path_core(ll, np.log(pi), np.log(pi0), uniforms)


def sample_theta(ys: list[np.ndarray], zs: list[np.ndarray], n_steps: int,
                 a0: float, b0: float, rng: np.random.Generator) -> np.ndarray:
    """Conjugate emission update pooled over all videos.

    Entries for steps with no assigned frames are fresh prior draws.
    Frames carrying the -1 placeholder are ignored.
    """
    if n_steps < 1:
        raise ValidationError("need at least one step")
    if len(ys) != len(zs):
        raise ValidationError("ys and zs lengths differ")
    n_dims = ys[0].shape[1] if ys else 0
    ones = np.zeros((n_steps, n_dims))
    totals = np.zeros(n_steps)
    for y, z in zip(ys, zs):
        for k in range(n_steps):
            sel = z == k
            if sel.any():
                ones[k] += y[sel].sum(axis=0)
                totals[k] += int(sel.sum())
    a = a0 + ones
    b = b0 + totals[:, None] - ones
    return clamp_theta(rng.beta(a, b))


def sample_eta(z: np.ndarray, f_row: np.ndarray, alpha: float, kappa: float,
               rng: np.random.Generator) -> np.ndarray:
    """Conjugate transition-weight update for one video.

    Counts use consecutive frame pairs whose steps are both active for the
    video; anything else (including -1 placeholders) is skipped.
    """
    f_row = np.asarray(f_row)
    k_total = f_row.shape[0]
    active = np.flatnonzero(f_row)
    if active.size == 0:
        raise ValidationError("video owns no steps")
    counts = np.zeros((k_total, k_total))
    active_set = set(active.tolist())
    for a_step, b_step in zip(z[:-1], z[1:]):
        if int(a_step) in active_set and int(b_step) in active_set:
            counts[int(a_step), int(b_step)] += 1.0
    eta = np.zeros((k_total, k_total))
    for j in active:
        shape = alpha + counts[j, active]
        shape[active == j] += kappa
        eta[j, active] = rng.gamma(shape, 1.0)
    return eta


# ---------------------------------------------------------------------------
# densities


def ibp_log_prior(f: np.ndarray, gamma: float, beta: float) -> float:
    """Log probability of an ownership matrix under the buffet prior.

    Uses the exchangeable left-ordered-class form, so any two matrices with
    the same column multiset score identically.
    """
    f = np.asarray(f)
    if f.ndim != 2:
        raise ValidationError("ownership matrix must be 2-d")
    n, k = f.shape
    if n < 1:
        raise ValidationError("need at least one video")
    if k and not np.isin(f, (0, 1)).all():
        raise ValidationError("ownership matrix must be binary")
    harmonic = sum(beta / (beta + i) for i in range(n))
    total = -gamma * harmonic
    if k == 0:
        return total
    m = f.sum(axis=0)
    if m.min() == 0:
        raise ValidationError("ownership matrix has an empty column")
    total += k * math.log(gamma * beta)
    histories = Counter(tuple(int(v) for v in f[:, j]) for j in range(k))
    for count in histories.values():
        total -= math.lgamma(count + 1)
    for mk in m:
        total += (
            math.lgamma(mk)
            + math.lgamma(n - mk + beta)
            - math.lgamma(n + beta)
        )
    return total


def _log_beta_pdf(x: np.ndarray, a: float, b: float) -> float:
    norm = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    return float(np.sum((a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x)) -
                 x.size * norm)


def _log_gamma_pdf(x: np.ndarray, shape: np.ndarray) -> float:
    return float(np.sum((shape - 1.0) * np.log(x) - x - gammaln(shape)))


def joint_log_density(state: ModelState, ys: list[np.ndarray]) -> float:
    """Collapsed joint density log p(F, theta, eta, Y); step paths summed out.

    Used to rank sweeps and chains.  Comparisons across states with
    different step counts are heuristic in the usual trans-dimensional
    sense but consistent because all priors are included.
    """
    hyper = state.hyper
    total = ibp_log_prior(state.f, hyper.gamma, hyper.beta)
    if state.n_features:
        total += _log_beta_pdf(state.thetas, hyper.a0, hyper.b0)
    for i in range(state.n_videos):
        active = state.active(i)
        if active.size == 0:
            if ys[i].shape[0]:
                return -np.inf
            continue
        shape = np.full((active.size, active.size), hyper.alpha)
        np.fill_diagonal(shape, hyper.alpha + hyper.kappa)
        block = state.etas[i][np.ix_(active, active)]
        total += _log_gamma_pdf(block, shape)
        total += _forward_marginal(ys[i], state.thetas, state.etas[i], active)
    return total


def _forward_marginal(y: np.ndarray, thetas: np.ndarray, eta: np.ndarray,
                      active: np.ndarray, ll_full: np.ndarray | None = None) -> float:
    """Forward log-likelihood of one video over its active block."""
    if y.shape[0] == 0:
        return 0.0
    if active.size == 0:
        return -np.inf
    if ll_full is None:
        ll = emission_loglik_matrix(y, thetas[active])
    else:
        ll = np.ascontiguousarray(ll_full[:, active])
    block = eta[np.ix_(active, active)]
    pi = block / block.sum(axis=1, keepdims=True)
    log_pi0 = np.full(active.size, -math.log(active.size))
    return float(forward_loglik_core(ll, np.log(pi), log_pi0))


# ---------------------------------------------------------------------------
# ownership moves


@dataclass
class SamplerDiagnostics:
    """Per-sweep traces and move statistics for one chain."""

    joint_log_density: list[float] = field(default_factory=list)
    data_loglik: list[float] = field(default_factory=list)
    n_steps: list[int] = field(default_factory=list)
    flip_proposed: int = 0
    flip_accepted: int = 0
    birth_proposed: int = 0
    birth_accepted: int = 0
    death_proposed: int = 0
    death_accepted: int = 0
    best_sweep: int = -1

    def rate(self, kind: str) -> float:
        proposed = getattr(self, f"{kind}_proposed")
        accepted = getattr(self, f"{kind}_accepted")
        return accepted / proposed if proposed else 0.0

    def to_csv(self) -> str:
        lines = ["sweep,n_steps,data_loglik,joint_log_density"]
        for s, (k, d, j) in enumerate(
            zip(self.n_steps, self.data_loglik, self.joint_log_density)
        ):
            lines.append(f"{s},{k},{d!r},{j!r}")
        return "\n".join(lines) + "\n"


def _draw_path(state: ModelState, i: int, ll_full: list[np.ndarray],
               rng: np.random.Generator) -> None:
    """Redraw the step path of video i under its current parameters."""
    y_len = ll_full[i].shape[0]
    if y_len == 0:
        state.z[i] = np.zeros(0, dtype=np.int64)
        return
    active = state.active(i)
    ll = np.ascontiguousarray(ll_full[i][:, active])
    block = state.etas[i][np.ix_(active, active)]
    pi = block / block.sum(axis=1, keepdims=True)
    log_pi0 = np.full(active.size, -math.log(active.size))
    local = sample_path_core(ll, np.log(pi), log_pi0, rng.random(y_len))
    state.z[i] = active[local]


def _fresh_eta_for_activation(eta: np.ndarray, new_active: np.ndarray, k: int,
                              alpha: float, kappa: float,
                              rng: np.random.Generator) -> np.ndarray:
    """Copy eta with freshly drawn prior entries on row/column k."""
    out = eta.copy()
    for kk in new_active:
        out[k, kk] = rng.gamma(alpha + (kappa if kk == k else 0.0), 1.0)
        if kk != k:
            out[kk, k] = rng.gamma(alpha, 1.0)
    return out


def sample_shared_features(
    state: ModelState,
    ys: list[np.ndarray],
    rng: np.random.Generator,
    ll_full: list[np.ndarray] | None = None,
    diag: SamplerDiagnostics | None = None,
) -> None:
    """Metropolis-Hastings flips of ownership for steps shared with others.

    The step path is integrated out of the acceptance ratio; affected
    videos get their path redrawn right after an accepted flip.
    """
    hyper = state.hyper
    n, k_total = state.f.shape
    if ll_full is None:
        ll_full = [emission_loglik_matrix(y, state.thetas) for y in ys]
    m = state.f.sum(axis=0).astype(np.int64)
    for i in range(n):
        cur_ll = _forward_marginal(ys[i], state.thetas, state.etas[i],
                                   state.active(i), ll_full[i])
        for k in range(k_total):
            owned = int(state.f[i, k])
            m_minus = int(m[k]) - owned
            if m_minus == 0:
                continue  # unique or dead steps belong to the birth/death move
            if diag is not None:
                diag.flip_proposed += 1
            if owned and state.f[i].sum() == 1:
                continue  # stripping the last step has zero posterior mass
            prior_odds = m_minus / (hyper.beta + n - 1 - m_minus)
            if owned:
                new_active = np.setdiff1d(state.active(i), [k])
                eta_prop = state.etas[i]
                log_prior = -math.log(prior_odds)
            else:
                new_active = np.union1d(state.active(i), [k])
                eta_prop = _fresh_eta_for_activation(
                    state.etas[i], new_active, k, hyper.alpha, hyper.kappa, rng
                )
                log_prior = math.log(prior_odds)
            prop_ll = _forward_marginal(ys[i], state.thetas, eta_prop,
                                        new_active, ll_full[i])
            log_accept = log_prior + prop_ll - cur_ll
            if math.log(rng.random()) < log_accept:
                state.f[i, k] = 1 - owned
                m[k] += 1 - 2 * owned
                state.etas[i] = eta_prop
                cur_ll = prop_ll
                _draw_path(state, i, ll_full, rng)
                if diag is not None:
                    diag.flip_accepted += 1


def sample_unique_features(
    state: ModelState,
    ys: list[np.ndarray],
    rng: np.random.Generator,
    ll_full: list[np.ndarray] | None = None,
    max_steps: int | None = None,
    diag: SamplerDiagnostics | None = None,
) -> list[np.ndarray]:
    """One birth-or-death proposal per video for steps nobody else owns.

    Births append a fresh column (emission parameters from the prior);
    deaths deactivate one unique step, leaving the empty column for the
    end-of-sweep prune.  With *max_steps* set, births beyond the cap are
    rejected, which restricts the chain to the truncated posterior.

    Returns the (possibly extended) emission log-likelihood cache.
    """
    hyper = state.hyper
    n = state.f.shape[0]
    if ll_full is None:
        ll_full = [emission_loglik_matrix(y, state.thetas) for y in ys]
    lam = hyper.gamma * hyper.beta / (hyper.beta + n - 1)
    for i in range(n):
        m = state.f.sum(axis=0).astype(np.int64)
        unique = [
            k for k in range(state.f.shape[1])
            if state.f[i, k] == 1 and m[k] == 1
        ]
        n_unique = len(unique)
        cur_ll = _forward_marginal(ys[i], state.thetas, state.etas[i],
                                   state.active(i), ll_full[i])
        if rng.random() < 0.5:  # birth
            if diag is not None:
                diag.birth_proposed += 1
            if max_steps is not None and int((m > 0).sum()) >= max_steps:
                continue
            theta_star = clamp_theta(
                rng.beta(hyper.a0, hyper.b0, size=state.n_dims)
            )
            k_new = state.f.shape[1]
            new_active = np.append(state.active(i), k_new)
            eta_prop = np.pad(state.etas[i], ((0, 1), (0, 1)))
            eta_prop = _fresh_eta_for_activation(
                eta_prop, new_active, k_new, hyper.alpha, hyper.kappa, rng
            )
            thetas_prop = np.vstack([state.thetas, theta_star[None, :]])
            ll_new = [
                np.column_stack([
                    ll_full[v],
                    _emission_column(ys[v], theta_star),
                ])
                for v in range(n)
            ]
            prop_ll = _forward_marginal(ys[i], thetas_prop, eta_prop,
                                        new_active, ll_new[i])
            log_accept = (
                math.log(lam) - math.log(n_unique + 1) + prop_ll - cur_ll
            )
            if math.log(rng.random()) < log_accept:
                state.f = np.column_stack(
                    [state.f, np.zeros(n, dtype=np.uint8)]
                )
                state.f[i, k_new] = 1
                state.thetas = thetas_prop
                state.etas = [
                    eta_prop if v == i else np.pad(state.etas[v], ((0, 1), (0, 1)))
                    for v in range(n)
                ]
                ll_full[:] = ll_new
                _draw_path(state, i, ll_full, rng)
                if diag is not None:
                    diag.birth_accepted += 1
        else:  # death
            if n_unique == 0:
                continue
            if diag is not None:
                diag.death_proposed += 1
            if state.f[i].sum() == 1:
                continue  # stripping the last step has zero posterior mass
            victim = unique[int(rng.integers(n_unique))]
            new_active = np.setdiff1d(state.active(i), [victim])
            prop_ll = _forward_marginal(ys[i], state.thetas, state.etas[i],
                                        new_active, ll_full[i])
            log_accept = (
                math.log(n_unique) - math.log(lam) + prop_ll - cur_ll
            )
            if math.log(rng.random()) < log_accept:
                state.f[i, victim] = 0
                _draw_path(state, i, ll_full, rng)
                if diag is not None:
                    diag.death_accepted += 1
    return ll_full


def _emission_column(y: np.ndarray, theta: np.ndarray) -> np.ndarray:
    yf = np.asarray(y, dtype=np.float64)
    return yf @ np.log(theta) + (1.0 - yf) @ np.log1p(-theta)


def prune_empty_steps(state: ModelState,
                      ll_full: list[np.ndarray] | None = None) -> np.ndarray:
    """Drop steps no video owns and remap step indices everywhere.

    Returns the old->new index map (-1 for removed steps).
    """
    m = state.f.sum(axis=0)
    keep = np.flatnonzero(m > 0)
    k_old = state.f.shape[1]
    remap = np.full(k_old, -1, dtype=np.int64)
    remap[keep] = np.arange(keep.size)
    if keep.size == k_old:
        return remap
    state.f = state.f[:, keep]
    state.thetas = state.thetas[keep]
    state.etas = [e[np.ix_(keep, keep)] for e in state.etas]
    for i, z in enumerate(state.z):
        if z.size and z.min() >= 0:
            state.z[i] = remap[z]
        else:
            state.z[i] = np.array(
                [remap[s] if s >= 0 else -1 for s in z], dtype=np.int64
            )
    if ll_full is not None:
        for i in range(len(ll_full)):
            ll_full[i] = ll_full[i][:, keep]
    return remap


# ---------------------------------------------------------------------------
# full chain


def _validate_observations(ys: list[np.ndarray]) -> int:
    if not ys:
        raise ValidationError("no observation sequences")
    dims = {y.shape[1] for y in ys}
    if len(dims) != 1:
        raise ValidationError(f"inconsistent descriptor widths {sorted(dims)}")
    for i, y in enumerate(ys):
        if y.ndim != 2:
            raise ValidationError(f"sequence {i} is not a matrix")
        if y.size and not np.isin(y, (0, 1)).all():
            raise ValidationError(f"sequence {i} is not binary")
    return dims.pop()


def _init_state(ys: list[np.ndarray], hyper: Hyperparams, n_dims: int,
                rng: np.random.Generator,
                max_steps: int | None) -> ModelState:
    n = len(ys)
    f = sample_ibp(n, hyper.gamma, hyper.beta, rng)
    if max_steps is not None and f.shape[1] > max_steps:
        f = f[:, :max_steps]
    # every video needs at least one step; give empty rows a private one
    for i in range(n):
        if f[i].sum() == 0:
            if max_steps is not None and f.shape[1] >= max_steps:
                f[i, rng.integers(f.shape[1])] = 1
            else:
                col = np.zeros((n, 1), dtype=np.uint8)
                col[i, 0] = 1
                f = np.column_stack([f, col])
    k = f.shape[1]
    thetas = clamp_theta(rng.beta(hyper.a0, hyper.b0, size=(k, n_dims)))
    etas = []
    for i in range(n):
        eta = np.zeros((k, k))
        active = np.flatnonzero(f[i])
        eta = _fresh_eta_block(eta, active, hyper.alpha, hyper.kappa, rng)
        etas.append(eta)
    state = ModelState(
        f=f, thetas=thetas, etas=etas,
        z=[np.zeros(0, dtype=np.int64) for _ in range(n)],
        hyper=hyper,
    )
    ll_full = [emission_loglik_matrix(y, state.thetas) for y in ys]
    for i in range(n):
        _draw_path(state, i, ll_full, rng)
    return state


def _fresh_eta_block(eta: np.ndarray, active: np.ndarray, alpha: float,
                     kappa: float, rng: np.random.Generator) -> np.ndarray:
    for j in active:
        shape = np.full(active.size, alpha)
        shape[active == j] += kappa
        eta[j, active] = rng.gamma(shape, 1.0)
    return eta


def run_chain(
    ys: list[np.ndarray],
    hyper: Hyperparams | None = None,
    n_sweeps: int = 500,
    seed: int = 0,
    max_steps: int | None = None,
    report: str = "best",
    callback: "Callable[[int, ModelState], None] | None" = None,
) -> tuple[ModelState, SamplerDiagnostics]:
    """Run one sampler chain over binary descriptor sequences.

    *report* selects which visited state is returned: the one with the
    highest collapsed joint density ("best") or the final sweep ("last").
    *max_steps* caps the live step count by rejecting births at the cap.
    *callback* is invoked as ``callback(sweep, state)`` after every sweep,
    e.g. to trace posterior summaries; it must not mutate the state.
    """
    if hyper is None:
        hyper = Hyperparams()
    hyper.validate()
    if report not in ("best", "last"):
        raise ValidationError(f"report must be 'best' or 'last', got {report!r}")
    if n_sweeps < 1:
        raise ValidationError("need at least one sweep")
    if max_steps is not None and max_steps < 1:
        raise ValidationError("max_steps must be >= 1 when given")
    ys = [np.asarray(y) for y in ys]
    n_dims = _validate_observations(ys)
    ys = [y.astype(np.uint8) for y in ys]
    rng = np.random.default_rng(seed)
    state = _init_state(ys, hyper, n_dims, rng, max_steps)
    ll_full = [emission_loglik_matrix(y, state.thetas) for y in ys]
    diag = SamplerDiagnostics()
    best_state = state.copy()
    best_joint = -np.inf
    for sweep in range(n_sweeps):
        sample_shared_features(state, ys, rng, ll_full, diag)
        ll_full = sample_unique_features(state, ys, rng, ll_full, max_steps, diag)
        for i in range(state.n_videos):
            state.etas[i] = sample_eta(
                state.z[i], state.f[i], hyper.alpha, hyper.kappa, rng
            )
        for i in range(state.n_videos):
            _draw_path(state, i, ll_full, rng)
        state.thetas = sample_theta(
            ys, state.z, state.n_features, hyper.a0, hyper.b0, rng
        )
        ll_full = [emission_loglik_matrix(y, state.thetas) for y in ys]
        prune_empty_steps(state, ll_full)
        data_ll = sum(
            _forward_marginal(ys[i], state.thetas, state.etas[i],
                              state.active(i), ll_full[i])
            for i in range(state.n_videos)
        )
        joint = joint_log_density(state, ys)
        diag.data_loglik.append(float(data_ll))
        diag.joint_log_density.append(float(joint))
        diag.n_steps.append(state.n_features)
        if joint > best_joint:
            best_joint = joint
            best_state = state.copy()
            diag.best_sweep = sweep
        if callback is not None:
            callback(sweep, state)
    final = best_state if report == "best" else state
    final.validate()
    return final, diag


def run_chains(
    ys: list[np.ndarray],
    hyper: Hyperparams | None = None,
    n_sweeps: int = 500,
    seed: int = 0,
    n_chains: int = 1,
    max_steps: int | None = None,
    report: str = "best",
) -> tuple[ModelState, list[SamplerDiagnostics], int]:
    """Run independent chains from spawned seeds and keep the best one.

    Chains are ranked by the collapsed joint density of their reported
    state; ties go to the lowest chain index.
    """
    if n_chains < 1:
        raise ValidationError("need at least one chain")
    seeds = np.random.SeedSequence(seed).spawn(n_chains)
    best: tuple[ModelState, int] | None = None
    best_joint = -np.inf
    diags = []
    for c, ss in enumerate(seeds):
        chain_seed = int(ss.generate_state(1)[0])
        state, diag = run_chain(
            ys, hyper, n_sweeps=n_sweeps, seed=chain_seed,
            max_steps=max_steps, report=report,
        )
        diags.append(diag)
        joint = joint_log_density(state, [np.asarray(y, dtype=np.uint8) for y in ys])
        if joint > best_joint:
            best_joint = joint
            best = (state, c)
    assert best is not None
    return best[0], diags, best[1]
