"""Feature-coupled sequence model over binary frame descriptors.

Videos of one activity share a global library of hidden steps.  A binary
feature matrix F (videos x steps), drawn from a two-parameter Indian
buffet process, decides which steps each video may use.  Every step k has
Bernoulli emission probabilities theta_k over the descriptor dimensions,
and every video has its own transition weights eta over its active steps,
Gamma-distributed with a kappa bonus on self-transitions so that steps
persist over consecutive frames.  The initial state is uniform over the
video's active steps.

This module owns the generative side: hyperparameters, priors, forward
simulation, and the model state record.  Posterior inference lives in
:mod:`stepparse.gibbs`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .corpus import Frame, GroundTruth, ValidationError, VideoRecord

THETA_EPS = 1e-6


@dataclass(frozen=True)
class Hyperparams:
    """Prior parameters; all must be strictly positive."""

    gamma: float = 2.0  # step innovation mass
    beta: float = 1.0  # step sharing concentration
    alpha: float = 1.0  # base transition weight
    kappa: float = 25.0  # self-transition bonus
    a0: float = 1.0  # emission Beta prior
    b0: float = 1.0

    def validate(self) -> None:
        for name in ("gamma", "beta", "alpha", "kappa", "a0", "b0"):
            value = getattr(self, name)
            if not (value > 0.0 and math.isfinite(value)):
                raise ValidationError(
                    f"hyperparameter {name} must be positive and finite, "
                    f"got {value!r}"
                )


def clamp_theta(theta: np.ndarray) -> np.ndarray:
    """Keep emission probabilities strictly inside (0, 1)."""
    return np.clip(theta, THETA_EPS, 1.0 - THETA_EPS)


def sample_ibp(n: int, gamma: float, beta: float,
               rng: np.random.Generator) -> np.ndarray:
    """Draw a binary ownership matrix from the two-parameter buffet process.

    Row i samples each existing column k with probability
    ``m_k / (beta + i)`` (m_k the number of earlier owners, i 0-based) and
    opens ``Poisson(gamma * beta / (beta + i))`` new columns.  ``beta = 1``
    recovers the one-parameter process.
    """
    if n < 1:
        raise ValidationError(f"need at least one row, got {n}")
    if gamma <= 0 or beta <= 0:
        raise ValidationError("gamma and beta must be positive")
    rows: list[np.ndarray] = []
    counts: list[int] = []
    for i in range(n):
        denom = beta + i
        row = [
            1 if rng.random() < m / denom else 0 for m in counts
        ]
        fresh = rng.poisson(gamma * beta / denom)
        row.extend([1] * fresh)
        counts = [m + f for m, f in zip(counts, row)] + [1] * fresh
        rows.append(np.asarray(row, dtype=np.uint8))
    k_total = len(counts)
    f = np.zeros((n, k_total), dtype=np.uint8)
    for i, row in enumerate(rows):
        f[i, : row.shape[0]] = row
    return f


def expected_ibp_features(n: int, gamma: float, beta: float) -> float:
    """E[number of columns] after *n* rows: gamma * sum_i beta / (beta + i)."""
    return gamma * sum(beta / (beta + i) for i in range(n))


def sample_transitions(
    f_row: np.ndarray, alpha: float, kappa: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw transition weights for one video given its active-step mask.

    Active entries get ``Gamma(alpha + kappa * [j == k], 1)`` weights;
    inactive rows and columns stay zero.  Returns the weights and the
    row-normalized transition matrix over the active block.
    """
    f_row = np.asarray(f_row)
    k_total = f_row.shape[0]
    active = np.flatnonzero(f_row)
    if active.size == 0:
        raise ValidationError("video owns no steps; transitions undefined")
    eta = np.zeros((k_total, k_total))
    for j in active:
        shape = np.full(active.size, alpha)
        shape[active == j] += kappa
        eta[j, active] = rng.gamma(shape, 1.0)
    return eta, transition_matrix(eta, f_row)


def transition_matrix(eta: np.ndarray, f_row: np.ndarray) -> np.ndarray:
    """Row-normalize the active block of *eta*; inactive entries are zero."""
    active = np.flatnonzero(f_row)
    pi = np.zeros_like(eta, dtype=np.float64)
    if active.size == 0:
        return pi
    block = eta[np.ix_(active, active)].astype(np.float64)
    sums = block.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        raise ValidationError("transition weights sum to zero on a row")
    pi[np.ix_(active, active)] = block / sums
    return pi


def emission_loglik(y: np.ndarray, theta: np.ndarray) -> float:
    """log p(y | theta) for one frame under independent Bernoulli dims."""
    y = np.asarray(y, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if y.shape != theta.shape:
        raise ValidationError(
            f"descriptor and parameter shapes differ: {y.shape} vs {theta.shape}"
        )
    if y.size and (theta.min() <= 0.0 or theta.max() >= 1.0):
        raise ValidationError("emission probabilities must lie strictly in (0, 1)")
    return float(np.sum(y * np.log(theta) + (1.0 - y) * np.log1p(-theta)))


def emission_loglik_matrix(y: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """(T, K) table of log p(y_t | theta_k) for a whole sequence."""
    y = np.asarray(y, dtype=np.float64)
    thetas = np.asarray(thetas, dtype=np.float64)
    if y.ndim != 2 or thetas.ndim != 2 or y.shape[1] != thetas.shape[1]:
        raise ValidationError(
            f"incompatible shapes: observations {y.shape}, params {thetas.shape}"
        )
    if thetas.size and (thetas.min() <= 0.0 or thetas.max() >= 1.0):
        raise ValidationError("emission probabilities must lie strictly in (0, 1)")
    return y @ np.log(thetas).T + (1.0 - y) @ np.log1p(-thetas).T


@dataclass
class ModelState:
    """Complete latent configuration of the model.

    ``z`` holds per-frame step indices into the global column space; a -1
    marks a frame whose step was deactivated and not yet resampled, which
    is only ever a transient condition inside a sampler sweep.
    """

    f: np.ndarray  # (N, K) uint8 ownership
    thetas: np.ndarray  # (K, D) emission probabilities
    etas: list[np.ndarray]  # per video (K, K) transition weights
    z: list[np.ndarray]  # per video (T_i,) int64 step indices
    hyper: Hyperparams = field(default_factory=Hyperparams)

    @property
    def n_videos(self) -> int:
        return self.f.shape[0]

    @property
    def n_features(self) -> int:
        return self.f.shape[1]

    @property
    def n_dims(self) -> int:
        return self.thetas.shape[1]

    def active(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.f[i])

    def pi(self, i: int) -> np.ndarray:
        return transition_matrix(self.etas[i], self.f[i])

    def copy(self) -> "ModelState":
        return ModelState(
            f=self.f.copy(),
            thetas=self.thetas.copy(),
            etas=[e.copy() for e in self.etas],
            z=[zi.copy() for zi in self.z],
            hyper=self.hyper,
        )

    def validate(self) -> None:
        self.hyper.validate()
        n, k = self.f.shape
        if self.thetas.shape[0] != k:
            raise ValidationError(
                f"{self.thetas.shape[0]} emission rows for {k} steps"
            )
        if len(self.etas) != n or len(self.z) != n:
            raise ValidationError("per-video field lengths disagree with F")
        if not np.isin(self.f, (0, 1)).all():
            raise ValidationError("ownership matrix must be binary")
        if self.thetas.size and (
            self.thetas.min() <= 0.0 or self.thetas.max() >= 1.0
        ):
            raise ValidationError("emission probabilities must lie in (0, 1)")
        for i in range(n):
            active = set(self.active(i).tolist())
            if not active and self.z[i].size:
                raise ValidationError(f"video {i} has frames but no active steps")
            if self.etas[i].shape != (k, k):
                raise ValidationError(f"video {i}: eta shape {self.etas[i].shape}")
            bad = [s for s in self.z[i].tolist() if s not in active]
            if bad:
                raise ValidationError(
                    f"video {i}: step path uses inactive steps {sorted(set(bad))}"
                )

    def to_payload(self) -> dict:
        # mask inactive transition entries so payloads are canonical
        etas = []
        for i in range(self.n_videos):
            mask = np.outer(self.f[i], self.f[i]).astype(np.float64)
            etas.append((self.etas[i] * mask).tolist())
        return {
            "f": [[int(v) for v in row] for row in self.f],
            "thetas": self.thetas.tolist(),
            "etas": etas,
            "z": [zi.tolist() for zi in self.z],
            "hyper": {
                "gamma": self.hyper.gamma,
                "beta": self.hyper.beta,
                "alpha": self.hyper.alpha,
                "kappa": self.hyper.kappa,
                "a0": self.hyper.a0,
                "b0": self.hyper.b0,
            },
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "ModelState":
        hyper = Hyperparams(**payload["hyper"]) if "hyper" in payload else Hyperparams()
        f = np.asarray(payload["f"], dtype=np.uint8)
        if f.ndim != 2:
            f = f.reshape(f.shape[0] if f.size else 0, 0)
        k = f.shape[1]
        thetas = np.asarray(payload["thetas"], dtype=np.float64)
        if thetas.size == 0:
            thetas = thetas.reshape(k, 0)
        state = cls(
            f=f,
            thetas=thetas,
            etas=[np.asarray(e, dtype=np.float64).reshape(k, k)
                  for e in payload["etas"]],
            z=[np.asarray(zi, dtype=np.int64) for zi in payload["z"]],
            hyper=hyper,
        )
        state.validate()
        return state


def generate_synthetic(
    n_videos: int,
    n_frames: int,
    n_dims: int,
    hyper: Hyperparams,
    rng: np.random.Generator,
    n_features: int | None = None,
    thetas: np.ndarray | None = None,
    max_attempts: int = 1000,
) -> tuple[list[np.ndarray], ModelState]:
    """Simulate descriptor sequences together with their latent state.

    With *n_features* given, every video owns all steps; otherwise F comes
    from the buffet prior, rejecting draws that leave any video with no
    steps.  *thetas* overrides the Beta-prior emission draw.
    """
    hyper.validate()
    if n_videos < 1 or n_frames < 0 or n_dims < 0:
        raise ValidationError("n_videos must be >= 1; sizes must be >= 0")
    if n_features is not None:
        if n_features < 1:
            raise ValidationError("n_features must be >= 1 when given")
        f = np.ones((n_videos, n_features), dtype=np.uint8)
    else:
        for _ in range(max_attempts):
            f = sample_ibp(n_videos, hyper.gamma, hyper.beta, rng)
            if f.shape[1] > 0 and f.sum(axis=1).min() > 0:
                break
        else:
            raise ValidationError(
                "could not draw an ownership matrix with all videos active"
            )
    k = f.shape[1]
    if thetas is None:
        thetas = clamp_theta(rng.beta(hyper.a0, hyper.b0, size=(k, n_dims)))
    else:
        thetas = np.asarray(thetas, dtype=np.float64)
        if thetas.shape != (k, n_dims):
            raise ValidationError(
                f"thetas shape {thetas.shape} != ({k}, {n_dims})"
            )
        thetas = clamp_theta(thetas)

    etas = []
    zs = []
    ys = []
    for i in range(n_videos):
        eta, pi = sample_transitions(f[i], hyper.alpha, hyper.kappa, rng)
        etas.append(eta)
        active = np.flatnonzero(f[i])
        z = np.empty(n_frames, dtype=np.int64)
        y = np.zeros((n_frames, n_dims), dtype=np.uint8)
        for t in range(n_frames):
            if t == 0:
                z[t] = rng.choice(active)
            else:
                z[t] = rng.choice(f.shape[1], p=pi[z[t - 1]])
            y[t] = rng.random(n_dims) < thetas[z[t]]
        zs.append(z)
        ys.append(y)
    state = ModelState(f=f, thetas=thetas, etas=etas, z=zs, hyper=hyper)
    state.validate()
    return ys, state


# ---------------------------------------------------------------------------
# synthetic corpora that exercise the full text+vision pipeline

_WORD_BANK = [
    "crack", "whisk", "pour", "stir", "heat", "flip", "chop", "grate",
    "knead", "bake", "serve", "rinse", "slice", "peel", "boil", "simmer",
    "season", "spread", "roll", "fold", "grill", "toast", "blend", "melt",
    "drain", "mash", "scoop", "sprinkle", "squeeze", "marinate", "glaze",
    "garnish", "batter", "dough", "skillet", "oven", "butter", "flour",
    "sugar", "salt",
]


def synthesize_corpus(
    n_videos: int = 6,
    n_frames: int = 40,
    n_steps: int = 4,
    n_lang: int = 8,
    n_vis: int = 4,
    hyper: Hyperparams | None = None,
    seed: int = 0,
    noise: float = 0.4,
    separation: float = 6.0,
) -> tuple[list[VideoRecord], GroundTruth, ModelState]:
    """Build a loadable dataset whose frames follow the generative model.

    Each step prefers a block of language atoms (subtitle words) and one
    visual atom (region proposals near a step-specific centroid), so the
    full discovery pipeline can recover the planted structure.
    """
    if hyper is None:
        hyper = Hyperparams()
    if n_lang > len(_WORD_BANK):
        raise ValidationError(
            f"at most {len(_WORD_BANK)} language dimensions supported"
        )
    if n_steps < 1 or n_lang < 1 or n_vis < 0 or n_frames < 1:
        raise ValidationError(
            "need n_steps >= 1, n_lang >= 1, n_vis >= 0, n_frames >= 1"
        )
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n_dims = n_lang + n_vis
    thetas = np.full((n_steps, n_dims), 0.05)
    for d in range(n_lang):
        thetas[d % n_steps, d] = 0.9
    for m in range(n_vis):
        thetas[m % n_steps, n_lang + m] = 0.9
    ys, state = generate_synthetic(
        n_videos, n_frames, n_dims, hyper, rng,
        n_features=n_steps, thetas=thetas,
    )
    words = _WORD_BANK[:n_lang]
    feat_dim = max(n_vis, 2)
    centroids = np.zeros((n_vis, feat_dim))
    for m in range(n_vis):
        centroids[m, m] = separation

    videos = []
    gt = GroundTruth()
    for i, y in enumerate(ys):
        frames = []
        for t in range(n_frames):
            subtitle = " ".join(words[d] for d in range(n_lang) if y[t, d])
            props = [
                centroids[m] + rng.normal(0.0, noise, feat_dim)
                for m in range(n_vis)
                if y[t, n_lang + m]
            ]
            proposals = (
                np.asarray(props) if props else np.zeros((0, feat_dim))
            )
            frames.append(
                Frame(index=t, subtitle_tokens=subtitle.split(),
                      proposals=proposals)
            )
        desc_words = [words[int(w)] for w in rng.integers(0, n_lang, size=3)]
        videos.append(
            VideoRecord(
                video_id=f"vid{i:03d}",
                description_tokens=["cooking", "tutorial", *desc_words],
                frames=frames,
            )
        )
        segs = []
        z = state.z[i]
        start = 0
        for t in range(1, n_frames + 1):
            if t == n_frames or z[t] != z[start]:
                segs.append((start, t, f"step{int(z[start]):02d}"))
                start = t
        gt.segments[videos[-1].video_id] = segs
    gt.validate()
    for v in videos:
        v.validate()
    return videos, gt, state
