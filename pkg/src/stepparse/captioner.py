"""Step captioning with an n-gram language model over subtitle text.

A third-order Markov model (each token conditioned on the three before
it) is trained on the collection's subtitle sentences with add-lambda
smoothing and back-off to shorter contexts for unseen histories.  To
caption a step, candidate sentences are sampled from the model and
rescored by their mean per-token log probability plus a weighted sum of
the step's emission log-probabilities over the language atoms the
candidate mentions; the best candidate wins.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import math

import numpy as np

from .corpus import ValidationError

BOS = "<s>"
EOS = "</s>"


@dataclass
class NgramModel:
    """Back-off n-gram model; ``order`` is the context length."""

    order: int = 3
    lam: float = 0.01
    vocab: list[str] = field(default_factory=list)
    # counts[L][context][token]; context tuples have length L
    counts: list[dict[tuple[str, ...], Counter]] = field(default_factory=list)

    def _candidates(self) -> list[str]:
        return self.vocab + [EOS]

    def conditional(self, context: Sequence[str]) -> tuple[list[str], np.ndarray]:
        """Smoothed next-token distribution given up to ``order`` tokens.

        Backs off to the longest suffix of *context* that was observed;
        the empty context is always observed for a trained model.
        """
        if not self.counts:
            raise ValidationError("language model is not trained")
        ctx = tuple(context)[-self.order:] if self.order else ()
        table: Counter | None = None
        for length in range(len(ctx), -1, -1):
            table = self.counts[length].get(ctx[len(ctx) - length:])
            if table is not None:
                break
        assert table is not None
        tokens = self._candidates()
        n_out = len(tokens)
        total = sum(table.values())
        probs = np.array(
            [(table.get(tok, 0) + self.lam) / (total + self.lam * n_out)
             for tok in tokens]
        )
        return tokens, probs

    def log_prob(self, context: Sequence[str], token: str) -> float:
        tokens, probs = self.conditional(context)
        try:
            return float(np.log(probs[tokens.index(token)]))
        except ValueError as exc:
            raise ValidationError(f"token {token!r} outside vocabulary") from exc


def train_lm(sentences: Sequence[Sequence[str]], order: int = 3,
             lam: float = 0.01) -> NgramModel:
    """Fit the model on token lists; empty sentences are skipped."""
    if order < 0:
        raise ValidationError(f"order must be >= 0, got {order}")
    if lam <= 0:
        raise ValidationError(f"smoothing lambda must be positive, got {lam}")
    usable = [list(s) for s in sentences if len(s) > 0]
    if not usable:
        raise ValidationError("no non-empty sentences to train on")
    vocab: set[str] = set()
    counts: list[dict[tuple[str, ...], Counter]] = [
        {} for _ in range(order + 1)
    ]
    for sent in usable:
        for tok in sent:
            if tok in (BOS, EOS):
                raise ValidationError(f"reserved token {tok!r} in corpus")
        vocab.update(sent)
        padded = [BOS] * order + sent + [EOS]
        for pos in range(order, len(padded)):
            token = padded[pos]
            for length in range(order + 1):
                ctx = tuple(padded[pos - length:pos])
                counts[length].setdefault(ctx, Counter())[token] += 1
    return NgramModel(order=order, lam=lam, vocab=sorted(vocab), counts=counts)


def sample_sentence(lm: NgramModel, rng: np.random.Generator,
                    max_len: int = 15) -> list[str]:
    """Draw one sentence from the model, cutting off at *max_len* tokens."""
    out: list[str] = []
    context: list[str] = [BOS] * lm.order
    while len(out) < max_len:
        tokens, probs = lm.conditional(context)
        pick = tokens[rng.choice(len(tokens), p=probs / probs.sum())]
        if pick == EOS:
            break
        out.append(pick)
        context = (context + [pick])[-lm.order:] if lm.order else []
    return out


def score_sentence(lm: NgramModel, tokens: Sequence[str]) -> float:
    """Mean log probability per emission step, end marker included."""
    context: list[str] = [BOS] * lm.order
    total = 0.0
    for tok in tokens:
        total += lm.log_prob(context, tok)
        context = (context + [tok])[-lm.order:] if lm.order else []
    total += lm.log_prob(context, EOS)
    return total / (len(tokens) + 1)


def caption_step(
    lm: NgramModel,
    atom_log_probs: Mapping[str, float],
    rng: np.random.Generator,
    n_candidates: int = 200,
    max_len: int = 15,
    atom_weight: float = 1.0,
) -> list[str]:
    """Best-of-n caption for one step.

    *atom_log_probs* maps language atom words to the step's emission
    log-probabilities (all <= 0); candidates mentioning an atom pay its
    log-probability, so atoms the step emits confidently are nearly free
    while foreign atoms are penalized.  Deterministic given *rng*.
    """
    if n_candidates < 1:
        raise ValidationError("need at least one candidate")
    if any(v > 0.0 for v in atom_log_probs.values()):
        raise ValidationError("atom log-probabilities must be <= 0")
    best: list[str] | None = None
    best_score = -math.inf
    for _ in range(n_candidates):
        cand = sample_sentence(lm, rng, max_len)
        if not cand:
            continue
        score = score_sentence(lm, cand)
        score += atom_weight * sum(
            atom_log_probs[w] for w in set(cand) if w in atom_log_probs
        )
        if score > best_score:
            best_score = score
            best = cand
    if best is None:
        # every sample ended immediately; fall back to the most likely token
        tokens, probs = lm.conditional([])
        order = np.argsort(-probs, kind="stable")
        for idx in order:
            if tokens[idx] != EOS:
                return [tokens[idx]]
        raise ValidationError("language model produced no usable caption")
    return best


def caption_steps(
    lm: NgramModel,
    thetas: np.ndarray,
    language_words: Sequence[str],
    rng: np.random.Generator,
    n_candidates: int = 200,
    max_len: int = 15,
    atom_weight: float = 1.0,
) -> dict[int, str]:
    """Caption every step from its language-atom emission probabilities.

    ``thetas[:, :len(language_words)]`` are the per-step emission
    probabilities of the language atoms, in vocabulary order.
    """
    thetas = np.asarray(thetas, dtype=np.float64)
    n_lang = len(language_words)
    if thetas.ndim != 2 or thetas.shape[1] < n_lang:
        raise ValidationError(
            f"theta width {thetas.shape} too small for {n_lang} language atoms"
        )
    captions = {}
    for k in range(thetas.shape[0]):
        atom_log_probs = {
            w: float(np.log(thetas[k, i])) for i, w in enumerate(language_words)
        }
        captions[k] = " ".join(
            caption_step(lm, atom_log_probs, rng, n_candidates, max_len,
                         atom_weight)
        )
    return captions
