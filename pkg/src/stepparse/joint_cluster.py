"""Joint proposal clustering across the videos of a collection.

Region proposals from all videos are linked by two kinds of similarity
graphs: a kNN graph inside each video (Gaussian kernel on feature
distances) and bipartite kNN graphs between videos whose descriptions are
close in chi-squared distance.  A single dominant cluster is extracted by
maximizing a sum of coupled Rayleigh quotients

    sum_i  x_i' A_i x_i / x_i' x_i
  + sum_i sum_{j in N(i)}  x_i' A_ij x_j / (x_i' 1 1' x_j)

over relaxed indicator vectors x_i in [0, 1]^{n_i} with projected gradient
ascent, then rounding each x_i by a prefix sweep.  Repeating extraction
after removing the selected proposals yields a sequence of visual atoms.

The same one-cluster machinery, applied to a dense video-level similarity
matrix, separates on-topic videos from outliers.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .corpus import STOP_WORDS, ValidationError, VideoRecord, remove_stop_words

log = logging.getLogger(__name__)

POWER_TOL = 1e-8
POWER_MAX_ITER = 1000


# ---------------------------------------------------------------------------
# similarity kernels


def gaussian_similarity(dist: np.ndarray, sigma: float) -> np.ndarray:
    """exp(-d^2 / (2 sigma^2)); at sigma == 0, 1 where d == 0 and 0 elsewhere."""
    dist = np.asarray(dist, dtype=np.float64)
    if sigma == 0.0:
        return (dist == 0.0).astype(np.float64)
    return np.exp(-(dist**2) / (2.0 * sigma**2))


def chi2_distance(u: np.ndarray, v: np.ndarray) -> float:
    """0.5 * sum (u-v)^2 / (u+v) with 0/0 terms treated as zero."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValidationError(f"histogram shapes differ: {u.shape} vs {v.shape}")
    denom = u + v
    num = (u - v) ** 2
    mask = denom > 0
    return 0.5 * float(np.sum(num[mask] / denom[mask]))


def _median_offdiag(dist: np.ndarray) -> float:
    # median over unordered pairs, each counted once
    n = dist.shape[0]
    if n < 2:
        return 0.0
    iu = np.triu_indices(n, k=1)
    return float(np.median(dist[iu]))


def _knn_mask(dist: np.ndarray, k: int) -> np.ndarray:
    """Directed kNN mask over the rows of a square distance matrix.

    Self-edges excluded; distance ties resolved toward lower indices.
    """
    n = dist.shape[0]
    mask = np.zeros((n, n), dtype=bool)
    if n < 2 or k <= 0:
        return mask
    k_eff = min(k, n - 1)
    for u in range(n):
        order = np.argsort(dist[u], kind="stable")
        picked = [v for v in order if v != u][:k_eff]
        mask[u, picked] = True
    return mask


def _knn_similarity(features: np.ndarray, k: int, sigma: float | None = None
                    ) -> tuple[np.ndarray, float]:
    """Symmetric kNN similarity matrix inside one proposal pool."""
    n = features.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    dist = squareform(pdist(features)) if n > 1 else np.zeros((1, 1))
    if sigma is None:
        sigma = _median_offdiag(dist)
    sim = gaussian_similarity(dist, sigma)
    mask = _knn_mask(dist, k)
    mask |= mask.T  # keep an edge if either endpoint selects it
    out = np.where(mask, sim, 0.0)
    np.fill_diagonal(out, 0.0)
    return out, sigma


def _cross_knn_similarity(feats_a: np.ndarray, feats_b: np.ndarray, k: int,
                          sigma: float | None = None) -> tuple[np.ndarray, float]:
    """Bipartite kNN similarity between two proposal pools."""
    na, nb = feats_a.shape[0], feats_b.shape[0]
    if na == 0 or nb == 0:
        return np.zeros((na, nb)), 0.0
    dist = cdist(feats_a, feats_b)
    if sigma is None:
        sigma = float(np.median(dist))
    sim = gaussian_similarity(dist, sigma)
    ka = min(k, nb)
    kb = min(k, na)
    mask = np.zeros((na, nb), dtype=bool)
    for u in range(na):
        mask[u, np.argsort(dist[u], kind="stable")[:ka]] = True
    for v in range(nb):
        mask[np.argsort(dist[:, v], kind="stable")[:kb], v] = True
    return np.where(mask, sim, 0.0), sigma


def build_proposal_knn(video: VideoRecord, k: int = 2
                       ) -> tuple[np.ndarray, list[tuple[int, int]], float]:
    """Within-video kNN similarity graph over all proposals of *video*.

    Returns the symmetric similarity matrix, per-node (frame, proposal)
    references, and the bandwidth used.
    """
    features, refs = video.proposal_matrix()
    if features.shape[0] < k + 1:
        raise ValidationError(
            f"video {video.video_id!r}: {features.shape[0]} proposals, "
            f"need at least {k + 1} for a {k}-NN graph"
        )
    sim, sigma = _knn_similarity(features, k)
    return sim, refs, sigma


# ---------------------------------------------------------------------------
# video-level neighborhoods from description text


def description_histograms(
    collection: Sequence[VideoRecord],
    stop_words: frozenset[str] | None = STOP_WORDS,
) -> tuple[list[str], np.ndarray]:
    """L1-normalized bag-of-words rows over the union description vocabulary."""
    vocab = sorted(
        {
            tok
            for video in collection
            for tok in remove_stop_words(video.description_tokens, stop_words)
        }
    )
    index = {w: i for i, w in enumerate(vocab)}
    hist = np.zeros((len(collection), len(vocab)))
    for r, video in enumerate(collection):
        counts = Counter(remove_stop_words(video.description_tokens, stop_words))
        for w, c in counts.items():
            hist[r, index[w]] = c
        total = hist[r].sum()
        if total > 0:
            hist[r] /= total
    return vocab, hist


def chi2_distance_matrix(hist: np.ndarray) -> np.ndarray:
    n = hist.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = chi2_distance(hist[i], hist[j])
    return out


def build_video_knn(
    collection: Sequence[VideoRecord],
    k: int = 2,
    stop_words: frozenset[str] | None = STOP_WORDS,
) -> list[frozenset[int]]:
    """Symmetric kNN adjacency between videos, chi-squared on descriptions."""
    _, hist = description_histograms(collection, stop_words)
    dist = chi2_distance_matrix(hist)
    mask = _knn_mask(dist, k)
    mask |= mask.T
    return [frozenset(np.flatnonzero(mask[i])) for i in range(len(collection))]


# ---------------------------------------------------------------------------
# graph container


@dataclass
class SimilarityGraph:
    """All similarity structure needed by the joint clustering objective."""

    video_ids: list[str]
    refs: list[list[tuple[int, int]]]  # node -> (frame index, proposal index)
    intra: list[np.ndarray]  # per-video symmetric similarity
    inter: dict[tuple[int, int], np.ndarray]  # (i, j) with i < j
    neighbors: list[frozenset[int]]  # video-level adjacency

    @property
    def n_videos(self) -> int:
        return len(self.video_ids)

    def sizes(self) -> list[int]:
        return [a.shape[0] for a in self.intra]

    def inter_block(self, i: int, j: int) -> np.ndarray:
        """A_ij oriented as (nodes of i) x (nodes of j)."""
        if i < j:
            return self.inter[(i, j)]
        return self.inter[(j, i)].T


def build_similarity_graph(
    collection: Sequence[VideoRecord],
    k_proposals: int = 2,
    k_videos: int = 2,
    stop_words: frozenset[str] | None = STOP_WORDS,
) -> SimilarityGraph:
    """Assemble intra- and inter-video graphs for a whole collection.

    Videos with fewer than ``k_proposals + 1`` proposals get a degraded
    (possibly empty) graph instead of an error so that extraction can keep
    running as pools shrink.
    """
    if not collection:
        raise ValidationError("empty collection")
    pools = []
    refs = []
    for video in collection:
        feats, r = video.proposal_matrix()
        pools.append(feats)
        refs.append(r)
    if sum(p.shape[0] for p in pools) == 0:
        raise ValidationError("collection has no proposals")
    neighbors = build_video_knn(collection, k_videos, stop_words)
    return _graph_from_pools(
        [v.video_id for v in collection], pools, refs, neighbors, k_proposals
    )


def _graph_from_pools(
    video_ids: list[str],
    pools: list[np.ndarray],
    refs: list[list[tuple[int, int]]],
    neighbors: list[frozenset[int]],
    k: int,
    intra_sigma: list[float] | None = None,
    inter_sigma: dict[tuple[int, int], float] | None = None,
) -> SimilarityGraph:
    n_vid = len(video_ids)
    intra = []
    for i, feats in enumerate(pools):
        s = intra_sigma[i] if intra_sigma is not None else None
        sim, _ = _knn_similarity(feats, k, sigma=s)
        intra.append(sim)
    inter = {}
    for i in range(n_vid):
        for j in neighbors[i]:
            if j <= i:
                continue
            s = inter_sigma.get((i, j)) if inter_sigma is not None else None
            sim, _ = _cross_knn_similarity(pools[i], pools[j], k, sigma=s)
            inter[(i, j)] = sim
    return SimilarityGraph(
        video_ids=list(video_ids),
        refs=[list(r) for r in refs],
        intra=intra,
        inter=inter,
        neighbors=neighbors,
    )


# ---------------------------------------------------------------------------
# single-graph one-cluster extraction


def _power_iteration(a: np.ndarray, tol: float = POWER_TOL,
                     max_iter: int = POWER_MAX_ITER) -> np.ndarray:
    """Dominant eigenvector of a non-negative symmetric matrix.

    Uniform positive start keeps all iterates non-negative.
    """
    n = a.shape[0]
    x = np.full(n, 1.0 / np.sqrt(n))
    for _ in range(max_iter):
        y = a @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            break
        y /= norm
        if np.linalg.norm(y - x) < tol:
            return y
        x = y
    return x


def scgp_single(a: np.ndarray, tol: float = POWER_TOL,
                max_iter: int = POWER_MAX_ITER) -> np.ndarray:
    """One-cluster graph partition of a symmetric similarity matrix.

    Maximizes x'Ax / x'x over binary x restricted to the family of prefixes
    of nodes ordered by the dominant eigenvector.  Returns a 0/1 mask.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"similarity matrix must be square, got {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12):
        raise ValidationError("similarity matrix is not symmetric")
    if not a.any():
        raise ValidationError("similarity matrix is identically zero")
    x = _power_iteration(a, tol, max_iter)
    order = np.argsort(-x, kind="stable")
    best_m, best_obj = 1, -np.inf
    quad = 0.0
    for pos, w in enumerate(order):
        quad += a[w, w]
        if pos > 0:
            quad += 2.0 * a[w, order[:pos]].sum()
        obj = quad / (pos + 1)
        if obj > best_obj:
            best_obj, best_m = obj, pos + 1
    mask = np.zeros(a.shape[0], dtype=np.uint8)
    mask[order[:best_m]] = 1
    return mask


# ---------------------------------------------------------------------------
# joint objective, gradient, solver


def joint_objective(xs: Sequence[np.ndarray], graph: SimilarityGraph) -> float:
    """Coupled Rayleigh objective; terms with zero denominators contribute 0."""
    total = 0.0
    for i, a in enumerate(graph.intra):
        x = xs[i]
        den = float(x @ x)
        if den > 0.0:
            total += float(x @ a @ x) / den
    for (i, j), a in graph.inter.items():
        si = float(xs[i].sum())
        sj = float(xs[j].sum())
        if si > 0.0 and sj > 0.0:
            # both orientations of the pair contribute the same value
            total += 2.0 * float(xs[i] @ a @ xs[j]) / (si * sj)
    return total


def joint_gradient(xs: Sequence[np.ndarray], graph: SimilarityGraph
                   ) -> list[np.ndarray]:
    """Exact gradient of :func:`joint_objective` at *xs*."""
    for i, x in enumerate(xs):
        if x.shape[0] > 0 and not x.any():
            raise ValidationError(f"x for video index {i} is identically zero")
    grads = [np.zeros_like(x) for x in xs]
    for i, a in enumerate(graph.intra):
        x = xs[i]
        if x.shape[0] == 0:
            continue
        den = float(x @ x)
        ax = a @ x
        rayleigh = float(x @ ax) / den
        grads[i] += (2.0 * ax - 2.0 * rayleigh * x) / den
    for (i, j), a in graph.inter.items():
        xi, xj = xs[i], xs[j]
        si = float(xi.sum())
        sj = float(xj.sum())
        if si == 0.0 or sj == 0.0:
            continue
        num = float(xi @ a @ xj)
        r = num / (si * sj)
        grads[i] += 2.0 * (a @ xj - sj * r) / (si * sj)
        grads[j] += 2.0 * (a.T @ xi - si * r) / (si * sj)
    return grads


def _initial_relaxation(graph: SimilarityGraph) -> list[np.ndarray]:
    xs = []
    for a in graph.intra:
        n = a.shape[0]
        if n == 0:
            xs.append(np.zeros(0))
        elif not a.any():
            xs.append(np.full(n, 0.5))
        else:
            v = _power_iteration(a)
            peak = v.max()
            xs.append(v / peak if peak > 0 else np.full(n, 0.5))
    return xs


def solve_joint_cluster(
    graph: SimilarityGraph,
    eta0: float = 0.1,
    tau: float = 100.0,
    tol: float = 1e-6,
    patience: int = 20,
    max_steps: int = 5000,
) -> tuple[list[np.ndarray], list[np.ndarray], float]:
    """Maximize the joint objective and round to one cluster per video.

    Projected gradient ascent on the box [0, 1] with decaying step size
    ``eta0 / (1 + t / tau)``; stops after *patience* consecutive steps with
    improvement below *tol*.  Returns the relaxed solution, the rounded 0/1
    indicators, and the joint objective of the rounded solution.
    """
    xs = _initial_relaxation(graph)
    best_obj = joint_objective(xs, graph)
    best_xs = [x.copy() for x in xs]
    stall = 0
    for step in range(max_steps):
        grads = joint_gradient(xs, graph)
        eta = eta0 / (1.0 + step / tau)
        for i, g in enumerate(grads):
            if xs[i].shape[0] == 0:
                continue
            cand = np.clip(xs[i] + eta * g, 0.0, 1.0)
            if cand.any():
                xs[i] = cand
        obj = joint_objective(xs, graph)
        if obj > best_obj + tol:
            best_obj = obj
            best_xs = [x.copy() for x in xs]
            stall = 0
        else:
            if obj > best_obj:
                best_obj = obj
                best_xs = [x.copy() for x in xs]
            stall += 1
            if stall >= patience:
                break
    else:
        log.warning("joint cluster ascent hit max_steps=%d without settling",
                    max_steps)
    binary = round_solution(best_xs, graph)
    return best_xs, binary, joint_objective(binary, graph)


def round_solution(xs: Sequence[np.ndarray], graph: SimilarityGraph
                   ) -> list[np.ndarray]:
    """Round a relaxed solution video by video.

    For each video the nodes are ordered by relaxed weight and every prefix
    (including the empty one) is scored against the joint objective with all
    other videos held fixed; the best prefix wins, smallest on ties.
    """
    current: list[np.ndarray] = [np.asarray(x, dtype=np.float64) for x in xs]
    for i in range(graph.n_videos):
        n = current[i].shape[0]
        if n == 0:
            current[i] = np.zeros(0)
            continue
        order = np.argsort(-current[i], kind="stable")
        a = graph.intra[i]
        # fixed-side contributions: u_j = A_ij x_j, scaled by 1 / s_j
        fixed = []
        for j in graph.neighbors[i]:
            xj = current[j]
            sj = float(xj.sum())
            if xj.shape[0] == 0 or sj == 0.0:
                continue
            fixed.append((graph.inter_block(i, j) @ xj, sj))
        best_m, best_obj = 0, 0.0
        quad = 0.0
        cross = [0.0] * len(fixed)
        for pos, w in enumerate(order):
            quad += a[w, w]
            if pos > 0:
                quad += 2.0 * a[w, order[:pos]].sum()
            for t, (u, _) in enumerate(fixed):
                cross[t] += float(u[w])
            m = pos + 1
            obj = quad / m
            for t, (_, sj) in enumerate(fixed):
                obj += 2.0 * cross[t] / (m * sj)
            if obj > best_obj:
                best_obj, best_m = obj, m
        xb = np.zeros(n)
        xb[order[:best_m]] = 1.0
        current[i] = xb
    return current


# ---------------------------------------------------------------------------
# repeated extraction of visual atoms


@dataclass
class VisualAtom:
    """A cluster of region proposals treated as one visual word."""

    atom_id: int
    members: list[tuple[str, int, int]]  # (video id, frame index, proposal index)
    centroid: np.ndarray

    def video_span(self) -> int:
        return len({vid for vid, _, _ in self.members})


def _selection_quality(binary: Sequence[np.ndarray], graph: SimilarityGraph
                       ) -> tuple[float, int]:
    """Mean pairwise similarity over the selected node set.

    Cross-video pairs without a graph edge count as zero similarity, which
    penalizes selections glued together by nothing.
    """
    n_sel = int(sum(x.sum() for x in binary))
    if n_sel < 2:
        return 0.0, n_sel
    total = 0.0
    for i, a in enumerate(graph.intra):
        total += float(binary[i] @ a @ binary[i])
    for (i, j), a in graph.inter.items():
        total += 2.0 * float(binary[i] @ a @ binary[j])
    return total / (n_sel * (n_sel - 1)), n_sel


def extract_visual_atoms(
    collection: Sequence[VideoRecord],
    n_atoms: int = 20,
    k_proposals: int = 2,
    k_videos: int = 2,
    quality_floor: float = 0.1,
    stop_words: frozenset[str] | None = STOP_WORDS,
    eta0: float = 0.1,
    tau: float = 100.0,
    tol: float = 1e-6,
    patience: int = 20,
    max_steps: int = 5000,
) -> list[VisualAtom]:
    """Extract up to *n_atoms* proposal clusters by repeated joint clustering.

    After each round the selected proposals are removed and the graphs are
    rebuilt over the remaining pool with the original kernel bandwidths.
    Extraction stops early when the pool is exhausted, a selection spans
    fewer than two videos, or mean within-selection similarity drops below
    *quality_floor*.
    """
    if not collection:
        raise ValidationError("empty collection")
    pools = []
    refs = []
    for video in collection:
        feats, r = video.proposal_matrix()
        pools.append(feats)
        refs.append(list(r))
    if sum(p.shape[0] for p in pools) == 0:
        raise ValidationError("collection has no proposals")
    video_ids = [v.video_id for v in collection]
    neighbors = build_video_knn(collection, k_videos, stop_words)

    # bandwidths come from the full pools and stay fixed across rounds
    intra_sigma = []
    for feats in pools:
        n = feats.shape[0]
        d = squareform(pdist(feats)) if n > 1 else np.zeros((n, n))
        intra_sigma.append(_median_offdiag(d))
    inter_sigma = {}
    for i in range(len(pools)):
        for j in neighbors[i]:
            if j <= i:
                continue
            if pools[i].shape[0] and pools[j].shape[0]:
                inter_sigma[(i, j)] = float(np.median(cdist(pools[i], pools[j])))
            else:
                inter_sigma[(i, j)] = 0.0

    atoms: list[VisualAtom] = []
    while len(atoms) < n_atoms:
        if sum(p.shape[0] for p in pools) < 2:
            log.info("atom extraction stopped: proposal pool exhausted")
            break
        graph = _graph_from_pools(
            video_ids, pools, refs, neighbors, k_proposals,
            intra_sigma=intra_sigma, inter_sigma=inter_sigma,
        )
        if not any(a.any() for a in graph.intra) and not any(
            a.any() for a in graph.inter.values()
        ):
            log.info("atom extraction stopped: no remaining similarity edges")
            break
        _, binary, _ = solve_joint_cluster(
            graph, eta0=eta0, tau=tau, tol=tol, patience=patience,
            max_steps=max_steps,
        )
        quality, n_sel = _selection_quality(binary, graph)
        if n_sel < 2:
            log.info("atom extraction stopped: selection too small")
            break
        span = sum(1 for x in binary if x.any())
        if span < 2:
            log.info("atom extraction stopped: selection spans one video")
            break
        if quality < quality_floor:
            log.info(
                "atom extraction stopped: quality %.4f below floor %.4f",
                quality, quality_floor,
            )
            break
        members = []
        feats = []
        for i, x in enumerate(binary):
            for node in np.flatnonzero(x):
                frame_idx, prop_idx = refs[i][node]
                members.append((video_ids[i], frame_idx, prop_idx))
                feats.append(pools[i][node])
        atoms.append(
            VisualAtom(
                atom_id=len(atoms),
                members=members,
                centroid=np.mean(np.asarray(feats), axis=0),
            )
        )
        # remove the selected proposals and carry on
        for i, x in enumerate(binary):
            keep = np.flatnonzero(x == 0.0)
            pools[i] = pools[i][keep]
            refs[i] = [refs[i][t] for t in keep]
    return atoms


# ---------------------------------------------------------------------------
# outlier rejection at the video level


def filter_outliers(
    collection: Sequence[VideoRecord],
    stop_words: frozenset[str] | None = STOP_WORDS,
) -> tuple[list[str], list[str]]:
    """Split a collection into on-topic and outlier video ids.

    Builds a dense video similarity matrix ``exp(-chi2 / sigma)`` from
    description bags of words (sigma the median pairwise distance) and keeps
    the videos selected by one-cluster partitioning.
    """
    if len(collection) < 3:
        raise ValidationError(
            f"outlier filtering needs at least 3 videos, got {len(collection)}"
        )
    _, hist = description_histograms(collection, stop_words)
    dist = chi2_distance_matrix(hist)
    sigma = _median_offdiag(dist)
    if sigma == 0.0:
        sim = (dist == 0.0).astype(np.float64)
    else:
        sim = np.exp(-dist / sigma)
    np.fill_diagonal(sim, 0.0)
    mask = scgp_single(sim)
    kept = [v.video_id for v, m in zip(collection, mask) if m]
    discarded = [v.video_id for v, m in zip(collection, mask) if not m]
    return kept, discarded


# ---------------------------------------------------------------------------
# serialization helpers for atom artifacts


def visual_atoms_to_payload(atoms: Sequence[VisualAtom]) -> dict:
    return {
        "atoms": [
            {
                "atom_id": a.atom_id,
                "members": [[vid, f, p] for vid, f, p in a.members],
                "centroid": a.centroid.tolist(),
            }
            for a in atoms
        ]
    }


def visual_atoms_from_payload(payload: dict) -> list[VisualAtom]:
    atoms = []
    for obj in payload.get("atoms", []):
        atoms.append(
            VisualAtom(
                atom_id=int(obj["atom_id"]),
                members=[(str(v), int(f), int(p)) for v, f, p in obj["members"]],
                centroid=np.asarray(obj["centroid"], dtype=np.float64),
            )
        )
    return atoms
