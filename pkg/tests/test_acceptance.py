"""Top-level acceptance gates for the whole package.

Each test is one pass/fail gate with a pinned tolerance and wall-clock
budget.  Every oracle is implemented independently inside this module
(path enumeration, dense eigendecomposition, exhaustive subset search,
closed-form posterior moments) instead of reusing library internals.
"""

import itertools
import math
import time
from collections import Counter

import numpy as np
from scipy.special import betaln, gammaln, logsumexp

from stepparse.bphmm import Hyperparams, generate_synthetic, sample_ibp
from stepparse.cli import main
from stepparse.corpus import STOP_WORDS, Frame, GroundTruth, VideoRecord
from stepparse.gibbs import forward_loglik, run_chain, sample_eta, sample_theta
from stepparse.joint_cluster import (
    SimilarityGraph,
    filter_outliers,
    joint_gradient,
    joint_objective,
    scgp_single,
)
from stepparse.metrics import iou_cms, map_cms, match_labels


# ---------------------------------------------------------------------------
# 1. analytic gradient of the coupled clustering objective


def _random_graph(rng: np.random.Generator, sizes: list[int]) -> SimilarityGraph:
    intra = []
    for n in sizes:
        a = rng.random((n, n))
        a = (a + a.T) / 2.0
        np.fill_diagonal(a, 0.0)
        intra.append(a)
    inter = {}
    neighbors = [set() for _ in sizes]
    for i in range(len(sizes)):
        for j in range(i + 1, len(sizes)):
            if rng.random() < 0.8 or not neighbors[i]:
                inter[(i, j)] = rng.random((sizes[i], sizes[j]))
                neighbors[i].add(j)
                neighbors[j].add(i)
    return SimilarityGraph(
        video_ids=[f"v{i}" for i in range(len(sizes))],
        refs=[[(t, 0) for t in range(n)] for n in sizes],
        intra=intra,
        inter=inter,
        neighbors=[frozenset(s) for s in neighbors],
    )


def test_01_gradient_matches_central_differences():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    h = 1e-5
    worst = 0.0
    for _ in range(100):
        n_videos = int(rng.integers(2, 5))
        sizes = [int(s) for s in rng.integers(2, 6, size=n_videos)]
        assert sum(sizes) <= 20
        graph = _random_graph(rng, sizes)
        xs = [rng.uniform(0.05, 1.0, size=n) for n in sizes]
        analytic = np.concatenate(joint_gradient(xs, graph))
        fd = np.empty_like(analytic)
        pos = 0
        for i, n in enumerate(sizes):
            for t in range(n):
                plus = [x.copy() for x in xs]
                minus = [x.copy() for x in xs]
                plus[i][t] += h
                minus[i][t] -= h
                fd[pos] = (joint_objective(plus, graph)
                           - joint_objective(minus, graph)) / (2.0 * h)
                pos += 1
        worst = max(worst,
                    np.abs(analytic - fd).max() / np.abs(fd).max())
    elapsed = time.perf_counter() - start
    assert worst < 1e-4, f"max relative gradient error {worst}"
    assert elapsed < 10.0, f"took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# 2. one-cluster partition vs exhaustive subset search


def _all_subset_objectives(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Objective of every non-empty subset, as (masks, values)."""
    n = a.shape[0]
    masks = np.array(
        [[(s >> b) & 1 for b in range(n)] for s in range(1, 2 ** n)],
        dtype=np.float64,
    )
    quad = np.einsum("si,ij,sj->s", masks, a, masks)
    return masks, quad / masks.sum(axis=1)


def _eigh_prefix_best(a: np.ndarray) -> float:
    """Best objective over prefixes of the dominant-eigenvector order."""
    w, v = np.linalg.eigh(a)
    vec = v[:, np.argmax(w)]
    if vec.sum() < 0.0:
        vec = -vec
    order = np.argsort(-vec, kind="stable")
    best = -np.inf
    for m in range(1, a.shape[0] + 1):
        idx = order[:m]
        best = max(best, a[np.ix_(idx, idx)].sum() / m)
    return best


def test_02_scgp_matches_exhaustive_subset_search():
    start = time.perf_counter()
    rng = np.random.default_rng(202)
    for trial in range(50):
        n = int(rng.integers(4, 13))
        a = rng.random((n, n))
        a = (a + a.T) / 2.0
        if trial % 2 == 0:
            np.fill_diagonal(a, 0.0)
        mask = scgp_single(a)
        idx = np.flatnonzero(mask)
        achieved = a[np.ix_(idx, idx)].sum() / idx.size
        family_best = _eigh_prefix_best(a)
        assert abs(achieved - family_best) <= 1e-9
        _, values = _all_subset_objectives(a)
        assert achieved <= values.max() + 1e-9
    # planted cliques must come back exactly, and be the global optimum
    for trial in range(10):
        n = int(rng.integers(10, 13))
        size = int(rng.integers(4, 7))
        clique = rng.choice(n, size=size, replace=False)
        a = np.full((n, n), 0.05)
        a[np.ix_(clique, clique)] = 0.9
        a = (a + a.T) / 2.0
        np.fill_diagonal(a, 0.0)
        mask = scgp_single(a)
        assert set(np.flatnonzero(mask)) == set(clique.tolist())
        masks, values = _all_subset_objectives(a)
        assert np.array_equal(masks[np.argmax(values)], mask)
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0, f"took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# 3. forward log-likelihood vs exhaustive path enumeration


def test_03_forward_matches_path_enumeration():
    start = time.perf_counter()
    rng = np.random.default_rng(303)
    for _ in range(100):
        k = int(rng.integers(2, 7))
        t_max = int(math.log(1e5) / math.log(k))
        t_len = int(rng.integers(1, t_max + 1))
        d = int(rng.integers(1, 5))
        thetas = rng.uniform(0.05, 0.95, size=(k, d))
        pi = rng.dirichlet(np.ones(k), size=k)
        pi0 = rng.dirichlet(np.ones(k))
        y = rng.integers(0, 2, size=(t_len, d)).astype(np.float64)
        emit = y @ np.log(thetas).T + (1.0 - y) @ np.log1p(-thetas).T
        paths = np.array(list(itertools.product(range(k), repeat=t_len)))
        assert paths.shape[0] <= 1e5
        logp = np.log(pi0)[paths[:, 0]] + emit[0, paths[:, 0]]
        for t in range(1, t_len):
            logp += np.log(pi)[paths[:, t - 1], paths[:, t]]
            logp += emit[t, paths[:, t]]
        oracle = logsumexp(logp)
        assert abs(forward_loglik(y, thetas, pi, pi0) - oracle) < 1e-10
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0, f"took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# 4. conjugate updates match closed-form posterior moments


def test_04_conjugate_updates_match_posterior_moments():
    start = time.perf_counter()
    n_draws = 100_000
    rng = np.random.default_rng(404)
    # emission update: fixed assignment with a never-visited step
    a0, b0 = 1.5, 2.5
    y = np.array([[1, 1], [1, 0], [0, 0], [1, 1], [0, 1], [1, 0]],
                 dtype=np.uint8)
    z = np.array([0, 0, 0, 1, 1, 2])
    ones = np.array([[2.0, 1.0], [1.0, 2.0], [1.0, 0.0], [0.0, 0.0]])
    totals = np.array([3.0, 2.0, 1.0, 0.0])
    a = a0 + ones
    b = b0 + totals[:, None] - ones
    sums = np.zeros_like(a)
    for _ in range(n_draws):
        sums += sample_theta([y], [z], 4, a0, b0, rng)
    exact_mean = a / (a + b)
    exact_var = a * b / ((a + b) ** 2 * (a + b + 1.0))
    err = np.abs(sums / n_draws - exact_mean)
    assert (err < 3.0 * np.sqrt(exact_var / n_draws)).all()

    # transition update: gamma moments with the self-transition boost
    alpha, kappa = 1.0, 25.0
    z_path = np.array([0, 0, 1, 1, 2, 2, 0])
    f_row = np.ones(3, dtype=np.uint8)
    counts = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [1.0, 0.0, 1.0]])
    shape = alpha + counts + kappa * np.eye(3)
    sums = np.zeros((3, 3))
    for _ in range(n_draws):
        sums += sample_eta(z_path, f_row, alpha, kappa, rng)
    err = np.abs(sums / n_draws - shape)
    assert (err < 3.0 * np.sqrt(shape / n_draws)).all()
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0, f"took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# 5. buffet-prior feature counts match the harmonic-sum expectation


def test_05_ibp_feature_count_matches_harmonic_sum():
    start = time.perf_counter()
    n_draws = 100_000
    rng = np.random.default_rng(505)
    counts = np.empty(n_draws)
    for i in range(n_draws):
        counts[i] = sample_ibp(10, 2.0, 1.0, rng).shape[1]
    expected = 2.0 * sum(1.0 / i for i in range(1, 11))
    assert abs(expected - 5.858) < 1e-3
    se = counts.std(ddof=1) / math.sqrt(n_draws)
    assert abs(counts.mean() - expected) < 3.0 * se
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0, f"took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# 6. sampler posterior over ownership matches exact enumeration


def _ibp_class_log_prior(f: np.ndarray, gamma: float, beta: float) -> float:
    n, k = f.shape
    cols = [tuple(c) for c in f.T]
    lp = k * math.log(gamma * beta)
    for reps in Counter(cols).values():
        lp -= math.lgamma(reps + 1)
    lp -= gamma * sum(beta / (beta + i - 1.0) for i in range(1, n + 1))
    for m in f.sum(axis=0):
        lp += (math.lgamma(m) + math.lgamma(n - m + beta)
               - math.lgamma(n + beta))
    return lp


def _path_family_loglik(ys: list[np.ndarray], f: np.ndarray,
                        hyper: Hyperparams) -> float:
    """log p(ys | F) with paths, emissions and transitions summed out."""
    k = f.shape[1]
    d = ys[0].shape[1]
    actives = [np.flatnonzero(row) for row in f]
    terms = []
    for combo in itertools.product(
        *[itertools.product(act.tolist(), repeat=y.shape[0])
          for act, y in zip(actives, ys)]
    ):
        lt = 0.0
        for act, path in zip(actives, combo):
            lt -= math.log(act.size)
            trans = Counter(zip(path[:-1], path[1:]))
            row_total = act.size * hyper.alpha + hyper.kappa
            out = Counter(p for p, _ in trans.elements())
            for j, n_out in out.items():
                lt += math.lgamma(row_total) - math.lgamma(row_total + n_out)
            for (j, l), c in trans.items():
                conc = hyper.alpha + (hyper.kappa if j == l else 0.0)
                lt += math.lgamma(conc + c) - math.lgamma(conc)
        n1 = np.zeros((k, d))
        n0 = np.zeros((k, d))
        for y, path in zip(ys, combo):
            for t, step in enumerate(path):
                n1[step] += y[t]
                n0[step] += 1.0 - y[t]
        lt += float(np.sum(betaln(hyper.a0 + n1, hyper.b0 + n0)
                           - betaln(hyper.a0, hyper.b0)))
        terms.append(lt)
    return float(logsumexp(terms))


def test_06_tiny_posterior_matches_enumeration():
    start = time.perf_counter()
    hyper = Hyperparams(gamma=2.0, beta=1.0, alpha=1.0, kappa=2.0,
                        a0=1.0, b0=1.0)
    ys = [
        np.array([[1, 0], [1, 0], [0, 1]], dtype=np.uint8),
        np.array([[0, 1], [0, 1], [1, 0]], dtype=np.uint8),
    ]
    # every ownership matrix with K <= 2 and no empty video
    classes = {}
    for k in (1, 2):
        for combo in itertools.combinations_with_replacement(
            [(1, 1), (1, 0), (0, 1)], k
        ):
            f = np.array(combo, dtype=np.uint8).T
            if f.sum(axis=1).min() > 0:
                classes[tuple(sorted(combo))] = f
    assert len(classes) == 5
    log_post = {
        sig: _ibp_class_log_prior(f, hyper.gamma, hyper.beta)
        + _path_family_loglik(ys, f, hyper)
        for sig, f in classes.items()
    }
    norm = logsumexp(list(log_post.values()))
    exact = {sig: math.exp(lp - norm) for sig, lp in log_post.items()}

    burn_in, keep = 2_000, 100_000
    visits: Counter = Counter()

    def record(sweep: int, state) -> None:
        if sweep >= burn_in:
            visits[tuple(sorted(map(tuple, state.f.T.tolist())))] += 1

    run_chain(ys, hyper, n_sweeps=burn_in + keep, seed=606,
              max_steps=2, report="last", callback=record)
    assert sum(visits.values()) == keep
    assert set(visits) <= set(exact)
    tv = 0.5 * sum(abs(visits.get(sig, 0) / keep - p)
                   for sig, p in exact.items())
    elapsed = time.perf_counter() - start
    assert tv < 0.05, f"total variation {tv:.4f}"
    assert elapsed < 300.0, f"took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# 7. step recovery on separated synthetic data


def _runs_to_segments(z: np.ndarray) -> list[tuple[int, int, str]]:
    segments = []
    start = 0
    for t in range(1, len(z) + 1):
        if t == len(z) or z[t] != z[start]:
            segments.append((start, t, f"step{int(z[start])}"))
            start = t
    return segments


def test_07_synthetic_recovery():
    start = time.perf_counter()
    hyper = Hyperparams()
    gen_rng = np.random.default_rng(777)
    thetas = gen_rng.beta(0.2, 0.2, size=(4, 30))
    ys, truth = generate_synthetic(8, 100, 30, hyper, gen_rng,
                                   n_features=4, thetas=thetas)
    gt = GroundTruth(segments={
        f"v{i}": _runs_to_segments(truth.z[i]) for i in range(8)
    })
    total_frames = sum(z.size for z in truth.z)
    good = 0
    for chain in range(10):
        state, _ = run_chain(ys, hyper, n_sweeps=500, seed=7000 + chain,
                             report="best")
        confusion = np.zeros((state.n_features, 4))
        for i in range(8):
            np.add.at(confusion, (state.z[i], truth.z[i]), 1.0)
        accuracy = match_labels(confusion).score / total_frames
        iou = iou_cms({f"v{i}": state.z[i] for i in range(8)}, gt)
        if (accuracy >= 0.8 and abs(state.n_features - 4) <= 1
                and iou >= 0.7):
            good += 1
    elapsed = time.perf_counter() - start
    assert good >= 8, f"only {good}/10 chains recovered the steps"
    assert elapsed < 600.0, f"took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# 8. metric sanity: permutation invariance, brute-force matching, hand case


def test_08_metric_sanity():
    start = time.perf_counter()
    # label-permuted perfect predictions score 1.0 on both metrics
    gt = GroundTruth(segments={
        "u": [(0, 3, "a"), (3, 5, "b")],
        "v": [(0, 2, "c"), (2, 6, "a")],
    })
    remap = {"a": 2, "b": 0, "c": 1}
    predictions = {}
    posteriors = {}
    for vid, segs in gt.segments.items():
        t_len = segs[-1][1]
        z = np.empty(t_len, dtype=np.int64)
        for s, e, name in segs:
            z[s:e] = remap[name]
        predictions[vid] = z
        post = np.zeros((t_len, 3))
        post[np.arange(t_len), z] = 1.0
        posteriors[vid] = post
    assert iou_cms(predictions, gt) == 1.0
    assert map_cms(posteriors, predictions, gt) == 1.0

    # matching equals permutation brute force up to 7x7
    rng = np.random.default_rng(808)
    for shape in [(2, 2), (3, 5), (5, 3), (6, 7), (7, 4), (7, 7)]:
        for _ in range(3):
            matrix = rng.random(shape)
            rows, cols = shape
            if rows <= cols:
                brute = max(
                    sum(matrix[r, p[r]] for r in range(rows))
                    for p in itertools.permutations(range(cols), rows)
                )
            else:
                brute = max(
                    sum(matrix[p[c], c] for c in range(cols))
                    for p in itertools.permutations(range(rows), cols)
                )
            assert abs(match_labels(matrix).score - brute) < 1e-12

    # one step everywhere vs two equal halves: IoU (0.5 + 0) / 2
    gt_half = GroundTruth(segments={"w": [(0, 4, "a"), (4, 8, "b")]})
    assert iou_cms({"w": np.zeros(8, dtype=np.int64)}, gt_half) == 0.25
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# 9. end-to-end pipeline determinism


def test_09_pipeline_byte_determinism(tmp_path):
    start = time.perf_counter()
    data = tmp_path / "data"
    rc = main(["synth", "--videos", "5", "--frames", "24", "--steps", "3",
               "--lang-dims", "6", "--vis-dims", "3", "--seed", "11",
               "-O", str(data)])
    assert rc == 0
    overrides = ["--set", "sweeps=60", "--set", "n_visual_atoms=4",
                 "--set", "n_language_atoms=12"]
    outs = []
    for name in ("run_a", "run_b"):
        out = tmp_path / name
        rc = main(["pipeline", str(data / "dataset.jsonl"),
                   "--ground-truth", str(data / "ground_truth.jsonl"),
                   "-O", str(out), "--seed", "11", *overrides])
        assert rc == 0
        outs.append(out)
    files = sorted(p.name for p in outs[0].iterdir())
    assert "model_state.json" in files and "summary.json" in files
    for name in files:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
    elapsed = time.perf_counter() - start
    assert elapsed < 600.0, f"took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# 10. outlier filtering equals exhaustive subset search


def _description_video(vid: str, words: str) -> VideoRecord:
    frame = Frame(index=0, subtitle_tokens=[], proposals=np.zeros((0, 3)))
    return VideoRecord(video_id=vid, description_tokens=words.split(),
                       frames=[frame])


def test_10_outlier_filter_matches_subset_search():
    start = time.perf_counter()
    variants = ["buttermilk", "banana", "blueberry", "chocolate",
                "vanilla", "cinnamon", "honey", "maple"]
    texts = [f"fluffy pancakes recipe griddle {v}" for v in variants]
    texts.append("repair vintage motorcycle carburetor rust")
    texts.append("tomato seedlings garden soil compost")
    for text in texts:
        assert not set(text.split()) & STOP_WORDS
    videos = [_description_video(f"v{i}", t) for i, t in enumerate(texts)]

    kept, discarded = filter_outliers(videos)
    assert kept == [f"v{i}" for i in range(8)]
    assert discarded == ["v8", "v9"]

    # independent exhaustive search over all non-empty subsets
    vocab = sorted({w for t in texts for w in t.split()})
    hist = np.zeros((10, len(vocab)))
    for i, text in enumerate(texts):
        for w in text.split():
            hist[i, vocab.index(w)] += 1.0
        hist[i] /= hist[i].sum()
    chi2 = np.zeros((10, 10))
    for i in range(10):
        for j in range(10):
            num = (hist[i] - hist[j]) ** 2
            den = hist[i] + hist[j]
            chi2[i, j] = 0.5 * np.sum(num[den > 0] / den[den > 0])
    off = chi2[~np.eye(10, dtype=bool)]
    sim = np.exp(-chi2 / np.median(off))
    np.fill_diagonal(sim, 0.0)
    best_val, best_subset = -np.inf, None
    for bits in range(1, 2 ** 10):
        members = [i for i in range(10) if (bits >> i) & 1]
        val = sim[np.ix_(members, members)].sum() / len(members)
        if val > best_val:
            best_val, best_subset = val, members
    assert [f"v{i}" for i in best_subset] == kept
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"took {elapsed:.1f}s"
