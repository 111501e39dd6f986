"""Command line front end.

Subcommands mirror the pipeline stages (atoms, cluster, filter, represent,
parse, caption, eval) plus synthetic data generation and an end-to-end
``pipeline`` driver with stage checkpointing.  Exit codes: 0 on success,
2 for invalid inputs or arguments, 3 for unexpected runtime failures.

All artifacts are canonical JSON (or CSV for sampler traces), so rerunning
a command with the same inputs and seed reproduces files byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import traceback
from pathlib import Path

import numpy as np

from . import captioner, gibbs, joint_cluster, lang_atoms, metrics, representation
from .config import PipelineConfig
from .corpus import (
    STOP_WORDS,
    GroundTruth,
    ValidationError,
    load_dataset,
    load_ground_truth,
    load_results,
    save_dataset,
    save_ground_truth,
    save_results,
)
from .bphmm import ModelState, synthesize_corpus

log = logging.getLogger("stepparse")

PIPELINE_STAGES = (
    "filter", "atoms", "cluster", "represent", "parse", "caption", "eval",
)


# ---------------------------------------------------------------------------
# shared option handling


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[],
        metavar="KEY=VALUE", help="override one config field (repeatable)",
    )
    parser.add_argument("--seed", type=int, help="master random seed")
    parser.add_argument("--threads", type=int, help="compute thread budget")
    parser.add_argument("--verbose", action="store_true",
                        help="log stage progress to stderr")
    parser.add_argument("--print-config", action="store_true",
                        help="print the effective config and exit")


def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = (PipelineConfig.from_file(args.config) if args.config
           else PipelineConfig())
    for item in args.overrides:
        if "=" not in item:
            raise ValidationError(f"--set needs KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        cfg.set_field(key.strip(), raw)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    # per-command convenience flags map onto config fields
    for flag, field in (
        ("k", None), ("sweeps", "sweeps"), ("chains", "chains"),
        ("report", "report"), ("max_steps", "max_steps"),
        ("frame_stride", "frame_stride"), ("quality_floor", "quality_floor"),
        ("knn_proposals", "knn_proposals"), ("knn_videos", "knn_videos"),
    ):
        if field and getattr(args, flag, None) is not None:
            setattr(cfg, field, getattr(args, flag))
    if getattr(args, "no_stopwords", False):
        cfg.use_stopwords = False
    cfg.validate()
    if cfg.threads > 1:
        try:
            import numba

            numba.set_num_threads(cfg.threads)
        except Exception:  # pragma: no cover - best effort only
            log.debug("could not apply thread budget", exc_info=True)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")
    return cfg


def _stop_words(cfg: PipelineConfig) -> frozenset[str] | None:
    return STOP_WORDS if cfg.use_stopwords else None


def _write(path: Path, kind: str, payload: dict, verbose_label: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    save_results(path, kind, payload)
    log.info("wrote %s to %s", verbose_label, path)


# ---------------------------------------------------------------------------
# stage implementations (shared by subcommands and the pipeline driver)


def stage_filter(videos, cfg: PipelineConfig) -> tuple[list, dict]:
    kept_ids, discarded = joint_cluster.filter_outliers(videos, _stop_words(cfg))
    kept = [v for v in videos if v.video_id in set(kept_ids)]
    return kept, {"kept": kept_ids, "discarded": discarded}


def stage_atoms(videos, other_collections, cfg: PipelineConfig) -> tuple[list, dict]:
    atoms = lang_atoms.discover_language_atoms(
        videos, other_collections, k=cfg.n_language_atoms,
        stop_words=_stop_words(cfg),
    )
    payload = {"atoms": [{"word": a.word, "score": a.score} for a in atoms]}
    return atoms, payload


def stage_cluster(videos, cfg: PipelineConfig) -> tuple[list, dict]:
    atoms = joint_cluster.extract_visual_atoms(
        videos,
        n_atoms=cfg.n_visual_atoms,
        k_proposals=cfg.knn_proposals,
        k_videos=cfg.knn_videos,
        quality_floor=cfg.quality_floor,
        stop_words=_stop_words(cfg),
        eta0=cfg.ascent_step,
        tau=cfg.ascent_decay,
        tol=cfg.ascent_tol,
        patience=cfg.ascent_patience,
        max_steps=cfg.ascent_max_steps,
    )
    return atoms, joint_cluster.visual_atoms_to_payload(atoms)


def stage_represent(videos, language, visual, cfg: PipelineConfig
                    ) -> tuple[representation.AtomVocabulary, dict, dict]:
    vocab = representation.build_vocabulary(language, visual)
    membership = representation.membership_from_atoms(visual, vocab)
    matrices = representation.represent_collection(
        videos, vocab, membership, frame_stride=cfg.frame_stride
    )
    payload = {
        "vocabulary": vocab.to_payload(),
        "frame_stride": cfg.frame_stride,
        **representation.representation_to_payload(matrices),
    }
    return vocab, matrices, payload


def stage_parse(matrices: dict, cfg: PipelineConfig, seed: int
                ) -> tuple[ModelState, dict, dict, dict, str]:
    video_order = sorted(matrices)
    ys = [matrices[vid] for vid in video_order]
    state, diags, best_chain = gibbs.run_chains(
        ys,
        cfg.hyperparams(),
        n_sweeps=cfg.sweeps,
        seed=seed,
        n_chains=cfg.chains,
        max_steps=cfg.max_steps or None,
        report=cfg.report,
    )
    state_payload = {
        "video_order": video_order,
        "best_chain": best_chain,
        **state.to_payload(),
    }
    segmentation = {
        "n_steps": state.n_features,
        "videos": {
            vid: state.z[i].tolist() for i, vid in enumerate(video_order)
        },
    }
    posteriors = {"videos": {}}
    for i, vid in enumerate(video_order):
        active = state.active(i)
        probs = np.zeros((matrices[vid].shape[0], state.n_features))
        if matrices[vid].shape[0] and active.size:
            pi = state.pi(i)[np.ix_(active, active)]
            pi0 = np.full(active.size, 1.0 / active.size)
            probs[:, active] = gibbs.state_marginals(
                matrices[vid], state.thetas[active], pi, pi0
            )
        posteriors["videos"][vid] = probs.tolist()
    return (state, state_payload, segmentation, posteriors,
            diags[best_chain].to_csv())


def stage_caption(state: ModelState, vocab: representation.AtomVocabulary,
                  videos, cfg: PipelineConfig, seed: int) -> dict:
    sentences = [
        f.subtitle_tokens for v in videos for f in v.frames if f.subtitle_tokens
    ]
    lm = captioner.train_lm(sentences, order=cfg.lm_order, lam=cfg.lm_lambda)
    rng = np.random.default_rng(seed)
    captions = captioner.caption_steps(
        lm, state.thetas, vocab.language, rng,
        n_candidates=cfg.caption_candidates,
        max_len=cfg.caption_max_len,
        atom_weight=cfg.caption_atom_weight,
    )
    return {"captions": {str(k): text for k, text in sorted(captions.items())}}


def stage_eval(segmentation: dict, posteriors: dict | None,
               gt: GroundTruth) -> dict:
    predictions = {
        vid: np.asarray(z, dtype=np.int64)
        for vid, z in segmentation["videos"].items()
    }
    post = None
    if posteriors is not None:
        post = {
            vid: np.asarray(rows, dtype=np.float64)
            for vid, rows in posteriors["videos"].items()
        }
    report = metrics.evaluate(predictions, gt, post)
    return report.to_payload()


# ---------------------------------------------------------------------------
# subcommand handlers


def cmd_atoms(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if args.print_config:
        print(cfg.to_text(), end="")
        return 0
    if args.k is not None:
        cfg.n_language_atoms = args.k
        cfg.validate()
    videos = load_dataset(args.dataset, cfg.max_proposals)
    others = [load_dataset(p, cfg.max_proposals) for p in args.idf_corpus]
    atoms, payload = stage_atoms(videos, others, cfg)
    for atom in atoms:
        print(f"{atom.word}\t{atom.score:.6f}")
    if args.output:
        _write(Path(args.output), "language_atoms", payload, "language atoms")
    return 0


def cmd_cluster(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if args.print_config:
        print(cfg.to_text(), end="")
        return 0
    if args.k is not None:
        cfg.n_visual_atoms = args.k
        cfg.validate()
    videos = load_dataset(args.dataset, cfg.max_proposals)
    atoms, payload = stage_cluster(videos, cfg)
    for atom in atoms:
        print(f"atom {atom.atom_id}: {len(atom.members)} proposals across "
              f"{atom.video_span()} videos")
    if args.output:
        _write(Path(args.output), "visual_atoms", payload, "visual atoms")
    return 0


def cmd_filter(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if args.print_config:
        print(cfg.to_text(), end="")
        return 0
    videos = load_dataset(args.dataset, cfg.max_proposals)
    _, payload = stage_filter(videos, cfg)
    print("kept:", " ".join(payload["kept"]))
    print("discarded:", " ".join(payload["discarded"]) or "-")
    if args.output:
        _write(Path(args.output), "outlier_filter", payload, "filter decision")
    return 0


def cmd_represent(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if args.print_config:
        print(cfg.to_text(), end="")
        return 0
    videos = load_dataset(args.dataset, cfg.max_proposals)
    lang_payload = load_results(args.language_atoms, "language_atoms")
    language = [
        lang_atoms.LanguageAtom(word=o["word"], score=float(o["score"]))
        for o in lang_payload["atoms"]
    ]
    visual = joint_cluster.visual_atoms_from_payload(
        load_results(args.visual_atoms, "visual_atoms")
    )
    vocab, matrices, payload = stage_represent(videos, language, visual, cfg)
    print(f"vocabulary: {vocab.n_language} language + {vocab.n_visual} visual atoms")
    for vid in sorted(matrices):
        mat = matrices[vid]
        print(f"{vid}: {mat.shape[0]} frames, {int(mat.sum())} active bits")
    if args.output:
        _write(Path(args.output), "representation", payload, "representation")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if args.print_config:
        print(cfg.to_text(), end="")
        return 0
    videos, gt, state = synthesize_corpus(
        n_videos=args.videos,
        n_frames=args.frames,
        n_steps=args.steps,
        n_lang=args.lang_dims,
        n_vis=args.vis_dims,
        hyper=cfg.hyperparams(),
        seed=cfg.seed,
    )
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(out / "dataset.jsonl", videos)
    save_ground_truth(out / "ground_truth.jsonl", gt)
    save_results(out / "truth.json", "model_state", state.to_payload())
    print(f"wrote {len(videos)} videos x {args.frames} frames to {out}")
    return 0


def cmd_parse(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if args.print_config:
        print(cfg.to_text(), end="")
        return 0
    rep_payload = load_results(args.representation, "representation")
    matrices = representation.representation_from_payload(rep_payload)
    state, state_payload, segmentation, posteriors, diag_csv = stage_parse(
        matrices, cfg, cfg.seed
    )
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "model_state.json", "model_state", state_payload, "model state")
    _write(out / "segmentation.json", "segmentation", segmentation, "segmentation")
    _write(out / "posteriors.json", "posteriors", posteriors, "posteriors")
    (out / "diagnostics.csv").write_text(diag_csv)
    print(f"parsed {len(matrices)} videos into {state.n_features} steps "
          f"(chain {state_payload['best_chain']})")
    return 0


def cmd_caption(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if args.print_config:
        print(cfg.to_text(), end="")
        return 0
    state_payload = load_results(args.model_state, "model_state")
    state = ModelState.from_payload(state_payload)
    rep_payload = load_results(args.representation, "representation")
    vocab = representation.AtomVocabulary.from_payload(rep_payload["vocabulary"])
    videos = load_dataset(args.dataset, cfg.max_proposals)
    payload = stage_caption(state, vocab, videos, cfg, cfg.seed)
    for step, text in payload["captions"].items():
        print(f"step {step}: {text}")
    if args.output:
        _write(Path(args.output), "captions", payload, "captions")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if args.print_config:
        print(cfg.to_text(), end="")
        return 0
    segmentation = load_results(args.segmentation, "segmentation")
    gt = load_ground_truth(args.ground_truth)
    posteriors = None
    if args.posteriors:
        posteriors = load_results(args.posteriors, "posteriors")
    payload = stage_eval(segmentation, posteriors, gt)
    print(f"iou_cms: {payload['iou_cms']:.4f}")
    if payload["map_cms"] is not None:
        print(f"map_cms: {payload['map_cms']:.4f}")
    if args.output:
        _write(Path(args.output), "metrics", payload, "metrics")
    return 0


# ---------------------------------------------------------------------------
# end-to-end pipeline with checkpointing


def _fingerprint(cfg: PipelineConfig, dataset: Path,
                 gt_path: Path | None) -> str:
    h = hashlib.sha256()
    h.update(cfg.to_text().encode())
    for path in (dataset, gt_path):
        if path is None:
            continue
        if not path.is_file():
            raise ValidationError(f"{path}: no such file")
        h.update(path.read_bytes())
    return h.hexdigest()


def cmd_pipeline(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if args.print_config:
        print(cfg.to_text(), end="")
        return 0
    dataset_path = Path(args.dataset)
    gt_path = Path(args.ground_truth) if args.ground_truth else None
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    fingerprint = _fingerprint(cfg, dataset_path, gt_path)
    manifest_path = out / "manifest.json"
    completed: set[str] = set()
    if args.resume and manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        if manifest.get("fingerprint") != fingerprint:
            raise ValidationError(
                f"{manifest_path}: checkpoints belong to different inputs; "
                f"rerun without --resume or use a fresh output directory"
            )
        completed = set(manifest.get("completed", []))

    def checkpoint(stage: str) -> None:
        completed.add(stage)
        manifest_path.write_text(json.dumps(
            {"fingerprint": fingerprint,
             "completed": [s for s in PIPELINE_STAGES if s in completed]},
            sort_keys=True, separators=(",", ":"),
        ) + "\n")

    videos = load_dataset(dataset_path, cfg.max_proposals)
    gt = load_ground_truth(gt_path) if gt_path else None
    others = [load_dataset(p, cfg.max_proposals) for p in args.idf_corpus]
    seed_seq = np.random.SeedSequence(cfg.seed)
    stage_seeds = {
        name: int(child.generate_state(1)[0])
        for name, child in zip(PIPELINE_STAGES, seed_seq.spawn(len(PIPELINE_STAGES)))
    }

    # 1. outlier filtering
    if "filter" in completed:
        filt = load_results(out / "filter.json", "outlier_filter")
        kept_set = set(filt["kept"])
        kept = [v for v in videos if v.video_id in kept_set]
    else:
        kept, filt = stage_filter(videos, cfg)
        _write(out / "filter.json", "outlier_filter", filt, "filter decision")
        checkpoint("filter")
    log.info("filter: kept %d of %d videos", len(kept), len(videos))

    # 2. language atoms
    if "atoms" in completed:
        lang_payload = load_results(out / "language_atoms.json", "language_atoms")
        language = [
            lang_atoms.LanguageAtom(word=o["word"], score=float(o["score"]))
            for o in lang_payload["atoms"]
        ]
    else:
        language, lang_payload = stage_atoms(kept, others, cfg)
        _write(out / "language_atoms.json", "language_atoms", lang_payload,
               "language atoms")
        checkpoint("atoms")
    log.info("atoms: %d language atoms", len(language))

    # 3. visual atoms
    if "cluster" in completed:
        visual = joint_cluster.visual_atoms_from_payload(
            load_results(out / "visual_atoms.json", "visual_atoms")
        )
    else:
        visual, vis_payload = stage_cluster(kept, cfg)
        _write(out / "visual_atoms.json", "visual_atoms", vis_payload,
               "visual atoms")
        checkpoint("cluster")
    log.info("cluster: %d visual atoms", len(visual))

    # 4. representation
    if "represent" in completed:
        rep_payload = load_results(out / "representation.json", "representation")
        vocab = representation.AtomVocabulary.from_payload(
            rep_payload["vocabulary"]
        )
        matrices = representation.representation_from_payload(rep_payload)
    else:
        vocab, matrices, rep_payload = stage_represent(kept, language, visual, cfg)
        _write(out / "representation.json", "representation", rep_payload,
               "representation")
        checkpoint("represent")

    # 5. temporal parsing
    if "parse" in completed:
        state_payload = load_results(out / "model_state.json", "model_state")
        state = ModelState.from_payload(state_payload)
        segmentation = load_results(out / "segmentation.json", "segmentation")
        posteriors = load_results(out / "posteriors.json", "posteriors")
    else:
        state, state_payload, segmentation, posteriors, diag_csv = stage_parse(
            matrices, cfg, stage_seeds["parse"]
        )
        _write(out / "model_state.json", "model_state", state_payload,
               "model state")
        _write(out / "segmentation.json", "segmentation", segmentation,
               "segmentation")
        _write(out / "posteriors.json", "posteriors", posteriors, "posteriors")
        (out / "diagnostics.csv").write_text(diag_csv)
        checkpoint("parse")
    log.info("parse: %d steps", segmentation["n_steps"])

    # 6. captions
    if "caption" in completed:
        captions = load_results(out / "captions.json", "captions")
    else:
        captions = stage_caption(state, vocab, kept, cfg, stage_seeds["caption"])
        _write(out / "captions.json", "captions", captions, "captions")
        checkpoint("caption")

    # 7. evaluation (only with ground truth)
    metrics_payload = None
    if gt is not None:
        parsed_ids = set(segmentation["videos"])
        covered = {v: s for v, s in gt.segments.items() if v in parsed_ids}
        if not covered:
            raise ValidationError("ground truth covers no parsed videos")
        if "eval" in completed:
            metrics_payload = load_results(out / "metrics.json", "metrics")
        else:
            metrics_payload = stage_eval(
                segmentation, posteriors, GroundTruth(segments=covered)
            )
            _write(out / "metrics.json", "metrics", metrics_payload, "metrics")
            checkpoint("eval")

    summary = {
        "videos_total": len(videos),
        "videos_kept": len(kept),
        "n_language_atoms": len(language),
        "n_visual_atoms": len(visual),
        "n_steps": segmentation["n_steps"],
        "iou_cms": metrics_payload["iou_cms"] if metrics_payload else None,
        "map_cms": metrics_payload["map_cms"] if metrics_payload else None,
    }
    save_results(out / "summary.json", "pipeline_summary", summary)
    print(f"kept {len(kept)}/{len(videos)} videos, "
          f"{len(language)} language atoms, {len(visual)} visual atoms, "
          f"{segmentation['n_steps']} steps")
    if metrics_payload:
        print(f"iou_cms: {metrics_payload['iou_cms']:.4f}")
        if metrics_payload["map_cms"] is not None:
            print(f"map_cms: {metrics_payload['map_cms']:.4f}")
    return 0


# ---------------------------------------------------------------------------
# parser assembly


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stepparse",
        description="Discover, parse, caption, and score activity steps in "
                    "multi-modal video collections.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("atoms", help="rank language atoms by tf-idf")
    p.add_argument("dataset")
    p.add_argument("--lang", action="store_true", default=True,
                   help="select language atoms (default mode)")
    p.add_argument("--idf-corpus", nargs="*", default=[],
                   help="additional collections for document frequencies")
    p.add_argument("-k", type=int, help="number of atoms")
    p.add_argument("--no-stopwords", action="store_true")
    p.add_argument("-o", "--output")
    _add_common(p)
    p.set_defaults(handler=cmd_atoms)

    p = sub.add_parser("cluster", help="extract visual atoms by joint clustering")
    p.add_argument("dataset")
    p.add_argument("-k", type=int, help="number of atoms")
    p.add_argument("--knn-proposals", type=int)
    p.add_argument("--knn-videos", type=int)
    p.add_argument("--quality-floor", type=float)
    p.add_argument("-o", "--output")
    _add_common(p)
    p.set_defaults(handler=cmd_cluster)

    p = sub.add_parser("filter", help="drop off-topic videos")
    p.add_argument("dataset")
    p.add_argument("-o", "--output")
    _add_common(p)
    p.set_defaults(handler=cmd_filter)

    p = sub.add_parser("represent", help="binary frame descriptors from atoms")
    p.add_argument("dataset")
    p.add_argument("--language-atoms", required=True)
    p.add_argument("--visual-atoms", required=True)
    p.add_argument("--frame-stride", type=int)
    p.add_argument("-o", "--output")
    _add_common(p)
    p.set_defaults(handler=cmd_represent)

    p = sub.add_parser("synth", help="generate a synthetic collection")
    p.add_argument("--videos", type=int, default=6)
    p.add_argument("--frames", type=int, default=40)
    p.add_argument("--steps", type=int, default=4)
    p.add_argument("--lang-dims", type=int, default=8)
    p.add_argument("--vis-dims", type=int, default=4)
    p.add_argument("-O", "--output-dir", required=True)
    _add_common(p)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("parse", help="temporal parsing of frame descriptors")
    p.add_argument("representation")
    p.add_argument("--sweeps", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--report", choices=("best", "last"))
    p.add_argument("-O", "--output-dir", required=True)
    _add_common(p)
    p.set_defaults(handler=cmd_parse)

    p = sub.add_parser("caption", help="caption discovered steps")
    p.add_argument("--model-state", required=True)
    p.add_argument("--representation", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("-o", "--output")
    _add_common(p)
    p.set_defaults(handler=cmd_caption)

    p = sub.add_parser("eval", help="score a segmentation against ground truth")
    p.add_argument("--segmentation", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--posteriors")
    p.add_argument("-o", "--output")
    _add_common(p)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    p.add_argument("dataset")
    p.add_argument("--ground-truth")
    p.add_argument("--idf-corpus", nargs="*", default=[])
    p.add_argument("--resume", action="store_true",
                   help="reuse finished stages from the output directory")
    p.add_argument("-O", "--output-dir", required=True)
    _add_common(p)
    p.set_defaults(handler=cmd_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {exc}", file=sys.stderr)
        traceback.print_exc()
        return 3


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
