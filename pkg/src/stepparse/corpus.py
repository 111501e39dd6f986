"""Data model and IO for multi-modal video collections.

A collection is a set of videos retrieved for one activity query.  Each
video carries a free-text description plus an ordered list of frames, and
each frame carries subtitle tokens together with a small set of region
proposal feature vectors.  Everything downstream (atom discovery, temporal
parsing, evaluation) consumes the types defined here.

Datasets live on disk as JSON lines, one video per line::

    {"id": "v1", "description": "...", "frames": [
        {"subtitle": "crack two eggs", "proposals": [[0.1, ...], ...]}, ...]}

Ground truth uses one record per video::

    {"id": "v1", "segments": [[0, 40, "crack eggs"], [40, 90, "whisk"]]}

Result artifacts are wrapped in a versioned envelope so that stale files
from older runs fail loudly instead of being half-parsed.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

RESULTS_VERSION = 1

# Minimal English stop list plus spoken-language fillers that dominate
# subtitle tracks.  Applied when counting words, never when storing tokens,
# so a different list can be swapped in after loading.
STOP_WORDS: frozenset[str] = frozenset("""
    a about after again all also am an and any are as at back be been before
    being both but by can could did do does down each few for from further
    get going gonna got had has have he her here him his how i if in into is
    it its just like may me might more most must my no nor not now of off oh
    ok okay on one only or other our out over own same she should so some
    such than that the their them then there these they this those to too
    two uh um under up us very was we well were what when where which who
    whom why will with would yeah you your
""".split())

_STRIP_CHARS = string.punctuation + "‘’“”"


class ValidationError(ValueError):
    """Raised when an input file, record, or argument violates a contract."""


def tokenize(text: str) -> list[str]:
    """Lowercase *text*, split on whitespace, strip edge punctuation.

    Tokens shorter than two characters after stripping are dropped.
    Interior punctuation (hyphens, apostrophes) is preserved.
    """
    out = []
    for raw in text.lower().split():
        tok = raw.strip(_STRIP_CHARS)
        if len(tok) >= 2:
            out.append(tok)
    return out


def remove_stop_words(
    tokens: Iterable[str], stop_words: frozenset[str] | None = STOP_WORDS
) -> list[str]:
    """Filter *tokens* against a stop list; ``None`` disables filtering."""
    if stop_words is None:
        return list(tokens)
    return [t for t in tokens if t not in stop_words]


@dataclass
class Frame:
    """One sampled frame: subtitle tokens plus proposal feature vectors."""

    index: int
    subtitle_tokens: list[str]
    proposals: np.ndarray  # (n_proposals, feature_dim) float64

    def validate(self) -> None:
        if self.proposals.ndim != 2:
            raise ValidationError(
                f"frame {self.index}: proposals must be 2-d, "
                f"got shape {self.proposals.shape}"
            )
        if not np.isfinite(self.proposals).all():
            raise ValidationError(
                f"frame {self.index}: non-finite proposal feature"
            )


@dataclass
class VideoRecord:
    """A single video: id, description tokens, ordered frames."""

    video_id: str
    description_tokens: list[str]
    frames: list[Frame]

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def proposal_matrix(self) -> tuple[np.ndarray, list[tuple[int, int]]]:
        """Stack all proposal vectors into one matrix.

        Returns the (n, dim) feature matrix and per-row back references
        ``(frame_index, proposal_index_within_frame)``.
        """
        feats = [f.proposals for f in self.frames if f.proposals.shape[0]]
        refs = [
            (f.index, j)
            for f in self.frames
            for j in range(f.proposals.shape[0])
        ]
        if not feats:
            dim = self.frames[0].proposals.shape[1] if self.frames else 0
            return np.zeros((0, dim)), refs
        return np.concatenate(feats, axis=0), refs

    def validate(self) -> None:
        if not self.video_id:
            raise ValidationError("video id must be non-empty")
        if not self.frames:
            raise ValidationError(f"video {self.video_id!r}: no frames")
        dims = {f.proposals.shape[1] for f in self.frames}
        if len(dims) > 1:
            raise ValidationError(
                f"video {self.video_id!r}: inconsistent proposal "
                f"feature dimensions {sorted(dims)}"
            )
        for i, frame in enumerate(self.frames):
            if frame.index != i:
                raise ValidationError(
                    f"video {self.video_id!r}: frame index {frame.index} "
                    f"at position {i}; frames must be in temporal order"
                )
            frame.validate()


@dataclass
class GroundTruth:
    """Reference segmentations: video id -> [(start, end, label)].

    Segments are half-open frame ranges ``[start, end)`` with string labels.
    """

    segments: dict[str, list[tuple[int, int, str]]] = field(default_factory=dict)

    def labels(self) -> list[str]:
        seen = {lab for segs in self.segments.values() for _, _, lab in segs}
        return sorted(seen)

    def validate(self) -> None:
        for vid, segs in self.segments.items():
            prev_end = None
            for start, end, label in segs:
                if not label:
                    raise ValidationError(
                        f"ground truth {vid!r}: empty segment label"
                    )
                if start < 0 or end <= start:
                    raise ValidationError(
                        f"ground truth {vid!r}: bad segment range "
                        f"[{start}, {end})"
                    )
                if prev_end is not None and start < prev_end:
                    raise ValidationError(
                        f"ground truth {vid!r}: overlapping segments "
                        f"at frame {start}"
                    )
                prev_end = end


def _parse_frame(obj: dict, index: int, vid: str, max_proposals: int) -> Frame:
    subtitle = obj.get("subtitle", "")
    if not isinstance(subtitle, str):
        raise ValidationError(f"video {vid!r} frame {index}: subtitle not a string")
    raw = obj.get("proposals", [])
    if not isinstance(raw, list):
        raise ValidationError(f"video {vid!r} frame {index}: proposals not a list")
    if len(raw) > max_proposals:
        raw = raw[:max_proposals]
    try:
        proposals = np.asarray(raw, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ValidationError(
            f"video {vid!r} frame {index}: malformed proposal vector"
        ) from exc
    if proposals.size == 0:
        proposals = proposals.reshape(0, 0)
    if proposals.ndim != 2:
        raise ValidationError(
            f"video {vid!r} frame {index}: ragged proposal vectors"
        )
    return Frame(index=index, subtitle_tokens=tokenize(subtitle), proposals=proposals)


def load_dataset(path: str | Path, max_proposals: int = 10) -> list[VideoRecord]:
    """Load a collection from a JSON-lines dataset file.

    Every record needs an ``id``, a ``description`` string, and a non-empty
    ``frames`` list.  Proposal vectors must share one feature dimension
    across the whole file; at most *max_proposals* per frame are kept.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"dataset file not found: {path}")
    videos: list[VideoRecord] = []
    seen_ids: set[str] = set()
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}:{lineno}: invalid JSON") from exc
        if not isinstance(obj, dict) or "id" not in obj:
            raise ValidationError(f"{path}:{lineno}: record missing 'id'")
        vid = str(obj["id"])
        if vid in seen_ids:
            raise ValidationError(f"{path}:{lineno}: duplicate video id {vid!r}")
        seen_ids.add(vid)
        frames_raw = obj.get("frames")
        if not isinstance(frames_raw, list) or not frames_raw:
            raise ValidationError(f"{path}:{lineno}: video {vid!r} has no frames")
        frames = [
            _parse_frame(fobj, i, vid, max_proposals)
            for i, fobj in enumerate(frames_raw)
        ]
        record = VideoRecord(
            video_id=vid,
            description_tokens=tokenize(str(obj.get("description", ""))),
            frames=frames,
        )
        videos.append(record)
    if not videos:
        raise ValidationError(f"{path}: empty dataset")
    _normalize_feature_dims(videos, path)
    for record in videos:
        record.validate()
    return videos


def _normalize_feature_dims(videos: list[VideoRecord], path: Path) -> None:
    # Frames without proposals parse as (0, 0); reshape them to the
    # collection-wide feature dimension so stacking works.
    dims = {
        f.proposals.shape[1]
        for v in videos
        for f in v.frames
        if f.proposals.shape[0] > 0
    }
    if len(dims) > 1:
        raise ValidationError(
            f"{path}: inconsistent proposal feature dimensions {sorted(dims)}"
        )
    dim = dims.pop() if dims else 0
    for v in videos:
        for f in v.frames:
            if f.proposals.shape[0] == 0:
                f.proposals = f.proposals.reshape(0, dim)


def load_ground_truth(path: str | Path) -> GroundTruth:
    """Load reference segmentations from a JSON-lines file."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"ground truth file not found: {path}")
    gt = GroundTruth()
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}:{lineno}: invalid JSON") from exc
        if not isinstance(obj, dict) or "id" not in obj or "segments" not in obj:
            raise ValidationError(
                f"{path}:{lineno}: record needs 'id' and 'segments'"
            )
        vid = str(obj["id"])
        if vid in gt.segments:
            raise ValidationError(f"{path}:{lineno}: duplicate video id {vid!r}")
        segs = []
        for raw in obj["segments"]:
            if not isinstance(raw, (list, tuple)) or len(raw) != 3:
                raise ValidationError(
                    f"{path}:{lineno}: segment must be [start, end, label]"
                )
            segs.append((int(raw[0]), int(raw[1]), str(raw[2])))
        gt.segments[vid] = segs
    gt.validate()
    return gt


def save_results(path: str | Path, kind: str, payload: dict) -> None:
    """Write *payload* under a versioned envelope.

    Output is canonical JSON (sorted keys, fixed separators) so identical
    payloads produce byte-identical files.
    """
    doc = {"format": kind, "version": RESULTS_VERSION, "payload": payload}
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    Path(path).write_text(text + "\n")


def load_results(path: str | Path, kind: str | None = None) -> dict:
    """Read a result envelope back, checking version and optionally kind."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"results file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON") from exc
    if not isinstance(doc, dict) or "version" not in doc or "payload" not in doc:
        raise ValidationError(f"{path}: not a results envelope")
    if doc["version"] != RESULTS_VERSION:
        raise ValidationError(
            f"{path}: unsupported results version {doc['version']!r} "
            f"(expected {RESULTS_VERSION})"
        )
    if kind is not None and doc.get("format") != kind:
        raise ValidationError(
            f"{path}: expected {kind!r} results, found {doc.get('format')!r}"
        )
    return doc["payload"]


def iter_subtitle_tokens(video: VideoRecord) -> Iterator[str]:
    """All subtitle tokens of a video, in frame order."""
    for frame in video.frames:
        yield from frame.subtitle_tokens


def save_dataset(path: str | Path, videos: Sequence[VideoRecord]) -> None:
    """Write a collection back out as JSON lines (inverse of load_dataset).

    Subtitle tokens are joined with spaces; proposal vectors are emitted as
    plain lists.  Round-tripping a loaded dataset reproduces its content.
    """
    lines = []
    for v in videos:
        obj = {
            "id": v.video_id,
            "description": " ".join(v.description_tokens),
            "frames": [
                {
                    "subtitle": " ".join(f.subtitle_tokens),
                    "proposals": f.proposals.tolist(),
                }
                for f in v.frames
            ],
        }
        lines.append(json.dumps(obj, sort_keys=True, separators=(",", ":")))
    Path(path).write_text("\n".join(lines) + "\n")


def save_ground_truth(path: str | Path, gt: GroundTruth) -> None:
    """Write reference segmentations as JSON lines (inverse of load)."""
    lines = []
    for vid in sorted(gt.segments):
        obj = {
            "id": vid,
            "segments": [[s, e, lab] for s, e, lab in gt.segments[vid]],
        }
        lines.append(json.dumps(obj, sort_keys=True, separators=(",", ":")))
    Path(path).write_text("\n".join(lines) + "\n")
