"""Binary frame descriptors over the discovered atom vocabulary.

Every frame becomes a 0/1 vector of length L + V: the first L positions
flag which language atoms occur among the frame's subtitle tokens, the
remaining V positions flag which visual atoms own one of the frame's
region proposals.  These vectors are the observations of the sequence
model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import Frame, ValidationError, VideoRecord
from .joint_cluster import VisualAtom
from .lang_atoms import LanguageAtom

# membership key: (video id, frame index, proposal index) -> visual position
MembershipIndex = Mapping[tuple[str, int, int], int]


@dataclass
class AtomVocabulary:
    """Ordered atom inventory fixing the layout of frame vectors."""

    language: list[str]  # words, in selection order
    visual: list[int]  # atom ids, in extraction order

    @property
    def n_language(self) -> int:
        return len(self.language)

    @property
    def n_visual(self) -> int:
        return len(self.visual)

    @property
    def dim(self) -> int:
        return self.n_language + self.n_visual

    def validate(self) -> None:
        if self.dim == 0:
            raise ValidationError("atom vocabulary is empty")
        if len(set(self.language)) != len(self.language):
            raise ValidationError("duplicate language atom words")
        if len(set(self.visual)) != len(self.visual):
            raise ValidationError("duplicate visual atom ids")

    def to_payload(self) -> dict:
        return {"language": list(self.language), "visual": list(self.visual)}

    @classmethod
    def from_payload(cls, payload: dict) -> "AtomVocabulary":
        vocab = cls(
            language=[str(w) for w in payload.get("language", [])],
            visual=[int(a) for a in payload.get("visual", [])],
        )
        vocab.validate()
        return vocab


def build_vocabulary(
    language_atoms: Sequence[LanguageAtom], visual_atoms: Sequence[VisualAtom]
) -> AtomVocabulary:
    vocab = AtomVocabulary(
        language=[a.word for a in language_atoms],
        visual=[a.atom_id for a in visual_atoms],
    )
    vocab.validate()
    return vocab


def membership_from_atoms(
    visual_atoms: Sequence[VisualAtom], vocab: AtomVocabulary
) -> dict[tuple[str, int, int], int]:
    """Map each clustered proposal to its visual atom's vector position.

    A proposal claimed by two atoms would make the representation
    ill-defined, so that case is rejected.
    """
    position = {atom_id: m for m, atom_id in enumerate(vocab.visual)}
    index: dict[tuple[str, int, int], int] = {}
    for atom in visual_atoms:
        if atom.atom_id not in position:
            continue
        for key in atom.members:
            if key in index:
                raise ValidationError(
                    f"proposal {key} assigned to more than one visual atom"
                )
            index[key] = position[atom.atom_id]
    return index


def represent_frame(
    frame: Frame,
    video_id: str,
    vocab: AtomVocabulary,
    membership: MembershipIndex,
) -> np.ndarray:
    """Binary descriptor of one frame, layout [language | visual]."""
    vocab.validate()
    vec = np.zeros(vocab.dim, dtype=np.uint8)
    lang_pos = {w: i for i, w in enumerate(vocab.language)}
    for tok in frame.subtitle_tokens:
        i = lang_pos.get(tok)
        if i is not None:
            vec[i] = 1
    for p in range(frame.proposals.shape[0]):
        m = membership.get((video_id, frame.index, p))
        if m is not None:
            vec[vocab.n_language + m] = 1
    return vec


def represent_video(
    video: VideoRecord,
    vocab: AtomVocabulary,
    membership: MembershipIndex,
    frame_stride: int = 1,
) -> np.ndarray:
    """(T, dim) uint8 matrix of frame descriptors, optionally strided."""
    if frame_stride < 1:
        raise ValidationError(f"frame_stride must be >= 1, got {frame_stride}")
    vocab.validate()
    lang_pos = {w: i for i, w in enumerate(vocab.language)}
    frames = video.frames[::frame_stride]
    out = np.zeros((len(frames), vocab.dim), dtype=np.uint8)
    for r, frame in enumerate(frames):
        for tok in frame.subtitle_tokens:
            i = lang_pos.get(tok)
            if i is not None:
                out[r, i] = 1
        for p in range(frame.proposals.shape[0]):
            m = membership.get((video.video_id, frame.index, p))
            if m is not None:
                out[r, vocab.n_language + m] = 1
    return out


def represent_collection(
    collection: Sequence[VideoRecord],
    vocab: AtomVocabulary,
    membership: MembershipIndex,
    frame_stride: int = 1,
) -> dict[str, np.ndarray]:
    """Frame descriptor matrices for every video, keyed by video id."""
    return {
        v.video_id: represent_video(v, vocab, membership, frame_stride)
        for v in collection
    }


def representation_to_payload(matrices: Mapping[str, np.ndarray]) -> dict:
    """Compact text form: one bit string per frame."""
    return {
        "videos": {
            vid: ["".join(str(int(b)) for b in row) for row in mat]
            for vid, mat in matrices.items()
        }
    }


def representation_from_payload(payload: dict) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for vid, rows in payload.get("videos", {}).items():
        if not rows:
            raise ValidationError(f"video {vid!r}: empty representation")
        width = len(rows[0])
        mat = np.zeros((len(rows), width), dtype=np.uint8)
        for r, bits in enumerate(rows):
            if len(bits) != width or set(bits) - {"0", "1"}:
                raise ValidationError(f"video {vid!r}: malformed bit row {r}")
            mat[r] = np.frombuffer(bits.encode(), dtype=np.uint8) - ord("0")
        out[vid] = mat
    return out
