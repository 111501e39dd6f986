import numpy as np
import pytest

from stepparse.corpus import Frame, ValidationError, VideoRecord
from stepparse.joint_cluster import VisualAtom
from stepparse.lang_atoms import LanguageAtom
from stepparse.representation import (
    AtomVocabulary,
    build_vocabulary,
    membership_from_atoms,
    represent_collection,
    represent_frame,
    represent_video,
    representation_from_payload,
    representation_to_payload,
)


def _video(video_id, frames):
    """frames: list of (subtitle, n_proposals)."""
    return VideoRecord(
        video_id,
        [],
        [
            Frame(index=i, subtitle_tokens=sub.split(),
                  proposals=np.zeros((n, 2)))
            for i, (sub, n) in enumerate(frames)
        ],
    )


@pytest.fixture
def vocab():
    return AtomVocabulary(language=["egg", "pan"], visual=[0, 1])


def test_vocabulary_properties(vocab):
    assert vocab.n_language == 2
    assert vocab.n_visual == 2
    assert vocab.dim == 4
    vocab.validate()
    again = AtomVocabulary.from_payload(vocab.to_payload())
    assert again == vocab


def test_vocabulary_validation():
    with pytest.raises(ValidationError, match="duplicate"):
        AtomVocabulary(language=["egg", "egg"], visual=[]).validate()
    with pytest.raises(ValidationError, match="duplicate"):
        AtomVocabulary(language=[], visual=[1, 1]).validate()
    with pytest.raises(ValidationError, match="empty"):
        AtomVocabulary(language=[], visual=[]).validate()


def test_build_vocabulary_orders_atoms():
    lang = [LanguageAtom("pan", 2.0), LanguageAtom("egg", 1.0)]
    vis = [
        VisualAtom(atom_id=3, members=[("v", 0, 0)], centroid=np.zeros(2)),
        VisualAtom(atom_id=1, members=[("v", 0, 1)], centroid=np.zeros(2)),
    ]
    vocab = build_vocabulary(lang, vis)
    assert vocab.language == ["pan", "egg"]  # given rank order preserved
    assert vocab.visual == [3, 1]


def test_membership_from_atoms_and_conflicts():
    atoms = [
        VisualAtom(atom_id=5, members=[("v", 0, 0), ("w", 1, 0)],
                   centroid=np.zeros(2)),
        VisualAtom(atom_id=1, members=[("v", 2, 1)], centroid=np.zeros(2)),
    ]
    vocab = AtomVocabulary(language=["egg"], visual=[5, 1])
    members = membership_from_atoms(atoms, vocab)
    # values are positions in the visual vocabulary, not raw atom ids
    assert members[("v", 0, 0)] == 0
    assert members[("w", 1, 0)] == 0
    assert members[("v", 2, 1)] == 1
    clash = atoms + [
        VisualAtom(atom_id=2, members=[("v", 0, 0)], centroid=np.zeros(2))
    ]
    vocab2 = AtomVocabulary(language=["egg"], visual=[5, 1, 2])
    with pytest.raises(ValidationError, match="more than one"):
        membership_from_atoms(clash, vocab2)
    # atoms absent from the vocabulary are simply skipped
    partial = membership_from_atoms(atoms, AtomVocabulary(language=[], visual=[1]))
    assert set(partial) == {("v", 2, 1)}
    assert partial[("v", 2, 1)] == 0


def test_represent_frame(vocab):
    frame = Frame(index=4, subtitle_tokens=["crack", "egg", "egg"],
                  proposals=np.zeros((2, 2)))
    membership = {("v", 4, 0): 1}
    row = represent_frame(frame, "v", vocab, membership)
    np.testing.assert_array_equal(row, [1, 0, 0, 1])
    assert row.dtype == np.uint8
    # proposals not assigned to any atom leave the visual half dark
    row = represent_frame(frame, "v", vocab, {})
    np.testing.assert_array_equal(row, [1, 0, 0, 0])


def test_represent_video_layout(vocab):
    video = _video("v", [("egg pan", 1), ("nothing here", 0), ("pan", 2)])
    membership = {("v", 0, 0): 0, ("v", 2, 1): 1}
    mat = represent_video(video, vocab, membership)
    assert mat.shape == (3, 4)
    np.testing.assert_array_equal(mat[0], [1, 1, 1, 0])
    np.testing.assert_array_equal(mat[1], [0, 0, 0, 0])
    np.testing.assert_array_equal(mat[2], [0, 1, 0, 1])


def test_represent_video_stride(vocab):
    video = _video("v", [("egg", 0), ("pan", 0), ("egg", 0), ("pan", 0)])
    mat = represent_video(video, vocab, {}, frame_stride=2)
    assert mat.shape == (2, 4)
    np.testing.assert_array_equal(mat[:, 0], [1, 1])  # frames 0 and 2
    np.testing.assert_array_equal(mat[:, 1], [0, 0])
    with pytest.raises(ValidationError, match="stride"):
        represent_video(video, vocab, {}, frame_stride=0)


def test_represent_collection(vocab):
    videos = [_video("a", [("egg", 0)]), _video("b", [("pan", 1)])]
    out = represent_collection(videos, vocab, {("b", 0, 0): 1})
    assert set(out) == {"a", "b"}
    np.testing.assert_array_equal(out["b"][0], [0, 1, 0, 1])


def test_representation_payload_roundtrip(vocab):
    videos = [_video("a", [("egg", 0), ("pan egg", 0)])]
    mats = represent_collection(videos, vocab, {})
    payload = representation_to_payload(mats)
    again = representation_from_payload(payload)
    assert set(again) == {"a"}
    np.testing.assert_array_equal(again["a"], mats["a"])
    assert again["a"].dtype == np.uint8


def test_representation_payload_rejects_garbage():
    with pytest.raises(ValidationError, match="malformed bit row"):
        representation_from_payload({"videos": {"a": ["01x"]}})
    with pytest.raises(ValidationError, match="malformed bit row"):
        representation_from_payload({"videos": {"a": ["01", "0"]}})
