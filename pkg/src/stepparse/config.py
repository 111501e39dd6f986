"""Run configuration shared by the command line and the pipeline.

One flat dataclass covers every stage; stages read only the fields they
need.  Config files are plain ``key = value`` lines (``#`` comments and
blank lines allowed) and every field can also be overridden on the
command line, so runs are reproducible from a single small text file.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import get_type_hints

from .bphmm import Hyperparams
from .corpus import ValidationError

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class PipelineConfig:
    # atom discovery
    n_language_atoms: int = 100
    n_visual_atoms: int = 20
    use_stopwords: bool = True
    # similarity graphs
    knn_proposals: int = 2
    knn_videos: int = 2
    quality_floor: float = 0.1
    ascent_step: float = 0.1
    ascent_decay: float = 100.0
    ascent_tol: float = 1e-6
    ascent_patience: int = 20
    ascent_max_steps: int = 5000
    # representation
    frame_stride: int = 1
    max_proposals: int = 10
    # model hyperparameters
    gamma: float = 2.0
    beta: float = 1.0
    alpha: float = 1.0
    kappa: float = 25.0
    a0: float = 1.0
    b0: float = 1.0
    # sampler
    sweeps: int = 500
    chains: int = 1
    max_steps: int = 0  # 0 means uncapped
    report: str = "best"
    # captioning
    lm_order: int = 3
    lm_lambda: float = 0.01
    caption_candidates: int = 200
    caption_max_len: int = 15
    caption_atom_weight: float = 1.0
    # run control
    seed: int = 0
    threads: int = 1

    def validate(self) -> None:
        positive_ints = (
            "n_language_atoms", "n_visual_atoms", "knn_proposals", "knn_videos",
            "ascent_patience", "ascent_max_steps", "frame_stride",
            "max_proposals", "sweeps", "chains", "lm_order",
            "caption_candidates", "caption_max_len", "threads",
        )
        for name in positive_ints:
            if getattr(self, name) < 1:
                raise ValidationError(f"config: {name} must be >= 1")
        positive_floats = (
            "ascent_step", "ascent_decay", "ascent_tol", "gamma", "beta",
            "alpha", "kappa", "a0", "b0", "lm_lambda",
        )
        for name in positive_floats:
            if not getattr(self, name) > 0:
                raise ValidationError(f"config: {name} must be positive")
        if self.quality_floor < 0:
            raise ValidationError("config: quality_floor must be >= 0")
        if self.caption_atom_weight < 0:
            raise ValidationError("config: caption_atom_weight must be >= 0")
        if self.max_steps < 0:
            raise ValidationError("config: max_steps must be >= 0")
        if self.report not in ("best", "last"):
            raise ValidationError("config: report must be 'best' or 'last'")
        if self.seed < 0:
            raise ValidationError("config: seed must be >= 0")

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(
            gamma=self.gamma, beta=self.beta, alpha=self.alpha,
            kappa=self.kappa, a0=self.a0, b0=self.b0,
        )

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def set_field(self, name: str, raw: str) -> None:
        hints = get_type_hints(type(self))
        if name not in {f.name for f in fields(self)}:
            raise ValidationError(f"config: unknown key {name!r}")
        kind = hints[name]
        raw = raw.strip()
        try:
            if kind is bool:
                low = raw.lower()
                if low in _TRUE:
                    value = True
                elif low in _FALSE:
                    value = False
                else:
                    raise ValueError(raw)
            elif kind is int:
                value = int(raw)
            elif kind is float:
                value = float(raw)
            else:
                value = raw
        except ValueError as exc:
            raise ValidationError(
                f"config: cannot parse {name} = {raw!r} as {kind.__name__}"
            ) from exc
        setattr(self, name, value)

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"config file not found: {path}")
        cfg = cls()
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ValidationError(
                    f"{path}:{lineno}: expected 'key = value', got {line!r}"
                )
            key, raw = stripped.split("=", 1)
            cfg.set_field(key.strip(), raw)
        cfg.validate()
        return cfg
