"""Edit-quality scoring against a text prompt."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .embedders import Embedder
from .errors import InvalidInputError

DEFAULT_OMEGA = 1.0


def clip_score(
    image: np.ndarray, text: str, embedder: Embedder, omega: float = DEFAULT_OMEGA
) -> float:
    """omega * max(cosine(image embedding, text embedding), 0).

    Negative alignment clamps to zero, so the score lives in [0, omega].
    Stored as a fraction; multiply by 100 when reporting percentages.
    """
    e_i = embedder.embed_image(image)
    e_t = embedder.embed_text(text)
    ni = float(np.linalg.norm(e_i))
    nt = float(np.linalg.norm(e_t))
    if ni < 1e-12 or nt < 1e-12:
        raise InvalidInputError("zero-norm embedding in score")
    cosine = float(e_i @ e_t) / (ni * nt)
    return omega * max(cosine, 0.0)


@dataclass
class ScoreEntry:
    path: str
    prompt: str
    score: float


@dataclass
class ScoreReport:
    entries: list[ScoreEntry] = field(default_factory=list)
    embedder_id: str = "mock"
    omega: float = DEFAULT_OMEGA

    @property
    def mean(self) -> float:
        if not self.entries:
            return 0.0
        return float(np.mean([e.score for e in self.entries]))


def score_images(
    images: list[tuple[str, np.ndarray]],
    prompt: str,
    embedder: Embedder,
    embedder_id: str = "mock",
    omega: float = DEFAULT_OMEGA,
) -> ScoreReport:
    report = ScoreReport(embedder_id=embedder_id, omega=omega)
    for path, image in images:
        report.entries.append(
            ScoreEntry(path=path, prompt=prompt, score=clip_score(image, prompt, embedder, omega))
        )
    return report


def write_report(path: str, report: ScoreReport) -> None:
    """One JSON record per line: path, prompt, score."""
    with open(path, "w", encoding="utf-8") as fh:
        for entry in report.entries:
            fh.write(
                json.dumps(
                    {"path": entry.path, "prompt": entry.prompt, "score": entry.score}
                )
            )
            fh.write("\n")


def read_report(path: str) -> ScoreReport:
    report = ScoreReport()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            report.entries.append(
                ScoreEntry(
                    path=record["path"], prompt=record["prompt"], score=record["score"]
                )
            )
    return report
