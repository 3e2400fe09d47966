"""Accuracy, confusion matrix and multiclass log-loss of a score matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax

from .errors import ValidationError


@dataclass
class EvalReport:
    accuracy: float
    confusion: np.ndarray  # rows = true language, columns = decision
    log_loss: float
    languages: list = None

    def as_dict(self):
        out = {"accuracy": self.accuracy, "log_loss": self.log_loss, "segments": int(self.confusion.sum())}
        for i, row in enumerate(self.confusion):
            out[f"confusion.{i}"] = " ".join(str(int(c)) for c in row)
        return out

    def to_keyvalue(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.as_dict().items())

    def to_text(self) -> str:
        L = self.confusion.shape[0]
        names = self.languages or [str(i) for i in range(L)]
        width = max(6, *(len(n) for n in names))
        lines = [
            f"segments  {int(self.confusion.sum())}",
            f"accuracy  {self.accuracy:.4f}",
            f"log-loss  {self.log_loss:.4f}",
            "",
            "confusion (rows: truth, columns: decision)",
            " " * width + " " + " ".join(f"{n:>{width}}" for n in names),
        ]
        for name, row in zip(names, self.confusion):
            lines.append(f"{name:>{width}} " + " ".join(f"{int(c):>{width}d}" for c in row))
        return "\n".join(lines) + "\n"


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def evaluate(scores, labels=None) -> EvalReport:
    """Score a :class:`ScoreMatrix` (or raw S x L array) against integer labels.

    Ties go to the lowest language index; the log-loss uses a flat prior.
    """
    languages = getattr(scores, "languages", None)
    if labels is None:
        labels = getattr(scores, "labels", None)
    x = np.atleast_2d(np.asarray(getattr(scores, "scores", scores), dtype=np.float64))
    if labels is None:
        raise ValidationError("evaluation needs a true label for every segment")
    labels = np.asarray(labels, dtype=np.int64)
    S, L = x.shape
    if labels.shape != (S,):
        raise ValidationError(f"{labels.shape[0]} labels for {S} score rows")
    if np.any(labels < 0):
        raise ValidationError("evaluation needs a true label for every segment")
    if np.any(labels >= L):
        raise ValidationError("label index out of range")
    decisions = np.argmax(x, axis=1)
    confusion = np.zeros((L, L), dtype=np.int64)
    np.add.at(confusion, (labels, decisions), 1)
    logp = log_softmax(x, axis=1)
    return EvalReport(
        accuracy=float(np.mean(decisions == labels)),
        confusion=confusion,
        log_loss=float(-np.mean(logp[np.arange(S), labels])) + 0.0,
        languages=list(languages) if languages else None,
    )
