"""Confidence and calibration metrics for in/out-of-distribution evaluation."""

import csv
import io
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DimensionMismatch, EmptyInput


def mmc(confidences) -> float:
    """Mean maximum confidence."""
    c = np.asarray(confidences, dtype=np.float64).ravel()
    if c.size == 0:
        raise EmptyInput("mmc of an empty list")
    return float(c.mean())


def auroc(in_scores, out_scores) -> float:
    """Area under the ROC curve with inliers as positives.

    Equals P(score_in > score_out) + 0.5 P(tie), computed from average ranks
    (Mann-Whitney U).
    """
    a = np.asarray(in_scores, dtype=np.float64).ravel()
    b = np.asarray(out_scores, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptyInput("auroc needs inlier and outlier scores")
    ranks = rankdata(np.concatenate([a, b]))
    u = ranks[: a.size].sum() - a.size * (a.size + 1) / 2.0
    return float(u / (a.size * b.size))


def brier(probs, labels) -> float:
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64).ravel()
    if p.shape[0] != y.size:
        raise DimensionMismatch(f"{p.shape[0]} predictions for {y.size} labels")
    onehot = np.eye(p.shape[1])[y]
    return float(np.mean(np.sum((p - onehot) ** 2, axis=1)))


def entropy(p):
    """Shannon entropy (nats) over the last axis, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -np.sum(terms, axis=-1)


def accuracy(probs, labels) -> float:
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    return float(np.mean(np.argmax(p, axis=1) == np.asarray(labels).ravel()))


@dataclass
class EvalReport:
    mmc_in: float
    mmc_out: float
    aur: float
    accuracy: float
    brier: float
    mean_entropy: float

    @classmethod
    def from_predictions(cls, probs_in, labels_in, probs_out):
        conf_in = np.max(probs_in, axis=1)
        conf_out = np.max(probs_out, axis=1)
        return cls(
            mmc_in=mmc(conf_in),
            mmc_out=mmc(conf_out),
            aur=auroc(conf_in, conf_out),
            accuracy=accuracy(probs_in, labels_in),
            brier=brier(probs_in, labels_in),
            mean_entropy=float(np.mean(entropy(probs_in))),
        )

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def reports_to_csv(rows) -> str:
    """CSV text for ``(method, EvalReport)`` pairs with a fixed column order."""
    fields = ["mmc_in", "mmc_out", "aur", "accuracy", "brier", "mean_entropy"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method"] + fields)
    for method, rep in rows:
        d = rep.to_dict()
        w.writerow([method] + [format_float(d[f]) for f in fields])
    return buf.getvalue()


def format_float(v) -> str:
    """Locale-independent, round-trip-stable float text."""
    return repr(float(v))
