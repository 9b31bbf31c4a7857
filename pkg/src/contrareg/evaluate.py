"""Shot-partitioned regression metrics, the penalty curve, and collapse rate.

Test samples are grouped by how often their label bin occurred in
training: many (> 100 samples), median (20..100, bounds included), few
(1..19). Bins absent from training are excluded from every aggregate;
'all' is the union of the three shots.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .labels import reduce_label

FEW_MAX = 20  # few: 0 < count < FEW_MAX
MANY_MIN = 100  # many: count > MANY_MIN
SHOTS = ("all", "many", "median", "few")
GM_EPS = 1e-10

SCHEMA_VERSION = 1


def shot_of_count(count):
    if count > MANY_MIN:
        return "many"
    if count >= FEW_MAX:
        return "median"
    if count > 0:
        return "few"
    return "zero"


@dataclass
class ShotPartition:
    """Per-bin training counts with the derived shot of each bin."""

    bin_width: float
    counts: dict  # bin index -> training count

    def count_of_label(self, label):
        k = int(np.floor(reduce_label(label) / self.bin_width))
        return self.counts.get(k, 0)

    def shot_of_label(self, label):
        return shot_of_count(self.count_of_label(label))

    def shot_of_bin(self, k):
        return shot_of_count(self.counts.get(int(k), 0))


def assign_shots(train_labels, bin_width):
    """Partition label bins into many/median/few by training frequency."""
    if len(train_labels) == 0:
        raise InvalidInputError("no training labels")
    if not bin_width > 0:
        raise InvalidInputError("bin_width must be positive")
    reduced = np.array([reduce_label(v) for v in train_labels])
    idx = np.floor(reduced / bin_width).astype(np.int64)
    bins, counts = np.unique(idx, return_counts=True)
    return ShotPartition(
        bin_width=float(bin_width),
        counts={int(k): int(c) for k, c in zip(bins, counts)},
    )


@dataclass
class ShotMetrics:
    mae: float
    gm: float
    rmse: float
    delta1: float  # None when any label/prediction is nonpositive
    count: int


def _subset_metrics(preds, labels):
    err = np.abs(preds - labels)
    mae = float(err.mean())
    rmse = float(np.sqrt((err * err).mean()))
    gm = float(np.exp(np.log(np.maximum(err, GM_EPS)).mean()))
    if (labels > 0).all() and (preds > 0).all():
        ratio = np.maximum(preds / labels, labels / preds)
        delta1 = float((ratio < 1.25).mean())
    else:
        delta1 = None
    return ShotMetrics(mae=mae, gm=gm, rmse=rmse, delta1=delta1, count=len(preds))


_EMPTY = ShotMetrics(mae=None, gm=None, rmse=None, delta1=None, count=0)


@dataclass
class MetricsReport:
    shots: dict  # shot name -> ShotMetrics
    schema_version: int = SCHEMA_VERSION

    def to_json_dict(self):
        return {
            "schema_version": self.schema_version,
            "shots": {
                name: vars(sm).copy() for name, sm in self.shots.items()
            },
        }

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["shot", "count", "mae", "gm", "rmse", "delta1"])
            for name in SHOTS:
                sm = self.shots[name]
                writer.writerow(
                    [name, sm.count]
                    + ["" if v is None else repr(v) for v in (sm.mae, sm.gm, sm.rmse, sm.delta1)]
                )


def overall_metrics(predictions, labels):
    """MetricsReport with only the 'all' aggregate (no shot partition)."""
    preds = np.array([reduce_label(v) for v in predictions])
    labs = np.array([reduce_label(v) for v in labels])
    if preds.shape != labs.shape or len(preds) == 0:
        raise InvalidInputError("predictions and labels must align and be non-empty")
    shots = {name: _EMPTY for name in ("many", "median", "few")}
    shots["all"] = _subset_metrics(preds, labs)
    return MetricsReport(shots=shots)


def metrics(predictions, labels, partition):
    """Shot-partitioned MAE / GM / RMSE / threshold accuracy.

    GM multiplies errors clamped below at 1e-10 so exact hits do not zero
    the product. delta1 is the fraction with max(pred/true, true/pred)
    below 1.25, reported only when every value in the subset is positive.
    """
    preds = np.array([reduce_label(v) for v in predictions])
    labs = np.array([reduce_label(v) for v in labels])
    if preds.shape != labs.shape:
        raise InvalidInputError("predictions and labels lengths disagree")
    shot = np.array([partition.shot_of_label(v) for v in labs])

    out = {}
    union = shot != "zero"
    out["all"] = _subset_metrics(preds[union], labs[union]) if union.any() else _EMPTY
    for name in ("many", "median", "few"):
        sel = shot == name
        out[name] = _subset_metrics(preds[sel], labs[sel]) if sel.any() else _EMPTY
    return MetricsReport(shots=out)


@dataclass
class PenaltyBin:
    center: float
    count: int
    value: float


@dataclass
class PenaltyCurve:
    """Mean regression error of mispredicted-into-a-bin samples, per bin.

    For each occupied prediction bin (width = rule.window) centered at c,
    the member set holds samples predicted similar to c whose label is
    dissimilar to c; empty sets are omitted. expected_penalty is the
    count-weighted mean over bins (0 when no bin has support).
    """

    bins: list
    expected_penalty: float
    support: int
    schema_version: int = SCHEMA_VERSION

    def to_json_dict(self):
        return {
            "schema_version": self.schema_version,
            "expected_penalty": self.expected_penalty,
            "support": self.support,
            "bins": [vars(b).copy() for b in self.bins],
        }

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["center", "count", "value"])
            for b in self.bins:
                writer.writerow([repr(b.center), b.count, repr(b.value)])


def penalty_curve(predictions, labels, rule, regression_kind="mae"):
    """Average error of label-dissimilar samples landing near each prediction."""
    preds = np.array([reduce_label(v) for v in predictions])
    labs = np.array([reduce_label(v) for v in labels])
    if preds.shape != labs.shape:
        raise InvalidInputError("predictions and labels lengths disagree")
    w = rule.window
    occupied = np.unique(np.floor(preds / w).astype(np.int64))
    bins = []
    for k in occupied:
        center = (k + 0.5) * w
        sel = (np.abs(preds - center) < w) & (np.abs(labs - center) >= w)
        n = int(sel.sum())
        if n == 0:
            continue
        err = preds[sel] - labs[sel]
        if regression_kind == "rmse":
            value = float(np.sqrt((err * err).mean()))
        else:
            value = float(np.abs(err).mean())
        bins.append(PenaltyBin(center=float(center), count=n, value=value))
    support = sum(b.count for b in bins)
    expected = (
        sum(b.count * b.value for b in bins) / support if support > 0 else 0.0
    )
    return PenaltyCurve(bins=bins, expected_penalty=float(expected), support=support)


def collapse_rate(z, labels, rule, mask=None):
    """Fraction of (masked) samples whose cosine nearest neighbour has a
    dissimilar label - the feature-collapse diagnostic.

    Returns 0.0 when the mask selects nothing.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise InvalidInputError("need at least two feature rows")
    labs = np.array([reduce_label(v) for v in labels])
    if len(labs) != z.shape[0]:
        raise InvalidInputError("labels do not align with features")

    norms = np.sqrt((z * z).sum(axis=1))
    zn = z / np.maximum(norms, 1e-12)[:, None]
    sims = zn @ zn.T
    np.fill_diagonal(sims, -np.inf)
    nearest = sims.argmax(axis=1)
    dissimilar = np.abs(labs - labs[nearest]) >= rule.window
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != labs.shape:
            raise InvalidInputError("mask does not align with features")
        if not mask.any():
            return 0.0
        dissimilar = dissimilar[mask]
    return float(dissimilar.mean())
