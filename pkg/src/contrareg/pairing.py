"""Pair selection and anchor selection over an augmented batch.

For every ordered pair (i, j), i != j: similar labels make a positive
pair; dissimilar labels with similar predictions make a negative pair
(the signature of features collapsing across the label gap); anything
else is unpaired. An example is an anchor iff it has at least one
negative. Both relations are symmetric by construction.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .labels import reduce_label


def _reduce_all(values):
    return np.array([reduce_label(v) for v in values])


@dataclass
class AugmentedBatch:
    """Two augmented views per source example, with features and predictions.

    `origin[k]` is the index of the source example view k came from; the
    views of one source must carry identical labels.
    """

    z: np.ndarray
    labels: list
    predictions: list
    origin: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float64)
        self.origin = np.asarray(self.origin, dtype=np.int64)
        m = self.z.shape[0]
        if not (len(self.labels) == len(self.predictions) == len(self.origin) == m):
            raise InvalidInputError("batch field lengths disagree")
        self.reduced_labels = _reduce_all(self.labels)
        self.reduced_predictions = _reduce_all(self.predictions)
        by_origin = {}
        for k, src in enumerate(self.origin):
            ref = by_origin.setdefault(int(src), self.reduced_labels[k])
            if ref != self.reduced_labels[k]:
                raise InvalidInputError(
                    f"views of source {int(src)} carry different labels"
                )

    @property
    def size(self):
        return self.z.shape[0]


@dataclass
class PairSets:
    """Boolean pair masks plus the derived per-example index lists."""

    pos_mask: np.ndarray
    neg_mask: np.ndarray

    @property
    def anchor_mask(self):
        return self.neg_mask.any(axis=1)

    @property
    def positives(self):
        return [np.flatnonzero(row) for row in self.pos_mask]

    @property
    def negatives(self):
        return [np.flatnonzero(row) for row in self.neg_mask]

    def to_debug_dict(self):
        """Per-anchor adjacency lists, JSON-ready."""
        anchors = np.flatnonzero(self.anchor_mask)
        return {
            "anchors": anchors.tolist(),
            "positives": {int(j): self.positives[j].tolist() for j in anchors},
            "negatives": {int(j): self.negatives[j].tolist() for j in anchors},
        }


def select_pairs(labels, predictions, rule, label_only_negatives=False):
    """Build positive/negative pair sets from labels and current predictions.

    `label_only_negatives=True` ignores predictions and makes every
    label-dissimilar pair negative (the plain supervised-contrastive
    control used by the `contrastive_only` variant).
    """
    if len(labels) != len(predictions):
        raise InvalidInputError("labels and predictions lengths disagree")
    if len(labels) < 1:
        raise InvalidInputError("empty batch")
    lab = _reduce_all(labels)
    pred = _reduce_all(predictions)

    sim_lab = np.abs(lab[:, None] - lab[None, :]) < rule.window
    off_diag = ~np.eye(len(lab), dtype=bool)
    pos = sim_lab & off_diag
    if label_only_negatives:
        neg = ~sim_lab & off_diag
    else:
        sim_pred = np.abs(pred[:, None] - pred[None, :]) < rule.window
        neg = ~sim_lab & sim_pred & off_diag
    return PairSets(pos_mask=pos, neg_mask=neg)


def anchor_count(pairs):
    """Number of examples with at least one negative pair."""
    return int(pairs.anchor_mask.sum())
