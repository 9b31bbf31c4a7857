"""The contrastive regularizer and the combined training objective.

Per anchor j the regularizer is

    L_j = -log( sum_p e^{z_j.z_p/T} /
                (sum_p e^{z_j.z_p/T} + sum_q S_jq e^{z_j.z_q/T}) )

with p over positives, q over negatives and S_jq the pushing weight; the
log is taken once over the summed ratio, so L_j = log(P+Q) - log(P) >= 0.
The batch value averages L_j over all examples, non-anchors contributing
zero. Gradients with respect to the raw features are exact, including the
flow through L2 normalization and through every peer role.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import EmptyPositiveSetError, InvalidInputError
from .labels import SimilarityRule
from .pairing import select_pairs

VARIANTS = (
    "full",
    "contrastive_only",
    "no_push_weight",
    "no_sim_weight",
    "no_rarity_weight",
)
REGRESSION_KINDS = ("mae", "rmse")

_NORM_EPS = 1e-12


@dataclass(frozen=True)
class ContrastConfig:
    """Hyperparameters of the combined objective.

    similarity_window : label (and prediction) distance below which two
        examples count as similar.
    temperature : divisor of the feature dot products.
    regression_weight / contrast_weight : the two terms' multipliers in
        the combined objective.
    push_power_scale : multiplier turning a density weight into a pushing
        power.
    variant : 'full' or one of the ablation variants; see
        pushing_weights_for.
    """

    similarity_window: float = 1.0
    temperature: float = 0.2
    regression_weight: float = 1.0
    contrast_weight: float = 4.0
    push_power_scale: float = 0.01
    variant: str = "full"
    normalize_features: bool = True
    regression_kind: str = "mae"
    stop_peer_gradient: bool = False
    metric: str = "absolute"

    def __post_init__(self):
        if not self.similarity_window > 0:
            raise InvalidInputError("similarity_window must be positive")
        if not self.temperature > 0:
            raise InvalidInputError("temperature must be positive")
        if self.regression_weight < 0 or self.contrast_weight < 0:
            raise InvalidInputError("objective weights must be nonnegative")
        if not self.push_power_scale > 0:
            raise InvalidInputError("push_power_scale must be positive")
        if self.variant not in VARIANTS:
            raise InvalidInputError(f"unknown variant {self.variant!r}")
        if self.regression_kind not in REGRESSION_KINDS:
            raise InvalidInputError(f"unknown regression kind {self.regression_kind!r}")

    def rule(self):
        return SimilarityRule(window=self.similarity_window, metric=self.metric)


def select_pairs_for(batch, cfg):
    """Pair selection as the configured variant defines it."""
    return select_pairs(
        batch.labels,
        batch.predictions,
        cfg.rule(),
        label_only_negatives=cfg.variant == "contrastive_only",
    )


def normalize_rows(z, eps=_NORM_EPS):
    """L2-normalize rows; rows with norm <= eps are scaled by 1/eps instead."""
    norms = np.sqrt((z * z).sum(axis=1))
    scale = 1.0 / np.maximum(norms, eps)
    return z * scale[:, None], norms, scale


def normalize_rows_backward(g, z_eff, norms, scale, eps=_NORM_EPS):
    """Exact chain rule through normalize_rows."""
    radial = (g * z_eff).sum(axis=1)
    out = (g - z_eff * radial[:, None]) * scale[:, None]
    small = norms <= eps
    if small.any():
        out[small] = g[small] * scale[small, None]
    return out


def per_anchor_loss(j, z_eff, pairs, s_weights, tau):
    """Loss term of a single anchor, from effective (post-norm) features.

    `s_weights` aligns with pairs.negatives[j]. Raises
    EmptyPositiveSetError when the anchor has no positives (the batch
    routine skips such anchors and counts them).
    """
    if not pairs.anchor_mask[j]:
        raise InvalidInputError(f"example {j} has no negatives, not an anchor")
    kpos = pairs.positives[j]
    kneg = pairs.negatives[j]
    if len(kpos) == 0:
        raise EmptyPositiveSetError(f"anchor {j} has no positive pairs")
    s = np.asarray(s_weights, dtype=np.float64)
    if s.shape != (len(kneg),):
        raise InvalidInputError("pushing weights do not align with the negative set")
    if (s < 0).any():
        raise InvalidInputError("pushing weights must be nonnegative")

    a = z_eff[kpos] @ z_eff[j] / tau
    b = z_eff[kneg] @ z_eff[j] / tau
    shift = max(a.max(), b.max())
    p = np.exp(a - shift).sum()
    q = (s * np.exp(b - shift)).sum()
    return float(np.log(p + q) - np.log(p))


def pushing_weights_for(j, pairs, labels, density, cfg):
    """Pushing weights over the negatives of anchor j, per variant.

    full             : push_power_scale * w_j * dist(y_j, y_q)
    no_push_weight   : 1 (no pushing weight at all)
    no_sim_weight    : push_power_scale * w_j (label-distance factor dropped)
    no_rarity_weight : push_power_scale * dist (density factor dropped)
    contrastive_only : 1 (pairing also ignores predictions; see
                       select_pairs_for)
    """
    from .labels import reduce_label

    kneg = pairs.negatives[j]
    n = len(kneg)
    if cfg.variant in ("no_push_weight", "contrastive_only"):
        return np.ones(n)
    if cfg.variant == "no_sim_weight":
        w_j = density.weight_for(labels[j])
        return np.full(n, cfg.push_power_scale * w_j)
    reduced = np.array([reduce_label(labels[k]) for k in kneg])
    dist = np.abs(reduced - reduce_label(labels[j]))
    if cfg.variant == "no_rarity_weight":
        return cfg.push_power_scale * dist
    w_j = density.weight_for(labels[j])
    return cfg.push_power_scale * w_j * dist


def _weight_matrix(batch, pairs, density, cfg):
    m = batch.size
    if cfg.variant in ("no_push_weight", "contrastive_only"):
        return np.ones((m, m))
    lab = batch.reduced_labels
    if cfg.variant == "no_sim_weight":
        w = np.array([density.weight_for(v) for v in lab])
        return cfg.push_power_scale * np.broadcast_to(w[:, None], (m, m)).copy()
    dist = np.abs(lab[:, None] - lab[None, :])
    if cfg.variant == "no_rarity_weight":
        return cfg.push_power_scale * dist
    w = np.array([density.weight_for(v) for v in lab])
    return cfg.push_power_scale * w[:, None] * dist


@dataclass
class ContrastDetail:
    per_anchor: list  # (index, value) for every anchor
    anchors_used: int
    skipped_empty_positive: int


def contrastive_loss(batch, pairs, density, cfg):
    """Batch regularizer value, exact raw-feature gradient, and detail.

    The value is the mean of per-anchor terms over all examples (zero for
    non-anchors); the gradient is d(value)/d(batch.z).
    """
    m = batch.size
    if pairs.pos_mask.shape != (m, m):
        raise InvalidInputError("pair sets do not match the batch size")
    weights = _weight_matrix(batch, pairs, density, cfg)

    if cfg.normalize_features:
        z_eff, norms, scale = normalize_rows(batch.z)
    else:
        z_eff = batch.z

    per_anchor, dz_eff = _kernels.contrast_terms(
        np.ascontiguousarray(z_eff),
        pairs.pos_mask,
        pairs.neg_mask,
        weights,
        cfg.temperature,
    )
    if cfg.stop_peer_gradient:
        # redo with the peer-role contribution removed; kept out of the hot
        # kernel because it is an off-default experiment switch
        per_anchor, dz_eff = _anchor_role_only(
            z_eff, pairs.pos_mask, pairs.neg_mask, weights, cfg.temperature
        )

    if not np.isfinite(per_anchor).all():
        raise InvalidInputError("non-finite regularizer term (bad features?)")

    if cfg.normalize_features:
        dz = normalize_rows_backward(dz_eff, z_eff, norms, scale)
    else:
        dz = dz_eff

    anchor_idx = np.flatnonzero(pairs.anchor_mask)
    has_pos = pairs.pos_mask.any(axis=1)
    skipped = int((~has_pos[anchor_idx]).sum())
    detail = ContrastDetail(
        per_anchor=[(int(j), float(per_anchor[j])) for j in anchor_idx],
        anchors_used=len(anchor_idx) - skipped,
        skipped_empty_positive=skipped,
    )
    return float(per_anchor.sum() / m), dz / m, detail


def _anchor_role_only(z_eff, pos_mask, neg_mask, weights, tau):
    """contrast_terms with gradient flow into peers stopped."""
    from ._kernels import numpy_impl

    per_anchor, _ = numpy_impl.contrast_terms(z_eff, pos_mask, neg_mask, weights, tau)
    active = pos_mask.any(axis=1) & neg_mask.any(axis=1)
    sims = (z_eff @ z_eff.T) / tau
    pair = pos_mask | neg_mask
    shift = np.where(pair, sims, -np.inf).max(axis=1)
    shift = np.where(active, shift, 0.0)
    e = np.exp(np.where(pair, sims - shift[:, None], -np.inf))
    pos_e = np.where(pos_mask, e, 0.0)
    neg_e = np.where(neg_mask, weights * e, 0.0)
    p = pos_e.sum(axis=1)
    q = neg_e.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_pq = np.where(active, 1.0 / (p + q), 0.0)
        inv_p = np.where(active, 1.0 / p, 0.0)
    coef = (pos_e * (inv_pq - inv_p)[:, None] + neg_e * inv_pq[:, None]) / tau
    return per_anchor, coef @ z_eff


def regression_loss(predictions, labels, kind="mae"):
    """Regression loss and its (sub)gradient w.r.t. the predictions.

    mae uses the minimum-norm subgradient sign(r)/n (0 at exact ties);
    rmse's gradient is r / (n * rmse), zero when every residual is zero.
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise InvalidInputError("predictions and labels must be equal-length vectors")
    n = len(predictions)
    if n == 0:
        raise InvalidInputError("empty input")
    r = predictions - labels
    if kind == "mae":
        return float(np.abs(r).mean()), np.sign(r) / n
    if kind == "rmse":
        value = float(np.sqrt((r * r).mean()))
        grad = r / (n * value) if value > 0 else np.zeros_like(r)
        return value, grad
    raise InvalidInputError(f"unknown regression kind {kind!r}")


def weighted_regression_loss(predictions, labels, weights, kind="mae"):
    """Density-reweighted regression loss (cost-sensitive baselines).

    mae: mean(w * |r|); rmse: sqrt(mean(w * r^2)). Gradients are exact.
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if not (predictions.shape == labels.shape == weights.shape):
        raise InvalidInputError("weights must align with predictions")
    n = len(predictions)
    if n == 0:
        raise InvalidInputError("empty input")
    r = predictions - labels
    if kind == "mae":
        return float((weights * np.abs(r)).mean()), weights * np.sign(r) / n
    if kind == "rmse":
        value = float(np.sqrt((weights * r * r).mean()))
        grad = weights * r / (n * value) if value > 0 else np.zeros_like(r)
        return value, grad
    raise InvalidInputError(f"unknown regression kind {kind!r}")


def total_loss(l_regression, l_contrast, regression_weight, contrast_weight):
    """The combined objective: a weighted sum of the two terms."""
    return regression_weight * l_regression + contrast_weight * l_contrast


@dataclass
class LossBreakdown:
    """Decomposed objective for one batch, with the regularizer's gradient.

    `dz` holds the gradient of contrast_weight * contrast_loss with
    respect to the raw (pre-normalization) features.
    """

    regression_loss: float
    contrast_loss: float
    total: float
    per_anchor: list
    anchors_used: int
    skipped_empty_positive: int
    dz: np.ndarray = field(repr=False)

    def to_json_dict(self):
        return {
            "regression_loss": self.regression_loss,
            "contrast_loss": self.contrast_loss,
            "total": self.total,
            "anchors_used": self.anchors_used,
            "skipped_empty_positive": self.skipped_empty_positive,
            "per_anchor": [[j, v] for j, v in self.per_anchor],
        }


def loss_breakdown(batch, pairs, density, cfg):
    """Evaluate the full objective on a batch (losses + feature gradient)."""
    l_reg, _ = regression_loss(
        batch.reduced_predictions, batch.reduced_labels, cfg.regression_kind
    )
    l_con, dz, detail = contrastive_loss(batch, pairs, density, cfg)
    return LossBreakdown(
        regression_loss=l_reg,
        contrast_loss=l_con,
        total=total_loss(l_reg, l_con, cfg.regression_weight, cfg.contrast_weight),
        per_anchor=detail.per_anchor,
        anchors_used=detail.anchors_used,
        skipped_empty_positive=detail.skipped_empty_positive,
        dz=cfg.contrast_weight * dz,
    )
