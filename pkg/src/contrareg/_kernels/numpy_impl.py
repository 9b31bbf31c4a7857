"""Vectorized numpy implementation of the hot contrastive kernel.

This is the fallback backend; `contrareg._kernels._fast` is a Cython
translation of the same function. Both must agree to float rounding.
"""

import numpy as np


def contrast_terms(z, pos_mask, neg_mask, weights, tau):
    """Per-anchor contrastive losses and the gradient of their sum.

    Parameters
    ----------
    z : (m, d) float64
        Effective feature rows (already L2-normalized when the caller
        normalizes; this kernel does not care).
    pos_mask, neg_mask : (m, m) bool
        pos_mask[j, i] marks i as a positive peer of j, neg_mask[j, q]
        marks q as a negative peer. Diagonals must be False and the two
        masks disjoint.
    weights : (m, m) float64
        Pushing weight for (anchor j, negative q). Only entries under
        neg_mask are read.
    tau : float
        Temperature, > 0.

    Returns
    -------
    per_anchor : (m,) float64
        L_j for rows with at least one negative and one positive, else 0.
        Anchors without positives contribute 0 (the caller counts them).
    dz : (m, d) float64
        Gradient of sum_j L_j with respect to z, including flow through
        both the anchor role and the peer role of every row.
    """
    m = z.shape[0]
    per_anchor = np.zeros(m)
    dz = np.zeros_like(z)

    active = pos_mask.any(axis=1) & neg_mask.any(axis=1)
    if not active.any():
        return per_anchor, dz

    sims = (z @ z.T) / tau
    pair = pos_mask | neg_mask

    # Log-sum-exp shift per anchor row; rows without pairs get 0 to keep
    # the subtraction finite (they are masked out below anyway).
    shift = np.where(pair, sims, -np.inf).max(axis=1)
    shift = np.where(active, shift, 0.0)
    e = np.exp(np.where(pair, sims - shift[:, None], -np.inf))

    pos_e = np.where(pos_mask, e, 0.0)
    neg_e = np.where(neg_mask, weights * e, 0.0)
    p = pos_e.sum(axis=1)
    q = neg_e.sum(axis=1)

    with np.errstate(divide="ignore", invalid="ignore"):
        loss = np.log(p + q) - np.log(p)
        inv_pq = 1.0 / (p + q)
        inv_p = 1.0 / p
    per_anchor = np.where(active, loss, 0.0)
    inv_pq = np.where(active, inv_pq, 0.0)
    inv_p = np.where(active, inv_p, 0.0)

    # coef[j, i] = dL_j / d(z_j . z_i); the shift cancels in the ratios.
    coef = (pos_e * (inv_pq - inv_p)[:, None] + neg_e * inv_pq[:, None]) / tau
    dz = coef @ z + coef.T @ z
    return per_anchor, dz
