"""Independent straight-line references the package is checked against.

Everything here is deliberately dumb: python loops, math.exp, no shared
code with the package. These are the ground truth for pair selection, the
contrastive value, the penalty curve, and finite-difference gradients.
"""

import math

import numpy as np


def brute_force_pairs(labels, predictions, window, label_only=False):
    """O(n^2) double loop applying the two pairing rules directly."""
    n = len(labels)
    pos = [set() for _ in range(n)]
    neg = [set() for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if abs(labels[i] - labels[j]) < window:
                pos[i].add(j)
            elif label_only or abs(predictions[i] - predictions[j]) < window:
                neg[i].add(j)
    anchors = [len(neg[i]) > 0 for i in range(n)]
    return pos, neg, anchors


def normalize_rows(z):
    out = []
    for row in z:
        n = math.sqrt(sum(v * v for v in row))
        out.append([v / n for v in row] if n > 1e-12 else [v / 1e-12 for v in row])
    return out


def brute_force_contrast(z, labels, predictions, window, tau, weight_fn,
                         normalize=True, label_only=False):
    """Batch regularizer value via direct exponentials (no log-sum-exp).

    weight_fn(j, q) must return the pushing weight of negative q for
    anchor j. Returns (value, per_anchor dict, skipped count).
    """
    z = [list(map(float, row)) for row in z]
    if normalize:
        z = normalize_rows(z)
    pos, neg, anchors = brute_force_pairs(labels, predictions, window, label_only)
    n = len(labels)
    per_anchor = {}
    skipped = 0
    total = 0.0
    for j in range(n):
        if not anchors[j]:
            continue
        if not pos[j]:
            skipped += 1
            continue
        dot = lambda a, b: sum(x * y for x, y in zip(a, b))
        p = sum(math.exp(dot(z[j], z[i]) / tau) for i in sorted(pos[j]))
        q = sum(
            weight_fn(j, i) * math.exp(dot(z[j], z[i]) / tau) for i in sorted(neg[j])
        )
        value = -math.log(p / (p + q))
        per_anchor[j] = value
        total += value
    return total / n, per_anchor, skipped


def brute_force_penalty(predictions, labels, window, kind="mae"):
    """Penalty curve by scanning every occupied prediction bin directly."""
    preds = [float(v) for v in predictions]
    labs = [float(v) for v in labels]
    centers = sorted({(math.floor(p / window) + 0.5) * window for p in preds})
    bins = []
    for c in centers:
        members = [
            i
            for i in range(len(preds))
            if abs(preds[i] - c) < window and abs(labs[i] - c) >= window
        ]
        if not members:
            continue
        errs = [preds[i] - labs[i] for i in members]
        if kind == "rmse":
            value = math.sqrt(sum(e * e for e in errs) / len(errs))
        else:
            value = sum(abs(e) for e in errs) / len(errs)
        bins.append((c, len(members), value))
    support = sum(n for _, n, _ in bins)
    expected = sum(n * v for _, n, v in bins) / support if support else 0.0
    return bins, expected, support


def fd_gradient(f, x, h=1e-5):
    """Central finite differences of scalar f at array x (x is restored)."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        fp = f(x)
        flat[k] = orig - h
        fm = f(x)
        flat[k] = orig
        gflat[k] = (fp - fm) / (2.0 * h)
    return grad


def rel_error(a, b, floor=1e-12):
    """Max-norm relative difference between two arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), floor)
    return float(np.abs(a - b).max(initial=0.0) / scale)
