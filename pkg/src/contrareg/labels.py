"""Label similarity, empirical label-density weights, and pushing powers.

Labels are scalars or small vectors ("map" labels); map labels are reduced
to their mean before any comparison. Two labels are similar when their
reduced absolute distance is strictly below the rule's window. Density
weights come from a histogram of the training labels, optionally smoothed
with a symmetric kernel, inverted and normalized to mean 1.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

METRICS = ("absolute", "mean_reduced")
KERNELS = ("gaussian", "triangular")


def reduce_label(value):
    """Collapse a label to one float: identity for scalars, mean for maps."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        reduced = float(arr)
    else:
        if arr.size == 0:
            raise InvalidInputError("map label is empty")
        reduced = float(arr.mean())
    if not np.isfinite(reduced):
        raise InvalidInputError("label is not finite")
    return reduced


def _is_map(value):
    return np.asarray(value).ndim > 0


def label_distance(a, b, metric="absolute"):
    """Nonnegative distance between two labels of the same kind."""
    if metric not in METRICS:
        raise InvalidInputError(f"unknown metric {metric!r}")
    if _is_map(a) != _is_map(b):
        raise InvalidInputError("cannot compare a scalar label with a map label")
    if metric == "absolute" and _is_map(a):
        raise InvalidInputError("metric 'absolute' is for scalar labels")
    return abs(reduce_label(a) - reduce_label(b))


@dataclass(frozen=True)
class SimilarityRule:
    """Two labels are similar iff their distance is strictly below `window`."""

    window: float
    metric: str = "absolute"

    def __post_init__(self):
        if not self.window > 0:
            raise InvalidInputError("similarity window must be positive")
        if self.metric not in METRICS:
            raise InvalidInputError(f"unknown metric {self.metric!r}")


def is_similar(a, b, rule):
    return label_distance(a, b, rule.metric) < rule.window


def _bin_index(reduced, bin_width):
    # half-open bins [k*bin_width, (k+1)*bin_width)
    return np.floor(reduced / bin_width).astype(np.int64)


def _kernel_window(kernel, kernel_size, sigma):
    if kernel not in KERNELS:
        raise InvalidInputError(f"unknown kernel {kernel!r}")
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise InvalidInputError("kernel_size must be odd and positive")
    half = kernel_size // 2
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    if kernel == "gaussian":
        if not sigma > 0:
            raise InvalidInputError("sigma must be positive for the gaussian kernel")
        window = np.exp(-(offsets**2) / (2.0 * sigma**2))
    else:
        window = 1.0 - np.abs(offsets) / (half + 1.0)
    return window / window.sum()


def smooth_counts(counts, kernel="gaussian", kernel_size=5, sigma=2.0):
    """Convolve a count vector with a normalized symmetric kernel.

    Edges reflect, so a uniform vector is a fixed point of the smoothing.
    """
    counts = np.asarray(counts, dtype=np.float64)
    window = _kernel_window(kernel, kernel_size, sigma)
    half = kernel_size // 2
    if half == 0:
        return counts.copy()
    padded = np.pad(counts, half, mode="reflect")
    return np.convolve(padded, window, mode="valid")


@dataclass
class DensityTable:
    """Inverse label-density weights over half-open histogram bins.

    `weights` are per input sample, strictly positive, mean exactly 1 up to
    float rounding. `smoothed` equals `counts` when no kernel was applied.
    """

    bin_width: float
    lo_bin: int
    counts: np.ndarray
    smoothed: np.ndarray
    weights: np.ndarray
    norm_const: float
    count_floor: float

    @property
    def bin_lowers(self):
        return (self.lo_bin + np.arange(len(self.counts))) * self.bin_width

    def weight_for(self, label):
        """Density weight of the bin containing `label`.

        Bins outside (or empty within) the table fall back to the count
        floor, i.e. maximal rarity; training samples always hit their own
        occupied bin.
        """
        idx = int(_bin_index(np.float64(reduce_label(label)), self.bin_width)) - self.lo_bin
        if 0 <= idx < len(self.smoothed):
            mass = max(float(self.smoothed[idx]), self.count_floor)
        else:
            mass = self.count_floor
        return self.norm_const / mass

    def to_csv(self, path):
        bin_weights = self.norm_const / np.maximum(self.smoothed, self.count_floor)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_lower", "count", "smoothed_count", "weight"])
            for lower, count, smoothed, weight in zip(
                self.bin_lowers, self.counts, self.smoothed, bin_weights
            ):
                writer.writerow([repr(float(lower)), int(count), repr(float(smoothed)), repr(float(weight))])


def _density_table(labels, bin_width, smoother=None, count_floor=1.0):
    if len(labels) == 0:
        raise InvalidInputError("cannot build a density table from no labels")
    if not bin_width > 0:
        raise InvalidInputError("bin_width must be positive")
    reduced = np.array([reduce_label(v) for v in labels])
    idx = _bin_index(reduced, bin_width)
    lo = int(idx.min())
    counts = np.bincount(idx - lo, minlength=int(idx.max()) - lo + 1)
    smoothed = counts.astype(np.float64) if smoother is None else smoother(counts)
    per_sample = 1.0 / np.maximum(smoothed[idx - lo], count_floor)
    norm_const = len(reduced) / per_sample.sum()
    return DensityTable(
        bin_width=float(bin_width),
        lo_bin=lo,
        counts=counts,
        smoothed=smoothed,
        weights=norm_const * per_sample,
        norm_const=norm_const,
        count_floor=count_floor,
    )


def inverse_frequency_weights(labels, bin_width):
    """Per-sample weights proportional to 1/count of the sample's label bin."""
    return _density_table(labels, bin_width)


def lds_weights(labels, bin_width, kernel="gaussian", kernel_size=5, sigma=2.0):
    """Weights from the kernel-smoothed label histogram (label smoothing).

    Smoothed counts are clamped below at 1e-3 before inversion so weights
    stay bounded at the distribution edges.
    """
    _kernel_window(kernel, kernel_size, sigma)  # validate before binning
    return _density_table(
        labels,
        bin_width,
        smoother=lambda c: smooth_counts(c, kernel, kernel_size, sigma),
        count_floor=1e-3,
    )


def pushing_power(weight, scale):
    """Rarity-proportional repulsion boost for one sample: scale * weight."""
    if not weight > 0:
        raise InvalidInputError("density weight must be positive")
    if not scale > 0:
        raise InvalidInputError("pushing power scale must be positive")
    return scale * weight


def pushing_weight(power, y_a, y_b, metric="absolute"):
    """Repulsion strength for a negative pair: power * label distance.

    Grows with the label gap (more mislabeled pairs are pushed harder) and
    with the anchor's pushing power.
    """
    if not power > 0:
        raise InvalidInputError("pushing power must be positive")
    return power * label_distance(y_a, y_b, metric)
