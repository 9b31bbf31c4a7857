"""Seeded synthetic imbalanced regression data, augmentations, and CSV I/O.

Training labels are drawn from a skewed density over [label_min,
label_max); the test split is balanced exactly (equal count per label
bin). Inputs embed the label through a fixed map plus gaussian noise, so
the regression target is recoverable and the only pathology under test is
the label imbalance. Everything is deterministic per seed.
"""

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import CsvFormatError, InvalidInputError

PROFILES = ("exponential", "bimodal", "uniform")
TARGET_MAPS = ("linear", "sinusoidal", "piecewise", "spiral")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one synthetic dataset (training skew + balanced test).

    profile 'exponential' has density proportional to exp(-rate * t) with
    t the position in the label range, so the density falls by e^-rate
    across the range. 'bimodal' mixes two truncated normals (centers and
    widths in label units). The target map embeds the label into every
    input dimension: 'linear' is a*y + b; 'sinusoidal' is y plus a ripple
    of the given amplitude and period, phase-shifted per dimension;
    'piecewise' is a continuous 3-segment ramp with slopes 0.5/2.0/0.5
    over thirds of the range; 'spiral' winds the label range around the
    first two input dimensions (one turn per `period` label units, total
    radial growth `amplitude`), so rare high labels land radially next to
    dense low labels and are distinguishable only by the radial gap -
    extra dimensions carry pure noise. Spiral needs input_dim >= 2.
    """

    label_min: float = 0.0
    label_max: float = 100.0
    profile: str = "exponential"
    rate: float = 5.0
    centers: tuple = (25.0, 75.0)
    widths: tuple = (5.0, 5.0)
    mix: float = 0.5
    n_train: int = 5000
    n_test: int = 1000
    test_bin_width: float = 1.0
    input_dim: int = 2
    target_map: str = "sinusoidal"
    map_a: float = 1.0
    map_b: float = 0.0
    amplitude: float = 3.0
    period: float = 20.0
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not self.label_min < self.label_max:
            raise InvalidInputError("label_min must be below label_max")
        if self.n_train < 1:
            raise InvalidInputError("n_train must be at least 1")
        if self.profile not in PROFILES:
            raise InvalidInputError(f"unknown profile {self.profile!r}")
        if self.target_map not in TARGET_MAPS:
            raise InvalidInputError(f"unknown target map {self.target_map!r}")
        if self.profile == "exponential" and not self.rate > 0:
            raise InvalidInputError("exponential profile needs rate > 0")
        if self.profile == "bimodal":
            if len(self.centers) != 2 or len(self.widths) != 2:
                raise InvalidInputError("bimodal profile needs two centers and widths")
            if not all(w > 0 for w in self.widths):
                raise InvalidInputError("bimodal widths must be positive")
            if not 0.0 <= self.mix <= 1.0:
                raise InvalidInputError("mix must be in [0, 1]")
        if self.input_dim < 1:
            raise InvalidInputError("input_dim must be at least 1")
        if self.noise_sigma < 0:
            raise InvalidInputError("noise_sigma must be nonnegative")
        if self.target_map in ("sinusoidal", "spiral") and not self.period > 0:
            raise InvalidInputError(f"{self.target_map} map needs period > 0")
        if self.target_map == "spiral":
            if self.input_dim < 2:
                raise InvalidInputError("spiral map needs input_dim >= 2")
            if self.amplitude < 0:
                raise InvalidInputError("spiral map needs amplitude >= 0")
        if self.n_test >= 1:
            span = self.label_max - self.label_min
            n_bins = span / self.test_bin_width
            if abs(n_bins - round(n_bins)) > 1e-9:
                raise InvalidInputError("test_bin_width must divide the label range")
            if self.n_test % round(n_bins) != 0:
                raise InvalidInputError(
                    f"n_test={self.n_test} not divisible by {round(n_bins)} test bins"
                )


@dataclass(frozen=True)
class AugmentSpec:
    """Input augmentation: multiplicative jitter and additive gaussian noise."""

    gaussian_sigma: float = 0.0
    scale_jitter: float = 0.0

    def __post_init__(self):
        if self.gaussian_sigma < 0:
            raise InvalidInputError("gaussian_sigma must be nonnegative")
        if not 0.0 <= self.scale_jitter < 1.0:
            raise InvalidInputError("scale_jitter must be in [0, 1)")


@dataclass
class Dataset:
    x: np.ndarray  # (n, d)
    y: np.ndarray  # (n,)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.x.ndim != 2 or self.y.shape != (self.x.shape[0],):
            raise InvalidInputError("dataset arrays have inconsistent shapes")

    def __len__(self):
        return len(self.y)


def _sample_labels(spec, rng, n):
    lo, hi = spec.label_min, spec.label_max
    span = hi - lo
    if spec.profile == "uniform":
        return rng.uniform(lo, hi, n)
    if spec.profile == "exponential":
        u = rng.uniform(0.0, 1.0, n)
        t = -np.log1p(-u * (1.0 - math.exp(-spec.rate))) / spec.rate
        return lo + t * span
    # bimodal: truncated normal mixture via rejection
    pick = rng.uniform(0.0, 1.0, n) < spec.mix
    mu = np.where(pick, spec.centers[0], spec.centers[1])
    sd = np.where(pick, spec.widths[0], spec.widths[1])
    y = rng.normal(mu, sd)
    bad = (y < lo) | (y >= hi)
    while bad.any():
        y[bad] = rng.normal(mu[bad], sd[bad])
        bad = (y < lo) | (y >= hi)
    return y


def _balanced_test_labels(spec, rng):
    n_bins = round((spec.label_max - spec.label_min) / spec.test_bin_width)
    per_bin = spec.n_test // n_bins
    lowers = spec.label_min + spec.test_bin_width * np.arange(n_bins)
    offsets = rng.uniform(0.0, spec.test_bin_width, (n_bins, per_bin))
    return (lowers[:, None] + offsets).ravel()


def _embed(y, spec):
    d = spec.input_dim
    if spec.target_map == "linear":
        base = spec.map_a * y + spec.map_b
        return np.tile(base[:, None], (1, d))
    if spec.target_map == "sinusoidal":
        # golden-angle phase increments: no subset of dimensions can cancel
        # the ripple, so ambiguity survives averaging across dimensions
        phases = 2.399963229728653 * np.arange(d)
        return y[:, None] + spec.amplitude * np.sin(
            2.0 * np.pi * y[:, None] / spec.period + phases[None, :]
        )
    if spec.target_map == "spiral":
        t = (y - spec.label_min) / (spec.label_max - spec.label_min)
        theta = 2.0 * np.pi * (y - spec.label_min) / spec.period
        radius = 1.0 + spec.amplitude * t
        out = np.zeros((len(y), d))
        out[:, 0] = 10.0 * radius * np.cos(theta)
        out[:, 1] = 10.0 * radius * np.sin(theta)
        return out  # dims >= 2 stay zero; only the additive noise fills them
    # piecewise: continuous ramp, slopes 0.5 / 2.0 / 0.5 over thirds
    span = spec.label_max - spec.label_min
    t = y - spec.label_min
    third = span / 3.0
    seg1 = np.minimum(t, third)
    seg2 = np.clip(t - third, 0.0, third)
    seg3 = np.clip(t - 2.0 * third, 0.0, third)
    base = spec.label_min + 0.5 * seg1 + 2.0 * seg2 + 0.5 * seg3
    return np.tile(base[:, None], (1, d))


def generate(spec):
    """Build (train, test) datasets; bit-identical for identical specs."""
    rng = np.random.default_rng(spec.seed)
    y_train = _sample_labels(spec, rng, spec.n_train)
    y_test = _balanced_test_labels(spec, rng) if spec.n_test >= 1 else np.empty(0)

    x_train = _embed(y_train, spec)
    x_test = _embed(y_test, spec)
    if spec.noise_sigma > 0:
        x_train = x_train + rng.normal(0.0, spec.noise_sigma, x_train.shape)
        x_test = x_test + rng.normal(0.0, spec.noise_sigma, x_test.shape)
    return Dataset(x=x_train, y=y_train), Dataset(x=x_test, y=y_test)


def augment_twice(x, spec, rng):
    """Two independent augmented views of one input vector (label unchanged)."""
    x = np.asarray(x, dtype=np.float64)
    return _augment_one(x, spec, rng), _augment_one(x, spec, rng)


def _augment_one(x, spec, rng):
    out = x
    if spec.scale_jitter > 0:
        out = out * rng.uniform(1.0 - spec.scale_jitter, 1.0 + spec.scale_jitter)
    if spec.gaussian_sigma > 0:
        out = out + rng.normal(0.0, spec.gaussian_sigma, x.shape)
    return out.copy() if out is x else out


def augment_batch(x, spec, rng):
    """Vectorized augment_twice over a batch: returns two (n, d) views."""
    x = np.asarray(x, dtype=np.float64)
    views = []
    for _ in range(2):
        out = x
        if spec.scale_jitter > 0:
            jitter = rng.uniform(
                1.0 - spec.scale_jitter, 1.0 + spec.scale_jitter, (len(x), 1)
            )
            out = out * jitter
        if spec.gaussian_sigma > 0:
            out = out + rng.normal(0.0, spec.gaussian_sigma, x.shape)
        views.append(out.copy() if out is x else out)
    return views[0], views[1]


def save_csv(path, dataset):
    """Write the documented CSV format: header x0..x{d-1},y, repr'd floats."""
    d = dataset.x.shape[1]
    header = ",".join([f"x{i}" for i in range(d)] + ["y"])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row, label in zip(dataset.x, dataset.y):
            fh.write(",".join(repr(float(v)) for v in row) + f",{float(label)!r}\n")


def load_csv(path):
    """Read a dataset CSV; malformed rows are reported with their line number."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CsvFormatError(f"{path}: empty file")
    fields = lines[0].split(",")
    if fields[-1] != "y" or fields[:-1] != [f"x{i}" for i in range(len(fields) - 1)]:
        raise CsvFormatError(f"{path}: line 1: header must be x0,...,x{{d-1}},y")
    d = len(fields) - 1
    if d < 1:
        raise CsvFormatError(f"{path}: line 1: need at least one input column")
    xs, ys = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != d + 1:
            raise CsvFormatError(
                f"{path}: line {lineno}: expected {d + 1} fields, got {len(parts)}"
            )
        try:
            values = [float(p) for p in parts]
        except ValueError as exc:
            raise CsvFormatError(f"{path}: line {lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in values):
            raise CsvFormatError(f"{path}: line {lineno}: non-finite value")
        xs.append(values[:-1])
        ys.append(values[-1])
    if not xs:
        raise CsvFormatError(f"{path}: no data rows")
    return Dataset(x=np.array(xs), y=np.array(ys))


def write_manifest(path, spec, files):
    """Record the generating spec next to the emitted CSVs."""
    payload = {"schema_version": 1, "spec": asdict(spec), "files": files}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
