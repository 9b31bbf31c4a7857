"""Declarative experiment runner.

A flat text config (dotted sections: data.*, augment.*, model.*,
contrast.*, optimizer.*, lds.*) selects a dataset, a training method and
its hyperparameters. Methods: 'vanilla' plain regression,
'inv_freq_weighted' / 'lds_weighted' cost-sensitive reweighting by
inverse (smoothed) label density, and 'contrastive' which adds the
pair-based feature regularizer. Every run is bit-reproducible from its
config (seed included).

Each step builds two augmented views per sample, runs the encoder +
head, computes the regression loss on predictions (and, for
'contrastive', the regularizer on features), backpropagates the exact
gradients and applies Adam. All methods share the same augmentation
stream, so a contrastive run with contrast_weight = 0 reproduces the
vanilla trajectory exactly.
"""

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import evaluate, mlp
from .datagen import AugmentSpec, Dataset, SyntheticSpec, augment_batch, generate, load_csv
from .errors import ConfigError, InvalidInputError, TrainingDivergedError
from .labels import inverse_frequency_weights, lds_weights
from .loss import (
    ContrastConfig,
    contrastive_loss,
    regression_loss,
    select_pairs_for,
    total_loss,
    weighted_regression_loss,
)
from .pairing import AugmentedBatch

METHODS = ("vanilla", "inv_freq_weighted", "lds_weighted", "contrastive")

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CsvDataSpec:
    train_csv: str
    test_csv: str


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple = (64, 64)
    feature_dim: int = 16
    standardize: bool = True  # z-score inputs and labels with train stats

    def __post_init__(self):
        if self.feature_dim < 1 or any(h < 1 for h in self.hidden):
            raise InvalidInputError("layer widths must be positive")


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-4
    epochs: int = 30
    batch_size: int = 32
    decay_factor: float = 0.1  # applied at 2/3 and 8/9 of the epoch budget

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidInputError("epochs must be at least 1")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be at least 1")
        if self.lr < 0:
            raise InvalidInputError("lr must be nonnegative")


@dataclass(frozen=True)
class LdsConfig:
    kernel: str = "gaussian"
    kernel_size: int = 5
    sigma: float = 2.0


@dataclass(frozen=True)
class ExperimentConfig:
    method: str = "vanilla"
    seed: int = 0
    output_dir: str = None
    data: object = field(default_factory=SyntheticSpec)
    augment: AugmentSpec = field(default_factory=AugmentSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    contrast: ContrastConfig = field(default_factory=ContrastConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    lds: LdsConfig = field(default_factory=LdsConfig)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.method == "contrastive" and self.optimizer.batch_size < 2:
            raise ConfigError("contrastive training needs batch_size >= 2")
        if not isinstance(self.data, (SyntheticSpec, CsvDataSpec)):
            raise ConfigError("data must be a SyntheticSpec or CsvDataSpec")


# --------------------------------------------------------------------------
# config text format


_SYNTH_FIELDS = {
    "label_min": float,
    "label_max": float,
    "profile": str,
    "rate": float,
    "centers": "tuple_float",
    "widths": "tuple_float",
    "mix": float,
    "n_train": int,
    "n_test": int,
    "test_bin_width": float,
    "input_dim": int,
    "target_map": str,
    "map_a": float,
    "map_b": float,
    "amplitude": float,
    "period": float,
    "noise_sigma": float,
    "seed": int,
}
_CSV_FIELDS = {"train_csv": str, "test_csv": str}
_AUGMENT_FIELDS = {"gaussian_sigma": float, "scale_jitter": float}
_MODEL_FIELDS = {"hidden": "tuple_int", "feature_dim": int, "standardize": bool}
_CONTRAST_FIELDS = {
    "similarity_window": float,
    "temperature": float,
    "regression_weight": float,
    "contrast_weight": float,
    "push_power_scale": float,
    "variant": str,
    "normalize_features": bool,
    "regression_kind": str,
    "stop_peer_gradient": bool,
    "metric": str,
}
_OPTIMIZER_FIELDS = {
    "lr": float,
    "beta1": float,
    "beta2": float,
    "weight_decay": float,
    "epochs": int,
    "batch_size": int,
    "decay_factor": float,
}
_LDS_FIELDS = {"kernel": str, "kernel_size": int, "sigma": float}

_SECTIONS = {
    "augment": (_AUGMENT_FIELDS, AugmentSpec),
    "model": (_MODEL_FIELDS, ModelConfig),
    "contrast": (_CONTRAST_FIELDS, ContrastConfig),
    "optimizer": (_OPTIMIZER_FIELDS, OptimizerConfig),
    "lds": (_LDS_FIELDS, LdsConfig),
}


def _strip_comment(line):
    out = []
    in_string = False
    for ch in line:
        if ch == '"':
            in_string = not in_string
        elif ch == "#" and not in_string:
            break
        out.append(ch)
    return "".join(out)


def _parse_entries(text):
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            raise ConfigError(f"line {lineno}: cannot parse value {value!r}") from None
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = (parsed, lineno)
    return entries


def _coerce(value, ftype, key, lineno):
    def fail(expected):
        raise ConfigError(f"line {lineno}: {key} must be {expected}")

    if ftype is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            fail("a number")
        return float(value)
    if ftype is int:
        if isinstance(value, bool) or not isinstance(value, int):
            fail("an integer")
        return value
    if ftype is bool:
        if not isinstance(value, bool):
            fail("true or false")
        return value
    if ftype is str:
        if not isinstance(value, str):
            fail("a string")
        return value
    if ftype == "tuple_int":
        if not isinstance(value, list) or any(
            isinstance(v, bool) or not isinstance(v, int) for v in value
        ):
            fail("a list of integers")
        return tuple(value)
    if ftype == "tuple_float":
        if not isinstance(value, list) or any(
            isinstance(v, bool) or not isinstance(v, (int, float)) for v in value
        ):
            fail("a list of numbers")
        return tuple(float(v) for v in value)
    raise AssertionError(f"bad schema type {ftype}")


def _build_section(cls, schema, entries, section):
    kwargs = {}
    for name, (value, lineno) in entries.items():
        if name not in schema:
            raise ConfigError(f"line {lineno}: unknown key {section}.{name}")
        kwargs[name] = _coerce(value, schema[name], f"{section}.{name}", lineno)
    return cls(**kwargs)


def parse_config(text):
    """Parse the flat config format; unknown keys are errors."""
    entries = _parse_entries(text)
    top, sections = {}, {}
    for key, item in entries.items():
        if "." in key:
            section, _, name = key.partition(".")
            sections.setdefault(section, {})[name] = item
        else:
            top[key] = item

    kwargs = {}
    for key, (value, lineno) in top.items():
        if key == "method":
            kwargs["method"] = _coerce(value, str, key, lineno)
        elif key == "seed":
            kwargs["seed"] = _coerce(value, int, key, lineno)
        elif key == "output_dir":
            kwargs["output_dir"] = _coerce(value, str, key, lineno)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key}")

    data_entries = dict(sections.pop("data", {}))
    kind, kind_line = data_entries.pop("kind", ("synthetic", 0))
    if kind == "synthetic":
        kwargs["data"] = _build_section(SyntheticSpec, _SYNTH_FIELDS, data_entries, "data")
    elif kind == "csv":
        missing = [f for f in _CSV_FIELDS if f not in data_entries]
        if missing:
            raise ConfigError(f"data.kind = \"csv\" needs data.{missing[0]}")
        kwargs["data"] = _build_section(CsvDataSpec, _CSV_FIELDS, data_entries, "data")
    else:
        raise ConfigError(f"line {kind_line}: data.kind must be 'synthetic' or 'csv'")

    for section, (schema, cls) in _SECTIONS.items():
        if section in sections:
            kwargs[section] = _build_section(cls, schema, sections.pop(section), section)
    if sections:
        name = next(iter(sections))
        lineno = next(iter(sections[name].values()))[1]
        raise ConfigError(f"line {lineno}: unknown section {name}")
    return ExperimentConfig(**kwargs)


def _fmt_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_fmt_value(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize config value {value!r}")


def emit_config(cfg):
    """Canonical text form; parse(emit(cfg)) == cfg."""
    lines = [f"method = {json.dumps(cfg.method)}", f"seed = {cfg.seed}"]
    if cfg.output_dir is not None:
        lines.append(f"output_dir = {json.dumps(cfg.output_dir)}")
    if isinstance(cfg.data, SyntheticSpec):
        lines.append('data.kind = "synthetic"')
        for name in _SYNTH_FIELDS:
            lines.append(f"data.{name} = {_fmt_value(getattr(cfg.data, name))}")
    else:
        lines.append('data.kind = "csv"')
        for name in _CSV_FIELDS:
            lines.append(f"data.{name} = {_fmt_value(getattr(cfg.data, name))}")
    for section, (schema, _) in _SECTIONS.items():
        obj = getattr(cfg, section)
        for name in schema:
            lines.append(f"{section}.{name} = {_fmt_value(getattr(obj, name))}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# training


@dataclass
class Standardizer:
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    y_scale: float

    @classmethod
    def fit(cls, x, y, enabled=True):
        if not enabled:
            return cls(np.zeros(x.shape[1]), np.ones(x.shape[1]), 0.0, 1.0)
        x_std = x.std(axis=0)
        y_std = float(y.std())
        return cls(
            x_mean=x.mean(axis=0),
            x_scale=np.where(x_std > 0, x_std, 1.0),
            y_mean=float(y.mean()),
            y_scale=y_std if y_std > 0 else 1.0,
        )

    def tx(self, x):
        return (x - self.x_mean) / self.x_scale

    def ty(self, y):
        return (y - self.y_mean) / self.y_scale

    def inverse_y(self, y):
        return y * self.y_scale + self.y_mean


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    expected_penalty: float
    contrast_loss: float  # mean regularizer value over the epoch's batches


@dataclass
class RunResult:
    config_text: str
    method: str
    seed: int
    epochs: list
    metrics: evaluate.MetricsReport
    collapse_before: float
    collapse_after: float
    wall_clock: float
    pairs_debug: dict = None

    def metrics_json_dict(self):
        """The deterministic payload written to metrics.json (no wall clock)."""
        return {
            "schema_version": SCHEMA_VERSION,
            "method": self.method,
            "seed": self.seed,
            "config": self.config_text,
            "metrics": self.metrics.to_json_dict(),
            "collapse_rate_few": {
                "before": self.collapse_before,
                "after": self.collapse_after,
            },
        }

    def save(self, output_dir):
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "metrics.json", "w") as fh:
            json.dump(self.metrics_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(out / "epochs.csv", "w") as fh:
            fh.write("epoch,train_loss,val_loss,expected_penalty\n")
            for st in self.epochs:
                fh.write(
                    f"{st.epoch},{st.train_loss!r},{st.val_loss!r},{st.expected_penalty!r}\n"
                )
        if self.pairs_debug is not None:
            with open(out / "pairs_debug.json", "w") as fh:
                json.dump(self.pairs_debug, fh, indent=2, sort_keys=True)
                fh.write("\n")


def _load_data(cfg):
    if isinstance(cfg.data, SyntheticSpec):
        return generate(cfg.data)
    return load_csv(cfg.data.train_csv), load_csv(cfg.data.test_csv)


def _stratified_split(y, bin_width, fraction, rng):
    """Hold out `fraction` of samples per occupied label bin."""
    bins = np.floor(y / bin_width).astype(np.int64)
    val = []
    for b in np.unique(bins):
        members = np.flatnonzero(bins == b)
        k = int(len(members) * fraction)
        if k > 0:
            val.extend(rng.permutation(members)[:k])
    val = np.sort(np.array(val, dtype=np.int64))
    train = np.setdiff1d(np.arange(len(y)), val)
    return train, val


def _density_for(cfg, y_train):
    window = cfg.contrast.similarity_window
    if cfg.method == "vanilla":
        return None
    if cfg.method == "lds_weighted":
        return lds_weights(
            y_train, window, cfg.lds.kernel, cfg.lds.kernel_size, cfg.lds.sigma
        )
    return inverse_frequency_weights(y_train, window)


def _lr_at(opt, epoch):
    m1 = (2 * opt.epochs) // 3
    m2 = (8 * opt.epochs) // 9
    factor = 1.0
    if epoch >= m1:
        factor *= opt.decay_factor
    if epoch >= m2 and m2 > m1:
        factor *= opt.decay_factor
    return opt.lr * factor


def _features_on(model, x, scaler):
    z, yhat, _ = mlp.forward(model, scaler.tx(x))
    return z, scaler.inverse_y(yhat[:, 0])


def run_experiment(cfg, pairs_debug=False):
    """Train per the config and evaluate on the balanced test split.

    Returns a RunResult; artifacts (metrics.json, epochs.csv and the
    optional pairs_debug.json) are written when cfg.output_dir is set.
    Raises TrainingDivergedError naming the failing batch if the loss
    leaves the reals.
    """
    t0 = time.perf_counter()
    train, test = _load_data(cfg)
    ccfg = cfg.contrast
    opt = cfg.optimizer
    rule = ccfg.rule()

    rng = np.random.default_rng(cfg.seed)
    tr_idx, val_idx = _stratified_split(train.y, rule.window, 0.1, rng)
    x_tr, y_tr = train.x[tr_idx], train.y[tr_idx]
    x_val, y_val = train.x[val_idx], train.y[val_idx]

    scaler = Standardizer.fit(x_tr, y_tr, cfg.model.standardize)
    partition = evaluate.assign_shots(y_tr, rule.window)
    density = _density_for(cfg, y_tr)
    reweighted = cfg.method in ("inv_freq_weighted", "lds_weighted")
    use_contrast = cfg.method == "contrastive" and ccfg.contrast_weight > 0

    model = mlp.build_mlp(
        x_tr.shape[1], cfg.model.hidden, cfg.model.feature_dim, 1, rng
    )
    state = mlp.AdamState(
        lr=opt.lr, betas=(opt.beta1, opt.beta2), weight_decay=opt.weight_decay
    )

    few_mask = np.array([partition.shot_of_label(v) == "few" for v in test.y])
    z_test, _ = _features_on(model, test.x, scaler)
    collapse_before = evaluate.collapse_rate(z_test, test.y, rule, few_mask)

    y_tr_std = scaler.ty(y_tr)
    y_val_std = scaler.ty(y_val)
    n = len(y_tr)
    epochs_stats = []
    debug_payload = None

    for epoch in range(opt.epochs):
        lr = _lr_at(opt, epoch)
        perm = rng.permutation(n)
        batch_losses = []
        batch_contrast = []
        for bi, start in enumerate(range(0, n, opt.batch_size)):
            idx = perm[start : start + opt.batch_size]
            xb, yb = x_tr[idx], y_tr[idx]
            x1, x2 = augment_batch(xb, cfg.augment, rng)
            x_views = np.vstack([x1, x2])
            y_views = np.concatenate([yb, yb])
            y_views_std = np.concatenate([y_tr_std[idx], y_tr_std[idx]])

            z, yhat, cache = mlp.forward(model, scaler.tx(x_views))
            preds_std = yhat[:, 0]

            if reweighted:
                w_views = np.concatenate([density.weights[idx], density.weights[idx]])
                l_reg, dpred = weighted_regression_loss(
                    preds_std, y_views_std, w_views, ccfg.regression_kind
                )
            else:
                l_reg, dpred = regression_loss(
                    preds_std, y_views_std, ccfg.regression_kind
                )

            l_con = 0.0
            dz = np.zeros_like(z)
            if use_contrast:
                batch = AugmentedBatch(
                    z=z,
                    labels=y_views,
                    predictions=scaler.inverse_y(preds_std),
                    origin=np.concatenate([idx, idx]),
                )
                pairs = select_pairs_for(batch, ccfg)
                if pairs_debug and debug_payload is None:
                    debug_payload = pairs.to_debug_dict()
                l_con, dz_raw, _ = contrastive_loss(batch, pairs, density, ccfg)
                dz = ccfg.contrast_weight * dz_raw

            batch_total = total_loss(
                l_reg, l_con, ccfg.regression_weight, ccfg.contrast_weight
            )
            if not np.isfinite(batch_total):
                raise TrainingDivergedError(
                    f"non-finite loss (seed {cfg.seed}, epoch {epoch}, batch {bi})"
                )
            grads = mlp.backward(
                model, cache, dz, (ccfg.regression_weight * dpred)[:, None]
            )
            mlp.adam_step(model, grads, state, lr=lr)
            batch_losses.append(batch_total)
            batch_contrast.append(l_con)

        _, val_yhat, _ = mlp.forward(model, scaler.tx(x_val))
        val_preds_std = val_yhat[:, 0]
        val_loss, _ = regression_loss(val_preds_std, y_val_std, ccfg.regression_kind)
        penalty = evaluate.penalty_curve(
            scaler.inverse_y(val_preds_std), y_val, rule, ccfg.regression_kind
        )
        epochs_stats.append(
            EpochStats(
                epoch=epoch,
                train_loss=float(np.mean(batch_losses)),
                val_loss=float(val_loss),
                expected_penalty=penalty.expected_penalty,
                contrast_loss=float(np.mean(batch_contrast)),
            )
        )

    z_test, test_preds = _features_on(model, test.x, scaler)
    report = evaluate.metrics(test_preds, test.y, partition)
    collapse_after = evaluate.collapse_rate(z_test, test.y, rule, few_mask)

    result = RunResult(
        config_text=emit_config(cfg),
        method=cfg.method,
        seed=cfg.seed,
        epochs=epochs_stats,
        metrics=report,
        collapse_before=collapse_before,
        collapse_after=collapse_after,
        wall_clock=time.perf_counter() - t0,
        pairs_debug=debug_payload,
    )
    if cfg.output_dir is not None:
        result.save(cfg.output_dir)
    return result


# --------------------------------------------------------------------------
# method comparison


_METRIC_COLUMNS = [
    f"{metric}_{shot}"
    for metric in ("mae", "gm", "rmse", "delta1")
    for shot in evaluate.SHOTS
]


def method_label(cfg):
    if cfg.method == "contrastive":
        return f"contrastive:{cfg.contrast.variant}"
    return cfg.method


def _metric_cells(report):
    cells = {}
    for metric in ("mae", "gm", "rmse", "delta1"):
        for shot in evaluate.SHOTS:
            cells[f"{metric}_{shot}"] = getattr(report.shots[shot], metric)
    return cells


@dataclass
class ComparisonTable:
    rows: list  # ordered dicts: row_kind, method, seed, metric columns
    results: dict  # (config index, seed) -> RunResult

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(",".join(["row_kind", "method", "seed"] + _METRIC_COLUMNS) + "\n")
            for row in self.rows:
                cells = [row["row_kind"], row["method"], str(row.get("seed", ""))]
                for col in _METRIC_COLUMNS:
                    v = row.get(col)
                    cells.append("" if v is None else repr(v))
                fh.write(",".join(cells) + "\n")


def _aggregate(values):
    present = [v for v in values if v is not None]
    if len(present) != len(values) or not present:
        return None, None
    arr = np.array(present)
    return float(arr.mean()), float(arr.std())


def compare_methods(configs, seeds, output_dir=None):
    """Run every config for every seed and tabulate shot metrics.

    All configs must share the same data and augmentation so the
    comparison is apples to apples. Improvement rows report each method's
    mean against the first config's mean (positive = better), following
    the error direction of each metric.
    """
    if not configs or not seeds:
        raise InvalidInputError("need at least one config and one seed")
    for cfg in configs[1:]:
        if cfg.data != configs[0].data or cfg.augment != configs[0].augment:
            raise InvalidInputError(
                "configs use different data or augmentation; comparison refused"
            )

    results = {}
    rows = []
    for ci, cfg in enumerate(configs):
        label = method_label(cfg)
        for seed in seeds:
            res = run_experiment(replace(cfg, seed=seed, output_dir=None))
            results[(ci, seed)] = res
            rows.append(
                {
                    "row_kind": "run",
                    "method": label,
                    "seed": seed,
                    **_metric_cells(res.metrics),
                }
            )

    means = {}
    for ci, cfg in enumerate(configs):
        label = method_label(cfg)
        mean_row = {"row_kind": "mean", "method": label, "seed": ""}
        std_row = {"row_kind": "std", "method": label, "seed": ""}
        for col in _METRIC_COLUMNS:
            values = [
                _metric_cells(results[(ci, seed)].metrics)[col] for seed in seeds
            ]
            mean_row[col], std_row[col] = _aggregate(values)
        means[ci] = mean_row
        rows.append(mean_row)
        rows.append(std_row)

    base = means[0]
    for ci, cfg in enumerate(configs[1:], start=1):
        row = {
            "row_kind": f"improvement_pct_vs_{base['method']}",
            "method": method_label(cfg),
            "seed": "",
        }
        for col in _METRIC_COLUMNS:
            b, v = base[col], means[ci][col]
            if b is None or v is None or b == 0:
                row[col] = None
            elif col.startswith("delta1"):
                row[col] = 100.0 * (v - b) / b
            else:
                row[col] = 100.0 * (b - v) / b
        rows.append(row)

    table = ComparisonTable(rows=rows, results=results)
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        table.to_csv(out / "comparison.csv")
    return table
