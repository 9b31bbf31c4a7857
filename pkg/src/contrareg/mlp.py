"""Dense MLP encoder + affine regression head with exact manual backprop.

Everything is float64. The encoder maps inputs to feature rows Z, the
regressor maps Z to predictions. `backward` returns the exact derivative
of <dZ, Z> + <dYhat, Yhat> with respect to every parameter, so any loss
whose feature/prediction gradients are known can be trained. Adam is the
only optimizer provided.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, TrainingDivergedError

ACTIVATIONS = ("relu", "identity")

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class Layer:
    w: np.ndarray  # (fan_in, fan_out)
    b: np.ndarray  # (fan_out,)
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise InvalidInputError(f"unknown activation {self.activation!r}")
        if self.w.ndim != 2 or self.b.shape != (self.w.shape[1],):
            raise InvalidInputError("layer weight/bias shapes disagree")


@dataclass
class MlpModel:
    encoder: list
    regressor: Layer
    feature_dim: int
    version: int = 0  # bumped by adam_step; detects stale forward caches

    def __post_init__(self):
        width = self.encoder[0].w.shape[0]
        for layer in self.encoder:
            if layer.w.shape[0] != width:
                raise InvalidInputError("adjacent encoder layer widths disagree")
            width = layer.w.shape[1]
        if width != self.feature_dim:
            raise InvalidInputError(
                f"encoder output width {width} != feature_dim {self.feature_dim}"
            )
        if self.regressor.w.shape[0] != self.feature_dim:
            raise InvalidInputError("regressor input width != feature_dim")

    @property
    def input_dim(self):
        return self.encoder[0].w.shape[0]

    @property
    def label_dim(self):
        return self.regressor.w.shape[1]

    def parameters(self):
        """All parameter arrays in a fixed order (encoder w,b pairs, then head)."""
        out = []
        for layer in self.encoder:
            out.extend((layer.w, layer.b))
        out.extend((self.regressor.w, self.regressor.b))
        return out


@dataclass
class ForwardCache:
    model_version: int
    inputs: list  # input to each encoder layer
    pre: list  # pre-activation of each encoder layer
    z: np.ndarray
    model_id: int


@dataclass
class MlpGradients:
    encoder: list  # (dw, db) per layer
    regressor: tuple
    dx: np.ndarray

    def arrays(self):
        out = []
        for dw, db in self.encoder:
            out.extend((dw, db))
        out.extend(self.regressor)
        return out


def glorot_uniform(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def build_mlp(input_dim, hidden, feature_dim, label_dim=1, rng=None):
    """Construct an MLP: ReLU hidden layers, affine feature projection and head.

    The feature projection (last encoder layer) and the regression head are
    identity-activated so features and predictions are unconstrained reals.
    """
    rng = np.random.default_rng(rng)
    widths = [input_dim, *hidden, feature_dim]
    encoder = []
    for i in range(len(widths) - 1):
        act = "relu" if i < len(widths) - 2 else "identity"
        encoder.append(
            Layer(
                w=glorot_uniform(rng, widths[i], widths[i + 1]),
                b=np.zeros(widths[i + 1]),
                activation=act,
            )
        )
    regressor = Layer(
        w=glorot_uniform(rng, feature_dim, label_dim),
        b=np.zeros(label_dim),
        activation="identity",
    )
    return MlpModel(encoder=encoder, regressor=regressor, feature_dim=feature_dim)


def forward(model, x):
    """Run the model on a batch.

    Returns (z, yhat, cache) where z is (n, feature_dim), yhat is
    (n, label_dim) and cache suffices for an exact backward pass.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise InvalidInputError(
            f"input has shape {x.shape}, expected (n, {model.input_dim})"
        )
    if not np.isfinite(x).all():
        raise InvalidInputError("input contains non-finite values")

    inputs, pre = [], []
    a = x
    for layer in model.encoder:
        h = a @ layer.w + layer.b
        inputs.append(a)
        pre.append(h)
        a = np.maximum(h, 0.0) if layer.activation == "relu" else h
    z = a
    yhat = z @ model.regressor.w + model.regressor.b
    cache = ForwardCache(
        model_version=model.version, inputs=inputs, pre=pre, z=z, model_id=id(model)
    )
    return z, yhat, cache


def backward(model, cache, dz, dyhat):
    """Exact gradients of <dz, Z> + <dyhat, Yhat> w.r.t. parameters and input.

    dyhat flows through the regression head into the features, so the two
    upstream gradients may overlap.
    """
    if cache.model_id != id(model) or cache.model_version != model.version:
        raise InvalidInputError("stale cache: model was replaced or stepped")
    n = cache.z.shape[0]
    dz = np.asarray(dz, dtype=np.float64)
    dyhat = np.asarray(dyhat, dtype=np.float64)
    if dz.shape != (n, model.feature_dim):
        raise InvalidInputError(f"dz shape {dz.shape} does not match forward output")
    if dyhat.shape != (n, model.label_dim):
        raise InvalidInputError(
            f"dyhat shape {dyhat.shape} does not match forward output"
        )

    dw_reg = cache.z.T @ dyhat
    db_reg = dyhat.sum(axis=0)
    g = dz + dyhat @ model.regressor.w.T

    enc_grads = [None] * len(model.encoder)
    for idx in range(len(model.encoder) - 1, -1, -1):
        layer = model.encoder[idx]
        if layer.activation == "relu":
            g = g * (cache.pre[idx] > 0.0)
        enc_grads[idx] = (cache.inputs[idx].T @ g, g.sum(axis=0))
        g = g @ layer.w.T
    return MlpGradients(encoder=enc_grads, regressor=(dw_reg, db_reg), dx=g)


@dataclass
class AdamState:
    lr: float
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: list = field(default=None)
    v: list = field(default=None)


def adam_step(model, grads, state, lr=None):
    """Apply one Adam update in place; returns (model, state).

    `lr` overrides state.lr for this step (used by decay schedules).
    Raises TrainingDivergedError on any non-finite gradient.
    """
    params = model.parameters()
    garrays = grads.arrays()
    if len(params) != len(garrays):
        raise InvalidInputError("gradient structure does not match model")
    for g in garrays:
        if not np.isfinite(g).all():
            raise TrainingDivergedError("non-finite gradient")

    if state.m is None:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    for sm, p in zip(state.m, params):
        if sm.shape != p.shape:
            raise InvalidInputError("optimizer state shapes do not match model")

    state.step += 1
    b1, b2 = state.betas
    step_lr = state.lr if lr is None else lr
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, garrays, state.m, state.v):
        if state.weight_decay:
            g = g + state.weight_decay * p
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= step_lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    model.version += 1
    return model, state


def save_model(path, model):
    """Write a versioned checkpoint (npz with a JSON header). Round-trip exact."""
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "feature_dim": model.feature_dim,
        "encoder_activations": [layer.activation for layer in model.encoder],
    }
    arrays = {"meta": np.array(json.dumps(meta))}
    for i, layer in enumerate(model.encoder):
        arrays[f"enc{i}_w"] = layer.w
        arrays[f"enc{i}_b"] = layer.b
    arrays["reg_w"] = model.regressor.w
    arrays["reg_b"] = model.regressor.b
    np.savez(path, **arrays)


def load_model(path):
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta["format_version"] != CHECKPOINT_FORMAT_VERSION:
            raise InvalidInputError(
                f"unsupported checkpoint format {meta['format_version']}"
            )
        encoder = [
            Layer(w=data[f"enc{i}_w"], b=data[f"enc{i}_b"], activation=act)
            for i, act in enumerate(meta["encoder_activations"])
        ]
        regressor = Layer(w=data["reg_w"], b=data["reg_b"], activation="identity")
    return MlpModel(encoder=encoder, regressor=regressor, feature_dim=meta["feature_dim"])
