"""Training loop, Adam optimizer, early stopping, checkpoint persistence.

One training run: fit the kernel input function on a support subsample,
place the Sobol sensors and sample the input function there, then
minimize the weighted squared error with Adam, retaining the parameters
of the best validation epoch. Checkpoints are self-contained versioned
JSON; everything needed for prediction rides along.
"""

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import (FEATURE_DIM, compute_aifw, featurize_records,
                      partition_records, targets_tecu)
from .deeponet import (Gradients, Mlp, MlpConfig, OperatorModel, SensorSet,
                       backward, operator_forward, weighted_loss)
from .errors import CheckpointError, ConfigError, TrainingError
from .ioutil import atomic_write
from .kernel import (InputFunction, KernelSpec, eval_input_function,
                     fit_input_function, median_distance)
from .sobol import scale_to_domain, sobol_points

CHECKPOINT_FORMAT = "steconet-checkpoint"
CHECKPOINT_VERSION = 1

# architecture presets: hidden widths for (branch, trunk) and basis size p
PRESETS = {
    "desk": {"branch_hidden": (64,) * 4, "trunk_hidden": (64,) * 4, "p": 64},
    "full": {"branch_hidden": (64,) * 30, "trunk_hidden": (64,) * 16,
             "p": 300},
}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 80
    batch_size: int = 2048
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    early_stop_patience: int = 15
    aifw_lambda: float = 0.05
    aifw_bin_width: float = 1.0
    kernel_kind: str = "rbf"
    kernel_sigma: float | None = None  # None: median pairwise distance
    matern_norm: str = "l1"
    n_kernel: int = 512
    m_sensors: int = 300
    jitter: float | None = None
    preset: str = "desk"
    branch_hidden: tuple | None = None
    trunk_hidden: tuple | None = None
    p: int | None = None
    activation: str = "relu"
    max_train_records: int | None = None

    def __post_init__(self):
        for name in ("epochs", "batch_size", "early_stop_patience",
                     "n_kernel", "m_sensors"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.learning_rate <= 0.0:
            raise ConfigError("learning_rate must be positive")
        if self.aifw_lambda < 0.0:
            raise ConfigError("aifw_lambda must be >= 0")
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset '{self.preset}'")

    def architecture(self):
        base = PRESETS[self.preset]
        return {
            "branch_hidden": tuple(self.branch_hidden
                                   if self.branch_hidden is not None
                                   else base["branch_hidden"]),
            "trunk_hidden": tuple(self.trunk_hidden
                                  if self.trunk_hidden is not None
                                  else base["trunk_hidden"]),
            "p": self.p if self.p is not None else base["p"],
        }


@dataclass
class Checkpoint:
    model: OperatorModel
    input_function: InputFunction
    config: TrainConfig
    history: dict = field(default_factory=dict)


class Adam:
    """Standard Adam over a list of parameter arrays, updated in place."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def run_training_loop(n_train, config: TrainConfig, shuffle_rng, step_fn,
                      val_fn, snapshot_fn, restore_fn, epoch_hook=None):
    """Shared epoch loop: shuffling, best tracking, patience, divergence.

    Wall-clock timing reaches only the optional epoch_hook, never the
    returned history, so histories stay identical across reruns.
    """
    history = {"train_loss": [], "val_loss": []}
    best_val = math.inf
    best_params = snapshot_fn()
    best_epoch = -1
    stale = 0
    for epoch in range(config.epochs):
        started = time.perf_counter()
        perm = shuffle_rng.permutation(n_train)
        losses = []
        for lo in range(0, n_train, config.batch_size):
            losses.append(step_fn(perm[lo:lo + config.batch_size]))
        train_loss = float(np.mean(losses))
        if not math.isfinite(train_loss):
            raise TrainingError(f"training diverged at epoch {epoch}")
        val_loss = val_fn()
        if val_loss is None:
            val_loss = train_loss
        history["train_loss"].append(train_loss)
        history["val_loss"].append(float(val_loss))
        if epoch_hook is not None:
            epoch_hook(epoch, train_loss, float(val_loss),
                       time.perf_counter() - started)
        if val_loss < best_val:
            best_val = val_loss
            best_params = snapshot_fn()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.early_stop_patience:
                break
    restore_fn(best_params)
    history["best_epoch"] = best_epoch
    history["epochs_run"] = len(history["train_loss"])
    return history


def _pad_degenerate(bounds: np.ndarray) -> np.ndarray:
    flat = bounds[:, 1] <= bounds[:, 0]
    if np.any(flat):
        pad = np.maximum(1e-6, 1e-6 * np.abs(bounds[flat, 0]))
        bounds = bounds.copy()
        bounds[flat, 0] -= pad
        bounds[flat, 1] += pad
    return bounds


def feature_bounds_of(features: np.ndarray) -> np.ndarray:
    bounds = np.stack([features.min(axis=0), features.max(axis=0)], axis=1)
    return _pad_degenerate(bounds)


def build_input_function(features, targets, config: TrainConfig,
                         rng) -> InputFunction:
    n = features.shape[0]
    take = min(config.n_kernel, n)
    idx = rng.choice(n, size=take, replace=False)
    support_x = features[idx]
    support_y = targets[idx]
    sigma = config.kernel_sigma
    if sigma is None:
        norm = "l2" if config.kernel_kind == "rbf" else config.matern_norm
        sigma = median_distance(support_x, norm)
    spec = KernelSpec(config.kernel_kind, sigma, config.matern_norm)
    return fit_input_function(support_x, support_y, spec, config.jitter)


def place_sensors(bounds: np.ndarray, m: int) -> SensorSet:
    unit = sobol_points(FEATURE_DIM, m, skip=1)
    return SensorSet(scale_to_domain(unit, bounds))


def train(records, split, config: TrainConfig,
          epoch_hook=None) -> Checkpoint:
    train_recs, val_recs, _ = partition_records(records, split)
    if not train_recs:
        raise ConfigError("training partition is empty")

    seq = np.random.SeedSequence(config.seed)
    sub_rng, kern_rng, init_rng, shuf_rng = [
        np.random.default_rng(s) for s in seq.spawn(4)]

    if (config.max_train_records is not None
            and len(train_recs) > config.max_train_records):
        keep = sub_rng.choice(len(train_recs), config.max_train_records,
                              replace=False)
        train_recs = [train_recs[i] for i in sorted(keep)]

    if config.batch_size > len(train_recs):
        raise ConfigError(
            f"batch_size {config.batch_size} exceeds training set size "
            f"{len(train_recs)}")

    x_train = featurize_records(train_recs)
    y_train = targets_tecu(train_recs)
    x_val = featurize_records(val_recs) if val_recs else None
    y_val = targets_tecu(val_recs) if val_recs else None

    scale = float(np.max(np.abs(y_train)))
    if scale <= 0.0:
        scale = 1.0
    bounds = feature_bounds_of(x_train)

    input_function = build_input_function(x_train, y_train, config, kern_rng)
    sensors = place_sensors(bounds, config.m_sensors)
    sensor_values = eval_input_function(input_function, sensors.points)

    arch = config.architecture()
    branch_cfg = MlpConfig((config.m_sensors,) + arch["branch_hidden"]
                           + (arch["p"],), config.activation)
    trunk_cfg = MlpConfig((FEATURE_DIM,) + arch["trunk_hidden"]
                          + (arch["p"],), config.activation)
    branch = Mlp.init(branch_cfg, init_rng)
    trunk = Mlp.init(trunk_cfg, init_rng)
    model = OperatorModel(branch, trunk, sensors, sensor_values, scale,
                          bounds)

    weights = compute_aifw(y_train, config.aifw_bin_width,
                           config.aifw_lambda).weights
    opt = Adam(model.parameters(), config.learning_rate, config.adam_beta1,
               config.adam_beta2, config.adam_eps)

    def step_fn(idx):
        loss, grads = backward(model, x_train[idx], y_train[idx],
                               weights[idx])
        opt.step(grads.arrays())
        model.invalidate_cache()
        return loss

    def val_fn():
        if x_val is None:
            return None
        pred = operator_forward(model, x_val)
        return weighted_loss(pred, y_val, np.ones_like(y_val))

    def snapshot_fn():
        return (model.branch.copy_parameters(),
                model.trunk.copy_parameters())

    def restore_fn(params):
        model.branch.set_parameters(*params[0])
        model.trunk.set_parameters(*params[1])
        model.invalidate_cache()

    history = run_training_loop(len(train_recs), config, shuf_rng, step_fn,
                                val_fn, snapshot_fn, restore_fn, epoch_hook)
    history["n_train"] = len(train_recs)
    history["n_validation"] = 0 if x_val is None else len(val_recs)
    return Checkpoint(model, input_function, config, history)


def extrapolation_flags(features: np.ndarray,
                        bounds: np.ndarray) -> np.ndarray:
    """Flag rows with any feature outside twice the training bounds."""
    mid = (bounds[:, 0] + bounds[:, 1]) / 2.0
    half = (bounds[:, 1] - bounds[:, 0]) / 2.0
    lo = mid - 2.0 * half
    hi = mid + 2.0 * half
    return np.any((features < lo) | (features > hi), axis=1)


def predict(ckpt: Checkpoint, records, return_flags: bool = False):
    """Featurize rays and run the operator forward pass.

    Features outside twice the training bounds mark the prediction as an
    extrapolation (a warning flag, not an error).
    """
    features = featurize_records(records)
    pred = operator_forward(ckpt.model, features)
    if return_flags:
        return pred, extrapolation_flags(features, ckpt.model.feature_bounds)
    return pred


# ---------------------------------------------------------------------------
# checkpoint persistence (shared envelope; baselines use the same format)

def _mlp_to_dict(mlp: Mlp) -> dict:
    return {
        "layer_widths": list(mlp.config.layer_widths),
        "activation": mlp.config.activation,
        "weights": [w.tolist() for w in mlp.weights],
        "biases": [b.tolist() for b in mlp.biases],
    }


def _mlp_from_dict(d: dict) -> Mlp:
    cfg = MlpConfig(tuple(d["layer_widths"]), d["activation"])
    return Mlp(cfg, [np.array(w, dtype=float) for w in d["weights"]],
               [np.array(b, dtype=float) for b in d["biases"]])


def _input_function_to_dict(u: InputFunction) -> dict:
    return {
        "kernel": {"kind": u.kernel.kind, "sigma": u.kernel.sigma,
                   "matern_norm": u.kernel.matern_norm},
        "support_points": u.support_points.tolist(),
        "alpha": u.alpha.tolist(),
        "support_targets": u.support_targets.tolist(),
        "jitter": u.jitter,
    }


def _input_function_from_dict(d: dict) -> InputFunction:
    spec = KernelSpec(d["kernel"]["kind"], d["kernel"]["sigma"],
                      d["kernel"]["matern_norm"])
    return InputFunction(spec,
                         np.array(d["support_points"], dtype=float),
                         np.array(d["alpha"], dtype=float),
                         np.array(d["support_targets"], dtype=float),
                         d["jitter"])


def _config_to_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    for key in ("branch_hidden", "trunk_hidden"):
        if d[key] is not None:
            d[key] = list(d[key])
    return d


def _config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    for key in ("branch_hidden", "trunk_hidden"):
        if d.get(key) is not None:
            d[key] = tuple(d[key])
    return TrainConfig(**d)


def checkpoint_to_payload(ckpt: Checkpoint) -> dict:
    return {
        "branch": _mlp_to_dict(ckpt.model.branch),
        "trunk": _mlp_to_dict(ckpt.model.trunk),
        "sensor_points": ckpt.model.sensor_set.points.tolist(),
        "sensor_values": ckpt.model.sensor_values.tolist(),
        "target_scale": ckpt.model.target_scale,
        "feature_bounds": ckpt.model.feature_bounds.tolist(),
        "input_function": _input_function_to_dict(ckpt.input_function),
        "config": _config_to_dict(ckpt.config),
        "history": ckpt.history,
    }


def checkpoint_from_payload(payload: dict) -> Checkpoint:
    model = OperatorModel(
        _mlp_from_dict(payload["branch"]),
        _mlp_from_dict(payload["trunk"]),
        SensorSet(np.array(payload["sensor_points"], dtype=float)),
        np.array(payload["sensor_values"], dtype=float),
        payload["target_scale"],
        np.array(payload["feature_bounds"], dtype=float))
    return Checkpoint(model,
                      _input_function_from_dict(payload["input_function"]),
                      _config_from_dict(payload["config"]),
                      payload["history"])


def save_checkpoint(obj, path):
    from .baselines import AnnBaseline, ForestBaseline  # local: avoid cycle
    if isinstance(obj, Checkpoint):
        kind, payload = "deeponet", checkpoint_to_payload(obj)
    elif isinstance(obj, AnnBaseline):
        kind, payload = "ann", obj.to_payload()
    elif isinstance(obj, ForestBaseline):
        kind, payload = "forest", obj.to_payload()
    else:
        raise TypeError(f"cannot checkpoint {type(obj).__name__}")
    envelope = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
                "kind": kind, "payload": payload}
    with atomic_write(path) as fh:
        json.dump(envelope, fh)


def load_checkpoint(path):
    from .baselines import AnnBaseline, ForestBaseline  # local: avoid cycle
    try:
        with open(path) as fh:
            envelope = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(envelope, dict) \
            or envelope.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a checkpoint file")
    if envelope.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {envelope.get('version')} unsupported "
            f"(expected {CHECKPOINT_VERSION})")
    kind = envelope.get("kind")
    try:
        if kind == "deeponet":
            return checkpoint_from_payload(envelope["payload"])
        if kind == "ann":
            return AnnBaseline.from_payload(envelope["payload"])
        if kind == "forest":
            return ForestBaseline.from_payload(envelope["payload"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupted checkpoint {path}: {exc}") from exc
    raise CheckpointError(f"unknown checkpoint kind '{kind}'")


def predict_any(model_obj, records, return_flags: bool = False):
    """Prediction dispatch across the three checkpointable model kinds."""
    from .baselines import AnnBaseline, ForestBaseline
    if isinstance(model_obj, Checkpoint):
        return predict(model_obj, records, return_flags)
    if isinstance(model_obj, (AnnBaseline, ForestBaseline)):
        return model_obj.predict_records(records, return_flags)
    raise TypeError(f"cannot predict with {type(model_obj).__name__}")
