"""Comparison models: a direct-regression MLP and a random forest.

Both consume the exact same feature layout as the operator model (one
featurization code path) and learn the ray-features -> slant TEC mapping
directly. The MLP baseline uses the unweighted squared-error loss; the
forest grows variance-minimizing trees on bootstrap resamples with
sqrt(d) feature subsampling per split.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .dataset import (FEATURE_DIM, featurize_records, partition_records,
                      targets_tecu)
from .deeponet import Mlp, MlpConfig
from .errors import ConfigError
from .training import (Adam, TrainConfig, extrapolation_flags,
                       feature_bounds_of, run_training_loop)

ANN_PRESET_LAYERS = {"desk": 8, "full": 46}


@dataclass(frozen=True)
class AnnConfig:
    epochs: int = 80
    batch_size: int = 2048
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    early_stop_patience: int = 15
    preset: str = "desk"
    hidden_layers: int | None = None  # None: 8 desk / 46 full
    hidden_width: int = 64
    activation: str = "relu"
    max_train_records: int | None = None

    def __post_init__(self):
        if self.preset not in ANN_PRESET_LAYERS:
            raise ConfigError(f"unknown preset '{self.preset}'")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")

    def n_hidden(self) -> int:
        if self.hidden_layers is not None:
            return self.hidden_layers
        return ANN_PRESET_LAYERS[self.preset]


class AnnBaseline:
    """Plain MLP from the 10 ray features to one TECU value."""

    def __init__(self, mlp: Mlp, target_scale: float,
                 feature_bounds: np.ndarray, history: dict | None = None):
        widths = mlp.config.layer_widths
        if widths[0] != FEATURE_DIM or widths[-1] != 1:
            raise ValueError("baseline MLP must map features to one output")
        self.mlp = mlp
        self.target_scale = float(target_scale)
        self.feature_bounds = np.asarray(feature_bounds, dtype=float)
        self.history = history or {}

    def predict_features(self, features: np.ndarray) -> np.ndarray:
        return self.mlp.forward(features)[:, 0] * self.target_scale

    def predict_records(self, records, return_flags: bool = False):
        features = featurize_records(records)
        pred = self.predict_features(features)
        if return_flags:
            return pred, extrapolation_flags(features, self.feature_bounds)
        return pred

    def to_payload(self) -> dict:
        from .training import _mlp_to_dict
        return {
            "mlp": _mlp_to_dict(self.mlp),
            "target_scale": self.target_scale,
            "feature_bounds": self.feature_bounds.tolist(),
            "history": self.history,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "AnnBaseline":
        from .training import _mlp_from_dict
        return cls(_mlp_from_dict(payload["mlp"]), payload["target_scale"],
                   np.array(payload["feature_bounds"], dtype=float),
                   payload["history"])


def ann_train(records, split, config: AnnConfig,
              epoch_hook=None) -> AnnBaseline:
    train_recs, val_recs, _ = partition_records(records, split)
    if not train_recs:
        raise ConfigError("training partition is empty")

    seq = np.random.SeedSequence(config.seed)
    sub_rng, init_rng, shuf_rng = [np.random.default_rng(s)
                                   for s in seq.spawn(3)]
    if (config.max_train_records is not None
            and len(train_recs) > config.max_train_records):
        keep = sub_rng.choice(len(train_recs), config.max_train_records,
                              replace=False)
        train_recs = [train_recs[i] for i in sorted(keep)]
    if config.batch_size > len(train_recs):
        raise ConfigError("batch_size exceeds training set size")

    x_train = featurize_records(train_recs)
    y_train = targets_tecu(train_recs)
    x_val = featurize_records(val_recs) if val_recs else None
    y_val = targets_tecu(val_recs) if val_recs else None

    scale = float(np.max(np.abs(y_train)))
    if scale <= 0.0:
        scale = 1.0
    bounds = feature_bounds_of(x_train)

    widths = (FEATURE_DIM,) + (config.hidden_width,) * config.n_hidden() + (1,)
    mlp = Mlp.init(MlpConfig(widths, config.activation), init_rng)
    model = AnnBaseline(mlp, scale, bounds)
    opt = Adam(mlp.parameters(), config.learning_rate, config.adam_beta1,
               config.adam_beta2, config.adam_eps)

    loop_cfg = TrainConfig(
        epochs=config.epochs, batch_size=config.batch_size,
        learning_rate=config.learning_rate, seed=config.seed,
        early_stop_patience=config.early_stop_patience)

    def step_fn(idx):
        zs, acts = mlp.forward_cached(x_train[idx])
        pred = acts[-1][:, 0] * scale
        err = pred - y_train[idx]
        loss = float(np.mean(err**2))
        dout = (2.0 * err / err.size * scale)[:, None]
        gw, gb = mlp.backward_from_cache(zs, acts, dout)
        opt.step(gw + gb)
        return loss

    def val_fn():
        if x_val is None:
            return None
        err = model.predict_features(x_val) - y_val
        return float(np.mean(err**2))

    def snapshot_fn():
        return mlp.copy_parameters()

    def restore_fn(params):
        mlp.set_parameters(*params)

    history = run_training_loop(len(train_recs), loop_cfg, shuf_rng, step_fn,
                                val_fn, snapshot_fn, restore_fn, epoch_hook)
    model.history = history
    return model


def ann_predict(model: AnnBaseline, records) -> np.ndarray:
    return model.predict_records(records)


# ---------------------------------------------------------------------------
# random forest

@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 46
    min_samples_leaf: int = 1
    seed: int = 0
    max_train_records: int | None = None

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError("n_trees must be >= 1")
        if self.max_depth < 0:
            raise ConfigError("max_depth must be >= 0")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be >= 1")


@dataclass
class Tree:
    """Flat array encoding; feature < 0 marks a leaf."""

    feature: np.ndarray = field(repr=False)
    threshold: np.ndarray = field(repr=False)
    left: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)
    value: np.ndarray = field(repr=False)

    def apply(self, features: np.ndarray) -> np.ndarray:
        return _accel.tree_apply(features, self.feature, self.threshold,
                                 self.left, self.right, self.value)

    def depth(self) -> int:
        depths = np.zeros(len(self.feature), dtype=int)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max()) if len(depths) else 0


def build_tree(x: np.ndarray, y: np.ndarray, rng: np.random.Generator,
               max_depth: int, min_samples_leaf: int = 1) -> Tree:
    """Grow one variance-minimizing regression tree.

    Each split draws sqrt(d) candidate features and keeps the threshold
    with the lowest summed squared error of the children.
    """
    n, d = x.shape
    n_feat = max(1, int(round(math.sqrt(d))))
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(0)
        right.append(0)
        value.append(0.0)
        return len(feature) - 1

    def grow(idx, depth):
        node = new_node()
        y_node = y[idx]
        value[node] = float(np.mean(y_node))
        if (depth >= max_depth or idx.size < 2 * min_samples_leaf
                or np.all(y_node == y_node[0])):
            return node
        candidates = rng.choice(d, size=n_feat, replace=False)
        best_sse = np.inf
        best_feat = -1
        best_thr = 0.0
        for f in candidates:
            order = np.argsort(x[idx, f], kind="stable")
            sse, thr = _accel.split_scan(
                np.ascontiguousarray(x[idx[order], f]),
                np.ascontiguousarray(y_node[order]), min_samples_leaf)
            if sse < best_sse:
                best_sse, best_feat, best_thr = sse, int(f), thr
        if best_feat < 0:
            return node
        mask = x[idx, best_feat] <= best_thr
        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = grow(idx[mask], depth + 1)
        right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(n), 0)
    return Tree(np.array(feature, dtype=np.int64),
                np.array(threshold, dtype=float),
                np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64),
                np.array(value, dtype=float))


class ForestBaseline:
    def __init__(self, trees, params: ForestParams,
                 feature_bounds: np.ndarray):
        self.trees = list(trees)
        self.params = params
        self.feature_bounds = np.asarray(feature_bounds, dtype=float)

    def predict_features(self, features: np.ndarray) -> np.ndarray:
        features = np.ascontiguousarray(features, dtype=float)
        total = np.zeros(features.shape[0])
        for tree in self.trees:
            total += tree.apply(features)
        return total / len(self.trees)

    def predict_records(self, records, return_flags: bool = False):
        features = featurize_records(records)
        pred = self.predict_features(features)
        if return_flags:
            return pred, extrapolation_flags(features, self.feature_bounds)
        return pred

    def to_payload(self) -> dict:
        from dataclasses import asdict
        return {
            "params": asdict(self.params),
            "feature_bounds": self.feature_bounds.tolist(),
            "trees": [{
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
            } for t in self.trees],
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "ForestBaseline":
        trees = [Tree(np.array(t["feature"], dtype=np.int64),
                      np.array(t["threshold"], dtype=float),
                      np.array(t["left"], dtype=np.int64),
                      np.array(t["right"], dtype=np.int64),
                      np.array(t["value"], dtype=float))
                 for t in payload["trees"]]
        return cls(trees, ForestParams(**payload["params"]),
                   np.array(payload["feature_bounds"], dtype=float))


def forest_train(records, split, params: ForestParams) -> ForestBaseline:
    train_recs, _, _ = partition_records(records, split)
    if not train_recs:
        raise ConfigError("training partition is empty")

    sub_rng = np.random.default_rng(
        np.random.SeedSequence(params.seed, spawn_key=(0xB00,)))
    if (params.max_train_records is not None
            and len(train_recs) > params.max_train_records):
        keep = sub_rng.choice(len(train_recs), params.max_train_records,
                              replace=False)
        train_recs = [train_recs[i] for i in sorted(keep)]

    x = np.ascontiguousarray(featurize_records(train_recs))
    y = targets_tecu(train_recs)
    bounds = feature_bounds_of(x)

    trees = []
    for i in range(params.n_trees):
        # per-tree seed keyed by index: extending n_trees never changes
        # already-built trees
        tree_rng = np.random.default_rng(
            np.random.SeedSequence(params.seed, spawn_key=(i,)))
        boot = tree_rng.integers(0, x.shape[0], size=x.shape[0])
        trees.append(build_tree(x[boot], y[boot], tree_rng,
                                params.max_depth, params.min_samples_leaf))
    return ForestBaseline(trees, params, bounds)


def forest_predict(model: ForestBaseline, records) -> np.ndarray:
    return model.predict_records(records)
