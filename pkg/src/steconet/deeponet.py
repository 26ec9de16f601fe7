"""Branch/trunk operator network: forward, weighted loss, exact gradients.

The prediction for a query ray is the inner product of the branch output
(which encodes the input function sampled at the fixed sensors) and the
trunk output (which encodes the ray features), scaled back to TECU. There
is no bias on the inner product. Affine layers run through the fixed-order
kernels in ``_accel`` so a row's output never depends on its batch.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _accel

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class MlpConfig:
    layer_widths: tuple
    activation: str = "relu"

    def __post_init__(self):
        if len(self.layer_widths) < 2:
            raise ValueError("need at least input and output widths")
        if any(w < 1 for w in self.layer_widths):
            raise ValueError("layer widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation '{self.activation}'")


class Mlp:
    """Fully connected net; hidden layers activated, final layer affine."""

    def __init__(self, config: MlpConfig, weights, biases):
        self.config = config
        self.weights = weights
        self.biases = biases

    @classmethod
    def init(cls, config: MlpConfig, rng: np.random.Generator) -> "Mlp":
        # He-style fan-in scaling
        weights, biases = [], []
        widths = config.layer_widths
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in),
                                      size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(config, weights, biases)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def _activate(self, z):
        if self.config.activation == "relu":
            return np.maximum(z, 0.0)
        return np.tanh(z)

    def _activate_grad(self, z):
        if self.config.activation == "relu":
            return (z > 0.0).astype(float)
        return 1.0 - np.tanh(z) ** 2

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.config.layer_widths[0]:
            raise ValueError(
                f"input width {x.shape[1]} != expected "
                f"{self.config.layer_widths[0]}")
        a = x
        for l in range(self.n_layers):
            z = _accel.affine(a, self.weights[l], self.biases[l])
            a = self._activate(z) if l < self.n_layers - 1 else z
        return a

    def forward_cached(self, x: np.ndarray):
        """Forward pass keeping pre-activations and activations."""
        a = np.atleast_2d(np.asarray(x, dtype=float))
        acts = [a]
        zs = []
        for l in range(self.n_layers):
            z = _accel.affine(acts[-1], self.weights[l], self.biases[l])
            if not np.all(np.isfinite(z)):
                raise FloatingPointError(
                    f"non-finite pre-activation in layer {l}")
            zs.append(z)
            a = self._activate(z) if l < self.n_layers - 1 else z
            acts.append(a)
        return zs, acts

    def backward_from_cache(self, zs, acts, grad_out):
        """Gradients of a scalar loss given d(loss)/d(output)."""
        grads_w = [None] * self.n_layers
        grads_b = [None] * self.n_layers
        g = grad_out
        for l in range(self.n_layers - 1, -1, -1):
            if l < self.n_layers - 1:
                g = g * self._activate_grad(zs[l])
            grads_w[l] = acts[l].T @ g
            grads_b[l] = g.sum(axis=0)
            if l > 0:
                g = _accel.matmul_nt(g, self.weights[l])
        return grads_w, grads_b

    def parameters(self):
        return self.weights + self.biases

    def copy_parameters(self):
        return [w.copy() for w in self.weights], \
               [b.copy() for b in self.biases]

    def set_parameters(self, weights, biases):
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]


def mlp_forward(mlp: Mlp, x: np.ndarray) -> np.ndarray:
    return mlp.forward(x)


@dataclass
class SensorSet:
    """The m fixed evaluation points feeding the branch network."""

    points: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return self.points.shape[0]


@dataclass
class Gradients:
    branch_w: list
    branch_b: list
    trunk_w: list
    trunk_b: list

    def arrays(self):
        return (self.branch_w + self.branch_b
                + self.trunk_w + self.trunk_b)


class OperatorModel:
    """Branch + trunk nets, the sensor set, and normalization state."""

    def __init__(self, branch: Mlp, trunk: Mlp, sensor_set: SensorSet,
                 sensor_values: np.ndarray, target_scale: float,
                 feature_bounds: np.ndarray):
        p_branch = branch.config.layer_widths[-1]
        p_trunk = trunk.config.layer_widths[-1]
        if p_branch != p_trunk:
            raise ValueError(
                f"branch and trunk output widths differ: {p_branch} vs "
                f"{p_trunk}")
        if branch.config.layer_widths[0] != sensor_set.m:
            raise ValueError("branch input width must equal sensor count")
        if sensor_values.shape != (sensor_set.m,):
            raise ValueError("one sensor value per sensor required")
        if target_scale <= 0.0:
            raise ValueError("target_scale must be positive")
        self.branch = branch
        self.trunk = trunk
        self.sensor_set = sensor_set
        self.sensor_values = np.asarray(sensor_values, dtype=float)
        self.target_scale = float(target_scale)
        self.feature_bounds = np.asarray(feature_bounds, dtype=float)
        self._beta = None

    @property
    def p(self) -> int:
        return self.branch.config.layer_widths[-1]

    def branch_input(self) -> np.ndarray:
        return (self.sensor_values / self.target_scale)[None, :]

    def beta(self, use_cache: bool = True) -> np.ndarray:
        """Branch output for the fixed sensor values (cached)."""
        if not use_cache or self._beta is None:
            beta = self.branch.forward(self.branch_input())[0]
            if not use_cache:
                return beta
            self._beta = beta
        return self._beta

    def invalidate_cache(self):
        self._beta = None

    def parameters(self):
        return self.branch.parameters() + self.trunk.parameters()


def operator_forward(model: OperatorModel, features: np.ndarray,
                     use_cache: bool = True) -> np.ndarray:
    """Predicted slant TEC (TECU) for a batch of feature rows."""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    beta = model.beta(use_cache)
    tau = model.trunk.forward(features)
    return (tau * beta).sum(axis=1) * model.target_scale


def weighted_loss(pred, target, weights) -> float:
    """sum_i w_i (pred_i - target_i)^2 / sum_j w_j."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if pred.shape != target.shape or pred.shape != weights.shape:
        raise ValueError(
            f"length mismatch: pred {pred.shape}, target {target.shape}, "
            f"weights {weights.shape}")
    if np.any(weights < 0.0):
        raise ValueError("weights must be >= 0")
    wsum = np.sum(weights)
    if wsum <= 0.0:
        raise ValueError("weights must have positive sum")
    return float(np.sum((pred - target) ** 2 * weights) / wsum)


def backward(model: OperatorModel, features: np.ndarray, targets,
             weights) -> tuple[float, Gradients]:
    """Loss and exact reverse-mode gradients for every parameter.

    The branch is shared by the whole batch, so its gradient accumulates
    the per-item contributions through the inner product.
    """
    features = np.atleast_2d(np.asarray(features, dtype=float))
    targets = np.asarray(targets, dtype=float)
    weights = np.asarray(weights, dtype=float)

    b_in = model.branch_input()
    b_zs, b_acts = model.branch.forward_cached(b_in)
    beta = b_acts[-1][0]
    t_zs, t_acts = model.trunk.forward_cached(features)
    tau = t_acts[-1]
    pred = (tau * beta).sum(axis=1) * model.target_scale

    loss = weighted_loss(pred, targets, weights)
    wsum = np.sum(weights)
    dpred = 2.0 * weights * (pred - targets) / wsum
    dinner = dpred * model.target_scale

    dtau = dinner[:, None] * beta[None, :]
    dbeta = dinner @ tau
    t_gw, t_gb = model.trunk.backward_from_cache(t_zs, t_acts, dtau)
    b_gw, b_gb = model.branch.backward_from_cache(b_zs, b_acts,
                                                  dbeta[None, :])
    return loss, Gradients(b_gw, b_gb, t_gw, t_gb)
