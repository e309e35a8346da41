"""Learned restart-policy pipeline: a random forest classifies the
distribution family (Weibull vs lognormal) and small feedforward networks
regress the distribution parameters.

The parameter networks train on a distribution-aware loss

    L(shape_hat, scale_hat) = |F(x | shape_hat, scale_hat) - p_emp|
                              + |shape_label - shape_hat|

anchored at one observed runtime x with its empirical cumulative
probability p_emp.  A separate network predicts the Weibull location with
an RMSE loss.  All gradients are computed analytically (closed-form
backpropagation including batch normalization); tests verify them against
central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import dist
from .dist import DistFamily, DistParams, RestartRecommendation
from .features import FeatureVector, NormalizationSpec, apply_normalization, project
from .rngutil import make_generator, substream_seed

# ---------------------------------------------------------------------------
# Random forest
# ---------------------------------------------------------------------------

# class encoding: index 0 is Weibull so that argmax tie-breaks resolve to it
FOREST_CLASSES = (DistFamily.WEIBULL, DistFamily.LOGNORMAL)
_CLASS_INDEX = {fam: i for i, fam in enumerate(FOREST_CLASSES)}


def entropy(counts) -> float:
    """Shannon entropy in bits of a label-count vector."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum()) + 0.0


@dataclass
class TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    label: int = -1

    @property
    def is_leaf(self) -> bool:
        return self.label >= 0

    def predict(self, x: np.ndarray) -> int:
        node = self
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.label

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"label": self.label}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "TreeNode":
        if "label" in d:
            return TreeNode(label=d["label"])
        return TreeNode(
            feature=d["feature"],
            threshold=d["threshold"],
            left=TreeNode.from_dict(d["left"]),
            right=TreeNode.from_dict(d["right"]),
        )


@dataclass
class ForestModel:
    trees: list
    n_features: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "n_features": self.n_features,
            "seed": self.seed,
            "trees": [t.to_dict() for t in self.trees],
        }

    @staticmethod
    def from_dict(d: dict) -> "ForestModel":
        return ForestModel(
            [TreeNode.from_dict(t) for t in d["trees"]], d["n_features"], d["seed"]
        )


def _best_split(X, y, candidates):
    """Highest-entropy-gain (feature, threshold) among candidate features,
    or None when nothing improves."""
    n = y.size
    parent = entropy(np.bincount(y, minlength=2))
    best = None
    best_gain = 1e-12
    for j in candidates:
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        ys = y[order]
        left = np.zeros(2)
        right = np.bincount(ys, minlength=2).astype(float)
        for i in range(n - 1):
            left[ys[i]] += 1
            right[ys[i]] -= 1
            if xs[i] == xs[i + 1]:
                continue
            w = (i + 1) / n
            gain = parent - w * entropy(left) - (1 - w) * entropy(right)
            if gain > best_gain:
                best_gain = gain
                best = (int(j), float((xs[i] + xs[i + 1]) / 2.0))
    return best


def _grow_tree(X, y, rng, n_candidates):
    counts = np.bincount(y, minlength=2)
    if counts.max() == y.size or y.size < 2:
        return TreeNode(label=int(counts.argmax()))
    candidates = np.sort(rng.choice(X.shape[1], size=n_candidates, replace=False))
    split = _best_split(X, y, candidates)
    if split is None:
        return TreeNode(label=int(counts.argmax()))
    j, thr = split
    mask = X[:, j] <= thr
    return TreeNode(
        feature=j,
        threshold=thr,
        left=_grow_tree(X[mask], y[mask], rng, n_candidates),
        right=_grow_tree(X[~mask], y[~mask], rng, n_candidates),
    )


def train_forest(X, y, n_trees: int = 50, seed: int = 0) -> ForestModel:
    """Bagged entropy trees: each tree grows on a bootstrap resample with
    sqrt(d) candidate features per split, until pure or fewer than 2
    samples.  Deterministic in the seed."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.shape[0] < 20:
        raise ValueError(f"need at least 20 examples, got {X.shape[0]}")
    if np.unique(y).size < 2:
        raise ValueError("training corpus contains a single class")
    n, d = X.shape
    n_candidates = max(1, int(math.ceil(math.sqrt(d))))
    trees = []
    for t in range(n_trees):
        rng = make_generator(substream_seed(seed, t))
        idx = rng.integers(0, n, size=n)
        trees.append(_grow_tree(X[idx], y[idx], rng, n_candidates))
    return ForestModel(trees, d, seed)


def forest_votes(m: ForestModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    votes = np.zeros(len(FOREST_CLASSES), dtype=int)
    for tree in m.trees:
        votes[tree.predict(x)] += 1
    return votes


def predict_family(m: ForestModel, x) -> DistFamily:
    """Majority vote over the trees; ties resolve to Weibull."""
    return FOREST_CLASSES[int(forest_votes(m, x).argmax())]


# ---------------------------------------------------------------------------
# Feedforward networks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden: tuple[int, ...] = (14, 7)
    output_dim: int = 2
    output_activation: str = "sigmoid"  # "sigmoid" | "exp"
    input_noise: float = 0.01
    hidden_noise: float = 0.12
    dropout: float = 0.01
    l2: float = 0.01
    bn_momentum: float = 0.99
    bn_epsilon: float = 1e-3


def location_net_spec(input_dim: int) -> MlpSpec:
    return MlpSpec(
        input_dim=input_dim, hidden=(14, 1), output_dim=1, output_activation="exp"
    )


@dataclass
class MlpModel:
    spec: MlpSpec
    params: dict
    running: dict
    history: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "spec": {
                "input_dim": self.spec.input_dim,
                "hidden": list(self.spec.hidden),
                "output_dim": self.spec.output_dim,
                "output_activation": self.spec.output_activation,
                "input_noise": self.spec.input_noise,
                "hidden_noise": self.spec.hidden_noise,
                "dropout": self.spec.dropout,
                "l2": self.spec.l2,
                "bn_momentum": self.spec.bn_momentum,
                "bn_epsilon": self.spec.bn_epsilon,
            },
            "params": {k: v.tolist() for k, v in self.params.items()},
            "running": {k: v.tolist() for k, v in self.running.items()},
            "history": self.history,
        }

    @staticmethod
    def from_dict(d: dict) -> "MlpModel":
        s = dict(d["spec"])
        s["hidden"] = tuple(s["hidden"])
        return MlpModel(
            MlpSpec(**s),
            {k: np.asarray(v, dtype=float) for k, v in d["params"].items()},
            {k: np.asarray(v, dtype=float) for k, v in d["running"].items()},
            d.get("history", {}),
        )


def init_params(spec: MlpSpec, rng: np.random.Generator) -> tuple[dict, dict]:
    """Glorot-uniform kernels, zero biases, identity batch-norm."""
    params: dict = {}
    running: dict = {}
    dims = (spec.input_dim, *spec.hidden)
    for i, (d_in, d_out) in enumerate(zip(dims, dims[1:])):
        limit = math.sqrt(6.0 / (d_in + d_out))
        params[f"W{i}"] = rng.uniform(-limit, limit, size=(d_in, d_out))
        params[f"b{i}"] = np.zeros(d_out)
        params[f"gamma{i}"] = np.ones(d_out)
        params[f"beta{i}"] = np.zeros(d_out)
        running[f"mean{i}"] = np.zeros(d_out)
        running[f"var{i}"] = np.ones(d_out)
    limit = math.sqrt(6.0 / (dims[-1] + spec.output_dim))
    params["Wout"] = rng.uniform(-limit, limit, size=(dims[-1], spec.output_dim))
    params["bout"] = np.zeros(spec.output_dim)
    return params, running


def zero_params(spec: MlpSpec) -> tuple[dict, dict]:
    """All-zero weights and biases (batch-norm gains included)."""
    params, running = init_params(spec, make_generator(0))
    for key in params:
        params[key] = np.zeros_like(params[key])
    return params, running


def sample_noise(spec: MlpSpec, batch_size: int, rng: np.random.Generator) -> dict:
    """Training-time stochasticity, pre-drawn so that a forward pass is a
    deterministic function of (params, X, noise)."""
    noise = {"input": spec.input_noise * rng.standard_normal((batch_size, spec.input_dim))}
    for i, width in enumerate(spec.hidden):
        noise[f"hidden{i}"] = spec.hidden_noise * rng.standard_normal(
            (batch_size, width)
        )
        keep = rng.random((batch_size, width)) >= spec.dropout
        noise[f"dropmask{i}"] = keep.astype(float) / (1.0 - spec.dropout)
    return noise


def forward(
    spec: MlpSpec,
    params: dict,
    X: np.ndarray,
    running: dict,
    noise: dict | None = None,
):
    """Forward pass; training mode iff noise is given.

    Returns (outputs, cache); cache carries intermediates for backward()
    and, in training mode, the batch statistics for the running-average
    update.
    """
    train = noise is not None
    H = X + noise["input"] if train else X.astype(float)
    cache = {"inputs": [], "Z": [], "A": [], "Ahat": [], "inv_std": [], "batch": []}
    for i in range(len(spec.hidden)):
        cache["inputs"].append(H)
        Z = H @ params[f"W{i}"] + params[f"b{i}"]
        A = np.tanh(Z)
        if train:
            mu = A.mean(axis=0)
            var = A.var(axis=0)
        else:
            mu = running[f"mean{i}"]
            var = running[f"var{i}"]
        inv_std = 1.0 / np.sqrt(var + spec.bn_epsilon)
        Ahat = (A - mu) * inv_std
        H = params[f"gamma{i}"] * Ahat + params[f"beta{i}"]
        if train:
            H = H + noise[f"hidden{i}"]
            H = H * noise[f"dropmask{i}"]
            cache["batch"].append((mu, var))
        cache["Z"].append(Z)
        cache["A"].append(A)
        cache["Ahat"].append(Ahat)
        cache["inv_std"].append(inv_std)
    cache["inputs"].append(H)
    Zout = H @ params["Wout"] + params["bout"]
    if spec.output_activation == "sigmoid":
        Y = special.expit(Zout)
    elif spec.output_activation == "exp":
        Y = np.exp(Zout)
    else:
        raise ValueError(f"unknown output activation {spec.output_activation!r}")
    cache["Zout"] = Zout
    cache["Y"] = Y
    return Y, cache


def backward(
    spec: MlpSpec, params: dict, cache: dict, dY: np.ndarray, noise: dict | None
) -> dict:
    """Analytic gradients of (data loss + l2 kernel penalty) given dL/dY."""
    train = noise is not None
    Y = cache["Y"]
    if spec.output_activation == "sigmoid":
        dZ = dY * Y * (1.0 - Y)
    else:
        dZ = dY * Y
    grads = {
        "Wout": cache["inputs"][-1].T @ dZ + 2.0 * spec.l2 * params["Wout"],
        "bout": dZ.sum(axis=0),
    }
    dH = dZ @ params["Wout"].T
    for i in reversed(range(len(spec.hidden))):
        if train:
            dH = dH * noise[f"dropmask{i}"]
        Ahat = cache["Ahat"][i]
        inv_std = cache["inv_std"][i]
        grads[f"gamma{i}"] = (dH * Ahat).sum(axis=0)
        grads[f"beta{i}"] = dH.sum(axis=0)
        dAhat = dH * params[f"gamma{i}"]
        if train:
            B = Ahat.shape[0]
            dA = (
                inv_std
                / B
                * (
                    B * dAhat
                    - dAhat.sum(axis=0)
                    - Ahat * (dAhat * Ahat).sum(axis=0)
                )
            )
        else:
            dA = dAhat * inv_std
        A = cache["A"][i]
        dZh = dA * (1.0 - A * A)
        grads[f"W{i}"] = cache["inputs"][i].T @ dZh + 2.0 * spec.l2 * params[f"W{i}"]
        grads[f"b{i}"] = dZh.sum(axis=0)
        dH = dZh @ params[f"W{i}"].T
    return grads


def l2_penalty(spec: MlpSpec, params: dict) -> float:
    total = sum(float((params[f"W{i}"] ** 2).sum()) for i in range(len(spec.hidden)))
    total += float((params["Wout"] ** 2).sum())
    return spec.l2 * total


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamScaler:
    """Affine map from sigmoid outputs in (0,1) to parameter ranges
    observed on the training corpus."""

    lows: tuple[float, ...]
    highs: tuple[float, ...]

    def to_params(self, y: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lows)
        hi = np.asarray(self.highs)
        return lo + y * (hi - lo)

    def span(self) -> np.ndarray:
        return np.asarray(self.highs) - np.asarray(self.lows)

    def to_dict(self) -> dict:
        return {"lows": list(self.lows), "highs": list(self.highs)}

    @staticmethod
    def from_dict(d: dict) -> "ParamScaler":
        return ParamScaler(tuple(d["lows"]), tuple(d["highs"]))


def _cdf_and_grads(family: DistFamily, shape: float, scale: float, x: float):
    """F(x | shape, scale) at location 0 and its partials.

    For the lognormal, `scale` is the log-scale mu; for the Weibull it is
    the usual scale lambda.
    """
    if family is DistFamily.LOGNORMAL:
        u = (math.log(x) - scale) / shape
        f = float(special.ndtr(u))
        phi = math.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)
        return f, -phi * u / shape, -phi / shape
    if family is DistFamily.WEIBULL:
        w = (x / scale) ** shape
        e = math.exp(-w)
        f = -math.expm1(-w)
        ln_ratio = math.log(x / scale)
        return f, e * w * ln_ratio, -e * w * shape / scale
    raise ValueError("parameter networks support Weibull and lognormal only")


def eq3_loss(
    pred_shape: float,
    pred_scale: float,
    label_shape: float,
    anchor_x: float,
    anchor_prob: float,
    family: DistFamily,
) -> float:
    """|F(anchor | predictions) - anchor_prob| + |label_shape - pred_shape|."""
    f, _, _ = _cdf_and_grads(family, pred_shape, pred_scale, anchor_x)
    return abs(f - anchor_prob) + abs(label_shape - pred_shape)


def _sign(v: float) -> float:
    # subgradient at the kink is taken as 0
    return float(np.sign(v))


def _eq3_batch(outputs, targets, scaler: ParamScaler, family: DistFamily):
    """Mean anchored loss over a batch and its gradient wrt the sigmoid
    outputs.  targets rows: (label_shape, anchor_x, anchor_prob)."""
    B = outputs.shape[0]
    theta = scaler.to_params(outputs)
    span = scaler.span()
    total = 0.0
    grad = np.zeros_like(outputs)
    for i in range(B):
        shape_hat, scale_hat = float(theta[i, 0]), float(theta[i, 1])
        label_shape, anchor_x, anchor_prob = targets[i]
        f, df_dshape, df_dscale = _cdf_and_grads(family, shape_hat, scale_hat, anchor_x)
        total += abs(f - anchor_prob) + abs(label_shape - shape_hat)
        s1 = _sign(f - anchor_prob)
        grad[i, 0] = (s1 * df_dshape + _sign(shape_hat - label_shape)) * span[0]
        grad[i, 1] = s1 * df_dscale * span[1]
    return total / B, grad / B


def _rmse_batch(outputs, targets):
    diff = outputs - targets
    mse = float((diff**2).mean())
    rmse = math.sqrt(mse)
    if rmse == 0.0:
        return 0.0, np.zeros_like(outputs)
    return rmse, diff / (diff.size * rmse)


def batch_loss_and_grads(
    model: MlpModel,
    X: np.ndarray,
    targets: np.ndarray,
    noise: dict | None,
    loss: str,
    scaler: ParamScaler | None = None,
    family: DistFamily | None = None,
):
    """Total loss (data + l2 penalty) and analytic parameter gradients for
    one batch.  Pass the same noise dict to reproduce a training step."""
    Y, cache = forward(model.spec, model.params, X, model.running, noise)
    if loss == "rmse":
        data_loss, dY = _rmse_batch(Y, targets)
    elif loss == "eq3":
        data_loss, dY = _eq3_batch(Y, targets, scaler, family)
    else:
        raise ValueError(f"unknown loss {loss!r}")
    grads = backward(model.spec, model.params, cache, dY, noise)
    return data_loss + l2_penalty(model.spec, model.params), grads, cache


def _clip_by_norm(grads: dict, clip: float) -> dict:
    out = {}
    for k, g in grads.items():
        norm = float(np.sqrt((g**2).sum()))
        out[k] = g * (clip / norm) if norm > clip else g
    return out


@dataclass
class TrainConfig:
    learning_rate: float = 5e-4
    clipnorm: float = 0.5
    batch_size: int = 16
    epochs: int = 2000
    patience: int = 100
    val_fraction: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-7


def train_mlp(
    X,
    targets,
    spec: MlpSpec,
    loss: str,
    seed: int,
    scaler: ParamScaler | None = None,
    family: DistFamily | None = None,
    config: TrainConfig | None = None,
) -> MlpModel:
    """Mini-batch training with the adaptive-moment optimizer, per-tensor
    gradient-norm clipping, and early stopping on a validation split.

    Deterministic in the seed: initialization, batch order, noise draws and
    the validation split all derive from it.
    """
    cfg = config or TrainConfig()
    X = np.asarray(X, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("empty training set")
    if X.shape[1] != spec.input_dim:
        raise ValueError("input dimension mismatch")
    if targets.ndim == 1:
        targets = targets[:, None]
    if loss == "rmse" and targets.shape[1] != spec.output_dim:
        raise ValueError("target dimension mismatch")

    rng = make_generator(seed)
    params, running = init_params(spec, rng)
    model = MlpModel(spec, params, running)

    n = X.shape[0]
    perm = rng.permutation(n)
    n_val = int(round(cfg.val_fraction * n))
    n_val = min(max(n_val, 1 if n >= 5 else 0), n - 1)
    val_idx, train_idx = perm[:n_val], perm[n_val:]

    m_state = {k: np.zeros_like(v) for k, v in params.items()}
    v_state = {k: np.zeros_like(v) for k, v in params.items()}
    step = 0
    best_val = math.inf
    best_params = {k: v.copy() for k, v in params.items()}
    best_running = {k: v.copy() for k, v in running.items()}
    since_best = 0
    curve = []

    def eval_loss(idx) -> float:
        Y, _ = forward(spec, model.params, X[idx], model.running, None)
        if loss == "rmse":
            return _rmse_batch(Y, targets[idx])[0]
        return _eq3_batch(Y, targets[idx], scaler, family)[0]

    for epoch in range(cfg.epochs):
        order = train_idx[rng.permutation(train_idx.size)]
        for start in range(0, order.size, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            noise = sample_noise(spec, batch.size, rng)
            _loss_val, grads, cache = batch_loss_and_grads(
                model, X[batch], targets[batch], noise, loss, scaler, family
            )
            grads = _clip_by_norm(grads, cfg.clipnorm)
            step += 1
            for k in params:
                m_state[k] = cfg.beta1 * m_state[k] + (1 - cfg.beta1) * grads[k]
                v_state[k] = cfg.beta2 * v_state[k] + (1 - cfg.beta2) * grads[k] ** 2
                m_hat = m_state[k] / (1 - cfg.beta1**step)
                v_hat = v_state[k] / (1 - cfg.beta2**step)
                params[k] -= (
                    cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_epsilon)
                )
            for i, (mu, var) in enumerate(cache["batch"]):
                mom = spec.bn_momentum
                running[f"mean{i}"] = mom * running[f"mean{i}"] + (1 - mom) * mu
                running[f"var{i}"] = mom * running[f"var{i}"] + (1 - mom) * var

        monitor = eval_loss(val_idx if n_val else train_idx)
        curve.append(monitor)
        if monitor < best_val - 1e-12:
            best_val = monitor
            best_params = {k: v.copy() for k, v in params.items()}
            best_running = {k: v.copy() for k, v in running.items()}
            since_best = 0
        else:
            since_best += 1
            if since_best > cfg.patience:
                break

    model.params = best_params
    model.running = best_running
    model.history = {
        "epochs_run": len(curve),
        "best_monitor": best_val,
        "seed": seed,
        "loss": loss,
        "curve": [float(c) for c in curve],
    }
    return model


def predict_mlp(model: MlpModel, X) -> np.ndarray:
    """Inference: no noise, no dropout, accumulated batch-norm statistics."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    Y, _ = forward(model.spec, model.params, X, model.running, None)
    return Y[0] if single else Y


# ---------------------------------------------------------------------------
# Pipeline: forest + parameter nets + location net
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainingExample:
    features: FeatureVector  # raw, un-normalized
    label_family: DistFamily  # Weibull or lognormal, by higher KS p-value
    label_params: DistParams
    anchor_x: float
    anchor_prob: float


def make_training_example(
    features: FeatureVector, fits: dict, rtd_sample
) -> TrainingExample:
    """Build one example from an instance's features, its per-family fits,
    and its RTD sample.  The anchor is the median-rank observation with its
    empirical cumulative level."""
    p_w = fits[DistFamily.WEIBULL].p_value
    p_l = fits[DistFamily.LOGNORMAL].p_value
    label_family = DistFamily.WEIBULL if p_w >= p_l else DistFamily.LOGNORMAL
    label_params = fits[label_family].params
    flips = rtd_sample.flips
    k = (len(flips) - 1) // 2
    anchor_x = float(flips[k])
    anchor_prob = sum(1 for v in flips if v <= anchor_x) / rtd_sample.total_runs
    return TrainingExample(features, label_family, label_params, anchor_x, anchor_prob)


@dataclass(frozen=True)
class PipelinePrediction:
    family: DistFamily
    params: DistParams
    recommendation: RestartRecommendation

    def to_dict(self) -> dict:
        return {
            "family": self.family.label,
            "shape": self.params.shape,
            "scale": self.params.scale,
            "location": self.params.location,
            "recommendation": self.recommendation.to_dict(),
        }


@dataclass
class PipelineModel:
    normalization: NormalizationSpec
    feature_names: list[str]
    forest: ForestModel
    weibull_net: MlpModel
    weibull_scaler: ParamScaler
    lognormal_net: MlpModel
    lognormal_scaler: ParamScaler
    location_net: MlpModel
    location_scale: float
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "normalization": self.normalization.to_dict(),
            "feature_names": list(self.feature_names),
            "forest": self.forest.to_dict(),
            "weibull_net": self.weibull_net.to_dict(),
            "weibull_scaler": self.weibull_scaler.to_dict(),
            "lognormal_net": self.lognormal_net.to_dict(),
            "lognormal_scaler": self.lognormal_scaler.to_dict(),
            "location_net": self.location_net.to_dict(),
            "location_scale": self.location_scale,
            "metadata": self.metadata,
        }

    @staticmethod
    def from_dict(d: dict) -> "PipelineModel":
        return PipelineModel(
            NormalizationSpec.from_dict(d["normalization"]),
            list(d["feature_names"]),
            ForestModel.from_dict(d["forest"]),
            MlpModel.from_dict(d["weibull_net"]),
            ParamScaler.from_dict(d["weibull_scaler"]),
            MlpModel.from_dict(d["lognormal_net"]),
            ParamScaler.from_dict(d["lognormal_scaler"]),
            MlpModel.from_dict(d["location_net"]),
            d["location_scale"],
            d.get("metadata", {}),
        )


def _natural_params(example: TrainingExample) -> tuple[float, float]:
    """(shape, scale) in the nets' parameterization: log-scale mu for the
    lognormal, plain scale for the Weibull."""
    p = example.label_params
    if example.label_family is DistFamily.LOGNORMAL:
        return p.shape, math.log(p.scale)
    return p.shape, p.scale


def _scaler_from(values: np.ndarray) -> ParamScaler:
    lo = values.min(axis=0)
    hi = values.max(axis=0)
    return ParamScaler(tuple(lo - 1e-9), tuple(hi + 1e-9))


def train_pipeline(
    examples: list[TrainingExample],
    seed: int = 0,
    n_trees: int = 50,
    train_config: TrainConfig | None = None,
    selection_threshold: float = 0.05,
) -> PipelineModel:
    """Fit normalization, feature selection, the family forest, the two
    parameter networks, and the location network from labeled examples."""
    from .features import fit_normalization, select_by_variance

    if len(examples) < 20:
        raise ValueError("need at least 20 training examples")
    norm = fit_normalization([e.features for e in examples])
    normalized = [apply_normalization(norm, e.features) for e in examples]
    names = select_by_variance(normalized, selection_threshold)
    X = np.array([project(v, names) for v in normalized])
    y = np.array([_CLASS_INDEX[e.label_family] for e in examples])

    forest = train_forest(X, y, n_trees=n_trees, seed=substream_seed(seed, 1))

    nets = {}
    scalers = {}
    for fam in (DistFamily.WEIBULL, DistFamily.LOGNORMAL):
        mask = y == _CLASS_INDEX[fam]
        Xf = X[mask]
        fam_examples = [e for e, keep in zip(examples, mask) if keep]
        theta = np.array([_natural_params(e) for e in fam_examples])
        scaler = _scaler_from(theta)
        anchors = np.array(
            [
                (
                    _natural_params(e)[0],
                    e.anchor_x - (e.label_params.location if fam is DistFamily.WEIBULL else 0.0),
                    e.anchor_prob,
                )
                for e in fam_examples
            ]
        )
        spec = MlpSpec(input_dim=X.shape[1])
        nets[fam] = train_mlp(
            Xf,
            anchors,
            spec,
            loss="eq3",
            seed=substream_seed(seed, 2 + _CLASS_INDEX[fam]),
            scaler=scaler,
            family=fam,
            config=train_config,
        )
        scalers[fam] = scaler

    w_mask = y == _CLASS_INDEX[DistFamily.WEIBULL]
    locations = np.array(
        [e.label_params.location for e, keep in zip(examples, w_mask) if keep]
    )
    loc_scale = float(max(locations.max(), 1e-9))
    location_net = train_mlp(
        X[w_mask],
        locations / loc_scale,
        location_net_spec(X.shape[1]),
        loss="rmse",
        seed=substream_seed(seed, 5),
        config=train_config,
    )

    return PipelineModel(
        normalization=norm,
        feature_names=names,
        forest=forest,
        weibull_net=nets[DistFamily.WEIBULL],
        weibull_scaler=scalers[DistFamily.WEIBULL],
        lognormal_net=nets[DistFamily.LOGNORMAL],
        lognormal_scaler=scalers[DistFamily.LOGNORMAL],
        location_net=location_net,
        location_scale=loc_scale,
        metadata={"seed": seed, "n_examples": len(examples)},
    )


def predict_params(model: PipelineModel, family: DistFamily, x: np.ndarray) -> DistParams:
    """Distribution parameters for a normalized, selected feature row."""
    if family is DistFamily.LOGNORMAL:
        y = predict_mlp(model.lognormal_net, x)
        shape, mu = model.lognormal_scaler.to_params(y)
        return DistParams(shape=float(shape), scale=float(math.exp(mu)), location=0.0)
    if family is DistFamily.WEIBULL:
        y = predict_mlp(model.weibull_net, x)
        shape, scale = model.weibull_scaler.to_params(y)
        loc = float(predict_mlp(model.location_net, x)[0] * model.location_scale)
        return DistParams(shape=float(shape), scale=float(scale), location=max(loc, 0.0))
    raise ValueError("pipeline predicts Weibull or lognormal parameters only")


def degrade_below_location(
    rec: RestartRecommendation, location: float, unrestarted_mean: float
) -> RestartRecommendation:
    """Restart times at or below the support edge carry no usable signal;
    they degrade to not restarting."""
    if rec.should_restart and rec.t <= location:
        return RestartRecommendation(t=None, expected_runtime=unrestarted_mean)
    return rec


def pipeline_predict(model: PipelineModel, features: FeatureVector) -> PipelinePrediction:
    """Family from the forest, parameters from the nets, restart time from
    the fitted-distribution calculus on the predicted parameters."""
    normalized = apply_normalization(model.normalization, features)
    x = project(normalized, model.feature_names)
    family = predict_family(model.forest, x)
    params = predict_params(model, family, x)
    rec = dist.optimal_restart_time(family, params)
    rec = degrade_below_location(rec, params.location, dist.mean(family, params))
    return PipelinePrediction(family, params, rec)
