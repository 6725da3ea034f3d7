"""Language-conditioned goal predictor.

A causal dilated TCN encodes the observed window (relative to its first sample),
global average pooling summarises it, an embedding row represents the intent
label, and a shared MLP feeds three linear heads producing the means,
log-variances and mixture logits of a diagonal Gaussian mixture over the goal.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .geometry import IntentLabel, LocalPosition

LOG_2PI = math.log(2.0 * math.pi)
VARIANCE_FLOOR = 1e-12
CHECKPOINT_MAGIC = "ctaf-goalcast-checkpoint"
CHECKPOINT_SCHEMA = 1


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    n_traj: int = 128
    n_int: int = 32
    K: int = 5
    kernel: int = 3
    dilations: tuple[int, ...] = (1, 2, 4)
    residual: bool = True
    mlp_layers: int = 2
    mlp_hidden: int = 128
    intent_vocab: int = 17
    use_intent: bool = True
    entropy_mode: str = "repulsion"  # or "weight_entropy"
    lambda_rep: float = 0.01
    tau: float = 1.0  # km^2
    logvar_min: float = -27.0
    logvar_max: float = 10.0
    embed_init_std: float = 1.0
    input_scale: float = 1.0  # multiplies window-relative km before the TCN
    goal_scale: float = 3.0  # km per unit of mean-head output
    init_seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if list(self.dilations) != sorted(set(self.dilations)) or self.dilations[0] < 1:
            raise ValueError("dilations must be strictly increasing positive integers")
        if self.entropy_mode not in ("repulsion", "weight_entropy"):
            raise ValueError(f"unknown entropy_mode {self.entropy_mode!r}")
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))

    @property
    def levels(self) -> int:
        return len(self.dilations)

    @property
    def receptive_field(self) -> int:
        return (self.kernel - 1) * sum(self.dilations) + 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dilations"] = list(self.dilations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        d = {k: v for k, v in d.items() if k in known}
        if "dilations" in d:
            d["dilations"] = tuple(d["dilations"])
        return cls(**d)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class GoalMixture:
    means: np.ndarray  # (K, 3) km
    variances: np.ndarray  # (K, 3) km^2
    weights: np.ndarray  # (K,)

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64).reshape(-1, 3)
        self.variances = np.asarray(self.variances, dtype=np.float64).reshape(-1, 3)
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if not (len(self.means) == len(self.variances) == len(self.weights)):
            raise ValueError("mixture component counts disagree")
        if np.any(self.variances <= 0) or np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("invalid mixture parameters")

    @property
    def K(self) -> int:
        return len(self.weights)

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def top_means(self, n: int) -> np.ndarray:
        order = np.argsort(-self.weights, kind="stable")
        return self.means[order[np.arange(n) % self.K]]


# ----------------------------------------------------------- mixture maths


def nll(mix: GoalMixture, goal) -> float:
    """Negative log-likelihood of one goal under a diagonal Gaussian mixture."""
    g = goal.as_array() if isinstance(goal, LocalPosition) else np.asarray(goal, dtype=np.float64)
    var = np.maximum(mix.variances, VARIANCE_FLOOR)
    logpdf = -0.5 * np.sum(LOG_2PI + np.log(var) + (g - mix.means) ** 2 / var, axis=1)
    with np.errstate(divide="ignore"):
        a = np.log(mix.weights) + logpdf
    m = np.max(a)
    if not np.isfinite(m):
        return float("inf")
    return float(-(m + np.log(np.sum(np.exp(a - m)))))


def entropy_reg(mix: GoalMixture, lambda_rep: float = 0.01, tau: float = 1.0, mode: str = "repulsion") -> float:
    """Mode-divergence regulariser for one mixture (see :func:`entropy_reg_tensor`)."""
    K = mix.K
    if mode == "weight_entropy":
        w = mix.weights[mix.weights > 0]
        return float(lambda_rep * np.sum(w * np.log(w)))
    if K < 2:
        return 0.0
    total = 0.0
    for j in range(K):
        for k in range(j + 1, K):
            total += math.exp(-float(np.sum((mix.means[j] - mix.means[k]) ** 2)) / tau)
    return lambda_rep * 2.0 / (K * (K - 1)) * total


def mixture_nll_tensor(means: Tensor, logvar: Tensor, logits: Tensor, goals: np.ndarray) -> Tensor:
    """Per-scene NLL, shape (B,), from batched head outputs and (B, 3) goals."""
    diff = ad.sub(goals[:, None, :], means)
    quad = ad.mul(ad.square(diff), ad.exp(-logvar))
    logpdf = ad.mul(ad.tsum(ad.add(ad.add(quad, logvar), LOG_2PI), axis=2), -0.5)
    joint = ad.add(ad.log_softmax(logits, axis=1), logpdf)
    return -ad.logsumexp(joint, axis=1)


def entropy_reg_tensor(means: Tensor, logits: Tensor, config: ModelConfig) -> Tensor:
    """Per-scene regulariser, shape (B,).

    ``repulsion``: lambda * mean over component pairs of exp(-|mu_j - mu_k|^2 / tau).
    ``weight_entropy``: lambda * sum_k pi_k log pi_k (negative weight entropy).
    """
    B, K = logits.shape
    lam = config.lambda_rep
    if config.entropy_mode == "weight_entropy":
        logp = ad.log_softmax(logits, axis=1)
        return ad.mul(ad.tsum(ad.mul(ad.exp(logp), logp), axis=1), lam)
    if K < 2:
        return Tensor(np.zeros(B))
    a = ad.reshape(means, (B, K, 1, 3))
    b = ad.reshape(means, (B, 1, K, 3))
    d2 = ad.tsum(ad.square(ad.sub(a, b)), axis=3)
    kern = ad.exp(ad.mul(d2, -1.0 / config.tau))
    upper = np.triu(np.ones((K, K)), k=1)
    pair_sum = ad.tsum(ad.mul(kern, upper), axis=(1, 2))
    return ad.mul(pair_sum, lam * 2.0 / (K * (K - 1)))


def sample_goals(mix: GoalMixture, n: int, seed) -> np.ndarray:
    """Draw ``n`` goals, returned as an (n, 3) array.

    Component choices and axis noise come from two independent child streams, so
    the first ``m`` samples of a draw of ``n > m`` equal a draw of ``m``.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    ss = np.random.SeedSequence(seed)
    rc, rn = (np.random.default_rng(s) for s in ss.spawn(2))
    cdf = np.cumsum(mix.weights)
    comp = np.minimum(np.searchsorted(cdf, rc.random(n) * cdf[-1], side="right"), mix.K - 1)
    z = rn.standard_normal((n, 3))
    sd = np.sqrt(np.maximum(mix.variances, VARIANCE_FLOOR))
    return mix.means[comp] + sd[comp] * z


# ------------------------------------------------------------------ model


def _uniform(rng, shape, fan_in):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(config: ModelConfig) -> dict[str, np.ndarray]:
    """Fan-in uniform weights, N(0, embed_init_std) embedding rows, zero biases."""
    rng = np.random.default_rng(config.init_seed)
    C, k = config.n_traj, config.kernel
    p: dict[str, np.ndarray] = {}
    in_ch = 3
    for level in range(config.levels):
        p[f"tcn{level}.w"] = _uniform(rng, (C, in_ch, k), in_ch * k)
        p[f"tcn{level}.b"] = np.zeros(C)
        if config.residual and in_ch != C:
            p[f"tcn{level}.res"] = _uniform(rng, (C, in_ch, 1), in_ch)
        in_ch = C
    width = C
    if config.use_intent:
        p["embed"] = rng.normal(0.0, config.embed_init_std, size=(config.intent_vocab, config.n_int))
        width += config.n_int
    for i in range(config.mlp_layers):
        p[f"mlp{i}.w"] = _uniform(rng, (config.mlp_hidden, width), width)
        p[f"mlp{i}.b"] = np.zeros(config.mlp_hidden)
        width = config.mlp_hidden
    K = config.K
    p["mean.w"] = _uniform(rng, (K * 3, width), width)
    p["mean.b"] = np.zeros(K * 3)
    p["logvar.w"] = _uniform(rng, (K * 3, width), width)
    p["logvar.b"] = np.zeros(K * 3)
    p["logit.w"] = _uniform(rng, (K, width), width)
    p["logit.b"] = np.zeros(K)
    return p


def relative_window(obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    obs = np.asarray(obs, dtype=np.float64)
    return obs - obs[0], obs[0].copy()


class GoalNet:
    """Parameters plus the forward pass; labels fix the embedding row order."""

    def __init__(self, config: ModelConfig, labels: Sequence[IntentLabel], params: dict[str, np.ndarray] | None = None):
        labels = list(labels)
        if len(labels) != config.intent_vocab:
            config = replace(config, intent_vocab=len(labels))
        self.config = config
        self.labels = labels
        self.index = {label: i for i, label in enumerate(labels)}
        raw = init_params(config) if params is None else params
        self.params = {name: Tensor(np.array(v, dtype=np.float64), requires_grad=True, name=name) for name, v in raw.items()}

    def param_list(self) -> list[Tensor]:
        return [self.params[k] for k in sorted(self.params)]

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.value.copy() for k, v in self.params.items()}

    def n_params(self) -> int:
        return sum(t.size for t in self.params.values())

    def label_indices(self, labels: Sequence[IntentLabel]) -> np.ndarray:
        try:
            return np.array([self.index[l] for l in labels], dtype=np.int64)
        except KeyError as exc:
            raise KeyError(f"label {exc.args[0]} not in this model's label set") from None

    # -- forward pieces

    def _encode(self, rel: np.ndarray) -> Tensor:
        cfg, p = self.config, self.params
        if rel.shape[1] == 0:
            raise ValueError("empty observation window")
        h = Tensor(rel.transpose(0, 2, 1) * cfg.input_scale)
        for level, d in enumerate(cfg.dilations):
            out = ad.conv1d_causal(h, p[f"tcn{level}.w"], p[f"tcn{level}.b"], d)
            if cfg.residual:
                res = p.get(f"tcn{level}.res")
                skip = h if res is None else ad.conv1d_causal(h, res, None, 1)
                out = ad.add(out, skip)
            h = ad.relu(out)
        return ad.global_average_pool(h)

    def forward(self, rel: np.ndarray, label_idx: np.ndarray) -> tuple[Tensor, Tensor, Tensor]:
        """Head outputs for a batch of window-relative observations (B, T, 3).

        Returns means (B, K, 3) in km, clamped log-variances (B, K, 3) in log km^2,
        and mixture logits (B, K).
        """
        cfg, p = self.config, self.params
        rel = np.asarray(rel, dtype=np.float64)
        B = rel.shape[0]
        z = self._encode(rel)
        if cfg.use_intent:
            z = ad.concat([z, ad.embedding_gather(p["embed"], label_idx)], axis=1)
        for i in range(cfg.mlp_layers):
            z = ad.relu(ad.linear(z, p[f"mlp{i}.w"], p[f"mlp{i}.b"]))
        K = cfg.K
        means = ad.reshape(ad.linear(z, p["mean.w"], p["mean.b"]), (B, K, 3))
        logvar = ad.reshape(ad.linear(z, p["logvar.w"], p["logvar.b"]), (B, K, 3))
        if cfg.goal_scale != 1.0:
            means = ad.mul(means, cfg.goal_scale)
            logvar = ad.add(logvar, 2.0 * math.log(cfg.goal_scale))
        logvar = ad.clip(logvar, cfg.logvar_min, cfg.logvar_max)
        logits = ad.linear(z, p["logit.w"], p["logit.b"])
        return means, logvar, logits

    # -- public per-scene API

    def encode_trajectory(self, obs) -> np.ndarray:
        arr = _as_window(obs)
        rel, _ = relative_window(arr)
        return self._encode(rel[None]).value[0].copy()

    def embed_intent(self, label: IntentLabel) -> np.ndarray:
        if not self.config.use_intent:
            raise ValueError("model was built without intent input")
        return self.params["embed"].value[self.label_indices([label])[0]].copy()

    def predict(self, obs, label: IntentLabel) -> GoalMixture:
        return self.predict_batch([_as_window(obs)], [label])[0]

    def predict_batch(self, windows: Sequence[np.ndarray], labels: Sequence[IntentLabel], batch_size: int = 256) -> list[GoalMixture]:
        """Mixtures in the absolute local frame for equal-length windows."""
        out: list[GoalMixture] = []
        for start in range(0, len(windows), batch_size):
            chunk = np.stack([np.asarray(w, dtype=np.float64) for w in windows[start : start + batch_size]])
            origin = chunk[:, 0, :]
            idx = self.label_indices(labels[start : start + batch_size]) if self.config.use_intent else np.zeros(len(chunk), np.int64)
            means, logvar, logits = self.forward(chunk - origin[:, None, :], idx)
            m = means.value + origin[:, None, :]
            var = np.maximum(np.exp(logvar.value), VARIANCE_FLOOR)
            w = ad.softmax(logits, axis=1).value
            w = w / w.sum(axis=1, keepdims=True)
            out.extend(GoalMixture(m[i], var[i], w[i]) for i in range(len(chunk)))
        return out


def _as_window(obs) -> np.ndarray:
    if len(obs) == 0:
        raise ValueError("empty observation window")
    if isinstance(obs[0], LocalPosition):
        return np.array([p.as_array() for p in obs])
    arr = np.asarray(obs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"observation window must be (T, 3), got {arr.shape}")
    return arr


# ------------------------------------------------------------- checkpoints


def save_params(path: str | Path, model: GoalNet, extra: dict | None = None) -> None:
    """Write the checkpoint: one JSON header line, then the raw float64 blob.

    The header carries the magic string, schema, model config and its hash, the
    label ordering, the parameter manifest (name, shape, offset in values) and a
    SHA-256 of the blob. Arrays are stored little-endian in manifest order.
    """
    names = sorted(model.params)
    manifest, chunks, offset = [], [], 0
    for name in names:
        v = np.ascontiguousarray(model.params[name].value, dtype="<f8")
        manifest.append({"name": name, "shape": list(v.shape), "offset": offset})
        offset += v.size
        chunks.append(v.tobytes())
    blob = b"".join(chunks)
    header = {
        "magic": CHECKPOINT_MAGIC,
        "schema": CHECKPOINT_SCHEMA,
        "config": model.config.to_dict(),
        "config_hash": model.config.config_hash(),
        "labels": [str(l) for l in model.labels],
        "params": manifest,
        "blob_bytes": len(blob),
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
        "extra": extra or {},
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(blob)
    tmp.replace(path)


def load_params(
    path: str | Path,
    expect_config: ModelConfig | None = None,
    expect_labels: Sequence[IntentLabel] | None = None,
) -> GoalNet:
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise CheckpointError(f"{path}: truncated checkpoint header")
    try:
        header = json.loads(data[:nl])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint header") from exc
    if header.get("magic") != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint")
    if header.get("schema") != CHECKPOINT_SCHEMA:
        raise CheckpointError(f"{path}: checkpoint schema {header.get('schema')} != expected {CHECKPOINT_SCHEMA}")
    blob = data[nl + 1 :]
    if len(blob) != header["blob_bytes"] or hashlib.sha256(blob).hexdigest() != header["blob_sha256"]:
        raise CheckpointError(f"{path}: truncated or corrupt parameter blob")
    config = ModelConfig.from_dict(header["config"])
    labels = [IntentLabel.parse(s) for s in header["labels"]]
    if expect_labels is not None and [str(l) for l in expect_labels] != header["labels"]:
        raise CheckpointError(
            f"{path}: label set mismatch (checkpoint has {len(labels)} labels, expected {len(expect_labels)})"
        )
    if expect_config is not None and expect_config.config_hash() != header["config_hash"]:
        raise CheckpointError(
            f"{path}: config mismatch (checkpoint {header['config_hash']}, expected {expect_config.config_hash()})"
        )
    values = np.frombuffer(blob, dtype="<f8")
    params = {}
    for item in header["params"]:
        n = int(np.prod(item["shape"])) if item["shape"] else 1
        params[item["name"]] = values[item["offset"] : item["offset"] + n].reshape(item["shape"]).astype(np.float64)
    expected = init_params(replace(config, intent_vocab=len(labels)))
    if set(expected) != set(params) or any(expected[k].shape != params[k].shape for k in expected):
        raise CheckpointError(f"{path}: parameter manifest does not match config")
    return GoalNet(config, labels, params)


def checkpoint_header(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        return json.loads(fh.readline())
