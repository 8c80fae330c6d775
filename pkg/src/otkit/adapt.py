"""Unsupervised domain adaptation through transport-aligned latents.

Two small encoders map source and target inputs into a shared latent
space and one linear classifier reads that space.  Training alternates
two phases: solve optimal transport between the encoded batches (the
plan is a constant afterwards), then descend the combined loss by plain
gradient steps.  The loss is the source cross-entropy, plus the
transport cost between the batches' features under the frozen plan,
plus, in the full mode, a confidence term that penalizes the entropy of
target predictions.  In the label-aware modes each latent is augmented
with its softmax class probabilities before the transport solve, so the
coupling prefers to match points the classifier already considers
similar.

All gradients are exact and hand-derived; finite differences agree to
well below the documented tolerance.  Target labels are never touched
by training, only by the reported accuracy columns.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dual import SolverConfig, solve
from .errors import Diverged, InvalidInput
from .measures import CostOracle, PointCloud, TransportPlan, uniform_measure


class AdaptMode(Enum):
    """How much label structure enters the transport cost."""

    PLAIN_OT = "plain"
    LABEL_AUGMENTED_OT = "labels"
    FULL = "full"


class EvalPath(Enum):
    SOURCE = "source"
    TARGET = "target"


def _finite_arrays(*arrays: np.ndarray) -> bool:
    return all(np.all(np.isfinite(a)) for a in arrays)


@dataclass(frozen=True, eq=False)
class EncoderParams:
    """Input -> hidden tanh layer -> linear latent layer."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self) -> None:
        w1, b1 = np.asarray(self.w1, float), np.asarray(self.b1, float)
        w2, b2 = np.asarray(self.w2, float), np.asarray(self.b2, float)
        if w1.ndim != 2 or w2.ndim != 2:
            raise InvalidInput("encoder weights must be matrices")
        if b1.shape != (w1.shape[1],) or b2.shape != (w2.shape[1],):
            raise InvalidInput("encoder bias shapes do not match the weights")
        if w2.shape[0] != w1.shape[1]:
            raise InvalidInput("encoder layer widths do not chain")
        if not _finite_arrays(w1, b1, w2, b2):
            raise InvalidInput("encoder parameters must be finite")
        for name, arr in (("w1", w1), ("b1", b1), ("w2", w2), ("b2", b2)):
            object.__setattr__(self, name, arr)

    @property
    def shapes(self) -> tuple:
        return (self.w1.shape, self.w2.shape)


@dataclass(frozen=True, eq=False)
class ClassifierParams:
    """One linear layer from latents to class logits."""

    w: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        w, b = np.asarray(self.w, float), np.asarray(self.b, float)
        if w.ndim != 2 or b.shape != (w.shape[1],):
            raise InvalidInput("classifier shapes are inconsistent")
        if not _finite_arrays(w, b):
            raise InvalidInput("classifier parameters must be finite")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)

    @property
    def n_classes(self) -> int:
        return self.w.shape[1]


@dataclass(frozen=True, eq=False)
class AdaptModel:
    """Source encoder, target encoder (same shapes, free weights), classifier."""

    g_s: EncoderParams
    g_t: EncoderParams
    f: ClassifierParams

    def __post_init__(self) -> None:
        if self.g_s.shapes != self.g_t.shapes:
            raise InvalidInput("the two encoders must share an architecture")
        if self.f.w.shape[0] != self.g_s.w2.shape[1]:
            raise InvalidInput("classifier input does not match the latent width")


@dataclass(frozen=True, eq=False)
class LabeledBatch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.inputs, float)
        y = np.asarray(self.labels)
        if x.ndim != 2:
            raise InvalidInput("inputs must be a (n, d) matrix")
        if not np.issubdtype(y.dtype, np.integer) or y.shape != (x.shape[0],):
            raise InvalidInput("labels must be one integer per input row")
        if y.size and int(y.min()) < 0:
            raise InvalidInput("labels must be nonnegative")
        if not np.all(np.isfinite(x)):
            raise InvalidInput("inputs must be finite")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y.astype(np.int64))

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class AdaptConfig:
    """Training knobs.  ``epochs`` counts alternating rounds; each round
    solves transport once and then takes ``steps_per_round`` descent steps
    on the frozen plan."""

    lambda1: float = 1.0
    lambda2: float = 0.1
    learn_rate: float = 1e-2
    epochs: int = 10
    mode: AdaptMode = AdaptMode.FULL
    seed: int = 0
    batch_size: int = 128
    steps_per_round: int = 5

    def __post_init__(self) -> None:
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InvalidInput("loss weights must be >= 0")
        if not self.learn_rate > 0:
            raise InvalidInput("learn_rate must be > 0")
        if self.epochs < 0:
            raise InvalidInput("epochs must be >= 0")
        if not isinstance(self.mode, AdaptMode):
            raise InvalidInput(f"unknown mode {self.mode!r}")
        if self.seed < 0:
            raise InvalidInput("seed must be >= 0")
        if self.batch_size < 1 or self.steps_per_round < 1:
            raise InvalidInput("batch_size and steps_per_round must be >= 1")


def init_model(input_dim: int, n_classes: int, seed: int = 0,
               hidden: int = 32, latent: int = 8) -> AdaptModel:
    """Fresh model with scaled-normal weights; the encoders start distinct."""
    if input_dim < 1 or n_classes < 2 or hidden < 1 or latent < 1:
        raise InvalidInput("model dimensions must be positive (>= 2 classes)")
    rng = np.random.default_rng((seed, 0xADA))

    def encoder() -> EncoderParams:
        return EncoderParams(
            rng.normal(size=(input_dim, hidden)) / np.sqrt(input_dim),
            np.zeros(hidden),
            rng.normal(size=(hidden, latent)) / np.sqrt(hidden),
            np.zeros(latent),
        )

    g_s, g_t = encoder(), encoder()
    f = ClassifierParams(rng.normal(size=(latent, n_classes)) / np.sqrt(latent),
                         np.zeros(n_classes))
    return AdaptModel(g_s, g_t, f)


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------


def forward_latent(params: EncoderParams, inputs: np.ndarray) -> np.ndarray:
    """Encode a batch row-wise: tanh hidden layer, linear latent layer."""
    x = np.asarray(inputs, float)
    if x.ndim != 2 or x.shape[1] != params.w1.shape[0]:
        raise InvalidInput(
            f"inputs must be (n, {params.w1.shape[0]}), got {x.shape}")
    hidden = np.tanh(x @ params.w1 + params.b1)
    return hidden @ params.w2 + params.b2


def _encode_cached(params: EncoderParams, x: np.ndarray):
    hidden = np.tanh(x @ params.w1 + params.b1)
    return hidden @ params.w2 + params.b2, hidden


def _encoder_grads(params: EncoderParams, x: np.ndarray, hidden: np.ndarray,
                   d_latent: np.ndarray) -> EncoderParams:
    d_hidden = (d_latent @ params.w2.T) * (1.0 - hidden * hidden)
    return EncoderParams(x.T @ d_hidden, d_hidden.sum(axis=0),
                         hidden.T @ d_latent, d_latent.sum(axis=0))


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _softmax_grads(probs: np.ndarray, d_probs: np.ndarray) -> np.ndarray:
    inner = (d_probs * probs).sum(axis=1, keepdims=True)
    return probs * (d_probs - inner)


# ---------------------------------------------------------------------------
# loss terms
# ---------------------------------------------------------------------------


def cross_entropy_loss(labels: np.ndarray, logits: np.ndarray) -> float:
    """Mean negative log softmax-probability of the true class."""
    y = np.asarray(labels)
    z = np.asarray(logits, float)
    if z.ndim != 2 or y.shape != (z.shape[0],):
        raise InvalidInput("need one label per logit row")
    if y.size and (int(y.min()) < 0 or int(y.max()) >= z.shape[1]):
        raise InvalidInput("labels out of class range")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(z.shape[0]), y]
    return float(np.mean(log_norm - picked))


def entropy_regularizer(logits: np.ndarray) -> float:
    """Mean Shannon entropy of the softmax rows, with 0 log 0 = 0."""
    z = np.asarray(logits, float)
    if z.ndim != 2:
        raise InvalidInput("logits must be a matrix")
    p = _softmax(z)
    plogp = np.where(p > 0.0, p * np.log(np.maximum(p, 1e-300)), 0.0)
    return float(np.mean(-plogp.sum(axis=1)))


def augmented_features(latents: np.ndarray, f_params: ClassifierParams,
                       mode: AdaptMode) -> np.ndarray:
    """Features the transport cost sees: latents, or latents with the
    classifier's softmax probabilities appended (label-aware modes)."""
    lat = np.asarray(latents, float)
    if lat.ndim != 2 or lat.shape[1] != f_params.w.shape[0]:
        raise InvalidInput("latents do not match the classifier input width")
    if mode is AdaptMode.PLAIN_OT:
        return lat
    probs = _softmax(lat @ f_params.w + f_params.b)
    return np.concatenate([lat, probs], axis=1)


def transport_loss(aug_source: np.ndarray, aug_target: np.ndarray,
                   plan: TransportPlan) -> float:
    """Plan-weighted squared distance between matched feature rows.

    The plan is a constant here: the alternating scheme differentiates
    the features, never the coupling.
    """
    a = np.asarray(aug_source, float)
    b = np.asarray(aug_target, float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise InvalidInput("feature matrices must share a width")
    if plan.n_source != a.shape[0] or plan.n_target != b.shape[0]:
        raise InvalidInput("plan dimensions do not match the batches")
    diff = a[plan.i] - b[plan.j]
    return float(plan.mass @ (diff * diff).sum(axis=1))


def total_loss(model: AdaptModel, source_batch: LabeledBatch,
               target_inputs: np.ndarray, plan: TransportPlan | None,
               cfg: AdaptConfig) -> tuple[float, AdaptModel]:
    """Combined loss and its exact gradient as a model-shaped structure.

    cross-entropy + lambda1 * transport + lambda2 * entropy; the entropy
    weight is active only in the full mode, and a missing plan drops the
    transport term (used by source-only pretraining).
    """
    xs, ys = source_batch.inputs, source_batch.labels
    xt = np.asarray(target_inputs, float)
    if xt.ndim != 2 or xt.shape[1] != xs.shape[1]:
        raise InvalidInput("target inputs must match the source input width")
    k = model.f.n_classes
    if ys.size and int(ys.max()) >= k:
        raise InvalidInput("labels out of class range")
    lam1 = cfg.lambda1 if plan is not None else 0.0
    lam2 = cfg.lambda2 if cfg.mode is AdaptMode.FULL else 0.0
    n_s, n_t = xs.shape[0], xt.shape[0]
    latent_dim = model.f.w.shape[0]

    h_s, hid_s = _encode_cached(model.g_s, xs)
    h_t, hid_t = _encode_cached(model.g_t, xt)
    z_s = h_s @ model.f.w + model.f.b
    z_t = h_t @ model.f.w + model.f.b
    p_s = _softmax(z_s)
    p_t = _softmax(z_t)

    c_val = cross_entropy_loss(ys, z_s)
    dz_s = p_s.copy()
    dz_s[np.arange(n_s), ys] -= 1.0
    dz_s /= n_s

    dz_t = np.zeros_like(z_t)
    d_lat_s = np.zeros_like(h_s)
    d_lat_t = np.zeros_like(h_t)

    t_val = 0.0
    if lam1 > 0.0:
        a = h_s if cfg.mode is AdaptMode.PLAIN_OT else np.concatenate([h_s, p_s], axis=1)
        b = h_t if cfg.mode is AdaptMode.PLAIN_OT else np.concatenate([h_t, p_t], axis=1)
        t_val = transport_loss(a, b, plan)
        diff = a[plan.i] - b[plan.j]
        weighted = (2.0 * plan.mass)[:, None] * diff
        da = np.zeros_like(a)
        db = np.zeros_like(b)
        np.add.at(da, plan.i, weighted)
        np.add.at(db, plan.j, -weighted)
        d_lat_s += lam1 * da[:, :latent_dim]
        d_lat_t += lam1 * db[:, :latent_dim]
        if cfg.mode is not AdaptMode.PLAIN_OT:
            dz_s += lam1 * _softmax_grads(p_s, da[:, latent_dim:])
            dz_t += lam1 * _softmax_grads(p_t, db[:, latent_dim:])

    h_val = 0.0
    if cfg.mode is AdaptMode.FULL:
        h_val = entropy_regularizer(z_t)
        logp = np.log(np.maximum(p_t, 1e-300))
        row_entropy = -(np.where(p_t > 0.0, p_t * logp, 0.0)).sum(axis=1)
        dz_t += lam2 * (-p_t * (logp + row_entropy[:, None])) / n_t

    d_lat_s += dz_s @ model.f.w.T
    d_lat_t += dz_t @ model.f.w.T
    grad_f = ClassifierParams(h_s.T @ dz_s + h_t.T @ dz_t,
                              dz_s.sum(axis=0) + dz_t.sum(axis=0))
    grad = AdaptModel(_encoder_grads(model.g_s, xs, hid_s, d_lat_s),
                      _encoder_grads(model.g_t, xt, hid_t, d_lat_t),
                      grad_f)
    return c_val + lam1 * t_val + lam2 * h_val, grad


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


def _descend(model: AdaptModel, grad: AdaptModel, rate: float) -> AdaptModel:
    def enc(p: EncoderParams, g: EncoderParams) -> EncoderParams:
        return EncoderParams(p.w1 - rate * g.w1, p.b1 - rate * g.b1,
                             p.w2 - rate * g.w2, p.b2 - rate * g.b2)

    f = ClassifierParams(model.f.w - rate * grad.f.w,
                         model.f.b - rate * grad.f.b)
    return AdaptModel(enc(model.g_s, grad.g_s), enc(model.g_t, grad.g_t), f)


def _solve_batch_plan(model: AdaptModel, xs: np.ndarray, xt: np.ndarray,
                      mode: AdaptMode, seed: int) -> tuple[TransportPlan, float]:
    lat_s = forward_latent(model.g_s, xs)
    lat_t = forward_latent(model.g_t, xt)
    a = augmented_features(lat_s, model.f, mode)
    b = augmented_features(lat_t, model.f, mode)
    mu_s = uniform_measure(PointCloud(a))
    mu_t = uniform_measure(PointCloud(b))
    sol = solve(mu_s, mu_t, CostOracle(mu_s.cloud, mu_t.cloud),
                SolverConfig(seed=seed))
    return sol.plan, transport_loss(a, b, sol.plan)


def train(model: AdaptModel, source: LabeledBatch, target: LabeledBatch,
          cfg: AdaptConfig) -> tuple[AdaptModel, list[tuple]]:
    """Alternate transport solves with descent steps on the frozen plan.

    Returns the trained model and one history row per round:
    (round, c_loss, t_loss, h_loss, source_acc, target_acc).  Rounds
    whose transport weight is zero skip the solve and record a zero
    transport term.  Target labels feed only the accuracy column.
    """
    rng = np.random.default_rng((cfg.seed, 0x7EA))
    history: list[tuple] = []
    for rnd in range(1, cfg.epochs + 1):
        take_s = min(cfg.batch_size, source.n_samples)
        take_t = min(cfg.batch_size, target.n_samples)
        idx_s = rng.choice(source.n_samples, size=take_s, replace=False)
        idx_t = rng.choice(target.n_samples, size=take_t, replace=False)
        xs = source.inputs[idx_s]
        batch = LabeledBatch(xs, source.labels[idx_s])
        xt = target.inputs[idx_t]

        plan = None
        if cfg.lambda1 > 0.0:
            try:
                plan, _ = _solve_batch_plan(model, xs, xt, cfg.mode,
                                            cfg.seed + rnd)
            except Diverged as exc:
                raise Diverged(f"transport solve diverged in round {rnd}: "
                               f"{exc}") from exc
        for _ in range(cfg.steps_per_round):
            _, grad = total_loss(model, batch, xt, plan, cfg)
            model = _descend(model, grad, cfg.learn_rate)

        lat_s = forward_latent(model.g_s, xs)
        lat_t = forward_latent(model.g_t, xt)
        c_loss = cross_entropy_loss(batch.labels, lat_s @ model.f.w + model.f.b)
        t_loss = 0.0
        if plan is not None:
            t_loss = transport_loss(augmented_features(lat_s, model.f, cfg.mode),
                                    augmented_features(lat_t, model.f, cfg.mode),
                                    plan)
        h_loss = entropy_regularizer(lat_t @ model.f.w + model.f.b)
        history.append((rnd, c_loss, t_loss, h_loss,
                        evaluate(model, source, EvalPath.SOURCE),
                        evaluate(model, target, EvalPath.TARGET)))
    return model, history


def evaluate(model: AdaptModel, batch: LabeledBatch, which: EvalPath) -> float:
    """Accuracy of argmax predictions; ties resolve to the lowest class."""
    encoder = model.g_s if which is EvalPath.SOURCE else model.g_t
    logits = forward_latent(encoder, batch.inputs) @ model.f.w + model.f.b
    if batch.labels.size and int(batch.labels.max()) >= model.f.n_classes:
        raise InvalidInput("labels out of class range")
    return float(np.mean(logits.argmax(axis=1) == batch.labels))


def history_to_csv(history: list[tuple]) -> str:
    lines = ["round,c_loss,t_loss,h_loss,source_acc,target_acc"]
    for rnd, c, t, h, sa, ta in history:
        lines.append(f"{rnd},{c:.10g},{t:.10g},{h:.10g},{sa:.10g},{ta:.10g}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# the synthetic benchmark task
# ---------------------------------------------------------------------------


_ROTATION_DEG = 30.0
_SHIFT = np.array([1.0, 0.5])
_TASK_SAMPLES = 500


def make_rotated_gaussian_task(seed: int) -> tuple[LabeledBatch, LabeledBatch]:
    """Two-class Gaussian mixture; the target domain is the same mixture
    rotated 30 degrees and shifted by (1, 0.5).  500 samples per domain;
    target labels exist only for scoring."""
    rng = np.random.default_rng((seed, 0x6A55))
    means = np.array([[-2.0, 0.0], [2.0, 0.0]])

    def domain() -> tuple[np.ndarray, np.ndarray]:
        labels = rng.integers(0, 2, size=_TASK_SAMPLES)
        points = means[labels] + rng.normal(size=(_TASK_SAMPLES, 2))
        return points, labels

    xs, ys = domain()
    xt, yt = domain()
    theta = np.deg2rad(_ROTATION_DEG)
    rot = np.array([[np.cos(theta), -np.sin(theta)],
                    [np.sin(theta), np.cos(theta)]])
    xt = xt @ rot.T + _SHIFT
    return LabeledBatch(xs, ys), LabeledBatch(xt, yt)


def run_synthetic_benchmark(seeds=range(10), cfg: AdaptConfig | None = None,
                            pretrain_rounds: int = 20):
    """Source-only pretraining, then one adaptation arm per mode.

    Returns (rows, means): rows are (mode value, seed, target accuracy,
    source-only baseline accuracy) and means maps each mode value, plus
    "baseline", to its mean target accuracy across seeds.
    """
    base = AdaptConfig() if cfg is None else cfg
    seed_list = list(seeds)
    rows: list[tuple] = []
    sums = {mode.value: 0.0 for mode in AdaptMode}
    sums["baseline"] = 0.0
    for seed in seed_list:
        source, target = make_rotated_gaussian_task(seed)
        fresh = init_model(source.inputs.shape[1],
                           int(source.labels.max()) + 1, seed=seed)
        pre_cfg = AdaptConfig(lambda1=0.0, lambda2=0.0,
                              learn_rate=base.learn_rate,
                              epochs=pretrain_rounds,
                              mode=AdaptMode.PLAIN_OT, seed=seed,
                              batch_size=base.batch_size,
                              steps_per_round=base.steps_per_round)
        pretrained, _ = train(fresh, source, target, pre_cfg)
        start = AdaptModel(pretrained.g_s, _copy_encoder(pretrained.g_s),
                           pretrained.f)
        baseline = evaluate(start, target, EvalPath.TARGET)
        sums["baseline"] += baseline
        for mode in AdaptMode:
            arm_cfg = AdaptConfig(lambda1=base.lambda1, lambda2=base.lambda2,
                                  learn_rate=base.learn_rate,
                                  epochs=base.epochs, mode=mode, seed=seed,
                                  batch_size=base.batch_size,
                                  steps_per_round=base.steps_per_round)
            adapted, _ = train(start, source, target, arm_cfg)
            acc = evaluate(adapted, target, EvalPath.TARGET)
            rows.append((mode.value, seed, acc, baseline))
            sums[mode.value] += acc
    count = max(len(seed_list), 1)
    means = {k: v / count for k, v in sums.items()}
    return rows, means


def _copy_encoder(params: EncoderParams) -> EncoderParams:
    return EncoderParams(params.w1.copy(), params.b1.copy(),
                         params.w2.copy(), params.b2.copy())


def benchmark_to_csv(rows: list[tuple]) -> str:
    lines = ["mode,seed,target_acc,baseline_acc"]
    for mode, seed, acc, baseline in rows:
        lines.append(f"{mode},{seed},{acc:.10g},{baseline:.10g}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def model_to_json(model: AdaptModel) -> str:
    """Architecture header plus one flat parameter array, fixed order."""
    input_dim, hidden = model.g_s.w1.shape
    latent, classes = model.f.w.shape
    flat = np.concatenate([
        part.ravel() for part in (
            model.g_s.w1, model.g_s.b1, model.g_s.w2, model.g_s.b2,
            model.g_t.w1, model.g_t.b1, model.g_t.w2, model.g_t.b2,
            model.f.w, model.f.b,
        )
    ])
    return json.dumps({
        "architecture": {"input_dim": input_dim, "hidden": hidden,
                         "latent": latent, "classes": classes},
        "params": flat.tolist(),
    })


def model_from_json(text: str) -> AdaptModel:
    try:
        doc = json.loads(text)
        arch = doc["architecture"]
        dims = (int(arch["input_dim"]), int(arch["hidden"]),
                int(arch["latent"]), int(arch["classes"]))
        flat = np.asarray(doc["params"], dtype=float)
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise InvalidInput(f"malformed model document: {exc}") from None
    d, hid, lat, k = dims
    sizes = [d * hid, hid, hid * lat, lat, d * hid, hid, hid * lat, lat,
             lat * k, k]
    if flat.shape != (sum(sizes),):
        raise InvalidInput("parameter array does not match the architecture")
    parts = np.split(flat, np.cumsum(sizes)[:-1])
    g_s = EncoderParams(parts[0].reshape(d, hid), parts[1],
                        parts[2].reshape(hid, lat), parts[3])
    g_t = EncoderParams(parts[4].reshape(d, hid), parts[5],
                        parts[6].reshape(hid, lat), parts[7])
    f = ClassifierParams(parts[8].reshape(lat, k), parts[9])
    return AdaptModel(g_s, g_t, f)
