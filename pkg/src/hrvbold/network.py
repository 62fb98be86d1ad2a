"""From-scratch 1D-CNN + GRU scalar regressor.

Forward pass, exact analytic gradients (verified against central
differences in the test suite), adaptive-moment optimizer, and a
deterministic early-stopping training loop. Everything is plain numpy,
batch-vectorized: convolutions run as im2col matmuls, the GRU loops over
time steps with [batch x hidden] matmuls, and all loops have fixed order
so reruns are bit-identical on the same machine.

Shapes: inputs are [batch, time, channels]; conv kernels are
[in_channels, kernel, filters]; GRU input/hidden weights are
[in, hidden] / [hidden, hidden]; the head is hidden -> dense -> scalar.

Gate algebra (update z, reset r, candidate c):
    z = sigmoid(x W_z + h U_z + b_z)
    r = sigmoid(x W_r + h U_r + b_r)
    c = tanh(x W_h + (r * h) U_h + b_h)
    h' = (1 - z) * h + z * c
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np

from .errors import DataError, DivergenceError, ValidationError
from .records import RoiMatrix
from .seeding import make_rng
from .windows import Normalizer, WindowSpec

CHECKPOINT_VERSION = 1

_STREAM_INIT = 31
_STREAM_SHUFFLE = 32


@dataclass(frozen=True)
class ModelConfig:
    n_channels: int
    window_len: int = 65
    conv_blocks: tuple[tuple[int, int, int], ...] = ((64, 5, 1), (32, 3, 1))
    pool: tuple[str, ...] = ("Max2", "None")
    gru_hidden: int = 64
    dense_hidden: int = 32
    activation: str = "ReLU"
    seed: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        if self.n_channels < 1 or self.window_len < 1:
            raise ValidationError("n_channels and window_len must be >= 1")
        if len(self.pool) != len(self.conv_blocks):
            raise ValidationError("one pool mode per conv block required")
        for filters, kernel, stride in self.conv_blocks:
            if kernel % 2 == 0:
                raise ValidationError(f"kernel sizes must be odd, got {kernel}")
            if filters < 1 or stride < 1:
                raise ValidationError("conv filters and stride must be >= 1")
        for mode in self.pool:
            if mode not in ("None", "Max2"):
                raise ValidationError(f"unknown pool mode {mode!r}")
        if self.activation not in ("ReLU", "Tanh"):
            raise ValidationError(f"unknown activation {self.activation!r}")
        if self.gru_hidden < 1 or self.dense_hidden < 1:
            raise ValidationError("gru_hidden and dense_hidden must be >= 1")
        if self.dtype not in ("float64", "float32"):
            raise ValidationError("dtype must be float64 or float32")
        if self.seq_len() < 2:
            raise ValidationError("temporal length after conv/pool must be >= 2 "
                                  "(the recurrent stage needs a sequence)")

    def seq_len(self) -> int:
        t = self.window_len
        for (filters, kernel, stride), mode in zip(self.conv_blocks, self.pool):
            pad = (kernel - 1) // 2
            t = (t + 2 * pad - kernel) // stride + 1
            if mode == "Max2":
                t //= 2
        return t

    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    def param_count(self) -> int:
        total = 0
        c_in = self.n_channels
        for filters, kernel, _ in self.conv_blocks:
            total += c_in * kernel * filters + filters
            c_in = filters
        h = self.gru_hidden
        total += 3 * (c_in * h + h * h + h)
        total += h * self.dense_hidden + self.dense_hidden
        total += self.dense_hidden + 1
        return total


@dataclass(eq=False)
class ModelParams:
    """All trainable tensors, keyed in a fixed order."""

    tensors: dict[str, np.ndarray]

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.tensors.items()})

    def check_finite(self):
        for name, t in self.tensors.items():
            if not np.all(np.isfinite(t)):
                raise DivergenceError(f"non-finite values in parameter {name}")

    def __iter__(self):
        return iter(self.tensors.items())


def parameter_names(cfg: ModelConfig) -> list[str]:
    names = []
    for b in range(len(cfg.conv_blocks)):
        names += [f"conv{b}_w", f"conv{b}_b"]
    for gate in ("z", "r", "h"):
        names += [f"gru_w{gate}", f"gru_u{gate}", f"gru_b{gate}"]
    names += ["dense_w1", "dense_b1", "dense_w2", "dense_b2"]
    return names


def init_params(cfg: ModelConfig) -> ModelParams:
    """Uniform fan-in-scaled weights (bound sqrt(1/fan_in)), zero biases."""
    rng = make_rng(cfg.seed, _STREAM_INIT)
    dt = cfg.np_dtype()

    def uniform(shape, fan_in):
        bound = np.sqrt(1.0 / fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(dt)

    tensors: dict[str, np.ndarray] = {}
    c_in = cfg.n_channels
    for b, (filters, kernel, _) in enumerate(cfg.conv_blocks):
        tensors[f"conv{b}_w"] = uniform((c_in, kernel, filters), c_in * kernel)
        tensors[f"conv{b}_b"] = np.zeros(filters, dtype=dt)
        c_in = filters
    h = cfg.gru_hidden
    for gate in ("z", "r", "h"):
        tensors[f"gru_w{gate}"] = uniform((c_in, h), c_in)
        tensors[f"gru_u{gate}"] = uniform((h, h), h)
        tensors[f"gru_b{gate}"] = np.zeros(h, dtype=dt)
    tensors["dense_w1"] = uniform((h, cfg.dense_hidden), h)
    tensors["dense_b1"] = np.zeros(cfg.dense_hidden, dtype=dt)
    tensors["dense_w2"] = uniform((cfg.dense_hidden,), cfg.dense_hidden)
    tensors["dense_b2"] = np.zeros(1, dtype=dt)
    return ModelParams(tensors)


# ---------------------------------------------------------------------------
# layer primitives (public so gradient checks can exercise them in isolation)
# ---------------------------------------------------------------------------

def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int):
    """Same-padded 1-D convolution over time. x [B,T,C], w [C,k,F] -> [B,T',F]."""
    batch, t, c = x.shape
    _, kernel, filters = w.shape
    pad = (kernel - 1) // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
    view = np.lib.stride_tricks.sliding_window_view(xp, kernel, axis=1)
    view = view[:, ::stride]                       # [B, T', C, k]
    t_out = (t + 2 * pad - kernel) // stride + 1
    view = view[:, :t_out]
    cols = view.reshape(batch, t_out, c * kernel)
    out = cols @ w.reshape(c * kernel, filters) + b
    return out, (cols, x.shape, stride)


def conv1d_backward(d_out: np.ndarray, w: np.ndarray, cache):
    cols, x_shape, stride = cache
    batch, t, c = x_shape
    _, kernel, filters = w.shape
    pad = (kernel - 1) // 2
    t_out = d_out.shape[1]

    dw = np.einsum("btm,btf->mf", cols, d_out).reshape(w.shape)
    db = d_out.sum(axis=(0, 1))
    dcols = (d_out @ w.reshape(c * kernel, filters).T)
    dcols = dcols.reshape(batch, t_out, c, kernel)

    dxp = np.zeros((batch, t + 2 * pad, c), dtype=d_out.dtype)
    for j in range(kernel):
        # output t' reads padded position t'*stride + j; distinct per t'
        dxp[:, j:j + stride * t_out:stride] += dcols[:, :, :, j]
    dx = dxp[:, pad:pad + t]
    return dx, dw, db


def activation_forward(x: np.ndarray, kind: str):
    if kind == "ReLU":
        out = np.maximum(x, 0.0)
        return out, (kind, x)
    out = np.tanh(x)
    return out, (kind, out)


def activation_backward(d_out: np.ndarray, cache):
    kind, saved = cache
    if kind == "ReLU":
        return d_out * (saved > 0)
    return d_out * (1.0 - saved * saved)


def maxpool2_forward(x: np.ndarray):
    """Non-overlapping pairwise max over time; an odd trailing step is dropped."""
    batch, t, f = x.shape
    t2 = t // 2
    pairs = x[:, :2 * t2].reshape(batch, t2, 2, f)
    arg = pairs.argmax(axis=2)
    out = np.take_along_axis(pairs, arg[:, :, None, :], axis=2)[:, :, 0, :]
    return out, (arg, x.shape)


def maxpool2_backward(d_out: np.ndarray, cache):
    arg, x_shape = cache
    batch, t, f = x_shape
    t2 = t // 2
    dpairs = np.zeros((batch, t2, 2, f), dtype=d_out.dtype)
    np.put_along_axis(dpairs, arg[:, :, None, :], d_out[:, :, None, :], axis=2)
    dx = np.zeros(x_shape, dtype=d_out.dtype)
    dx[:, :2 * t2] = dpairs.reshape(batch, 2 * t2, f)
    return dx


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def gru_forward(seq: np.ndarray, p: dict[str, np.ndarray], prefix: str = "gru"):
    """Run the GRU over seq [B,T,D] from h0 = 0; returns final hidden state."""
    batch, t, _ = seq.shape
    hidden = p[f"{prefix}_uz"].shape[0]
    dt = seq.dtype
    h = np.zeros((batch, hidden), dtype=dt)
    hs = np.empty((batch, t + 1, hidden), dtype=dt)
    zs = np.empty((batch, t, hidden), dtype=dt)
    rs = np.empty((batch, t, hidden), dtype=dt)
    cs = np.empty((batch, t, hidden), dtype=dt)
    hs[:, 0] = h
    for i in range(t):
        x = seq[:, i]
        z = _sigmoid(x @ p[f"{prefix}_wz"] + h @ p[f"{prefix}_uz"] + p[f"{prefix}_bz"])
        r = _sigmoid(x @ p[f"{prefix}_wr"] + h @ p[f"{prefix}_ur"] + p[f"{prefix}_br"])
        c = np.tanh(x @ p[f"{prefix}_wh"] + (r * h) @ p[f"{prefix}_uh"] + p[f"{prefix}_bh"])
        h = (1.0 - z) * h + z * c
        zs[:, i], rs[:, i], cs[:, i], hs[:, i + 1] = z, r, c, h
    if not np.all(np.abs(h) <= 1.0):
        raise DivergenceError("GRU hidden state escaped [-1, 1]")
    return h, (seq, hs, zs, rs, cs)


def gru_backward(d_h: np.ndarray, p: dict[str, np.ndarray], cache,
                 prefix: str = "gru"):
    seq, hs, zs, rs, cs = cache
    batch, t, _ = seq.shape
    grads = {k: np.zeros_like(p[k]) for k in
             (f"{prefix}_wz", f"{prefix}_uz", f"{prefix}_bz",
              f"{prefix}_wr", f"{prefix}_ur", f"{prefix}_br",
              f"{prefix}_wh", f"{prefix}_uh", f"{prefix}_bh")}
    d_seq = np.empty_like(seq)
    dh = d_h
    for i in range(t - 1, -1, -1):
        x, h_prev = seq[:, i], hs[:, i]
        z, r, c = zs[:, i], rs[:, i], cs[:, i]

        dz = dh * (c - h_prev)
        dc = dh * z
        dh_prev = dh * (1.0 - z)

        dah = dc * (1.0 - c * c)
        grads[f"{prefix}_wh"] += x.T @ dah
        grads[f"{prefix}_uh"] += (r * h_prev).T @ dah
        grads[f"{prefix}_bh"] += dah.sum(axis=0)
        drh = dah @ p[f"{prefix}_uh"].T
        dr = drh * h_prev
        dh_prev += drh * r

        daz = dz * z * (1.0 - z)
        grads[f"{prefix}_wz"] += x.T @ daz
        grads[f"{prefix}_uz"] += h_prev.T @ daz
        grads[f"{prefix}_bz"] += daz.sum(axis=0)
        dh_prev += daz @ p[f"{prefix}_uz"].T

        dar = dr * r * (1.0 - r)
        grads[f"{prefix}_wr"] += x.T @ dar
        grads[f"{prefix}_ur"] += h_prev.T @ dar
        grads[f"{prefix}_br"] += dar.sum(axis=0)
        dh_prev += dar @ p[f"{prefix}_ur"].T

        d_seq[:, i] = daz @ p[f"{prefix}_wz"].T + dar @ p[f"{prefix}_wr"].T \
            + dah @ p[f"{prefix}_wh"].T
        dh = dh_prev
    return d_seq, grads


# ---------------------------------------------------------------------------
# composed model
# ---------------------------------------------------------------------------

def forward_batch(params: ModelParams, cfg: ModelConfig, inputs: np.ndarray):
    """Predictions for a batch [B, T, C]; returns (preds [B], cache)."""
    if inputs.ndim != 3 or inputs.shape[1:] != (cfg.window_len, cfg.n_channels):
        raise ValidationError(f"input shape {inputs.shape} does not match "
                              f"(*, {cfg.window_len}, {cfg.n_channels})")
    p = params.tensors
    x = inputs.astype(cfg.np_dtype(), copy=False)
    caches = []
    for b, ((filters, kernel, stride), mode) in enumerate(zip(cfg.conv_blocks, cfg.pool)):
        x, conv_cache = conv1d_forward(x, p[f"conv{b}_w"], p[f"conv{b}_b"], stride)
        x, act_cache = activation_forward(x, cfg.activation)
        pool_cache = None
        if mode == "Max2":
            x, pool_cache = maxpool2_forward(x)
        caches.append((conv_cache, act_cache, pool_cache))

    h, gru_cache = gru_forward(x, p)
    a1 = h @ p["dense_w1"] + p["dense_b1"]
    d1, dense_cache = activation_forward(a1, cfg.activation)
    preds = d1 @ p["dense_w2"] + p["dense_b2"][0]
    return preds, (caches, gru_cache, h, dense_cache, d1)


def forward(params: ModelParams, cfg: ModelConfig, single_input: np.ndarray):
    """Single-window convenience wrapper: [T, C] -> (scalar, cache)."""
    preds, cache = forward_batch(params, cfg, single_input[None])
    return float(preds[0]), cache


def backward(params: ModelParams, cfg: ModelConfig, inputs: np.ndarray,
             targets: np.ndarray):
    """Exact gradients of mean squared error over the batch.

    Returns (grads dict matching parameter names, batch loss).
    """
    preds, (caches, gru_cache, h, dense_cache, d1) = forward_batch(params, cfg, inputs)
    targets = np.asarray(targets, dtype=preds.dtype)
    if targets.shape != preds.shape:
        raise ValidationError(f"targets shape {targets.shape} does not match "
                              f"batch size {preds.shape}")
    err = preds - targets
    loss = float(np.mean(err * err))
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite batch loss (batch size {len(targets)}, "
                              f"max |pred| {np.max(np.abs(preds)):.3g})")
    p = params.tensors
    grads: dict[str, np.ndarray] = {}

    d_pred = (2.0 / len(targets)) * err
    grads["dense_b2"] = np.array([d_pred.sum()], dtype=preds.dtype)
    grads["dense_w2"] = d1.T @ d_pred
    dd1 = np.outer(d_pred, p["dense_w2"])
    da1 = activation_backward(dd1, dense_cache)
    grads["dense_w1"] = h.T @ da1
    grads["dense_b1"] = da1.sum(axis=0)
    dh = da1 @ p["dense_w1"].T

    d_seq, gru_grads = gru_backward(dh, p, gru_cache)
    grads.update(gru_grads)

    dx = d_seq
    for b in range(len(cfg.conv_blocks) - 1, -1, -1):
        conv_cache, act_cache, pool_cache = caches[b]
        if pool_cache is not None:
            dx = maxpool2_backward(dx, pool_cache)
        dx = activation_backward(dx, act_cache)
        dx, dw, db = conv1d_backward(dx, p[f"conv{b}_w"], conv_cache)
        grads[f"conv{b}_w"] = dw
        grads[f"conv{b}_b"] = db
    return grads, loss


# ---------------------------------------------------------------------------
# optimizer and training loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainHyper:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 10
    min_improvement: float = 1e-5
    weight_decay: float = 0.0   # L2 penalty added to gradients (0 = off)

    def __post_init__(self):
        if not 0 < self.beta1 < 1 or not 0 < self.beta2 < 1:
            raise ValidationError("betas must lie in (0, 1)")
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ValidationError("learning_rate and epsilon must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValidationError("batch_size, max_epochs, patience must be >= 1")
        if self.weight_decay < 0:
            raise ValidationError("weight_decay must be >= 0")


@dataclass(eq=False)
class OptimState:
    hyper: TrainHyper
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @staticmethod
    def fresh(params: ModelParams, hyper: TrainHyper = TrainHyper()) -> "OptimState":
        return OptimState(hyper=hyper,
                          m={k: np.zeros_like(t) for k, t in params},
                          v={k: np.zeros_like(t) for k, t in params})


def opt_step(params: ModelParams, grads: dict[str, np.ndarray],
             state: OptimState) -> tuple[ModelParams, OptimState]:
    """One adaptive-moment update with bias correction. Mutates in place
    and returns the same objects for call-site convenience."""
    state.step += 1
    hp = state.hyper
    bc1 = 1.0 - hp.beta1 ** state.step
    bc2 = 1.0 - hp.beta2 ** state.step
    for name, tensor in params:
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= hp.beta1
        m += (1.0 - hp.beta1) * g
        v *= hp.beta2
        v += (1.0 - hp.beta2) * (g * g)
        tensor -= hp.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + hp.epsilon)
    return params, state


@dataclass(eq=False)
class TrainReport:
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    wall_time_s: float = 0.0
    best_epoch: int = -1
    best_val_loss: float = float("inf")
    stopped_early: bool = False
    seed: int = 0

    @property
    def n_epochs(self) -> int:
        return len(self.train_losses)

    def to_dict(self) -> dict:
        return {"train_losses": self.train_losses, "val_losses": self.val_losses,
                "wall_time_s": self.wall_time_s, "best_epoch": self.best_epoch,
                "best_val_loss": self.best_val_loss,
                "stopped_early": self.stopped_early, "seed": self.seed}


def evaluate_loss(params: ModelParams, cfg: ModelConfig, inputs: np.ndarray,
                  targets: np.ndarray, batch_size: int = 1024) -> float:
    total = 0.0
    for i in range(0, len(inputs), batch_size):
        preds, _ = forward_batch(params, cfg, inputs[i:i + batch_size])
        err = preds - targets[i:i + batch_size].astype(preds.dtype)
        total += float(np.sum(err * err))
    return total / len(inputs)


def train(cfg: ModelConfig, hyper: TrainHyper, train_inputs: np.ndarray,
          train_targets: np.ndarray, val_inputs: np.ndarray,
          val_targets: np.ndarray, seed: int = 0) -> tuple[ModelParams, TrainReport]:
    """Mini-batch training with seed-deterministic shuffling and early stop.

    Stops when the validation loss has not improved by at least
    ``min_improvement`` for ``patience`` consecutive epochs; returns the
    parameters of the best validation epoch.
    """
    if len(train_inputs) == 0 or len(val_inputs) == 0:
        raise ValidationError("training and validation splits must be non-empty")
    dt = cfg.np_dtype()
    train_inputs = np.ascontiguousarray(train_inputs, dtype=dt)
    train_targets = np.asarray(train_targets, dtype=dt)
    val_inputs = np.ascontiguousarray(val_inputs, dtype=dt)
    val_targets = np.asarray(val_targets, dtype=dt)

    params = init_params(cfg)
    state = OptimState.fresh(params, hyper)
    report = TrainReport(seed=seed)
    best_params = params.copy()
    stall = 0
    t0 = time.perf_counter()

    for epoch in range(hyper.max_epochs):
        order = make_rng(seed, _STREAM_SHUFFLE, epoch).permutation(len(train_inputs))
        epoch_loss = 0.0
        for i in range(0, len(order), hyper.batch_size):
            idx = order[i:i + hyper.batch_size]
            try:
                grads, loss = backward(params, cfg, train_inputs[idx],
                                       train_targets[idx])
            except DivergenceError as exc:
                report.wall_time_s = time.perf_counter() - t0
                exc.report = report
                raise
            epoch_loss += loss * len(idx)
            if hyper.weight_decay > 0:
                for name, tensor in params:
                    grads[name] += hyper.weight_decay * tensor
            opt_step(params, grads, state)
        report.train_losses.append(epoch_loss / len(order))

        val_loss = evaluate_loss(params, cfg, val_inputs, val_targets)
        report.val_losses.append(val_loss)
        if not np.isfinite(val_loss):
            report.wall_time_s = time.perf_counter() - t0
            exc = DivergenceError(f"non-finite validation loss at epoch {epoch}")
            exc.report = report
            raise exc
        if val_loss < report.best_val_loss - hyper.min_improvement:
            report.best_val_loss = val_loss
            report.best_epoch = epoch
            best_params = params.copy()
            stall = 0
        else:
            stall += 1
            if stall >= hyper.patience:
                report.stopped_early = True
                break
    report.wall_time_s = time.perf_counter() - t0
    return best_params, report


def predict_scan(params: ModelParams, cfg: ModelConfig, roi: RoiMatrix,
                 spec: WindowSpec, normalizer: Normalizer,
                 batch_size: int = 1024) -> np.ndarray:
    """Per-frame HRV prediction in seconds, NaN outside the predictable range."""
    if roi.n_frames < spec.window_len:
        raise ValidationError(f"scan has {roi.n_frames} frames; "
                              f"window needs {spec.window_len}")
    if roi.n_channels != cfg.n_channels:
        raise ValidationError(f"scan has {roi.n_channels} channels; "
                              f"model expects {cfg.n_channels}")
    starts = np.arange(0, roi.n_frames - spec.window_len + 1, spec.stride)
    out = np.full(roi.n_frames, np.nan)
    dt = cfg.np_dtype()
    for i in range(0, len(starts), batch_size):
        chunk = starts[i:i + batch_size]
        batch = np.stack([normalizer.standardize_input(
            roi.values[s:s + spec.window_len]) for s in chunk]).astype(dt)
        preds, _ = forward_batch(params, cfg, batch)
        out[chunk + spec.target_offset] = normalizer.unstandardize_target(
            preds.astype(np.float64))
    return out


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path: str | Path, params: ModelParams, cfg: ModelConfig,
                    hyper: TrainHyper) -> None:
    """Versioned binary container: config + hyper records + flat tensors."""
    payload = {f"param_{k}": v for k, v in params}
    payload["version"] = np.array(CHECKPOINT_VERSION)
    payload["config_json"] = np.frombuffer(
        json.dumps(cfg.__dict__, default=list).encode(), dtype=np.uint8)
    payload["hyper_json"] = np.frombuffer(
        json.dumps(hyper.__dict__).encode(), dtype=np.uint8)
    np.savez(path, **payload)


def load_checkpoint(path: str | Path) -> tuple[ModelParams, ModelConfig, TrainHyper]:
    try:
        with np.load(path) as blob:
            version = int(blob["version"])
            if version != CHECKPOINT_VERSION:
                raise DataError(f"checkpoint version {version} unsupported "
                                f"(expected {CHECKPOINT_VERSION})")
            cfg_dict = json.loads(bytes(blob["config_json"]).decode())
            cfg_dict["conv_blocks"] = tuple(tuple(b) for b in cfg_dict["conv_blocks"])
            cfg_dict["pool"] = tuple(cfg_dict["pool"])
            cfg = ModelConfig(**cfg_dict)
            hyper = TrainHyper(**json.loads(bytes(blob["hyper_json"]).decode()))
            tensors = {k[len("param_"):]: blob[k] for k in blob.files
                       if k.startswith("param_")}
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot load checkpoint {path}: {exc}") from exc
    expected = set(parameter_names(cfg))
    if set(tensors) != expected:
        raise DataError(f"checkpoint {path} tensor names do not match config")
    return ModelParams(tensors), cfg, hyper
