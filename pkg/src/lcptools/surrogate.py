"""Branched MLP surrogate that predicts level-crossing probabilities.

The network has three encoder branches fed separately with the cell means
(4 values), the packed variances/covariances (10) and the isovalue (1).
Every fully connected layer is followed by a sine activation -- sin(omega0*x)
on each branch's first layer, sin(x) afterwards -- except the decoder's last
layer, which maps the concatenated latent vector through a sigmoid to a
probability in (0, 1).

Everything is plain numpy in float32: forward, backprop, Adam. Training is
run under a single-threaded BLAS limit so identical seeds give bit-identical
models on any machine, and models serialize to a compact binary that
round-trips parameters exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.special import expit
from threadpoolctl import threadpool_limits

from .cellstats import FEATURE_WIDTH, SAMPLE_WIDTH, CellStatsGrid
from .errors import (
    BadMagic,
    DivergedLoss,
    EmptyTrainingSet,
    InvalidConfig,
    NonFiniteInput,
    ShapeMismatch,
    TooFewSamples,
    TruncatedFile,
    VersionMismatch,
)
from .pmc import LcpField
from .rng import mix64

_MAGIC = b"LCPM"
_FORMAT_VERSION = 1

_BRANCH_INPUTS = {"mean": 4, "cov": 10, "iso": 1}


@dataclass(frozen=True)
class MlpConfig:
    """Layer widths of the three encoder branches and the decoder.

    Branch tuples list hidden widths (inputs are fixed at 4/10/1); the
    decoder tuple includes its input width, which must equal the sum of the
    three branch output widths, and ends in 1.
    """

    mean_layers: tuple[int, ...] = (128, 128)
    cov_layers: tuple[int, ...] = (128, 128)
    iso_layers: tuple[int, ...] = (128, 128)
    decoder_layers: tuple[int, ...] = (384, 256, 128, 1)
    omega0: float = 30.0

    def validate(self) -> None:
        for name in ("mean_layers", "cov_layers", "iso_layers", "decoder_layers"):
            widths = getattr(self, name)
            if len(widths) < 1 or any(w < 1 for w in widths):
                raise InvalidConfig(f"{name} must be nonempty positive widths, got {widths}")
        latent = self.mean_layers[-1] + self.cov_layers[-1] + self.iso_layers[-1]
        if self.decoder_layers[0] != latent:
            raise InvalidConfig(
                f"decoder input {self.decoder_layers[0]} != branch output sum {latent}"
            )
        if self.decoder_layers[-1] != 1:
            raise InvalidConfig(f"decoder must end in width 1, got {self.decoder_layers[-1]}")
        if len(self.decoder_layers) < 2:
            raise InvalidConfig("decoder needs at least input and output widths")
        if not self.omega0 > 0:
            raise InvalidConfig(f"omega0 must be > 0, got {self.omega0}")

    def branch_shapes(self, branch: str) -> list[tuple[int, int]]:
        dims = [_BRANCH_INPUTS[branch], *getattr(self, f"{branch}_layers")]
        return list(zip(dims[:-1], dims[1:]))

    def decoder_shapes(self) -> list[tuple[int, int]]:
        return list(zip(self.decoder_layers[:-1], self.decoder_layers[1:]))


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings for training and cross-validation."""

    epochs: int = 100
    folds: int = 5
    batch_size: int = 1024
    learning_rate: float = 1e-4
    seed: int = 0


@dataclass
class MlpModel:
    """Weights and biases, float32, grouped per branch in layer order."""

    config: MlpConfig
    mean_w: list[np.ndarray]
    mean_b: list[np.ndarray]
    cov_w: list[np.ndarray]
    cov_b: list[np.ndarray]
    iso_w: list[np.ndarray]
    iso_b: list[np.ndarray]
    dec_w: list[np.ndarray]
    dec_b: list[np.ndarray]

    def parameters(self) -> list[np.ndarray]:
        """All parameter arrays in declaration order (weight, bias per layer)."""
        out = []
        for ws, bs in (
            (self.mean_w, self.mean_b),
            (self.cov_w, self.cov_b),
            (self.iso_w, self.iso_b),
            (self.dec_w, self.dec_b),
        ):
            for w, b in zip(ws, bs):
                out.append(w)
                out.append(b)
        return out

    def astype(self, dtype) -> "MlpModel":
        """Copy of the model with all parameters cast to ``dtype``."""
        def cast(arrs):
            return [a.astype(dtype) for a in arrs]

        return MlpModel(
            config=self.config,
            mean_w=cast(self.mean_w), mean_b=cast(self.mean_b),
            cov_w=cast(self.cov_w), cov_b=cast(self.cov_b),
            iso_w=cast(self.iso_w), iso_b=cast(self.iso_b),
            dec_w=cast(self.dec_w), dec_b=cast(self.dec_b),
        )


def init_model(config: MlpConfig, seed: int) -> MlpModel:
    """Initialize weights for the sine network, deterministically from seed.

    Branch first layers draw uniform in [-1/fan_in, 1/fan_in]; all later
    layers (including the decoder, whose final affine layer reuses the same
    range) draw uniform in +-sqrt(6/fan_in)/omega0. Biases start at zero.
    """
    config.validate()
    rng = np.random.default_rng(seed)

    def make_layers(shapes, first_is_input):
        ws, bs = [], []
        for li, (fan_in, fan_out) in enumerate(shapes):
            if first_is_input and li == 0:
                bound = 1.0 / fan_in
            else:
                bound = np.sqrt(6.0 / fan_in) / config.omega0
            ws.append(rng.uniform(-bound, bound, (fan_in, fan_out)).astype(np.float32))
            bs.append(np.zeros(fan_out, dtype=np.float32))
        return ws, bs

    mean_w, mean_b = make_layers(config.branch_shapes("mean"), True)
    cov_w, cov_b = make_layers(config.branch_shapes("cov"), True)
    iso_w, iso_b = make_layers(config.branch_shapes("iso"), True)
    dec_w, dec_b = make_layers(config.decoder_shapes(), False)
    return MlpModel(config, mean_w, mean_b, cov_w, cov_b, iso_w, iso_b, dec_w, dec_b)


def _branch_forward(x, ws, bs, omega0):
    acts, pres = [], []
    for li, (w, b) in enumerate(zip(ws, bs)):
        acts.append(x)
        pre = x @ w + b
        pres.append(pre)
        x = np.sin(omega0 * pre) if li == 0 else np.sin(pre)
    return x, acts, pres


def _forward_cached(model: MlpModel, x: np.ndarray):
    """Batched forward pass keeping layer inputs/pre-activations for backprop."""
    hm, am, pm = _branch_forward(x[:, 0:4], model.mean_w, model.mean_b, model.config.omega0)
    hc, ac, pc = _branch_forward(x[:, 4:14], model.cov_w, model.cov_b, model.config.omega0)
    hi, ai, pi = _branch_forward(x[:, 14:15], model.iso_w, model.iso_b, model.config.omega0)
    h = np.concatenate([hm, hc, hi], axis=1)

    acts, pres = [], []
    last = len(model.dec_w) - 1
    for li, (w, b) in enumerate(zip(model.dec_w, model.dec_b)):
        acts.append(h)
        pre = h @ w + b
        pres.append(pre)
        h = np.sin(pre) if li < last else None
    out = expit(pres[-1][:, 0])
    # guard the open interval against rounding under extreme parameters
    info = np.finfo(out.dtype)
    out = np.clip(out, info.tiny, 1.0 - info.epsneg)
    return out, ((am, pm), (ac, pc), (ai, pi), (acts, pres))


def forward(model: MlpModel, features) -> float | np.ndarray:
    """Predicted crossing probability for one (15,) or a batch (n, 15).

    Feature layout matches the training samples minus the label: means,
    packed covariances, isovalue.
    """
    x = np.asarray(features)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != FEATURE_WIDTH:
        raise ShapeMismatch(f"expected (n, {FEATURE_WIDTH}) features, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("features contain non-finite values")
    x = x.astype(model.mean_w[0].dtype, copy=False)
    out, _ = _forward_cached(model, x)
    return float(out[0]) if single else out


def _backward(model: MlpModel, x, y, out, cache):
    """Gradients of the batch-mean squared error wrt every parameter."""
    (am, pm), (ac, pc), (ai, pi), (dacts, dpres) = cache
    n = x.shape[0]
    dtype = x.dtype

    d_out = (2.0 / n) * (out - y)
    dpre = (d_out * out * (1.0 - out)).astype(dtype)[:, None]

    dec_gw = [None] * len(model.dec_w)
    dec_gb = [None] * len(model.dec_w)
    for li in range(len(model.dec_w) - 1, -1, -1):
        dec_gw[li] = dacts[li].T @ dpre
        dec_gb[li] = dpre.sum(axis=0)
        dx = dpre @ model.dec_w[li].T
        if li > 0:
            dpre = dx * np.cos(dpres[li - 1])

    grads = {"dec_w": dec_gw, "dec_b": dec_gb}
    w_m = model.config.mean_layers[-1]
    w_c = model.config.cov_layers[-1]
    slices = {
        "mean": (slice(0, w_m), model.mean_w, am, pm),
        "cov": (slice(w_m, w_m + w_c), model.cov_w, ac, pc),
        "iso": (slice(w_m + w_c, None), model.iso_w, ai, pi),
    }
    omega0 = model.config.omega0
    for name, (sl, ws, acts, pres) in slices.items():
        d = dx[:, sl]
        gw = [None] * len(ws)
        gb = [None] * len(ws)
        for li in range(len(ws) - 1, -1, -1):
            scale = omega0 if li == 0 else 1.0
            dpre_b = d * np.cos(np.asarray(scale, dtype=dtype) * pres[li]) * np.asarray(scale, dtype=dtype)
            gw[li] = acts[li].T @ dpre_b
            gb[li] = dpre_b.sum(axis=0)
            if li > 0:
                d = dpre_b @ ws[li].T
        grads[f"{name}_w"] = gw
        grads[f"{name}_b"] = gb
    return grads


def _grad_arrays(model: MlpModel, grads: dict) -> list[np.ndarray]:
    out = []
    for part in ("mean", "cov", "iso", "dec"):
        for w, b in zip(grads[f"{part}_w"], grads[f"{part}_b"]):
            out.append(w)
            out.append(b)
    return out


def loss_mse(p_hat: float, p: float) -> tuple[float, float]:
    """Squared error (p_hat - p)**2 and its gradient 2*(p_hat - p)."""
    diff = p_hat - p
    return diff * diff, 2.0 * diff


class _Adam:
    """Adam state for a fixed parameter list."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = np.float32(lr)
        self.beta1 = np.float32(beta1)
        self.beta2 = np.float32(beta2)
        self.eps = np.float32(eps)
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = np.float32(1.0 - self.beta1 ** self.t)
        c2 = np.float32(1.0 - self.beta2 ** self.t)
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _as_sample_array(samples) -> np.ndarray:
    arr = np.asarray(samples, dtype=np.float32)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, SAMPLE_WIDTH)
    if arr.ndim != 2 or arr.shape[1] != SAMPLE_WIDTH:
        raise ShapeMismatch(f"expected (n, {SAMPLE_WIDTH}) samples, got {arr.shape}")
    return arr


def train(samples, mcfg: MlpConfig, tcfg: TrainConfig) -> tuple[MlpModel, list[float]]:
    """Minibatch Adam over shuffled epochs; returns (model, epoch loss history).

    Bit-exact reproducibility: initialization and shuffling derive from
    ``tcfg.seed`` and all reductions run single-threaded, so the trained
    model does not depend on machine core count.
    """
    arr = _as_sample_array(samples)
    if arr.shape[0] == 0:
        raise EmptyTrainingSet("no training samples")
    if tcfg.epochs < 1 or tcfg.batch_size < 1:
        raise InvalidConfig("epochs and batch_size must be >= 1")

    x = arr[:, :FEATURE_WIDTH].copy()
    y = arr[:, FEATURE_WIDTH].copy()
    n = arr.shape[0]

    model = init_model(mcfg, tcfg.seed)
    params = model.parameters()
    opt = _Adam(params, tcfg.learning_rate)
    shuffle_rng = np.random.default_rng(mix64(tcfg.seed, 0xA5))

    history: list[float] = []
    with threadpool_limits(limits=1):
        for _ in range(tcfg.epochs):
            order = shuffle_rng.permutation(n)
            sq_sum = 0.0
            for lo in range(0, n, tcfg.batch_size):
                idx = order[lo:lo + tcfg.batch_size]
                xb, yb = x[idx], y[idx]
                out, cache = _forward_cached(model, xb)
                grads = _backward(model, xb, yb, out, cache)
                opt.step(params, _grad_arrays(model, grads))
                sq_sum += float(np.sum((out - yb) ** 2, dtype=np.float64))
            epoch_loss = sq_sum / n
            if not np.isfinite(epoch_loss):
                raise DivergedLoss(f"epoch loss became {epoch_loss}")
            history.append(epoch_loss)
    return model, history


@dataclass(frozen=True)
class FoldMetrics:
    fold: int
    train_loss: float
    val_loss: float
    val_median_abs_err: float


@dataclass(frozen=True)
class CvResult:
    folds: tuple[FoldMetrics, ...]
    model: MlpModel  # trained on all samples after the fold metrics


def fold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Contiguous blocks of a seeded shuffle: disjoint, covering range(n)."""
    perm = np.random.default_rng(mix64(seed, 0xCF)).permutation(n)
    return [blk for blk in np.array_split(perm, folds)]


def cross_validate(samples, mcfg: MlpConfig, tcfg: TrainConfig) -> CvResult:
    """K-fold metrics plus a final model trained on the full sample set."""
    arr = _as_sample_array(samples)
    if tcfg.folds < 2:
        raise TooFewSamples(f"cross-validation needs folds >= 2, got {tcfg.folds}")
    if arr.shape[0] < tcfg.folds:
        raise TooFewSamples(f"{arr.shape[0]} samples cannot fill {tcfg.folds} folds")

    blocks = fold_indices(arr.shape[0], tcfg.folds, tcfg.seed)
    metrics = []
    for k, val_idx in enumerate(blocks):
        train_idx = np.concatenate([blk for j, blk in enumerate(blocks) if j != k])
        fold_cfg = replace(tcfg, seed=mix64(tcfg.seed, 1000 + k))
        model, history = train(arr[train_idx], mcfg, fold_cfg)
        pred = forward(model, arr[val_idx, :FEATURE_WIDTH])
        err = np.abs(pred - arr[val_idx, FEATURE_WIDTH])
        metrics.append(
            FoldMetrics(
                fold=k,
                train_loss=history[-1],
                val_loss=float(np.mean(err ** 2, dtype=np.float64)),
                val_median_abs_err=float(np.median(err)),
            )
        )
    final_model, _ = train(arr, mcfg, tcfg)
    return CvResult(folds=tuple(metrics), model=final_model)


def grid_features(stats: CellStatsGrid, isovalue: float) -> np.ndarray:
    """(n_cells, 15) feature matrix for a stats grid at one isovalue."""
    n = len(stats)
    feats = np.empty((n, FEATURE_WIDTH), dtype=np.float32)
    feats[:, 0:4] = stats.mu
    feats[:, 4:14] = stats.cov
    feats[:, 14] = isovalue
    return feats


def predict_field(model: MlpModel, stats: CellStatsGrid, isovalue: float) -> LcpField:
    """Surrogate prediction over every cell of a stats grid."""
    probs = forward(model, grid_features(stats, isovalue)).astype(np.float32)
    return LcpField(
        cells_w=stats.cells_w,
        cells_h=stats.cells_h,
        probs=probs.reshape(stats.cells_h, stats.cells_w),
        isovalue=isovalue,
        r=0,
        seed=0,
        method="surrogate",
    )


def gradient_check(
    model: MlpModel,
    sample,
    epsilon: float = 1e-4,
    *,
    num_params: int = 200,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Runs in float64 on a copy of the model. ``num_params`` parameters are
    chosen at random (all of them if the model is smaller). Relative error is
    |a - n| / max(|a| + |n|, 1e-8), which treats jointly tiny gradients as
    agreeing.
    """
    arr = np.asarray(sample, dtype=np.float64).reshape(-1)
    x = arr[:FEATURE_WIDTH][None, :]
    y = np.asarray([arr[FEATURE_WIDTH]]) if arr.size == SAMPLE_WIDTH else np.asarray([0.0])

    twin = model.astype(np.float64)
    params = twin.parameters()
    out, cache = _forward_cached(twin, x)
    grads = _grad_arrays(twin, _backward(twin, x, y, out, cache))

    sizes = [p.size for p in params]
    total = int(np.sum(sizes))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(total, size=min(num_params, total), replace=False)
    offsets = np.cumsum([0, *sizes])

    def loss_at() -> float:
        pred, _ = _forward_cached(twin, x)
        return float((pred[0] - y[0]) ** 2)

    worst = 0.0
    for flat in chosen:
        pi = int(np.searchsorted(offsets, flat, side="right") - 1)
        local = int(flat - offsets[pi])
        param = params[pi].reshape(-1)
        orig = param[local]
        param[local] = orig + epsilon
        f_plus = loss_at()
        param[local] = orig - epsilon
        f_minus = loss_at()
        param[local] = orig
        numeric = (f_plus - f_minus) / (2.0 * epsilon)
        analytic = float(grads[pi].reshape(-1)[local])
        rel = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst


def save_model(model: MlpModel, path: str | Path) -> Path:
    """Serialize to the compact binary model format.

    Layout: magic ``LCPM``, u32 format version, f64 omega0, four layer-width
    tables (u32 count then u32 widths; branches list hidden widths, the
    decoder table includes its input width), then every weight matrix
    (row-major) and bias vector as little-endian float32 in declaration
    order.
    """
    path = Path(path)
    chunks = [_MAGIC, struct.pack("<I", _FORMAT_VERSION), struct.pack("<d", model.config.omega0)]
    for widths in (
        model.config.mean_layers,
        model.config.cov_layers,
        model.config.iso_layers,
        model.config.decoder_layers,
    ):
        chunks.append(struct.pack("<I", len(widths)))
        chunks.append(struct.pack(f"<{len(widths)}I", *widths))
    for param in model.parameters():
        chunks.append(np.ascontiguousarray(param, dtype="<f4").tobytes())
    path.write_bytes(b"".join(chunks))
    return path


def load_model(path: str | Path) -> MlpModel:
    """Read a model written by :func:`save_model`."""
    blob = Path(path).read_bytes()
    cursor = 0

    def take(count: int) -> bytes:
        nonlocal cursor
        if cursor + count > len(blob):
            raise TruncatedFile(f"{path}: needed {count} bytes at offset {cursor}")
        chunk = blob[cursor:cursor + count]
        cursor += count
        return chunk

    if take(4) != _MAGIC:
        raise BadMagic(f"{path}: not a model file")
    version = struct.unpack("<I", take(4))[0]
    if version != _FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format version {version}, expected {_FORMAT_VERSION}")
    omega0 = struct.unpack("<d", take(8))[0]

    tables = []
    for _ in range(4):
        count = struct.unpack("<I", take(4))[0]
        tables.append(struct.unpack(f"<{count}I", take(4 * count)))
    config = MlpConfig(
        mean_layers=tables[0],
        cov_layers=tables[1],
        iso_layers=tables[2],
        decoder_layers=tables[3],
        omega0=omega0,
    )
    try:
        config.validate()
    except InvalidConfig as exc:
        raise ShapeMismatch(f"{path}: {exc}") from exc

    def read_layers(shapes):
        ws, bs = [], []
        for fan_in, fan_out in shapes:
            ws.append(
                np.frombuffer(take(4 * fan_in * fan_out), dtype="<f4").reshape(fan_in, fan_out).copy()
            )
            bs.append(np.frombuffer(take(4 * fan_out), dtype="<f4").copy())
        return ws, bs

    mean_w, mean_b = read_layers(config.branch_shapes("mean"))
    cov_w, cov_b = read_layers(config.branch_shapes("cov"))
    iso_w, iso_b = read_layers(config.branch_shapes("iso"))
    dec_w, dec_b = read_layers(config.decoder_shapes())
    if cursor != len(blob):
        raise ShapeMismatch(f"{path}: {len(blob) - cursor} unexpected trailing bytes")
    return MlpModel(config, mean_w, mean_b, cov_w, cov_b, iso_w, iso_b, dec_w, dec_b)
