"""The implicit map: a positional-encoded MLP from 7-D pose to a unit mean
direction and a concentration scalar, trained on the vMF negative
log-posterior with hand-written backprop and Adam.

No autodiff framework is used; every gradient path (weights, pose inputs,
full output Jacobian) is explicit and covered by finite-difference tests.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Pose
from .vmf import KAPPA_MAX, KAPPA_MIN, GammaPrior, vmf_loss_batch

MODEL_MAGIC = b"LAMPMDL1"
MODEL_VERSION = 1


class ModelFormatError(ValueError):
    """Bad magic, version, truncation, or inconsistent shapes on load."""


class ModelCorruptError(RuntimeError):
    """Non-finite activations encountered during a forward pass."""


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, batch: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class PositionalEncodingSpec:
    """NeRF-style sin/cos frequency bands over the 7 pose components."""

    L_pos: int = 6
    L_quat: int = 4
    include_identity: bool = True

    def __post_init__(self):
        if self.L_pos < 0 or self.L_quat < 0:
            raise ValueError("band counts must be non-negative")

    @property
    def width(self) -> int:
        return 7 * (1 if self.include_identity else 0) + 2 * (
            3 * self.L_pos + 4 * self.L_quat
        )


def _scale_factors(bounds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis center and inverse half-range mapping positions to [-1, 1]."""
    center = 0.5 * (bounds[:, 0] + bounds[:, 1])
    half = 0.5 * (bounds[:, 1] - bounds[:, 0])
    inv = np.where(half > 0, 1.0 / np.where(half > 0, half, 1.0), 0.0)
    return center, inv


def encode_pose(spec: PositionalEncodingSpec, X: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    """Encode poses (rows of X, shape (n, 7)) into feature rows.

    Layout: [raw 7-vector if include_identity] then per position component
    sin/cos at frequencies 2^k pi, then the same for quaternion components.
    Positions are rescaled to [-1, 1] by the world bounds first; quaternion
    components are already in [-1, 1].
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    center, inv = _scale_factors(bounds)
    u_pos = (X[:, :3] - center) * inv
    u_quat = X[:, 3:7]
    parts = []
    if spec.include_identity:
        parts.append(X)
    for u, L in ((u_pos, spec.L_pos), (u_quat, spec.L_quat)):
        for k in range(L):
            arg = (2.0**k) * np.pi * u
            parts.append(np.sin(arg))
            parts.append(np.cos(arg))
    return np.concatenate(parts, axis=1) if parts else np.zeros((X.shape[0], 0))


def encode_jacobian(spec: PositionalEncodingSpec, x: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    """d(encoding)/d(pose), shape (width, 7), at a single raw pose vector."""
    x = np.asarray(x, dtype=float)
    center, inv = _scale_factors(bounds)
    u_pos = (x[:3] - center) * inv
    u_quat = x[3:7]
    rows = []
    if spec.include_identity:
        rows.append(np.eye(7))
    for u, L, offset, du in (
        (u_pos, spec.L_pos, 0, inv),
        (u_quat, spec.L_quat, 3, np.ones(4)),
    ):
        m = len(u)
        for k in range(L):
            f = (2.0**k) * np.pi
            arg = f * u
            dsin = np.zeros((m, 7))
            dcos = np.zeros((m, 7))
            for j in range(m):
                dsin[j, offset + j] = f * np.cos(arg[j]) * du[j]
                dcos[j, offset + j] = -f * np.sin(arg[j]) * du[j]
            rows.append(dsin)
            rows.append(dcos)
    return np.concatenate(rows, axis=0) if rows else np.zeros((0, 7))


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class FieldModel:
    """MLP trunk with optional skip connections plus mu / kappa heads.

    Weights are (out, in) matrices; a skip layer receives the encoded input
    concatenated after the previous hidden activation.
    """

    encoding: PositionalEncodingSpec
    bounds: np.ndarray  # (3, 2) world box, meters
    d: int
    hidden: tuple[int, ...]
    skip_layers: tuple[int, ...]
    weights: list[np.ndarray] = field(default_factory=list)  # trunk W
    biases: list[np.ndarray] = field(default_factory=list)
    W_mu: np.ndarray | None = None
    b_mu: np.ndarray | None = None
    W_kappa: np.ndarray | None = None
    b_kappa: np.ndarray | None = None

    def layer_input_width(self, i: int) -> int:
        enc_w = self.encoding.width
        if i == 0:
            return enc_w
        w = self.hidden[i - 1]
        if i in self.skip_layers:
            w += enc_w
        return w

    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend([W, b])
        out.extend([self.W_mu, self.b_mu, self.W_kappa, self.b_kappa])
        return out

    # -- forward ---------------------------------------------------------

    def forward_batch(self, X: np.ndarray, want_cache: bool = False):
        """Map pose rows to (Mu, kappa[, cache]). Mu rows are unit norm."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        enc = encode_pose(self.encoding, X, self.bounds)
        h = enc
        inputs, pres = [], []
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if i in self.skip_layers and i > 0:
                h = np.concatenate([h, enc], axis=1)
            inputs.append(h)
            pre = h @ W.T + b
            pres.append(pre)
            h = np.maximum(pre, 0.0)
        raw_mu = h @ self.W_mu.T + self.b_mu
        pre_k = (h @ self.W_kappa.T + self.b_kappa)[:, 0]
        nrm = np.linalg.norm(raw_mu, axis=1)
        if np.any(nrm == 0) or not (
            np.all(np.isfinite(raw_mu)) and np.all(np.isfinite(pre_k))
        ):
            raise ModelCorruptError("non-finite or degenerate head outputs")
        Mu = raw_mu / nrm[:, None]
        kappa = np.minimum(KAPPA_MIN + _softplus(pre_k), KAPPA_MAX)
        if not want_cache:
            return Mu, kappa
        cache = {
            "X": X,
            "enc": enc,
            "inputs": inputs,
            "pres": pres,
            "h_last": h,
            "raw_mu": raw_mu,
            "nrm": nrm,
            "Mu": Mu,
            "pre_k": pre_k,
            "kappa": kappa,
        }
        return Mu, kappa, cache

    def forward(self, x: Pose):
        """Single-pose convenience: returns (mu (d,), kappa float)."""
        Mu, kappa = self.forward_batch(x.as_vector()[None, :])
        return Mu[0], float(kappa[0])

    # -- backward --------------------------------------------------------

    def _head_backward(self, cache, dMu, dKappa):
        """Gradients of heads from ambient dL/dMu and dL/dkappa; returns
        (d_pre_raw_mu, d_pre_k) plus head weight grads."""
        raw_mu, nrm, Mu = cache["raw_mu"], cache["nrm"], cache["Mu"]
        rowdot = np.einsum("ij,ij->i", Mu, dMu)
        d_raw = (dMu - Mu * rowdot[:, None]) / nrm[:, None]
        capped = cache["kappa"] >= KAPPA_MAX
        d_pre_k = dKappa * _sigmoid(cache["pre_k"]) * (~capped)
        return d_raw, d_pre_k

    def _trunk_backward(self, cache, d_h_last, want_input_grad=False):
        """Backprop d_h_last through the trunk. Returns (param_grads, dX).

        param_grads matches the order of params(): trunk (W, b) pairs, with
        head grads left as None for the caller to fill.
        """
        grads_W = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        enc_grad = np.zeros_like(cache["enc"])
        d_h = d_h_last
        for i in range(len(self.weights) - 1, -1, -1):
            d_pre = d_h * (cache["pres"][i] > 0)
            grads_W[i] = d_pre.T @ cache["inputs"][i]
            grads_b[i] = d_pre.sum(axis=0)
            d_in = d_pre @ self.weights[i]
            if i in self.skip_layers and i > 0:
                prev_w = self.hidden[i - 1]
                enc_grad += d_in[:, prev_w:]
                d_h = d_in[:, :prev_w]
            elif i == 0:
                enc_grad += d_in
                d_h = None
            else:
                d_h = d_in
        dX = None
        if want_input_grad:
            X = cache["X"]
            dX = np.zeros_like(X)
            for r in range(X.shape[0]):
                J = encode_jacobian(self.encoding, X[r], self.bounds)
                dX[r] = enc_grad[r] @ J
        return grads_W, grads_b, dX

    def loss_grads(self, cache, dMu, dKappa):
        """Full parameter-gradient list for ambient (dMu, dKappa) seeds."""
        d_raw, d_pre_k = self._head_backward(cache, dMu, dKappa)
        h_last = cache["h_last"]
        gW_mu = d_raw.T @ h_last
        gb_mu = d_raw.sum(axis=0)
        gW_k = (d_pre_k[None, :] @ h_last).reshape(1, -1)
        gb_k = np.array([d_pre_k.sum()])
        d_h_last = d_raw @ self.W_mu + d_pre_k[:, None] * self.W_kappa
        gW, gb, _ = self._trunk_backward(cache, d_h_last)
        out = []
        for W, b in zip(gW, gb):
            out.extend([W, b])
        out.extend([gW_mu, gb_mu, gW_k, gb_k])
        return out

    def pose_gradient(self, x: Pose, z_goal: np.ndarray) -> np.ndarray:
        """Exact gradient of cos_sim(mu(x), z_goal) w.r.t. the 7 pose coords."""
        z_goal = np.asarray(z_goal, dtype=float)
        _, _, cache = self.forward_batch(x.as_vector()[None, :], want_cache=True)
        dMu = z_goal[None, :]
        d_raw, d_pre_k = self._head_backward(cache, dMu, np.zeros(1))
        d_h_last = d_raw @ self.W_mu + d_pre_k[:, None] * self.W_kappa
        _, _, dX = self._trunk_backward(cache, d_h_last, want_input_grad=True)
        return dX[0]

    def jacobian_norm(self, x: Pose) -> float:
        """Frobenius norm of d(mu)/d(pose), via forward-mode tangents."""
        xv = x.as_vector()
        _, _, cache = self.forward_batch(xv[None, :], want_cache=True)
        T = encode_jacobian(self.encoding, xv, self.bounds)  # (enc_w, 7)
        T_enc = T
        for i, W in enumerate(self.weights):
            if i in self.skip_layers and i > 0:
                T = np.concatenate([T, T_enc], axis=0)
            T = (W @ T) * (cache["pres"][i][0] > 0)[:, None]
        T_raw = self.W_mu @ T  # (d, 7)
        mu = cache["Mu"][0]
        T_mu = (T_raw - np.outer(mu, mu @ T_raw)) / cache["nrm"][0]
        return float(np.linalg.norm(T_mu))

    def quantize_f32(self):
        """Round all parameters to float32 values so save/load is lossless."""
        self.weights = [W.astype(np.float32).astype(float) for W in self.weights]
        self.biases = [b.astype(np.float32).astype(float) for b in self.biases]
        self.W_mu = self.W_mu.astype(np.float32).astype(float)
        self.b_mu = self.b_mu.astype(np.float32).astype(float)
        self.W_kappa = self.W_kappa.astype(np.float32).astype(float)
        self.b_kappa = self.b_kappa.astype(np.float32).astype(float)


def init_model(
    encoding: PositionalEncodingSpec,
    bounds,
    d: int,
    hidden=(64, 64),
    skip_layers=(),
    seed: int = 0,
) -> FieldModel:
    """He-initialized model; fully determined by the seed."""
    bounds = np.asarray(bounds, dtype=float).reshape(3, 2)
    model = FieldModel(
        encoding=encoding,
        bounds=bounds,
        d=d,
        hidden=tuple(hidden),
        skip_layers=tuple(skip_layers),
    )
    rng = np.random.default_rng(seed)
    for i, width in enumerate(model.hidden):
        fan_in = model.layer_input_width(i)
        model.weights.append(rng.standard_normal((width, fan_in)) * np.sqrt(2.0 / fan_in))
        model.biases.append(np.zeros(width))
    last = model.hidden[-1]
    model.W_mu = rng.standard_normal((d, last)) * np.sqrt(1.0 / last)
    model.b_mu = np.zeros(d)
    model.W_kappa = rng.standard_normal((1, last)) * np.sqrt(1.0 / last)
    model.b_kappa = np.array([1.0])
    return model


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 256
    epochs: int = 20
    seed: int = 0
    prior: GammaPrior = GammaPrior()
    weight_decay: float = 0.0
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not (0.0 < self.val_fraction < 0.5):
            raise ValueError("validation fraction must be in (0, 0.5)")


def train(model: FieldModel, X: np.ndarray, Z: np.ndarray, config: TrainConfig):
    """Adam on the mean vMF loss. Returns (model, history).

    history is a list of {"epoch", "train_loss", "val_loss"} dicts. The
    dataset is canonicalized by sorting rows first, so training is invariant
    to the order records arrive in; all shuffling then flows from the seed.
    """
    X = np.asarray(X, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("dataset is empty")
    if Z.shape[1] != model.d:
        raise ValueError(f"dataset d={Z.shape[1]} but model d={model.d}")
    order = np.lexsort(np.concatenate([X, Z], axis=1).T[::-1])
    X, Z = X[order], Z[order]

    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(X.shape[0])
    n_val = max(1, int(round(config.val_fraction * X.shape[0]))) if X.shape[0] > 1 else 0
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if train_idx.size == 0:
        train_idx, val_idx = perm, perm[:0]

    params = model.params()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0
    history = []
    for epoch in range(config.epochs):
        epoch_order = train_idx[rng.permutation(train_idx.size)]
        total, count = 0.0, 0
        for bi, start in enumerate(range(0, epoch_order.size, config.batch_size)):
            idx = epoch_order[start : start + config.batch_size]
            xb, zb = X[idx], Z[idx]
            try:
                Mu, kappa, cache = model.forward_batch(xb, want_cache=True)
            except ModelCorruptError as exc:
                raise TrainingDivergedError(epoch, bi) from exc
            losses, dMu, dKappa = vmf_loss_batch(zb, Mu, kappa, config.prior)
            loss = float(losses.mean())
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, bi)
            scale = 1.0 / idx.size
            grads = model.loss_grads(cache, dMu * scale, dKappa * scale)
            step += 1
            params = model.params()
            for j, (p, g) in enumerate(zip(params, grads)):
                if config.weight_decay and p.ndim == 2:
                    g = g + config.weight_decay * p
                m[j] = config.beta1 * m[j] + (1 - config.beta1) * g
                v[j] = config.beta2 * v[j] + (1 - config.beta2) * g * g
                mhat = m[j] / (1 - config.beta1**step)
                vhat = v[j] / (1 - config.beta2**step)
                p -= config.lr * mhat / (np.sqrt(vhat) + config.eps)
            total += loss * idx.size
            count += idx.size
        val_loss = float("nan")
        if val_idx.size:
            Mu, kappa = model.forward_batch(X[val_idx])
            vl, _, _ = vmf_loss_batch(Z[val_idx], Mu, kappa, config.prior)
            val_loss = float(vl.mean())
        history.append(
            {"epoch": epoch, "train_loss": total / count, "val_loss": val_loss}
        )
    model.quantize_f32()
    return model, history


# -- serialization --------------------------------------------------------


def save_model_bytes(model: FieldModel) -> bytes:
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    layers = list(zip(model.weights, model.biases)) + [
        (model.W_mu, model.b_mu),
        (model.W_kappa, model.b_kappa),
    ]
    buf.write(struct.pack("<III", MODEL_VERSION, model.d, len(layers)))
    for W, _ in layers:
        buf.write(struct.pack("<II", W.shape[0], W.shape[1]))
    buf.write(
        struct.pack(
            "<III",
            model.encoding.L_pos,
            model.encoding.L_quat,
            1 if model.encoding.include_identity else 0,
        )
    )
    buf.write(struct.pack("<I", len(model.skip_layers)))
    for s in model.skip_layers:
        buf.write(struct.pack("<I", s))
    buf.write(np.asarray(model.bounds, dtype="<f4").tobytes())
    for W, b in layers:
        buf.write(W.astype("<f4").tobytes())
        buf.write(b.astype("<f4").tobytes())
    return buf.getvalue()


def save_model(model: FieldModel, path):
    with open(path, "wb") as f:
        f.write(save_model_bytes(model))


def _read(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise ModelFormatError("truncated model file")
    return data


def load_model(path) -> FieldModel:
    with open(path, "rb") as f:
        if _read(f, 8) != MODEL_MAGIC:
            raise ModelFormatError("bad magic bytes")
        version, d, n_layers = struct.unpack("<III", _read(f, 12))
        if version != MODEL_VERSION:
            raise ModelFormatError(f"unsupported version {version}")
        shapes = [struct.unpack("<II", _read(f, 8)) for _ in range(n_layers)]
        L_pos, L_quat, ident = struct.unpack("<III", _read(f, 12))
        (n_skip,) = struct.unpack("<I", _read(f, 4))
        skips = tuple(struct.unpack("<I", _read(f, 4))[0] for _ in range(n_skip))
        bounds = np.frombuffer(_read(f, 24), dtype="<f4").astype(float).reshape(3, 2)
        mats = []
        for rows, cols in shapes:
            W = np.frombuffer(_read(f, 4 * rows * cols), dtype="<f4").astype(float)
            b = np.frombuffer(_read(f, 4 * rows), dtype="<f4").astype(float)
            mats.append((W.reshape(rows, cols), b))
        if f.read(1):
            raise ModelFormatError("trailing bytes after weights")
    trunk, (W_mu, b_mu), (W_k, b_k) = mats[:-2], mats[-2], mats[-1]
    if W_mu.shape[0] != d or W_k.shape[0] != 1:
        raise ModelFormatError("head shapes inconsistent with header")
    model = FieldModel(
        encoding=PositionalEncodingSpec(L_pos, L_quat, bool(ident)),
        bounds=bounds,
        d=d,
        hidden=tuple(W.shape[0] for W, _ in trunk),
        skip_layers=skips,
        weights=[W for W, _ in trunk],
        biases=[b for _, b in trunk],
        W_mu=W_mu,
        b_mu=b_mu,
        W_kappa=W_k,
        b_kappa=b_k,
    )
    enc_w = model.encoding.width
    for i, W in enumerate(model.weights):
        if W.shape[1] != model.layer_input_width(i):
            raise ModelFormatError(f"layer {i} input width mismatch")
    if enc_w == 0 and model.weights:
        raise ModelFormatError("empty encoding with nonempty trunk")
    return model
