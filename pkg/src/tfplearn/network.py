"""Coefficient-predicting networks with hand-written backpropagation.

Two architectures: a small fully connected network for 1D problems
(source samples in, coefficient vector out) and a convolutional
encoder-decoder for 2D (16x16 source image in, 16x16x4 coefficient
image out, flattened in cell order).  Everything runs in float64 numpy;
gradients come from explicit reverse passes, checked against finite
differences in the tests.

The optimizer is AdamW with decoupled weight decay and a per-step
exponential learning-rate decay.  Batch normalization keeps running
statistics with retention 0.9 for evaluation mode.

Network outputs pass through an affine rescaling fitted to oracle
coefficient statistics, so a tanh head can cover coefficient ranges far
outside (-1, 1); the rescaling is part of the checkpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch, StaleCache

_BN_EPS = 1e-5
_BN_RETAIN = 0.9


# ---------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class MlpSpec:
    """Fully connected coefficient network: rectifier hidden layers,
    identity output."""

    layer_sizes: tuple[int, ...]

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ShapeMismatch("an MLP needs at least input and output sizes")
        if any(s <= 0 for s in self.layer_sizes):
            raise ShapeMismatch("layer sizes must be positive")

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    def header_dict(self) -> dict:
        return {"kind": "mlp", "layer_sizes": list(self.layer_sizes)}


def mlp_spec(n_in: int, n_out: int, hidden: tuple[int, ...] = (64, 64, 64, 64)) -> MlpSpec:
    return MlpSpec(layer_sizes=(n_in, *hidden, n_out))


@dataclass(frozen=True)
class CnnSpec:
    """Convolutional encoder-decoder for 16x16 source images.

    Encoder: four stride-2 3x3 convolutions with normalization and
    rectifier, halving the image to a 1x1 latent.  Decoder: two stages of
    (stride-4 transposed convolution, 3x3 convolution), each with
    normalization and rectifier, then a final 3x3 convolution with
    normalization and tanh.  Output channels land last, giving one basis
    coefficient quadruple per cell.
    """

    image_size: int = 16
    encoder_channels: tuple[int, int, int, int] = (32, 64, 128, 256)
    decoder_channels: tuple[int, int, int, int] = (128, 64, 32, 16)
    n_basis: int = 4

    def __post_init__(self):
        if self.image_size != 16:
            raise ShapeMismatch("the encoder shape contract needs 16x16 input")
        if len(self.encoder_channels) != 4 or len(self.decoder_channels) != 4:
            raise ShapeMismatch("encoder and decoder each take four channel sizes")

    @property
    def n_in(self) -> int:
        return self.image_size * self.image_size

    @property
    def n_out(self) -> int:
        return self.image_size * self.image_size * self.n_basis

    @property
    def latent(self) -> int:
        return self.encoder_channels[-1]

    def header_dict(self) -> dict:
        return {
            "kind": "cnn",
            "image_size": self.image_size,
            "encoder_channels": list(self.encoder_channels),
            "decoder_channels": list(self.decoder_channels),
            "n_basis": self.n_basis,
        }


def spec_from_dict(d: dict):
    if d["kind"] == "mlp":
        return MlpSpec(layer_sizes=tuple(d["layer_sizes"]))
    if d["kind"] == "cnn":
        return CnnSpec(
            image_size=d["image_size"],
            encoder_channels=tuple(d["encoder_channels"]),
            decoder_channels=tuple(d["decoder_channels"]),
            n_basis=d["n_basis"],
        )
    raise ShapeMismatch(f"unknown network kind {d['kind']!r}")


# ---------------------------------------------------------------------------
# layer plans


def _layers(spec) -> list[tuple]:
    """Flat op list: each entry is (op, name, *shape info)."""
    if isinstance(spec, MlpSpec):
        plan = []
        sizes = spec.layer_sizes
        for i in range(len(sizes) - 1):
            plan.append(("linear", f"l{i}", sizes[i], sizes[i + 1]))
            if i < len(sizes) - 2:
                plan.append(("relu", f"r{i}"))
        return plan
    e1, e2, e3, e4 = spec.encoder_channels
    d1, d2, d3, d4 = spec.decoder_channels
    plan = []
    cin = 1
    for i, cout in enumerate((e1, e2, e3, e4), start=1):
        plan.append(("conv", f"enc{i}", cin, cout, 3, 2, 1))
        plan.append(("bn", f"ebn{i}", cout))
        plan.append(("relu", f"erl{i}"))
        cin = cout
    for i, (ct, cc) in enumerate(((d1, d2), (d3, d4)), start=1):
        plan.append(("convt", f"dct{i}", cin, ct, 4, 4))
        plan.append(("bn", f"dbnt{i}", ct))
        plan.append(("relu", f"drlt{i}"))
        plan.append(("conv", f"dcc{i}", ct, cc, 3, 1, 1))
        plan.append(("bn", f"dbnc{i}", cc))
        plan.append(("relu", f"drlc{i}"))
        cin = cc
    plan.append(("conv", "head", cin, spec.n_basis, 3, 1, 1))
    plan.append(("bn", "hbn", spec.n_basis))
    plan.append(("tanh", "htanh"))
    return plan


# ---------------------------------------------------------------------------
# state


@dataclass
class NetworkState:
    spec: object
    params: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict)
    stamp: int = 0
    training: bool = True

    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        return self

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())


def init_network(spec, rng: np.random.Generator) -> NetworkState:
    """Symmetric uniform initialization scaled by fan-in."""
    params, buffers = {}, {}
    for op in _layers(spec):
        kind, name = op[0], op[1]
        if kind == "linear":
            _, _, nin, nout = op
            bound = 1.0 / np.sqrt(nin)
            params[f"{name}.w"] = rng.uniform(-bound, bound, size=(nin, nout))
            params[f"{name}.b"] = rng.uniform(-bound, bound, size=(nout,))
        elif kind == "conv":
            _, _, cin, cout, k, _, _ = op
            bound = 1.0 / np.sqrt(cin * k * k)
            params[f"{name}.w"] = rng.uniform(-bound, bound, size=(cout, cin, k, k))
        elif kind == "convt":
            _, _, cin, cout, k, _ = op
            # non-overlapping taps: each output pixel sees cin inputs
            bound = 1.0 / np.sqrt(cin)
            params[f"{name}.w"] = rng.uniform(-bound, bound, size=(cin, cout, k, k))
        elif kind == "bn":
            _, _, c = op
            params[f"{name}.g"] = np.ones(c)
            params[f"{name}.b"] = np.zeros(c)
            buffers[f"{name}.mean"] = np.zeros(c)
            buffers[f"{name}.var"] = np.ones(c)
    return NetworkState(spec=spec, params=params, buffers=buffers)


# ---------------------------------------------------------------------------
# conv primitives (stride-2 3x3 with padding 1; non-overlapping transposed)


def _conv_fwd(x, w, stride, pad):
    B, C, H, W = x.shape
    OC, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    OH = (H + 2 * pad - k) // stride + 1
    OW = (W + 2 * pad - k) // stride + 1
    acc = np.zeros((B * OH * OW, OC))
    for di in range(k):
        for dj in range(k):
            xs = xp[:, :, di : di + stride * OH : stride, dj : dj + stride * OW : stride]
            flat = xs.transpose(0, 2, 3, 1).reshape(-1, C)
            acc += flat @ w[:, :, di, dj].T
    return acc.reshape(B, OH, OW, OC).transpose(0, 3, 1, 2), (x.shape, xp)


def _conv_bwd(gout, w, stride, pad, saved):
    x_shape, xp = saved
    B, C, H, W = x_shape
    OC, _, k, _ = w.shape
    _, _, OH, OW = gout.shape
    gflat = gout.transpose(0, 2, 3, 1).reshape(-1, OC)
    gw = np.zeros_like(w)
    gxp = np.zeros_like(xp)
    for di in range(k):
        for dj in range(k):
            xs = xp[:, :, di : di + stride * OH : stride, dj : dj + stride * OW : stride]
            flat = xs.transpose(0, 2, 3, 1).reshape(-1, C)
            gw[:, :, di, dj] = gflat.T @ flat
            gview = (gflat @ w[:, :, di, dj]).reshape(B, OH, OW, C).transpose(0, 3, 1, 2)
            gxp[
                :, :, di : di + stride * OH : stride, dj : dj + stride * OW : stride
            ] += gview
    gx = gxp[:, :, pad : pad + H, pad : pad + W]
    return gx, gw


def _convt_fwd(x, w, stride):
    B, C, H, W = x.shape
    _, OC, k, _ = w.shape
    if k != stride:
        raise ShapeMismatch("transposed convolutions here use kernel == stride")
    flat = x.transpose(0, 2, 3, 1).reshape(-1, C)
    out = flat @ w.reshape(C, OC * k * k)
    out = out.reshape(B, H, W, OC, k, k).transpose(0, 3, 1, 4, 2, 5)
    return out.reshape(B, OC, H * k, W * k), x.shape


def _convt_bwd(gout, w, stride, x_shape, x):
    B, C, H, W = x_shape
    _, OC, k, _ = w.shape
    g6 = gout.reshape(B, OC, H, k, W, k).transpose(0, 2, 4, 1, 3, 5)
    gflat = g6.reshape(-1, OC * k * k)
    xflat = x.transpose(0, 2, 3, 1).reshape(-1, C)
    gw = (xflat.T @ gflat).reshape(C, OC, k, k)
    gx = (gflat @ w.reshape(C, OC * k * k).T).reshape(B, H, W, C).transpose(0, 3, 1, 2)
    return gx, gw


def _bn_stats(x):
    axes = (0,) if x.ndim == 2 else (0, 2, 3)
    mean = x.mean(axis=axes)
    var = x.var(axis=axes)
    count = x.size // x.shape[1]
    return mean, var, count, axes


def _bn_reshape(v, ndim):
    return v[None, :] if ndim == 2 else v[None, :, None, None]


# ---------------------------------------------------------------------------
# forward / backward


@dataclass
class ForwardCache:
    stamp: int
    training: bool
    records: list


def _as_batch(spec, f_samples) -> np.ndarray:
    x = np.asarray(f_samples, dtype=float)
    if isinstance(spec, MlpSpec):
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != spec.n_in:
            raise ShapeMismatch(
                f"expected (batch, {spec.n_in}) inputs, got {x.shape}"
            )
        return x
    s = spec.image_size
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim == 2:
        if x.shape[1] != s * s:
            raise ShapeMismatch(f"expected {s * s} pixels per sample, got {x.shape}")
        x = x.reshape(-1, 1, s, s)
    elif x.ndim == 3:
        x = x[:, None, :, :]
    if x.shape[1:] != (1, s, s):
        raise ShapeMismatch(f"expected (batch, 1, {s}, {s}) images, got {x.shape}")
    return x


def forward(state: NetworkState, f_samples):
    """Network output (batch, n_out) plus the cache for backward."""
    spec = state.spec
    x = _as_batch(spec, f_samples)
    records = []
    for op in _layers(spec):
        kind, name = op[0], op[1]
        if kind == "linear":
            w, b = state.params[f"{name}.w"], state.params[f"{name}.b"]
            records.append((op, x))
            x = x @ w + b
        elif kind == "relu":
            records.append((op, x))
            x = np.maximum(x, 0.0)
        elif kind == "tanh":
            x = np.tanh(x)
            records.append((op, x))
        elif kind == "conv":
            _, _, _, _, k, stride, pad = op
            w = state.params[f"{name}.w"]
            x, saved = _conv_fwd(x, w, stride, pad)
            records.append((op, saved))
        elif kind == "convt":
            _, _, _, _, k, stride = op
            w = state.params[f"{name}.w"]
            xin = x
            x, x_shape = _convt_fwd(x, w, stride)
            records.append((op, (x_shape, xin)))
        elif kind == "bn":
            g = state.params[f"{name}.g"]
            b = state.params[f"{name}.b"]
            if state.training:
                mean, var, count, axes = _bn_stats(x)
                if count > 1:
                    unbiased = var * count / (count - 1)
                else:
                    unbiased = var
                state.buffers[f"{name}.mean"] = (
                    _BN_RETAIN * state.buffers[f"{name}.mean"]
                    + (1 - _BN_RETAIN) * mean
                )
                state.buffers[f"{name}.var"] = (
                    _BN_RETAIN * state.buffers[f"{name}.var"]
                    + (1 - _BN_RETAIN) * unbiased
                )
            else:
                mean = state.buffers[f"{name}.mean"]
                var = state.buffers[f"{name}.var"]
            inv = 1.0 / np.sqrt(var + _BN_EPS)
            xhat = (x - _bn_reshape(mean, x.ndim)) * _bn_reshape(inv, x.ndim)
            records.append((op, (xhat, inv)))
            x = _bn_reshape(g, x.ndim) * xhat + _bn_reshape(b, x.ndim)
    out = x
    if not isinstance(spec, MlpSpec):
        out = out.transpose(0, 2, 3, 1).reshape(out.shape[0], -1)
    return out, ForwardCache(stamp=state.stamp, training=state.training, records=records)


def backward(state: NetworkState, cache: ForwardCache, grad_out):
    """Parameter gradients from reverse accumulation.

    ``grad_out`` has the shape of the forward output.  The cache must
    come from a forward pass against the current parameters.
    """
    if cache.stamp != state.stamp:
        raise StaleCache("forward cache predates a parameter update")
    spec = state.spec
    g = np.asarray(grad_out, dtype=float)
    if isinstance(spec, MlpSpec):
        if g.ndim == 1:
            g = g[None, :]
    else:
        s = spec.image_size
        g = g.reshape(-1, s, s, spec.n_basis).transpose(0, 3, 1, 2)
    grads = {}
    for op, saved in reversed(cache.records):
        kind, name = op[0], op[1]
        if kind == "linear":
            xin = saved
            w = state.params[f"{name}.w"]
            grads[f"{name}.w"] = xin.T @ g
            grads[f"{name}.b"] = g.sum(axis=0)
            g = g @ w.T
        elif kind == "relu":
            g = g * (saved > 0)
        elif kind == "tanh":
            g = g * (1.0 - saved**2)
        elif kind == "conv":
            _, _, _, _, k, stride, pad = op
            w = state.params[f"{name}.w"]
            g, gw = _conv_bwd(g, w, stride, pad, saved)
            grads[f"{name}.w"] = gw
        elif kind == "convt":
            _, _, _, _, k, stride = op
            w = state.params[f"{name}.w"]
            x_shape, xin = saved
            g, gw = _convt_bwd(g, w, stride, x_shape, xin)
            grads[f"{name}.w"] = gw
        elif kind == "bn":
            xhat, inv = saved
            gamma = state.params[f"{name}.g"]
            axes = (0,) if g.ndim == 2 else (0, 2, 3)
            count = g.size // g.shape[1]
            grads[f"{name}.g"] = np.sum(g * xhat, axis=axes)
            grads[f"{name}.b"] = np.sum(g, axis=axes)
            if cache.training:
                gh = g * _bn_reshape(gamma, g.ndim)
                sum_gh = np.sum(gh, axis=axes)
                sum_gh_x = np.sum(gh * xhat, axis=axes)
                g = (
                    _bn_reshape(inv, g.ndim)
                    * (
                        gh
                        - _bn_reshape(sum_gh / count, g.ndim)
                        - xhat * _bn_reshape(sum_gh_x / count, g.ndim)
                    )
                )
            else:
                g = g * _bn_reshape(gamma * inv, g.ndim)
    return grads


# ---------------------------------------------------------------------------
# output rescaling


@dataclass(frozen=True)
class OutputRescaling:
    """Affine map from raw network outputs to coefficients."""

    shift: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        if np.shape(self.shift) != np.shape(self.scale):
            raise ShapeMismatch("shift and scale must share a shape")
        if np.any(np.asarray(self.scale) <= 0):
            raise ValueError("rescaling scale must be positive")

    def apply(self, z: np.ndarray) -> np.ndarray:
        return self.shift + self.scale * z

    def chain_gradient(self, grad_coeffs: np.ndarray) -> np.ndarray:
        return self.scale * grad_coeffs

    def header_dict(self) -> dict:
        return {"shift": self.shift.tolist(), "scale": self.scale.tolist()}


def identity_rescaling(n_out: int) -> OutputRescaling:
    return OutputRescaling(shift=np.zeros(n_out), scale=np.ones(n_out))


def fit_rescaling(oracle_coeffs: np.ndarray, tanh_head: bool) -> OutputRescaling:
    """Shift by the mean and scale by the standard deviation of oracle
    coefficients; a tanh head gets four standard deviations of headroom."""
    c = np.asarray(oracle_coeffs, dtype=float)
    if c.ndim != 2:
        raise ShapeMismatch("oracle coefficient table must be (samples, n_out)")
    shift = c.mean(axis=0)
    sd = c.std(axis=0)
    floor = max(1e-12, 1e-6 * float(sd.max(initial=0.0)))
    scale = np.maximum(sd * (4.0 if tanh_head else 1.0), floor)
    return OutputRescaling(shift=shift, scale=scale)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamW:
    """Decoupled weight decay Adam with per-step exponential lr decay."""

    lr0: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-4
    decay: float = 0.9995
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @property
    def lr(self) -> float:
        """Learning rate the next step will use."""
        return self.lr0 * self.decay**self.t

    def step(self, state: NetworkState, grads: dict) -> None:
        lr = self.lr
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for name in sorted(state.params):
            p = state.params[name]
            g = grads.get(name)
            if g is None:
                raise ShapeMismatch(f"missing gradient for parameter {name!r}")
            if g.shape != p.shape:
                raise ShapeMismatch(
                    f"gradient shape {g.shape} does not match {name!r} {p.shape}"
                )
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p)
            v = self.v.get(name)
            if v is None:
                v = self.v[name] = np.zeros_like(p)
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            p -= lr * (update + self.weight_decay * p)
        state.stamp += 1

    def header_dict(self) -> dict:
        return {
            "lr0": self.lr0,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "weight_decay": self.weight_decay,
            "decay": self.decay,
            "eps": self.eps,
            "t": self.t,
        }


def adamw_step(opt: AdamW, state: NetworkState, grads: dict) -> None:
    opt.step(state, grads)


# ---------------------------------------------------------------------------
# checkpoints


def checkpoint_arrays(state: NetworkState, opt: AdamW) -> list:
    arrays = []
    for name in sorted(state.params):
        arrays.append((f"param.{name}", state.params[name]))
    for name in sorted(state.buffers):
        arrays.append((f"buffer.{name}", state.buffers[name]))
    for name in sorted(opt.m):
        arrays.append((f"adam_m.{name}", opt.m[name]))
    for name in sorted(opt.v):
        arrays.append((f"adam_v.{name}", opt.v[name]))
    return arrays


def save_checkpoint(path, state: NetworkState, opt: AdamW,
                    rescaling: OutputRescaling, rng: np.random.Generator,
                    extra: dict | None = None) -> None:
    from .dataset import write_blocks

    header = {
        "kind": "checkpoint",
        "network": state.spec.header_dict(),
        "optimizer": opt.header_dict(),
        "rescaling": rescaling.header_dict(),
        "rng_state": encode_rng(rng),
        "stamp": state.stamp,
    }
    if extra:
        header["extra"] = extra
    write_blocks(path, header, checkpoint_arrays(state, opt))


def load_checkpoint(path):
    """Returns (state, optimizer, rescaling, rng, header)."""
    from .dataset import read_blocks

    header, arrays = read_blocks(path)
    if header.get("kind") != "checkpoint":
        raise ShapeMismatch(f"{path} is not a checkpoint file")
    spec = spec_from_dict(header["network"])
    state = NetworkState(spec=spec, stamp=int(header["stamp"]))
    oh = header["optimizer"]
    opt = AdamW(
        lr0=oh["lr0"], beta1=oh["beta1"], beta2=oh["beta2"],
        weight_decay=oh["weight_decay"], decay=oh["decay"], eps=oh["eps"],
        t=int(oh["t"]),
    )
    for name, arr in arrays.items():
        group, _, key = name.partition(".")
        if group == "param":
            state.params[key] = arr
        elif group == "buffer":
            state.buffers[key] = arr
        elif group == "adam_m":
            opt.m[key] = arr
        elif group == "adam_v":
            opt.v[key] = arr
    rs = header["rescaling"]
    rescaling = OutputRescaling(
        shift=np.asarray(rs["shift"], dtype=float),
        scale=np.asarray(rs["scale"], dtype=float),
    )
    rng = decode_rng(header["rng_state"])
    return state, opt, rescaling, rng, header


def encode_rng(rng: np.random.Generator) -> dict:
    st = rng.bit_generator.state
    return {
        "bit_generator": st["bit_generator"],
        "state": str(st["state"]["state"]),
        "inc": str(st["state"]["inc"]),
        "has_uint32": int(st["has_uint32"]),
        "uinteger": int(st["uinteger"]),
    }


def decode_rng(d: dict) -> np.random.Generator:
    if d["bit_generator"] != "PCG64":
        raise ShapeMismatch(f"unsupported generator {d['bit_generator']!r}")
    rng = np.random.default_rng(0)
    rng.bit_generator.state = {
        "bit_generator": "PCG64",
        "state": {"state": int(d["state"]), "inc": int(d["inc"])},
        "has_uint32": int(d["has_uint32"]),
        "uinteger": int(d["uinteger"]),
    }
    return rng
