"""Network layers, the four reference architectures, the in-graph scan
preprocessing layer, and an Adam optimizer.

Observation layout fed to every network: the first ``scan_stack * scan_len``
entries are raw min-pooled distances, followed by 4 scaled scalars (goal
distance, goal bearing, linear and angular velocity). The preprocessing
layer transforms only the scan block, inside the autodiff graph, so its raw
parameter trains jointly with the weights.

Architecture defaults (hidden sizes are declared package defaults, all
overridable through NetworkSpec):

    model_0   2 dense layers of 256, ReLU
    model_1   3 dense layers of 512, ReLU
    model_2   conv(32, k5, s2) + conv(32, k3, s2) over 3 stacked scans,
              then dense 256, ReLU
    model_3   4 dense layers of 256, LReLU(0.01), dropout 0.1 on the policy
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as A
from .autodiff import Tensor
from .lidar_prep import PARAMETRIC_FAMILIES, REPARAM_EPS, SOFTPLUS_SHIFT, IpFamily

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0


@dataclass(frozen=True)
class ConvBlock:
    channels: int
    kernel: int
    stride: int


@dataclass(frozen=True)
class ObsLayout:
    scan_len: int  # m, pooled beams per frame
    scan_stack: int = 1  # stacked frames (3 for the conv model)
    extra_dims: int = 4  # goal distance, goal bearing, v, omega

    @property
    def scan_block(self) -> int:
        return self.scan_len * self.scan_stack

    @property
    def total(self) -> int:
        return self.scan_block + self.extra_dims


@dataclass(frozen=True)
class NetworkSpec:
    model_id: str
    hidden: tuple[int, ...] = (256, 256)
    activation: str = "relu"  # relu | lrelu | tanh
    lrelu_slope: float = 0.01
    dropout_rate: float = 0.0
    conv_blocks: tuple[ConvBlock, ...] = ()
    scan_stack: int = 1

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.activation not in ("relu", "lrelu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @staticmethod
    def for_model(model_id: str) -> "NetworkSpec":
        table = {
            "model_0": NetworkSpec("model_0", hidden=(256, 256)),
            "model_1": NetworkSpec("model_1", hidden=(512, 512, 512)),
            "model_2": NetworkSpec(
                "model_2",
                hidden=(256,),
                conv_blocks=(ConvBlock(32, 5, 2), ConvBlock(32, 3, 2)),
                scan_stack=3,
            ),
            "model_3": NetworkSpec(
                "model_3", hidden=(256, 256, 256, 256), activation="lrelu", dropout_rate=0.1
            ),
        }
        if model_id not in table:
            raise ValueError(f"unknown model id {model_id!r}")
        return table[model_id]


def _activation(spec: NetworkSpec):
    if spec.activation == "relu":
        return A.relu
    if spec.activation == "tanh":
        return A.tanh
    slope = spec.lrelu_slope
    return lambda t: A.leaky_relu(t, slope)


class Dense:
    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator, dtype=np.float32):
        bound = 1.0 / math.sqrt(fan_in)
        self.w = Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)).astype(dtype), requires_grad=True)
        self.b = Tensor(rng.uniform(-bound, bound, fan_out).astype(dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b

    def params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}


class Conv1d:
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, rng, dtype=np.float32):
        bound = 1.0 / math.sqrt(c_in * kernel)
        self.w = Tensor(rng.uniform(-bound, bound, (c_out, c_in, kernel)).astype(dtype), requires_grad=True)
        self.b = Tensor(rng.uniform(-bound, bound, c_out).astype(dtype), requires_grad=True)
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return A.conv1d(x, self.w, self.b, stride=self.stride)

    def params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: training-mode expectation equals the input."""
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep).astype(x.dtype) / keep
    return A.mul(x, Tensor(mask))


class IpLayer:
    """Applies the configured distance mapping to the scan block of an
    observation batch; the unconstrained parameter (when the family has one)
    lives in the graph and is shared by every network holding this layer."""

    def __init__(
        self,
        family: IpFamily | str,
        y_min: np.ndarray,
        y_max: np.ndarray,
        layout: ObsLayout,
        shared: bool = True,
        trainable: bool = True,
        raw_init: float = 0.0,
        dtype=np.float32,
    ):
        self.family = IpFamily(family)
        self.layout = layout
        self.shared = shared
        m = layout.scan_len
        if y_min.shape[0] != m or y_max.shape[0] != m:
            raise ValueError("bounds length must equal scan_len")
        self.y_min_arr = np.asarray(y_min, dtype=float).copy()
        self.y_max_arr = np.asarray(y_max, dtype=float).copy()
        self._y_min = Tensor(y_min.astype(dtype))
        self._inv_y_max = Tensor((1.0 / y_max).astype(dtype))
        if self.family in PARAMETRIC_FAMILIES:
            n = 1 if shared else m
            self.zeta = Tensor(np.full(n, raw_init, dtype=dtype), requires_grad=trainable)
        else:
            self.zeta = None

    def __call__(self, obs: Tensor) -> Tensor:
        lay = self.layout
        scan = A.narrow(obs, 1, 0, lay.scan_block)
        tail = A.narrow(obs, 1, lay.scan_block, lay.extra_dims)
        if lay.scan_stack > 1:
            scan = A.reshape(scan, (-1, lay.scan_len))
        p = self._apply(scan)
        if lay.scan_stack > 1:
            p = A.reshape(p, (-1, lay.scan_block))
        return A.concat([p, tail], axis=1)

    def _apply(self, y: Tensor) -> Tensor:
        fam = self.family
        if fam is IpFamily.RAW:
            return y
        if fam is IpFamily.LNORM:
            return A.mul(y, self._inv_y_max)
        if fam is IpFamily.IPAP_EXP:
            lam = A.sigmoid(self.zeta) * (1.0 - 2.0 * REPARAM_EPS) + REPARAM_EPS
            return A.exp(A.mul(y, A.log(lam)))
        # y_min - (eta or beta): positive by construction
        gap = A.softplus(self.zeta + SOFTPLUS_SHIFT) + REPARAM_EPS
        shifted_floor = self._y_min - gap  # eta or beta
        if fam is IpFamily.IPAP_LOG:
            return A.log(y - shifted_floor)
        if fam is IpFamily.IPAP_REC:
            return (y - shifted_floor) ** -1.0
        return A.mul(gap, (y - shifted_floor) ** -1.0)

    def constrained_value(self) -> np.ndarray | None:
        """Per-beam constrained parameter (lambda, eta or beta); None when
        the family has no parameter."""
        if self.zeta is None:
            return None
        m = self.layout.scan_len
        raw = np.broadcast_to(self.zeta.data.astype(float), (m,))
        if self.family is IpFamily.IPAP_EXP:
            return REPARAM_EPS + (1.0 - 2.0 * REPARAM_EPS) * A._sigmoid_np(raw)
        return self.y_min_arr - REPARAM_EPS - np.logaddexp(0.0, raw + SOFTPLUS_SHIFT)

    def params(self, prefix: str) -> dict[str, Tensor]:
        return {} if self.zeta is None else {f"{prefix}.zeta": self.zeta}


class _Trunk:
    """Shared feature pipeline: preprocessing, optional conv over stacked
    scans, then the dense stack. Built per network; the IpLayer instance may
    be shared across networks."""

    def __init__(
        self,
        spec: NetworkSpec,
        layout: ObsLayout,
        extra_inputs: int,
        ip: IpLayer | None,
        rng: np.random.Generator,
        dtype=np.float32,
    ):
        self.spec = spec
        self.layout = layout
        self.ip = ip
        self.act = _activation(spec)
        self.convs: list[Conv1d] = []
        feat = layout.scan_block + layout.extra_dims
        if spec.conv_blocks:
            c_in, length = layout.scan_stack, layout.scan_len
            for blk in spec.conv_blocks:
                self.convs.append(Conv1d(c_in, blk.channels, blk.kernel, blk.stride, rng, dtype))
                length = (length - blk.kernel) // blk.stride + 1
                if length < 1:
                    raise ValueError("conv pipeline consumed the whole scan")
                c_in = blk.channels
            self.conv_out = c_in * length
            feat = self.conv_out + layout.extra_dims
        self.dense: list[Dense] = []
        width = feat + extra_inputs
        for hsize in spec.hidden:
            self.dense.append(Dense(width, hsize, rng, dtype))
            width = hsize
        self.out_width = width

    def __call__(
        self,
        obs: Tensor,
        extra: Tensor | None,
        train: bool,
        dropout_rng: np.random.Generator | None,
    ) -> Tensor:
        lay = self.layout
        x = self.ip(obs) if self.ip is not None else obs
        if self.convs:
            scan = A.narrow(x, 1, 0, lay.scan_block)
            tail = A.narrow(x, 1, lay.scan_block, lay.extra_dims)
            h = A.reshape(scan, (-1, lay.scan_stack, lay.scan_len))
            for conv in self.convs:
                h = self.act(conv(h))
            h = A.reshape(h, (-1, self.conv_out))
            parts = [h, tail]
        else:
            parts = [x]
        if extra is not None:
            parts.append(extra)
        h = A.concat(parts, axis=1) if len(parts) > 1 else parts[0]
        for layer in self.dense:
            h = self.act(layer(h))
            if train and self.spec.dropout_rate > 0.0:
                h = dropout(h, self.spec.dropout_rate, dropout_rng)
        return h

    def params(self, prefix: str) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, c in enumerate(self.convs):
            out.update(c.params(f"{prefix}.conv{i}"))
        for i, d in enumerate(self.dense):
            out.update(d.params(f"{prefix}.dense{i}"))
        return out


class PolicyNetwork:
    """Emits per-dimension mean and log-std of a pre-squash Gaussian."""

    def __init__(
        self,
        spec: NetworkSpec,
        layout: ObsLayout,
        action_dim: int,
        ip: IpLayer | None,
        rng: np.random.Generator,
        dropout_rng: np.random.Generator | None = None,
        dtype=np.float32,
    ):
        self.trunk = _Trunk(spec, layout, 0, ip, rng, dtype)
        self.mean_head = Dense(self.trunk.out_width, action_dim, rng, dtype)
        self.log_std_head = Dense(self.trunk.out_width, action_dim, rng, dtype)
        self.dropout_rng = dropout_rng

    def __call__(self, obs: Tensor, train: bool = False) -> tuple[Tensor, Tensor]:
        h = self.trunk(obs, None, train, self.dropout_rng)
        return self.mean_head(h), A.clip(self.log_std_head(h), LOG_STD_MIN, LOG_STD_MAX)

    def params(self, prefix: str = "policy") -> dict[str, Tensor]:
        out = self.trunk.params(prefix)
        out.update(self.mean_head.params(f"{prefix}.mean"))
        out.update(self.log_std_head.params(f"{prefix}.log_std"))
        return out


class QNetwork:
    """State-action value head; the action joins the features after the
    conv/preprocessing stage. Critics never use dropout."""

    def __init__(
        self,
        spec: NetworkSpec,
        layout: ObsLayout,
        action_dim: int,
        ip: IpLayer | None,
        rng: np.random.Generator,
        dtype=np.float32,
    ):
        spec = replace(spec, dropout_rate=0.0)
        self.trunk = _Trunk(spec, layout, action_dim, ip, rng, dtype)
        self.head = Dense(self.trunk.out_width, 1, rng, dtype)

    def __call__(self, obs: Tensor, action: Tensor, train: bool = False) -> Tensor:
        h = self.trunk(obs, action, train, None)
        return self.head(h)

    def params(self, prefix: str = "q") -> dict[str, Tensor]:
        out = self.trunk.params(prefix)
        out.update(self.head.params(f"{prefix}.head"))
        return out


class Adam:
    """Adam with bias correction. step() consumes grads but leaves them in
    place; callers zero grads between accumulation cycles."""

    def __init__(self, params: dict[str, Tensor], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self):
        self.t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            m = self.m[k]
            v = self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for k in self.params:
            out[f"{k}.m"] = self.m[k]
            out[f"{k}.v"] = self.v[k]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], t: int):
        self.t = t
        for k in self.params:
            self.m[k] = arrays[f"{k}.m"].copy()
            self.v[k] = arrays[f"{k}.v"].copy()


def zero_grads(params) -> None:
    for p in params.values() if isinstance(params, dict) else params:
        p.zero_grad()


def clip_grad_norm(params, max_norm: float) -> float:
    """Global-norm gradient clip; returns the pre-clip norm."""
    tensors = list(params.values() if isinstance(params, dict) else params)
    total = 0.0
    for p in tensors:
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = math.sqrt(total)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for p in tensors:
            if p.grad is not None:
                p.grad *= scale
    return norm
