"""Small neural-network kernel on top of torch.

torch supplies tensors and reverse-mode autodiff. The pieces whose exact
behaviour matters for reproducibility live here: initialisation, the LSTM
cell equations, Adam, temperature sampling, finite-difference gradient
checks and the binary parameter container.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import DimensionError, FormatError, ModeError, NumericError

DISTRIBUTION = "distribution"
REGRESSION = "regression"


def set_determinism(seed, threads=1):
    """Seed torch and pin it to deterministic single-threaded kernels.

    Denormal flushing is on: late in training, gradients drift into the
    subnormal range, where CPU matrix kernels run an order of magnitude slower.
    """
    torch.manual_seed(seed)
    torch.set_flush_denormal(True)
    torch.set_num_threads(threads)
    torch.use_deterministic_algorithms(True)


def check_finite(t, name):
    values = t.detach() if isinstance(t, torch.Tensor) else torch.as_tensor(t)
    if not torch.isfinite(values).all():
        raise NumericError(f"non-finite values in {name}")
    return t


# ---------------------------------------------------------------------------
# initialisation
# ---------------------------------------------------------------------------


def glorot_bound(fan_in, fan_out):
    return math.sqrt(6.0 / (fan_in + fan_out))


@torch.no_grad()
def init_module_(module):
    """Glorot-uniform weights, zero biases, LSTM forget-gate bias 1."""
    for m in module.modules():
        if isinstance(m, nn.Linear):
            a = glorot_bound(m.in_features, m.out_features)
            m.weight.uniform_(-a, a)
            if m.bias is not None:
                m.bias.zero_()
        elif isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            k = m.kernel_size[0] * m.kernel_size[1]
            a = glorot_bound(m.in_channels * k, m.out_channels * k)
            m.weight.uniform_(-a, a)
            if m.bias is not None:
                m.bias.zero_()
        elif isinstance(m, nn.LSTM):
            h = m.hidden_size
            for name, p in m.named_parameters():
                if name.startswith("weight"):
                    # per-gate block: fan_in = columns, fan_out = hidden
                    a = glorot_bound(p.shape[1], h)
                    p.uniform_(-a, a)
                else:
                    p.zero_()
                    if name.startswith("bias_ih"):
                        p[h : 2 * h] = 1.0


# ---------------------------------------------------------------------------
# LSTM cell
# ---------------------------------------------------------------------------


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_step(x, state, params):
    """One LSTM step in numpy.

    ``params`` holds ``weight_ih (4H, I)``, ``weight_hh (4H, H)``, ``bias_ih``
    and ``bias_hh`` (``4H``) with gates stacked as input, forget, candidate,
    output -- the layout used by ``torch.nn.LSTM``. Returns ``(h', (h', c'))``.
    """
    h, c = state
    x, h, c = (np.asarray(v, dtype=np.float64) for v in (x, h, c))
    w_ih, w_hh = np.asarray(params["weight_ih"]), np.asarray(params["weight_hh"])
    b = np.asarray(params["bias_ih"]) + np.asarray(params["bias_hh"])
    H = w_hh.shape[1]
    if w_ih.shape != (4 * H, x.shape[-1]) or w_hh.shape != (4 * H, H) or h.shape[-1] != H or c.shape[-1] != H or b.shape != (4 * H,):
        raise DimensionError(
            f"lstm_step shapes: x {x.shape}, h {h.shape}, c {c.shape}, weight_ih {w_ih.shape}, weight_hh {w_hh.shape}"
        )
    z = x @ w_ih.T + h @ w_hh.T + b
    i = _sigmoid(z[..., :H])
    f = _sigmoid(z[..., H : 2 * H])
    g = np.tanh(z[..., 2 * H : 3 * H])
    o = _sigmoid(z[..., 3 * H :])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, (h_new, c_new)


def lstm_layer_params(lstm, layer=0):
    return {
        k: getattr(lstm, f"{k}_l{layer}").detach().cpu().numpy().astype(np.float64)
        for k in ("weight_ih", "weight_hh", "bias_ih", "bias_hh")
    }


@dataclass(frozen=True)
class SequenceModelConfig:
    layers: int = 3
    hidden_units: int = 512
    history_length: int = 200
    output_mode: str = DISTRIBUTION

    def __post_init__(self):
        if min(self.layers, self.hidden_units, self.history_length) < 1:
            raise ValueError("sequence model sizes must be positive")
        if self.output_mode not in (DISTRIBUTION, REGRESSION):
            raise ModeError(f"unknown output mode {self.output_mode!r}")


class SequenceNet(nn.Module):
    """Stacked LSTM with either a softmax head or a linear regression head."""

    def __init__(self, input_dim, output_dim, config):
        super().__init__()
        self.config = config
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.lstm = nn.LSTM(input_dim, config.hidden_units, num_layers=config.layers, batch_first=True)
        self.head = nn.Linear(config.hidden_units, output_dim)
        init_module_(self)

    def forward(self, x, state=None):
        out, state = self.lstm(x, state)
        return self.head(out), state

    def step(self, x, state=None):
        """Single time step for ``x`` of shape ``(batch, input_dim)``."""
        y, state = self.forward(x[:, None, :], state)
        return y[:, 0], state


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


def grad_check(loss_fn, params, epsilon=1e-6, n_components=200, seed=0, floor=1e-6):
    """Max componentwise relative error between autograd and central differences.

    ``params`` is a list of float64 tensors; ``loss_fn(params)`` returns a
    scalar tensor. Up to ``n_components`` coordinates are sampled (all of them
    when there are fewer). Relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    if not 1e-7 <= epsilon <= 1e-4:
        raise ValueError("epsilon must lie in [1e-7, 1e-4]")
    params = [p.detach().clone().to(torch.float64).requires_grad_(True) for p in params]
    loss = loss_fn(params)
    if not torch.isfinite(loss):
        raise NumericError("loss is not finite at the check point")
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    grads = [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]

    sizes = [p.numel() for p in params]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    picks = np.arange(total) if total <= n_components else np.sort(rng.choice(total, n_components, replace=False))
    offsets = np.cumsum([0] + sizes)
    worst = 0.0
    with torch.no_grad():
        for flat in picks:
            k = int(np.searchsorted(offsets, flat, side="right") - 1)
            j = int(flat - offsets[k])
            view = params[k].view(-1)
            orig = view[j].item()
            view[j] = orig + epsilon
            up = loss_fn(params).item()
            view[j] = orig - epsilon
            down = loss_fn(params).item()
            view[j] = orig
            if not (math.isfinite(up) and math.isfinite(down)):
                raise NumericError("non-finite loss during finite differences")
            num = (up - down) / (2.0 * epsilon)
            ana = grads[k].view(-1)[j].item()
            err = abs(ana - num) / max(abs(ana), abs(num), floor)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def _adam_inplace(p, g, m, v, t, hyper):
    m *= hyper.beta1
    m += (1.0 - hyper.beta1) * g
    v *= hyper.beta2
    v += (1.0 - hyper.beta2) * g * g
    m_hat = m / (1.0 - hyper.beta1**t)
    v_hat = v / (1.0 - hyper.beta2**t)
    p -= hyper.lr * m_hat / (v_hat**0.5 + hyper.eps)


def optimizer_step(params, grads, state, hyper=AdamHyper()):
    """Functional Adam update; returns ``(new_params, new_state)``."""
    if len(params) != len(grads):
        raise DimensionError("params and grads differ in length")
    for p, g in zip(params, grads):
        if tuple(p.shape) != tuple(g.shape):
            raise DimensionError(f"parameter shape {tuple(p.shape)} != gradient shape {tuple(g.shape)}")
    copy = (lambda a: a.clone()) if params and isinstance(params[0], torch.Tensor) else (lambda a: np.array(a, dtype=np.float64))
    new_params = [copy(p) for p in params]
    m = [copy(a) for a in state.m] if state.m else [p * 0 for p in new_params]
    v = [copy(a) for a in state.v] if state.v else [p * 0 for p in new_params]
    t = state.step + 1
    for p, g, mi, vi in zip(new_params, grads, m, v):
        _adam_inplace(p, g, mi, vi, t, hyper)
    return new_params, AdamState(step=t, m=m, v=v)


class Adam:
    """In-place Adam over a module's parameters, same arithmetic as ``optimizer_step``."""

    def __init__(self, params, hyper=AdamHyper()):
        self.params = [p for p in params if p.requires_grad]
        self.hyper = hyper
        self.state = AdamState(
            m=[torch.zeros_like(p) for p in self.params],
            v=[torch.zeros_like(p) for p in self.params],
        )

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    @torch.no_grad()
    def step(self):
        self.state.step += 1
        t = self.state.step
        for p, m, v in zip(self.params, self.state.m, self.state.v):
            if p.grad is None:
                continue
            _adam_inplace(p.data, p.grad, m, v, t, self.hyper)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def softmax(z, axis=-1):
    z = np.asarray(z, dtype=np.float64)
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def categorical_sample(probs, temperature, rng):
    """Draw an index from ``softmax(log(probs) / temperature)``."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or (p < 0).any() or abs(p.sum() - 1.0) > 1e-6:
        raise NumericError(f"probabilities must form a simplex (sum={p.sum():.8f})")
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    if temperature != 1.0:
        with np.errstate(divide="ignore"):
            p = softmax(np.log(p) / temperature)
    cdf = np.cumsum(p)
    u = rng.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, u, side="right"), len(p) - 1))


# ---------------------------------------------------------------------------
# binary container
# ---------------------------------------------------------------------------

MAGIC = b"CTEBIN\r\n"
FORMAT_VERSION = 1
_DTYPES = {"f4": np.dtype("<f4"), "i4": np.dtype("<i4")}


def save_container(path, arrays, meta=None):
    """Write named arrays as little-endian 32-bit payloads behind a JSON header.

    Layout: 8-byte magic, uint32 format version, uint32 header length, UTF-8
    JSON header, then the payloads back to back in header order.
    """
    entries, blobs, offset = [], [], 0
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        code = "i4" if np.issubdtype(arr.dtype, np.integer) or arr.dtype == bool else "f4"
        data = np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
        entries.append({"name": name, "dtype": code, "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)
    header = json.dumps({"version": FORMAT_VERSION, "meta": meta or {}, "tensors": entries}, sort_keys=True).encode()
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)
    tmp.replace(path)


def load_container(path):
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise FormatError(f"{path}: not a container file")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported container version {version}")
    header = json.loads(raw[16 : 16 + hlen])
    base = 16 + hlen
    arrays = {}
    for e in header["tensors"]:
        start = base + e["offset"]
        arr = np.frombuffer(raw[start : start + e["nbytes"]], dtype=_DTYPES[e["dtype"]])
        arrays[e["name"]] = arr.reshape(e["shape"]).copy()
    return arrays, header["meta"]


def save_module(path, module, meta=None):
    save_container(path, {k: v.detach().cpu().numpy() for k, v in module.state_dict().items()}, meta)


def load_module_state(module, arrays):
    state = module.state_dict()
    for k in state:
        if k not in arrays:
            raise FormatError(f"missing tensor {k!r} in checkpoint")
        state[k] = torch.as_tensor(arrays[k], dtype=state[k].dtype).reshape(state[k].shape)
    module.load_state_dict(state)
    return module


def config_dict(cfg):
    return asdict(cfg)
