"""Residual MLP velocity network with hand-written reverse-mode gradients.

The network maps a batch of states x and per-row times t to velocities of
the same shape as x.  Architecture: the sinusoidal time embedding is
concatenated to x, projected to the hidden width, passed through
``n_blocks`` residual blocks of the form

    h <- h + W2 @ silu(layernorm(W1 @ h + b1)) + b2

and projected back to the data dimension.  The output projection is
zero-initialized so an untrained network is the zero field.  Everything is
float64; gradients are accumulated by explicit backward passes through
each primitive (linear, LayerNorm including its mean/variance paths, SiLU,
residual adds), which keeps the whole training loop free of autodiff
frameworks and bit-reproducible.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MlpConfig",
    "BlockParams",
    "MlpParams",
    "AdamState",
    "time_embed",
    "forward",
    "loss_and_grad",
    "adam_update",
    "init_params",
    "parameter_count",
    "params_to_arrays",
    "params_from_arrays",
]

# LayerNorm variance guard.  Small enough that rows with O(1) spread are
# normalized to unit variance well below the 1e-10 test tolerance.
LAYERNORM_EPS = 1e-12

TIME_FREQ_MIN = 1.0
TIME_FREQ_MAX = 1000.0


@dataclass(frozen=True)
class MlpConfig:
    data_dim: int = 2
    hidden: int = 256
    n_blocks: int = 4
    time_embed_dim: int = 64

    def __post_init__(self):
        if self.data_dim < 1:
            raise ValueError("data_dim must be >= 1")
        if self.hidden < 1 or self.n_blocks < 1:
            raise ValueError("hidden and n_blocks must be >= 1")
        if self.time_embed_dim < 2 or self.time_embed_dim % 2 != 0:
            raise ValueError("time_embed_dim must be an even count >= 2")

    def to_dict(self):
        return {
            "data_dim": self.data_dim,
            "hidden": self.hidden,
            "n_blocks": self.n_blocks,
            "time_embed_dim": self.time_embed_dim,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class BlockParams:
    w1: np.ndarray
    b1: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class MlpParams:
    """All learnable tensors.  Weight matrices are (fan_in, fan_out)."""

    config: MlpConfig
    w_in: np.ndarray
    b_in: np.ndarray
    blocks: list[BlockParams]
    w_out: np.ndarray
    b_out: np.ndarray

    def named(self):
        """(name, array) pairs in a fixed canonical order."""
        yield "in.w", self.w_in
        yield "in.b", self.b_in
        for i, blk in enumerate(self.blocks):
            yield f"block{i}.w1", blk.w1
            yield f"block{i}.b1", blk.b1
            yield f"block{i}.gamma", blk.gamma
            yield f"block{i}.beta", blk.beta
            yield f"block{i}.w2", blk.w2
            yield f"block{i}.b2", blk.b2
        yield "out.w", self.w_out
        yield "out.b", self.b_out

    def zeros_like(self):
        return MlpParams(
            config=self.config,
            w_in=np.zeros_like(self.w_in),
            b_in=np.zeros_like(self.b_in),
            blocks=[
                BlockParams(*(np.zeros_like(a) for a in (b.w1, b.b1, b.gamma, b.beta, b.w2, b.b2)))
                for b in self.blocks
            ],
            w_out=np.zeros_like(self.w_out),
            b_out=np.zeros_like(self.b_out),
        )

    def copy(self):
        out = self.zeros_like()
        for (_, dst), (_, src) in zip(out.named(), self.named()):
            dst[...] = src
        return out

    def check_finite(self):
        for name, arr in self.named():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in parameter tensor {name!r}")


def parameter_count(params_or_config):
    """Total number of scalar parameters."""
    if isinstance(params_or_config, MlpConfig):
        c = params_or_config
        d, h, e = c.data_dim, c.hidden, c.time_embed_dim
        per_block = 2 * h * h + 4 * h
        return (d + e) * h + h + c.n_blocks * per_block + h * d + d
    return sum(arr.size for _, arr in params_or_config.named())


# ---------------------------------------------------------------------------
# primitives

def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _time_frequencies(dim):
    n_freq = dim // 2
    if n_freq == 1:
        return np.array([TIME_FREQ_MIN])
    return TIME_FREQ_MIN * (TIME_FREQ_MAX / TIME_FREQ_MIN) ** (
        np.arange(n_freq) / (n_freq - 1)
    )


def time_embed(t, dim):
    """Sinusoidal features of a scalar time: pairs [sin(w_j t), cos(w_j t)].

    Frequencies w_j are geometrically spaced from 1 to 1000 over the dim/2
    pairs, covering the unit time interval at multiple scales.
    """
    if dim < 2 or dim % 2 != 0:
        raise ValueError("dim must be an even count >= 2")
    w = _time_frequencies(dim)
    phase = w * float(t)
    out = np.empty(dim)
    out[0::2] = np.sin(phase)
    out[1::2] = np.cos(phase)
    return out


def _time_embed_batch(t, n, dim):
    phase = np.broadcast_to(np.asarray(t, dtype=float), (n,))[:, None] * _time_frequencies(dim)[None, :]
    out = np.empty((n, dim))
    out[:, 0::2] = np.sin(phase)
    out[:, 1::2] = np.cos(phase)
    return out


def _layernorm_forward(a, gamma, beta):
    mu = a.mean(axis=1, keepdims=True)
    var = ((a - mu) ** 2).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LAYERNORM_EPS)
    xhat = (a - mu) * inv_std
    return gamma * xhat + beta, xhat, inv_std


def _layernorm_backward(dout, xhat, inv_std, gamma):
    # Exact row-wise Jacobian: the mean and variance paths contribute the
    # two subtracted means.
    dxhat = dout * gamma
    dgamma = (dout * xhat).sum(axis=0)
    dbeta = dout.sum(axis=0)
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    da = inv_std * (dxhat - m1 - xhat * m2)
    return da, dgamma, dbeta


# ---------------------------------------------------------------------------
# forward / backward

def _forward_cached(params, x, t):
    cfg = params.config
    n = x.shape[0]
    emb = _time_embed_batch(t, n, cfg.time_embed_dim)
    z = np.concatenate([x, emb], axis=1)
    h = z @ params.w_in + params.b_in
    caches = []
    for blk in params.blocks:
        a = h @ blk.w1 + blk.b1
        g, xhat, inv_std = _layernorm_forward(a, blk.gamma, blk.beta)
        sig = _sigmoid(g)
        s = g * sig
        caches.append((h, g, xhat, inv_std, sig, s))
        h = h + s @ blk.w2 + blk.b2
    v = h @ params.w_out + params.b_out
    return v, (z, h, caches)


def forward(params, x, t):
    """Velocity batch v(x, t); same shape as x.

    ``t`` is a scalar shared by the batch or a per-row vector.  Times
    slightly outside [0, 1] are accepted (adaptive solvers probe past the
    endpoints).  Raises ValueError if any parameter tensor is non-finite.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != params.config.data_dim:
        raise ValueError(f"expected batch of shape (n, {params.config.data_dim}), got {x.shape}")
    params.check_finite()
    v, _ = _forward_cached(params, x, t)
    return v


def loss_and_grad(params, x_t, t, u_t):
    """Mean squared velocity-regression loss and its parameter gradients.

    loss = mean over rows of || v(x_t, t) - u_t ||^2.  Returns the scalar
    loss and an :class:`MlpParams`-shaped gradient structure.
    """
    x_t = np.asarray(x_t, dtype=float)
    u_t = np.asarray(u_t, dtype=float)
    if x_t.shape != u_t.shape:
        raise ValueError(f"batch shapes disagree: {x_t.shape} vs {u_t.shape}")
    params.check_finite()
    v, (z, h_last, caches) = _forward_cached(params, x_t, t)
    n = x_t.shape[0]
    r = v - u_t
    loss = float(np.sum(r * r) / n)
    grads = params.zeros_like()

    dv = (2.0 / n) * r
    grads.w_out[...] = h_last.T @ dv
    grads.b_out[...] = dv.sum(axis=0)
    dh = dv @ params.w_out.T
    for blk, gblk, cache in zip(params.blocks[::-1], grads.blocks[::-1], caches[::-1]):
        h_in, g, xhat, inv_std, sig, s = cache
        gblk.w2[...] = s.T @ dh
        gblk.b2[...] = dh.sum(axis=0)
        ds = dh @ blk.w2.T
        dg = ds * (sig * (1.0 + g * (1.0 - sig)))
        da, dgamma, dbeta = _layernorm_backward(dg, xhat, inv_std, blk.gamma)
        gblk.gamma[...] = dgamma
        gblk.beta[...] = dbeta
        gblk.w1[...] = h_in.T @ da
        gblk.b1[...] = da.sum(axis=0)
        dh = dh + da @ blk.w1.T  # residual passthrough + branch
    grads.w_in[...] = z.T @ dh
    grads.b_in[...] = dh.sum(axis=0)
    return loss, grads


# ---------------------------------------------------------------------------
# init / optimizer

def init_params(config, rng):
    """Fresh parameters: linear layers uniform in +-1/sqrt(fan_in), LayerNorm
    at identity, output projection zeroed so the initial field is zero.

    Draw order is fixed (input projection, then each block's w1, b1, w2, b2)
    so a given rng state always yields the same parameters.
    """
    d_in = config.data_dim + config.time_embed_dim
    h = config.hidden

    def linear(fan_in, fan_out):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(size=(fan_in, fan_out), low=-bound, high=bound)
        b = rng.uniform(size=fan_out, low=-bound, high=bound)
        return w, b

    w_in, b_in = linear(d_in, h)
    blocks = []
    for _ in range(config.n_blocks):
        w1, b1 = linear(h, h)
        w2, b2 = linear(h, h)
        blocks.append(
            BlockParams(w1=w1, b1=b1, gamma=np.ones(h), beta=np.zeros(h), w2=w2, b2=b2)
        )
    return MlpParams(
        config=config,
        w_in=w_in,
        b_in=b_in,
        blocks=blocks,
        w_out=np.zeros((h, config.data_dim)),
        b_out=np.zeros(config.data_dim),
    )


@dataclass
class AdamState:
    """First/second moment accumulators keyed by parameter name."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params):
        state = cls()
        for name, arr in params.named():
            state.m[name] = np.zeros_like(arr)
            state.v[name] = np.zeros_like(arr)
        return state


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def adam_update(params, grads, state, lr):
    """One bias-corrected Adam step (beta1=0.9, beta2=0.999, eps=1e-8).

    Mutates ``params`` and ``state`` in place and returns them.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t
    for (name, p), (_, g) in zip(params.named(), grads.named()):
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    return params, state


# ---------------------------------------------------------------------------
# persistence

def params_to_arrays(params):
    """Named row-major nested lists, ready for JSON."""
    return {name: arr.tolist() for name, arr in params.named()}


def params_from_arrays(config, arrays):
    """Inverse of :func:`params_to_arrays`; validates names and shapes."""
    params = init_params(config, _ZeroRng())
    seen = set()
    for name, arr in params.named():
        if name not in arrays:
            raise ValueError(f"missing parameter tensor {name!r}")
        loaded = np.asarray(arrays[name], dtype=float)
        if loaded.shape != arr.shape:
            raise ValueError(f"shape mismatch for {name!r}: {loaded.shape} != {arr.shape}")
        arr[...] = loaded
        seen.add(name)
    extra = set(arrays) - seen
    if extra:
        raise ValueError(f"unknown parameter tensors: {sorted(extra)}")
    return params


class _ZeroRng:
    """Zero-filling stand-in used to build an empty parameter skeleton."""

    def uniform(self, size=None, low=0.0, high=1.0):
        return np.zeros(size)
