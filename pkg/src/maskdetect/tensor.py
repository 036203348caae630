"""Dense n-dimensional tensors with reverse-mode automatic differentiation.

Every forward operation that the classifier needs is implemented here as a
function over :class:`Tensor`, recording a backward closure when any input
requires gradients.  Gradients are exact (verified against central finite
differences in the test suite).  Float32 is the default compute precision;
every op also works in float64, which the gradient checks use for tight
tolerances.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InputError, ParameterError, ShapeError, UsageError
from .rng import SplitMix64

DTYPES = {"f32": np.float32, "f64": np.float64}


def _as_dtype(dtype) -> np.dtype:
    if isinstance(dtype, str):
        if dtype not in DTYPES:
            raise ParameterError(f"unknown dtype {dtype!r}; expected 'f32' or 'f64'")
        return np.dtype(DTYPES[dtype])
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ParameterError(f"unsupported dtype {dt}; expected float32 or float64")
    return dt


class Tensor:
    """N-dimensional float array with optional gradient.

    ``data`` is a row-major numpy array (float32 by default).  When
    ``requires_grad`` is set, operations record the computation graph so
    that :meth:`backward` can accumulate ``grad`` on every reachable input.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, dtype=None, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            # arrays keep an explicit float dtype; everything else gets f32
            if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
                dtype = data.dtype
            else:
                dtype = np.float32
        arr = np.asarray(data)
        self.data = np.ascontiguousarray(arr, dtype=_as_dtype(dtype))
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn: Optional[Callable[[np.ndarray], None]] = None

    # -- introspection -------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, shape is {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    # -- autodiff core -------------------------------------------------------

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        """Reverse-mode accumulation from a scalar output.

        Populates ``grad`` on every reachable tensor that requires one.
        Raises if any reachable tensor already carries a gradient: stale
        grads must be reset first, silent accumulation across separate
        backward calls is a bug class this API rules out.
        """
        if self.data.size != 1:
            raise UsageError(f"backward() needs a scalar loss, shape is {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad:
                    stack.append((p, False))
        for node in order:
            if node is not self and node.grad is not None:
                raise UsageError(
                    "a reachable tensor already holds a gradient; "
                    "reset grads (zero_grad) before calling backward again"
                )
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    # -- small composable ops (same-shape or scalar only) ---------------------

    def __add__(self, other) -> "Tensor":
        if not isinstance(other, Tensor):
            out = _result(self.data + self.data.dtype.type(other), (self,))
            _record(out, self, lambda g: g)
            return out
        _check_same_shape("add", self, other)
        out = _result(self.data + other.data, (self, other))
        _record(out, self, lambda g: g)
        _record(out, other, lambda g: g)
        return out

    def __mul__(self, other) -> "Tensor":
        if not isinstance(other, Tensor):
            c = self.data.dtype.type(other)
            out = _result(self.data * c, (self,))
            _record(out, self, lambda g: g * c)
            return out
        _check_same_shape("mul", self, other)
        out = _result(self.data * other.data, (self, other))
        a, b = self.data, other.data
        _record(out, self, lambda g: g * b)
        _record(out, other, lambda g: g * a)
        return out

    __radd__ = __add__
    __rmul__ = __mul__

    def sum(self) -> "Tensor":
        out = _result(np.asarray(self.data.sum(), dtype=self.dtype).reshape(()), (self,))
        shape = self.shape
        _record(out, self, lambda g: np.broadcast_to(g, shape))
        return out

    def mean(self) -> "Tensor":
        n = self.data.size
        out = _result(np.asarray(self.data.sum() / n, dtype=self.dtype).reshape(()), (self,))
        shape = self.shape
        _record(out, self, lambda g: np.broadcast_to(g / n, shape).astype(self.dtype))
        return out

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        out = _result(self.data.reshape(shape), (self,))
        _record(out, self, lambda g: g.reshape(old))
        return out


class Parameter:
    """Named trainable tensor; ``trainable`` gates gradient recording."""

    __slots__ = ("name", "tensor")

    def __init__(self, name: str, tensor: Tensor, trainable: bool = True):
        self.name = name
        self.tensor = tensor
        self.tensor.requires_grad = trainable

    @property
    def trainable(self) -> bool:
        return self.tensor.requires_grad

    @trainable.setter
    def trainable(self, flag: bool) -> None:
        self.tensor.requires_grad = bool(flag)
        if not flag:
            self.tensor.grad = None

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self) -> Optional[np.ndarray]:
        return self.tensor.grad

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.tensor.shape}, trainable={self.trainable})"


# -- graph bookkeeping ---------------------------------------------------------


def _result(data: np.ndarray, inputs: Sequence[Tensor]) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(t.requires_grad for t in inputs)
    out._parents = tuple(t for t in inputs if t.requires_grad) if out.requires_grad else ()
    out._backward_fn = None
    return out


def _record(out: Tensor, inp: Tensor, fn: Callable[[np.ndarray], np.ndarray]) -> None:
    """Chain a per-input gradient function onto out's backward closure."""
    if not (out.requires_grad and inp.requires_grad):
        return
    prev = out._backward_fn

    def _bw(g: np.ndarray, _prev=prev, _inp=inp, _fn=fn) -> None:
        if _prev is not None:
            _prev(g)
        _inp._accumulate(_fn(g))

    out._backward_fn = _bw


def _check_same_shape(opname: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{opname}: shapes {a.shape} and {b.shape} differ")
    if a.dtype != b.dtype:
        raise ShapeError(f"{opname}: dtypes {a.dtype} and {b.dtype} differ")


def _pad_pair(padding) -> tuple[int, int]:
    if isinstance(padding, (tuple, list)):
        ph, pw = int(padding[0]), int(padding[1])
    else:
        ph = pw = int(padding)
    if ph < 0 or pw < 0:
        raise ParameterError(f"padding must be non-negative, got {padding}")
    return ph, pw


# -- convolution ----------------------------------------------------------------


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding=0) -> Tensor:
    """Zero-padded cross-correlation of [N,C,H,W] with [O,C,kh,kw] filters.

    ``padding`` is an int or an (ph, pw) pair; the pair form exists for the
    factorized 1x7/7x1 branches, which pad one axis only.  Output extent is
    floor((H + 2*ph - kh) / stride) + 1 per axis.
    """
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ShapeError(
            f"conv2d: input {x.shape} must be [N,C,H,W] and weight {weight.shape} [O,C,kh,kw]"
        )
    n, c, h, w = x.shape
    o, cw, kh, kw = weight.shape
    if c != cw:
        raise ShapeError(f"conv2d: input channels {x.shape} do not match weight {weight.shape}")
    if bias.shape != (o,):
        raise ShapeError(f"conv2d: bias {bias.shape} must be ({o},)")
    if stride < 1:
        raise ParameterError(f"conv2d: stride must be positive, got {stride}")
    ph, pw = _pad_pair(padding)
    if h + 2 * ph < kh or w + 2 * pw < kw:
        raise ShapeError(
            f"conv2d: padded input {(h + 2 * ph, w + 2 * pw)} smaller than kernel {(kh, kw)}"
        )

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    oh = (h + 2 * ph - kh) // stride + 1
    ow = (w + 2 * pw - kw) // stride + 1
    # im2col: (N, C, OH, OW, kh, kw) view -> (N*OH*OW, C*kh*kw) patch matrix
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    col = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * oh * ow, c * kh * kw)
    wmat = weight.data.reshape(o, c * kh * kw)
    out_data = (col @ wmat.T).reshape(n, oh, ow, o).transpose(0, 3, 1, 2) + bias.data.reshape(
        1, o, 1, 1
    )
    out = _result(np.ascontiguousarray(out_data), (x, weight, bias))

    if x.requires_grad:

        def _bw_x(g: np.ndarray) -> np.ndarray:
            gmat = g.transpose(0, 2, 3, 1).reshape(n * oh * ow, o)
            dcol = (gmat @ wmat).reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
            dxp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=x.dtype)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += dcol[
                        :, :, :, :, i, j
                    ]
            return dxp[:, :, ph : ph + h, pw : pw + w] if (ph or pw) else dxp

        _record(out, x, _bw_x)
    if weight.requires_grad:
        _record(
            out,
            weight,
            lambda g: (g.transpose(0, 2, 3, 1).reshape(n * oh * ow, o).T @ col).reshape(
                o, c, kh, kw
            ),
        )
    if bias.requires_grad:
        _record(out, bias, lambda g: g.sum(axis=(0, 2, 3)))
    return out


# -- pooling ---------------------------------------------------------------------


def pool2d(x: Tensor, kind: str, k: int, stride: int, padding: int = 0) -> Tensor:
    """Windowed max or mean over [N,C,H,W].

    Max routes gradient to the argmax cell, ties to the lowest flat index
    inside the window.  ``padding`` (an extension used by the pooled
    projection branch) pads with -inf for max and with zeros, counted in
    the mean, for avg.
    """
    if kind not in ("max", "avg"):
        raise ParameterError(f"pool2d: kind must be 'max' or 'avg', got {kind!r}")
    if x.data.ndim != 4:
        raise ShapeError(f"pool2d: input {x.shape} must be [N,C,H,W]")
    if k < 1 or stride < 1:
        raise ParameterError(f"pool2d: k and stride must be positive, got k={k} stride={stride}")
    n, c, h, w = x.shape
    ph, pw = _pad_pair(padding)
    hp, wp = h + 2 * ph, w + 2 * pw
    if k > hp or k > wp:
        raise ShapeError(f"pool2d: window {k} exceeds padded input {(hp, wp)}")
    if ph or pw:
        fill = -np.inf if kind == "max" else 0.0
        xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=fill)
    else:
        xp = x.data
    oh = (hp - k) // stride + 1
    ow = (wp - k) // stride + 1
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    flat = win.reshape(n, c, oh, ow, k * k)

    if kind == "max":
        arg = flat.argmax(axis=-1)  # first occurrence == lowest flat index
        out_data = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    else:
        out_data = flat.mean(axis=-1, dtype=x.dtype)
    out = _result(np.ascontiguousarray(out_data), (x,))

    if x.requires_grad:

        def _bw(g: np.ndarray) -> np.ndarray:
            dxp = np.zeros((n, c, hp, wp), dtype=x.dtype)
            ii, jj = np.meshgrid(np.arange(oh), np.arange(ow), indexing="ij")
            if kind == "max":
                di, dj = arg // k, arg % k
                rows = ii[None, None] * stride + di
                cols = jj[None, None] * stride + dj
                nn, cc = np.meshgrid(np.arange(n), np.arange(c), indexing="ij")
                np.add.at(dxp, (nn[..., None, None], cc[..., None, None], rows, cols), g)
            else:
                share = g / (k * k)
                for di in range(k):
                    for dj in range(k):
                        dxp[:, :, di : di + stride * oh : stride, dj : dj + stride * ow : stride] += share
            return dxp[:, :, ph : ph + h, pw : pw + w] if (ph or pw) else dxp

        _record(out, x, _bw)
    return out


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel spatial mean: [N,C,H,W] -> [N,C]."""
    if x.data.ndim != 4:
        raise ShapeError(f"global_avg_pool: input {x.shape} must be [N,C,H,W]")
    n, c, h, w = x.shape
    out = _result(x.data.mean(axis=(2, 3), dtype=x.dtype), (x,))
    _record(out, x, lambda g: np.broadcast_to((g / (h * w))[:, :, None, None], (n, c, h, w)))
    return out


# -- elementwise and shaping ------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, v); subgradient at 0 is 0."""
    mask = x.data > 0
    out = _result(np.where(mask, x.data, x.dtype.type(0)), (x,))
    _record(out, x, lambda g: g * mask)
    return out


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map [N,F] @ [F,M] + [M]."""
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise ShapeError(f"linear: input {x.shape} and weight {weight.shape} must be rank 2")
    n, f = x.shape
    fw, m = weight.shape
    if f != fw:
        raise ShapeError(f"linear: inner dims differ, input {x.shape} vs weight {weight.shape}")
    if bias.shape != (m,):
        raise ShapeError(f"linear: bias {bias.shape} must be ({m},)")
    out = _result(x.data @ weight.data + bias.data, (x, weight, bias))
    xd, wd = x.data, weight.data
    _record(out, x, lambda g: g @ wd.T)
    _record(out, weight, lambda g: xd.T @ g)
    _record(out, bias, lambda g: g.sum(axis=0))
    return out


def flatten(x: Tensor) -> Tensor:
    """Keep the leading dim, flatten the rest row-major."""
    if x.data.ndim < 2:
        raise ShapeError(f"flatten: rank must be >= 2, got shape {x.shape}")
    n = x.shape[0]
    old = x.shape
    out = _result(x.data.reshape(n, -1), (x,))
    _record(out, x, lambda g: g.reshape(old))
    return out


def concat_channels(xs: Iterable[Tensor]) -> Tensor:
    """Concatenate [N,Ci,H,W] tensors along the channel axis, in order."""
    xs = list(xs)
    if not xs:
        raise InputError("concat_channels: need at least one input")
    base = xs[0]
    for t in xs[1:]:
        if t.data.ndim != 4 or base.data.ndim != 4:
            raise ShapeError("concat_channels: inputs must be [N,C,H,W]")
        if (t.shape[0], t.shape[2], t.shape[3]) != (base.shape[0], base.shape[2], base.shape[3]):
            raise ShapeError(
                f"concat_channels: spatial/batch dims differ, {base.shape} vs {t.shape}"
            )
    out = _result(np.concatenate([t.data for t in xs], axis=1), (*xs,))
    offset = 0
    for t in xs:
        c = t.shape[1]
        _record(out, t, lambda g, s=offset, e=offset + c: g[:, s:e])
        offset += c
    return out


def dropout(x: Tensor, p: float, mode: str, rng: Optional[SplitMix64] = None) -> Tensor:
    """Inverted dropout: train mode zeroes with prob p and scales kept
    values by 1/(1-p); eval mode is the identity."""
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout: rate must be in [0, 1), got {p}")
    if mode not in ("train", "eval"):
        raise ParameterError(f"dropout: mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or p == 0.0:
        return x
    if rng is None:
        raise UsageError("dropout: train mode with p > 0 needs an explicit generator")
    keep = (rng.uniform(shape=x.shape) >= p).astype(x.dtype)
    scale = x.dtype.type(1.0 / (1.0 - p))
    out = _result(x.data * keep * scale, (x,))
    _record(out, x, lambda g: g * keep * scale)
    return out


# -- batch normalization -----------------------------------------------------------


class BatchNormState:
    """Running per-channel statistics owned by one normalization layer."""

    __slots__ = ("running_mean", "running_var")

    def __init__(self, channels: int, dtype=np.float32):
        self.running_mean = np.zeros(channels, dtype=_as_dtype(dtype))
        self.running_var = np.ones(channels, dtype=_as_dtype(dtype))

    def copy(self) -> "BatchNormState":
        out = BatchNormState(self.running_mean.shape[0], self.running_mean.dtype)
        out.running_mean[:] = self.running_mean
        out.running_var[:] = self.running_var
        return out


def batch_norm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    state: BatchNormState,
    mode: str,
    momentum: float = 0.1,
    epsilon: float = 1e-5,
) -> Tensor:
    """Per-channel normalization of [N,C,H,W] with learned scale and shift.

    Train mode normalizes by the biased batch statistics and folds them
    into ``state`` as ``(1-momentum)*running + momentum*batch``; eval mode
    normalizes by the running statistics and leaves ``state`` untouched.
    A train-mode batch with fewer than 2 values per channel has no usable
    variance and raises.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"batch_norm2d: input {x.shape} must be [N,C,H,W]")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(
            f"batch_norm2d: gamma {gamma.shape} and beta {beta.shape} must be ({c},)"
        )
    if state.running_mean.shape != (c,):
        raise ShapeError(
            f"batch_norm2d: state holds {state.running_mean.shape[0]} channels, input has {c}"
        )
    if mode not in ("train", "eval"):
        raise ParameterError(f"batch_norm2d: mode must be 'train' or 'eval', got {mode!r}")
    if not 0.0 <= momentum <= 1.0:
        raise ParameterError(f"batch_norm2d: momentum must be in [0, 1], got {momentum}")
    if epsilon <= 0.0:
        raise ParameterError(f"batch_norm2d: epsilon must be positive, got {epsilon}")

    dt = x.dtype
    if mode == "train":
        m = n * h * w
        if m < 2:
            raise UsageError(
                f"batch_norm2d: train mode needs >= 2 values per channel, batch gives {m}"
            )
        mu = x.data.mean(axis=(0, 2, 3), dtype=dt)
        var = x.data.var(axis=(0, 2, 3), dtype=dt)
        state.running_mean[:] = (1.0 - momentum) * state.running_mean + momentum * mu
        state.running_var[:] = (1.0 - momentum) * state.running_var + momentum * var
    else:
        mu = state.running_mean.astype(dt)
        var = state.running_var.astype(dt)
    inv = (1.0 / np.sqrt(var + dt.type(epsilon))).astype(dt)
    xhat = (x.data - mu[None, :, None, None]) * inv[None, :, None, None]
    out = _result(
        (gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]).astype(dt),
        (x, gamma, beta),
    )

    if x.requires_grad:
        if mode == "train":
            scale = (gamma.data * inv)[None, :, None, None]
            _record(
                out,
                x,
                lambda g: (
                    scale
                    * (
                        g
                        - g.mean(axis=(0, 2, 3), keepdims=True, dtype=dt)
                        - xhat * (g * xhat).mean(axis=(0, 2, 3), keepdims=True, dtype=dt)
                    )
                ).astype(dt),
            )
        else:
            scale = (gamma.data * inv)[None, :, None, None]
            _record(out, x, lambda g: (g * scale).astype(dt))
    _record(out, gamma, lambda g: (g * xhat).sum(axis=(0, 2, 3), dtype=dt))
    _record(out, beta, lambda g: g.sum(axis=(0, 2, 3), dtype=dt))
    return out


# -- classification head ops -------------------------------------------------------


def softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax over [N,K], max-shifted for stability."""
    if logits.data.ndim != 2 or logits.shape[1] < 1:
        raise ShapeError(f"softmax: input {logits.shape} must be [N,K] with K >= 1")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    out = _result(p.astype(logits.dtype), (logits,))
    _record(out, logits, lambda g: p * (g - (g * p).sum(axis=1, keepdims=True)))
    return out


def softmax_cross_entropy(logits: Tensor, targets: Tensor) -> Tensor:
    """Mean over the batch of -log softmax(logits)[true class].

    Fused with softmax through log-sum-exp, so the loss is finite for any
    finite logits and the gradient is (softmax - target) / N.  Targets must
    be one-hot rows and are treated as constants.
    """
    if logits.shape != targets.shape or logits.data.ndim != 2:
        raise ShapeError(
            f"softmax_cross_entropy: logits {logits.shape} and targets {targets.shape} "
            "must both be [N,K]"
        )
    t = targets.data
    if not (np.isin(t, (0.0, 1.0)).all() and (t.sum(axis=1) == 1.0).all()):
        raise InputError("softmax_cross_entropy: each target row must be one-hot")
    n = logits.shape[0]
    z = logits.data
    m = z.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=1))
    loss = (lse - (z * t).sum(axis=1)).mean(dtype=logits.dtype)
    out = _result(np.asarray(loss, dtype=logits.dtype).reshape(()), (logits,))
    if logits.requires_grad:
        p = np.exp(z - m)
        p /= p.sum(axis=1, keepdims=True)
        _record(out, logits, lambda g: (g * (p - t) / n).astype(logits.dtype))
    return out


# -- verification --------------------------------------------------------------------


def gradient_check(
    f: Callable[[Tensor], Tensor], point: Tensor, eps: Optional[float] = None
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must be deterministic and scalar-valued.  Per coordinate the
    numeric derivative is (f(x+eps) - f(x-eps)) / (2 eps) and the error is
    |analytic - numeric| / max(1, |numeric|); the max over coordinates is
    returned.
    """
    if eps is None:
        eps = 1e-2 if point.dtype == np.float32 else 1e-5

    x = Tensor(point.data.copy(), requires_grad=True)
    out = f(x)
    out.backward()
    analytic = x.grad if x.grad is not None else np.zeros_like(x.data)

    base = point.data.copy()
    flat = base.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(Tensor(base.copy())).item()
        flat[i] = orig - eps
        fm = f(Tensor(base.copy())).item()
        flat[i] = orig
        numeric = (fp - fm) / (2.0 * eps)
        err = abs(float(analytic.reshape(-1)[i]) - numeric) / max(1.0, abs(numeric))
        worst = max(worst, err)
    return worst
