"""Dense float64 tensors with taped reverse-mode differentiation.

Values are numpy arrays. While a `Tape` is active, every op appends
(output, inputs, backward-closure) to a Wengert list; `Tape.backward`
sweeps that list once in reverse, so execution order doubles as the
topological order and fan-out gradients accumulate additively. Only one
tape may be active at a time.

Elementwise ops broadcast a scalar against a tensor and nothing else.
A few internal ops (`linear`, `conv1d`, `sum_tail2`, `div_bcast`,
`const_axis_matmul`) accept a leading batch dimension because the
network paths are vectorized over windows.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DimensionError, NumericError

LOG_FLOOR = 1e-12
_NORM_FLOOR = 1e-12


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Tensor:
    """Float64 value with an optional same-shape gradient buffer."""

    __slots__ = ("data", "grad", "name")

    def __init__(self, data, name: str | None = None):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    # Arithmetic sugar; scalars may be Python floats.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


_active_tape: "Tape | None" = None


class Tape:
    """Wengert list of recorded ops for one forward pass."""

    def __init__(self):
        self._ops: list[tuple[Tensor, tuple[Tensor, ...], object]] = []

    def __enter__(self) -> "Tape":
        global _active_tape
        if _active_tape is not None:
            raise ConfigError("a gradient tape is already active; tapes do not nest")
        _active_tape = self
        return self

    def __exit__(self, *exc) -> None:
        global _active_tape
        _active_tape = None

    @property
    def num_ops(self) -> int:
        return len(self._ops)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(tensor) into .grad for every tensor on the tape."""
        if loss.size != 1:
            raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not np.isfinite(loss.data).all():
            raise NumericError("loss is not finite")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        seen: dict[int, Tensor] = {id(loss): loss}
        for out, inputs, backward_fn in reversed(self._ops):
            g = grads.get(id(out))
            if g is None:
                continue
            parts = backward_fn(g)
            for t, p in zip(inputs, parts):
                if p is None:
                    continue
                acc = grads.get(id(t))
                grads[id(t)] = p if acc is None else acc + p
                seen[id(t)] = t
        for tid, t in seen.items():
            t.grad = grads[tid]


def _record(out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> None:
    if _active_tape is not None:
        _active_tape._ops.append((out, inputs, backward_fn))


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _is_scalar(t: Tensor) -> bool:
    return t.size == 1


def _scalar_or_match(a: Tensor, b: Tensor, opname: str) -> None:
    if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
        raise DimensionError(f"{opname}: shapes {a.shape} and {b.shape} differ and neither is scalar")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    return g.sum().reshape(shape) if np.prod(shape, dtype=int) == 1 else g.reshape(shape)


# ---------------------------------------------------------------------------
# Elementwise suite
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _scalar_or_match(a, b, "add")
    out = Tensor(a.data + b.data)

    def backward(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    _record(out, (a, b), backward)
    return out


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _scalar_or_match(a, b, "sub")
    out = Tensor(a.data - b.data)

    def backward(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    _record(out, (a, b), backward)
    return out


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _scalar_or_match(a, b, "mul")
    out = Tensor(a.data * b.data)

    def backward(g):
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    _record(out, (a, b), backward)
    return out


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _scalar_or_match(a, b, "div")
    out = Tensor(a.data / b.data)

    def backward(g):
        return (
            _reduce_to(g / b.data, a.shape),
            _reduce_to(-g * a.data / (b.data * b.data), b.shape),
        )

    _record(out, (a, b), backward)
    return out


def neg(a) -> Tensor:
    a = _lift(a)
    out = Tensor(-a.data)
    _record(out, (a,), lambda g: (-g,))
    return out


def exp(a) -> Tensor:
    a = _lift(a)
    out = Tensor(np.exp(a.data))

    def backward(g):
        return (g * out.data,)

    _record(out, (a,), backward)
    return out


def log(a) -> Tensor:
    """Natural log with the argument clamped to >= LOG_FLOOR."""
    a = _lift(a)
    clamped = np.maximum(a.data, LOG_FLOOR)
    out = Tensor(np.log(clamped))

    def backward(g):
        return (g * (a.data > LOG_FLOOR) / clamped,)

    _record(out, (a,), backward)
    return out


def sqrt(a) -> Tensor:
    a = _lift(a)
    root = np.sqrt(np.maximum(a.data, 0.0))
    out = Tensor(root)

    def backward(g):
        return (g * 0.5 / np.maximum(root, _NORM_FLOOR) * (a.data > 0.0),)

    _record(out, (a,), backward)
    return out


def square(a) -> Tensor:
    a = _lift(a)
    out = Tensor(a.data * a.data)

    def backward(g):
        return (2.0 * a.data * g,)

    _record(out, (a,), backward)
    return out


def tanh(a) -> Tensor:
    a = _lift(a)
    out = Tensor(np.tanh(a.data))

    def backward(g):
        return (g * (1.0 - out.data * out.data),)

    _record(out, (a,), backward)
    return out


def elu(a, alpha: float = 1.0) -> Tensor:
    """x for x>0 else alpha*(e^x - 1); slope is continuous at 0."""
    a = _lift(a)
    pos = a.data > 0.0
    out = Tensor(np.where(pos, a.data, alpha * np.expm1(a.data)))

    def backward(g):
        return (g * np.where(pos, 1.0, out.data + alpha),)

    _record(out, (a,), backward)
    return out


def clamp(a, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient passes only strictly inside the band."""
    a = _lift(a)
    out = Tensor(np.clip(a.data, lo, hi))

    def backward(g):
        return (g * ((a.data > lo) & (a.data < hi)),)

    _record(out, (a,), backward)
    return out


def clamp_min(a, lo: float) -> Tensor:
    a = _lift(a)
    out = Tensor(np.maximum(a.data, lo))

    def backward(g):
        return (g * (a.data > lo),)

    _record(out, (a,), backward)
    return out


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------

def tsum(a) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    a = _lift(a)
    out = Tensor(a.data.sum())

    def backward(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    _record(out, (a,), backward)
    return out


def tmean(a) -> Tensor:
    a = _lift(a)
    out = Tensor(a.data.mean())
    n = a.size

    def backward(g):
        return (np.broadcast_to(g / n, a.shape).copy(),)

    _record(out, (a,), backward)
    return out


def l2norm(a) -> Tensor:
    a = _lift(a)
    n = float(np.sqrt((a.data * a.data).sum()))
    out = Tensor(n)

    def backward(g):
        return (g * a.data / max(n, _NORM_FLOOR),)

    _record(out, (a,), backward)
    return out


def sum_tail2(a) -> Tensor:
    """Sum over the last two axes, keepdims; batch axes untouched."""
    a = _lift(a)
    if a.ndim < 2:
        raise DimensionError(f"sum_tail2 needs >=2 dims, got shape {a.shape}")
    out = Tensor(a.data.sum(axis=(-2, -1), keepdims=True))

    def backward(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    _record(out, (a,), backward)
    return out


def div_bcast(a, d) -> Tensor:
    """a / d where d has a's batch shape with the last two axes collapsed to 1."""
    a, d = _lift(a), _lift(d)
    if d.shape != a.shape[:-2] + (1, 1):
        raise DimensionError(f"div_bcast: denominator shape {d.shape} vs value shape {a.shape}")
    out = Tensor(a.data / d.data)

    def backward(g):
        ga = g / d.data
        gd = -(g * a.data).sum(axis=(-2, -1), keepdims=True) / (d.data * d.data)
        return ga, gd

    _record(out, (a, d), backward)
    return out


# ---------------------------------------------------------------------------
# Structure
# ---------------------------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = _lift(a)
    out = Tensor(a.data.reshape(shape))

    def backward(g):
        return (g.reshape(a.shape),)

    _record(out, (a,), backward)
    return out


def transpose_last2(a) -> Tensor:
    a = _lift(a)
    if a.ndim < 2:
        raise DimensionError(f"transpose_last2 needs >=2 dims, got shape {a.shape}")
    out = Tensor(np.swapaxes(a.data, -1, -2).copy())

    def backward(g):
        return (np.swapaxes(g, -1, -2),)

    _record(out, (a,), backward)
    return out


def last_along_axis1(a) -> Tensor:
    """x[:, -1, ...] with gradient scattered back into that slice."""
    a = _lift(a)
    if a.ndim < 2:
        raise DimensionError(f"last_along_axis1 needs >=2 dims, got shape {a.shape}")
    out = Tensor(a.data[:, -1].copy())

    def backward(g):
        ga = np.zeros(a.shape)
        ga[:, -1] = g
        return (ga,)

    _record(out, (a,), backward)
    return out


def concat(tensors, axis: int = -1) -> Tensor:
    ts = [_lift(t) for t in tensors]
    if not ts:
        raise DimensionError("concat of an empty list")
    out = Tensor(np.concatenate([t.data for t in ts], axis=axis))
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    _record(out, tuple(ts), backward)
    return out


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    _record(out, (a, b), backward)
    return out


def linear(x, w, b) -> Tensor:
    """x @ w + b with x of shape (..., in), w (in, out), b (out,)."""
    x, w, b = _lift(x), _lift(w), _lift(b)
    if x.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
        raise DimensionError(f"linear: x {x.shape}, w {w.shape}, b {b.shape}")
    out = Tensor(x.data @ w.data + b.data)

    def backward(g):
        g2 = g.reshape(-1, w.shape[1])
        x2 = x.data.reshape(-1, w.shape[0])
        return g @ w.data.T, x2.T @ g2, g2.sum(axis=0)

    _record(out, (x, w, b), backward)
    return out


def const_axis_matmul(x, m: np.ndarray, axis: int) -> Tensor:
    """Contract a constant matrix m (k, j) against x along `axis` (-1 or -2).

    The matrix is a fixed coefficient bank (wavelet/DFT), so no gradient is
    produced for it.
    """
    x = _lift(x)
    m = _as_array(m)
    if axis == -1:
        if x.shape[-1] != m.shape[1]:
            raise DimensionError(f"const_axis_matmul: x {x.shape} vs m {m.shape} on axis -1")
        out = Tensor(x.data @ m.T)

        def backward(g):
            return (g @ m,)

    elif axis == -2:
        if x.ndim < 2 or x.shape[-2] != m.shape[1]:
            raise DimensionError(f"const_axis_matmul: x {x.shape} vs m {m.shape} on axis -2")
        out = Tensor(np.matmul(m, x.data))

        def backward(g):
            return (np.matmul(m.T, g),)

    else:
        raise DimensionError(f"const_axis_matmul: axis must be -1 or -2, got {axis}")
    _record(out, (x,), backward)
    return out


# ---------------------------------------------------------------------------
# Convolution and batch normalization
# ---------------------------------------------------------------------------

def conv1d(x, w, b) -> Tensor:
    """Same-length 1D convolution with zero padding.

    x: (C_in, T) or (B, C_in, T); w: (C_out, C_in, K) with K odd; b: (C_out,).
    """
    x, w, b = _lift(x), _lift(w), _lift(b)
    if w.ndim != 3:
        raise DimensionError(f"conv1d: kernel must be 3D, got {w.shape}")
    c_out, c_in, k = w.shape
    if k % 2 == 0:
        raise ConfigError(f"conv1d: kernel size {k} must be odd for same-length padding")
    if b.shape != (c_out,):
        raise DimensionError(f"conv1d: bias {b.shape} vs kernel {w.shape}")
    single = x.ndim == 2
    xd = x.data[None] if single else x.data
    if xd.ndim != 3 or xd.shape[1] != c_in:
        raise DimensionError(f"conv1d: input {x.shape} vs kernel {w.shape}")
    if xd.shape[2] < 1:
        raise DimensionError("conv1d: empty time axis")
    pad = k // 2
    xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad)))
    patches = sliding_window_view(xp, k, axis=-1)  # (B, C_in, T, K)
    y = np.einsum("bctk,ock->bot", patches, w.data, optimize=True) + b.data[:, None]
    out = Tensor(y[0] if single else y)

    def backward(g):
        gb3 = g[None] if single else g
        gbias = gb3.sum(axis=(0, 2))
        gw = np.einsum("bot,bctk->ock", gb3, patches, optimize=True)
        gp = np.pad(gb3, ((0, 0), (0, 0), (pad, pad)))
        gpatches = sliding_window_view(gp, k, axis=-1)  # (B, C_out, T, K)
        gx = np.einsum("botk,ock->bct", gpatches, w.data[:, :, ::-1], optimize=True)
        return gx[0] if single else gx, gw, gbias

    _record(out, (x, w, b), backward)
    return out


def batchnorm_train(x, gamma, beta, eps: float = 1e-5):
    """Per-channel normalization over all non-channel elements.

    x: (C, T) or (B, C, T). Returns (y, batch_mean, batch_var); the batch
    statistics are plain arrays for the caller's running-stat update.
    """
    x, gamma, beta = _lift(x), _lift(gamma), _lift(beta)
    single = x.ndim == 2
    xd = x.data[None] if single else x.data
    if xd.ndim != 3:
        raise DimensionError(f"batchnorm: input must be (C,T) or (B,C,T), got {x.shape}")
    c = xd.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"batchnorm: affine shapes {gamma.shape}/{beta.shape} vs C={c}")
    n = xd.shape[0] * xd.shape[2]
    if n < 2:
        raise NumericError("batchnorm: fewer than 2 elements per channel in train mode")
    mean = xd.mean(axis=(0, 2))
    var = xd.var(axis=(0, 2))
    std = np.sqrt(var + eps)
    xhat = (xd - mean[:, None]) / std[:, None]
    y = gamma.data[:, None] * xhat + beta.data[:, None]
    out = Tensor(y[0] if single else y)

    def backward(g):
        g3 = g[None] if single else g
        ggamma = (g3 * xhat).sum(axis=(0, 2))
        gbeta = g3.sum(axis=(0, 2))
        gxhat = g3 * gamma.data[:, None]
        m1 = gxhat.mean(axis=(0, 2))
        m2 = (gxhat * xhat).mean(axis=(0, 2))
        gx = (gxhat - m1[:, None] - xhat * m2[:, None]) / std[:, None]
        return gx[0] if single else gx, ggamma, gbeta

    _record(out, (x, gamma, beta), backward)
    return out, mean, var


def batchnorm_eval(x, gamma, beta, running_mean: np.ndarray, running_var: np.ndarray,
                   eps: float = 1e-5) -> Tensor:
    """Normalization with frozen running statistics."""
    x, gamma, beta = _lift(x), _lift(gamma), _lift(beta)
    single = x.ndim == 2
    xd = x.data[None] if single else x.data
    std = np.sqrt(running_var + eps)
    xhat = (xd - running_mean[:, None]) / std[:, None]
    y = gamma.data[:, None] * xhat + beta.data[:, None]
    out = Tensor(y[0] if single else y)

    def backward(g):
        g3 = g[None] if single else g
        ggamma = (g3 * xhat).sum(axis=(0, 2))
        gbeta = g3.sum(axis=(0, 2))
        gx = g3 * (gamma.data / std)[:, None]
        return gx[0] if single else gx, ggamma, gbeta

    _record(out, (x, gamma, beta), backward)
    return out


def batchnorm1d(x, gamma, beta, eps: float = 1e-5, mode: str = "train",
                running_mean: np.ndarray | None = None,
                running_var: np.ndarray | None = None) -> Tensor:
    if mode == "train":
        out, _, _ = batchnorm_train(x, gamma, beta, eps)
        return out
    if mode == "eval":
        if running_mean is None or running_var is None:
            raise ConfigError("batchnorm eval mode needs running statistics")
        return batchnorm_eval(x, gamma, beta, running_mean, running_var, eps)
    raise ConfigError(f"batchnorm mode must be 'train' or 'eval', got {mode!r}")


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------

def check_gradients_many(f, xs, h: float = 1e-4) -> float:
    """Max relative error between taped gradients of f() and central differences.

    f is a zero-argument callable (closing over xs) returning a scalar Tensor;
    it must be side-effect free so repeated evaluation is consistent. The step
    is h*max(1, |x_i|) per element; the error denominator is
    max(|analytic|, |numeric|, 1e-8).
    """
    xs = list(xs)
    for t in xs:
        t.grad = None
    with Tape() as tape:
        y = f()
    if y.size != 1:
        raise DimensionError(f"check_gradients: objective has shape {y.shape}")
    if not np.isfinite(y.data).all():
        raise NumericError("check_gradients: objective is not finite")
    tape.backward(y)
    analytic = [np.zeros(t.shape) if t.grad is None else t.grad.copy() for t in xs]
    worst = 0.0
    for t, an in zip(xs, analytic):
        flat = t.data.reshape(-1)
        aflat = an.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            hi = h * max(1.0, abs(orig))
            flat[i] = orig + hi
            yp = float(f().data)
            flat[i] = orig - hi
            ym = float(f().data)
            flat[i] = orig
            numeric = (yp - ym) / (2.0 * hi)
            err = abs(aflat[i] - numeric) / max(abs(aflat[i]), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


def check_gradients(f, x: Tensor, h: float = 1e-4) -> float:
    """check_gradients_many for a single-tensor function f(x)."""
    return check_gradients_many(lambda: f(x), [x], h=h)


# numpy-style aliases for the reductions
sum = tsum  # noqa: A001
mean = tmean  # noqa: A001
