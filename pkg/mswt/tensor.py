"""
Dense float64 tensors with a reverse-mode differentiation tape.

Operations are plain functions of their inputs. When a ``Tape`` is active in
the current context, every operation appends a record holding its inputs, its
output and a vector-Jacobian product closure; ``backward`` replays those
records in reverse and returns gradients for the tensors the tape watches.

Accumulation order:

* ``matmul`` / ``bmm`` sum over the inner axis in ascending index order, one
  multiply and one add per term, so results equal a naive triple loop bit for
  bit.
* ``conv2d`` visits kernel offsets row-major (a, then b) and contracts each
  offset with ``matmul`` (ascending input channel).
* Gradients of the contractions use ``numpy.matmul``; the order is fixed by
  the numpy build and thread count and repeats exactly run to run.
"""

import contextlib
import contextvars
import logging
import math

import numpy as np

from mswt.errors import DimensionError, InstabilityError, TapeError, ValidationError

logger = logging.getLogger(__name__)

_ACTIVE_TAPE = contextvars.ContextVar("mswt_active_tape", default=None)

_GELU_C = math.sqrt(2.0 / math.pi)


class Tensor:
    """A row-major float64 array.

    Tensors built from outside data go through ``from_external`` which rejects
    empty or non-finite input. Operations construct outputs directly and may
    produce NaN or Inf; ``is_finite`` detects that.
    """

    __slots__ = ("data",)

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)

    @classmethod
    def from_external(cls, data):
        array = np.array(data, dtype=np.float64)
        if array.size == 0:
            raise ValidationError(f"tensor has an empty extent: shape {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ValidationError("tensor contains NaN or Inf values")
        return cls(array)

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape, dtype=np.float64))

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def is_finite(self):
        return bool(np.all(np.isfinite(self.data)))

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single value, got shape {self.data.shape}")
        return float(self.data.reshape(-1)[0])

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        return f"Tensor(shape={self.shape})"


class _Record:
    __slots__ = ("op", "inputs", "output", "vjp")

    def __init__(self, op, inputs, output, vjp):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.vjp = vjp


class Tape:
    """Ordered log of the primitive operations of one forward pass.

    Use as a context manager; operations executed inside the ``with`` block
    are recorded. A tape is owned by one thread. After ``backward`` has replayed
    it, it must be ``reset`` before it can be replayed again.
    """

    def __init__(self):
        self.records = []
        self.watched = {}
        self._written = set()
        self._replayed = False
        self._token = None

    def __enter__(self):
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE_TAPE.reset(self._token)
        self._token = None
        return False

    def __len__(self):
        return len(self.records)

    @property
    def replayed(self):
        return self._replayed

    def watch(self, named_tensors):
        """Register leaf tensors (parameters) whose gradients ``backward`` returns."""
        self.watched.update(named_tensors)

    def record(self, op, inputs, output, vjp):
        key = id(output)
        if key in self._written:
            raise TapeError(f"slot written twice by '{op}'")
        self._written.add(key)
        self.records.append(_Record(op, inputs, output, vjp))

    def reset(self):
        self.records = []
        self._written = set()
        self._replayed = False


def active_tape():
    return _ACTIVE_TAPE.get()


@contextlib.contextmanager
def suspend_tape():
    """Run a block without recording, e.g. evaluation inside a training step."""
    token = _ACTIVE_TAPE.set(None)
    try:
        yield
    finally:
        _ACTIVE_TAPE.reset(token)


def _as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


def _emit(op, inputs, data, vjp):
    out = Tensor(data)
    tape = _ACTIVE_TAPE.get()
    if tape is not None:
        tape.record(op, inputs, out, vjp)
    return out


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, extent in enumerate(shape) if extent == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _ordered_matmul(a, b):
    """Contract the last axis of ``a`` with the second-to-last of ``b`` in ascending order."""
    inner = a.shape[-1]
    out = a[..., :, 0:1] * b[..., 0:1, :]
    for k in range(1, inner):
        out += a[..., :, k:k + 1] * b[..., k:k + 1, :]
    return out


# --- elementwise -----------------------------------------------------------

def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    shape_a, shape_b = a.shape, b.shape

    def vjp(g):
        return _unbroadcast(g, shape_a), _unbroadcast(g, shape_b)

    return _emit("add", (a, b), a.data + b.data, vjp)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    shape_a, shape_b = a.shape, b.shape

    def vjp(g):
        return _unbroadcast(g, shape_a), _unbroadcast(-g, shape_b)

    return _emit("sub", (a, b), a.data - b.data, vjp)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _emit("mul", (a, b), a.data * b.data, vjp)


def div(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def vjp(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _emit("div", (a, b), a.data / b.data, vjp)


def scale(a, factor):
    factor = float(factor)

    def vjp(g):
        return (g * factor,)

    return _emit("scale", (a,), a.data * factor, vjp)


def gelu(x):
    """Tanh-approximated GELU."""
    inner = _GELU_C * (x.data + 0.044715 * x.data ** 3)
    t = np.tanh(inner)

    def vjp(g):
        d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * x.data ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * d_inner),)

    return _emit("gelu", (x,), 0.5 * x.data * (1.0 + t), vjp)


# --- reductions ------------------------------------------------------------

def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    shape = x.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _emit("sum", (x,), x.data.sum(axis=axis, keepdims=keepdims), vjp)


def mean(x, axis=None, keepdims=False):
    count = x.data.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def l2_norm(x, axis):
    """Euclidean norm over ``axis``; the gradient at a zero norm is taken as zero."""
    axis = tuple(np.atleast_1d(axis))
    norm = np.sqrt(np.sum(x.data * x.data, axis=axis))

    def vjp(g):
        expanded_norm = np.expand_dims(norm, axis)
        expanded_g = np.expand_dims(g, axis)
        safe = np.where(expanded_norm > 0.0, expanded_norm, 1.0)
        grad = np.where(expanded_norm > 0.0, expanded_g * x.data / safe, 0.0)
        return (grad,)

    return _emit("l2_norm", (x,), norm, vjp)


# --- shape -----------------------------------------------------------------

def reshape(x, shape):
    original = x.shape

    def vjp(g):
        return (g.reshape(original),)

    return _emit("reshape", (x,), x.data.reshape(shape), vjp)


def transpose(x, axes):
    inverse = np.argsort(axes)

    def vjp(g):
        return (np.transpose(g, inverse),)

    return _emit("transpose", (x,), np.ascontiguousarray(np.transpose(x.data, axes)), vjp)


def concat(tensors, axis=-1):
    tensors = tuple(tensors)
    extents = [t.shape[axis] for t in tensors]
    splits = np.cumsum(extents)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _emit("concat", tensors, np.concatenate([t.data for t in tensors], axis=axis), vjp)


def crop(x, height, width):
    """Keep the leading ``height`` x ``width`` block of the two spatial axes.

    Spatial axes are the two axes before the channel axis.
    """
    shape = x.shape
    index = (Ellipsis, slice(0, height), slice(0, width), slice(None))

    def vjp(g):
        full = np.zeros(shape, dtype=np.float64)
        full[index] = g
        return (full,)

    return _emit("crop", (x,), x.data[index].copy(), vjp)


# --- contractions ----------------------------------------------------------

def matmul(a, b):
    """``c[i, j] = sum_k a[i, k] * b[k, j]``, rows independent, k ascending."""
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} x {b.shape}")

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _emit("matmul", (a, b), _ordered_matmul(a.data, b.data), vjp)


def bmm(a, b):
    """Batched matmul over matching leading axes: (..., M, K) x (..., K, N)."""
    if a.ndim < 2 or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"bmm extents do not match: {a.shape} x {b.shape}")

    def vjp(g):
        return np.matmul(g, np.swapaxes(b.data, -1, -2)), np.matmul(np.swapaxes(a.data, -1, -2), g)

    return _emit("bmm", (a, b), _ordered_matmul(a.data, b.data), vjp)


def linear(x, weight, bias=None):
    """Affine map over the last axis: ``x @ weight + bias``."""
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(f"linear expects last extent {weight.shape[0]}, got {x.shape}")
    lead = x.shape[:-1]
    flat = reshape(x, (-1, x.shape[-1]))
    out = matmul(flat, weight)
    if bias is not None:
        out = add(out, bias)
    return reshape(out, lead + (weight.shape[1],))


# --- convolution -----------------------------------------------------------

def _conv_indices(extent, kernel, stride, pad, centered):
    """Input row index for every (output row, kernel offset) pair."""
    if pad == "circular":
        out_extent = -(-extent // stride)
        base = np.arange(out_extent) * stride
        shift = kernel // 2 if centered else 0
        return [(base + a - shift) % extent for a in range(kernel)], out_extent
    out_extent = (extent - kernel) // stride + 1
    base = np.arange(out_extent) * stride
    return [base + a for a in range(kernel)], out_extent


def _batched(x):
    if x.ndim == 3:
        return x.data[None], True
    if x.ndim == 4:
        return x.data, False
    raise DimensionError(f"expected H x W x C (optionally batched), got {x.shape}")


def conv2d(x, kernel, stride=1, pad="none", centered=False):
    """Cross-correlation ``out[i,j,o] = sum x[i*s+a, j*s+b, c] * kernel[a,b,c,o]``.

    ``pad='circular'`` wraps indices on the torus and gives ceil(H/s) rows;
    ``pad='none'`` gives floor((H-kh)/s)+1. ``centered=True`` moves the kernel
    origin to its centre (circular padding only), which is what the network's
    stride-1 mixing convolutions use. ``x`` may carry a leading batch axis.
    """
    if kernel.ndim != 4 or 0 in kernel.shape:
        raise DimensionError(f"kernel must be kh x kw x Cin x Cout, got {kernel.shape}")
    if stride < 1:
        raise DimensionError(f"stride must be positive, got {stride}")
    if pad not in ("circular", "none"):
        raise ValidationError(f"unsupported padding '{pad}'")
    if centered and pad != "circular":
        raise ValidationError("centered kernels need circular padding")
    data, squeezed = _batched(x)
    batch, height, width, channels = data.shape
    kh, kw, cin, cout = kernel.shape
    if channels != cin:
        raise DimensionError(f"conv2d input has {channels} channels, kernel expects {cin}")
    if pad == "none" and (kh > height or kw > width):
        raise DimensionError(f"kernel {kh}x{kw} larger than input {height}x{width}")

    rows, out_h = _conv_indices(height, kh, stride, pad, centered)
    cols, out_w = _conv_indices(width, kw, stride, pad, centered)
    weights = kernel.data

    out = np.zeros((batch * out_h * out_w, cout), dtype=np.float64)
    for a in range(kh):
        for b in range(kw):
            patch = data[:, rows[a]][:, :, cols[b]].reshape(-1, cin)
            out += _ordered_matmul(patch, weights[a, b])
    out = out.reshape(batch, out_h, out_w, cout)

    def vjp(g):
        g4 = g[None] if squeezed else g
        g_flat = g4.reshape(-1, cout)
        grad_x = np.zeros_like(data)
        grad_k = np.zeros_like(weights)
        for a in range(kh):
            for b in range(kw):
                patch = data[:, rows[a]][:, :, cols[b]].reshape(-1, cin)
                grad_k[a, b] = patch.T @ g_flat
                contribution = (g_flat @ weights[a, b].T).reshape(batch, out_h, out_w, cin)
                grad_x[:, rows[a][:, None], cols[b][None, :], :] += contribution
        if squeezed:
            grad_x = grad_x[0]
        return grad_x, grad_k

    return _emit("conv2d", (x, kernel), out[0] if squeezed else out, vjp)


def conv2d_transpose(y, kernel, stride=2):
    """Adjoint of ``conv2d(., kernel, stride=2, pad='none')`` on even extents.

    ``y`` carries the kernel's output channels; the result has the kernel's
    input channels and twice the spatial extents.
    """
    if stride != 2:
        raise ValidationError(f"conv2d_transpose supports stride 2 only, got {stride}")
    if kernel.ndim != 4 or kernel.shape[:2] != (2, 2):
        raise DimensionError(f"conv2d_transpose needs a 2 x 2 kernel, got {kernel.shape}")
    data, squeezed = _batched(y)
    batch, height, width, channels = data.shape
    _, _, cin, cout = kernel.shape
    if channels != cout:
        raise DimensionError(f"conv2d_transpose input has {channels} channels, kernel emits {cout}")
    weights = kernel.data

    out = np.zeros((batch, 2 * height, 2 * width, cin), dtype=np.float64)
    flat = data.reshape(-1, cout)
    for a in range(2):
        for b in range(2):
            block = _ordered_matmul(flat, weights[a, b].T)
            out[:, a::2, b::2, :] = block.reshape(batch, height, width, cin)

    def vjp(g):
        g4 = g[None] if squeezed else g
        grad_y = np.zeros_like(data)
        grad_k = np.zeros_like(weights)
        for a in range(2):
            for b in range(2):
                g_ab = g4[:, a::2, b::2, :].reshape(-1, cin)
                grad_y += (g_ab @ weights[a, b]).reshape(batch, height, width, cout)
                grad_k[a, b] = g_ab.T @ flat
        if squeezed:
            grad_y = grad_y[0]
        return grad_y, grad_k

    return _emit("conv2d_transpose", (y, kernel), out[0] if squeezed else out, vjp)


# --- normalisation and attention pieces -----------------------------------

def layernorm(x, gain, bias, eps=1e-5):
    """Standardise the last axis (biased variance), then ``gain * xhat + bias``."""
    if eps <= 0:
        raise ValidationError(f"layernorm eps must be positive, got {eps}")
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise DimensionError(f"layernorm affine shape mismatch for input {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    lead_axes = tuple(range(x.ndim - 1))

    def vjp(g):
        grad_gain = (g * xhat).sum(axis=lead_axes)
        grad_bias = g.sum(axis=lead_axes)
        dxhat = g * gain.data
        grad_x = inv_std * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return grad_x, grad_gain, grad_bias

    return _emit("layernorm", (x, gain, bias), xhat * gain.data + bias.data, vjp)


def softmax(x):
    """Softmax over the last axis with max subtraction."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (probs * (g - (g * probs).sum(axis=-1, keepdims=True)),)

    return _emit("softmax", (x,), probs, vjp)


# --- differentiation -------------------------------------------------------

def backward(tape, output, seed=None):
    """Replay ``tape`` in reverse from ``output`` and return watched gradients.

    Without a seed the output must hold a single value. Watched tensors the
    output does not depend on get an exact zero gradient.
    """
    if tape.replayed:
        raise TapeError("tape already replayed; reset it and record a new forward pass")
    if seed is None:
        if output.size != 1:
            raise DimensionError(f"backward needs a seed for non-scalar output {output.shape}")
        seed_data = np.ones_like(output.data)
    else:
        seed_data = np.asarray(seed.data if isinstance(seed, Tensor) else seed, dtype=np.float64)
        if seed_data.shape != output.shape:
            raise DimensionError(f"seed shape {seed_data.shape} does not match output {output.shape}")

    grads = {id(output): seed_data}
    for record in reversed(tape.records):
        g = grads.pop(id(record.output), None)
        if g is None:
            continue
        for tensor, contribution in zip(record.inputs, record.vjp(g)):
            if contribution is None:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + contribution
            else:
                grads[key] = contribution
    tape._replayed = True

    result = {}
    for name, tensor in tape.watched.items():
        grad = grads.get(id(tensor))
        result[name] = np.zeros_like(tensor.data) if grad is None else np.asarray(grad).reshape(tensor.shape)
    return result


def value_and_grad(f, params):
    """Evaluate ``f(params)`` on a fresh tape and return ``(value, gradients)``."""
    with Tape() as tape:
        tape.watch(params)
        out = f(params)
    return out, backward(tape, out)


def _scalar_value(value):
    number = value.item() if isinstance(value, Tensor) else float(value)
    if not math.isfinite(number):
        raise InstabilityError(f"function evaluated to a non-finite value ({number})")
    return number


def grad_check(f, params, h=1e-5, probes=32, seed=0, grads=None, floor=1e-8):
    """Largest relative disagreement between reverse-mode and central differences.

    ``probes`` coordinates (or all, whichever is fewer) are drawn once from a
    seeded generator across every tensor of ``params``. Pass ``grads`` to check
    an externally supplied gradient instead of recomputing it. ``floor`` bounds
    the denominator from below; raise it where a gradient is exactly zero and
    the finite difference only sees rounding noise.
    """
    if h <= 0:
        raise ValidationError(f"finite-difference step must be positive, got {h}")
    if grads is None:
        value, grads = value_and_grad(f, params)
        _scalar_value(value)

    names = list(params)
    sizes = [params[name].size for name in names]
    offsets = np.cumsum([0] + sizes)
    total = int(offsets[-1])
    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(total, size=min(probes, total), replace=False))

    worst = 0.0
    with suspend_tape():
        for flat in picks:
            slot = int(np.searchsorted(offsets, flat, side="right") - 1)
            name = names[slot]
            tensor = params[name]
            position = np.unravel_index(int(flat - offsets[slot]), tensor.shape)
            original = tensor.data[position]
            try:
                tensor.data[position] = original + h
                f_plus = _scalar_value(f(params))
                tensor.data[position] = original - h
                f_minus = _scalar_value(f(params))
            finally:
                tensor.data[position] = original
            g_fd = (f_plus - f_minus) / (2.0 * h)
            g_ad = float(np.asarray(grads[name])[position])
            error = abs(g_ad - g_fd) / max(abs(g_ad), abs(g_fd), floor)
            if error > worst:
                logger.debug(f"grad_check {name}{position}: ad={g_ad:.6e} fd={g_fd:.6e} err={error:.3e}")
            worst = max(worst, error)
    return worst
