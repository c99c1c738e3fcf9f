"""
The multi-scale wavelet transformer operator.

Fields enter through a patch tokenizer, pass a U-shaped stack of wavelet
attention blocks joined by wavelet down/up-sampling, and leave through the
inverse tokenizer. Every function takes the ModelConfig and the named
parameter map explicitly; nothing here holds state between calls.

Parameter names:

    tokenizer.{weight,bias}                 p*p*C_in -> D_0
    detokenizer.{weight,bias}               D_0 -> p*p*C_u
    encoder.<l>.<r>.* / bottleneck.<r>.* / decoder.<l>.<r>.*   attention blocks
    down.<l>.{compress,conv}.{weight,bias}  scale l -> l+1
    up.<l>.{expand,fuse}.{weight,bias}      scale l+1 -> l
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from mswt.errors import DimensionError
from mswt.tensor import (
    Tensor,
    add,
    bmm,
    concat,
    conv2d,
    gelu,
    layernorm,
    linear,
    reshape,
    scale,
    softmax,
    suspend_tape,
    transpose,
)
from mswt.wavelet import SubbandStack, dwt2, idwt2

logger = logging.getLogger(__name__)

# Sub-layers whose output feeds a residual sum; initialised small.
RESIDUAL_OUTPUTS = ("wao.end.weight", "ffn.fc2.weight")


@dataclass
class TokenGrid:
    """Tokens laid out on their grid: values are B x H_l x W_l x D_l."""

    values: Tensor
    scale: int

    @property
    def extents(self):
        return self.values.shape[1:3]

    @property
    def width(self):
        return self.values.shape[-1]


class ModelParameters(dict):
    """Named weight tensors of one network, in creation order."""

    def count(self):
        return sum(tensor.size for tensor in self.values())

    def all_finite(self):
        return all(tensor.is_finite() for tensor in self.values())

    def copy(self):
        return ModelParameters((name, Tensor(tensor.data.copy())) for name, tensor in self.items())


# --- parameter layout ------------------------------------------------------

def _block_prefixes(cfg):
    prefixes = []
    for scale_index in range(cfg.scales - 1):
        prefixes.extend((f"encoder.{scale_index}.{r}", scale_index) for r in range(cfg.block_repeats))
    prefixes.extend((f"bottleneck.{r}", cfg.scales - 1) for r in range(cfg.block_repeats))
    for scale_index in reversed(range(cfg.scales - 1)):
        prefixes.extend((f"decoder.{scale_index}.{r}", scale_index) for r in range(cfg.block_repeats))
    return prefixes


def _block_shapes(prefix, width, cfg):
    quarter = width // 4
    hidden = cfg.ffn_ratio * width
    k = cfg.conv_kernel
    return [
        (f"{prefix}.norm1.gain", (width,)),
        (f"{prefix}.norm1.bias", (width,)),
        (f"{prefix}.wao.front.weight", (width, quarter)),
        (f"{prefix}.wao.front.bias", (quarter,)),
        (f"{prefix}.wao.mix.weight", (k, k, width, width)),
        (f"{prefix}.wao.mix.bias", (width,)),
        (f"{prefix}.wao.query.weight", (width, width)),
        (f"{prefix}.wao.query.bias", (width,)),
        (f"{prefix}.wao.key.weight", (width, width)),
        (f"{prefix}.wao.key.bias", (width,)),
        (f"{prefix}.wao.value.weight", (width, width)),
        (f"{prefix}.wao.value.bias", (width,)),
        (f"{prefix}.wao.proj.weight", (width, width)),
        (f"{prefix}.wao.proj.bias", (width,)),
        (f"{prefix}.wao.end.weight", (quarter, width)),
        (f"{prefix}.wao.end.bias", (width,)),
        (f"{prefix}.norm2.gain", (width,)),
        (f"{prefix}.norm2.bias", (width,)),
        (f"{prefix}.ffn.fc1.weight", (width, hidden)),
        (f"{prefix}.ffn.fc1.bias", (hidden,)),
        (f"{prefix}.ffn.fc2.weight", (hidden, width)),
        (f"{prefix}.ffn.fc2.bias", (width,)),
    ]


def parameter_shapes(cfg):
    """Ordered (name, shape) list; a pure function of the config."""
    p2 = cfg.patch_size * cfg.patch_size
    k = cfg.conv_kernel
    widths = cfg.widths
    shapes = [
        ("tokenizer.weight", (p2 * cfg.in_channels, widths[0])),
        ("tokenizer.bias", (widths[0],)),
    ]
    for prefix, scale_index in _block_prefixes(cfg):
        shapes.extend(_block_shapes(prefix, widths[scale_index], cfg))
    for scale_index in range(cfg.scales - 1):
        width, coarse = widths[scale_index], widths[scale_index + 1]
        quarter = width // 4
        shapes.extend([
            (f"down.{scale_index}.compress.weight", (width, quarter)),
            (f"down.{scale_index}.compress.bias", (quarter,)),
            (f"down.{scale_index}.conv.weight", (k, k, width, coarse)),
            (f"down.{scale_index}.conv.bias", (coarse,)),
            (f"up.{scale_index}.expand.weight", (coarse, width)),
            (f"up.{scale_index}.expand.bias", (width,)),
            (f"up.{scale_index}.fuse.weight", (k, k, quarter + width, width)),
            (f"up.{scale_index}.fuse.bias", (width,)),
        ])
    shapes.extend([
        ("detokenizer.weight", (widths[0], p2 * cfg.out_channels)),
        ("detokenizer.bias", (p2 * cfg.out_channels,)),
    ])
    return shapes


def parameter_count(cfg):
    return int(sum(np.prod(shape) for _, shape in parameter_shapes(cfg)))


def parameter_breakdown(cfg):
    """Parameter totals grouped by the leading name component."""
    totals = {}
    for name, shape in parameter_shapes(cfg):
        group = name.split(".")[0]
        totals[group] = totals.get(group, 0) + int(np.prod(shape))
    return totals


def attention_cost(cfg):
    """Per scale: (attention tokens N', tokens per window, score entries per block)."""
    costs = []
    for scale_index in range(cfg.scales):
        height, width = cfg.grid_at(scale_index)
        tokens = (height // 2) * (width // 2)
        window_h, window_w = cfg.window_at(scale_index)
        per_window = window_h * window_w
        costs.append((tokens, per_window, tokens * per_window))
    return costs


def init_parameters(cfg, seed=0):
    """Fan-in uniform weights, zero biases, unit gains.

    Residual output projections are scaled by 1/sqrt(2 * number of blocks).
    """
    cfg.validate()
    rng = np.random.default_rng(seed)
    blocks = len(_block_prefixes(cfg))
    residual_scale = 1.0 / math.sqrt(2.0 * blocks)
    params = ModelParameters()
    for name, shape in parameter_shapes(cfg):
        if name.endswith(".gain"):
            data = np.ones(shape)
        elif name.endswith(".bias"):
            data = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[:-1]))
            bound = 1.0 / math.sqrt(fan_in)
            data = rng.uniform(-bound, bound, size=shape)
            if name.endswith(RESIDUAL_OUTPUTS):
                data *= residual_scale
        params[name] = Tensor(data)
    logger.debug(f"Initialised {len(params)} tensors, {params.count()} parameters")
    return params


# --- tokenizer ---------------------------------------------------------------

def _batched(x):
    if x.ndim == 3:
        return reshape(x, (1,) + x.shape), True
    if x.ndim == 4:
        return x, False
    raise DimensionError(f"expected H x W x C or B x H x W x C, got {x.shape}")


def patchify(x, patch):
    """B x H x W x C -> B x H/p x W/p x (p*p*C); row-major inside a patch, channel fastest."""
    batch, height, width, channels = x.shape
    if height % patch or width % patch:
        raise DimensionError(f"grid {height}x{width} not divisible by patch size {patch}")
    grid = reshape(x, (batch, height // patch, patch, width // patch, patch, channels))
    grid = transpose(grid, (0, 1, 3, 2, 4, 5))
    return reshape(grid, (batch, height // patch, width // patch, patch * patch * channels))


def unpatchify(tokens, patch, channels):
    """Exact inverse of ``patchify``."""
    batch, rows, cols, _ = tokens.shape
    grid = reshape(tokens, (batch, rows, cols, patch, patch, channels))
    grid = transpose(grid, (0, 1, 3, 2, 4, 5))
    return reshape(grid, (batch, rows * patch, cols * patch, channels))


def tokenize(x, cfg, params):
    x, _ = _batched(x)
    patches = patchify(x, cfg.patch_size)
    return TokenGrid(linear(patches, params["tokenizer.weight"], params["tokenizer.bias"]), scale=0)


def untokenize(z, cfg, params):
    if z.scale != 0:
        raise DimensionError(f"untokenize needs scale-0 tokens, got scale {z.scale}")
    patches = linear(z.values, params["detokenizer.weight"], params["detokenizer.bias"])
    return unpatchify(patches, cfg.patch_size, cfg.out_channels)


# --- wavelet attention ---------------------------------------------------------

def _partition(u, window_h, window_w):
    batch, height, width, channels = u.shape
    rows, cols = height // window_h, width // window_w
    grid = reshape(u, (batch, rows, window_h, cols, window_w, channels))
    grid = transpose(grid, (0, 1, 3, 2, 4, 5))
    return reshape(grid, (batch * rows * cols, window_h * window_w, channels))


def _merge(windows, batch, height, width, window_h, window_w):
    channels = windows.shape[-1]
    rows, cols = height // window_h, width // window_w
    grid = reshape(windows, (batch, rows, cols, window_h, window_w, channels))
    grid = transpose(grid, (0, 1, 3, 2, 4, 5))
    return reshape(grid, (batch, height, width, channels))


def _split_heads(x, heads):
    count, tokens, channels = x.shape
    split = reshape(x, (count, tokens, heads, channels // heads))
    return transpose(split, (0, 2, 1, 3))


def window_attention(u, params, prefix, heads, window):
    """Multi-head self-attention inside non-overlapping windows of a B x H x W x D grid."""
    batch, height, width, channels = u.shape
    window_h, window_w = window
    if height % window_h or width % window_w:
        raise DimensionError(f"attention grid {height}x{width} not divisible by window {window_h}x{window_w}")
    if channels % heads:
        raise DimensionError(f"width {channels} not divisible by {heads} heads")
    windows = _partition(u, window_h, window_w)

    q = _split_heads(linear(windows, params[f"{prefix}.query.weight"], params[f"{prefix}.query.bias"]), heads)
    k = _split_heads(linear(windows, params[f"{prefix}.key.weight"], params[f"{prefix}.key.bias"]), heads)
    v = _split_heads(linear(windows, params[f"{prefix}.value.weight"], params[f"{prefix}.value.bias"]), heads)

    scores = scale(bmm(q, transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(channels // heads))
    context = bmm(softmax(scores), v)
    context = transpose(context, (0, 2, 1, 3))
    context = reshape(context, windows.shape)
    mixed = linear(context, params[f"{prefix}.proj.weight"], params[f"{prefix}.proj.bias"])
    return _merge(mixed, batch, height, width, window_h, window_w)


def _mixing_conv(u, weight, bias):
    return add(conv2d(u, weight, stride=1, pad="circular", centered=True), bias)


def wao_forward(z, cfg, params, prefix):
    """Wavelet attention operator: compress, DWT, conv, windowed attention, iDWT, expand.

    No residual here; ``wattn_block`` adds it.
    """
    height, width = z.extents
    if height % 2 or width % 2:
        raise DimensionError(f"wavelet attention needs even token extents, got {height}x{width}")
    if z.width % 4:
        raise DimensionError(f"token width {z.width} not divisible by 4")
    window = cfg.window_at(z.scale)
    y = linear(z.values, params[f"{prefix}.wao.front.weight"], params[f"{prefix}.wao.front.bias"])
    coefficients = dwt2(y).values
    coefficients = _mixing_conv(coefficients, params[f"{prefix}.wao.mix.weight"], params[f"{prefix}.wao.mix.bias"])
    attended = window_attention(coefficients, params, f"{prefix}.wao", cfg.heads, window)
    y_tilde = idwt2(SubbandStack(attended, (height, width)))
    out = linear(y_tilde, params[f"{prefix}.wao.end.weight"], params[f"{prefix}.wao.end.bias"])
    return TokenGrid(out, z.scale)


def feed_forward(x, params, prefix):
    hidden = gelu(linear(x, params[f"{prefix}.ffn.fc1.weight"], params[f"{prefix}.ffn.fc1.bias"]))
    return linear(hidden, params[f"{prefix}.ffn.fc2.weight"], params[f"{prefix}.ffn.fc2.bias"])


def wattn_block(z, cfg, params, prefix):
    """Two pre-norm residual sub-layers: wavelet attention, then the feed-forward network."""
    eps = cfg.layernorm_eps
    normed = layernorm(z.values, params[f"{prefix}.norm1.gain"], params[f"{prefix}.norm1.bias"], eps)
    values = add(z.values, wao_forward(TokenGrid(normed, z.scale), cfg, params, prefix).values)
    normed = layernorm(values, params[f"{prefix}.norm2.gain"], params[f"{prefix}.norm2.bias"], eps)
    values = add(values, feed_forward(normed, params, prefix))
    return TokenGrid(values, z.scale)


# --- wavelet sampling -------------------------------------------------------

def downsample(z, cfg, params):
    """Compress channels to D/4, DWT (all four subbands kept), conv to the next width."""
    height, width = z.extents
    if height % 2 or width % 2:
        raise DimensionError(f"cannot downsample odd token extents {height}x{width}")
    level = z.scale
    y = linear(z.values, params[f"down.{level}.compress.weight"], params[f"down.{level}.compress.bias"])
    coefficients = dwt2(y).values
    out = _mixing_conv(coefficients, params[f"down.{level}.conv.weight"], params[f"down.{level}.conv.bias"])
    return TokenGrid(out, level + 1)


def upsample(z_coarse, skip, cfg, params):
    """Project to four subbands of D/4 channels, iDWT, concatenate the skip, fuse."""
    level = skip.scale
    if z_coarse.scale != level + 1:
        raise DimensionError(f"upsample joins scale {z_coarse.scale} with skip at scale {level}")
    coarse_h, coarse_w = z_coarse.extents
    if skip.extents != (2 * coarse_h, 2 * coarse_w):
        raise DimensionError(f"skip extents {skip.extents} are not twice {z_coarse.extents}")
    u = linear(z_coarse.values, params[f"up.{level}.expand.weight"], params[f"up.{level}.expand.bias"])
    restored = idwt2(SubbandStack(u, skip.extents))
    fused = _mixing_conv(
        concat([restored, skip.values], axis=-1),
        params[f"up.{level}.fuse.weight"],
        params[f"up.{level}.fuse.bias"],
    )
    return TokenGrid(fused, level)


# --- full operator ------------------------------------------------------------

def trunk_forward(z, cfg, params):
    """Encoder, bottleneck and decoder on scale-0 tokens; skips taken after each encoder block."""
    skips = []
    for level in range(cfg.scales - 1):
        for r in range(cfg.block_repeats):
            z = wattn_block(z, cfg, params, f"encoder.{level}.{r}")
        skips.append(z)
        z = downsample(z, cfg, params)
    for r in range(cfg.block_repeats):
        z = wattn_block(z, cfg, params, f"bottleneck.{r}")
    for level in reversed(range(cfg.scales - 1)):
        z = upsample(z, skips[level], cfg, params)
        for r in range(cfg.block_repeats):
            z = wattn_block(z, cfg, params, f"decoder.{level}.{r}")
    return z


def mswt_forward(x, cfg, params):
    """One operator step: H x W x C_in (optionally batched) -> H x W x C_u."""
    x_batched, squeezed = _batched(x)
    expected = (cfg.height, cfg.width, cfg.in_channels)
    if x_batched.shape[1:] != expected:
        raise DimensionError(f"input shape {x.shape} does not match config {expected}")
    tokens = trunk_forward(tokenize(x_batched, cfg, params), cfg, params)
    out = untokenize(tokens, cfg, params)
    if squeezed:
        out = reshape(out, out.shape[1:])
    return out


class MSWT:
    """A config plus its parameters; the callable form used by training and rollout."""

    def __init__(self, config, parameters):
        self.config = config.validate()
        self.parameters = parameters

    @classmethod
    def initialize(cls, config, seed=0):
        model = cls(config, init_parameters(config, seed))
        logger.info(f"MSWT with {model.parameters.count()} parameters: {parameter_breakdown(config)}")
        for level, (tokens, per_window, entries) in enumerate(attention_cost(config)):
            logger.debug(
                f"scale {level}: {tokens} wavelet tokens, {per_window} per window, "
                f"{entries} scores (full attention {tokens * tokens})"
            )
        return model

    def forward(self, x):
        return mswt_forward(x, self.config, self.parameters)

    def predict(self, inputs):
        """Evaluate on a numpy array without recording."""
        with suspend_tape():
            return self.forward(Tensor(inputs)).data.copy()
