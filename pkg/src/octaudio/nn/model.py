"""Generator/discriminator assembly with octave-structured blocks.

Each generator block quadruples the block (time) axis with a stride-(4,1)
transposed convolution, then synthesizes a new top octave from the highest
octave of its input via a stride-(1,2) transposed convolution, balances it
with a linear 1x1 convolution and concatenates: (M, N) -> (4M, 2N). The
discriminator mirrors this: the top octave is analyzed down to half its
width, balanced, summed onto the lower octaves, and time is downsampled.
No batch normalization anywhere; a minibatch-stddev channel is appended just
before the deepest discriminator block.
"""

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError, ParseError, ShapeError
from . import autodiff as ad
from .layers import (
    concat_bands,
    conv2d,
    dense,
    leaky_relu,
    minibatch_stddev,
    slice_bands,
    transposed_conv2d,
)

CHECKPOINT_MAGIC = b"MP3N"
CHECKPOINT_VERSION = 1
CHANNEL_CAP = 512

KERNEL_TIME = (8, 3)       # stride (4, 1)
KERNEL_OCTAVE = (1, 4)     # stride (1, 2)


def default_channels(num_blocks, base=64, cap=CHANNEL_CAP):
    """Deepest-first channel schedule, halving per block, capped."""
    return tuple(
        min(cap, base * 2 ** (num_blocks - depth)) for depth in range(num_blocks + 1)
    )


@dataclass
class ModelConfig:
    """Architecture shape schedule.

    channels[d] is the width at depth d: channels[0] at the seed,
    channels[num_blocks] at the shallowest block output.
    """

    latent_dim: int = 512
    num_blocks: int = 6
    seed_blocks: int = 4
    seed_bands: int = 2
    channels: tuple = None
    output_channels: int = 2

    def __post_init__(self):
        if self.channels is None:
            self.channels = default_channels(self.num_blocks)
        self.channels = tuple(int(c) for c in self.channels)
        if self.latent_dim < 1 or self.seed_blocks < 1 or self.seed_bands < 1:
            raise ConfigError("latent_dim and seed shape must be positive")
        if self.num_blocks < 0:
            raise ConfigError("num_blocks must be non-negative")
        if self.num_blocks > 0 and self.seed_bands % 2:
            raise ConfigError("seed_bands must be even so the top octave splits")
        if len(self.channels) != self.num_blocks + 1:
            raise ConfigError(
                f"channels needs {self.num_blocks + 1} entries, got {len(self.channels)}"
            )
        if any(c < 1 for c in self.channels):
            raise ConfigError("channel counts must be positive")
        if any(c > CHANNEL_CAP for c in self.channels):
            raise ConfigError(f"channel counts are capped at {CHANNEL_CAP}")
        if self.output_channels < 1:
            raise ConfigError("output_channels must be positive")

    def block_shape(self, depth):
        """(blocks, bands) after `depth` generator blocks."""
        return (
            self.seed_blocks * 4 ** depth,
            self.seed_bands * 2 ** depth,
        )

    @property
    def output_shape(self):
        m, n = self.block_shape(self.num_blocks)
        return (m, n, self.output_channels)


# ---------------------------------------------------------------------------
# parameters

def generator_param_shapes(cfg):
    shapes = {
        "g.seed.W": (cfg.latent_dim, cfg.seed_blocks * cfg.seed_bands * cfg.channels[0]),
        "g.seed.b": (cfg.seed_blocks * cfg.seed_bands * cfg.channels[0],),
    }
    for i in range(1, cfg.num_blocks + 1):
        cin, cout = cfg.channels[i - 1], cfg.channels[i]
        shapes[f"g.block{i}.time.W"] = (*KERNEL_TIME, cin, cout)
        shapes[f"g.block{i}.time.b"] = (cout,)
        shapes[f"g.block{i}.octave.W"] = (*KERNEL_OCTAVE, cout, cout)
        shapes[f"g.block{i}.octave.b"] = (cout,)
        shapes[f"g.block{i}.balance.W"] = (1, 1, cout, cout)
        shapes[f"g.block{i}.balance.b"] = (cout,)
    shapes["g.out.W"] = (1, 1, cfg.channels[cfg.num_blocks], cfg.output_channels)
    shapes["g.out.b"] = (cfg.output_channels,)
    return shapes


def discriminator_param_shapes(cfg):
    shapes = {
        "d.in.W": (1, 1, cfg.output_channels, cfg.channels[cfg.num_blocks]),
        "d.in.b": (cfg.channels[cfg.num_blocks],),
    }
    for i in range(cfg.num_blocks, 0, -1):
        cin = cfg.channels[i] + (1 if i == 1 else 0)   # stddev channel
        cout = cfg.channels[i - 1]
        shapes[f"d.block{i}.octave.W"] = (*KERNEL_OCTAVE, cin, cin)
        shapes[f"d.block{i}.octave.b"] = (cin,)
        shapes[f"d.block{i}.balance.W"] = (1, 1, cin, cin)
        shapes[f"d.block{i}.balance.b"] = (cin,)
        shapes[f"d.block{i}.time.W"] = (*KERNEL_TIME, cin, cout)
        shapes[f"d.block{i}.time.b"] = (cout,)
    shapes["d.out.W"] = (cfg.seed_blocks * cfg.seed_bands * cfg.channels[0], 1)
    shapes["d.out.b"] = (1,)
    return shapes


def init_params(shapes, rng):
    """Gaussian weights scaled by 1/sqrt(fan_in); zero biases."""
    params = {}
    for name, shape in shapes.items():
        if name.endswith(".b"):
            params[name] = ad.parameter(np.zeros(shape))
        else:
            fan_in = int(np.prod(shape[:-1]))
            params[name] = ad.parameter(
                rng.standard_normal(shape) / np.sqrt(fan_in)
            )
    return params


def count_params(shapes):
    return int(sum(np.prod(s) for s in shapes.values()))


# ---------------------------------------------------------------------------
# forward passes

def generator_block(x, params, prefix):
    """(B, M, N, Cin) -> (B, 4M, 2N, Cout)."""
    h = transposed_conv2d(
        x, params[f"{prefix}.time.W"], params[f"{prefix}.time.b"], (4, 1)
    )
    h = leaky_relu(h)
    bands = h.shape[2]
    top = slice_bands(h, bands // 2, bands)
    octave = transposed_conv2d(
        top, params[f"{prefix}.octave.W"], params[f"{prefix}.octave.b"], (1, 2)
    )
    octave = leaky_relu(octave)
    octave = conv2d(
        octave, params[f"{prefix}.balance.W"], params[f"{prefix}.balance.b"], (1, 1)
    )
    return concat_bands(h, octave)


def discriminator_block(x, params, prefix):
    """(B, 4M, 2N, Cin) -> (B, M, N, Cout)."""
    bands = x.shape[2]
    if bands % 4:
        raise ShapeError(f"band count {bands} must be divisible by 4")
    if x.shape[1] % 4:
        raise ShapeError(f"block count {x.shape[1]} must be divisible by 4")
    half = bands // 2
    lower = slice_bands(x, 0, half)
    upper = slice_bands(x, half, bands)
    analyzed = conv2d(
        upper, params[f"{prefix}.octave.W"], params[f"{prefix}.octave.b"], (1, 2)
    )
    analyzed = leaky_relu(analyzed)
    balanced = conv2d(
        analyzed, params[f"{prefix}.balance.W"], params[f"{prefix}.balance.b"], (1, 1)
    )
    low_keep = slice_bands(lower, 0, half // 2)
    low_top = slice_bands(lower, half // 2, half)
    merged = concat_bands(low_keep, ad.add(low_top, balanced))
    out = conv2d(
        merged, params[f"{prefix}.time.W"], params[f"{prefix}.time.b"], (4, 1)
    )
    return leaky_relu(out)


def generator(z, params, cfg):
    """Latent (B, latent_dim) -> linear amplitudes (B, M, N, output_channels)."""
    if z.shape[1] != cfg.latent_dim:
        raise ShapeError(f"latent dim {z.shape[1]} != {cfg.latent_dim}")
    h = dense(z, params["g.seed.W"], params["g.seed.b"])
    h = ad.reshape(h, (z.shape[0], cfg.seed_blocks, cfg.seed_bands, cfg.channels[0]))
    h = leaky_relu(h)
    for i in range(1, cfg.num_blocks + 1):
        h = generator_block(h, params, f"g.block{i}")
    return conv2d(h, params["g.out.W"], params["g.out.b"], (1, 1))


def discriminator(x, params, cfg):
    """Amplitudes (B, M, N, output_channels) -> (B,) scores."""
    expected = cfg.output_shape
    if tuple(x.shape[1:]) != expected:
        raise ShapeError(f"input shape {x.shape[1:]} != {expected}")
    h = conv2d(x, params["d.in.W"], params["d.in.b"], (1, 1))
    h = leaky_relu(h)
    for i in range(cfg.num_blocks, 1, -1):
        h = discriminator_block(h, params, f"d.block{i}")
    if cfg.num_blocks >= 1:
        h = minibatch_stddev(h)
        h = discriminator_block(h, params, "d.block1")
    batch = x.shape[0]
    flat = ad.reshape(h, (batch, cfg.seed_blocks * cfg.seed_bands * cfg.channels[0]))
    score = dense(flat, params["d.out.W"], params["d.out.b"])
    return ad.reshape(score, (batch,))


def shape_table(cfg):
    """Per-depth activation shapes plus parameter totals."""
    rows = [("seed", cfg.seed_blocks, cfg.seed_bands, cfg.channels[0])]
    for depth in range(1, cfg.num_blocks + 1):
        m, n = cfg.block_shape(depth)
        rows.append((f"block {depth}", m, n, cfg.channels[depth]))
    m, n, c = cfg.output_shape
    rows.append(("output", m, n, c))
    return {
        "rows": rows,
        "generator_params": count_params(generator_param_shapes(cfg)),
        "discriminator_params": count_params(discriminator_param_shapes(cfg)),
    }


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(path, params, cfg, iteration=0, extra=None):
    """Binary checkpoint: magic, version, config echo, named float64 tensors."""
    meta = json.dumps(
        {"model": asdict(cfg), "iteration": iteration, "extra": extra or {}},
        sort_keys=True,
    ).encode("utf-8")
    names = sorted(params)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(meta)))
        fh.write(meta)
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            data = np.ascontiguousarray(params[name].data, dtype="<f8")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())


def load_checkpoint(path):
    """Returns (params dict of Tensors, ModelConfig, iteration, extra dict)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ParseError(f"{path}: not a checkpoint file")
    version, meta_len = struct.unpack_from("<II", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    meta = json.loads(blob[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    params = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(blob, dtype="<f8", count=size, offset=pos)
        pos += 8 * size
        params[name] = ad.parameter(data.reshape(shape).copy())
    model = meta["model"]
    model["channels"] = tuple(model["channels"])
    cfg = ModelConfig(**model)
    return params, cfg, int(meta.get("iteration", 0)), meta.get("extra", {})
