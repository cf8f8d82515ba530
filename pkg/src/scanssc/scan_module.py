"""Axis-wise scan blocks, spatial mixing, tri-feature fusion and the prediction head.

Parameter containers are plain dataclasses whose leaves are either numpy
arrays (storage) or :class:`~scanssc.autodiff.Tensor` (during a forward pass
on a tape). :func:`tree_map` and :func:`tree_items` walk them.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .masks import AttentionMask
from .voxel import (
    AXES,
    ConfigError,
    downsample2,
    flatten_for_axis,
    resize_trilinear,
    unflatten_for_axis,
    upsample_trilinear,
)


# parameter trees -----------------------------------------------------------


def tree_map(fn, tree):
    if dataclasses.is_dataclass(tree):
        return type(tree)(**{f.name: tree_map(fn, getattr(tree, f.name))
                             for f in dataclasses.fields(tree)})
    if isinstance(tree, dict):
        return {k: tree_map(fn, v) for k, v in tree.items()}
    if isinstance(tree, (list, tuple)):
        return type(tree)(tree_map(fn, v) for v in tree)
    if tree is None:
        return None
    return fn(tree)


def tree_items(tree, prefix=""):
    """Flat ``(dotted_name, leaf)`` pairs in a stable order."""
    if dataclasses.is_dataclass(tree):
        for f in dataclasses.fields(tree):
            yield from tree_items(getattr(tree, f.name), f"{prefix}{f.name}.")
    elif isinstance(tree, dict):
        for k in sorted(tree):
            yield from tree_items(tree[k], f"{prefix}{k}.")
    elif isinstance(tree, (list, tuple)):
        for i, v in enumerate(tree):
            yield from tree_items(v, f"{prefix}{i}.")
    elif tree is not None:
        yield prefix.rstrip("."), tree


def tree_unflatten(tree, leaves):
    it = iter(leaves)
    out = tree_map(lambda _: next(it), tree)
    return out


@dataclass
class ScanBlockParams:
    norm1_gamma: object
    norm1_beta: object
    wq: object
    bq: object
    wk: object
    bk: object
    wv: object
    bv: object
    wo: object
    bo: object
    norm2_gamma: object
    norm2_beta: object
    w1: object
    b1: object
    w2: object
    b2: object


@dataclass
class ConvParams:
    weight: object
    bias: object


@dataclass
class ResidualUnit:
    conv_a: ConvParams
    conv_b: ConvParams


@dataclass
class MixerParams:
    units: list
    lateral: ConvParams | None = None


@dataclass
class BranchParams:
    block: ScanBlockParams
    mixer: MixerParams


@dataclass
class FusionParams:
    weight: object
    bias: object


@dataclass
class HeadParams:
    conv: ConvParams
    norm_gamma: object
    norm_beta: object
    weight: object
    bias: object


@dataclass
class ScanModuleParams:
    branches: dict
    fusion: FusionParams


@dataclass
class ModelParams:
    scan: ScanModuleParams
    head: HeadParams


@dataclass(frozen=True)
class ScanModuleConfig:
    heads: int = 1
    enabled: tuple[str, ...] = AXES
    padding: str = "zeros"
    pyramid: bool = True
    share_params: bool = False
    epsilon: float = 1e-5


# initialisation ------------------------------------------------------------


def _uniform(rng, fan_in, shape):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_block(rng, C, ffn_mult=4) -> ScanBlockParams:
    H = ffn_mult * C
    one, zero = np.ones(C), np.zeros(C)
    return ScanBlockParams(
        one.copy(), zero.copy(),
        _uniform(rng, C, (C, C)), np.zeros(C),
        _uniform(rng, C, (C, C)), np.zeros(C),
        _uniform(rng, C, (C, C)), np.zeros(C),
        _uniform(rng, C, (C, C)), np.zeros(C),
        one.copy(), zero.copy(),
        _uniform(rng, C, (C, H)), np.zeros(H),
        _uniform(rng, H, (H, C)), np.zeros(C),
    )


def init_conv(rng, cin, cout, k=3) -> ConvParams:
    return ConvParams(_uniform(rng, k ** 3 * cin, (k, k, k, cin, cout)), np.zeros(cout))


def init_mixer(rng, C, units=2, pyramid=True) -> MixerParams:
    return MixerParams(
        [ResidualUnit(init_conv(rng, C, C), init_conv(rng, C, C)) for _ in range(units)],
        init_conv(rng, C, C) if pyramid else None,
    )


def init_scan_module(rng, C, *, ffn_mult=4, mixer_units=2, pyramid=True,
                     share_params=False) -> ScanModuleParams:
    axes = AXES[:1] if share_params else AXES
    branches = {a: BranchParams(init_block(rng, C, ffn_mult), init_mixer(rng, C, mixer_units, pyramid))
                for a in axes}
    return ScanModuleParams(branches, FusionParams(_uniform(rng, 3 * C, (3 * C, 3)), np.zeros(3)))


def init_head(rng, C, P) -> HeadParams:
    return HeadParams(init_conv(rng, C, C), np.ones(C), np.zeros(C),
                      _uniform(rng, C, (C, P)), np.zeros(P))


# forward pieces ------------------------------------------------------------


def scan_block(f_axis, mask: AttentionMask, p: ScanBlockParams, heads: int = 1,
               epsilon: float = 1e-5):
    """Pre-norm masked self-attention and FFN over (batch, L, C) sequences."""
    f = ad.as_tensor(f_axis)
    B, L, C = f.shape
    if mask.length != L:
        raise ConfigError(f"mask length {mask.length} does not match sequence length {L}")
    if C % heads:
        raise ConfigError(f"channels {C} not divisible by {heads} heads")
    d = C // heads

    def split(t):
        return ad.permute(ad.reshape(t, (B, L, heads, d)), (0, 2, 1, 3))

    x = ad.layer_norm(f, p.norm1_gamma, p.norm1_beta, epsilon)
    q = split(ad.linear(x, p.wq, p.bq))
    k = split(ad.linear(x, p.wk, p.bk))
    v = split(ad.linear(x, p.wv, p.bv))
    scores = ad.matmul(q, ad.permute(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(d))
    attn = ad.softmax(ad.masked_fill(scores, mask.blocked, -np.inf), axis=-1)
    z = ad.reshape(ad.permute(ad.matmul(attn, v), (0, 2, 1, 3)), (B, L, C))
    f_bar = f + ad.linear(z, p.wo, p.bo)
    y = ad.layer_norm(f_bar, p.norm2_gamma, p.norm2_beta, epsilon)
    y = ad.linear(ad.relu(ad.linear(y, p.w1, p.b1)), p.w2, p.b2)
    return f_bar + y


def spatial_mix(f, p: MixerParams, padding: str = "zeros"):
    """Residual conv units, then a two-level pyramid merge when ``p.lateral`` is set."""
    x = ad.as_tensor(f)
    for unit in p.units:
        h = ad.relu(ad.conv3d(x, unit.conv_a.weight, unit.conv_a.bias, padding))
        x = x + ad.conv3d(h, unit.conv_b.weight, unit.conv_b.bias, padding)
    if p.lateral is not None:
        if min(x.shape[:3]) < 2:
            raise ConfigError(
                f"pyramid level needs every extent >= 2, got {x.shape[:3]}; disable the pyramid")
        coarse = ad.conv3d(downsample2(x), p.lateral.weight, p.lateral.bias, padding)
        x = x + resize_trilinear(coarse, x.shape[:3])
    return x


def fuse_tri_features(f_dep, f_wid, f_hgt, p: FusionParams, return_weights=False):
    """Voxelwise softmax-weighted sum of the three branch volumes."""
    fs = [ad.as_tensor(v) for v in (f_dep, f_wid, f_hgt)]
    if not fs[0].shape == fs[1].shape == fs[2].shape:
        raise ConfigError(f"branch shapes differ: {[t.shape for t in fs]}")
    w = ad.softmax(ad.linear(ad.concat(fs, axis=-1), p.weight, p.bias), axis=-1)
    out = None
    for i, t in enumerate(fs):
        term = w[..., i:i + 1] * t
        out = term if out is None else out + term
    return (out, w) if return_weights else out


def predict_head(f, p: HeadParams, factors=(1, 1, 1), padding="zeros", epsilon=1e-5):
    """Conv -> layer norm -> linear -> trilinear upsampling to the target grid."""
    x = ad.conv3d(f, p.conv.weight, p.conv.bias, padding)
    x = ad.layer_norm(x, p.norm_gamma, p.norm_beta, epsilon)
    x = ad.linear(x, p.weight, p.bias)
    return upsample_trilinear(x, factors)


def branch_params(params: ScanModuleParams, axis: str) -> BranchParams:
    return params.branches[axis] if axis in params.branches else params.branches[AXES[0]]


def scan_branch(f, axis, mask, bp: BranchParams, cfg: ScanModuleConfig):
    seq = scan_block(flatten_for_axis(f, axis), mask, bp.block, cfg.heads, cfg.epsilon)
    vol = unflatten_for_axis(seq, axis, f.shape)
    return spatial_mix(vol, bp.mixer, cfg.padding)


def scan_module_forward(f, masks: dict, params: ScanModuleParams,
                        cfg: ScanModuleConfig = ScanModuleConfig()):
    """Three axis branches fused voxelwise; disabled branches pass ``f`` through.

    With every branch disabled the module is the identity.
    """
    f = ad.as_tensor(f)
    if not cfg.enabled:
        return f
    outs = [scan_branch(f, a, masks[a], branch_params(params, a), cfg) if a in cfg.enabled else f
            for a in AXES]
    return fuse_tri_features(*outs, params.fusion)
