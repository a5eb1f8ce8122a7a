"""Coarse-to-fine reconstruction network.

A convolutional extractor turns the coarse space-time window (4 variables
on the sampled grid) into a feature volume at coarse resolution; a
pointwise MLP then maps interpolated features plus normalized space-time
coordinates to the four field values at any query point.  The whole model
is float64: training signals are small once the data term converges, and
the physics residual needs clean second derivatives.

Geometry conventions: x is periodic with period ``lx`` (circular conv
padding and wraparound feature interpolation), y is wall-bounded (zero
conv padding, clamped interpolation), the window time axis is normalized
to [0, 1] (replicate conv padding, clamped interpolation).  Feature cells
are anchored at coarse cell centers.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .config import SurrogateConfig

__all__ = ["SurrogateModel", "build_model", "ShapeError"]


class ShapeError(ValueError):
    pass


def pad_mixed(x: torch.Tensor, pt: int, py: int, px: int) -> torch.Tensor:
    """Pad (B, C, T, Y, X): circular in x, zeros in y, replicate in t."""
    if px:
        x = torch.cat([x[..., -px:], x, x[..., :px]], dim=-1)
    if py:
        x = F.pad(x, (0, 0, py, py))
    if pt:
        x = F.pad(x, (0, 0, 0, 0, pt, pt), mode="replicate")
    return x


class MixedConv(nn.Module):
    """3x3x3 (or kxkxk) convolution under the mixed padding rule."""

    def __init__(self, c_in: int, c_out: int, k: int = 3):
        super().__init__()
        self.pad = k // 2
        self.conv = nn.Conv3d(c_in, c_out, k)

    def forward(self, x):
        p = self.pad
        return self.conv(pad_mixed(x, p, p, p))


class InceptionBlock(nn.Module):
    """Parallel 1/3/5 receptive-field branches, concatenated."""

    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        c1 = c_out // 4
        c3 = c_out // 2
        c5 = c_out - c1 - c3
        self.b1 = MixedConv(c_in, c1, 1)
        self.b3 = MixedConv(c_in, c3, 3)
        self.b5 = MixedConv(c_in, c5, 5)

    def forward(self, x):
        return F.gelu(torch.cat([self.b1(x), self.b3(x), self.b5(x)], dim=1))


class PlainBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.conv = MixedConv(c_in, c_out, 3)

    def forward(self, x):
        return F.gelu(self.conv(x))


class FeatureExtractor(nn.Module):
    """Multi-level encoder over the coarse window, fused back to a
    feature volume at the input resolution."""

    def __init__(self, cfg: SurrogateConfig):
        super().__init__()
        block = InceptionBlock if cfg.inception else PlainBlock
        chans = cfg.channels
        self.levels = len(chans)
        self.stem = MixedConv(4, chans[0], 3)
        self.down = nn.ModuleList(
            [block(chans[0], chans[0])]
            + [block(chans[i - 1], chans[i]) for i in range(1, self.levels)]
        )
        self.fuse = nn.ModuleList(
            [MixedConv(chans[i] + chans[i + 1], chans[i], 3)
             for i in range(self.levels - 1)]
        )
        self.head = nn.Conv3d(chans[0], cfg.feature_dim, 1)

    def forward(self, x):
        # x: (B, 4, T, Y, X) already normalized
        div = 1 << (self.levels - 1)
        if x.shape[-1] % div or x.shape[-2] % div:
            raise ShapeError(
                f"coarse grid {x.shape[-2]}x{x.shape[-1]} not divisible by "
                f"{div} for {self.levels} levels"
            )
        h = F.gelu(self.stem(x))
        skips = []
        for i, block in enumerate(self.down):
            if i > 0:
                h = F.avg_pool3d(h, kernel_size=(1, 2, 2))
            h = block(h)
            skips.append(h)
        h = skips[-1]
        for i in range(self.levels - 2, -1, -1):
            h = F.interpolate(h, scale_factor=(1, 2, 2), mode="nearest")
            h = F.gelu(self.fuse[i](torch.cat([h, skips[i]], dim=1)))
        return self.head(h)


class QueryMLP(nn.Module):
    """Pointwise decoder: features and coordinates enter the first hidden
    layer and are re-concatenated into every later hidden layer except the
    final one."""

    def __init__(self, cfg: SurrogateConfig):
        super().__init__()
        z_dim = cfg.feature_dim + 3
        widths = cfg.mlp_hidden
        layers = [nn.Linear(z_dim, widths[0])]
        for i in range(1, len(widths)):
            # middle layers take [h, z]; the final hidden layer takes h alone
            extra = z_dim if i < len(widths) - 1 else 0
            layers.append(nn.Linear(widths[i - 1] + extra, widths[i]))
        self.hidden = nn.ModuleList(layers)
        self.out = nn.Linear(widths[-1], 4)

    def forward(self, z):
        h = torch.tanh(self.hidden[0](z))
        n = len(self.hidden)
        for i in range(1, n):
            if i < n - 1:
                h = torch.tanh(self.hidden[i](torch.cat([h, z], dim=-1)))
            else:
                h = torch.tanh(self.hidden[i](h))
        return self.out(h)


def _sample_volume(feats: torch.Tensor, gx, gy, gt) -> torch.Tensor:
    """Trilinear sample of (C, T, Y, X) at fractional grid coordinates.

    Wraps in x, clamps in y and t.  Pure tensor arithmetic, so autograd
    provides exact derivatives of any order with respect to the query
    coordinates (piecewise in the interpolation weights).
    """
    C, D, H, W = feats.shape
    flat = feats.reshape(C, D * H * W)

    x0f = torch.floor(gx.detach())
    y0f = torch.floor(gy.detach())
    t0f = torch.floor(gt.detach())
    wx = gx - x0f
    wy = (gy - y0f).clamp(0.0, 1.0)
    wt = (gt - t0f).clamp(0.0, 1.0)

    ix0 = x0f.long() % W
    ix1 = (x0f.long() + 1) % W
    iy0 = y0f.long().clamp(0, H - 1)
    iy1 = (y0f.long() + 1).clamp(0, H - 1)
    it0 = t0f.long().clamp(0, D - 1)
    it1 = (t0f.long() + 1).clamp(0, D - 1)

    def corner(it, iy, ix):
        return flat[:, (it * H + iy) * W + ix]

    c000 = corner(it0, iy0, ix0)
    c001 = corner(it0, iy0, ix1)
    c010 = corner(it0, iy1, ix0)
    c011 = corner(it0, iy1, ix1)
    c100 = corner(it1, iy0, ix0)
    c101 = corner(it1, iy0, ix1)
    c110 = corner(it1, iy1, ix0)
    c111 = corner(it1, iy1, ix1)

    w000 = (1 - wt) * (1 - wy) * (1 - wx)
    w001 = (1 - wt) * (1 - wy) * wx
    w010 = (1 - wt) * wy * (1 - wx)
    w011 = (1 - wt) * wy * wx
    w100 = wt * (1 - wy) * (1 - wx)
    w101 = wt * (1 - wy) * wx
    w110 = wt * wy * (1 - wx)
    w111 = wt * wy * wx

    out = (c000 * w000 + c001 * w001 + c010 * w010 + c011 * w011
           + c100 * w100 + c101 * w101 + c110 * w110 + c111 * w111)
    return out.transpose(0, 1)  # (N, C)


class SurrogateModel(nn.Module):
    """Extractor + decoder with the field normalization baked in.

    ``encode`` consumes one raw coarse window (4, T, Y, X); ``query``
    evaluates physical (u, v, T, p) at arbitrary (x, y, t) given the
    window's feature volume and frame times.
    """

    def __init__(self, cfg: SurrogateConfig, field_mean, field_std,
                 lx: float, ly: float):
        super().__init__()
        self.cfg = cfg
        self.extractor = FeatureExtractor(cfg)
        self.mlp = QueryMLP(cfg)
        mean = torch.as_tensor(field_mean, dtype=torch.float64)
        std = torch.as_tensor(field_std, dtype=torch.float64)
        if mean.shape != (4,) or std.shape != (4,):
            raise ShapeError("field stats must have shape (4,)")
        if torch.any(std <= 0):
            raise ShapeError("field stds must be positive")
        self.register_buffer("f_mean", mean)
        self.register_buffer("f_std", std)
        self.register_buffer("domain", torch.tensor([lx, ly],
                                                    dtype=torch.float64))

    @property
    def lx(self) -> float:
        return float(self.domain[0])

    @property
    def ly(self) -> float:
        return float(self.domain[1])

    def encode(self, window: torch.Tensor) -> torch.Tensor:
        """Raw (4, T, Y, X) coarse window to (F, T, Y, X) features."""
        if window.ndim != 4 or window.shape[0] != 4:
            raise ShapeError(f"window shape {tuple(window.shape)} is not "
                             "(4, T, Y, X)")
        w = (window - self.f_mean.view(4, 1, 1, 1)) \
            / self.f_std.view(4, 1, 1, 1)
        return self.extractor(w.unsqueeze(0)).squeeze(0)

    def query(self, feats: torch.Tensor, t0: float, t1: float,
              x: torch.Tensor, y: torch.Tensor,
              t: torch.Tensor) -> torch.Tensor:
        """Physical (N, 4) predictions at points (x, y, t).

        ``t0``/``t1`` are the window's first/last frame times; frames are
        assumed uniformly spaced between them.
        """
        _, D, H, W = feats.shape
        lx, ly = self.domain[0], self.domain[1]
        xn = x / lx
        yn = y / ly
        tn = (t - t0) / (t1 - t0) if t1 > t0 else torch.zeros_like(t)
        gx = xn * W - 0.5
        gy = yn * H - 0.5
        gt = tn * (D - 1) if D > 1 else torch.zeros_like(tn)
        z = torch.cat(
            [_sample_volume(feats, gx, gy, gt),
             xn.unsqueeze(-1), yn.unsqueeze(-1), tn.unsqueeze(-1)],
            dim=-1,
        )
        raw = self.mlp(z)
        return raw * self.f_std + self.f_mean


def build_model(cfg: SurrogateConfig, field_mean, field_std, lx: float,
                ly: float) -> SurrogateModel:
    """Construct a float64 model with seeded parameter initialization."""
    torch.manual_seed(cfg.seed)
    model = SurrogateModel(cfg, field_mean, field_std, lx, ly)
    return model.to(torch.float64)
