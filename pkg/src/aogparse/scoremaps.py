"""Terminal-sensitive score maps and sub-grid average pooling.

Each Terminal node of a bound graph owns a 1x1 linear head mapping the
D-channel input feature map to a C-channel score map; a region of
interest (RoI) is split into grid cells and the score vector of a
Terminal is the average of its map over the pixel span of the Terminal's
sub-grid.  Because both steps are linear over the same span,
pool(conv(x)) == head(mean-pooled x); both paths are provided and tested
for equality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericError, ParameterError
from .grammar import Aog, Rect


@dataclass(frozen=True)
class Roi:
    """Feature-map pixel box, inclusive-exclusive, with optional label."""

    x0: int
    y0: int
    x1: int
    y1: int
    label: int | None = None

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ParameterError(f"degenerate RoI {self}")
        if self.x0 < 0 or self.y0 < 0:
            raise ParameterError(f"negative RoI origin {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0


@dataclass
class TerminalConvParams:
    """One C x D weight block and C bias per Terminal node."""

    terminal_ids: tuple[int, ...]
    weight: np.ndarray  # (T, C, D)
    bias: np.ndarray    # (T, C)

    def __post_init__(self):
        self.index = {tid: i for i, tid in enumerate(self.terminal_ids)}

    @property
    def num_classes(self) -> int:
        return self.weight.shape[1]

    @property
    def feature_channels(self) -> int:
        return self.weight.shape[2]

    def row(self, terminal_id: int) -> int:
        if terminal_id not in self.index:
            raise DataError(f"terminal {terminal_id} has no parameters")
        return self.index[terminal_id]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.weight.ravel(), self.bias.ravel()])

    def set_flat(self, values: np.ndarray) -> None:
        nw = self.weight.size
        self.weight = values[:nw].reshape(self.weight.shape).copy()
        self.bias = values[nw:].reshape(self.bias.shape).copy()

    def copy(self) -> "TerminalConvParams":
        return TerminalConvParams(self.terminal_ids, self.weight.copy(),
                                  self.bias.copy())


@dataclass
class TerminalScoreMaps:
    terminal_ids: tuple[int, ...]
    maps: np.ndarray  # (T, C, H, W)

    def __post_init__(self):
        self.index = {tid: i for i, tid in enumerate(self.terminal_ids)}

    def for_terminal(self, terminal_id: int) -> np.ndarray:
        return self.maps[self.index[terminal_id]]


def init_params(aog: Aog, d: int, c: int, seed: int,
                stddev: float = 0.01) -> TerminalConvParams:
    """Gaussian(0, stddev^2) weights, zero biases, reproducible per seed."""
    if d < 1 or c < 1:
        raise ParameterError(f"D and C must be >= 1, got D={d} C={c}")
    tids = tuple(aog.terminal_ids)
    rng = np.random.default_rng(seed)
    weight = rng.normal(0.0, 1.0, size=(len(tids), c, d)) * stddev
    bias = np.zeros((len(tids), c))
    return TerminalConvParams(tids, weight, bias)


def compute_terminal_maps(feature: np.ndarray,
                          params: TerminalConvParams) -> TerminalScoreMaps:
    """F(v)[c,y,x] = sum_d W_v[c,d] * feature[d,y,x] + b_v[c]."""
    if feature.ndim != 3:
        raise DataError(f"feature must be D x H x W, got shape {feature.shape}")
    if feature.shape[0] != params.feature_channels:
        raise DataError(
            f"feature has {feature.shape[0]} channels, params expect "
            f"{params.feature_channels}")
    maps = np.einsum("tcd,dhw->tchw", params.weight, feature)
    maps += params.bias[:, :, None, None]
    return TerminalScoreMaps(params.terminal_ids, maps)


def cell_pixel_span(roi: Roi, grid_w: int, grid_h: int,
                    rect: Rect) -> tuple[int, int, int, int]:
    """Pixel span (y0, y1, x0, x1) of a sub-grid rect inside a RoI.

    Cell boundaries follow the R-FCN bin convention: floor for starts,
    ceil for ends, scaled by roi-extent/grid; a span that rounds empty
    is clamped to one pixel.
    """
    if not (0 <= rect.x and rect.x + rect.w <= grid_w
            and 0 <= rect.y and rect.y + rect.h <= grid_h):
        raise ParameterError(f"rect {rect} outside {grid_w}x{grid_h} grid")
    x0 = roi.x0 + int(np.floor(rect.x * roi.width / grid_w))
    x1 = roi.x0 + int(np.ceil((rect.x + rect.w) * roi.width / grid_w))
    y0 = roi.y0 + int(np.floor(rect.y * roi.height / grid_h))
    y1 = roi.y0 + int(np.ceil((rect.y + rect.h) * roi.height / grid_h))
    if x1 <= x0:
        x1 = min(x0 + 1, roi.x1)
        x0 = x1 - 1
    if y1 <= y0:
        y1 = min(y0 + 1, roi.y1)
        y0 = y1 - 1
    return y0, y1, x0, x1


def _check_roi_bounds(roi: Roi, h: int, w: int) -> None:
    if roi.x1 > w or roi.y1 > h:
        raise DataError(f"RoI {roi} outside {h}x{w} map")


def pool_terminal(maps: TerminalScoreMaps, roi: Roi, aog: Aog,
                  terminal_id: int) -> np.ndarray:
    """Average of F(v) over the pixel span of v's sub-grid: the C-d score."""
    fmap = maps.for_terminal(terminal_id)
    _check_roi_bounds(roi, fmap.shape[1], fmap.shape[2])
    rect = aog.node(terminal_id).rect
    y0, y1, x0, x1 = cell_pixel_span(roi, aog.grid_w, aog.grid_h, rect)
    return fmap[:, y0:y1, x0:x1].mean(axis=(1, 2))


def pooled_feature(feature: np.ndarray, roi: Roi, aog: Aog,
                   terminal_id: int) -> np.ndarray:
    """Span-mean of the raw feature; head(pooled) equals pooled(conv)."""
    _check_roi_bounds(roi, feature.shape[1], feature.shape[2])
    rect = aog.node(terminal_id).rect
    y0, y1, x0, x1 = cell_pixel_span(roi, aog.grid_w, aog.grid_h, rect)
    return feature[:, y0:y1, x0:x1].mean(axis=(1, 2))


def pool_backward(grad: np.ndarray, roi: Roi, aog: Aog, terminal_id: int,
                  grad_map: np.ndarray) -> None:
    """Adjoint of pool_terminal: grad[c]/|span| spread over the span.

    Accumulates into grad_map (C, H, W) in place.
    """
    if grad.shape[0] != grad_map.shape[0]:
        raise DataError(
            f"gradient has {grad.shape[0]} channels, map has {grad_map.shape[0]}")
    _check_roi_bounds(roi, grad_map.shape[1], grad_map.shape[2])
    rect = aog.node(terminal_id).rect
    y0, y1, x0, x1 = cell_pixel_span(roi, aog.grid_w, aog.grid_h, rect)
    grad_map[:, y0:y1, x0:x1] += grad[:, None, None] / ((y1 - y0) * (x1 - x0))


def conv_backward(grad_maps: np.ndarray, feature: np.ndarray,
                  params: TerminalConvParams
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Adjoint of compute_terminal_maps.

    Returns (grad_weight (T,C,D), grad_bias (T,C), grad_feature (D,H,W)).
    """
    if grad_maps.shape != (len(params.terminal_ids), params.num_classes,
                           feature.shape[1], feature.shape[2]):
        raise DataError(f"grad maps shape {grad_maps.shape} does not match")
    grad_w = np.einsum("tchw,dhw->tcd", grad_maps, feature)
    grad_b = grad_maps.sum(axis=(2, 3))
    grad_f = np.einsum("tchw,tcd->dhw", grad_maps, params.weight)
    return grad_w, grad_b, grad_f


def finite_diff_check(fn, grad: np.ndarray, params: np.ndarray,
                      step: float = 1e-3, max_coords: int | None = None,
                      seed: int = 0) -> float:
    """Max relative error of an analytic gradient vs central differences.

    fn maps a flat parameter vector to a scalar.  When max_coords is set
    and smaller than the parameter count, a seeded random subset of
    coordinates is probed.  Relative error uses max(|a|, |b|, 1e-8) as
    denominator.
    """
    if step <= 0:
        raise ParameterError(f"step must be positive, got {step}")
    params = np.asarray(params, dtype=float)
    coords = np.arange(params.size)
    if max_coords is not None and max_coords < params.size:
        coords = np.random.default_rng(seed).choice(
            params.size, size=max_coords, replace=False)
    worst = 0.0
    for i in coords:
        probe = params.copy()
        probe[i] += step
        hi = fn(probe)
        probe[i] -= 2 * step
        lo = fn(probe)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NumericError(f"non-finite loss while probing coordinate {i}")
        numeric = (hi - lo) / (2 * step)
        analytic = grad.ravel()[i]
        denom = max(abs(numeric), abs(analytic), 1e-8)
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst
