"""Pure-Python/numpy twins of the compiled kernels in ``_ckernels.pyx``.

Arithmetic is written in the same order as the compiled code so both
backends produce bit-identical results.
"""

from __future__ import annotations

import numpy as np


def warp_bilinear(src: np.ndarray, hinv: np.ndarray, out_h: int, out_w: int, eps: float = 1e-9):
    src = np.ascontiguousarray(src, dtype=np.float32)
    nb, sh, sw = src.shape
    out = np.full((nb, out_h, out_w), np.nan, dtype=np.float32)
    mask = np.zeros((out_h, out_w), dtype=np.uint8)
    if out_h == 0 or out_w == 0:
        return out, mask

    yd, xd = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    h = hinv
    w = h[2, 0] * xd + h[2, 1] * yd + h[2, 2]
    finite_w = np.abs(w) >= 1e-12
    w = np.where(finite_w, w, 1.0)
    with np.errstate(invalid="ignore", over="ignore"):
        sx = (h[0, 0] * xd + h[0, 1] * yd + h[0, 2]) / w
        sy = (h[1, 0] * xd + h[1, 1] * yd + h[1, 2]) / w
    xmax, ymax = float(sw - 1), float(sh - 1)
    ok = finite_w & (sx >= -eps) & (sx <= xmax + eps) & (sy >= -eps) & (sy <= ymax + eps)

    ys, xs = np.nonzero(ok)
    sx = np.clip(sx[ok], 0.0, xmax)
    sy = np.clip(sy[ok], 0.0, ymax)
    x0 = np.clip(np.floor(sx).astype(np.intp), 0, max(sw - 2, 0))
    y0 = np.clip(np.floor(sy).astype(np.intp), 0, max(sh - 2, 0))
    x1 = x0 + 1 if sw > 1 else x0
    y1 = y0 + 1 if sh > 1 else y0
    fx = sx - x0
    fy = sy - y0
    gx = 1.0 - fx
    gy = 1.0 - fy

    finite = np.ones(len(ys), dtype=bool)
    flat = src.reshape(nb, -1)
    i00, i01, i10, i11 = y0 * sw + x0, y0 * sw + x1, y1 * sw + x0, y1 * sw + x1
    for b in range(nb):
        p = flat[b]
        v = ((p[i00].astype(np.float64) * gx + p[i01].astype(np.float64) * fx) * gy
             + (p[i10].astype(np.float64) * gx + p[i11].astype(np.float64) * fx) * fy)
        out[b, ys, xs] = v.astype(np.float32)
        finite &= ~np.isnan(v)
    out[:, ys[~finite], xs[~finite]] = np.nan
    mask[ys, xs] = finite
    return out, mask


def max_rectangle(valid: np.ndarray):
    """Largest all-valid rectangle; returns (area, x0, y0, width, height).

    Row-by-row histogram of run heights, each row solved with the
    monotone-stack largest-rectangle-in-histogram scan.
    """
    valid = np.asarray(valid, dtype=bool)
    h, w = valid.shape
    heights = [0] * (w + 1)
    best = (0, 0, 0, 0, 0)
    for y in range(h):
        row = valid[y].tolist()
        for x in range(w):
            heights[x] = heights[x] + 1 if row[x] else 0
        stack: list[int] = []
        for x in range(w + 1):
            hgt = heights[x]
            while stack and heights[stack[-1]] >= hgt:
                bar = heights[stack.pop()]
                left = stack[-1] + 1 if stack else 0
                width = x - left
                area = bar * width
                if area == 0:
                    continue
                y0 = y - bar + 1
                ba, bx, by, bw, _ = best
                if area > ba or (area == ba and (y0, left, -width) < (by, bx, -bw)):
                    best = (area, left, y0, width, bar)
            stack.append(x)
    return best
