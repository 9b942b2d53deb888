"""Deterministic SVG scatter plots of two embedding dimensions.

Axes share one scale so distances in the image are proportional to distances
in the data, and the probe's marginal Gaussians are drawn as Mahalanobis
contours.
"""

import re
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .exceptions import InvalidInput
from .gaussian import marginalize

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
CONTOUR_RADII = (1.0, 2.0)
_ELLIPSE_POINTS = 72


def _ellipse(mean, cov, radius):
    vals, vecs = np.linalg.eigh(cov)
    t = np.linspace(0.0, 2.0 * np.pi, _ELLIPSE_POINTS, endpoint=False)
    circle = np.stack([np.cos(t), np.sin(t)])
    return (mean[:, None] + radius * (vecs * np.sqrt(vals)) @ circle).T


def scatter_svg(model, X_full, labels, dims, width=640, height=640, margin=48, title=None):
    i, j = (int(d) for d in dims)
    if i == j:
        raise InvalidInput("scatter needs two different dimensions")
    for k in (i, j):
        if not 0 <= k < model.dim:
            raise InvalidInput(f"dimension {k} out of range for d={model.dim}")
    X_full = np.asarray(X_full, dtype=np.float64)
    labels = np.asarray(labels).astype(str)
    pts = X_full[:, [i, j]]
    codes = model.schema.encode(labels)

    contours = {}
    for v in model.schema.values:
        g = marginalize(model.gaussians[v], [i, j])
        contours[v] = [_ellipse(g.mean, g.cov, r) for r in CONTOUR_RADII]
    everything = np.vstack([pts] + [c for cs in contours.values() for c in cs])
    lo, hi = everything.min(axis=0), everything.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    scale = min((width - 2 * margin) / span[0], (height - 2 * margin) / span[1])
    center = (lo + hi) / 2.0

    def to_px(p):
        p = np.atleast_2d(p)
        x = width / 2.0 + (p[:, 0] - center[0]) * scale
        y = height / 2.0 - (p[:, 1] - center[1]) * scale
        return np.column_stack([x, y])

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" data-scale="{scale:.9g}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="12">dim {i}</text>')
    out.append(f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 14 {height / 2:.1f})">dim {j}</text>')

    for c, v in enumerate(model.schema.values):
        color = PALETTE[c % len(PALETTE)]
        sel = codes == c
        out.append(f'<g class="points" data-value={quoteattr(v)} fill="{color}" fill-opacity="0.5">')
        for x, y in to_px(pts[sel]) if sel.any() else []:
            out.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="2"/>')
        out.append("</g>")
    for c, v in enumerate(model.schema.values):
        color = PALETTE[c % len(PALETTE)]
        for r, poly in zip(CONTOUR_RADII, contours[v]):
            path = " ".join(f"{x:.3f},{y:.3f}" for x, y in to_px(poly))
            out.append(f'<polygon class="contour" data-value={quoteattr(v)} data-radius="{r:g}" '
                       f'points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
    for c, v in enumerate(model.schema.values):
        y = margin / 2 + 16 * c + 16
        out.append(f'<circle cx="{width - 120}" cy="{y - 4}" r="4" fill="{PALETTE[c % len(PALETTE)]}"/>')
        out.append(f'<text x="{width - 110}" y="{y}" font-size="12">{escape(v)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


_GROUP = re.compile(r'<g class="points" data-value="([^"]*)"[^>]*>(.*?)</g>', re.S)
_CIRCLE = re.compile(r'<circle cx="([-0-9.e]+)" cy="([-0-9.e]+)"')


def read_svg_points(svg):
    """Plotted point coordinates per value, as ``{value: array (n, 2)}``."""
    out = {}
    for value, body in _GROUP.findall(svg):
        coords = [(float(x), float(y)) for x, y in _CIRCLE.findall(body)]
        out[value] = np.array(coords, dtype=np.float64).reshape(-1, 2)
    return out


def centroid_separation(points_a, points_b):
    """Centroid distance over the mean within-class std along the connecting axis."""
    ca, cb = points_a.mean(axis=0), points_b.mean(axis=0)
    axis = cb - ca
    dist = float(np.linalg.norm(axis))
    if dist == 0:
        return 0.0
    axis /= dist
    std = 0.5 * (np.std(points_a @ axis) + np.std(points_b @ axis))
    return dist / std if std > 0 else float("inf")
