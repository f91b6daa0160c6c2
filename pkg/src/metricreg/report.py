"""JSON summaries and static SVG figures for fitted models.

Output is deterministic: no timestamps, fixed float formatting and
sorted JSON keys, so identical fits give byte-identical files.
"""

import json
import os
from xml.sax.saxutils import escape

import numpy as np

from .shapes import opa_align

__all__ = [
    "to_plain",
    "dump_json",
    "svg_arrows",
    "svg_curves",
    "svg_heatmap",
    "explanation_summary",
    "render_report",
]

_W, _H, _PAD = 420, 320, 30


def to_plain(obj):
    """Recursively convert numpy containers and scalars to JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dump_json(obj, path):
    text = json.dumps(to_plain(obj), indent=1, sort_keys=True)
    with open(path, "w") as fh:
        fh.write(text + "\n")
    return text


def _f(x):
    return f"{x:.3f}"


def _svg(body, title, width=_W, height=_H):
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
        f'<text x="{width / 2}" y="16" font-size="12" text-anchor="middle" font-family="sans-serif">{escape(title)}</text>\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def _frame(points):
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    s = min((_W - 2 * _PAD) / span[0], (_H - 2 * _PAD) / span[1])

    def tx(p):
        return _PAD + (p[0] - lo[0]) * s, _H - _PAD - (p[1] - lo[1]) * s

    return tx


def svg_arrows(base, moved, path=None, title="", min_length=1e-9):
    """Arrows from each landmark of ``base`` to ``moved`` (first two coordinates).

    Arrows shorter than ``min_length`` in data units are drawn as dots.
    """
    base = np.asarray(base, dtype=float)[:, :2]
    moved = np.asarray(moved, dtype=float)[:, :2]
    tx = _frame(np.vstack([base, moved]))
    body = [
        '<defs><marker id="head" markerWidth="6" markerHeight="6" refX="5" refY="3" orient="auto">'
        '<path d="M0,0 L6,3 L0,6 z" fill="black"/></marker></defs>'
    ]
    for a, b in zip(base, moved):
        x0, y0 = tx(a)
        if np.linalg.norm(b - a) < min_length:
            body.append(f'<circle cx="{_f(x0)}" cy="{_f(y0)}" r="2.5" fill="black"/>')
            continue
        x1, y1 = tx(b)
        body.append(
            f'<line x1="{_f(x0)}" y1="{_f(y0)}" x2="{_f(x1)}" y2="{_f(y1)}" '
            'stroke="black" stroke-width="1.2" marker-end="url(#head)"/>'
        )
    text = _svg(body, title)
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _polyline(t, f, tx, style):
    pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in (tx((a, b)) for a, b in zip(t, f)))
    return f'<polyline points="{pts}" fill="none" {style}/>'


def svg_curves(data, centroid=None, perturbations=(), path=None, title=""):
    """Data curves in gray, centroid solid, perturbations dashed."""
    allv = [c.f for c in data] + ([centroid.f] if centroid is not None else []) + [p.f for p in perturbations if p is not None]
    top = max(float(np.max(v)) for v in allv) if allv else 1.0
    tx = _frame(np.array([[0.0, 0.0], [1.0, top if top > 0 else 1.0]]))
    body = [_polyline(c.t, c.f, tx, 'stroke="#bbbbbb" stroke-width="0.8"') for c in data]
    if centroid is not None:
        body.append(_polyline(centroid.t, centroid.f, tx, 'stroke="black" stroke-width="2"'))
    for p in perturbations:
        if p is not None:
            body.append(_polyline(p.t, p.f, tx, 'stroke="black" stroke-width="1.5" stroke-dasharray="6,4"'))
    text = _svg(body, title)
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _diverging(v):
    # v in [-1, 1]: blue for negative, white at zero, red for positive.
    v = float(np.clip(v, -1.0, 1.0))
    if v >= 0:
        r, g, b = 255, round(255 * (1 - v)), round(255 * (1 - v))
    else:
        r, g, b = round(255 * (1 + v)), round(255 * (1 + v)), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def svg_heatmap(matrix, path=None, title="", vmax=None):
    """Heatmap on a symmetric diverging scale centered at zero."""
    M = np.asarray(matrix, dtype=float)
    m = M.shape[0]
    scale = float(np.abs(M).max()) if vmax is None else float(vmax)
    scale = scale if scale > 0 else 1.0
    cell = min((_W - 2 * _PAD) / m, (_H - 2 * _PAD) / m)
    body = []
    for i in range(m):
        for j in range(m):
            body.append(
                f'<rect x="{_f(_PAD + j * cell)}" y="{_f(_PAD + i * cell)}" width="{_f(cell)}" '
                f'height="{_f(cell)}" fill="{_diverging(M[i, j] / scale)}"/>'
            )
    body.append(f'<text x="{_W - _PAD}" y="{_H - 8}" font-size="10" text-anchor="end" font-family="sans-serif">scale ±{scale:.3g}</text>')
    text = _svg(body, title)
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def explanation_summary(ex):
    return {
        "component": ex.component,
        "c": ex.c,
        "amplification": ex.amplification,
        "predictor_targets": ex.predictor_targets,
        "response_targets": ex.response_targets,
        "errors": dict(sorted(ex.errors.items())),
    }


def _figures(space, centroid, pair, objects, stem, out_dir, label):
    written = []
    plus, minus = pair
    if space == "shape":
        for side, obj in (("plus", plus), ("minus", minus)):
            if obj is None:
                continue
            p = os.path.join(out_dir, f"{stem}_{side}.svg")
            base = opa_align(centroid, centroid)[0]
            moved = opa_align(obj, centroid)[0]
            svg_arrows(base, moved, p, f"{label}: mean to {side} perturbation")
            written.append(p)
    elif space == "curve":
        p = os.path.join(out_dir, f"{stem}_curves.svg")
        svg_curves(objects, centroid, [plus, minus], p, f"{label}: data, centroid and perturbations")
        written.append(p)
    elif space == "corr":
        p = os.path.join(out_dir, f"{stem}_mean.svg")
        svg_heatmap(centroid, p, f"{label}: centroid", vmax=1.0)
        written.append(p)
        if plus is not None and minus is not None:
            p = os.path.join(out_dir, f"{stem}_contrast.svg")
            svg_heatmap(np.asarray(plus) - np.asarray(minus), p, f"{label}: contrast, plus side less minus side")
            written.append(p)
    return written


def render_report(model, out_dir, explanations=(), permutation=None):
    """Write ``summary.json`` and per-explanation SVG figures; return the paths."""
    os.makedirs(out_dir, exist_ok=True)
    summary = model.summary()
    if permutation is not None:
        summary["permutation"] = permutation.to_dict()
    summary["explanations"] = [explanation_summary(ex) for ex in explanations]
    paths = [os.path.join(out_dir, "summary.json")]
    dump_json(summary, paths[0])
    for ex in explanations:
        stem = f"component{ex.component}"
        if model.x_space_.name != "euclidean":
            paths += _figures(
                model.x_space_.name, model.x_context_.centroid, ex.predictors, model.X_,
                f"{stem}_predictor", out_dir, "predictor",
            )
        paths += _figures(
            model.y_space_.name, model.y_context_.centroid, ex.responses, model.Y_,
            f"{stem}_response", out_dir, "response",
        )
    return paths
