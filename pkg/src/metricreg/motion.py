"""Features derived from landmark motion recordings."""

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .curves import SampledCurve
from .exceptions import ConstantMarkerWarning, DegenerateShape, DimensionMismatch, NoConvergence, ValidationError
from .shapes import _full_distances, _preshape, _rotate_onto, gpa

__all__ = [
    "MotionRecord",
    "MotionFeatures",
    "motion_features",
    "remove_head_motion",
    "motion_corrmats",
    "motion_to_corrmat",
    "load_motion_csv",
    "save_motion_csv",
]


@dataclass(frozen=True, eq=False)
class MotionRecord:
    """A ``(T, k, m)`` landmark trajectory for one subject."""

    subject: str
    frames: np.ndarray

    def __post_init__(self):
        fr = np.asarray(self.frames, dtype=float)
        if fr.ndim != 3:
            raise DimensionMismatch(f"frames must be (T, k, m), got shape {fr.shape}")
        if fr.shape[0] < 2:
            raise ValidationError("a motion needs at least two frames")
        if not np.all(np.isfinite(fr)):
            raise DegenerateShape("motion has non-finite coordinates")
        object.__setattr__(self, "frames", fr)
        object.__setattr__(self, "subject", str(self.subject))

    @property
    def T(self):
        return self.frames.shape[0]


@dataclass(frozen=True)
class MotionFeatures:
    initial: np.ndarray
    maximal: np.ndarray
    curve: SampledCurve
    speed: float


def _smoothed_speed(values, window):
    if len(values) >= window + 2:
        values = np.convolve(values, np.ones(window) / window, mode="valid")
    if len(values) < 3:
        return float(np.abs(np.diff(values)).max(initial=0.0))
    return float(((values[2:] - values[:-2]) / 2).max())


def motion_features(rec, n_initial=10, window=5):
    """Initial pose, maximal pose, distance curve and peak speed.

    The initial pose is the mean of the first ``n_initial`` frames. The
    curve holds each frame's full Procrustes distance to it on a uniform
    grid over [0, 1]; the maximal pose is the first frame reaching the
    curve's maximum. Speed is the largest centered difference (per frame)
    of the curve after a ``window``-point moving average.
    """
    frames = rec.frames
    initial = frames[: min(n_initial, rec.T)].mean(axis=0)
    P = np.stack([_preshape(f, index=i) for i, f in enumerate(frames)])
    d = _full_distances(_preshape(initial), P)
    t = np.arange(rec.T) / (rec.T - 1)
    t[-1] = 1.0
    return MotionFeatures(
        initial=initial,
        maximal=frames[int(np.argmax(d))].copy(),
        curve=SampledCurve(t, d),
        speed=_smoothed_speed(d, window),
    )


def remove_head_motion(rec, tol=1e-9, max_iter=100):
    """Rigid GPA over the frames of one record (translation and rotation only)."""
    try:
        res = gpa(list(rec.frames), tol=tol, max_iter=max_iter, scale=False)
    except NoConvergence as err:
        res = err.last
    return np.stack(res.aligned), res.mean


def _rigid_reference(means):
    ref = means[0]
    for _ in range(20):
        R, _ = _rotate_onto(means, np.broadcast_to(ref, means.shape))
        new = np.einsum("nki,nij->nkj", means, R).mean(axis=0)
        if np.abs(new - ref).max() < 1e-12:
            break
        ref = new
    return ref


def motion_corrmats(records, reference=None, remove_rigid=True):
    """Marker-score correlation matrix for every record.

    Each record has whole-head motion removed by rigid GPA and is rotated
    onto ``reference`` (default: rigid average of the records' mean
    poses). Marker trajectories are shifted to start at the origin, a
    first principal axis is fitted per marker on the pooled trajectories
    of all records, and each record's ``T x k`` projections are turned
    into a Pearson correlation matrix. A constant projection column gets
    zero correlations (unit diagonal) and a warning.
    """
    records = list(records)
    if len(records) < 2:
        raise ValidationError("pooling needs at least two records")
    shapes = {r.frames.shape[1:] for r in records}
    if len(shapes) > 1:
        raise DimensionMismatch(f"records have mixed landmark shapes: {sorted(shapes)}")
    trajs, means = [], []
    for rec in records:
        if remove_rigid:
            aligned, mean = remove_head_motion(rec)
        else:
            aligned = rec.frames - rec.frames.mean(axis=(0, 1))
            mean = aligned.mean(axis=0)
        trajs.append(aligned)
        means.append(mean)
    means = np.stack(means)
    if reference is None:
        reference = _rigid_reference(means)
    reference = np.asarray(reference, dtype=float)
    reference = reference - reference.mean(axis=0)
    R, _ = _rotate_onto(means, np.broadcast_to(reference, means.shape))
    trajs = [tr @ R[i] for i, tr in enumerate(trajs)]
    trajs = [tr - tr[0] for tr in trajs]
    k = trajs[0].shape[1]
    pooled = np.concatenate(trajs, axis=0)
    axes = []
    for j in range(k):
        X = pooled[:, j, :]
        _, _, Vt = np.linalg.svd(X - X.mean(axis=0), full_matrices=False)
        u = Vt[0]
        if (X @ u).mean() < 0:
            u = -u
        axes.append(u)
    axes = np.stack(axes)
    out = []
    for rec, tr in zip(records, trajs):
        scores = np.einsum("tkm,km->tk", tr, axes)
        out.append(_score_correlation(scores, rec.subject))
    return out


def _score_correlation(scores, subject):
    sd = scores.std(axis=0)
    const = sd <= 1e-12 * max(float(np.abs(scores).max(initial=0.0)), 1.0)
    if const.any():
        warnings.warn(
            f"subject {subject}: {int(const.sum())} constant marker score(s); correlations set to 0",
            ConstantMarkerWarning,
            stacklevel=3,
        )
    Z = np.zeros_like(scores)
    live = ~const
    Z[:, live] = (scores[:, live] - scores[:, live].mean(axis=0)) / sd[live]
    C = Z.T @ Z / len(scores)
    C = np.clip((C + C.T) / 2, -1.0, 1.0)
    np.fill_diagonal(C, 1.0)
    return C


def motion_to_corrmat(rec, all_recs, reference=None, remove_rigid=True):
    """Correlation matrix for ``rec`` with axes pooled over ``all_recs``."""
    all_recs = list(all_recs)
    idx = next((i for i, r in enumerate(all_recs) if r is rec), None)
    if idx is None:
        all_recs = [rec] + all_recs
        idx = 0
    return motion_corrmats(all_recs, reference, remove_rigid)[idx]


def load_motion_csv(path):
    """Read ``subject,frame,marker,x,y,z`` rows into :class:`MotionRecord` objects."""
    data = {}
    order = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        dims = [c for c in ("x", "y", "z") if c in reader.fieldnames]
        for row in reader:
            sid = row["subject"]
            if sid not in data:
                data[sid] = {}
                order.append(sid)
            data[sid][(int(row["frame"]), int(row["marker"]))] = [float(row[c]) for c in dims]
    records = []
    for sid in order:
        cells = data[sid]
        frames = sorted({f for f, _ in cells})
        markers = sorted({m for _, m in cells})
        arr = np.full((len(frames), len(markers), len(dims)), np.nan)
        fi = {f: i for i, f in enumerate(frames)}
        mi = {m: i for i, m in enumerate(markers)}
        for (f, m), xyz in cells.items():
            arr[fi[f], mi[m]] = xyz
        if np.isnan(arr).any():
            raise ValidationError(f"subject {sid!r} has missing frame/marker rows")
        records.append(MotionRecord(sid, arr))
    return records


def save_motion_csv(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        m = records[0].frames.shape[2]
        w.writerow(["subject", "frame", "marker"] + ["x", "y", "z"][:m])
        for rec in records:
            for f, frame in enumerate(rec.frames):
                for j, xyz in enumerate(frame):
                    w.writerow([rec.subject, f, j] + [repr(float(v)) for v in xyz])
