"""Geodesic integration and comparison of curves as point sets."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import cdist

from . import expr as ex
from .geometry import ConnectionField, connection_jets


class GeodesicError(ValueError):
    pass


@dataclass(frozen=True)
class GeodesicProblem:
    start: tuple[float, ...]
    velocity: tuple[float, ...]
    t_end: float
    step: float = 1e-3

    def __post_init__(self):
        if len(self.start) != len(self.velocity):
            raise GeodesicError("start and velocity must have the same dimension")
        if not np.linalg.norm(self.velocity) > 0:
            raise GeodesicError("initial velocity must be nonzero")
        if not (self.t_end > 0 and self.step > 0):
            raise GeodesicError("t_end and step must be positive")
        if self.step > self.t_end:
            raise GeodesicError(f"step {self.step} exceeds t_end {self.t_end}")


@dataclass(frozen=True)
class Curve:
    t: np.ndarray   # (N,)
    x: np.ndarray   # (N, n)
    v: np.ndarray   # (N, n)
    a: np.ndarray   # (N, n) acceleration from the integrating connection
    truncated: bool = False

    def __len__(self):
        return len(self.t)

    def arc_length(self) -> np.ndarray:
        seg = np.linalg.norm(np.diff(self.x, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])

    def write_csv(self, path) -> None:
        n = self.x.shape[1]
        header = ["t"] + [f"x{k}" for k in range(n)] + [f"v{k}" for k in range(n)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for t, x, v in zip(self.t, self.x, self.v):
                w.writerow([f"{val:.17g}" for val in (t, *x, *v)])


def _acceleration(c: ConnectionField):
    n = c.n
    flat = [c.gamma[h][i][j] for h in range(n) for i in range(n) for j in range(n)]
    coeffs = ex.compile_many(flat)

    def accel(x, v):
        gam = np.asarray(coeffs(x)).reshape(n, n, n)
        return -((gam @ v) @ v)

    return accel


def integrate(c: ConnectionField, prob: GeodesicProblem) -> Curve:
    """Classical RK4 for ``x'' = -Gamma(x)(x', x')`` with a fixed step.

    Stops early with ``truncated=True`` once a step lands outside the chart.
    """
    chart = c.chart
    x = np.asarray(prob.start, dtype=float)
    v = np.asarray(prob.velocity, dtype=float)
    if x.shape != (chart.n,):
        raise GeodesicError(f"start must have {chart.n} coordinates")
    lo, hi = np.array(chart.lo), np.array(chart.hi)
    if not (np.all(x > lo) and np.all(x < hi)):
        raise GeodesicError(f"start {x.tolist()} is not strictly inside the chart")
    accel = _acceleration(c)

    nsteps = max(1, math.ceil(prob.t_end / prob.step - 1e-9))
    times = [0.0]
    xs, vs = [x], [v]
    try:
        acc = [accel(x, v)]
    except ex.DomainError as err:
        raise GeodesicError(f"evaluation failed at t=0: {err}") from err
    truncated = False
    t = 0.0
    for k in range(1, nsteps + 1):
        t_next = prob.t_end if k == nsteps else k * prob.step
        h = t_next - t
        try:
            k1x, k1v = v, acc[-1]
            k2x = v + 0.5 * h * k1v
            k2v = accel(x + 0.5 * h * k1x, k2x)
            k3x = v + 0.5 * h * k2v
            k3v = accel(x + 0.5 * h * k2x, k3x)
            k4x = v + h * k3v
            k4v = accel(x + h * k3x, k4x)
            x_new = x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
            v_new = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
            if not (np.all(x_new >= lo) and np.all(x_new <= hi)):
                truncated = True
                break
            a_new = accel(x_new, v_new)
        except ex.DomainError as err:
            raise GeodesicError(f"evaluation failed near t={t_next}: {err}") from err
        x, v, t = x_new, v_new, t_next
        times.append(t)
        xs.append(x)
        vs.append(v)
        acc.append(a_new)
    return Curve(np.array(times), np.array(xs), np.array(vs), np.array(acc), truncated)


def collinearity_defect(curve: Curve, c: ConnectionField) -> float:
    """How far ``curve`` is from being a geodesic of ``c`` up to reparametrisation.

    At every sample ``D = x'' + Gamma(x)(x', x')``; the part of ``D`` orthogonal
    to ``x'``, scaled by ``|D| + |x'|^2``, is zero exactly for reparametrised
    geodesics.  Returns the maximum over samples.
    """
    v = curve.v
    speed2 = np.einsum("...i,...i->...", v, v)
    if np.any(np.sqrt(speed2) < 1e-12):
        raise GeodesicError("curve velocity degenerates at a sample")
    gam, _ = connection_jets(c, curve.x, check=False)
    D = curve.a + np.einsum("...hij,...i,...j->...h", gam, v, v)
    along = np.einsum("...i,...i->...", D, v) / speed2
    perp = D - along[:, None] * v
    scale = np.linalg.norm(D, axis=1) + speed2
    return float(np.max(np.linalg.norm(perp, axis=1) / scale))


def _point_to_polyline(points: np.ndarray, line: np.ndarray, chunk: int = 256) -> np.ndarray:
    a, b = line[:-1], line[1:]
    d = b - a
    len2 = np.einsum("ij,ij->i", d, d)
    safe = np.where(len2 > 0, len2, 1.0)
    out = np.empty(len(points))
    for start in range(0, len(points), chunk):
        p = points[start:start + chunk]
        rel = p[:, None, :] - a[None, :, :]
        s = np.clip(np.einsum("psi,si->ps", rel, d) / safe, 0.0, 1.0)
        s = np.where(len2 > 0, s, 0.0)
        gap = rel - s[..., None] * d[None, :, :]
        out[start:start + chunk] = np.sqrt(np.min(np.einsum("psi,psi->ps", gap, gap), axis=1))
    return out


def unparametrized_distance(a: Curve, b: Curve) -> float:
    """Symmetric point-to-polyline distance between two curves over their union's diameter."""
    if len(a) < 2 or len(b) < 2:
        raise GeodesicError("both curves need at least two samples")
    one = _point_to_polyline(a.x, b.x).max()
    two = _point_to_polyline(b.x, a.x).max()
    pts = np.vstack([a.x, b.x])
    diameter = cdist(pts, pts).max()
    if diameter == 0:
        return 0.0
    return float(max(one, two) / diameter)


def truncate_length(curve: Curve, length: float) -> Curve:
    """Prefix of ``curve`` with Euclidean arc length ``length``.

    The final sample is linearly interpolated, so only its position is meant
    for point-set comparisons.
    """
    s = curve.arc_length()
    if length >= s[-1]:
        return curve
    k = int(np.searchsorted(s, length, side="right"))
    w = (length - s[k - 1]) / (s[k] - s[k - 1])

    def cut(arr):
        tail = arr[k - 1] + w * (arr[k] - arr[k - 1])
        return np.concatenate([arr[:k], tail[None]]) if arr.ndim > 1 else \
            np.concatenate([arr[:k], [tail]])

    return replace(curve, t=cut(curve.t), x=cut(curve.x), v=cut(curve.v), a=cut(curve.a))


def common_prefix(a: Curve, b: Curve) -> tuple[Curve, Curve]:
    """Trim two curves from a common start to the same arc length."""
    length = min(a.arc_length()[-1], b.arc_length()[-1])
    return truncate_length(a, length), truncate_length(b, length)
