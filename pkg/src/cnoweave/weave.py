"""Dynamic weaving: delta-packings, latent codes, and memorizing hypernetworks.

A sequence of parameter vectors (theta_t) is stored as latent codes
z_t = (theta_t / M_T, p_t) where M_T = max(1, max pairwise |theta_t - theta_s|)
and (p_t) is a delta-packing of the unit ball in R^Q.  The packing block makes
the codes pairwise well-separated regardless of the thetas, a ReLU network
memorizes the successor map z_t -> z_{t+1} exactly, and a linear readout
(scale the first P coordinates by M_T) recovers each theta in turn.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import net
from .errors import InvalidArgumentError, PackingInfeasibleError

__all__ = [
    "Packing",
    "WeaveModel",
    "Memorizer",
    "pack_ball",
    "aspect_ratio",
    "memorize",
    "build_weave",
    "rollout",
    "table2_report",
]


@dataclass(frozen=True)
class Packing:
    """Points in the closed ball of radius R with pairwise distances > delta."""

    Q: int
    R: float
    delta: float
    points: np.ndarray  # (count, Q)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 2 or pts.shape[1] != self.Q:
            raise InvalidArgumentError(f"points must be (count, {self.Q})")
        norms = np.linalg.norm(pts, axis=1)
        if np.any(norms > self.R + 1e-12):
            raise InvalidArgumentError("packing point outside the ball")
        if len(pts) > 1:
            d = _pairwise_distances(pts)
            if d.min() <= self.delta:
                raise InvalidArgumentError(
                    f"packing separation {d.min():.6g} not strictly above delta={self.delta}"
                )

    @property
    def count(self):
        return len(self.points)

    def min_separation(self) -> float:
        if len(self.points) < 2:
            return math.inf
        return float(_pairwise_distances(self.points).min())


def _pairwise_distances(pts: np.ndarray) -> np.ndarray:
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    return d[np.triu_indices(len(pts), k=1)]


def _greedy_farthest(pool: np.ndarray, delta: float, T_needed: int, start: int):
    """Farthest-point pass over a candidate pool; stops at T_needed points or
    when no candidate stays strictly beyond delta from the chosen set."""
    chosen = [pool[start]]
    dists = np.linalg.norm(pool - pool[start], axis=1)
    while len(chosen) < T_needed:
        i = int(np.argmax(dists))
        if dists[i] <= delta:
            break
        chosen.append(pool[i])
        dists = np.minimum(dists, np.linalg.norm(pool - pool[i], axis=1))
    return np.array(chosen)


def _lattice_points(Q: int, R: float, delta: float, T_needed: int):
    """Axis-aligned lattice with spacing just above delta, clipped to the ball.

    Neighboring lattice points are exactly one spacing apart, so any subset is
    automatically a valid packing; enumeration stops at T_needed points.
    """
    spacing = delta * (1.0 + 1e-9)
    per_axis = int(math.floor(2.0 * R / spacing)) + 1
    if per_axis < 1 or per_axis ** Q > 4_000_000:
        return None
    axis = -R + spacing * np.arange(per_axis)
    # visit small-magnitude coordinates first so points concentrate in the ball
    axis = axis[np.argsort(np.abs(axis), kind="stable")]
    out = []
    r2 = (R + 1e-15) ** 2
    for combo in itertools.product(axis, repeat=Q):
        p = np.array(combo)
        if float(p @ p) <= r2:
            out.append(p)
            if len(out) >= T_needed:
                break
    return np.array(out) if out else None


def pack_ball(Q: int, R: float, delta: float, T_needed: int, seed: int = 0,
              restarts: int = 8) -> Packing:
    """Construct a delta-packing of T_needed points in the radius-R ball.

    Greedy farthest-point passes over seeded random pools come first; if they
    fall short, a deterministic lattice fallback is tried.  Fails cleanly with
    the best achieved count when T_needed is unreachable.
    """
    if not 0 < delta < R:
        raise InvalidArgumentError(f"need 0 < delta < R, got delta={delta}, R={R}")
    if T_needed < 1:
        raise InvalidArgumentError(f"T_needed must be >= 1, got {T_needed}")
    # covering-style upper bound on any packing of the ball
    log_cap = Q * math.log(3.0 * R / delta)
    if log_cap < 50 and T_needed > math.exp(log_cap):
        raise PackingInfeasibleError(
            f"T_needed={T_needed} exceeds the packing upper bound "
            f"{math.exp(log_cap):.3g}",
            achieved=0,
        )
    rng = np.random.default_rng(seed)
    best = np.zeros((0, Q))
    pool_size = min(max(4096, 64 * T_needed), 40_000)
    for _ in range(max(1, restarts)):
        raw = rng.standard_normal((pool_size, Q))
        radii = rng.random(pool_size) ** (1.0 / Q)
        pool = raw / np.linalg.norm(raw, axis=1, keepdims=True) * (R * radii)[:, None]
        start = int(rng.integers(pool_size))
        chosen = _greedy_farthest(pool, delta, T_needed, start)
        if len(chosen) > len(best):
            best = chosen
        if len(best) >= T_needed:
            return Packing(Q, R, delta, best[:T_needed])
    lattice = _lattice_points(Q, R, delta, T_needed)
    if lattice is not None and len(lattice) > len(best):
        best = lattice
    if len(best) >= T_needed:
        return Packing(Q, R, delta, best[:T_needed])
    raise PackingInfeasibleError(
        f"could not pack {T_needed} points (Q={Q}, R={R}, delta={delta}); "
        f"achieved {len(best)}",
        achieved=len(best),
    )


def aspect_ratio(points) -> float:
    """max pairwise distance over min pairwise distance."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if len(pts) < 2:
        raise InvalidArgumentError("need at least two points")
    d = _pairwise_distances(pts)
    if d.min() == 0.0:
        raise InvalidArgumentError("duplicate points have no aspect ratio")
    return float(d.max() / d.min())


class Memorizer(NamedTuple):
    """An exact-interpolation network plus its width accounting."""

    spec: net.NetSpec
    theta: np.ndarray
    width: int
    width_bound: int
    within_bound: bool


def memorize(pairs, seed: int = 0) -> Memorizer:
    """Build a ReLU network with NN(x_i) = y_i exactly (to ~1e-13).

    Construction: project the anchors to a random line (the direction with
    the best-separated projections over seeded retries), sort, and build one
    piecewise-linear ReLU interpolant per output coordinate on the shared
    projection trunk; stacking the per-coordinate heads is the
    parallelization step.  The interpolant places its knots a quarter-gap
    away from each anchor, so every anchor sits inside a flat plateau: exact
    interpolation is unchanged, and — crucially for chained evaluation — the
    local slope at each anchor is zero, so float-level input noise is damped
    rather than amplified when the network is iterated.  The first layer
    shifts all anchors into the positive orthant so its ReLU acts as the
    identity at every anchor.
    """
    xs = np.asarray([np.atleast_1d(np.asarray(p[0], dtype=np.float64)) for p in pairs])
    ys = np.asarray([np.atleast_1d(np.asarray(p[1], dtype=np.float64)) for p in pairs])
    if xs.ndim != 2 or ys.ndim != 2 or len(xs) != len(ys) or len(xs) == 0:
        raise InvalidArgumentError("pairs must be a nonempty list of (x, y) vectors")
    N, n = xs.shape
    d = ys.shape[1]
    if len(np.unique(xs, axis=0)) != N:
        raise InvalidArgumentError("anchor inputs must be pairwise distinct")

    # reported width budget: n (N - 1) + max{d, 12}
    width_bound = n * (N - 1) + max(d, 12)

    if N == 1:
        spec = net.NetSpec((n, d), "relu")
        theta = net.pack(spec, [(np.zeros((d, n)), np.zeros(n), 0.0)], ys[0])
        return Memorizer(spec, theta, width=d, width_bound=width_bound,
                         within_bound=d <= width_bound)

    rng = np.random.default_rng(seed)
    best_w = None
    best_quality = 0.0
    for _ in range(256):
        w = rng.standard_normal(n)
        s = xs @ w
        span = float(s.max() - s.min())
        if span <= 0:
            continue
        quality = float(np.diff(np.sort(s)).min()) / span
        if quality > best_quality:
            best_quality, best_w = quality, w
    if best_w is None or best_quality <= 1e-12:
        raise InvalidArgumentError("could not separate anchors by a random projection")
    w = best_w
    s = xs @ w
    order = np.argsort(s)

    s_sorted = s[order]
    y_sorted = ys[order]
    beta = 1.0 + max(0.0, -float(xs.min()))
    w_offset = beta * float(np.sum(w))

    # per-segment ramps with quarter-gap plateaus around every anchor:
    # hidden unit pair (2i, 2i+1) turns slope m_i on at u_i and off at v_i
    gaps = s_sorted[1:] - s_sorted[:-1]
    u = s_sorted[:-1] + 0.25 * gaps
    v = s_sorted[1:] - 0.25 * gaps
    slopes = (y_sorted[1:] - y_sorted[:-1]) / (v - u)[:, None]  # (N-1, d)

    width = 2 * (N - 1)
    A0 = np.tile(w, (width, 1))
    b0 = np.full(n, beta)
    b1 = np.empty(width)
    b1[0::2] = -(u + w_offset)
    b1[1::2] = -(v + w_offset)
    A1 = np.empty((d, width))
    A1[:, 0::2] = slopes.T
    A1[:, 1::2] = -slopes.T
    c = y_sorted[0]

    spec = net.NetSpec((n, width, d), "relu")
    theta = net.pack(spec, [(A0, b0, 0.0), (A1, b1, 0.0)], c)
    # the shift trick needs every anchor coordinate strictly above -beta
    assert np.all(xs + beta > 0)
    return Memorizer(spec, theta, width=width, width_bound=width_bound,
                     within_bound=width <= width_bound)


@dataclass(frozen=True)
class WeaveModel:
    """Latent codes, the memorizing hypernetwork, and the scaling readout."""

    Q: int
    P: int
    M_T: float
    delta: float
    R: float
    packing: Packing
    codes: np.ndarray  # (T, P + Q)
    hyper_spec: net.NetSpec
    hyper_theta: np.ndarray
    seed: int

    @property
    def T(self):
        return len(self.codes)

    @property
    def z0(self):
        return self.codes[0]

    def readout(self, z: np.ndarray) -> np.ndarray:
        """L(z): scale the first P coordinates back to parameter space."""
        return self.M_T * np.asarray(z)[: self.P]


def build_weave(thetas, Q: int, delta: float, seed: int = 0, R: float = 1.0) -> WeaveModel:
    """Assemble latent codes for a parameter sequence and memorize successors."""
    thetas = np.asarray(thetas, dtype=np.float64)
    if thetas.ndim != 2 or len(thetas) == 0:
        raise InvalidArgumentError("thetas must be a nonempty (T, P) array")
    T, P = thetas.shape
    horizon = math.floor(delta ** (-Q))
    if T > horizon:
        raise InvalidArgumentError(
            f"T={T} exceeds the viable horizon floor(delta^-Q)={horizon}"
        )
    if T > 1:
        diffs = thetas[:, None, :] - thetas[None, :, :]
        m_t = float(np.sqrt(np.sum(diffs * diffs, axis=-1)).max())
    else:
        m_t = 0.0
    M_T = max(1.0, m_t)
    packing = pack_ball(Q, R, delta, T, seed=seed)
    codes = np.hstack([thetas / M_T, packing.points[:T]])
    if T == 1:
        dim = P + Q
        hyper_spec = net.NetSpec((dim, dim), "relu")
        hyper_theta = net.pack(
            hyper_spec, [(np.zeros((dim, dim)), np.zeros(dim), 0.0)], np.zeros(dim)
        )
    else:
        mem = memorize(list(zip(codes[:-1], codes[1:])), seed=seed)
        hyper_spec, hyper_theta = mem.spec, mem.theta
    return WeaveModel(
        Q=Q, P=P, M_T=M_T, delta=delta, R=R, packing=packing, codes=codes,
        hyper_spec=hyper_spec, hyper_theta=hyper_theta, seed=seed,
    )


def rollout(w: WeaveModel, steps: int):
    """theta-hat sequence: read out, advance the latent code, repeat."""
    if steps < 1 or steps > w.T:
        raise InvalidArgumentError(f"steps must be in [1, {w.T}], got {steps}")
    out = []
    z = np.array(w.z0, copy=True)
    for i in range(steps):
        out.append(w.readout(z))
        if i < steps - 1:
            z = net.forward(w.hyper_spec, w.hyper_theta, z)
    return out


def table2_report(P: int, Q: int, delta: float, T: int, measured_width=None) -> dict:
    """Closed-form hypernetwork complexity bounds next to measured values.

    The depth and parameter-count expressions are asymptotic; they are
    evaluated with every unstated constant set to 1 (recorded in the output)
    and never asserted against measurements.
    """
    I = math.floor(delta ** (-Q))
    if T > I:
        raise InvalidArgumentError(f"T={T} exceeds I_delta_Q={I}")
    width_bound = (P + Q) * I + 12
    log_i = math.log(I) if I > 1 else 1.0
    bracket = max(0.0, 1.0 + (math.log(I * I * math.sqrt(2.0)) - math.log(delta)) / math.log(2.0))
    depth_expr = I * (1.0 + math.sqrt(I * log_i) * (1.0 + math.log(2.0) / log_i * bracket))
    params_expr = (
        I ** 3 * (P + Q) ** 2
        * (1.0 + (P + Q) * math.sqrt(I * log_i)
           * (1.0 + math.log(2.0) / log_i * max(0.0, width_bound + (math.log(I * I * math.sqrt(2.0)) - math.log(delta)) / math.log(2.0))))
    )
    report = {
        "I_delta_Q": I,
        "width_bound": width_bound,
        "depth_expr_at_constant_1": depth_expr,
        "params_expr_at_constant_1": params_expr,
        "constants_set_to_1": True,
    }
    if measured_width is not None:
        report["measured_width"] = int(measured_width)
        report["within_width_bound"] = bool(measured_width <= width_bound)
    return report
