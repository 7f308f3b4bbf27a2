"""Concrete separable spaces with ordered bases and compatible metrics.

Four instances are provided:

* ``euclidean(dim)`` — R^dim with the standard basis and the single norm |.|_2.
* ``weighted_sequence()`` — finitely supported coordinate sequences with the
  increasing seminorm family p_k(x) = max_{j<=k} |x_j|.
* ``fourier_l2(horizon)`` — L^2([0, t]) with the sine/cosine basis
  f_{2j-1}(s) = sqrt(2/t) sin(j pi s / t), f_{2j}(s) = sqrt(2/t) cos((j-1) pi s / t);
  the j=1 cosine mode is the constant sqrt(2/t), whose squared L^2 norm is 2
  (the basis is orthogonal, not orthonormal, and projection divides by the
  basis norms accordingly).
* ``chaos_l2(mode_count, horizon)`` — first-order chaos coordinates
  (mean, stochastic-integral coefficients) of square-integrable variables;
  here the integrand modes are *normalized*, so the second moment is exactly
  mean^2 + |coeffs|^2.

The metric is the weighted series  d(x, y) = sum_k 2^{-k} Phi(p_k(x - y)) with
Phi(u) = u / (1 + u).  Banach instances have a single (semi)norm, so the
series is the single term 2^{-1} Phi(|x - y|); the sequence space sums the
series to ``k_max`` terms with tail bound 2^{-k_max}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetInfeasibleError, InvalidArgumentError, SpaceMismatchError
from .regularity import Holder, Smooth

__all__ = [
    "SchauderSpace",
    "CoordVector",
    "FourierFunction",
    "euclidean",
    "weighted_sequence",
    "fourier_l2",
    "chaos_l2",
    "phi",
    "project",
    "reconstruct",
    "metric",
    "metric_tail",
    "truncate",
    "truncation_error_profile",
    "select_dims",
]

K_MAX_DEFAULT = 64
QUADRATURE_POINTS = 1024


def phi(u):
    """The bounded clamp Phi(u) = u / (1 + u) applied to each seminorm term."""
    return u / (1.0 + u)


@dataclass(frozen=True)
class SchauderSpace:
    """A concrete space instance; immutable and freely shareable."""

    kind: str  # "euclidean" | "weighted_sequence" | "fourier_l2" | "chaos_l2"
    dim: int = 0  # euclidean only
    horizon: float = 0.0  # fourier_l2 / chaos_l2
    mode_count: int = 0  # chaos_l2 only
    k_max: int = K_MAX_DEFAULT

    def coord_dim(self):
        """Natural coordinate dimension, or None when unbounded."""
        if self.kind == "euclidean":
            return self.dim
        if self.kind == "chaos_l2":
            return 1 + self.mode_count
        return None

    def describe(self) -> dict:
        """Serializable description (kind + parameters)."""
        return {
            "kind": self.kind,
            "dim": self.dim,
            "horizon": self.horizon,
            "mode_count": self.mode_count,
            "k_max": self.k_max,
        }


def from_description(d: dict) -> SchauderSpace:
    return SchauderSpace(
        kind=d["kind"],
        dim=int(d.get("dim", 0)),
        horizon=float(d.get("horizon", 0.0)),
        mode_count=int(d.get("mode_count", 0)),
        k_max=int(d.get("k_max", K_MAX_DEFAULT)),
    )


def euclidean(dim: int, k_max: int = K_MAX_DEFAULT) -> SchauderSpace:
    if dim < 1:
        raise InvalidArgumentError(f"dim must be >= 1, got {dim}")
    return SchauderSpace("euclidean", dim=dim, k_max=k_max)


def weighted_sequence(k_max: int = K_MAX_DEFAULT) -> SchauderSpace:
    return SchauderSpace("weighted_sequence", k_max=k_max)


def fourier_l2(horizon: float, k_max: int = K_MAX_DEFAULT) -> SchauderSpace:
    if horizon <= 0:
        raise InvalidArgumentError(f"horizon must be positive, got {horizon}")
    return SchauderSpace("fourier_l2", horizon=float(horizon), k_max=k_max)


def chaos_l2(mode_count: int, horizon: float, k_max: int = K_MAX_DEFAULT) -> SchauderSpace:
    if mode_count < 0:
        raise InvalidArgumentError(f"mode_count must be >= 0, got {mode_count}")
    if horizon < 0:
        raise InvalidArgumentError(f"horizon must be >= 0, got {horizon}")
    return SchauderSpace(
        "chaos_l2", mode_count=int(mode_count), horizon=float(horizon), k_max=k_max
    )


@dataclass(frozen=True)
class CoordVector:
    """First-n basis coefficients of an element of a space."""

    coords: np.ndarray
    space: SchauderSpace

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.float64)
        if c.ndim != 1:
            raise InvalidArgumentError(f"coords must be 1-D, got shape {c.shape}")
        object.__setattr__(self, "coords", c)

    @property
    def truncation_level(self):
        return len(self.coords)


@dataclass(frozen=True)
class FourierFunction:
    """An element of L^2([0, t]) stored by its exact basis coefficients.

    Callable pointwise; projection reads the stored coefficients back
    bit-for-bit rather than re-running quadrature.
    """

    coeffs: np.ndarray
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=np.float64))

    def __call__(self, s):
        s = np.asarray(s, dtype=np.float64)
        out = np.zeros_like(s, dtype=np.float64)
        for k, ck in enumerate(self.coeffs, start=1):
            if ck != 0.0:
                out = out + ck * _fourier_mode(k, self.horizon, s)
        return out


def _fourier_mode(k: int, t: float, s):
    """k-th basis function of L^2([0, t]) evaluated at s (k is 1-based)."""
    if k % 2 == 1:
        j = (k + 1) // 2
        return math.sqrt(2.0 / t) * np.sin(j * math.pi * s / t)
    j = k // 2
    return math.sqrt(2.0 / t) * np.cos((j - 1) * math.pi * s / t)


def _fourier_norm_sq(k: int) -> float:
    """Squared L^2 norm of the k-th basis function (2 for the constant mode)."""
    return 2.0 if k == 2 else 1.0


def _as_coords(space: SchauderSpace, x) -> np.ndarray:
    """Coerce an element representation to a full coordinate array."""
    if isinstance(x, CoordVector):
        if x.space != space:
            raise SpaceMismatchError(
                f"coordinate vector belongs to {x.space.kind}, not {space.kind}"
            )
        return x.coords
    if isinstance(x, FourierFunction):
        if space.kind != "fourier_l2" or x.horizon != space.horizon:
            raise SpaceMismatchError("FourierFunction horizon does not match space")
        return x.coeffs
    if callable(x):
        if space.kind != "fourier_l2":
            raise InvalidArgumentError(
                f"callable elements are only supported in fourier_l2, not {space.kind}"
            )
        return _quadrature_coords(space, x, 2 * space.k_max)
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidArgumentError(f"element must be 1-D, got shape {arr.shape}")
    if space.kind == "euclidean" and len(arr) != space.dim:
        raise InvalidArgumentError(
            f"euclidean({space.dim}) element has length {len(arr)}"
        )
    if space.kind == "chaos_l2" and len(arr) != 1 + space.mode_count:
        raise InvalidArgumentError(
            f"chaos_l2 element needs length {1 + space.mode_count}, got {len(arr)}"
        )
    return arr


def _quadrature_coords(space: SchauderSpace, f, n: int) -> np.ndarray:
    """Composite-Simpson projection of a callable onto the first n modes."""
    from scipy.integrate import simpson

    t = space.horizon
    # Simpson needs an odd point count.
    m = QUADRATURE_POINTS + 1
    s = np.linspace(0.0, t, m)
    fs = np.asarray(f(s), dtype=np.float64)
    coords = np.empty(n)
    for k in range(1, n + 1):
        basis = _fourier_mode(k, t, s)
        coords[k - 1] = simpson(fs * basis, x=s) / _fourier_norm_sq(k)
    return coords


def project(space: SchauderSpace, x, n: int) -> CoordVector:
    """First n Schauder coordinates of an element."""
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    cd = space.coord_dim()
    if cd is not None and n > cd:
        raise InvalidArgumentError(f"n={n} exceeds the space's dimension {cd}")
    if callable(x) and not isinstance(x, FourierFunction):
        coords = _quadrature_coords(space, x, n)
        return CoordVector(coords, space)
    full = _as_coords(space, x)
    coords = np.zeros(n)
    take = min(n, len(full))
    coords[:take] = full[:take]
    return CoordVector(coords, space)


def reconstruct(space: SchauderSpace, v: CoordVector):
    """Sum of the first-n basis elements weighted by the coordinates."""
    if v.space != space:
        raise SpaceMismatchError("coordinate vector belongs to a different space")
    if space.kind == "euclidean":
        out = np.zeros(space.dim)
        out[: len(v.coords)] = v.coords
        return out
    if space.kind == "weighted_sequence":
        return np.array(v.coords, copy=True)
    if space.kind == "fourier_l2":
        return FourierFunction(np.array(v.coords, copy=True), space.horizon)
    if space.kind == "chaos_l2":
        out = np.zeros(1 + space.mode_count)
        out[: len(v.coords)] = v.coords
        return out
    raise InvalidArgumentError(f"unknown space kind {space.kind}")


def truncate(space: SchauderSpace, x, n: int):
    """A_n(x) = reconstruct(project(x, n)); the rank-n approximation of x."""
    return reconstruct(space, project(space, x, n))


def metric_tail(space: SchauderSpace) -> float:
    """Upper bound on the truncated part of the metric series."""
    if space.kind == "weighted_sequence":
        return 2.0 ** (-space.k_max)
    return 0.0


def _banach_norm(space: SchauderSpace, z: np.ndarray) -> float:
    if space.kind == "fourier_l2":
        w = np.ones(len(z))
        if len(z) >= 2:
            w[1] = 2.0  # constant cosine mode has squared norm 2
        return math.sqrt(float(np.sum(w * z * z)))
    return float(np.linalg.norm(z))


def metric(space: SchauderSpace, x, y) -> float:
    """d(x, y) = sum_k 2^{-k} Phi(p_k(x - y)), evaluated to k_max terms.

    The reported value is exact for the Banach instances (single term) and
    within :func:`metric_tail` for the sequence space.
    """
    cx = _as_coords(space, x)
    cy = _as_coords(space, y)
    n = max(len(cx), len(cy))
    z = np.zeros(n)
    z[: len(cx)] += cx
    z[: len(cy)] -= cy
    if space.kind == "weighted_sequence":
        total = 0.0
        running_max = 0.0
        for k in range(1, space.k_max + 1):
            if k <= n:
                running_max = max(running_max, abs(z[k - 1]))
            total += 2.0 ** (-k) * phi(running_max)
        return total
    return 0.5 * phi(_banach_norm(space, z))


def truncation_error_profile(space: SchauderSpace, sample_set, n_max: int) -> dict:
    """Table n -> max over samples of d(A_n(x), x), nonincreasing in n."""
    samples = list(sample_set)
    if not samples:
        raise InvalidArgumentError("sample set must be nonempty")
    coords = [_as_coords(space, x) for x in samples]
    profile = {}
    for n in range(1, n_max + 1):
        worst = 0.0
        for c in coords:
            trunc = np.zeros(len(c))
            trunc[: min(n, len(c))] = c[: min(n, len(c))]
            cv_full = CoordVector(c, space)
            cv_trunc = CoordVector(trunc, space)
            worst = max(worst, metric(space, cv_trunc, cv_full))
        profile[n] = worst
    return profile


def select_dims(profile_in, profile_out, eps_D, lam, regularity, omega_dagger=None):
    """Smallest truncation dimensions meeting the decoding-error thresholds.

    The input threshold is (omega_dagger(eps_D / 2) / lam), raised to 1/alpha
    under Holder regularity; the output threshold is eps_D / 2.
    ``omega_dagger`` defaults to the identity (1-Lipschitz truncations).
    """
    if eps_D <= 0 or lam <= 0:
        raise InvalidArgumentError("eps_D and lam must be positive")
    if omega_dagger is None:
        omega_dagger = lambda u: u  # noqa: E731
    base = omega_dagger(eps_D / 2.0) / lam
    if isinstance(regularity, Holder):
        thr_in = base ** (1.0 / regularity.alpha)
    elif isinstance(regularity, Smooth):
        thr_in = base
    else:
        raise InvalidArgumentError(f"unknown regularity {regularity!r}")
    thr_out = eps_D / 2.0

    def scan(profile, thr, label):
        best = math.inf
        for n in sorted(profile):
            best = min(best, profile[n])
            if profile[n] <= thr:
                return n
        raise BudgetInfeasibleError(
            f"{label} threshold {thr} unreachable; best achieved {best}",
            achieved=best,
        )

    return scan(profile_in, thr_in, "input"), scan(profile_out, thr_out, "output")
