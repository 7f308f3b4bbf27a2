"""End-to-end causal construction: per-window filter training, padding to a
common shape, weaving the parameter sequence, and causal rollout prediction.

A :class:`CausalDataset` presents a sequence task window by window: the input
at step i is the concatenation of the last M per-step coordinate vectors
(zero-padded on the left for the first steps), and the target is the output
coordinates at step i.  Construction trains one filter core per window in
parallel, pads all cores to the per-layer maximum shape, and stores the
padded parameter sequence in a weave model; prediction reads each window's
parameters back through the weave rollout, never consulting future inputs.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import net, spaces, weave
from .errors import InvalidArgumentError

__all__ = [
    "TimeGrid",
    "CausalDataset",
    "CnoModel",
    "WindowReport",
    "memory_for",
    "build_window",
    "construct_cno",
    "predict",
    "causality_audit",
]


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing times starting at 0."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        object.__setattr__(self, "times", t)
        if t.ndim != 1 or len(t) < 1:
            raise InvalidArgumentError("times must be a nonempty 1-D array")
        if t[0] != 0.0:
            raise InvalidArgumentError(f"the grid must start at 0, got {t[0]}")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise InvalidArgumentError("times must be strictly increasing")

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class CausalDataset:
    """Per-window training data over a grid.

    ``windows[i]`` is a dict with ``inputs`` of shape (n_samples, M * step_dim)
    and ``targets`` of shape (n_samples, out_dim); window i predicts the
    output at step i from steps (i - M, i].
    """

    grid: TimeGrid
    M: int
    step_dim: int
    windows: list
    in_spaces: list = field(default_factory=list)
    out_spaces: list = field(default_factory=list)

    def __post_init__(self):
        if self.M < 1:
            raise InvalidArgumentError(f"memory M must be >= 1, got {self.M}")
        for i, w in enumerate(self.windows):
            ins = np.asarray(w["inputs"], dtype=np.float64)
            tgt = np.asarray(w["targets"], dtype=np.float64)
            if ins.shape[1] != self.M * self.step_dim:
                raise InvalidArgumentError(
                    f"window {i} inputs have dim {ins.shape[1]}, "
                    f"expected M*step_dim={self.M * self.step_dim}"
                )
            if ins.shape[0] != tgt.shape[0]:
                raise InvalidArgumentError(f"window {i} inputs/targets disagree")

    @property
    def n_windows(self):
        return len(self.windows)

    @property
    def out_dim(self):
        return np.asarray(self.windows[0]["targets"]).shape[1]


@dataclass(frozen=True)
class WindowReport:
    """Outcome of one window's filter training."""

    index: int
    error: float
    gate: float
    shortfall: bool
    seed: int
    epochs: int


@dataclass(frozen=True)
class CnoModel:
    """The woven model plus everything needed to run it causally."""

    weave_model: weave.WeaveModel
    synced_spec: net.NetSpec
    grid: TimeGrid
    M: int
    step_dim: int
    out_dim: int
    out_spaces: list
    reports: list
    Q: int
    delta: float
    seed: int

    @property
    def horizon(self):
        return self.weave_model.T


def memory_for(eps_A: float, r: float, c_mem: float = 1.0) -> int:
    """M = max(1, ceil(c_mem * eps_A^-r)), with a 1e-9 guard against float
    noise pushing an exact integer over the next ceiling."""
    if r < 0:
        raise InvalidArgumentError(f"r must be >= 0, got {r}")
    if c_mem <= 0:
        raise InvalidArgumentError(f"c_mem must be positive, got {c_mem}")
    if eps_A <= 0:
        raise InvalidArgumentError(f"eps_A must be positive, got {eps_A}")
    value = c_mem * eps_A ** (-r)
    return max(1, math.ceil(value - 1e-9))


def build_window(x_path: np.ndarray, i: int, M: int, step_dim: int) -> np.ndarray:
    """Window vector for step i: steps (i - M, i], left-padded with zeros."""
    x_path = np.asarray(x_path, dtype=np.float64)
    if x_path.ndim == 1:
        x_path = x_path[:, None]
    if x_path.shape[1] != step_dim:
        raise InvalidArgumentError(
            f"path step dim {x_path.shape[1]} does not match {step_dim}"
        )
    out = np.zeros((M, step_dim))
    lo = max(0, i - M + 1)
    chunk = x_path[lo : i + 1]
    out[M - len(chunk) :] = chunk
    return out.ravel()


def windows_from_paths(paths: np.ndarray, targets: np.ndarray, grid: TimeGrid,
                       M: int, step_dim: int,
                       in_spaces=None, out_spaces=None) -> CausalDataset:
    """Assemble a CausalDataset from whole paths and per-step targets.

    ``paths`` is (n_samples, n_steps, step_dim) (or 2-D for scalar steps) and
    ``targets`` is (n_samples, n_steps, out_dim) (or 2-D for scalar outputs).
    """
    paths = np.asarray(paths, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if paths.ndim == 2:
        paths = paths[:, :, None]
    if targets.ndim == 2:
        targets = targets[:, :, None]
    n_samples, n_steps, _ = paths.shape
    windows = []
    for i in range(n_steps):
        ins = np.stack([build_window(paths[s], i, M, step_dim) for s in range(n_samples)])
        windows.append({"inputs": ins, "targets": targets[:, i, :]})
    return CausalDataset(
        grid=grid, M=M, step_dim=step_dim, windows=windows,
        in_spaces=list(in_spaces or []), out_spaces=list(out_spaces or []),
    )


def _window_seed(master: int, i: int) -> int:
    """Stable per-window seed stream."""
    return (int(master) * 1_000_003 + 7919 * (i + 1)) % (2 ** 31 - 1)


def construct_cno(ds: CausalDataset, eps_D: float, eps_A: float, Q: int,
                  delta: float, seed: int = 0, dims=None, train_opts=None,
                  max_workers: int = 4, f_oracle=None):
    """Train one filter per window, pad to a common shape, weave, return model.

    Per window the empirical max coordinate-space error is gated against
    eps_A + eps_D; shortfalls are recorded in the per-window report and the
    construction continues.  Deterministic in the seed (per-window seeds are
    derived, so parallel scheduling cannot change results).

    ``f_oracle(i, inputs) -> targets`` optionally overrides the dataset's
    stored targets for window i (used when the causal map is available in
    closed form rather than pre-sampled).
    """
    I = ds.n_windows
    horizon = math.floor(delta ** (-Q))
    if I > horizon:
        raise InvalidArgumentError(
            f"{I} windows exceed the viable horizon floor(delta^-Q)={horizon}"
        )
    in_dim = ds.M * ds.step_dim
    out_dim = ds.out_dim
    if dims is None:
        dims = (in_dim, max(8, 2 * in_dim), out_dim)
    dims = tuple(int(d) for d in dims)
    if dims[0] != in_dim or dims[-1] != out_dim:
        raise InvalidArgumentError(
            f"dims {dims} must start at {in_dim} and end at {out_dim}"
        )
    gate = eps_A + eps_D
    opts = dict(train_opts or {})

    def train_one(i):
        w = ds.windows[i]
        inputs = np.asarray(w["inputs"], dtype=np.float64)
        targets = np.asarray(w["targets"], dtype=np.float64)
        if f_oracle is not None:
            targets = np.asarray(f_oracle(i, inputs), dtype=np.float64)
        wseed = _window_seed(seed, i)
        local = dict(opts)
        local["seed"] = wseed
        spec = net.NetSpec(dims, "relu")
        theta, trace = net.train(spec, (inputs, targets), local)
        pred = net.forward(spec, theta, inputs)
        err = float(np.max(np.linalg.norm(pred - targets, axis=1)))
        report = WindowReport(
            index=i, error=err, gate=gate, shortfall=not err < gate,
            seed=wseed, epochs=len(trace),
        )
        return spec, theta, report

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        results = list(pool.map(train_one, range(I)))

    specs = [r[0] for r in results]
    thetas = [r[1] for r in results]
    reports = [r[2] for r in results]

    # pad to the per-layer maximum shape (all windows share depth here)
    max_depth = max(s.depth for s in specs)
    dstar = [in_dim]
    for j in range(1, max_depth):
        dstar.append(max(s.dims[j] if j < s.depth else s.d_out for s in specs))
    dstar.append(out_dim)
    padded = [net.pad_to(s, th, tuple(dstar)) for s, th in zip(specs, thetas)]
    synced_spec = padded[0][0]
    theta_matrix = np.stack([p[1] for p in padded])

    wmodel = weave.build_weave(theta_matrix, Q=Q, delta=delta, seed=seed)
    model = CnoModel(
        weave_model=wmodel, synced_spec=synced_spec, grid=ds.grid, M=ds.M,
        step_dim=ds.step_dim, out_dim=out_dim, out_spaces=list(ds.out_spaces),
        reports=reports, Q=Q, delta=delta, seed=seed,
    )
    return model, reports


def predict(model: CnoModel, x_path, horizon: int = None):
    """Causal rollout: per step, read the window's parameters from the weave
    and evaluate the filter on the trailing window only."""
    x_path = np.asarray(x_path, dtype=np.float64)
    if x_path.ndim == 1:
        x_path = x_path[:, None]
    if horizon is None:
        horizon = model.horizon
    if horizon < 1 or horizon > model.horizon:
        raise InvalidArgumentError(
            f"horizon must be in [1, {model.horizon}], got {horizon}"
        )
    if x_path.shape[0] < horizon:
        raise InvalidArgumentError(
            f"path has {x_path.shape[0]} steps, need at least {horizon}"
        )
    thetas = weave.rollout(model.weave_model, horizon)
    outputs = []
    for i in range(horizon):
        window = build_window(x_path, i, model.M, model.step_dim)
        outputs.append(net.forward(model.synced_spec, thetas[i], window))
    return outputs


def causality_audit(model: CnoModel, x_path_a, x_path_b, i: int) -> bool:
    """True iff outputs up to step i are bit-identical when only the future
    (steps > i) differs between the two paths."""
    a = np.asarray(x_path_a, dtype=np.float64)
    b = np.asarray(x_path_b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape != b.shape:
        raise InvalidArgumentError("paths must share a shape")
    if not np.array_equal(a[: i + 1], b[: i + 1]):
        raise InvalidArgumentError("paths must agree on steps <= i")
    out_a = predict(model, a, horizon=i + 1)
    out_b = predict(model, b, horizon=i + 1)
    return all(np.array_equal(x, y) for x, y in zip(out_a, out_b))
