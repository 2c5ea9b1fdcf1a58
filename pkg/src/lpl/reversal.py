"""Generator reversal: gradient descent on the latent code to find pre-images.

For a generator ``G`` and target ``x`` we minimise

    loss(z) = 0.5 * ||G(z) - x||^2 + 0.5 * l2_weight * ||z||^2

with plain fixed-step gradient descent from ``z0 ~ N(0, init_stddev^2 I)``.
Rows of a batch are reversed independently but advanced together so one
forward/backward pass serves the whole batch.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeError
from .metrics import LatentCodeSet
from .nn import RECTIFIERS, as_matrix, init_network, network_backward, network_forward, rng_for


@dataclass(frozen=True)
class ReversalOptions:
    step_size: float = 0.05
    max_steps: int = 400
    init_stddev: float = 1e-4
    # stop once loss improved by less than this over `window` steps; 0 disables
    tolerance: float = 1e-8
    l2_weight: float = 0.0
    window: int = 5
    row_seeding: str = "index"

    def __post_init__(self):
        if not self.step_size > 0:
            raise ConfigError("step_size must be positive")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.init_stddev < 0 or self.tolerance < 0 or self.l2_weight < 0:
            raise ConfigError("init_stddev, tolerance and l2_weight must be nonnegative")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.row_seeding not in ("index", "content"):
            raise ConfigError("row_seeding must be 'index' or 'content'")


@dataclass(frozen=True, eq=False)
class ReversalResult:
    z: np.ndarray
    loss_trace: np.ndarray
    converged: bool
    steps_used: int

    @property
    def final_loss(self):
        return float(self.loss_trace[-1])


def content_key(row):
    digest = hashlib.blake2b(np.ascontiguousarray(row, dtype=np.float64).tobytes(), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


def initial_codes(targets, dim, opts, seed):
    """Starting codes, one independent stream per row keyed by index or content."""
    z0 = np.empty((targets.shape[0], dim))
    for i, row in enumerate(targets):
        key = i if opts.row_seeding == "index" else content_key(row)
        z0[i] = rng_for(seed, key).normal(0.0, opts.init_stddev, size=dim)
    return z0


def reversal_loss(generator, z, x, l2_weight=0.0):
    out = network_forward(generator, z)[0]
    z = as_matrix(z)
    return 0.5 * np.sum((out - x) ** 2, axis=1) + 0.5 * l2_weight * np.sum(z * z, axis=1)


@dataclass(eq=False)
class _Descent:
    codes: np.ndarray
    losses: np.ndarray  # (max_steps + 1, n), NaN after a row stops
    steps_used: np.ndarray
    converged: np.ndarray
    failed: np.ndarray
    snapshots: dict = field(default_factory=dict)

    def trace(self, i):
        col = self.losses[:, i]
        col = col[~np.isnan(col)]
        return col if col.size else np.array([np.nan])


def descend(generator, targets, z0, opts, snapshot_steps=()):
    """Batched fixed-step gradient descent; each row stops on its own criterion."""
    x = as_matrix(targets, generator.out_dim)
    z = np.array(z0, dtype=np.float64)
    n = x.shape[0]
    if z.shape != (n, generator.in_dim):
        raise ShapeError(f"z0 shape {z.shape} != {(n, generator.in_dim)}")
    eta, lam, tol, w = opts.step_size, opts.l2_weight, opts.tolerance, opts.window
    losses = np.full((opts.max_steps + 1, n), np.nan)
    steps_used = np.zeros(n, dtype=np.int64)
    converged = np.zeros(n, dtype=bool)
    failed = np.zeros(n, dtype=bool)
    prev = z.copy()
    snap_at = set(int(s) for s in snapshot_steps)
    snapshots = {0: z.copy()} if 0 in snap_at else {}
    active = np.arange(n)

    for t in range(opts.max_steps + 1):
        if active.size == 0:
            break
        za = z[active]
        out, trace = network_forward(generator, za)
        resid = out - x[active]
        loss = 0.5 * np.einsum("ij,ij->i", resid, resid)
        if lam:
            loss += 0.5 * lam * np.einsum("ij,ij->i", za, za)

        bad = ~np.isfinite(loss)
        if bad.any():
            rows = active[bad]
            failed[rows] = True
            if t == 0:
                losses[t, rows] = loss[bad]
            else:
                z[rows] = prev[rows]
            keep = ~bad
            active, za, resid, loss = active[keep], za[keep], resid[keep], loss[keep]
            if active.size == 0:
                break
            out, trace = network_forward(generator, za)

        losses[t, active] = loss
        if tol > 0 and t >= w:
            done = (losses[t - w, active] - loss) < tol
            if done.any():
                converged[active[done]] = True
                keep = ~done
                active, za, resid = active[keep], za[keep], resid[keep]
                if active.size == 0:
                    break
                out, trace = network_forward(generator, za)
        if t == opts.max_steps:
            break

        _, grad = network_backward(generator, trace, resid, param_grads=False)
        if lam:
            grad = grad + lam * za
        prev[active] = za
        z[active] = za - eta * grad
        steps_used[active] += 1
        if t + 1 in snap_at:
            snapshots[t + 1] = z.copy()
    return _Descent(z, losses, steps_used, converged, failed, snapshots)


def reverse(generator, x, opts=None, seed=0):
    """Reverse a single data point; same code path as a one-row batch."""
    opts = opts or ReversalOptions()
    x = as_matrix(x, generator.out_dim)
    if x.shape[0] != 1:
        raise ShapeError("reverse takes a single point; use reverse_batch")
    res = descend(generator, x, initial_codes(x, generator.in_dim, opts, seed), opts)
    return ReversalResult(res.codes[0], res.trace(0), bool(res.converged[0]), int(res.steps_used[0]))


def reverse_batch(generator, batch, opts=None, seed=0, source=""):
    """Reverse every row of ``batch``. Failed rows are flagged, not raised."""
    opts = opts or ReversalOptions()
    x = as_matrix(getattr(batch, "samples", batch), generator.out_dim)
    if x.shape[0] == 0:
        raise ConfigError("cannot reverse an empty batch")
    res = descend(generator, x, initial_codes(x, generator.in_dim, opts, seed), opts)
    final = np.array([res.trace(i)[-1] for i in range(x.shape[0])])
    return LatentCodeSet(res.codes, final, source, res.steps_used, res.converged, res.failed)


# -- local curvature at a perfect pre-image ----------------------------------


@dataclass(frozen=True, eq=False)
class CurvatureReport:
    z_star: np.ndarray
    gauss_newton: np.ndarray
    fd_hessian: np.ndarray
    min_eigenvalue: float
    max_abs_deviation: float


def input_jacobian(generator, z):
    """``dG/dz`` at a single code, shape ``(out_dim, in_dim)``."""
    m = generator.out_dim
    _, trace = network_forward(generator, np.repeat(as_matrix(z), m, axis=0))
    return network_backward(generator, trace, np.eye(m), param_grads=False)[1]


def _off_kinks(generator, z, nudge=1e-6, tries=100):
    if not any(s.activation in RECTIFIERS for s in generator.layers):
        return z
    for _ in range(tries):
        _, trace = network_forward(generator, z)
        if not any(np.any(pre == 0.0) for pre in trace.pre):
            return z
        z = z + nudge
    return z


def curvature_check(generator, z_star, l2_weight=0.0, h=1e-5):
    """Compare the Gauss-Newton matrix with a finite-difference Hessian at ``x* = G(z*)``.

    With ``l2_weight`` the regulariser's ``l2_weight * I`` is included on both sides.
    """
    z = _off_kinks(generator, as_matrix(z_star, generator.in_dim)[:1])
    d = generator.in_dim
    x_star = network_forward(generator, z)[0]
    jac = input_jacobian(generator, z)
    gn = jac.T @ jac
    if l2_weight:
        gn = gn + l2_weight * np.eye(d)

    probes = np.concatenate([z + h * np.eye(d), z - h * np.eye(d)])
    out, trace = network_forward(generator, probes)
    grads = network_backward(generator, trace, out - x_star, param_grads=False)[1]
    grads = grads + l2_weight * probes
    fd = ((grads[:d] - grads[d:]) / (2.0 * h)).T
    min_eig = float(np.linalg.eigvalsh(0.5 * (fd + fd.T)).min())
    return CurvatureReport(z[0], gn, fd, min_eig, float(np.max(np.abs(fd - gn))))


# -- reconstruction with an untrained generator ------------------------------


@dataclass(frozen=True, eq=False)
class ReconstructionRun:
    mean_loss: np.ndarray  # index = step
    snapshots: dict  # step -> reconstructions G(z_step)
    codes: np.ndarray
    originals: np.ndarray
    grid_paths: tuple = ()


def random_reconstruction_experiment(arch, dataset, snapshot_steps=(5, 20, 400), seed=0,
                                     opts=None, out_dir=None, grid_cols=8):
    """Reverse ``dataset`` through a randomly initialised generator.

    Runs without early stopping up to the last snapshot step, records the mean
    loss at every step, and renders one reconstruction grid per snapshot when
    ``out_dir`` is given.
    """
    steps = [int(s) for s in snapshot_steps]
    if not steps or steps != sorted(steps):
        raise ConfigError("snapshot_steps must be a nonempty ascending list")
    x = as_matrix(getattr(dataset, "samples", dataset))
    if x.shape[0] == 0:
        raise ConfigError("dataset is empty")
    generator = init_network(arch, seed)
    base = opts or ReversalOptions()
    opts = ReversalOptions(step_size=base.step_size, max_steps=steps[-1],
                           init_stddev=base.init_stddev, tolerance=0.0, l2_weight=base.l2_weight)
    res = descend(generator, x, initial_codes(x, generator.in_dim, opts, seed), opts, steps)
    snaps = {s: network_forward(generator, res.snapshots[s])[0] for s in steps}

    paths = []
    if out_dir is not None:
        from . import fileio

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        fileio.write_csv(out / "loss_curve.csv", ("step", "mean_loss"),
                         [(t, float(v)) for t, v in enumerate(np.mean(res.losses, axis=1))])
        if fileio.is_square(x.shape[1]):
            paths.append(fileio.write_ppm_grid(x, grid_cols, out / "originals.pgm"))
            for s in steps:
                paths.append(fileio.write_ppm_grid(snaps[s], grid_cols, out / f"recon_step{s:04d}.pgm"))
    return ReconstructionRun(np.mean(res.losses, axis=1), snaps, res.codes, x, tuple(paths))
