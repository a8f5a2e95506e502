"""Ground truth: seeded trajectory ensembles and direct moment estimators.

Trajectories of the discrete dynamics are sampled over random initial
conditions (Gaussian, or hybrid with some coordinates pinned exactly);
multi-time correlation functions are estimated as sample means of field
products, with standard errors.  Analytic closed forms (Gaussian pairing
moments for the linear theory, the d'Alembert formula for the wave
model), marginal projectors and hydrodynamic moments complete the
oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CombinatorialBudget,
    NotADistribution,
    ShapeError,
    TrajectoryDiverged,
)
from .fock import DEFAULT_BUDGET, FockVector, assemble_from_correlations
from .model import OscillatorModel, WaveModel

BLOWUP_THRESHOLD = 1e6


@dataclass(frozen=True)
class EnsembleSpec:
    """Initial-condition distribution: Gaussian with optionally pinned coords.

    mean : (m,) mean vector of the initial coordinates.
    cov : scalar (isotropic), (m,) diagonal, or (m, m) covariance.
    pinned : optional (m,) boolean mask; pinned coordinates take their
        mean exactly (a delta factor in the distribution), the rest stay
        Gaussian.
    samples, seed : ensemble size and the 64-bit key of the counter-based
        generator (Philox); equal seeds give bit-identical draws.
    smearing : optional {time_shift: weight} table, weights summing to 1.
    """

    mean: np.ndarray
    cov: np.ndarray | float
    samples: int
    seed: int
    pinned: np.ndarray | None = None
    smearing: dict | None = None

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        m = mean.shape[0]
        cov = np.asarray(self.cov, dtype=float)
        if cov.ndim == 0:
            cov = float(cov) * np.eye(m)
        elif cov.ndim == 1:
            if cov.shape != (m,):
                raise ShapeError(f"diagonal covariance has shape {cov.shape}, expected ({m},)")
            cov = np.diag(cov)
        elif cov.shape != (m, m):
            raise ShapeError(f"covariance has shape {cov.shape}, expected ({m}, {m})")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ShapeError("covariance must be symmetric")
        w = np.linalg.eigvalsh(cov)
        if w.min() < -1e-10 * max(w.max(), 1.0):
            raise ShapeError(f"covariance not positive semi-definite (min eigenvalue {w.min():.3e})")
        pinned = self.pinned
        if pinned is not None:
            pinned = np.asarray(pinned, dtype=bool)
            if pinned.shape != (m,):
                raise ShapeError(f"pinned mask has shape {pinned.shape}, expected ({m},)")
        if self.smearing is not None:
            total = sum(self.smearing.values())
            if abs(total - 1.0) > 1e-12:
                raise ShapeError(f"smearing weights sum to {total}, expected 1")
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "pinned", pinned)

    @property
    def dim(self):
        return self.mean.shape[0]

    def draw(self):
        """(samples, m) initial-condition draws; deterministic in the seed."""
        rng = np.random.Generator(np.random.Philox(key=self.seed))
        w, v = np.linalg.eigh(self.cov)
        root = v @ np.diag(np.sqrt(np.clip(w, 0.0, None)))
        z = rng.standard_normal((self.samples, self.dim))
        draws = self.mean[None, :] + z @ root.T
        if self.pinned is not None:
            draws[:, self.pinned] = self.mean[self.pinned]
        return draws


def pinned_ensemble(values, samples=1, seed=0):
    """Fully deterministic ensemble: every coordinate pinned to its value."""
    values = np.atleast_1d(np.asarray(values, dtype=float))
    return EnsembleSpec(
        mean=values,
        cov=np.zeros((values.size, values.size)),
        samples=samples,
        seed=seed,
        pinned=np.ones(values.size, dtype=bool),
    )


@dataclass(frozen=True)
class TrajectorySet:
    """Per-sample field values over the grid, plus integrator metadata."""

    kind: str
    positions: np.ndarray   # oscillator: (S, T); wave: (S, nt, nx)
    velocities: np.ndarray
    dt: float
    seed: int
    scheme: str

    def __post_init__(self):
        for a in (self.positions, self.velocities):
            if not np.all(np.isfinite(a)):
                raise TrajectoryDiverged("trajectory set contains non-finite values")

    @property
    def samples(self):
        return self.positions.shape[0]


def _newton_cubic(rhs, c, step_index, tol=1e-14, max_iter=50):
    """Solve x - c x^3 = rhs elementwise (c small).

    The implicit step loses its root when the trajectory leaves the
    resolvable regime (|x| near 1/sqrt(3c)); that is the nonlinear
    blow-up in this discretization and raises TrajectoryDiverged.
    """
    x = rhs.copy()
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for _ in range(max_iter):
            g = x - c * x**3 - rhs
            gp = 1.0 - 3.0 * c * x**2
            step = g / gp
            x = x - step
            finite = np.isfinite(x)
            if finite.all() and np.abs(step).max() <= tol * max(1.0, np.abs(x).max()):
                break
        g = x - c * x**3 - rhs
        bad = ~(np.isfinite(x) & (np.abs(g) <= 1e-8 * np.maximum(1.0, np.abs(rhs))))
    if bad.any():
        idx = int(np.nonzero(bad)[0][0])
        raise TrajectoryDiverged(
            f"implicit cubic step {step_index} has no resolvable root (sample {idx})",
            sample_index=idx,
        )
    return x


def simulate_oscillator(model: OscillatorModel, ensemble: EnsembleSpec):
    """Integrate the model's discrete recurrence over the sampled ensemble.

    Positions follow the exact stencil encoded in the model's kernel
    rows: the startup step is the velocity-Verlet half step with the
    linear acceleration, subsequent steps are the Stormer update with
    the cubic term evaluated at the new point (a scalar Newton solve;
    identical to velocity Verlet when lam = 0).
    """
    if ensemble.dim != 2:
        raise ShapeError(f"oscillator ensemble has dim {ensemble.dim}, expected 2 (x0, v0)")
    draws = ensemble.draw()
    x0, v0 = draws[:, 0], draws[:, 1]
    S, T, dt = draws.shape[0], model.T, model.dt
    om2, lam, f = model.omega**2, model.lam, model.forcing
    x = np.empty((S, T))
    x[:, 0] = x0
    x[:, 1] = x0 + dt * v0 + 0.5 * dt**2 * (-om2 * x0 + f[0])
    c = dt**2 * lam
    for r in range(2, T):
        rhs = 2.0 * x[:, r - 1] - x[:, r - 2] + dt**2 * (-om2 * x[:, r - 1] + f[r - 1])
        x[:, r] = _newton_cubic(rhs, c, r) if lam != 0.0 else rhs
        bad = np.nonzero(np.abs(x[:, r]) > BLOWUP_THRESHOLD)[0]
        if bad.size:
            raise TrajectoryDiverged(
                f"|field| exceeded {BLOWUP_THRESHOLD:g} at step {r} (sample {bad[0]})",
                sample_index=int(bad[0]),
            )
    # velocity-Verlet velocities reconstructed from realized accelerations
    a = -om2 * x + lam * x**3 + f[None, :]
    v = np.empty((S, T))
    v[:, 0] = v0
    for r in range(1, T):
        v[:, r] = v[:, r - 1] + 0.5 * dt * (a[:, r - 1] + a[:, r])
    return TrajectorySet(
        kind="oscillator",
        positions=x,
        velocities=v,
        dt=dt,
        seed=ensemble.seed,
        scheme="stormer-implicit-cubic" if lam != 0.0 else "velocity-verlet",
    )


def simulate_wave(model: WaveModel, ensemble: EnsembleSpec):
    """Velocity-Verlet integration of the periodic semi-discrete wave model."""
    nx = model.nx
    if ensemble.dim != 2 * nx:
        raise ShapeError(f"wave ensemble has dim {ensemble.dim}, expected {2 * nx}")
    draws = ensemble.draw()
    u = draws[:, :nx].copy()
    w = draws[:, nx:].copy()
    S, nt, dt = draws.shape[0], model.nt, model.dt
    c2 = (model.speed / model.dx) ** 2

    def lap(z):
        return np.roll(z, -1, axis=1) - 2.0 * z + np.roll(z, 1, axis=1)

    pos = np.empty((S, nt, nx))
    vel = np.empty((S, nt, nx))
    pos[:, 0] = u
    vel[:, 0] = w
    acc = c2 * lap(u)
    for r in range(1, nt):
        w_half = w + 0.5 * dt * acc
        u = u + dt * w_half
        acc = c2 * lap(u)
        w = w_half + 0.5 * dt * acc
        if np.abs(u).max() > BLOWUP_THRESHOLD:
            raise TrajectoryDiverged(f"wave field exceeded {BLOWUP_THRESHOLD:g} at step {r}")
        pos[:, r] = u
        vel[:, r] = w
    return TrajectorySet(
        kind="wave", positions=pos, velocities=vel, dt=dt, seed=ensemble.seed, scheme="velocity-verlet"
    )


def simulate(model, ensemble):
    if isinstance(model, OscillatorModel) or getattr(model, "kind", None) == "oscillator":
        return simulate_oscillator(model, ensemble)
    if isinstance(model, WaveModel) or getattr(model, "kind", None) == "wave":
        return simulate_wave(model, ensemble)
    raise ShapeError(f"cannot simulate model of type {type(model).__name__}")


# --- moment estimation -------------------------------------------------------

def moment_tensor(x, n, chunk=4096):
    """Sample mean of the n-fold outer power of the rows of x: (S, d) -> (d,)*n."""
    S, d = x.shape
    if n == 0:
        return np.ones(())
    if n == 1:
        return x.mean(axis=0)
    if n == 2:
        return x.T @ x / S
    if n == 3:
        z = np.einsum("si,sj->sij", x, x).reshape(S, d * d)
        return (x.T @ z).reshape(d, d, d) / S
    if n == 4:
        z = np.einsum("si,sj->sij", x, x).reshape(S, d * d)
        return (z.T @ z).reshape(d, d, d, d) / S
    acc = np.zeros((d,) * n)
    letters = "abcdefgh"[:n]
    spec = ",".join(f"s{c}" for c in letters) + "->" + letters
    for lo in range(0, S, chunk):
        xs = x[lo:lo + chunk]
        acc += np.einsum(spec, *([xs] * n))
    return acc / S


@dataclass
class CorrelationTable:
    """Estimated correlation tensors per order, with standard errors."""

    values: dict
    stderr: dict
    samples: int
    max_order: int

    def word(self, word):
        n = len(word)
        return float(self.values[n][tuple(word)]), float(self.stderr[n][tuple(word)])

    def to_vector(self, space, L, budget=DEFAULT_BUDGET):
        table = {n: self.values[n] for n in range(min(L, self.max_order) + 1)}
        return assemble_from_correlations(table, space, L, budget=budget, warn_missing=False)

    def se_vector(self, space, L):
        d = space.d
        levels = [np.zeros(())]
        for n in range(1, L + 1):
            levels.append(self.stderr.get(n, np.zeros((d,) * n)).copy())
        return FockVector(space, tuple(levels))

    def word_items(self, max_order=None):
        mo = self.max_order if max_order is None else max_order
        d = self.values[1].shape[0] if mo >= 1 else 0
        for n in range(1, mo + 1):
            for idx in np.ndindex(*([d] * n)):
                yield idx, float(self.values[n][idx]), float(self.stderr[n][idx])


def estimate_mtcf(traj: TrajectorySet, max_order, smearing=None, budget=DEFAULT_BUDGET):
    """Sample-mean estimates of field-product moments up to max_order.

    The standard error of each product mean is the classical one (the
    jackknife reduces to it exactly for a sample mean).  With a smearing
    table {shift: weight}, products are additionally averaged over grid
    shifts; the window shrinks by the largest shift and the quoted
    standard error is the weight-averaged bound.
    """
    if traj.kind != "oscillator":
        raise ShapeError("moment estimation expects oscillator trajectories (flat time grid)")
    x = traj.positions
    S, T = x.shape
    if S < 2:
        raise ShapeError("need at least 2 samples for error estimates")

    shifts = {0: 1.0} if smearing is None else dict(smearing)
    max_shift = max(shifts)
    Tw = T - max_shift
    if Tw < 1:
        raise ShapeError(f"smearing shifts up to {max_shift} exceed the grid of {T} points")
    if any(s < 0 for s in shifts):
        raise ShapeError("smearing shifts must be nonnegative grid offsets")

    values, stderr = {0: np.ones(())}, {0: np.zeros(())}
    for n in range(1, max_order + 1):
        if (T**n) > budget:
            raise CombinatorialBudget(f"order-{n} tensor over {T} labels exceeds budget")
        mean = np.zeros((Tw,) * n)
        se_bound = np.zeros((Tw,) * n)
        for s, wgt in shifts.items():
            xs = x[:, s:s + Tw]
            m1 = moment_tensor(xs, n)
            m2 = moment_tensor(xs**2, n)
            var = np.clip(m2 - m1**2, 0.0, None) * (S / (S - 1))
            mean += wgt * m1
            se_bound += wgt * np.sqrt(var / S)
        values[n] = mean
        stderr[n] = se_bound
    return CorrelationTable(values=values, stderr=stderr, samples=S, max_order=max_order)


# --- analytic Gaussian oracle ------------------------------------------------

def linear_response(model: OscillatorModel):
    """Exact discrete propagation of the linear (lam = 0) dynamics.

    Returns (coeff, particular): coeff is (T, 2) with x_t = coeff[t] @
    (x0, v0) + particular[t], obtained by running the integrator on
    basis initial data; exact because the dynamics is linear.
    """
    if model.lam != 0.0:
        raise ShapeError("linear response requires lam = 0")
    cols = []
    for x0, v0, keep_f in ((1.0, 0.0, False), (0.0, 1.0, False), (0.0, 0.0, True)):
        m = model if keep_f else _zero_forcing(model)
        ens = pinned_ensemble([x0, v0], samples=1, seed=0)
        cols.append(simulate_oscillator(m, ens).positions[0])
    coeff = np.column_stack([cols[0], cols[1]])
    return coeff, cols[2]


def _zero_forcing(model: OscillatorModel):
    from .model import build_oscillator_model

    return build_oscillator_model(
        omega=model.omega, dt=model.dt, T=model.T, lam=0.0, q=model.q,
        forcing=None, x0_mean=model.x0_mean, v0_mean=model.v0_mean,
        interaction_rows=model.interaction_rows, boundary=model.boundary,
    )


def gaussian_moment_tensors(mean, cov, max_order, budget=DEFAULT_BUDGET):
    """Moments of a Gaussian vector by pairing recursion, all orders <= max_order.

    M_n(i, rest) = mean_i M_{n-1}(rest) + sum_j cov(i, rest_j) M_{n-2}(rest - j).
    """
    if max_order > 8:
        raise CombinatorialBudget(f"pairing recursion capped at order 8, got {max_order}")
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    d = mean.shape[0]
    if d**max_order > budget:
        raise CombinatorialBudget(f"order-{max_order} Gaussian tensor over {d} labels exceeds budget")
    out = {0: np.ones(()), 1: mean.copy()}
    for n in range(2, max_order + 1):
        t = np.multiply.outer(mean, out[n - 1])
        for j in range(1, n):
            # pair slot 0 with slot j of the order-n tensor
            sub = np.multiply.outer(cov, out[n - 2])  # axes (i, pair, rest...)
            t = t + np.moveaxis(sub, 1, j)
        out[n] = t
    return out


def gaussian_free_moments(model: OscillatorModel, ensemble: EnsembleSpec, max_order):
    """Exact moment tensors of the linearly propagated Gaussian ensemble.

    The discrete field is affine in the initial data, so its mean vector
    and covariance follow from the basis propagation and the moments
    from the pairing recursion.  Reference for the lam = 0 theory and
    for Monte-Carlo error floors.
    """
    coeff, part = linear_response(model)
    cov0 = ensemble.cov.copy()
    if ensemble.pinned is not None:
        cov0[ensemble.pinned, :] = 0.0
        cov0[:, ensemble.pinned] = 0.0
    m = coeff @ ensemble.mean + part
    C = coeff @ cov0 @ coeff.T
    tensors = gaussian_moment_tensors(m, C, max_order)
    return CorrelationTable(
        values=tensors,
        stderr={n: np.zeros_like(t) for n, t in tensors.items()},
        samples=0,
        max_order=max_order,
    )


# --- d'Alembert oracle -------------------------------------------------------

def dalembert_field(model: WaveModel, u0, w0, t, n_quad=2049):
    """Continuum d'Alembert solution on the grid at time t.

    u0 and w0 are callables on [0, length), extended periodically:
    mean displacement and mean velocity of the initial ensemble.
    """
    a, Lbox = model.speed, model.length
    xg = model.grid

    def per(fn, pts):
        return fn(np.mod(pts, Lbox))

    left = per(u0, xg - a * t)
    right = per(u0, xg + a * t)
    out = 0.5 * (left + right)
    if w0 is not None and a * t > 0:
        s = np.linspace(-a * t, a * t, n_quad)
        pts = xg[:, None] + s[None, :]
        vals = per(w0, pts)
        trapezoid = getattr(np, "trapezoid", None) or np.trapz
        out = out + trapezoid(vals, s, axis=1) / (2.0 * a)
    return out


def dalembert_average(model: WaveModel, ensemble: EnsembleSpec, u0_mean, w0_mean, steps=None):
    """Averaged wave field two ways: formula on mean data vs simulated mean.

    By linearity the ensemble mean solves the same equation as each
    sample, so the d'Alembert formula applied to the mean initial data
    reproduces the simulated ensemble mean up to discretization and
    Monte-Carlo error.  Returns per-step formula field, simulated mean,
    and the standard error of the simulated mean.
    """
    if steps is None:
        steps = [model.nt - 1]
    traj = simulate_wave(model, ensemble)
    S = traj.samples
    out = []
    for r in steps:
        t = r * model.dt
        formula = dalembert_field(model, u0_mean, w0_mean, t)
        sim = traj.positions[:, r, :]
        sim_mean = sim.mean(axis=0)
        sim_se = sim.std(axis=0, ddof=1) / np.sqrt(S) if S > 1 else np.zeros(model.nx)
        out.append({"step": r, "time": t, "formula": formula, "simulated": sim_mean, "stderr": sim_se})
    return out


# --- marginals and hydrodynamic moments --------------------------------------

def marginals(f, keep):
    """Partial sum over all but the first ``keep`` coordinates, normalized tensors.

    On probability tensors the discrete marginal is the plain partial
    sum (uniform unit cell volume), which preserves normalization; the
    composition law follows.
    """
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise NotADistribution("negative entries")
    if abs(f.sum() - 1.0) > 1e-10:
        raise NotADistribution(f"sums to {f.sum()}, expected 1")
    if not 0 <= keep <= f.ndim:
        raise ShapeError(f"keep={keep} outside 0..{f.ndim}")
    # drop axes one at a time from the last so that composing marginals
    # performs the identical float reductions and the law is bit exact
    out = f
    for ax in range(f.ndim - 1, keep - 1, -1):
        out = out.sum(axis=ax)
    return out


@dataclass
class HydroMoments:
    """Spatial moments of the velocity field by two routes, per time point."""

    route_field: np.ndarray
    route_products: np.ndarray
    stderr: np.ndarray
    exponent: int

    def max_discrepancy_sigma(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.abs(self.route_field - self.route_products) / np.where(
                self.stderr == 0.0, 1.0, self.stderr
            )
        return float(z.max())


def hydro_moments(traj: TrajectorySet, k, l=0, m=0):
    """Moments <x^k v> two ways: velocity-field route vs product route.

    Route A builds the empirical one-particle velocity field (the
    conditional mean of the velocity at each occupied position, weighted
    by the occupation measure) and integrates the position power against
    it.  Route B estimates the equal-time product moment directly.  The
    two coincide identically under the empirical measure, exactly for a
    single sample and within statistics for finite ensembles.
    """
    if l != 0 or m != 0:
        raise ShapeError("trajectories carry a single spatial coordinate; l and m must be 0")
    if traj.kind != "oscillator":
        raise ShapeError("hydro moments expect oscillator trajectories")
    x, v = traj.positions, traj.velocities
    S, T = x.shape
    route_field = np.empty(T)
    route_products = np.empty(T)
    stderr = np.empty(T)
    for t in range(T):
        pos, inv = np.unique(x[:, t], return_inverse=True)
        u_field = np.zeros(pos.size)
        weight = np.bincount(inv, minlength=pos.size).astype(float)
        np.add.at(u_field, inv, v[:, t])
        u_field /= weight
        density = weight / S
        route_field[t] = float(np.sum(pos**k * u_field * density))
        prod = x[:, t] ** k * v[:, t]
        route_products[t] = float(prod.mean())
        stderr[t] = float(prod.std(ddof=1) / np.sqrt(S)) if S > 1 else 0.0
    return HydroMoments(
        route_field=route_field, route_products=route_products, stderr=stderr, exponent=k
    )
