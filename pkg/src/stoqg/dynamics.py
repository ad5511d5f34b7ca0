"""Time integration of the stochastic vorticity equation in mild form.

The scheme is a per-mode exponential Euler step: with linear symbols
l_k = lambda_k - r (viscous decay plus Ekman drag folded into the
propagator), one step of size h reads

    a_k <- e^(l_k h) a_k + h phi1(l_k h) drift_k(omega) + eta_k,

where phi1(z) = (e^z - 1)/z, drift is the projected -beta psi_x - J(psi,
omega), and eta_k is an exact Ornstein-Uhlenbeck increment. The linear
subsystem is therefore integrated without any time-discretization error;
only the drift carries the first-order error. A pure-convolution companion
state is advanced with the same eta draws, giving each path its own exact
record of the forced linear response.

Paths are deterministic functions of (master_seed, path_index): every path
derives its generators from a seed sequence spawned with the path index as
key, with separate substreams for the initial condition and the forcing.
Ensembles are processed in fixed-size batches whose composition depends only
on the configuration, never on the worker count, so results are bitwise
reproducible under any parallel schedule.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .noise import ConvolutionState, NoiseSpectrum, ou_transition_std
from .spectral import (
    Basis,
    SpectralField,
    dealias_resolution,
    jacobian,
    laplace_invert,
    x_derivative_projected,
)


@dataclass(frozen=True)
class ModelParams:
    """Physical constants and term switches of the vorticity equation."""

    nu: float
    r: float
    beta: float = 0.0
    linearized: bool = False
    beta_term: bool = True

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError(f"viscosity nu must be > 0, got {self.nu}")
        if self.r <= 0:
            raise ValueError(f"Ekman constant r must be > 0, got {self.r}")
        if self.beta < 0:
            raise ValueError(f"Coriolis gradient beta must be >= 0, got {self.beta}")


@dataclass(frozen=True)
class InitialCondition:
    """Initial vorticity: zero, explicit coefficients, or per-mode Gaussian."""

    kind: str = "zero"
    coeffs: tuple[float, ...] | None = None
    sigma: float | tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "coeffs", "gaussian"):
            raise ValueError(f"unknown initial condition kind {self.kind!r}")
        if self.kind == "coeffs" and self.coeffs is None:
            raise ValueError("initial condition of kind 'coeffs' needs coefficient values")
        if self.kind == "gaussian" and self.sigma is None:
            raise ValueError("initial condition of kind 'gaussian' needs sigma")

    def sigmas(self, n_modes: int) -> np.ndarray:
        if self.kind != "gaussian":
            raise ValueError("per-mode sigmas only defined for gaussian initial conditions")
        sig = np.asarray(self.sigma, dtype=float)
        if sig.ndim == 0:
            return np.full(n_modes, float(sig))
        if sig.shape != (n_modes,):
            raise ValueError(f"sigma list must have {n_modes} entries, got {sig.shape}")
        return sig

    def mean_sq_norm(self, n_modes: int) -> float:
        """E ||omega_0||^2 for this initial condition."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "coeffs":
            vals = np.asarray(self.coeffs, dtype=float)
            return float(np.sum(vals**2))
        return float(np.sum(self.sigmas(n_modes) ** 2))


@dataclass
class SimConfig:
    """Truncation, stepping, output and ensemble controls for one run."""

    M: int
    dt: float
    T: float
    output_times: np.ndarray
    n_paths: int
    master_seed: int
    initial_condition: InitialCondition = field(default_factory=InitialCondition)
    batch_size: int = 32
    store_fields: bool = False
    noise_fault_scale: float = 1.0  # test hook: mis-scales solver noise only

    def __post_init__(self):
        if self.M < 1:
            raise ValueError(f"truncation M must be >= 1, got {self.M}")
        if self.dt <= 0:
            raise ValueError(f"step dt must be > 0, got {self.dt}")
        if self.T <= 0 or self.dt > self.T:
            raise ValueError(f"horizon T must satisfy 0 < dt <= T, got dt={self.dt}, T={self.T}")
        if self.n_paths < 1:
            raise ValueError(f"n_paths must be >= 1, got {self.n_paths}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        self.output_times = np.asarray(self.output_times, dtype=float)
        if self.output_times.size == 0:
            raise ValueError("at least one output time is required")
        if np.any(np.diff(self.output_times) <= 0):
            raise ValueError("output times must be strictly increasing")
        if self.output_times[0] < 0 or self.output_times[-1] > self.T + 1e-9 * self.T:
            raise ValueError("output times must lie within [0, T]")
        steps = self.output_steps()
        if np.any(np.abs(steps * self.dt - self.output_times) > 1e-9 * max(self.dt, 1.0)):
            raise ValueError("output times must be multiples of dt; snap them at load time")

    def output_steps(self) -> np.ndarray:
        return np.rint(self.output_times / self.dt).astype(np.int64)


def snap_output_times(times, dt: float, T: float) -> np.ndarray:
    """Snap requested output times onto the step grid, warning on movement."""
    times = np.asarray(times, dtype=float)
    snapped = np.rint(times / dt) * dt
    moved = np.abs(snapped - times) > 1e-9 * np.maximum(np.abs(times), dt)
    if np.any(moved):
        warnings.warn(
            f"snapped {int(np.sum(moved))} output time(s) onto the dt={dt} grid",
            stacklevel=2,
        )
    snapped = np.unique(np.clip(snapped, 0.0, np.rint(T / dt) * dt))
    return snapped


@dataclass
class PathTrajectory:
    """Per-path diagnostics recorded at the output times.

    Scalars per time: squared norms of the vorticity and its gradient, the
    squared distance to the companion convolution (u_sq = ||omega - V||^2),
    the companion's squared norm (wa_sq = ||W_A||^2), and the sup-norm
    surrogate of the companion (v_inf, grid max at resolution 4M). The raw
    coefficient snapshots are kept only when the run stores fields.
    """

    path_index: int
    times: np.ndarray
    omega_sq: np.ndarray
    grad_sq: np.ndarray
    u_sq: np.ndarray
    wa_sq: np.ndarray
    v_inf: np.ndarray
    fields: np.ndarray | None = None
    failed_at: float | None = None


class BlowupError(RuntimeError):
    """Nonfinite coefficients encountered; carries all failing (path, time) pairs."""

    def __init__(self, failures: list[tuple[int, float]]):
        self.failures = failures
        listing = ", ".join(f"path {p} at t={t:g}" for p, t in failures)
        super().__init__(f"nonfinite coefficients in {len(failures)} path(s): {listing}")


def phi1(z: np.ndarray) -> np.ndarray:
    """(e^z - 1)/z with the removable singularity handled by series."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-5
    safe = np.where(small, 1.0, z)
    out = (np.exp(safe) - 1.0) / safe
    return np.where(small, 1.0 + z / 2.0 + z**2 / 6.0, out)


class _Stepper:
    """Precomputed batched exponential-Euler apparatus for one (basis, params, dt)."""

    def __init__(self, basis: Basis, params: ModelParams, spectrum: NoiseSpectrum, dt: float,
                 fault_scale: float = 1.0):
        self.basis = basis
        self.params = params
        self.n_modes = basis.n_modes
        self.rates = basis.eigenvalues - params.r
        self.decay = np.exp(self.rates * dt)
        self.drift_weight = dt * phi1(self.rates * dt)
        self.noise_std = fault_scale * ou_transition_std(spectrum.mu, self.rates, dt)

        self.inv_lap = basis.to_grid2d(-1.0 / basis.sq_wavenumbers).reshape(basis.M, basis.M)
        self.needs_drift = (not params.linearized) or (params.beta_term and params.beta != 0.0)
        if self.needs_drift:
            P = dealias_resolution(basis.M)
            sin_mat, cos_mat = basis.trig_matrices(P)
            cosw = np.arange(1, basis.M + 1)[:, None] * np.pi * cos_mat
            self.sin_right = sin_mat
            self.cosw_right = cosw
            self.sin2_left = 2.0 * sin_mat.T.copy()
            self.cosw2_left = 2.0 * cosw.T.copy()
            self.project_left = (2.0 / P**2) * sin_mat
            self.project_right = sin_mat.T.copy()
            self.dx_matrix = basis.x_derivative_matrix()

    def drift2d(self, A2: np.ndarray) -> np.ndarray:
        """Projected drift -beta psi_x - J(psi, omega) in (..., M, M) layout."""
        psi2 = A2 * self.inv_lap
        out = 0.0
        if not self.params.linearized:
            # left matrices carry the factor 2 of the orthonormal eigenfunctions
            px = self.cosw2_left @ psi2 @ self.sin_right
            py = self.sin2_left @ psi2 @ self.cosw_right
            ox = self.cosw2_left @ A2 @ self.sin_right
            oy = self.sin2_left @ A2 @ self.cosw_right
            jac = px * oy - py * ox
            out = -(self.project_left @ jac @ self.project_right)
        if self.params.beta_term and self.params.beta != 0.0:
            out = out - self.params.beta * (self.dx_matrix @ psi2)
        return out

    def drift_flat(self, a: np.ndarray) -> np.ndarray:
        if not self.needs_drift:
            return np.zeros_like(a)
        A2 = self.basis.to_grid2d(a)
        return self.basis.from_grid2d(self.drift2d(A2))

    def advance(self, a: np.ndarray, v: np.ndarray, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """One step for a batch: state (..., K), standard normals xi (..., K)."""
        eta = self.noise_std * xi
        drift = self.drift_flat(a) if self.needs_drift else 0.0
        a_new = self.decay * a + self.drift_weight * drift + eta
        v_new = self.decay * v + eta
        return a_new, v_new


def drift(omega: SpectralField, params: ModelParams) -> SpectralField:
    """Projected drift -beta psi_x - J(psi, omega) with psi = laplace_invert(omega).

    The Ekman term -r omega is not part of the drift; it lives in the linear
    propagator of the stepper. In linearized mode the Jacobian is dropped,
    and with the beta switch off the beta term is dropped.
    """
    basis = omega.basis
    total = np.zeros(basis.n_modes)
    psi = laplace_invert(omega)
    if not params.linearized:
        total -= jacobian(psi, omega).coeffs
    if params.beta_term and params.beta != 0.0:
        total -= params.beta * x_derivative_projected(psi).coeffs
    return SpectralField(basis, total)


def step(
    omega: SpectralField,
    conv: ConvolutionState,
    h: float,
    noise: np.ndarray,
    params: ModelParams,
) -> tuple[SpectralField, ConvolutionState]:
    """One exponential-Euler step; the companion state advances on the same draws.

    The convolution state must carry the solver rates lambda_k - r; its mu
    amplitudes define the forcing.
    """
    if h <= 0:
        raise ValueError(f"step must be > 0, got {h}")
    basis = omega.basis
    expected = basis.eigenvalues - params.r
    if not np.allclose(conv.rates, expected, rtol=1e-12, atol=0.0):
        raise ValueError("convolution state rates must equal lambda_k - r")
    noise = np.asarray(noise, dtype=float)
    decay = np.exp(conv.rates * h)
    eta = ou_transition_std(conv.mu, conv.rates, h) * noise
    drift_term = drift(omega, params).coeffs
    a_new = decay * omega.coeffs + h * phi1(conv.rates * h) * drift_term + eta
    v_new = decay * conv.values + eta
    return (
        SpectralField(basis, a_new),
        ConvolutionState(v_new, conv.rates, conv.mu, conv.t + h),
    )


def _path_generators(master_seed: int, path_index: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Disjoint (initial-condition, forcing) generators for one path.

    This mapping is the reproducibility contract: (master_seed, path_index)
    -> streams, independent of batching and worker scheduling. Refactors must
    preserve it to keep golden trajectories valid.
    """
    root = np.random.SeedSequence(master_seed, spawn_key=(path_index,))
    ic_seq, noise_seq = root.spawn(2)
    return np.random.default_rng(ic_seq), np.random.default_rng(noise_seq)


def _initial_coeffs(config: SimConfig, basis: Basis, rng: np.random.Generator) -> np.ndarray:
    ic = config.initial_condition
    if ic.kind == "zero":
        return np.zeros(basis.n_modes)
    if ic.kind == "coeffs":
        vals = np.asarray(ic.coeffs, dtype=float)
        if vals.shape != (basis.n_modes,):
            raise ValueError(
                f"initial coefficients must have {basis.n_modes} entries, got {vals.shape}"
            )
        return vals.copy()
    return ic.sigmas(basis.n_modes) * rng.standard_normal(basis.n_modes)


def _simulate_batch(
    basis: Basis,
    params: ModelParams,
    spectrum: NoiseSpectrum,
    config: SimConfig,
    path_indices: np.ndarray,
) -> list[PathTrajectory]:
    B = len(path_indices)
    K = basis.n_modes
    stepper = _Stepper(basis, params, spectrum, config.dt, config.noise_fault_scale)

    gens = [_path_generators(config.master_seed, int(p)) for p in path_indices]
    a = np.stack([_initial_coeffs(config, basis, ic_rng) for ic_rng, _ in gens])
    v = np.zeros((B, K))
    noise_rngs = [noise_rng for _, noise_rng in gens]

    out_steps = config.output_steps()
    slot_of = {int(s): i for i, s in enumerate(out_steps)}
    n_out = len(out_steps)
    omega_sq = np.empty((n_out, B))
    grad_sq = np.empty((n_out, B))
    u_sq = np.empty((n_out, B))
    wa_sq = np.empty((n_out, B))
    v_inf = np.empty((n_out, B))
    fields = np.empty((n_out, B, K)) if config.store_fields else None
    failed_at = [None] * B

    P_max = 4 * basis.M
    sin_max, _ = basis.trig_matrices(P_max)
    sq_wn = basis.sq_wavenumbers

    def record(slot: int, t: float):
        omega_sq[slot] = np.sum(a * a, axis=1)
        grad_sq[slot] = np.sum(sq_wn * a * a, axis=1)
        diff = a - v
        u_sq[slot] = np.sum(diff * diff, axis=1)
        wa_sq[slot] = np.sum(v * v, axis=1)
        V2 = basis.to_grid2d(2.0 * v)
        v_inf[slot] = np.max(np.abs(sin_max.T @ V2 @ sin_max), axis=(1, 2))
        if fields is not None:
            fields[slot] = a
        finite = np.isfinite(a).all(axis=1)
        for b in np.flatnonzero(~finite):
            if failed_at[b] is None:
                failed_at[b] = t

    if 0 in slot_of:
        record(slot_of[0], 0.0)
    for s in range(1, int(out_steps[-1]) + 1):
        xi = np.stack([rng.standard_normal(K) for rng in noise_rngs])
        a, v = stepper.advance(a, v, xi)
        if s in slot_of:
            record(slot_of[s], s * config.dt)

    times = config.output_times.copy()
    return [
        PathTrajectory(
            path_index=int(path_indices[b]),
            times=times,
            omega_sq=omega_sq[:, b].copy(),
            grad_sq=grad_sq[:, b].copy(),
            u_sq=u_sq[:, b].copy(),
            wa_sq=wa_sq[:, b].copy(),
            v_inf=v_inf[:, b].copy(),
            fields=fields[:, b].copy() if fields is not None else None,
            failed_at=failed_at[b],
        )
        for b in range(B)
    ]


def simulate_path(
    config: SimConfig,
    params: ModelParams,
    spectrum: NoiseSpectrum,
    path_index: int,
) -> PathTrajectory:
    """Simulate one path; a pure function of (master_seed, path_index)."""
    basis = _basis_for(config, params, spectrum)
    (traj,) = _simulate_batch(basis, params, spectrum, config, np.array([path_index]))
    if traj.failed_at is not None:
        raise BlowupError([(traj.path_index, traj.failed_at)])
    return traj


def _basis_for(config: SimConfig, params: ModelParams, spectrum: NoiseSpectrum) -> Basis:
    basis = spectrum.basis
    if basis.M != config.M:
        raise ValueError(f"spectrum basis M={basis.M} does not match config M={config.M}")
    if basis.nu != params.nu:
        raise ValueError(f"spectrum basis nu={basis.nu} does not match params nu={params.nu}")
    return basis


def _batch_task(args):
    basis, params, spectrum, config, indices = args
    return _simulate_batch(basis, params, spectrum, config, indices)


def run_ensemble(
    config: SimConfig,
    params: ModelParams,
    spectrum: NoiseSpectrum,
    n_workers: int = 1,
) -> list[PathTrajectory]:
    """Simulate the full ensemble, in path-index order.

    Paths are grouped into batches of config.batch_size; the grouping depends
    only on the configuration, so any worker count produces bit-identical
    results. Raises BlowupError listing every failing path.
    """
    basis = _basis_for(config, params, spectrum)
    indices = np.arange(config.n_paths)
    batches = [
        indices[lo: lo + config.batch_size]
        for lo in range(0, config.n_paths, config.batch_size)
    ]
    payloads = [(basis, params, spectrum, config, batch) for batch in batches]
    if n_workers > 1 and len(batches) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_batch_task, payloads))
    else:
        results = [_batch_task(p) for p in payloads]
    trajectories = [traj for group in results for traj in group]
    failures = [(t.path_index, t.failed_at) for t in trajectories if t.failed_at is not None]
    if failures:
        raise BlowupError(failures)
    return trajectories
