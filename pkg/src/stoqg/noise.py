"""Forcing spectra and exact sampling of the stochastic convolution.

The forcing is a diagonal Wiener process on the sine basis: independent
Brownian motions scaled by per-mode amplitudes mu_k, assigned in rank order.
The canonical amplitude family is the power law mu_k^2 = c_mu * k^(-mu_exp);
an explicit list can be supplied instead for one-off experiments.

Pushed through a stable linear propagator with per-mode rates l_k < 0, each
mode of the convolution is an Ornstein-Uhlenbeck process. The transition over
a step h is Gaussian with known mean and variance, so increments are sampled
exactly in distribution; there is no time-discretization error anywhere in
the linear-plus-noise subsystem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import Basis


@dataclass
class NoiseSpectrum:
    """Per-mode noise amplitudes mu_k over a basis, in rank order.

    Attributes:
        basis: the mode set the amplitudes refer to.
        mu: amplitudes mu_k >= 0, shape (M^2,).
        theta: summability exponent in (0, 1) used by phi_alpha.
        c_mu, mu_exp: generation rule mu_k^2 = c_mu * k^(-mu_exp), or None
            when the spectrum was given as an explicit list.
        trace_class: whether sum mu_k^2 converges for the untruncated rule
            (mu_exp > 1; explicit finite lists are trivially summable).
    """

    basis: Basis
    mu: np.ndarray
    theta: float
    c_mu: float | None = None
    mu_exp: float | None = None
    trace_class: bool = True

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        if self.mu.shape != (self.basis.n_modes,):
            raise ValueError(
                f"expected {self.basis.n_modes} amplitudes, got shape {self.mu.shape}"
            )
        if np.any(self.mu < 0):
            raise ValueError("noise amplitudes must be nonnegative")
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")

    @property
    def mu_sq(self) -> np.ndarray:
        return self.mu**2


class SummabilityError(ValueError):
    """Raised when a generation rule violates the noise summability condition."""


def build_spectrum(basis: Basis, c_mu: float, mu_exp: float, theta: float) -> NoiseSpectrum:
    """Power-law spectrum mu_k^2 = c_mu * k^(-mu_exp).

    Validates the summability surrogate mu_exp > theta (the mode counting
    |lambda_k| ~ c k turns the condition sum mu_k^2 / |lambda_k|^(1-theta)
    < infinity into mu_exp + (1 - theta) > 1) and flags whether the full,
    untruncated covariance would be trace-class (mu_exp > 1).
    """
    if c_mu < 0:
        raise ValueError(f"amplitude c_mu must be >= 0, got {c_mu}")
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    if c_mu > 0 and mu_exp <= theta:
        raise SummabilityError(
            f"decay mu_exp={mu_exp} must exceed theta={theta} for a summable spectrum"
        )
    k = np.arange(1, basis.n_modes + 1, dtype=float)
    mu = np.sqrt(c_mu) * k ** (-mu_exp / 2.0)
    trace_class = (c_mu == 0) or (mu_exp > 1.0)
    return NoiseSpectrum(basis, mu, theta, c_mu=c_mu, mu_exp=mu_exp, trace_class=trace_class)


def spectrum_from_list(basis: Basis, mu_sq_list, theta: float) -> NoiseSpectrum:
    """Explicit-list spectrum; the list length must match the mode count."""
    mu_sq = np.asarray(mu_sq_list, dtype=float)
    if np.any(mu_sq < 0):
        raise ValueError("mu_sq_list entries must be nonnegative")
    return NoiseSpectrum(basis, np.sqrt(mu_sq), theta, trace_class=True)


def trace(spec: NoiseSpectrum) -> float:
    """Truncated trace of the covariance operator, sum of mu_k^2."""
    return float(np.sum(spec.mu_sq))


def phi_alpha(spec: NoiseSpectrum, alpha: float) -> float:
    """The series sum_k mu_k^2 |lambda_k|^theta / (alpha - lambda_k).

    Controls the sup-norm moments of the shifted convolution; strictly
    decreasing in alpha, finite for every alpha >= 0 since lambda_k < 0.
    """
    if alpha < 0:
        raise ValueError(f"shift alpha must be >= 0, got {alpha}")
    lam_abs = -spec.basis.eigenvalues
    return float(np.sum(spec.mu_sq * lam_abs**spec.theta / (alpha + lam_abs)))


def analytic_convolution_variance(spec: NoiseSpectrum, rates: np.ndarray, t) -> np.ndarray | float:
    """E ||W(t)||^2 of the mode-wise OU system with the given negative rates.

    Equals sum_k mu_k^2 (1 - e^(2 l_k t)) / (-2 l_k): zero at t = 0, strictly
    increasing and concave in t, saturating at sum mu_k^2 / (-2 l_k).
    """
    rates = np.asarray(rates, dtype=float)
    if np.any(rates >= 0):
        raise ValueError("convolution rates must be strictly negative")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("time must be >= 0")
    per_mode = spec.mu_sq / (-2.0 * rates)
    var = (1.0 - np.exp(2.0 * np.outer(t_arr.ravel(), rates))) @ per_mode
    return var.reshape(t_arr.shape) if t_arr.shape else float(var[0])


def stationary_tail_bound(spec: NoiseSpectrum) -> float:
    """Upper estimate of the stationary variance lost to truncation.

    Uses the first-order Weyl growth |lambda_k| ~ 4 pi nu k of the unit-square
    spectrum to bound sum_{k > M^2} mu_k^2 / (2 |lambda_k|) under the power
    rule by an integral. Reported as a diagnostic; explicit-list spectra
    carry no tail and return 0.
    """
    if spec.c_mu is None or spec.c_mu == 0 or spec.mu_exp is None:
        return 0.0
    if spec.mu_exp <= 0:
        return float("inf")
    K = spec.basis.n_modes
    return spec.c_mu / (8.0 * np.pi * spec.basis.nu * spec.mu_exp * K**spec.mu_exp)


@dataclass
class ConvolutionState:
    """Running stochastic-convolution coefficients for one realization.

    Attributes:
        values: current per-mode values v_k.
        rates: per-mode rates l_k < 0 of the linear propagator.
        mu: per-mode noise amplitudes feeding the increments.
        t: current time.
    """

    values: np.ndarray
    rates: np.ndarray
    mu: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.rates = np.asarray(self.rates, dtype=float)
        self.mu = np.asarray(self.mu, dtype=float)
        if not (self.values.shape == self.rates.shape == self.mu.shape):
            raise ValueError("values, rates and mu must have matching shapes")
        if np.any(self.rates >= 0):
            raise ValueError("convolution rates must be strictly negative")


def convolution_state(spec: NoiseSpectrum, rates: np.ndarray) -> ConvolutionState:
    """Fresh zero-valued convolution state for the given rates."""
    rates = np.asarray(rates, dtype=float)
    return ConvolutionState(np.zeros(spec.basis.n_modes), rates, spec.mu.copy())


def ou_transition_std(mu: np.ndarray, rates: np.ndarray, h: float) -> np.ndarray:
    """Standard deviation mu_k sqrt((1 - e^(2 l_k h)) / (-2 l_k)) of one step."""
    return mu * np.sqrt((1.0 - np.exp(2.0 * rates * h)) / (-2.0 * rates))


def ou_increment(state: ConvolutionState, h: float, noise: np.ndarray) -> ConvolutionState:
    """Advance the convolution by one exact OU transition.

    v_k <- e^(l_k h) v_k + mu_k sqrt((1 - e^(2 l_k h)) / (-2 l_k)) * noise_k.
    Because the transition is exact in distribution, the marginal law of
    v_k(t) started from zero is Normal(0, mu_k^2 (1 - e^(2 l_k t)) / (-2 l_k))
    for any partition of [0, t].
    """
    if h <= 0:
        raise ValueError(f"step must be > 0, got {h}")
    noise = np.asarray(noise, dtype=float)
    if noise.shape != state.values.shape:
        raise ValueError("noise vector must carry one entry per mode")
    decay = np.exp(state.rates * h)
    values = decay * state.values + ou_transition_std(state.mu, state.rates, h) * noise
    return ConvolutionState(values, state.rates, state.mu, state.t + h)
