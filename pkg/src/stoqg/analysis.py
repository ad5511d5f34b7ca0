"""Monte Carlo enstrophy estimation and numerical bound verification.

Estimates Ens(t) = 0.5 E||omega(t)||^2 over an ensemble of trajectories and
confronts the estimates with the theoretical machinery: the constant-free
trace-class envelope, the fitted global envelopes, the pathwise Gronwall
diagnostic, the Hoelder regularity floor of the enstrophy curve, and its
small-time asymptotics against the analytic convolution variance.

Theoretical envelopes with generic constants are handled by a
fit-then-validate protocol: the smallest admissible constant is fitted on a
prefix of the output times (against mean + 3 SE), and the verdict is earned
on the held-out suffix (violated when mean - 3 SE exceeds the envelope). All
statistical comparisons use the 3-standard-error Monte Carlo allowance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import PathTrajectory
from .noise import NoiseSpectrum, analytic_convolution_variance

#: Optimal Poincare constant ||u|| <= c1 ||grad u|| for Dirichlet data on the
#: unit square: c1^2 = 1 / (2 pi^2), from the principal eigenvalue.
DIRICHLET_C1 = 1.0 / (math.pi * math.sqrt(2.0))


@dataclass
class EnstrophyTrace:
    """Time-indexed Monte Carlo estimates of the mean enstrophy.

    Carries the companion series of the pure convolution (empirical and,
    when a spectrum is supplied, analytic halves of E||W_A||^2) and the mean
    squared residual E||omega - W_A||^2 used by the small-time diagnostics.
    """

    times: np.ndarray
    ens_mean: np.ndarray
    ens_se: np.ndarray
    n_paths: int
    wa_half_empirical: np.ndarray | None = None
    wa_half_analytic: np.ndarray | None = None
    resid_mean: np.ndarray | None = None
    resid_se: np.ndarray | None = None

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trace times must be strictly increasing")
        if np.any(self.ens_mean < 0) or np.any(self.ens_se < 0):
            raise ValueError("enstrophy estimates and standard errors must be nonnegative")


@dataclass
class BoundEnvelope:
    """Evaluated envelope values of one bound family, with its parameters."""

    kind: str
    params: dict
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError(f"envelope {self.kind} must be finite and nonnegative")


@dataclass
class BoundReport:
    """Verdict of one envelope check against a Monte Carlo trace."""

    kind: str
    verdict: str  # pass | fail | not_applicable
    envelope: BoundEnvelope | None = None
    violations: list[float] = field(default_factory=list)
    fitted: dict = field(default_factory=dict)
    notes: str = ""

    def __post_init__(self):
        if (self.verdict == "fail") != bool(self.violations):
            raise ValueError("verdict must be 'fail' exactly when violations exist")

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "verdict": self.verdict,
            "violations": [float(t) for t in self.violations],
            "fitted": self.fitted,
            "notes": self.notes,
        }
        if self.envelope is not None:
            out["params"] = self.envelope.params
            out["envelope"] = [float(v) for v in self.envelope.values]
        return out


def estimate_enstrophy(
    trajectories: list[PathTrajectory],
    spectrum: NoiseSpectrum | None = None,
    rates: np.ndarray | None = None,
) -> EnstrophyTrace:
    """Ensemble mean and standard error of 0.5 ||omega(t)||^2.

    When a spectrum (and the convolution rates it was run with) is supplied,
    the analytic companion 0.5 E||W_A(t)||^2 is attached as well.
    """
    if len(trajectories) < 2:
        raise ValueError("need at least 2 paths for a standard error")
    times = trajectories[0].times
    for traj in trajectories[1:]:
        if not np.array_equal(traj.times, times):
            raise ValueError("all trajectories must share the same output times")
    n = len(trajectories)
    ens = 0.5 * np.stack([t.omega_sq for t in trajectories])          # (n, T)
    wa = 0.5 * np.stack([t.wa_sq for t in trajectories])
    resid = np.stack([t.u_sq for t in trajectories])
    scale = math.sqrt(n)
    wa_half_analytic = None
    if spectrum is not None and rates is not None:
        wa_half_analytic = 0.5 * analytic_convolution_variance(spectrum, rates, times)
    return EnstrophyTrace(
        times=times.copy(),
        ens_mean=ens.mean(axis=0),
        ens_se=ens.std(axis=0, ddof=1) / scale,
        n_paths=n,
        wa_half_empirical=wa.mean(axis=0),
        wa_half_analytic=wa_half_analytic,
        resid_mean=resid.mean(axis=0),
        resid_se=resid.std(axis=0, ddof=1) / scale,
    )


def gamma_threshold(nu: float, r: float, beta: float, c1: float = DIRICHLET_C1) -> float:
    """Admissibility threshold -nu/c1^2 - r + c1*beta for the growth rate gamma."""
    if c1 <= 0:
        raise ValueError(f"Poincare constant must be > 0, got {c1}")
    return -nu / c1**2 - r + c1 * beta


def _exp_integral(gamma: float, times: np.ndarray) -> np.ndarray:
    """Closed form of int_0^t e^(2 gamma tau) dtau (t itself when gamma = 0)."""
    if gamma == 0.0:
        return times.astype(float)
    return (np.exp(2.0 * gamma * times) - 1.0) / (2.0 * gamma)


def trace_class_envelope(ens0: float, gamma: float, tr_q: float, times) -> BoundEnvelope:
    """Constant-free envelope Ens(0) e^(2 gamma t) + Tr(Q) (e^(2 gamma t)-1)/(4 gamma).

    For gamma < 0 the envelope saturates at -Tr(Q)/(4 gamma). At gamma = 0 the
    limit form Ens(0) + Tr(Q) t / 2 is used and flagged in the parameters.
    """
    times = np.asarray(times, dtype=float)
    if ens0 < 0 or tr_q < 0:
        raise ValueError("Ens(0) and Tr(Q) must be nonnegative")
    if not np.isfinite(tr_q):
        raise ValueError("trace-class envelope needs a finite Tr(Q)")
    values = ens0 * np.exp(2.0 * gamma * times) + 0.5 * tr_q * _exp_integral(gamma, times)
    params = {"ens0": ens0, "gamma": gamma, "tr_q": tr_q, "gamma_zero_limit_form": gamma == 0.0}
    if gamma < 0:
        params["long_time_limit"] = -tr_q / (4.0 * gamma)
    return BoundEnvelope("trace_class", params, times, values)


def theorem2_shape(
    case: str,
    e_omega0_sq: float,
    gamma: float,
    times,
    mu_tilde: float | None = None,
    mu_exp: float | None = None,
) -> np.ndarray:
    """Unit-constant envelope shape of the global polynomial-growth bounds.

    Case "a" uses the exponent (2 - mu_tilde)/mu_tilde on the prefactor of
    the exponential integral; case "b" uses exponent 1. The multiplicative
    constant is left to the fitting protocol.
    """
    times = np.asarray(times, dtype=float)
    integral = _exp_integral(gamma, times)
    if case == "a":
        if mu_tilde is None or not (mu_exp is not None and 0.0 < mu_tilde < mu_exp):
            raise ValueError(f"case (a) needs mu_tilde in (0, mu_exp), got {mu_tilde}")
        power = (2.0 - mu_tilde) / mu_tilde
    elif case == "b":
        power = 1.0
    else:
        raise ValueError(f"unknown envelope case {case!r}")
    return e_omega0_sq * np.exp(2.0 * gamma * times) + times**power * integral + 1.0


def theorem2_envelope(
    case: str,
    e_omega0_sq: float,
    c_fit: float,
    gamma: float,
    times,
    mu_tilde: float | None = None,
    mu_exp: float | None = None,
) -> BoundEnvelope:
    """Global-bound envelope C * (E||omega0||^2 e^(2 gamma t) + t^q Integral + 1)."""
    times = np.asarray(times, dtype=float)
    shape = theorem2_shape(case, e_omega0_sq, gamma, times, mu_tilde, mu_exp)
    params = {"case": case, "C": c_fit, "gamma": gamma, "e_omega0_sq": e_omega0_sq}
    if case == "a":
        params["mu_tilde"] = mu_tilde
    return BoundEnvelope(f"theorem2{case}", params, times, c_fit * shape)


def validate_bound(trace: EnstrophyTrace, envelope: BoundEnvelope) -> BoundReport:
    """Check envelope dominance with the 3-standard-error allowance, no fitting."""
    lower = trace.ens_mean - 3.0 * trace.ens_se
    bad = lower > envelope.values
    violations = [float(t) for t in trace.times[bad]]
    return BoundReport(
        kind=envelope.kind,
        verdict="fail" if violations else "pass",
        envelope=envelope,
        violations=violations,
    )


def fit_and_validate_bound(
    trace: EnstrophyTrace,
    shape_values: np.ndarray,
    split: float = 0.5,
    kind: str = "fitted",
    params: dict | None = None,
) -> BoundReport:
    """Fit the smallest dominating constant on a prefix, validate on the suffix.

    The constant C is the smallest one with C * shape >= mean + 3 SE on the
    first `split` fraction of the times; the verdict is pass when
    mean - 3 SE <= C * shape everywhere on the remainder. Degenerate all-zero
    traces are reported as not applicable.
    """
    shape_values = np.asarray(shape_values, dtype=float)
    n = len(trace.times)
    if n < 8:
        raise ValueError(f"fit protocol needs >= 8 output times, got {n}")
    if not 0.0 < split < 1.0:
        raise ValueError(f"split fraction must lie in (0, 1), got {split}")
    if np.all(trace.ens_mean == 0.0):
        return BoundReport(kind=kind, verdict="not_applicable", notes="degenerate all-zero trace")

    n_fit = max(1, int(round(split * n)))
    upper = trace.ens_mean + 3.0 * trace.ens_se
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(shape_values > 0, upper / shape_values, np.where(upper > 0, np.inf, 0.0))
    c_fit = float(np.max(ratio[:n_fit]))
    if not np.isfinite(c_fit):
        return BoundReport(kind=kind, verdict="not_applicable", notes="no finite constant dominates the prefix")

    envelope = BoundEnvelope(kind, dict(params or {}, C=c_fit), trace.times, c_fit * shape_values)
    lower = trace.ens_mean - 3.0 * trace.ens_se
    bad = lower[n_fit:] > envelope.values[n_fit:]
    violations = [float(t) for t in trace.times[n_fit:][bad]]
    return BoundReport(
        kind=kind,
        verdict="fail" if violations else "pass",
        envelope=envelope,
        violations=violations,
        fitted={"C": c_fit, "n_fit": n_fit},
    )


def lemma1_pathwise_check(
    trajectory: PathTrajectory,
    gamma: float,
    c_fit: float | None = None,
    split: float = 0.5,
    alpha: float = 0.0,
) -> dict:
    """Discrete Gronwall residuals of d/dt ||U||^2 <= A(t) ||U||^2 + B(t).

    A(t) = 2 gamma + C (||V||_inf + ||V||_inf^2) and
    B(t) = C ((1 + alpha^2) ||V||_inf^2 + ||V||_inf^4), with the recorded
    sup-norm surrogate standing in for ||V||_inf. When no constant is given,
    the smallest C making every prefix residual nonpositive is fitted; the
    reported violation fraction is measured on the suffix.
    """
    u = trajectory.u_sq
    v = trajectory.v_inf
    t = trajectory.times
    if v is None or u is None or len(t) < 3:
        return {"verdict": "not_applicable", "notes": "trajectory lacks convolution records"}

    dt = np.diff(t)
    base = np.diff(u) / dt - 2.0 * gamma * u[:-1]
    gain = (v[:-1] + v[:-1] ** 2) * u[:-1] + (1.0 + alpha**2) * v[:-1] ** 2 + v[:-1] ** 4

    n = len(base)
    n_fit = max(1, int(round(split * n)))
    prefix_unfixable = int(np.sum((gain[:n_fit] == 0) & (base[:n_fit] > 0)))
    if c_fit is None:
        # points with zero forcing gain cannot be repaired by any constant;
        # they enter the violation count instead of the fit
        with np.errstate(divide="ignore", invalid="ignore"):
            needed = np.where(gain > 0, base / gain, 0.0)
        c_fit = float(max(0.0, np.max(needed[:n_fit])))
    residuals = base - c_fit * gain
    suffix = residuals[n_fit:]
    frac = float(np.mean(suffix > 0)) if suffix.size else 0.0
    return {
        "verdict": "pass" if frac <= 0.05 else "fail",
        "c_fit": float(c_fit),
        "gamma": gamma,
        "alpha": alpha,
        "violation_fraction": frac,
        "n_fit": n_fit,
        "prefix_unfixable": prefix_unfixable,
        "residuals": residuals,
    }


def _ols_loglog(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares slope of log y vs log x with its standard error."""
    lx, ly = np.log(x), np.log(y)
    n = len(lx)
    slope, intercept = np.polyfit(lx, ly, 1)
    if n <= 2:
        return float(slope), float("nan")
    resid = ly - (slope * lx + intercept)
    s2 = float(np.sum(resid**2)) / (n - 2)
    se = math.sqrt(s2 / float(np.sum((lx - lx.mean()) ** 2)))
    return float(slope), se


def holder_exponent_fit(trace: EnstrophyTrace, window: tuple[float, float], lags) -> dict:
    """Increment-exponent fit of the enstrophy curve over a time window.

    For each lag h, the maximal |Ens(t+h) - Ens(t)| over pairs inside the
    window is computed; the fitted quantity is the log-log slope of these
    maxima against the lags. Lags whose maximal increment stays below the
    3-standard-error noise floor (combined in quadrature at the maximizing
    pair) are dropped; if fewer than 5 usable lags spanning a decade remain,
    the fit is reported as not applicable. The verdict passes for slopes
    >= 1/4 - 0.05, a one-sided floor: smoother traces pass too.
    """
    t0, t1 = float(window[0]), float(window[1])
    if not 0.0 < t0 < t1:
        raise ValueError(f"window must satisfy 0 < t0 < t1, got {window}")
    lags = np.asarray(sorted(lags), dtype=float)
    if len(lags) < 5 or lags[-1] / lags[0] < 10.0 - 1e-12:
        raise ValueError("need >= 5 lags spanning at least one decade")

    inside = (trace.times >= t0 - 1e-12) & (trace.times <= t1 + 1e-12)
    times = trace.times[inside]
    ens = trace.ens_mean[inside]
    se = trace.ens_se[inside]
    if len(times) < 2:
        raise ValueError("window contains fewer than 2 output times")

    max_inc = np.empty(len(lags))
    floors = np.empty(len(lags))
    for i, h in enumerate(lags):
        targets = times + h
        j = np.searchsorted(times, targets)
        j = np.clip(j, 0, len(times) - 1)
        ok = np.abs(times[j] - targets) <= 1e-6 * max(h, 1e-300)
        # searchsorted returns the left insertion point; the match may sit one
        # slot earlier for exact grid values
        jm = np.clip(j - 1, 0, len(times) - 1)
        ok_m = np.abs(times[jm] - targets) <= 1e-6 * max(h, 1e-300)
        j = np.where(ok, j, jm)
        ok = ok | ok_m
        if not np.any(ok):
            raise ValueError(f"no output-time pairs realize lag {h:g} inside the window")
        src = np.flatnonzero(ok)
        dst = j[ok]
        inc = np.abs(ens[dst] - ens[src])
        best = int(np.argmax(inc))
        max_inc[i] = inc[best]
        floors[i] = 3.0 * math.hypot(se[src[best]], se[dst[best]])

    usable = max_inc > floors
    result = {
        "window": [t0, t1],
        "lags": lags.tolist(),
        "max_increments": max_inc.tolist(),
        "noise_floors": floors.tolist(),
        "usable_lags": int(np.sum(usable)),
    }
    span_ok = usable.sum() >= 5 and lags[usable][-1] / lags[usable][0] >= 10.0 - 1e-12 if usable.any() else False
    if not span_ok:
        result.update({"verdict": "not_applicable", "exponent": None,
                       "notes": "increments below the Monte Carlo noise floor"})
        return result
    slope, slope_se = _ols_loglog(lags[usable], max_inc[usable])
    band = 1.96 * slope_se if np.isfinite(slope_se) else float("nan")
    result.update({
        "exponent": slope,
        "confidence_band": [slope - band, slope + band],
        "verdict": "pass" if slope >= 0.25 - 0.05 else "fail",
    })
    return result


def asymptotics_check(
    trace: EnstrophyTrace,
    spectrum: NoiseSpectrum,
    mode: str,
    delta: float,
    gamma_reg: float = 1.0,
    rho: float = 0.01,
    ens0: float | None = None,
) -> dict:
    """Small-time behaviour of Ens(t) against the convolution asymptotics.

    mode "general": fits the exponent of |Ens(t) - Ens(0)| and passes when it
    reaches min(gamma_reg, delta/2) - 0.05.
    mode "zero": compares Ens(t) with half the analytic E||W_A(t)||^2 (rates
    lambda_k, i.e. the unshifted viscous semigroup) and requires the ratio to
    sit within [0.95, 1.05] at the two smallest times; additionally fits the
    exponent of the residual E||omega - W_A||^2 against the drift-regularity
    floor 1/2 - 2 rho - 0.05. The solver's companion uses rates lambda_k - r,
    an O(t) relative discrepancy at small times, noted in the report.
    """
    if mode not in ("zero", "general"):
        raise ValueError(f"unknown asymptotics mode {mode!r}")
    pos = trace.times > 0
    t = trace.times[pos]
    if len(t) < 3:
        raise ValueError("asymptotics check needs at least 3 positive output times")

    if mode == "general":
        if ens0 is None:
            if trace.times[0] != 0.0:
                raise ValueError("general mode needs ens0 or a trace that starts at t = 0")
            ens0 = float(trace.ens_mean[0])
        dev = np.abs(trace.ens_mean[pos] - ens0)
        se0 = float(trace.ens_se[0]) if trace.times[0] == 0.0 else 0.0
        floor = 3.0 * np.hypot(trace.ens_se[pos], se0)
        usable = dev > floor
        if np.sum(usable) < 2:
            return {"mode": mode, "verdict": "not_applicable",
                    "notes": "deviations from Ens(0) below Monte Carlo resolution"}
        slope, slope_se = _ols_loglog(t[usable], dev[usable])
        threshold = min(gamma_reg, delta / 2.0) - 0.05
        return {
            "mode": mode,
            "ens0": ens0,
            "exponent": slope,
            "exponent_se": slope_se,
            "threshold": threshold,
            "verdict": "pass" if slope >= threshold else "fail",
        }

    rates = spectrum.basis.eigenvalues
    wa_half = 0.5 * analytic_convolution_variance(spectrum, rates, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_analytic = np.where(wa_half > 0, trace.ens_mean[pos] / wa_half, np.nan)
        ratio_empirical = None
        if trace.wa_half_empirical is not None:
            emp = trace.wa_half_empirical[pos]
            ratio_empirical = np.where(emp > 0, trace.ens_mean[pos] / emp, np.nan)
    ratio_ok = bool(np.all(np.abs(ratio_analytic[:2] - 1.0) <= 0.05))

    result = {
        "mode": mode,
        "times": t.tolist(),
        "ratio_analytic": ratio_analytic.tolist(),
        "ratio_ok": ratio_ok,
        "ratio_band": [0.95, 1.05],
        "notes": "analytic companion uses rates lambda_k; solver convolution uses lambda_k - r",
    }
    if ratio_empirical is not None:
        result["ratio_empirical"] = ratio_empirical.tolist()

    residual_ok = None
    if trace.resid_mean is not None:
        resid = trace.resid_mean[pos]
        floor = 3.0 * trace.resid_se[pos] if trace.resid_se is not None else np.zeros_like(resid)
        usable = resid > np.maximum(floor, 0.0)
        if np.sum(usable) >= 2:
            slope, slope_se = _ols_loglog(t[usable], resid[usable])
            threshold = 0.5 - 2.0 * rho - 0.05
            residual_ok = slope >= threshold
            result.update({
                "residual_exponent": slope,
                "residual_exponent_se": slope_se,
                "residual_threshold": threshold,
                "residual_ok": residual_ok,
            })
        else:
            result["residual_notes"] = "residuals below Monte Carlo resolution"

    if not ratio_ok:
        result["verdict"] = "fail"
    elif residual_ok is False:
        result["verdict"] = "fail"
    else:
        result["verdict"] = "pass"
    return result
