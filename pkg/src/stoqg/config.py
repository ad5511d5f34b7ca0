"""Run-configuration schema: strict JSON ingestion and normalization.

Configs are JSON documents with sections model / spectrum / sim / analysis /
io. Validation is strict: unknown keys are rejected and every error names the
offending key path, because silently ignored typos are the main
reproducibility hazard in experiment configs. Loading normalizes the
document (defaults filled in, output times snapped onto the step grid);
normalization is idempotent, so load -> serialize -> load is a fixed point.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import DIRICHLET_C1
from .dynamics import InitialCondition, ModelParams, SimConfig, snap_output_times
from .noise import NoiseSpectrum, build_spectrum, spectrum_from_list
from .spectral import Basis

_REQUIRED = object()


class ConfigError(ValueError):
    """Configuration rejected; the message names the offending key."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


def _require(section: dict, path: str, allowed: dict[str, type | tuple]):
    if not isinstance(section, dict):
        raise ConfigError(path, "expected an object")
    unknown = set(section) - set(allowed)
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"{path}.{key}", "unknown key")


def _get(section: dict, path: str, key: str, types, default=_REQUIRED):
    if key not in section:
        if default is _REQUIRED:
            raise ConfigError(f"{path}.{key}", "required key missing")
        return default
    value = section[key]
    if types is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, types) or isinstance(value, bool) and types is not bool:
        raise ConfigError(f"{path}.{key}", f"expected {getattr(types, '__name__', types)}, got {type(value).__name__}")
    return value


def _number_list(section: dict, path: str, key: str, default=None):
    if key not in section:
        return default
    value = section[key]
    if not isinstance(value, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        raise ConfigError(f"{path}.{key}", "expected a list of numbers")
    return [float(v) for v in value]


_MODEL_KEYS = {"nu": float, "r": float, "beta": float, "linearized": bool, "beta_term": bool}
_SPECTRUM_KEYS = {"c_mu": float, "mu_exp": float, "theta": float, "mu_sq_list": list}
_SIM_KEYS = {
    "M": int, "dt": float, "T": float, "output_times": dict, "n_paths": int,
    "master_seed": int, "initial_condition": dict, "batch_size": int,
    "store_fields": bool, "noise_fault_scale": float,
}
_ANALYSIS_KEYS = {
    "gamma": (float, type(None)), "c1": (float, type(None)), "alpha_grid": list,
    "split": float, "mu_tilde": (float, type(None)), "holder": dict, "asymptotics": dict,
}
_IO_KEYS = {"out_dir": str, "formats": list, "write_trajectories": bool}


def _normalize_model(raw: dict) -> dict:
    _require(raw, "model", _MODEL_KEYS)
    out = {
        "nu": _get(raw, "model", "nu", float),
        "r": _get(raw, "model", "r", float),
        "beta": _get(raw, "model", "beta", float, 0.0),
        "linearized": _get(raw, "model", "linearized", bool, False),
        "beta_term": _get(raw, "model", "beta_term", bool, True),
    }
    if out["nu"] <= 0:
        raise ConfigError("model.nu", "must be > 0")
    if out["r"] <= 0:
        raise ConfigError("model.r", "must be > 0")
    if out["beta"] < 0:
        raise ConfigError("model.beta", "must be >= 0")
    return out


def _normalize_spectrum(raw: dict) -> dict:
    _require(raw, "spectrum", _SPECTRUM_KEYS)
    theta = _get(raw, "spectrum", "theta", float)
    if not 0.0 < theta < 1.0:
        raise ConfigError("spectrum.theta", f"must lie in (0, 1), got {theta}")
    if "mu_sq_list" in raw:
        if "c_mu" in raw or "mu_exp" in raw:
            raise ConfigError("spectrum.mu_sq_list", "exclusive with c_mu / mu_exp")
        mu_sq = _number_list(raw, "spectrum", "mu_sq_list")
        if any(v < 0 for v in mu_sq):
            raise ConfigError("spectrum.mu_sq_list", "entries must be nonnegative")
        return {"mu_sq_list": mu_sq, "theta": theta}
    c_mu = _get(raw, "spectrum", "c_mu", float)
    mu_exp = _get(raw, "spectrum", "mu_exp", float)
    if c_mu < 0:
        raise ConfigError("spectrum.c_mu", "must be >= 0")
    if c_mu > 0 and mu_exp <= theta:
        raise ConfigError("spectrum.mu_exp", f"must exceed theta={theta} for summability")
    return {"c_mu": c_mu, "mu_exp": mu_exp, "theta": theta}


def _normalize_output_times(raw: dict, dt: float, T: float) -> dict:
    _require(raw, "sim.output_times", {"kind": str, "n": int, "t_min": float, "times": list})
    kind = _get(raw, "sim.output_times", "kind", str)
    if kind == "uniform":
        n = _get(raw, "sim.output_times", "n", int)
        if n < 2:
            raise ConfigError("sim.output_times.n", "need at least 2 output times")
        times = np.linspace(0.0, T, n)
    elif kind == "geometric":
        n = _get(raw, "sim.output_times", "n", int)
        t_min = _get(raw, "sim.output_times", "t_min", float)
        if not 0.0 < t_min < T:
            raise ConfigError("sim.output_times.t_min", "must lie in (0, T)")
        if n < 2:
            raise ConfigError("sim.output_times.n", "need at least 2 output times")
        times = np.concatenate(([0.0], np.geomspace(t_min, T, n)))
    elif kind == "explicit":
        listed = _number_list(raw, "sim.output_times", "times")
        if not listed:
            raise ConfigError("sim.output_times.times", "required for explicit grids")
        times = np.asarray(listed, dtype=float)
    else:
        raise ConfigError("sim.output_times.kind", f"unknown kind {kind!r}")
    snapped = snap_output_times(times, dt, T)
    return {"kind": "explicit", "times": [float(t) for t in snapped]}


def _normalize_initial_condition(raw: dict, n_modes: int) -> dict:
    _require(raw, "sim.initial_condition", {"type": str, "values": list, "sigma": (float, list)})
    kind = _get(raw, "sim.initial_condition", "type", str)
    if kind == "zero":
        return {"type": "zero"}
    if kind == "coeffs":
        values = _number_list(raw, "sim.initial_condition", "values")
        if values is None or len(values) != n_modes:
            raise ConfigError("sim.initial_condition.values", f"need exactly {n_modes} coefficients")
        return {"type": "coeffs", "values": values}
    if kind == "gaussian":
        sigma = raw.get("sigma")
        if isinstance(sigma, (int, float)) and not isinstance(sigma, bool):
            if sigma < 0:
                raise ConfigError("sim.initial_condition.sigma", "must be >= 0")
            return {"type": "gaussian", "sigma": float(sigma)}
        sigma = _number_list(raw, "sim.initial_condition", "sigma")
        if sigma is None or len(sigma) != n_modes:
            raise ConfigError("sim.initial_condition.sigma", f"need a number or {n_modes} entries")
        if any(s < 0 for s in sigma):
            raise ConfigError("sim.initial_condition.sigma", "entries must be >= 0")
        return {"type": "gaussian", "sigma": sigma}
    raise ConfigError("sim.initial_condition.type", f"unknown type {kind!r}")


def _normalize_sim(raw: dict) -> dict:
    _require(raw, "sim", _SIM_KEYS)
    M = _get(raw, "sim", "M", int)
    dt = _get(raw, "sim", "dt", float)
    T = _get(raw, "sim", "T", float)
    if M < 1:
        raise ConfigError("sim.M", "must be >= 1")
    if dt <= 0:
        raise ConfigError("sim.dt", "must be > 0")
    if T <= 0 or dt > T:
        raise ConfigError("sim.T", "must satisfy 0 < dt <= T")
    n_paths = _get(raw, "sim", "n_paths", int)
    if n_paths < 1:
        raise ConfigError("sim.n_paths", "must be >= 1")
    seed = _get(raw, "sim", "master_seed", int)
    if not 0 <= seed < 2**64:
        raise ConfigError("sim.master_seed", "must be a 64-bit unsigned integer")
    batch = _get(raw, "sim", "batch_size", int, 32)
    if batch < 1:
        raise ConfigError("sim.batch_size", "must be >= 1")
    fault = _get(raw, "sim", "noise_fault_scale", float, 1.0)
    if fault < 0:
        raise ConfigError("sim.noise_fault_scale", "must be >= 0")
    out_times = raw.get("output_times")
    if out_times is None:
        raise ConfigError("sim.output_times", "required key missing")
    if not isinstance(out_times, dict):
        raise ConfigError("sim.output_times", "expected an object with a 'kind'")
    ic = raw.get("initial_condition", {"type": "zero"})
    if not isinstance(ic, dict):
        raise ConfigError("sim.initial_condition", "expected an object with a 'type'")
    return {
        "M": M, "dt": dt, "T": T,
        "output_times": _normalize_output_times(out_times, dt, T),
        "n_paths": n_paths, "master_seed": seed,
        "initial_condition": _normalize_initial_condition(ic, M * M),
        "batch_size": batch,
        "store_fields": _get(raw, "sim", "store_fields", bool, False),
        "noise_fault_scale": fault,
    }


def _normalize_holder(raw: dict) -> dict:
    _require(raw, "analysis.holder", {"window": list, "lags": list, "synthetic": (str, type(None))})
    out = {}
    window = _number_list(raw, "analysis.holder", "window")
    if window is not None:
        if len(window) != 2 or not 0 < window[0] < window[1]:
            raise ConfigError("analysis.holder.window", "expected [t0, t1] with 0 < t0 < t1")
        out["window"] = window
    lags = _number_list(raw, "analysis.holder", "lags")
    if lags is not None:
        if len(lags) < 5 or min(lags) <= 0:
            raise ConfigError("analysis.holder.lags", "need >= 5 positive lags")
        out["lags"] = sorted(lags)
    synthetic = raw.get("synthetic")
    if synthetic is not None and synthetic not in ("sqrt", "linear"):
        raise ConfigError("analysis.holder.synthetic", "must be 'sqrt' or 'linear'")
    out["synthetic"] = synthetic
    return out


def _normalize_asymptotics(raw: dict) -> dict:
    _require(raw, "analysis.asymptotics", {
        "mode": str, "delta": float, "gamma_reg": float, "rho": float,
    })
    mode = _get(raw, "analysis.asymptotics", "mode", str, "zero")
    if mode not in ("zero", "general"):
        raise ConfigError("analysis.asymptotics.mode", "must be 'zero' or 'general'")
    delta = _get(raw, "analysis.asymptotics", "delta", float, 0.5)
    if not 0.0 < delta < 1.0:
        raise ConfigError("analysis.asymptotics.delta", "must lie in (0, 1)")
    rho = _get(raw, "analysis.asymptotics", "rho", float, 0.01)
    if not 0.0 < rho < 0.25:
        raise ConfigError("analysis.asymptotics.rho", "must lie in (0, 1/4)")
    return {
        "mode": mode, "delta": delta,
        "gamma_reg": _get(raw, "analysis.asymptotics", "gamma_reg", float, 1.0),
        "rho": rho,
    }


def _normalize_analysis(raw: dict) -> dict:
    _require(raw, "analysis", _ANALYSIS_KEYS)
    gamma = raw.get("gamma")
    if gamma is not None and (isinstance(gamma, bool) or not isinstance(gamma, (int, float))):
        raise ConfigError("analysis.gamma", "expected a number or null")
    c1 = raw.get("c1")
    if c1 is not None:
        if isinstance(c1, bool) or not isinstance(c1, (int, float)) or c1 <= 0:
            raise ConfigError("analysis.c1", "expected a positive number or null")
    split = _get(raw, "analysis", "split", float, 0.5)
    if not 0.0 < split < 1.0:
        raise ConfigError("analysis.split", "must lie in (0, 1)")
    alpha_grid = _number_list(raw, "analysis", "alpha_grid",
                              default=[float(a) for a in np.geomspace(1e2, 1e4, 9)])
    if any(a < 0 for a in alpha_grid):
        raise ConfigError("analysis.alpha_grid", "entries must be >= 0")
    mu_tilde = raw.get("mu_tilde")
    if mu_tilde is not None:
        if isinstance(mu_tilde, bool) or not isinstance(mu_tilde, (int, float)) or mu_tilde <= 0:
            raise ConfigError("analysis.mu_tilde", "expected a positive number or null")
    return {
        "gamma": None if gamma is None else float(gamma),
        "c1": None if c1 is None else float(c1),
        "split": split,
        "alpha_grid": alpha_grid,
        "mu_tilde": None if mu_tilde is None else float(mu_tilde),
        "holder": _normalize_holder(raw.get("holder", {})),
        "asymptotics": _normalize_asymptotics(raw.get("asymptotics", {})),
    }


def _normalize_io(raw: dict) -> dict:
    _require(raw, "io", _IO_KEYS)
    formats = raw.get("formats", ["csv", "json"])
    if not isinstance(formats, list) or not set(formats) <= {"csv", "json"} or not formats:
        raise ConfigError("io.formats", "expected a nonempty subset of ['csv', 'json']")
    return {
        "out_dir": _get(raw, "io", "out_dir", str, "out"),
        "formats": sorted(set(formats)),
        "write_trajectories": _get(raw, "io", "write_trajectories", bool, False),
    }


def normalize(raw: dict) -> dict:
    """Validate and normalize a raw configuration document."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    _require(raw, "<root>", {"model": dict, "spectrum": dict, "sim": dict,
                             "analysis": dict, "io": dict})
    for name in ("model", "spectrum", "sim"):
        if name not in raw:
            raise ConfigError(name, "required section missing")
        if not isinstance(raw[name], dict):
            raise ConfigError(name, "expected an object")
    out = {
        "model": _normalize_model(raw["model"]),
        "spectrum": _normalize_spectrum(raw["spectrum"]),
        "sim": _normalize_sim(raw["sim"]),
        "analysis": _normalize_analysis(raw.get("analysis", {})),
        "io": _normalize_io(raw.get("io", {})),
    }
    n_modes = out["sim"]["M"] ** 2
    if "mu_sq_list" in out["spectrum"] and len(out["spectrum"]["mu_sq_list"]) != n_modes:
        raise ConfigError("spectrum.mu_sq_list", f"need exactly {n_modes} entries for M={out['sim']['M']}")
    return out


@dataclass
class RunConfig:
    """Materialized configuration: model objects plus the normalized document."""

    params: ModelParams
    spectrum: NoiseSpectrum
    sim: SimConfig
    analysis: dict
    io: dict
    document: dict

    @property
    def basis(self) -> Basis:
        return self.spectrum.basis

    def c1(self) -> float:
        return self.analysis["c1"] if self.analysis["c1"] is not None else DIRICHLET_C1

    def mu_tilde_default(self) -> float | None:
        if self.analysis["mu_tilde"] is not None:
            return self.analysis["mu_tilde"]
        if self.spectrum.mu_exp is None or self.spectrum.mu_exp <= 0:
            return None
        return 0.9 * min(self.spectrum.mu_exp, 1.0)


def materialize(document: dict) -> RunConfig:
    """Build model objects from a normalized configuration document."""
    model = document["model"]
    params = ModelParams(
        nu=model["nu"], r=model["r"], beta=model["beta"],
        linearized=model["linearized"], beta_term=model["beta_term"],
    )
    sim_doc = document["sim"]
    basis = Basis(sim_doc["M"], model["nu"])
    spec_doc = document["spectrum"]
    if "mu_sq_list" in spec_doc:
        spectrum = spectrum_from_list(basis, spec_doc["mu_sq_list"], spec_doc["theta"])
    else:
        spectrum = build_spectrum(basis, spec_doc["c_mu"], spec_doc["mu_exp"], spec_doc["theta"])
    ic_doc = sim_doc["initial_condition"]
    if ic_doc["type"] == "zero":
        ic = InitialCondition("zero")
    elif ic_doc["type"] == "coeffs":
        ic = InitialCondition("coeffs", coeffs=tuple(ic_doc["values"]))
    else:
        sigma = ic_doc["sigma"]
        ic = InitialCondition("gaussian", sigma=tuple(sigma) if isinstance(sigma, list) else sigma)
    sim = SimConfig(
        M=sim_doc["M"], dt=sim_doc["dt"], T=sim_doc["T"],
        output_times=np.asarray(sim_doc["output_times"]["times"], dtype=float),
        n_paths=sim_doc["n_paths"], master_seed=sim_doc["master_seed"],
        initial_condition=ic, batch_size=sim_doc["batch_size"],
        store_fields=sim_doc["store_fields"], noise_fault_scale=sim_doc["noise_fault_scale"],
    )
    return RunConfig(params, spectrum, sim, document["analysis"], document["io"], document)


def load_config(path: str | Path) -> RunConfig:
    """Load, validate and materialize a JSON configuration file."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError("<file>", f"config file not found: {path}")
    except json.JSONDecodeError as err:
        raise ConfigError("<file>", f"invalid JSON: {err}")
    return materialize(normalize(raw))


def canonical_json(document: dict) -> str:
    return json.dumps(document, sort_keys=True, separators=(",", ":"))


def config_sha256(document: dict) -> str:
    """Stable hash of a normalized configuration document."""
    return hashlib.sha256(canonical_json(document).encode("utf-8")).hexdigest()
