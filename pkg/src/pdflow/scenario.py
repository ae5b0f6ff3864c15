"""Declarative scenario files: parsing, validation, and resolved manifests.

A scenario is a JSON document with exactly one of a `problem` section (raw
quadratic/affine data) or an `hvac` section (thermal network plus welfare
parameters plus tariff), a `dynamics` section (time constants, initial state,
integrator options), and an `outputs` section. `resolve_scenario` fills every
default and returns both the built objects and a canonical dict; writing that
dict back out produces a manifest that re-parses to the identical resolved
configuration. See scenarios/SCHEMA.md for field-by-field units.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .hvac import (
    ThermalNetwork,
    TouSchedule,
    WelfareParams,
    build_hvac_system,
    steady_state_constraint,
)
from .integrator import IntegratorOptions
from .interconnect import ComposedSystem, FullState, compose, full_state
from .problem import ConvexProblem, quadratic_problem

__all__ = ["Scenario", "ScenarioError", "load_scenario", "resolve_scenario",
           "scenario_to_dict", "apply_overrides"]

CERTIFICATE_NAMES = (
    "unforced-decrease",
    "composite-decrease",
    "switch-ledger",
    "hybrid-passivity",
    "quadratic-norm",
    "convergence",
)


class ScenarioError(ValueError):
    """Scenario file failed validation; message carries the offending path."""


def _fail(path: str, msg: str):
    raise ScenarioError(f"{path}: {msg}")


def _get(section: dict, key: str, path: str, default=None, required=False):
    if key not in section:
        if required:
            _fail(f"{path}.{key}", "missing required field")
        return default
    return section[key]


def _floats(val, path: str) -> list:
    try:
        arr = np.atleast_1d(np.asarray(val, dtype=float))
    except (TypeError, ValueError):
        _fail(path, f"expected numbers, got {val!r}")
    if arr.ndim != 1:
        _fail(path, "expected a flat list of numbers")
    return [float(v) for v in arr]


def _matrix(val, path: str) -> list:
    try:
        arr = np.asarray(val, dtype=float)
    except (TypeError, ValueError):
        _fail(path, f"expected a matrix, got {val!r}")
    if arr.size == 0:
        return []
    if arr.ndim != 2:
        _fail(path, "expected a nested list of numbers")
    return [[float(v) for v in row] for row in arr]


def _tau_list(val, size: int, path: str) -> list:
    if val is None:
        return [1.0] * size
    arr = _floats(val, path)
    if len(arr) == 1 and size != 1:
        arr = arr * size
    if len(arr) != size:
        _fail(path, f"expected {size} entries, got {len(arr)}")
    if any(v <= 0 for v in arr):
        _fail(path, "time constants must be positive")
    return arr


@dataclass(frozen=True)
class HvacBundle:
    network: ThermalNetwork
    params: WelfareParams
    tou: TouSchedule
    occupancy_peak: float
    solar_peak: float
    tau_T: list
    tau_q: float
    tau_lam: float
    tau_mu: list


@dataclass(frozen=True)
class Scenario:
    """Fully resolved configuration plus the systems built from it."""

    name: str
    kind: str
    resolved: dict
    problem: ConvexProblem
    composed: ComposedSystem
    initial: FullState
    opts: IntegratorOptions
    out_dir: str
    certificates: tuple
    hvac: HvacBundle | None = None


def _resolve_integrator(dyn: dict, outputs: dict, path: str) -> IntegratorOptions:
    integ = _get(dyn, "integrator", path, default={}) or {}
    kwargs = {
        "horizon": float(_get(integ, "horizon", f"{path}.integrator", default=10.0)),
        "dt_init": float(_get(integ, "dt_init", path, default=1e-3)),
        "dt_min": float(_get(integ, "dt_min", path, default=1e-12)),
        "dt_max": float(_get(integ, "dt_max", path, default=0.1)),
        "event_tol": float(_get(integ, "event_tol", path, default=1e-10)),
        "record_stride": float(_get(integ, "record_stride", path, default=0.1)),
        "rtol": float(_get(integ, "rtol", path, default=1e-8)),
        "atol": float(_get(integ, "atol", path, default=1e-10)),
    }
    if "stride" in outputs:
        kwargs["record_stride"] = float(outputs["stride"])
    try:
        return IntegratorOptions(**kwargs)
    except ValueError as exc:
        _fail(f"{path}.integrator", str(exc))


def _resolve_certs(outputs: dict) -> tuple:
    certs = _get(outputs, "certificates", "outputs", default=["auto"])
    if isinstance(certs, str):
        certs = [certs]
    for c in certs:
        if c != "auto" and c not in CERTIFICATE_NAMES:
            _fail("outputs.certificates", f"unknown certificate {c!r}")
    return tuple(certs)


def resolve_scenario(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError("scenario root must be an object")
    has_problem = "problem" in raw
    has_hvac = "hvac" in raw
    if has_problem == has_hvac:
        raise ScenarioError("exactly one of 'problem' or 'hvac' sections is required")
    name = str(_get(raw, "name", "scenario", default="unnamed"))
    outputs = _get(raw, "outputs", "scenario", default={}) or {}
    out_dir = str(_get(outputs, "dir", "outputs", default=f"out/{name}"))
    certificates = _resolve_certs(outputs)
    dyn = _get(raw, "dynamics", "scenario", default={}) or {}
    opts = _resolve_integrator(dyn, outputs, "dynamics")

    if has_problem:
        return _resolve_problem_scenario(raw, name, dyn, opts, out_dir, certificates)
    return _resolve_hvac_scenario(raw, name, dyn, opts, out_dir, certificates)


def _resolve_problem_scenario(raw, name, dyn, opts, out_dir, certificates) -> Scenario:
    sec = raw["problem"]
    obj = _get(sec, "objective", "problem", required=True)
    H = _matrix(_get(obj, "H", "problem.objective", required=True), "problem.objective.H")
    c = _floats(_get(obj, "c", "problem.objective", required=True), "problem.objective.c")
    const = float(_get(obj, "const", "problem.objective", default=0.0))
    eq = _get(sec, "equality", "problem", default={}) or {}
    A = _matrix(_get(eq, "A", "problem.equality", default=[]), "problem.equality.A")
    b = _floats(_get(eq, "b", "problem.equality", default=[]), "problem.equality.b") if eq else []
    iq = _get(sec, "inequality", "problem", default={}) or {}
    G = _matrix(_get(iq, "G", "problem.inequality", default=[]), "problem.inequality.G")
    d = _floats(_get(iq, "d", "problem.inequality", default=[]), "problem.inequality.d") if iq else []
    try:
        problem = quadratic_problem(
            np.array(H), np.array(c), const,
            np.array(A) if A else None, np.array(b) if b else None,
            np.array(G) if G else None, np.array(d) if d else None,
        )
    except ValueError as exc:
        _fail("problem", str(exc))
    n, m, p = problem.n, problem.m, problem.p
    tau_x = _tau_list(_get(dyn, "tau_x", "dynamics"), n, "dynamics.tau_x")
    tau_lam = _tau_list(_get(dyn, "tau_lambda", "dynamics"), m, "dynamics.tau_lambda")
    tau_mu = _tau_list(_get(dyn, "tau_mu", "dynamics"), p, "dynamics.tau_mu")
    composed = compose(problem, np.array(tau_x), np.array(tau_lam), np.array(tau_mu))
    init = _get(dyn, "initial", "dynamics", default={}) or {}
    x0 = _floats(_get(init, "x", "dynamics.initial", default=[0.0] * n), "dynamics.initial.x")
    lam0 = _floats(_get(init, "lambda", "dynamics.initial", default=[0.0] * m),
                   "dynamics.initial.lambda") if m else []
    mu0 = _floats(_get(init, "mu", "dynamics.initial", default=[0.0] * p),
                  "dynamics.initial.mu") if p else []
    if len(x0) != n:
        _fail("dynamics.initial.x", f"expected {n} entries, got {len(x0)}")
    if len(lam0) != m:
        _fail("dynamics.initial.lambda", f"expected {m} entries, got {len(lam0)}")
    if len(mu0) != p:
        _fail("dynamics.initial.mu", f"expected {p} entries, got {len(mu0)}")
    if any(v < 0 for v in mu0):
        _fail("dynamics.initial.mu", "multipliers must be nonnegative")
    initial = full_state(composed, np.array(x0), np.array(lam0), np.array(mu0))

    resolved = {
        "name": name,
        "problem": {
            "objective": {"H": H, "c": c, "const": const},
            "equality": {"A": A, "b": b},
            "inequality": {"G": G, "d": d},
        },
        "dynamics": {
            "tau_x": tau_x,
            "tau_lambda": tau_lam,
            "tau_mu": tau_mu,
            "initial": {"x": x0, "lambda": lam0, "mu": mu0},
            "integrator": _opts_dict(opts),
        },
        "outputs": {"dir": out_dir, "certificates": list(certificates)},
    }
    return Scenario(name, "problem", resolved, problem, composed, initial, opts,
                    out_dir, certificates)


def _resolve_hvac_scenario(raw, name, dyn, opts, out_dir, certificates) -> Scenario:
    sec = raw["hvac"]
    netsec = _get(sec, "network", "hvac", required=True)
    R_amb = _floats(_get(netsec, "R_amb", "hvac.network", required=True), "hvac.network.R_amb")
    N = len(R_amb)
    rz_raw = _get(netsec, "R_zone", "hvac.network", default=0.0)
    if np.isscalar(rz_raw):
        R_zone = np.zeros((N, N))
        for i in range(N - 1):
            R_zone[i, i + 1] = R_zone[i + 1, i] = float(rz_raw)
        R_zone = R_zone.tolist()
    else:
        R_zone = _matrix(rz_raw, "hvac.network.R_zone")
    try:
        network = ThermalNetwork(
            C=np.array(_tau_list(_get(netsec, "C", "hvac.network"), N, "hvac.network.C")),
            R_zone=np.array(R_zone) if R_zone else np.zeros((N, N)),
            R_amb=np.array(R_amb),
            T_inf=float(_get(netsec, "T_inf", "hvac.network", required=True)),
            d=np.array(_floats(_get(netsec, "d", "hvac.network", required=True), "hvac.network.d")),
            theta=float(_get(netsec, "theta", "hvac.network", required=True)),
        )
    except ValueError as exc:
        _fail("hvac.network", str(exc))
    wsec = _get(sec, "welfare", "hvac", required=True)

    def wvec(key, default=None):
        required = default is None
        val = _get(wsec, key, "hvac.welfare", default=default, required=required)
        return np.array(_zone_floats(val, N, f"hvac.welfare.{key}"))

    try:
        params = WelfareParams(
            gamma=wvec("gamma", default=1.0),
            T_ref=wvec("T_ref"),
            b_util=wvec("b_util", default=0.0),
            rho=tuple(_floats(_get(wsec, "rho", "hvac.welfare", required=True),
                              "hvac.welfare.rho")),
            T_min=wvec("T_min"),
            T_max=wvec("T_max"),
        )
    except ValueError as exc:
        _fail("hvac.welfare", str(exc))
    tousec = _get(sec, "tou", "hvac", default={"hours": [0.0, 24.0], "prices": [1.0]})
    try:
        tou = TouSchedule(
            hours=np.array(_floats(_get(tousec, "hours", "hvac.tou", required=True),
                                   "hvac.tou.hours")),
            prices=np.array(_floats(_get(tousec, "prices", "hvac.tou", required=True),
                                    "hvac.tou.prices")),
        )
    except ValueError as exc:
        _fail("hvac.tou", str(exc))
    loadsec = _get(sec, "loads", "hvac", default={}) or {}
    occupancy_peak = float(_get(loadsec, "occupancy_peak", "hvac.loads", default=0.0))
    solar_peak = float(_get(loadsec, "solar_peak", "hvac.loads", default=0.0))

    tau_T = _tau_list(_get(dyn, "tau_T", "dynamics"), N, "dynamics.tau_T")
    tau_q = float(_get(dyn, "tau_q", "dynamics", default=1.0))
    tau_lam = float(_get(dyn, "tau_lambda", "dynamics", default=1.0))
    tau_mu = _tau_list(_get(dyn, "tau_mu", "dynamics"), 2 * N, "dynamics.tau_mu")
    if tau_q <= 0 or tau_lam <= 0:
        _fail("dynamics", "time constants must be positive")
    hsys = build_hvac_system(network, params, np.array(tau_T), tau_q, tau_lam,
                             np.array(tau_mu))

    init = _get(dyn, "initial", "dynamics", default={}) or {}
    T0 = _zone_floats(_get(init, "T", "dynamics.initial", default=params.T_ref.tolist()),
                      N, "dynamics.initial.T")
    A_row, b_val = steady_state_constraint(network)
    q_default = float(A_row[0] @ np.array(T0) + b_val)
    q0 = float(_get(init, "q", "dynamics.initial", default=q_default))
    lam0 = float(_get(init, "lambda", "dynamics.initial", default=0.0))
    mu_low = _zone_floats(_get(init, "mu_low", "dynamics.initial", default=[0.0] * N),
                          N, "dynamics.initial.mu_low")
    mu_high = _zone_floats(_get(init, "mu_high", "dynamics.initial", default=[0.0] * N),
                           N, "dynamics.initial.mu_high")
    if any(v < 0 for v in mu_low + mu_high):
        _fail("dynamics.initial", "multipliers must be nonnegative")
    initial = full_state(
        hsys.composed,
        np.array(T0 + [q0]),
        np.array([lam0]),
        np.array(mu_low + mu_high),
    )
    resolved = {
        "name": name,
        "hvac": {
            "network": {
                "C": network.C.tolist(),
                "R_zone": network.R_zone.tolist(),
                "R_amb": network.R_amb.tolist(),
                "T_inf": network.T_inf,
                "d": network.d.tolist(),
                "theta": network.theta,
            },
            "welfare": {
                "gamma": params.gamma.tolist(),
                "T_ref": params.T_ref.tolist(),
                "b_util": params.b_util.tolist(),
                "rho": list(params.rho),
                "T_min": params.T_min.tolist(),
                "T_max": params.T_max.tolist(),
            },
            "tou": {"hours": tou.hours.tolist(), "prices": tou.prices.tolist()},
            "loads": {"occupancy_peak": occupancy_peak, "solar_peak": solar_peak},
        },
        "dynamics": {
            "tau_T": tau_T,
            "tau_q": tau_q,
            "tau_lambda": tau_lam,
            "tau_mu": tau_mu,
            "initial": {"T": T0, "q": q0, "lambda": lam0,
                        "mu_low": mu_low, "mu_high": mu_high},
            "integrator": _opts_dict(opts),
        },
        "outputs": {"dir": out_dir, "certificates": list(certificates)},
    }
    bundle = HvacBundle(network, params, tou, occupancy_peak, solar_peak,
                        tau_T, tau_q, tau_lam, tau_mu)
    return Scenario(name, "hvac", resolved, hsys.problem, hsys.composed, initial,
                    opts, out_dir, certificates, hvac=bundle)


def _zone_floats(val, N: int, path: str) -> list:
    arr = _floats(val, path)
    if len(arr) == 1 and N != 1:
        arr = arr * N
    if len(arr) != N:
        _fail(path, f"expected {N} entries, got {len(arr)}")
    return arr


def _opts_dict(opts: IntegratorOptions) -> dict:
    return {
        "horizon": opts.horizon,
        "dt_init": opts.dt_init,
        "dt_min": opts.dt_min,
        "dt_max": opts.dt_max,
        "event_tol": opts.event_tol,
        "record_stride": opts.record_stride,
        "rtol": opts.rtol,
        "atol": opts.atol,
    }


def scenario_to_dict(scenario: Scenario) -> dict:
    """The resolved manifest; feeding it back to resolve_scenario is a no-op."""
    return scenario.resolved


def apply_overrides(raw: dict, horizon=None, dt_max=None, out_dir=None) -> dict:
    """Fold command-line overrides into a raw scenario dict (returns a copy)."""
    out = json.loads(json.dumps(raw))
    dyn = out.setdefault("dynamics", {})
    integ = dyn.setdefault("integrator", {})
    if horizon is not None:
        integ["horizon"] = float(horizon)
    if dt_max is not None:
        integ["dt_max"] = float(dt_max)
        integ["dt_init"] = min(float(dt_max), float(integ.get("dt_init", 1e-3)))
    if out_dir is not None:
        out.setdefault("outputs", {})["dir"] = str(out_dir)
    return out


def load_scenario(path, horizon=None, dt_max=None, out_dir=None) -> Scenario:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    raw = apply_overrides(raw, horizon=horizon, dt_max=dt_max, out_dir=out_dir)
    return resolve_scenario(raw)
