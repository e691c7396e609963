"""Scenario dispatch for the command-line harness."""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .config import ScenarioConfig
from .control import (
    LinearDynamics,
    QuadraticCost,
    diffusion_matrix_K,
    expected_cost_discrete,
    hjb_residual,
    lqg_value_function,
    monte_carlo_value,
    optimal_u,
    value_function,
)
from .filtering import (
    eta_fixed_point,
    fit_relaxation_rate,
    integrate_riccati,
    make_noise_path,
    propagate_filter,
    uniform_grid,
    write_series_csv,
)
from .grid import GridSpec
from .oracle import run_oracle_comparison, suggest_grid
from .states import Controls, ExtendedCoherentState, PhysicalParams

SUMMARY_SCHEMA_VERSION = 1


@dataclass
class RunSummary:
    """``results`` holds only scalars reproducible bit-for-bit from (config, seed)."""

    scenario: str
    seed: int
    dt: float
    config: dict
    results: dict
    wall_clock_s: float
    version: str = __version__

    def to_dict(self):
        return {
            "schema_version": SUMMARY_SCHEMA_VERSION,
            "artifact_version": self.version,
            "scenario": self.scenario,
            "seed": self.seed,
            "dt": self.dt,
            "config": self.config,
            "results": self.results,
            "wall_clock_s": self.wall_clock_s,
        }

    def results_json(self):
        return json.dumps(self.results, sort_keys=True)


def _cplx(z):
    return {"re": float(z.real), "im": float(z.imag)}


def _build(cfg: ScenarioConfig):
    params = PhysicalParams(**cfg.params)
    st = dict(cfg.initial_state)
    if st["eta_re"] is None:
        eta = eta_fixed_point(params)
        st["eta_re"], st["eta_im"] = eta.real, eta.imag
    state0 = ExtendedCoherentState(**st)
    return params, state0


def _cost(cfg: ScenarioConfig):
    c = cfg.cost
    return QuadraticCost(np.array(c["A"]), np.array(c["E"]), np.array(c["R"]), cfg.T)


def _provenance(cfg):
    return {"seed": cfg.seed, "dt": cfg.dt, "version": __version__, "scenario": cfg.scenario}


def _out(out_dir, name):
    return None if not name or out_dir is None else os.path.join(out_dir, name)


def _riccati(cfg, params, state0, out_dir, workers):
    tg = uniform_grid(cfg.T, cfg.dt)
    traj = integrate_riccati(state0.eta, params, tg)
    eta_inf = eta_fixed_point(params)
    res = {
        "eta_infinity": _cplx(eta_inf),
        "eta_T": _cplx(traj.eta[-1]),
        "distance_to_fixed_point_T": float(abs(traj.eta[-1] - eta_inf)),
        "min_eta_re": float(traj.eta.real.min()),
    }
    try:
        res["relaxation_rate"] = fit_relaxation_rate(traj, eta_inf)
    except ValueError:
        res["relaxation_rate"] = None
    path = _out(out_dir, cfg.outputs.get("csv"))
    if path:
        write_series_csv(path, ["t", "eta_re", "eta_im"], [traj.times, traj.eta.real, traj.eta.imag],
                         _provenance(cfg))
    return res


def _filter(cfg, params, state0, out_dir, workers):
    n = int(round(cfg.T / cfg.dt))
    noise = make_noise_path(cfg.seed, cfg.dt, n)
    u = Controls(**cfg.controls)
    traj = propagate_filter(state0, params, lambda t, s: u, noise)
    path = _out(out_dir, cfg.outputs.get("csv"))
    if path:
        traj.to_csv(path, _provenance(cfg))
    return {
        "q_bar_T": float(traj.q_bar[-1]),
        "p_bar_T": float(traj.p_bar[-1]),
        "eta_T": _cplx(traj.eta[-1]),
    }


def _oracle(cfg, params, state0, out_dir, workers):
    n = int(round(cfg.T / cfg.dt))
    noise = make_noise_path(cfg.seed, cfg.dt, n)
    g = cfg.grid
    if "x_min" in g:
        grid = GridSpec(g["x_min"], g["x_max"], g["n_points"])
    else:
        grid = suggest_grid(state0, params, cfg.T, g["n_points"])
    u = Controls(**cfg.controls)
    policy = None if u == Controls() else (lambda t, s: u)
    rep = run_oracle_comparison(state0, params, policy, noise, grid, cfg.record_every, cfg.scheme)
    report = _out(out_dir, cfg.outputs.get("report"))
    if report:
        rep.write_json(report)
    path = _out(out_dir, cfg.outputs.get("csv"))
    if path:
        rep.write_csv(path)
    return {
        "min_fidelity": rep.min_fidelity,
        "max_abs_deviation": rep.max_abs_deviation,
        "max_rel_deviation": rep.max_rel_deviation,
        "grid": {"x_min": grid.x_min, "x_max": grid.x_max, "n_points": grid.n_points},
    }


def _value(cfg, params, state0):
    cost = _cost(cfg)
    dyn = LinearDynamics.from_params(params)
    eta_inf = eta_fixed_point(params)
    K = diffusion_matrix_K(params, eta_inf)
    vf = lqg_value_function(cost, dyn, K, uniform_grid(cfg.T, cfg.dt))
    return cost, dyn, K, vf, eta_inf


def _lqg(cfg, params, state0, out_dir, workers):
    cost, dyn, K, vf, eta_inf = _value(cfg, params, state0)
    x0 = np.array([state0.q_bar, state0.p_bar])
    u0 = optimal_u(0.0, vf.Sigma[0] @ x0, cost, dyn)
    path = _out(out_dir, cfg.outputs.get("csv"))
    if path:
        S = vf.Sigma
        write_series_csv(path, ["t", "Sigma_qq", "Sigma_qp", "Sigma_pp", "a"],
                         [vf.times, S[:, 0, 0], S[:, 0, 1], S[:, 1, 1], vf.a], _provenance(cfg))
    return {
        "eta_infinity": _cplx(eta_inf),
        "K": K.K.tolist(),
        "Sigma_t0": vf.Sigma[0].tolist(),
        "a_t0": float(vf.a[0]),
        "value_S": value_function(0.0, x0, vf),
        "u_star_t0": {"f": u0.f, "v": u0.v},
    }


def _hjb(cfg, params, state0, out_dir, workers):
    cost, dyn, K, vf, _ = _value(cfg, params, state0)
    rng = np.random.default_rng(cfg.seed)
    b = cfg.box
    ts = rng.uniform(b["t_min"], b["t_max"], cfg.n_check)
    xs = rng.uniform(-b["x_halfwidth"], b["x_halfwidth"], (cfg.n_check, 2))
    res = np.array([hjb_residual(t, x, vf, cost, dyn, K) for t, x in zip(ts, xs)])
    S = np.array([value_function(t, x, vf) for t, x in zip(ts, xs)])
    return {
        "n_check": cfg.n_check,
        "max_abs_residual": float(np.abs(res).max()),
        "max_scaled_residual": float((np.abs(res) / (1 + np.abs(S))).max()),
    }


def _mc(cfg, params, state0, out_dir, workers):
    cost, dyn, K, vf, _ = _value(cfg, params, state0)
    x0 = [state0.q_bar, state0.p_bar]
    mc = monte_carlo_value(state0, params, cost, dyn, vf, cfg.n_traj, cfg.seed,
                           gain_scale=cfg.gain_scale, workers=workers)
    path = _out(out_dir, cfg.outputs.get("per_path_csv"))
    if path:
        write_series_csv(path, ["path", "seed", "cost"],
                         [np.arange(mc.n_traj), cfg.seed + np.arange(mc.n_traj), mc.costs], _provenance(cfg))
    return {
        "params": cfg.params,
        "cost": cfg.cost,
        "t0": 0.0,
        "x0": x0,
        "value_S": value_function(0.0, x0, vf),
        "mc_mean": mc.mean_J,
        "mc_stderr": mc.stderr,
        "expected_cost_discrete": expected_cost_discrete(state0, params, cost, dyn, vf, cfg.gain_scale),
        "gain_scale": cfg.gain_scale,
        "n_traj": mc.n_traj,
        "dt": cfg.dt,
        "seed": cfg.seed,
    }


_DISPATCH = {
    "riccati": _riccati,
    "filter": _filter,
    "oracle": _oracle,
    "lqg": _lqg,
    "hjb-check": _hjb,
    "mc": _mc,
}


def run_scenario(cfg: ScenarioConfig, out_dir=None, workers: int = 1) -> RunSummary:
    """Execute one scenario; writes the summary JSON when ``out_dir`` is given."""
    start = time.perf_counter()
    params, state0 = _build(cfg)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    results = _DISPATCH[cfg.scenario](cfg, params, state0, out_dir, workers)
    summary = RunSummary(cfg.scenario, cfg.seed, cfg.dt, cfg.to_dict(), results,
                         time.perf_counter() - start)
    if out_dir is not None and cfg.outputs.get("summary"):
        with open(os.path.join(out_dir, cfg.outputs["summary"]), "w") as fh:
            json.dump(summary.to_dict(), fh, indent=2, sort_keys=True)
    return summary
