import json
import math

import numpy as np
import pytest

from ecsim.errors import GridCoverageError, NormCollapseError
from ecsim.filtering import NoisePath, filter_drift_diffusion, make_noise_path, path_seed, propagate_filter
from ecsim.grid import GridSpec, moments
from ecsim.oracle import (
    _Stepper,
    grid_trajectory,
    run_oracle_comparison,
    sse_step,
    suggest_grid,
)
from ecsim.states import ZERO_CONTROLS, Controls, ExtendedCoherentState, PhysicalParams, sample_wavefunction


def _eta_from_moments(c_qq, c_qp, hbar=1.0):
    re = 1.0 / c_qq
    return re - 1j * 2.0 * re * c_qp / hbar


def test_zero_dt_is_identity(natural):
    g = GridSpec(-20, 20, 1024)
    psi = sample_wavefunction(ExtendedCoherentState(0.5, 0.3, 1.2, 0.4), 1.0, g)
    out = sse_step(psi, natural, ZERO_CONTROLS, 0.0, 0.0, 0.0)
    np.testing.assert_allclose(out.amplitudes, psi.amplitudes, atol=1e-14)


@pytest.mark.parametrize("scheme", ["exponential", "euler"])
def test_step_is_normalized(natural, scheme):
    g = GridSpec(-20, 20, 256)
    psi = sample_wavefunction(ExtendedCoherentState(0.0, 0.0, 1.0), 1.0, g)
    out = sse_step(psi, natural, Controls(0.2, -0.1), 0.01, -0.02, 1e-3, scheme=scheme)
    assert out.norm() == pytest.approx(1.0, abs=1e-12)


def test_norm_collapse_raised():
    g = GridSpec(-20, 20, 256)
    psi = sample_wavefunction(ExtendedCoherentState(0.0, 0.0, 1.0), 1.0, g)
    # A measurement this strong removes most of the norm in one step.
    prm = PhysicalParams.natural(0.0, 1000.0, 0.0)
    with pytest.raises(NormCollapseError):
        sse_step(psi, prm, ZERO_CONTROLS, 0.0, 0.0, 0.1)


def test_free_particle_eta_matches_closed_form():
    prm = PhysicalParams()
    g = GridSpec(-40, 40, 2048)
    eta0 = 2.0
    psi = sample_wavefunction(ExtendedCoherentState(0.0, 0.0, eta0), 1.0, g)
    T, dt = 3.0, 1e-2
    mom, _ = grid_trajectory(psi, prm, NoisePath.zeros(dt, int(T / dt)))
    t = dt * np.arange(mom.shape[0])
    exact = eta0 / (1 + 0.5j * eta0 * t)
    got = _eta_from_moments(mom[:, 2], mom[:, 3])
    assert np.max(np.abs(got - exact) / np.abs(exact)) < 1e-3


def test_single_step_mean_consistency():
    # kappa_tilde = 0: the grid <q> increment against the filter drift + diffusion.
    prm = PhysicalParams.natural(1.0, 1.0, 0.0)
    g = GridSpec(-20, 20, 2048)
    s = ExtendedCoherentState(0.7, -0.4, 1.3, 0.6)
    psi = sample_wavefunction(s, 1.0, g)
    u = Controls(0.3, 0.2)
    for dt, dW in [(1e-3, 0.02), (1e-4, 0.006), (1e-5, -0.002)]:
        q1, p1, *_ = moments(sse_step(psi, prm, u, dW, 0.0, dt), 1.0)
        drift, diff = filter_drift_diffusion(s, prm, u)
        pred = np.array([s.q_bar, s.p_bar]) + drift * dt + diff[:, 0] * dW
        err = np.abs(np.array([q1, p1]) - pred)
        assert np.all(err <= 5.0 * (dt * dt + dt * abs(dW) + dW * dW)), (dt, err)


def test_pre_norm_drift_halves_with_dt(natural):
    g = GridSpec(-20, 20, 1024)
    psi = sample_wavefunction(ExtendedCoherentState(0.0, 0.0, 2.0), 1.0, g)
    fine = make_noise_path(3, 1e-4, 2000)
    n_fine = fine.n_steps
    drifts = []
    for factor in (2, 1):
        dt = fine.dt * factor
        dW = fine.dW.reshape(-1, factor).sum(axis=1)
        dWt = fine.dW_tilde.reshape(-1, factor).sum(axis=1)
        st = _Stepper(g, natural)
        amp = psi.amplitudes.astype(complex)
        dev = []
        for k in range(n_fine // factor):
            amp, norm = st.step(amp, ZERO_CONTROLS, dW[k], dWt[k], dt)
            dev.append(abs(norm - 1.0))
        drifts.append(np.mean(dev))
    ratio = drifts[0] / drifts[1]
    assert 1.6 < ratio < 2.4


def test_deterministic_fidelity_near_one():
    prm = PhysicalParams.natural(1.0, 0.0, 0.0)
    s = ExtendedCoherentState(1.0, 0.5, 1.5, 0.5)
    g = GridSpec(-20, 20, 1024)
    rep = run_oracle_comparison(s, prm, None, NoisePath.zeros(1e-3, 2000), g)
    assert rep.min_fidelity >= 1 - 1e-6


def test_ehrenfest_regression(natural):
    # Grid increments regressed on the predicted drift and noise loadings.
    # At real eta the cross loadings are tiny, so they are subtracted rather than fitted.
    s = ExtendedCoherentState(1.0, 0.0, 2.0, 0.0)
    g = GridSpec(-20, 20, 1024)
    noise = make_noise_path(17, 1e-3, 3000)
    psi = sample_wavefunction(s, 1.0, g)
    mom, _ = grid_trajectory(psi, natural, noise)
    inc = np.diff(mom[:, :2], axis=0)
    for j in range(2):
        rows, cross = [], []
        for k in range(noise.n_steps):
            st = ExtendedCoherentState.from_eta(mom[k, 0], mom[k, 1], _eta_from_moments(mom[k, 2], mom[k, 3]))
            drift, diff = filter_drift_diffusion(st, natural)
            rows.append((drift[j] * noise.dt, diff[j, j] * (noise.dW, noise.dW_tilde)[j][k]))
            cross.append(diff[j, 1 - j] * (noise.dW, noise.dW_tilde)[1 - j][k])
        X = np.array(rows)
        coef, *_ = np.linalg.lstsq(X, inc[:, j] - np.array(cross), rcond=None)
        np.testing.assert_allclose(coef, 1.0, atol=0.05)


def test_report_serialization(tmp_path, natural):
    s = ExtendedCoherentState(1.0, 0.0, 1.0)
    rep = run_oracle_comparison(s, natural, None, make_noise_path(1, 1e-3, 200), GridSpec(-20, 20, 512))
    rep.write_json(tmp_path / "r.json")
    rep.write_csv(tmp_path / "m.csv")
    d = json.loads((tmp_path / "r.json").read_text())
    assert set(d["max_rel_deviation"]) == {"q_mean", "p_mean", "c_qq", "c_qp", "c_pp"}
    assert d["seed"] == 1 and d["min_fidelity"] > 0.999
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0].startswith("# seed=1")
    assert lines[3].split(",")[0] == "t"


def test_suggest_grid_covers_and_rejects(natural):
    s = ExtendedCoherentState(1.0, 0.0, 1.0)
    g = suggest_grid(s, natural, 2.0)
    assert g.x_min < -5 and g.x_max > 7
    with pytest.raises(GridCoverageError):
        suggest_grid(ExtendedCoherentState(0.0, 0.0, 1.0, 60.0), natural, 2.0, n_points=256)


def test_controls_shared_by_both_sides(natural):
    s = ExtendedCoherentState(0.0, 0.0, 2.0)
    pol = lambda t, st: Controls(-st.q_bar, 0.5)
    rep = run_oracle_comparison(s, natural, pol, make_noise_path(8, 1e-3, 1000), GridSpec(-20, 20, 1024))
    assert rep.min_fidelity > 0.9999
    assert rep.worst_rel_deviation < 1e-2


def test_weak_consistency_ensemble(natural):
    # 1000 paths on a coarse grid: ensemble means agree within Monte Carlo error.
    g = GridSpec(-10, 10, 256)
    s = ExtendedCoherentState(1.0, 0.0, 2.0)
    psi = sample_wavefunction(s, 1.0, g)
    n_paths, dt, n = 1000, 5e-3, 100
    grid_end = np.empty((n_paths, 2))
    ecs_end = np.empty((n_paths, 2))
    for i in range(n_paths):
        noise = make_noise_path(path_seed(500, i), dt, n)
        mom, _ = grid_trajectory(psi, natural, noise)
        grid_end[i] = mom[-1, :2]
        tr = propagate_filter(s, natural, None, noise)
        ecs_end[i] = tr.q_bar[-1], tr.p_bar[-1]
    se = ecs_end.std(axis=0, ddof=1) / math.sqrt(n_paths)
    assert np.all(np.abs(grid_end.mean(axis=0) - ecs_end.mean(axis=0)) <= 3 * se)
