import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfisac.baselines import (LAMBDA_GRID, SCHEMES, BaselineCache, cbp_beamformer,
                              cbp_sensing_beamformer, combine_and_select, global_scale, mmso_bisection,
                              mmso_feasible, null_space_projector, nsp_leakage, nsp_sensing_beamformer,
                              principal_direction, rci_beamformer, rescale_per_ap, run_baseline)
from cfisac.experiments import desk_config
from cfisac.metrics import ap_powers, build_E, scnr_trace, BeamformingSolution, sinr_all
from cfisac.scenario import ScenarioRealization, SystemConfig
from cfisac.sdr import formulate_p2

from conftest import realize


def with_channels(real, h):
    return ScenarioRealization(np.asarray(h, dtype=complex), real.aod, real.aoa, real.sens_var,
                               real.alpha, real.presence_prob, real.path_gain)


@given(st.integers(0, 2 ** 31))
def test_rescale_hits_every_budget(seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((3, 8)) + 1j * rng.standard_normal((3, 8))
    out = rescale_per_ap(v, [0.5, 2.0], 4)
    np.testing.assert_allclose(ap_powers(out, 2, 4), [0.5, 2.0], rtol=1e-10)
    g = global_scale(v, [0.5, 2.0], 4)
    p = ap_powers(g, 2, 4)
    assert np.all(p <= np.array([0.5, 2.0]) * (1 + 1e-10))
    assert np.any(np.isclose(p, [0.5, 2.0], rtol=1e-10))


def test_rescale_keeps_silent_ap_silent():
    v = np.zeros((1, 4), dtype=complex)
    v[0, :2] = 1
    out = rescale_per_ap(v, [1.0, 1.0], 2)
    np.testing.assert_array_equal(out[0, 2:], 0)


def test_cbp_single_user_is_matched_filter():
    cfg = desk_config(K=1)
    real = realize(cfg, 1, 0)
    v = cbp_beamformer(real, cfg)
    np.testing.assert_allclose(ap_powers(v, cfg.M_t, cfg.N), cfg.P_m, rtol=1e-12)
    for m in range(cfg.M_t):
        s = slice(m * cfg.N, (m + 1) * cfg.N)
        cos = abs(np.vdot(real.h[0, s], v[0, s])) / (np.linalg.norm(real.h[0, s]) * np.linalg.norm(v[0, s]))
        assert cos == pytest.approx(1.0)


def test_cbp_splits_budget_equally(desk, desk_real):
    v = cbp_beamformer(desk_real, desk)
    p = np.sum(np.abs(v.reshape(desk.K, desk.M_t, desk.N)) ** 2, axis=2)
    np.testing.assert_allclose(p, np.tile(np.asarray(desk.P_m) / desk.K, (desk.K, 1)))


def test_rci_on_orthogonal_channels_has_no_interference(desk, desk_real):
    h = np.zeros((desk.K, desk.dim), dtype=complex)
    h[0, 0] = 1e-4
    h[1, desk.N] = 2e-4
    v = rci_beamformer(with_channels(desk_real, h), desk)
    g = np.abs(h.conj() @ v.T) ** 2
    assert g[0, 1] == pytest.approx(0, abs=1e-30) and g[1, 0] == pytest.approx(0, abs=1e-30)
    assert np.all(ap_powers(v, desk.M_t, desk.N) <= np.asarray(desk.P_m) * (1 + 1e-12))


def test_rci_tends_to_conjugate_direction_under_heavy_regularization(desk_real):
    cfg = desk_config(sigma_k_sq=1e6)
    v = rci_beamformer(desk_real, cfg)
    for k in range(cfg.K):
        h = desk_real.h[k]
        cos = abs(np.vdot(h, v[k])) / (np.linalg.norm(h) * np.linalg.norm(v[k]))
        assert cos == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=20)
@given(st.integers(1, 5), st.integers(0, 2 ** 31))
def test_null_space_projector_properties(K, seed):
    rng = np.random.default_rng(seed)
    n = 6
    h = rng.standard_normal((K, n)) + 1j * rng.standard_normal((K, n))
    P = null_space_projector(h)
    np.testing.assert_allclose(P @ P, P, atol=1e-12)
    np.testing.assert_allclose(P, P.conj().T, atol=1e-12)
    assert np.max(np.abs(h.conj() @ P)) <= 1e-12 * np.abs(h).max()
    assert np.real(np.trace(P)) == pytest.approx(n - K)


def test_null_space_projector_rejects_full_rank():
    with pytest.raises(ValueError, match="empty"):
        null_space_projector(np.ones((4, 4)))


def test_nsp_identity_when_already_orthogonal(desk, desk_real):
    E = build_E(desk_real, desk).E
    u = principal_direction(E, desk.P_m, desk.N)
    # channels orthogonal to u: the projection leaves u untouched
    rng = np.random.default_rng(0)
    h = rng.standard_normal((desk.K, desk.dim)) + 1j * rng.standard_normal((desk.K, desk.dim))
    h -= np.outer(h @ u.conj(), u) / np.vdot(u, u)
    real = with_channels(desk_real, h)
    v = nsp_sensing_beamformer(real, E, desk)
    cos = abs(np.vdot(u, v[0])) / np.linalg.norm(v[0])
    assert cos == pytest.approx(1.0)
    assert nsp_leakage(h, v) <= 1e-12


def test_nsp_leakage_small_on_random_channels(desk, desk_real):
    v = nsp_sensing_beamformer(desk_real, build_E(desk_real, desk), desk)
    assert nsp_leakage(desk_real.h, v) <= 1e-10
    assert np.all(ap_powers(v, desk.M_t, desk.N) <= np.asarray(desk.P_m) * (1 + 1e-12))


def test_principal_direction_tie_uses_budget_weights():
    E = np.diag([1.0, 0.0, 1.0, 0.0]).astype(complex)
    u = principal_direction(E, [1.0, 4.0], 2)
    np.testing.assert_allclose(np.abs(u), [1 / np.sqrt(5), 0, 2 / np.sqrt(5), 0], atol=1e-12)
    assert np.all(principal_direction(np.zeros((4, 4)), [1, 1], 2) == 0)


def test_cbp_sensing_beam_points_at_targets(desk, desk_real):
    E = build_E(desk_real, desk).E
    v = cbp_sensing_beamformer(desk_real, E, desk)
    # full power along the steering vectors reaches the one-target ceiling
    assert scnr_trace(BeamformingSolution(v), E, desk) == pytest.approx(0.1)


def test_mmso_single_user_closed_form():
    cfg = desk_config(K=1)
    real = realize(cfg, 4, 0)
    inst, _ = formulate_p2(real, cfg)
    res = mmso_bisection(inst, cfg)
    norms = np.linalg.norm(real.h.reshape(cfg.M_t, cfg.N), axis=1)
    exact = (norms @ np.sqrt(cfg.P_m)) ** 2 / cfg.sigma_k_sq[0]
    assert res.t == pytest.approx(exact, rel=1e-3)
    assert res.t <= exact * (1 + 1e-9)
    assert sinr_all(real.h, res.v, cfg.sigma_k_sq)[0] == pytest.approx(res.t, rel=1e-3)


def test_mmso_bisection_contract(desk, desk_real):
    inst, _ = formulate_p2(desk_real, desk)
    res = mmso_bisection(inst, desk)
    assert res.upper - res.t <= 1e-4 * res.t
    assert mmso_feasible(inst, res.t) is not None
    assert all(ok == (t <= res.t) for t, ok in res.trace[1:])
    s = sinr_all(desk_real.h, res.v, desk.sigma_k_sq)
    assert s.min() >= res.t * (1 - 1e-5)
    assert np.all(ap_powers(res.v, desk.M_t, desk.N) <= np.asarray(desk.P_m) * (1 + 1e-6))


def test_combination_endpoints(desk, desk_real):
    E = build_E(desk_real, desk)
    sens = cbp_sensing_beamformer(desk_real, E, desk)
    comm = cbp_beamformer(desk_real, desk)
    sol0, sw = combine_and_select(sens, comm, desk_real, E, desk, grid=(0.0,))
    np.testing.assert_allclose(sol0.v, rescale_per_ap(comm, desk.P_m, desk.N))
    sol1, _ = combine_and_select(sens, comm, desk_real, E, desk, grid=(1.0,))
    np.testing.assert_allclose(sol1.v, rescale_per_ap(sens, desk.P_m, desk.N))
    assert sw.selected_lambda == 0.0


def test_combination_selection_rule(desk, desk_real):
    E = build_E(desk_real, desk)
    sens = cbp_sensing_beamformer(desk_real, E, desk)
    comm = cbp_beamformer(desk_real, desk)
    sol, sw = combine_and_select(sens, comm, desk_real, E, desk)
    assert len(sw.lambda_grid) == len(LAMBDA_GRID) == 21
    if sw.feasible.any():
        assert sw.selection_rule == "max-scnr-subject-to-rates"
        assert sw.scnr[sw.selected_index] == pytest.approx(sw.scnr[sw.feasible].max())
    else:
        assert sw.min_rate[sw.selected_index] == pytest.approx(sw.min_rate.max())
    np.testing.assert_allclose(ap_powers(sol.v, desk.M_t, desk.N), desk.P_m, rtol=1e-10)


@pytest.mark.parametrize("name", SCHEMES[1:])
def test_run_baseline(name, desk, desk_real):
    cache = BaselineCache(desk_real, desk)
    sol = run_baseline(name, desk_real, desk, cache)
    assert sol.scheme == name
    assert sol.v.shape == (desk.K, desk.dim)
    assert np.isfinite(sol.diagnostics["scnr"])
    if name.startswith("NSP"):
        assert sol.diagnostics["nsp_leakage"] <= 1e-10


def test_unknown_baseline(desk, desk_real):
    with pytest.raises(ValueError):
        run_baseline("ZF", desk_real, desk)
    with pytest.raises(KeyError):
        BaselineCache(desk_real, desk).get("nope")


def test_nsp_needs_spare_dimensions():
    cfg = SystemConfig(R_min=1.0, M_t=1, M_r=1, N=2, K=2, Q=1)
    real = realize(cfg, 1, 0)
    with pytest.raises(ValueError):
        nsp_sensing_beamformer(real, build_E(real, cfg), cfg)
