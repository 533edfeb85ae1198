import numpy as np
import pytest

from ropdf.case_model import EquilibriumPoint, IslandingError, LineId, load_case
from ropdf.stochastic_sim import (CHUNK_SIZE, EnsembleRNG, EnsembleState, NoiseModel, SampleDivergenceError,
                                  ScenarioConfig, build_noise, diffusion_matrix, electrical_power,
                                  milstein_correction, read_record, run_scenario, sample_initial, step,
                                  system_drift, write_record, write_record_csv)
from ropdf.qoi import LineQoi, line_energy, line_energy_drift

from conftest import toy_case


def equilibrium_state(case, eq, m=3):
    n = case.n
    return EnsembleState(0.0, np.tile(eq.v_star, (m, 1)), np.full((m, n), case.omega_R),
                         np.tile(eq.delta_star, (m, 1)), np.zeros((m, n)))


def test_build_noise_case9_values():
    nm = build_noise(9, 0.44)
    assert np.allclose(np.diag(nm.R), 1.0)
    off = nm.R[~np.eye(9, dtype=bool)]
    assert np.all(off == 0.44)
    assert np.allclose(nm.C, np.tril(nm.C))


def test_build_noise_identity():
    assert np.array_equal(build_noise(3, 0.0).C, np.eye(3))


def test_build_noise_factor_reproduces_R():
    nm = build_noise(2, 0.36)
    assert np.max(np.abs(nm.C @ nm.C.T - nm.R)) <= 1e-12


def test_build_noise_rejects_non_pd():
    with pytest.raises(np.linalg.LinAlgError):
        build_noise(3, -0.6)
    with pytest.raises(np.linalg.LinAlgError):
        build_noise(3, 1.0)


def test_noise_model_validates():
    with pytest.raises(ValueError):
        NoiseModel(0.0, 0.05, np.eye(2), np.eye(2))
    with pytest.raises(ValueError):
        NoiseModel(1.0, 0.05, np.eye(2), 2 * np.eye(2))


@pytest.mark.parametrize("name", ["case9", "case30", "case57"])
def test_drift_vanishes_at_equilibrium(name):
    case, eq = load_case(name)
    drift = system_drift(equilibrium_state(case, eq), case, build_noise(case.n, 0.36))
    assert np.max(np.abs(drift)) <= 1e-8


def test_drift_blocks(case9):
    case, eq = case9
    st = equilibrium_state(case, eq)
    st.eta[:] = 0.3
    st.omega[:] += 0.01 * np.arange(9)
    drift = system_drift(st, case, build_noise(9, 0.44, theta=1.0))
    assert np.all(drift[:, :9] == 0.0)
    assert np.allclose(drift[:, 27:], -0.3)
    assert np.allclose(drift[:, 18:27], 0.01 * np.arange(9))


def test_electrical_power_matches_dense_formula(case9):
    case, eq = case9
    rng = np.random.default_rng(1)
    v = eq.v_star + 0.05 * rng.normal(size=(4, 9))
    d = eq.delta_star + 0.2 * rng.normal(size=(4, 9))
    dense = np.empty((4, 9))
    for s in range(4):
        D = d[s][:, None] - d[s][None, :]
        dense[s] = ((case.G * np.cos(D) + case.B * np.sin(D)) @ v[s]) * v[s]
    assert np.allclose(electrical_power(v, d, case), dense, atol=1e-12)


def test_drift_flags_nonfinite(case9):
    case, eq = case9
    st = equilibrium_state(case, eq)
    st.delta[1, 0] = np.inf
    with pytest.raises(SampleDivergenceError) as info:
        system_drift(st, case, build_noise(9, 0.44))
    assert list(info.value.indices) == [1]


def test_sample_initial_statistics(case9):
    case, eq = case9
    nm = build_noise(9, 0.44)
    m = 100_000
    st = sample_initial(case, eq, nm, m, seed=3)
    sd = 0.1 * np.std(eq.v_star)
    # folding is negligible: v* is ~1 and sd ~ 0.003
    assert np.all(np.abs(st.v.mean(axis=0) - eq.v_star) <= 3 * sd / np.sqrt(m))
    cov = np.cov(st.eta, rowvar=False)
    target = nm.alpha ** 2 * nm.R
    assert np.linalg.norm(cov - target) <= 0.05 * np.linalg.norm(target)
    assert np.all(st.omega == 1.0)
    assert np.all(st.delta == eq.delta_star)
    assert np.all(st.v > 0)


def test_sample_initial_deterministic(case9):
    case, eq = case9
    nm = build_noise(9, 0.44)
    a = sample_initial(case, eq, nm, 50, seed=7)
    b = sample_initial(case, eq, nm, 50, seed=7)
    assert np.array_equal(a.as_array(), b.as_array())


def test_sample_initial_degenerate_voltages_warns():
    case = toy_case(2)
    eq = EquilibriumPoint(np.ones(2), np.zeros(2))
    with pytest.warns(RuntimeWarning):
        st = sample_initial(case, eq, build_noise(2, 0.0), 1000, seed=0)
    assert 0 < np.std(st.v) < 1e-3


def test_ensemble_rng_nested_chunks():
    big = EnsembleRNG(5, 3 * CHUNK_SIZE).standard_normal(4)
    small = EnsembleRNG(5, CHUNK_SIZE).standard_normal(4)
    assert np.array_equal(big[:CHUNK_SIZE], small)


def test_zero_noise_step_keeps_equilibrium(case9):
    case, eq = case9
    nm = build_noise(9, 0.44, alpha=0.0)
    st = equilibrium_state(case, eq)
    new = step(st, case, nm, 1e-2, rng=EnsembleRNG(0, st.m))
    assert np.max(np.abs(new.as_array() - st.as_array())) <= 1e-10


def test_step_keeps_voltages_exactly(case9):
    case, eq = case9
    nm = build_noise(9, 0.44)
    st = sample_initial(case, eq, nm, 20, seed=1)
    new = step(st, case, nm, 1e-2, rng=EnsembleRNG(2, 20))
    assert np.array_equal(new.v, st.v)


def test_milstein_correction_is_identically_zero(case9):
    case, eq = case9
    nm = build_noise(9, 0.44)
    st = sample_initial(case, eq, nm, 16, seed=1)
    xi = np.random.default_rng(0).normal(size=(16, 9))
    assert np.all(milstein_correction(nm, np.sqrt(1e-2) * xi, 1e-2) == 0.0)
    a = step(st, case, nm, 1e-2, xi=xi, milstein=False)
    b = step(st, case, nm, 1e-2, xi=xi, milstein=True)
    assert np.array_equal(a.as_array(), b.as_array())


def test_diffusion_matrix_structure():
    nm = build_noise(3, 0.3, theta=2.0, alpha=0.1)
    S = diffusion_matrix(nm, 3)
    assert np.all(S[:9] == 0)
    assert np.allclose(S[9:, 9:], 0.1 * 2.0 * nm.C)


def test_pure_ou_stationary_variance():
    """With only eta evolving, its variance settles at alpha^2 R."""
    n, m = 3, 10_000
    nm = build_noise(n, 0.44)
    rng = EnsembleRNG(11, m)
    eta = np.zeros((m, n))
    dt = 1e-2
    for _ in range(int(50 / dt)):
        eta += -nm.theta * eta * dt + nm.scale * np.sqrt(dt) * rng.standard_normal(n) @ nm.C.T
    cov = np.cov(eta, rowvar=False)
    assert np.allclose(np.diag(cov), nm.alpha ** 2, rtol=0.05)
    assert np.linalg.norm(cov - nm.alpha ** 2 * nm.R) <= 0.05 * np.linalg.norm(nm.alpha ** 2 * nm.R)


def _small_cfg(**kw):
    base = dict(dt=1e-2, burn_in_T=1.0, post_T=1.0, tripped_line=LineId(8, 9), m=64, seed=4,
                record_lines=(LineId(4, 9), LineId(7, 8)))
    base.update(kw)
    return ScenarioConfig(**base)


def test_run_scenario_shapes_and_positivity(case9):
    case, eq = case9
    rec = run_scenario(case, eq, build_noise(9, 0.44), _small_cfg())
    assert rec.times.size == 101 and rec.times[0] == 0.0
    assert np.all(np.diff(rec.times) > 0)
    for l in rec.lines:
        assert rec.u[l].shape == (64, 101)
        assert np.all(rec.u[l] > 0)
        assert rec.b[l] == case.b(l)


def test_run_scenario_stride(case9):
    case, eq = case9
    rec = run_scenario(case, eq, build_noise(9, 0.44), _small_cfg(record_stride=10))
    assert np.allclose(rec.times, np.arange(11) * 0.1)


def test_run_scenario_zero_post(case9):
    case, eq = case9
    rec = run_scenario(case, eq, build_noise(9, 0.44), _small_cfg(post_T=0.0))
    assert rec.times.size == 0
    assert rec.u[LineId(4, 9)].shape == (64, 0)


def test_run_scenario_islanding_before_integration():
    case = toy_case(2)
    eq = EquilibriumPoint(np.array([1.0, 1.01]), np.zeros(2))
    cfg = ScenarioConfig(burn_in_T=1e9, post_T=1.0, tripped_line=LineId(1, 2), m=4, record_lines=())
    with pytest.raises(IslandingError):
        run_scenario(case, eq, build_noise(2, 0.0), cfg)


def test_run_scenario_deterministic(case9):
    case, eq = case9
    nm = build_noise(9, 0.44)
    a = run_scenario(case, eq, nm, _small_cfg())
    b = run_scenario(case, eq, nm, _small_cfg())
    for l in a.lines:
        assert np.array_equal(a.u[l], b.u[l])
        assert np.array_equal(a.mu[l], b.mu[l])


def test_recorded_drift_matches_closed_form(case9):
    case, eq = case9
    rec = run_scenario(case, eq, build_noise(9, 0.44), _small_cfg(post_T=0.0, record_lines=(LineId(4, 9),)))
    assert rec.mu[LineId(4, 9)].shape[1] == 0


def test_angle_gauge_invariance(case9):
    case, eq = case9
    shifted = EquilibriumPoint(eq.v_star, eq.delta_star + 0.7)
    nm = build_noise(9, 0.44)
    a = run_scenario(case, eq, nm, _small_cfg())
    b = run_scenario(case, shifted, nm, _small_cfg())
    for l in a.lines:
        assert np.allclose(a.u[l], b.u[l], rtol=1e-9, atol=1e-12)
        assert np.allclose(a.mu[l], b.mu[l], rtol=1e-7, atol=1e-12)


def test_record_binary_and_csv_round_trip(tmp_path, case9):
    case, eq = case9
    rec = run_scenario(case, eq, build_noise(9, 0.44), _small_cfg(m=5, post_T=0.05))
    back = read_record(write_record(rec, tmp_path / "r.trj"))
    assert back.lines == rec.lines and np.array_equal(back.times, rec.times)
    for l in rec.lines:
        assert np.array_equal(back.u[l], rec.u[l]) and back.b[l] == rec.b[l]
    rows = (write_record_csv(rec, tmp_path / "r.csv")).read_text().splitlines()
    assert len(rows) == 1 + 5 * rec.times.size
    assert rows[0].startswith("sample,t,u_4-9,mu_4-9")


def test_record_subset_is_smaller_ensemble(case9):
    case, eq = case9
    nm = build_noise(9, 0.44)
    big = run_scenario(case, eq, nm, _small_cfg(m=CHUNK_SIZE + 10, burn_in_T=0.1, post_T=0.1))
    small = run_scenario(case, eq, nm, _small_cfg(m=CHUNK_SIZE, burn_in_T=0.1, post_T=0.1))
    assert np.array_equal(big.subset(CHUNK_SIZE).u[LineId(4, 9)], small.u[LineId(4, 9)])
