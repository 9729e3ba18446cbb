"""Tests for the perfect-CSI alternating optimization: beamforming SDP,
placement surrogates with certified curvature constants, and the outer loop."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluidbeam import _quadform, channel, perfect_csi

LAM = 0.06
FD_STEP = 1e-6 * LAM


def small_config(**kw):
    base = dict(
        n_antennas=4,
        n_users=2,
        n_paths=4,
        region_over_lambda=2.0,
        wavelength=LAM,
    )
    base.update(kw)
    return channel.ScenarioConfig(**base)


def aligned_scenario(gamma_db=10.0, power=1.0, n_antennas=4):
    """Single user whose channel is proportional to the target steering vector."""
    geom = channel.ArrayGeometry(
        width=2 * LAM, length=2 * LAM, n_antennas=n_antennas,
        rx_rows=2, rx_cols=2, min_spacing=LAM / 2, wavelength=LAM,
    )
    target = channel.TargetModel(elevation=np.deg2rad(45), azimuth=np.deg2rad(-30))
    user = channel.PathSet([target.elevation], [target.azimuth], [1e-3 + 0j])
    return channel.Scenario(
        geometry=geom,
        users=(user,),
        target=target,
        noise_power=1e-11,
        radar_noise_power=1e-11,
        power_budget=power,
        sinr_thresholds=(10.0 ** (gamma_db / 10.0),),
    )


def fd_gradient(fun, flat, step=FD_STEP):
    flat = np.asarray(flat, dtype=float)
    g = np.zeros(flat.size)
    for i in range(flat.size):
        up = flat.copy()
        up[i] += step
        dn = flat.copy()
        dn[i] -= step
        g[i] = (fun(up) - fun(dn)) / (2 * step)
    return g


def random_psd(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return a @ a.conj().T / n


# ---------------------------------------------------------------------------
# beamforming SDP


def test_sdp_aligned_user_hits_unconstrained_optimum():
    sc = aligned_scenario()
    layout = channel.fafp_layout(sc.geometry)
    res = perfect_csi.beamforming_sdp(sc, layout)
    eta = channel.integrated_coefficient(sc.target, 2, 2, sc.radar_noise_power)
    ideal = eta * sc.power_budget * sc.geometry.n_antennas
    assert res.status == "optimal"
    assert res.relaxation_value == pytest.approx(ideal, rel=1e-6)
    assert res.objective == pytest.approx(ideal, rel=1e-5)
    assert res.certified


def test_sdp_rank1_sampling_never_beats_relaxation():
    # random rank-1 feasible beamformers stay below the SDR optimum
    sc = aligned_scenario()
    layout = channel.fafp_layout(sc.geometry)
    res = perfect_csi.beamforming_sdp(sc, layout)
    rng = np.random.default_rng(7)
    a = channel.transmit_steering(
        layout, sc.target.elevation, sc.target.azimuth, LAM
    )
    eta = channel.integrated_coefficient(sc.target, 2, 2, sc.radar_noise_power)
    n = sc.geometry.n_antennas
    for _ in range(200):
        w = rng.standard_normal((n, 1)) + 1j * rng.standard_normal((n, 1))
        w *= math.sqrt(sc.power_budget) / np.linalg.norm(w)
        ok, _, _ = perfect_csi.certify_beamformer(w, layout, sc)
        if not ok:
            continue
        value = eta * float(np.abs(a @ w[:, 0]) ** 2)
        assert value <= res.relaxation_value * (1 + 1e-9)


def test_sdp_vanishing_thresholds_reach_free_maximum():
    cfg = small_config(n_users=2)
    sc = channel.sample_scenario(cfg, seed=3)
    free = channel.Scenario(
        geometry=sc.geometry, users=sc.users, target=sc.target,
        noise_power=sc.noise_power, radar_noise_power=sc.radar_noise_power,
        power_budget=sc.power_budget, sinr_thresholds=(1e-9, 1e-9),
    )
    layout = channel.fafp_layout(sc.geometry)
    res = perfect_csi.beamforming_sdp(free, layout)
    eta = channel.integrated_coefficient(sc.target, 2, 2, sc.radar_noise_power)
    ideal = eta * sc.power_budget * sc.geometry.n_antennas
    assert res.status == "optimal"
    assert res.objective == pytest.approx(ideal, rel=1e-5)


def test_sdp_zero_power_infeasible():
    sc = aligned_scenario(power=0.0)
    layout = channel.fafp_layout(sc.geometry)
    res = perfect_csi.beamforming_sdp(sc, layout)
    assert res.status == "infeasible"
    assert res.beamformer is None


def test_sdp_sampled_scenarios_certified():
    for seed in (0, 1):
        sc = channel.sample_scenario(small_config(n_users=3, n_paths=6), seed=seed)
        layout = channel.fafp_layout(sc.geometry)
        res = perfect_csi.beamforming_sdp(sc, layout)
        assert res.status == "optimal"
        assert res.certified
        assert np.max(res.rank_ratios) <= 1e-5
        floors = np.asarray(sc.sinr_thresholds)
        assert np.all(res.sinr >= floors * (1 - 1e-5))
        assert res.power <= sc.power_budget * (1 + 1e-7)
        # extracted value cannot exceed its own relaxation
        assert res.objective <= res.relaxation_value * (1 + 1e-6)


def test_sdp_rejects_bad_layout():
    sc = aligned_scenario()
    bad = np.array([[0.0, 0.0], [0.0, 0.0], [LAM, 0.0], [0.0, LAM]])
    with pytest.raises(ValueError):
        perfect_csi.beamforming_sdp(sc, bad)


# ---------------------------------------------------------------------------
# beam-gain derivatives and curvature


def test_grad_g_single_antenna_zero():
    g = perfect_csi.grad_g(np.zeros((1, 2)), 0.5, -0.3, np.array([[2.0]]), LAM)
    assert np.all(g == 0.0)


def test_grad_g_diagonal_q_zero():
    rng = np.random.default_rng(0)
    layout = rng.uniform(-LAM, LAM, (4, 2))
    q = np.diag(rng.uniform(0.5, 2.0, 4)).astype(complex)
    g = perfect_csi.grad_g(layout, 0.4, 0.2, q, LAM)
    assert np.max(np.abs(g)) < 1e-12


@pytest.mark.parametrize("n", [1, 2, 4, 6])
def test_grad_g_matches_finite_differences(n):
    rng = np.random.default_rng(n)
    layout = rng.uniform(-2 * LAM, 2 * LAM, (n, 2))
    q = random_psd(rng, n)
    el, az = rng.uniform(-1.2, 1.2, 2)

    def gain(flat):
        val, _ = _quadform.quadform_eval(
            flat.reshape(-1, 2), [el], [az], [1.0], q, LAM
        )
        return val

    grad = perfect_csi.grad_g(layout, el, az, q, LAM)
    ref = fd_gradient(gain, layout.reshape(-1))
    scale = max(1.0, np.max(np.abs(ref)))
    assert np.max(np.abs(grad - ref)) / scale < 1e-5


def test_hess_g_symmetric_and_matches_fd():
    rng = np.random.default_rng(11)
    n = 4
    layout = rng.uniform(-LAM, LAM, (n, 2))
    q = random_psd(rng, n)
    el, az = 0.7, -0.4
    hess = perfect_csi.hess_g(layout, el, az, q, LAM)
    assert np.allclose(hess, hess.T, atol=1e-9)
    ref = np.column_stack(
        [
            fd_gradient(
                lambda f: perfect_csi.grad_g(f.reshape(-1, 2), el, az, q, LAM)[i],
                layout.reshape(-1),
                step=1e-5 * LAM,
            )
            for i in range(2 * n)
        ]
    )
    scale = max(1.0, np.max(np.abs(ref)))
    assert np.max(np.abs(hess - ref.T)) / scale < 1e-4


def test_lipschitz_delta_zero_cases():
    assert perfect_csi.lipschitz_delta(np.zeros((3, 3)), 3, LAM) == 0.0
    assert perfect_csi.lipschitz_delta(np.array([[5.0]]), 1, LAM) == 0.0


def test_lipschitz_delta_dominates_sampled_hessians():
    rng = np.random.default_rng(5)
    for n in (2, 4):
        q = random_psd(rng, n)
        bound = perfect_csi.lipschitz_delta(q, n, LAM)
        worst = 0.0
        for _ in range(100):
            layout = rng.uniform(-3 * LAM, 3 * LAM, (n, 2))
            el, az = rng.uniform(-1.5, 1.5, 2)
            hess = perfect_csi.hess_g(layout, el, az, q, LAM)
            worst = max(worst, np.max(np.abs(np.linalg.eigvalsh(hess))))
        assert worst <= bound * (1 + 1e-12) + 1e-8


# ---------------------------------------------------------------------------
# SINR residual machinery


def test_sinr_residual_matrix_sign():
    # f_k + threshold * noise <= 0 exactly when the SINR meets the threshold
    rng = np.random.default_rng(2)
    sc = channel.sample_scenario(small_config(n_users=3, n_paths=5), seed=2)
    layout = channel.fafp_layout(sc.geometry)
    n = sc.geometry.n_antennas
    w = rng.standard_normal((n, 3)) + 1j * rng.standard_normal((n, 3))
    w *= math.sqrt(sc.power_budget) / np.linalg.norm(w)
    for k in range(3):
        sinr = channel.user_sinr(w, layout, k, sc)
        r_k = perfect_csi.sinr_residual_matrix(w, k, sinr)
        h = channel.user_channel(layout, sc.users[k], LAM)
        residual = float(np.real(h @ r_k @ h.conj()))
        assert residual + sinr * sc.noise_power == pytest.approx(
            0.0, abs=1e-9 * max(1.0, abs(residual))
        )


def test_f_k_zero_matrix():
    sc = channel.sample_scenario(small_config(), seed=0)
    layout = channel.fafp_layout(sc.geometry)
    n = sc.geometry.n_antennas
    z = np.zeros((n, n), dtype=complex)
    assert perfect_csi.f_k_value(layout, sc, 0, z) == 0.0
    assert np.all(perfect_csi.grad_f_k(layout, sc, 0, z) == 0.0)
    assert perfect_csi.lipschitz_zeta(sc, 0, z) == 0.0


def test_f_k_single_path_single_antenna():
    geom = channel.ArrayGeometry(
        width=LAM, length=LAM, n_antennas=1, rx_rows=2, rx_cols=2,
        min_spacing=0.0, wavelength=LAM,
    )
    sigma = 0.3 - 0.4j
    user = channel.PathSet([0.2], [-0.7], [sigma])
    sc = channel.Scenario(
        geometry=geom, users=(user,), target=channel.TargetModel(0.1, 0.1),
        noise_power=1.0, radar_noise_power=1.0, power_budget=1.0,
        sinr_thresholds=(1.0,),
    )
    r = np.array([[2.5]], dtype=complex)
    layout = np.array([[0.1 * LAM, -0.2 * LAM]])
    value = perfect_csi.f_k_value(layout, sc, 0, r)
    assert value == pytest.approx(abs(sigma) ** 2 * 2.5, rel=1e-12)
    assert np.max(np.abs(perfect_csi.grad_f_k(layout, sc, 0, r))) < 1e-12


def test_grad_f_k_matches_finite_differences():
    rng = np.random.default_rng(9)
    sc = channel.sample_scenario(small_config(n_users=2, n_paths=6), seed=9)
    layout = rng.uniform(-LAM, LAM, (4, 2))
    n = sc.geometry.n_antennas
    w = rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))
    r_k = perfect_csi.sinr_residual_matrix(w, 0, 2.0)

    def f(flat):
        return perfect_csi.f_k_value(flat.reshape(-1, 2), sc, 0, r_k)

    grad = perfect_csi.grad_f_k(layout, sc, 0, r_k)
    ref = fd_gradient(f, layout.reshape(-1))
    scale = max(1.0, np.max(np.abs(ref)))
    assert np.max(np.abs(grad - ref)) / scale < 1e-5


def test_lipschitz_zeta_dominates_sampled_hessians():
    rng = np.random.default_rng(4)
    sc = channel.sample_scenario(small_config(n_users=2, n_paths=4), seed=4)
    n = sc.geometry.n_antennas
    w = rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))
    r_k = perfect_csi.sinr_residual_matrix(w, 1, 3.0)
    bound = perfect_csi.lipschitz_zeta(sc, 1, r_k)
    paths = sc.users[1]
    worst = 0.0
    for _ in range(100):
        layout = rng.uniform(-3 * LAM, 3 * LAM, (n, 2))
        hess = _quadform.quadform_eval(
            layout, paths.elevations, paths.azimuths, paths.responses, r_k,
            LAM, want_hess=True,
        )[2]
        worst = max(worst, np.max(np.abs(np.linalg.eigvalsh(hess))))
    assert worst <= bound * (1 + 1e-12) + 1e-8


# ---------------------------------------------------------------------------
# surrogates


def test_surrogate_brackets_truth():
    rng = np.random.default_rng(6)
    sc = channel.sample_scenario(small_config(n_users=2, n_paths=5), seed=6)
    n = sc.geometry.n_antennas
    w = rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))
    w *= math.sqrt(sc.power_budget) / np.linalg.norm(w)
    q = w @ w.conj().T
    r_k = perfect_csi.sinr_residual_matrix(w, 0, 2.0)
    for _ in range(100):
        base = rng.uniform(-LAM, LAM, (n, 2))
        probe = rng.uniform(-LAM, LAM, (n, 2)).reshape(-1)
        sense = perfect_csi.sensing_surrogate(
            base, q, sc.target.elevation, sc.target.azimuth, LAM
        )
        true_g, _ = _quadform.quadform_eval(
            probe.reshape(-1, 2), [sc.target.elevation], [sc.target.azimuth],
            [1.0], q, LAM,
        )
        scale = max(1.0, abs(true_g))
        assert sense.lower(probe) <= true_g + 1e-8 * scale
        assert sense.upper(probe) >= true_g - 1e-8 * scale

        res = perfect_csi.sinr_surrogate(base, sc, 0, r_k)
        true_f = perfect_csi.f_k_value(probe.reshape(-1, 2), sc, 0, r_k)
        fscale = max(1.0, abs(true_f))
        assert res.upper(probe) >= true_f - 1e-8 * fscale
        assert res.lower(probe) <= true_f + 1e-8 * fscale


def test_surrogate_tight_at_expansion_point():
    rng = np.random.default_rng(8)
    base = rng.uniform(-LAM, LAM, (3, 2))
    q = random_psd(rng, 3)
    s = perfect_csi.sensing_surrogate(base, q, 0.3, 0.3, LAM)
    flat = base.reshape(-1)
    assert s.lower(flat) == pytest.approx(s.constant)
    assert s.upper(flat) == pytest.approx(s.constant)


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=60, deadline=None)
def test_distance_linearization_underestimates(seed):
    # |u + d|^2 >= |u|^2 + 2 u . d for any displacement d of the difference
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1.0, 1.0, 2)
    d = rng.uniform(-1.0, 1.0, 2)
    linear = float(u @ u) + 2.0 * float(u @ d)
    actual = float((u + d) @ (u + d))
    assert linear <= actual + 1e-12


# ---------------------------------------------------------------------------
# placement step


def test_position_zero_beamformer_unchanged():
    sc = channel.sample_scenario(small_config(), seed=1)
    layout = channel.fafp_layout(sc.geometry)
    w = np.zeros((sc.geometry.n_antennas, sc.n_users), dtype=complex)
    new, info = perfect_csi.position_subproblem(sc, w, layout)
    assert info["status"] == "degenerate"
    assert np.array_equal(new, layout)


def test_position_single_antenna_unchanged():
    geom = channel.ArrayGeometry(
        width=LAM, length=LAM, n_antennas=1, rx_rows=2, rx_cols=2,
        min_spacing=0.0, wavelength=LAM,
    )
    user = channel.PathSet([0.2], [0.1], [1e-3])
    sc = channel.Scenario(
        geometry=geom, users=(user,), target=channel.TargetModel(0.4, -0.2),
        noise_power=1e-11, radar_noise_power=1e-11, power_budget=1.0,
        sinr_thresholds=(1.0,),
    )
    w = np.array([[1.0 + 0j]])
    new, info = perfect_csi.position_subproblem(sc, w, np.zeros((1, 2)))
    assert info["status"] == "degenerate"
    assert np.array_equal(new, np.zeros((1, 2)))


def test_position_step_improves_and_stays_feasible():
    sc = channel.sample_scenario(small_config(n_users=3, n_paths=6), seed=12)
    layout = channel.fafp_layout(sc.geometry)
    bf = perfect_csi.beamforming_sdp(sc, layout)
    assert bf.status == "optimal"
    new, info = perfect_csi.position_subproblem(sc, bf.beamformer, layout)
    assert info["status"] == "ok"
    assert info["gain"] >= info["gain_before"] - 1e-7 * max(1.0, info["gain_before"])
    assert not channel.validate_layout(new, sc.geometry, tol=1e-5 * LAM)
    ok, _, _ = perfect_csi.certify_beamformer(bf.beamformer, new, sc)
    assert ok


def test_position_sca_fixed_point_near_grid_optimum():
    # two antennas, slack SINR floor: iterating the placement step under a
    # fixed beamformer should reach the brute-force grid optimum of the gain
    geom = channel.ArrayGeometry(
        width=2 * LAM, length=2 * LAM, n_antennas=2, rx_rows=2, rx_cols=2,
        min_spacing=LAM / 2, wavelength=LAM,
    )
    target = channel.TargetModel(np.deg2rad(45), np.deg2rad(-30))
    user = channel.PathSet([0.3], [0.5], [1e-3])
    sc = channel.Scenario(
        geometry=geom, users=(user,), target=target,
        noise_power=1e-11, radar_noise_power=1e-11, power_budget=1.0,
        sinr_thresholds=(1e-6,),
    )
    rng = np.random.default_rng(3)
    w = rng.standard_normal((2, 1)) + 1j * rng.standard_normal((2, 1))
    w *= math.sqrt(sc.power_budget) / np.linalg.norm(w)
    q = w @ w.conj().T

    layout = channel.fafp_layout(geom)
    for _ in range(120):
        new, info = perfect_csi.position_subproblem(sc, w, layout)
        moved = np.linalg.norm(new - layout)
        layout = new
        if info["status"] != "ok" or moved < 1e-9:
            break
    achieved, _ = _quadform.quadform_eval(
        layout, [target.elevation], [target.azimuth], [1.0], q, LAM
    )

    # exhaustive search on a lam/40 grid over position pairs
    axis = np.arange(-LAM, LAM + 1e-12, LAM / 40)
    xs, ys = np.meshgrid(axis, axis, indexing="ij")
    pts = np.column_stack([xs.ravel(), ys.ravel()])
    wave = 2 * math.pi / LAM
    psi_x = math.cos(target.elevation) * math.sin(target.azimuth)
    psi_y = math.sin(target.elevation)
    phase = wave * (pts[:, 0] * psi_x + pts[:, 1] * psi_y)
    base = float(np.real(q[0, 0] + q[1, 1]))
    best = 0.0
    for i in range(0, pts.shape[0], 512):
        chunk = slice(i, min(i + 512, pts.shape[0]))
        d2 = np.sum((pts[chunk, None, :] - pts[None, :, :]) ** 2, axis=2)
        dphi = phase[chunk, None] - phase[None, :]
        vals = base + 2.0 * np.real(q[0, 1] * np.exp(1j * dphi))
        vals[d2 < geom.min_spacing**2] = -np.inf
        best = max(best, float(np.max(vals)))
    assert achieved >= 0.98 * best


# ---------------------------------------------------------------------------
# outer loop


def test_algorithm1_huge_threshold_single_iteration():
    sc = channel.sample_scenario(small_config(), seed=0)
    report = perfect_csi.algorithm1(sc, xi=1e9)
    assert report.status == "converged"
    assert report.iterations == 1
    assert len(report.layouts) == 2
    assert report.objective_trace.shape == (1,)


def test_algorithm1_monotone_trace_and_certified_output():
    sc = channel.sample_scenario(small_config(n_users=3, n_paths=6), seed=21)
    report = perfect_csi.algorithm1(sc, xi=1e-3, max_outer=6)
    assert report.status in ("converged", "max_outer")
    trace = report.objective_trace
    assert trace.size >= 1
    for a, b in zip(trace[:-1], trace[1:]):
        assert b >= a - 1e-6 * max(1.0, a)
    ok, sinrs, power = perfect_csi.certify_beamformer(
        report.beamformer, report.layout, sc
    )
    assert ok
    assert not channel.validate_layout(report.layout, sc.geometry, tol=1e-5 * LAM)
    assert len(report.layouts) == report.iterations + 1


def test_algorithm1_improves_over_initial_layout():
    sc = channel.sample_scenario(small_config(n_users=2, n_paths=5), seed=33)
    init = channel.fafp_layout(sc.geometry)
    base = perfect_csi.beamforming_sdp(sc, init)
    report = perfect_csi.algorithm1(sc, max_outer=8)
    assert report.objective_trace[-1] >= base.objective * (1 - 1e-9)


def test_algorithm1_infeasible_immediately():
    sc = aligned_scenario(power=0.0)
    report = perfect_csi.algorithm1(sc)
    assert report.status == "infeasible"
    assert report.iterations == 0
    assert report.beamformer is None


def test_algorithm1_rejects_bad_init():
    sc = channel.sample_scenario(small_config(), seed=0)
    bad = np.zeros((sc.geometry.n_antennas, 2))
    with pytest.raises(ValueError):
        perfect_csi.algorithm1(sc, init=bad)
