import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluidbeam import channel

LAM = 0.06


def small_geometry(n=4, region=2.0, spacing=0.5):
    return channel.ArrayGeometry(
        width=region * LAM,
        length=region * LAM,
        n_antennas=n,
        rx_rows=2,
        rx_cols=2,
        min_spacing=spacing * LAM,
        wavelength=LAM,
    )


class TestGeometry:
    def test_packing_bound_rejects_overcrowding(self):
        # a lambda x lambda region at lambda/2 spacing holds at most 9 points
        with pytest.raises(ValueError):
            channel.ArrayGeometry(LAM, LAM, 10, 2, 2, LAM / 2, LAM)

    def test_packing_bound_allows_fit(self):
        channel.ArrayGeometry(LAM, LAM, 9, 2, 2, LAM / 2, LAM)

    def test_zero_spacing_unconstrained(self):
        channel.ArrayGeometry(LAM, LAM, 50, 2, 2, 0.0, LAM)

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            channel.ArrayGeometry(0.0, LAM, 1, 2, 2, 0.0, LAM)
        with pytest.raises(ValueError):
            channel.ArrayGeometry(LAM, LAM, 0, 2, 2, 0.0, LAM)
        with pytest.raises(ValueError):
            channel.ArrayGeometry(LAM, LAM, 1, 0, 2, 0.0, LAM)


class TestPropagation:
    def test_delta_axis_cases(self):
        assert channel.propagation_delta([1.0, 0.0], 0.0, math.pi / 2) == pytest.approx(1.0)
        assert channel.propagation_delta([0.0, 1.0], math.pi / 2, 0.0) == pytest.approx(1.0)
        assert channel.propagation_delta([1.0, 1.0], 0.0, 0.0) == pytest.approx(0.0)

    def test_delta_broadcasts(self):
        pts = np.array([[1.0, 0.0], [0.0, 2.0]])
        out = channel.propagation_delta(pts, 0.3, 0.4)
        assert out.shape == (2,)
        assert out[0] == pytest.approx(math.cos(0.3) * math.sin(0.4))
        assert out[1] == pytest.approx(2 * math.sin(0.3))

    def test_field_response_at_origin_sums_gains(self):
        paths = channel.PathSet([0.1, -0.2], [0.3, 0.4], [1 + 2j, -0.5j])
        assert channel.field_response([0.0, 0.0], paths, LAM) == pytest.approx(1 + 1.5j)

    def test_user_channel_matches_scalar_op(self):
        rng = np.random.default_rng(0)
        paths = channel.PathSet(
            rng.uniform(-1.5, 1.5, 5),
            rng.uniform(-1.5, 1.5, 5),
            rng.standard_normal(5) + 1j * rng.standard_normal(5),
        )
        layout = rng.uniform(-LAM, LAM, (4, 2))
        h = channel.user_channel(layout, paths, LAM)
        for m in range(4):
            assert h[m] == pytest.approx(channel.field_response(layout[m], paths, LAM))

    def test_transmit_steering_unit_modulus(self):
        rng = np.random.default_rng(1)
        layout = rng.uniform(-LAM, LAM, (6, 2))
        a = channel.transmit_steering(layout, 0.7, -0.4, LAM)
        assert np.allclose(np.abs(a), 1.0)

    def test_transmit_steering_matches_single_path_channel(self):
        # a steering vector is the channel of a unit-gain single path
        layout = np.array([[0.01, -0.02], [0.0, 0.03]])
        paths = channel.PathSet([0.5], [-0.3], [1.0])
        assert np.allclose(
            channel.transmit_steering(layout, 0.5, -0.3, LAM),
            channel.user_channel(layout, paths, LAM),
        )


class TestReceiveSteering:
    def test_hand_expanded_2x2(self):
        el = math.radians(45.0)
        az = math.radians(-30.0)
        u = math.pi * math.cos(el) * math.sin(az)
        v = math.pi * math.sin(el)
        expected = np.array(
            [
                1.0,
                cmath.exp(1j * v),
                cmath.exp(1j * u),
                cmath.exp(1j * (u + v)),
            ]
        )
        got = channel.receive_steering(el, az, 2, 2)
        assert np.allclose(got, expected, atol=1e-14)

    def test_size_and_modulus(self):
        a = channel.receive_steering(0.2, 0.3, 3, 5)
        assert a.shape == (15,)
        assert np.allclose(np.abs(a), 1.0)

    def test_broadside_all_ones(self):
        assert np.allclose(channel.receive_steering(0.0, 0.0, 4, 4), 1.0)


class TestIntegratedCoefficient:
    def test_example(self):
        t = channel.TargetModel(0.0, 0.0, reflection=1.0)
        assert channel.integrated_coefficient(t, 2, 2, 1e-11) == pytest.approx(4e11)

    def test_reflection_scaling(self):
        t = channel.TargetModel(0.0, 0.0, reflection=2.0j)
        assert channel.integrated_coefficient(t, 1, 3, 0.5) == pytest.approx(24.0)


class TestSensingAndSinr:
    def test_sensing_snr_single_column(self):
        scen = channel.sample_scenario(channel.ScenarioConfig(), seed=0)
        layout = channel.fafp_layout(scen.geometry)
        a = channel.transmit_steering(
            layout, scen.target.elevation, scen.target.azimuth, LAM
        )
        w = a.conj()[:, None] / np.linalg.norm(a)  # matched filter, unit power
        snr = channel.sensing_snr(w, layout, scen.target.elevation, scen.target.azimuth, scen)
        eta = channel.integrated_coefficient(scen.target, 2, 2, scen.radar_noise_power)
        assert snr == pytest.approx(eta * scen.geometry.n_antennas)

    def test_sensing_snr_unitary_invariance(self):
        rng = np.random.default_rng(3)
        scen = channel.sample_scenario(channel.ScenarioConfig(), seed=1)
        layout = channel.fafp_layout(scen.geometry)
        w = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        q, _ = np.linalg.qr(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
        s1 = channel.sensing_snr(w, layout, 0.5, 0.2, scen)
        s2 = channel.sensing_snr(w @ q, layout, 0.5, 0.2, scen)
        assert s1 == pytest.approx(s2, rel=1e-12)

    def test_user_sinr_single_user(self):
        scen = channel.sample_scenario(channel.ScenarioConfig(n_users=1), seed=2)
        layout = channel.fafp_layout(scen.geometry)
        h = channel.user_channel(layout, scen.users[0], LAM)
        w = h.conj()[:, None] / np.linalg.norm(h)
        expect = np.linalg.norm(h) ** 2 / scen.noise_power
        assert channel.user_sinr(w, layout, 0, scen) == pytest.approx(float(expect))

    def test_user_sinr_interference(self):
        scen = channel.sample_scenario(channel.ScenarioConfig(n_users=2), seed=3)
        layout = channel.fafp_layout(scen.geometry)
        w = np.eye(4, dtype=complex)[:, :2]
        h = channel.user_channel(layout, scen.users[0], LAM)
        expect = abs(h[0]) ** 2 / (abs(h[1]) ** 2 + scen.noise_power)
        assert channel.user_sinr(w, layout, 0, scen) == pytest.approx(float(expect))


class TestDetectionProbability:
    def test_exact_half(self):
        assert channel.detection_probability(0.0, 0.5) == 0.5

    def test_strictly_increasing_in_snr(self):
        vals = [channel.detection_probability(g, 0.1) for g in np.linspace(0.0, 25.0, 50)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_strictly_increasing_in_false_alarm(self):
        vals = [
            channel.detection_probability(4.0, p) for p in np.linspace(0.01, 0.49, 50)
        ]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_domain(self):
        with pytest.raises(ValueError):
            channel.detection_probability(-1.0, 0.1)
        with pytest.raises(ValueError):
            channel.detection_probability(1.0, 0.0)


class TestValidateLayout:
    def test_valid_boundary(self):
        g = small_geometry(n=2)
        layout = np.array([[g.width / 2, g.length / 2], [-g.width / 2, -g.length / 2]])
        assert channel.validate_layout(layout, g) == []

    def test_region_violation(self):
        g = small_geometry(n=1)
        out = channel.validate_layout([[g.width / 2 + 1e-6, 0.0]], g)
        assert len(out) == 1 and "region" in out[0]

    def test_spacing_violation(self):
        g = small_geometry(n=2)
        out = channel.validate_layout([[0.0, 0.0], [0.0, 0.0]], g)
        assert any("apart" in p for p in out)

    def test_tolerance_softens(self):
        g = small_geometry(n=1)
        bad = [[g.width / 2 + 1e-9, 0.0]]
        assert channel.validate_layout(bad, g) != []
        assert channel.validate_layout(bad, g, tol=1e-8) == []


class TestFafpLayout:
    def test_four_antennas_square(self):
        layout = channel.fafp_layout(small_geometry(n=4))
        expect = {(-LAM / 4, LAM / 4), (LAM / 4, LAM / 4), (-LAM / 4, -LAM / 4), (LAM / 4, -LAM / 4)}
        got = {(round(x, 12), round(y, 12)) for x, y in layout}
        assert got == expect

    def test_six_antennas_three_by_two(self):
        layout = channel.fafp_layout(small_geometry(n=6))
        assert layout.shape == (6, 2)
        assert channel.validate_layout(layout, small_geometry(n=6)) == []
        assert len(set(np.round(layout[:, 0], 12))) == 3
        assert len(set(np.round(layout[:, 1], 12))) == 2

    def test_grid_does_not_fit(self):
        g = channel.ArrayGeometry(0.4 * LAM, 0.4 * LAM, 4, 2, 2, 0.0, LAM)
        with pytest.raises(ValueError):
            channel.fafp_layout(g)


class TestSampleScenario:
    def test_deterministic(self):
        a = channel.sample_scenario(channel.ScenarioConfig(), seed=5)
        b = channel.sample_scenario(channel.ScenarioConfig(), seed=5)
        assert channel.scenario_to_json(a) == channel.scenario_to_json(b)

    def test_seed_changes_draw(self):
        a = channel.sample_scenario(channel.ScenarioConfig(), seed=5)
        b = channel.sample_scenario(channel.ScenarioConfig(), seed=6)
        assert channel.scenario_to_json(a) != channel.scenario_to_json(b)

    def test_mean_channel_power(self):
        # fixed distance isolates the path-loss law: E[sum |sigma_l|^2]
        # = ref_gain * d^(-exponent), checked by Monte Carlo within 3%
        cfg = channel.ScenarioConfig(n_users=1, dist_min=50.0, dist_max=50.0)
        total = 0.0
        n = 10000
        for seed in range(n):
            scen = channel.sample_scenario(cfg, seed=seed)
            total += float(np.sum(np.abs(scen.users[0].responses) ** 2))
        mean = total / n
        expect = cfg.ref_path_gain * 50.0 ** (-cfg.path_loss_exponent)
        assert abs(mean - expect) <= 0.03 * expect

    def test_angles_in_range(self):
        scen = channel.sample_scenario(channel.ScenarioConfig(), seed=7)
        for u in scen.users:
            assert np.all(np.abs(u.elevations) <= math.pi / 2)
            assert np.all(np.abs(u.azimuths) <= math.pi / 2)

    def test_threshold_conversion(self):
        scen = channel.sample_scenario(channel.ScenarioConfig(sinr_threshold_db=10.0), seed=0)
        assert scen.sinr_thresholds[0] == pytest.approx(10.0)


class TestSerialization:
    def test_roundtrip_identity(self):
        scen = channel.sample_scenario(channel.ScenarioConfig(), seed=11)
        text = channel.scenario_to_json(scen)
        back = channel.scenario_from_json(text)
        assert channel.scenario_to_json(back) == text

    def test_digest_stability(self):
        scen = channel.sample_scenario(channel.ScenarioConfig(), seed=11)
        d1 = channel.scenario_digest(scen)
        d2 = channel.scenario_digest(channel.scenario_from_json(channel.scenario_to_json(scen)))
        assert d1 == d2

    def test_schema_version_enforced(self):
        scen = channel.sample_scenario(channel.ScenarioConfig(), seed=0)
        d = channel.scenario_to_dict(scen)
        d["schema"] = 99
        with pytest.raises(ValueError):
            channel.scenario_from_dict(d)

    def test_csi_error_bound_conventions(self):
        scen = channel.sample_scenario(channel.ScenarioConfig(csi_error_frac=0.05), seed=1)
        layout = channel.fafp_layout(scen.geometry)
        h = channel.user_channel(layout, scen.users[0], LAM)
        nrm2 = float(np.vdot(h, h).real)
        assert scen.csi_error_bound(0, layout) == pytest.approx(0.05 * nrm2)
        lin = channel.Scenario(
            geometry=scen.geometry,
            users=scen.users,
            target=scen.target,
            noise_power=scen.noise_power,
            radar_noise_power=scen.radar_noise_power,
            power_budget=scen.power_budget,
            sinr_thresholds=scen.sinr_thresholds,
            csi_error_frac=scen.csi_error_frac,
            csi_error_convention="linear",
        )
        assert lin.csi_error_bound(0, layout) == pytest.approx(0.05 * math.sqrt(nrm2))


@given(
    el=st.floats(min_value=-1.5, max_value=1.5),
    az=st.floats(min_value=-1.5, max_value=1.5),
)
@settings(max_examples=100, deadline=None)
def test_steering_modulus_property(el, az):
    a = channel.receive_steering(el, az, 3, 4)
    assert np.allclose(np.abs(a), 1.0)
