"""Array geometry, propagation model, scenarios, and their serialization.

Conventions used across the package:

- A transmit layout is an (N, 2) float array of antenna positions (x_m, y_m)
  in meters, confined to the closed rectangle [-W/2, W/2] x [-L/2, L/2].
  The flattened form interleaves coordinates: (x_1, y_1, x_2, y_2, ...).
- Angles are radians inside the library; elevation and azimuth both live in
  [-pi/2, pi/2].  The per-path plane-wave phase at position t = (x, y) is
  (2 pi / wavelength) * (x cos(el) sin(az) + y sin(el)).
- The receive side is a fixed P x Q half-wavelength grid, so its steering
  vector needs no geometry beyond (P, Q).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from . import numerics

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ArrayGeometry:
    width: float  # region extent along x, meters
    length: float  # region extent along y, meters
    n_antennas: int
    rx_rows: int  # P
    rx_cols: int  # Q
    min_spacing: float  # D, meters
    wavelength: float  # meters

    def __post_init__(self):
        if self.width <= 0 or self.length <= 0:
            raise ValueError("region extents must be positive")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if self.min_spacing < 0:
            raise ValueError("min_spacing must be nonnegative")
        if self.n_antennas < 1:
            raise ValueError("need at least one transmit antenna")
        if self.rx_rows < 1 or self.rx_cols < 1:
            raise ValueError("receive grid must be at least 1 x 1")
        if self.min_spacing > 0:
            per_x = math.ceil(self.width / self.min_spacing + 1.0 - 1e-9)
            per_y = math.ceil(self.length / self.min_spacing + 1.0 - 1e-9)
            if self.n_antennas > per_x * per_y:
                raise ValueError(
                    f"{self.n_antennas} antennas cannot keep spacing "
                    f"{self.min_spacing} in a {self.width} x {self.length} region "
                    f"(packing bound {per_x * per_y})"
                )


@dataclass(frozen=True, eq=False)
class PathSet:
    """Departure-side multipath description of one user's channel."""

    elevations: np.ndarray
    azimuths: np.ndarray
    responses: np.ndarray  # complex path gains

    def __post_init__(self):
        object.__setattr__(self, "elevations", np.atleast_1d(np.asarray(self.elevations, float)))
        object.__setattr__(self, "azimuths", np.atleast_1d(np.asarray(self.azimuths, float)))
        object.__setattr__(self, "responses", np.atleast_1d(np.asarray(self.responses, complex)))
        L = self.elevations.shape[0]
        if L < 1 or self.azimuths.shape[0] != L or self.responses.shape[0] != L:
            raise ValueError("path arrays must share a common positive length")
        half_pi = math.pi / 2 + 1e-12
        if np.any(np.abs(self.elevations) > half_pi) or np.any(np.abs(self.azimuths) > half_pi):
            raise ValueError("path angles must lie in [-pi/2, pi/2]")

    @property
    def n_paths(self):
        return self.elevations.shape[0]


@dataclass(frozen=True)
class TargetModel:
    """Point sensing target: nominal direction, reflection, angular halfwidths."""

    elevation: float
    azimuth: float
    reflection: complex = 1.0 + 0.0j
    elevation_halfwidth: float = 0.0
    azimuth_halfwidth: float = 0.0

    def __post_init__(self):
        half_pi = math.pi / 2 + 1e-12
        if abs(self.elevation) > half_pi or abs(self.azimuth) > half_pi:
            raise ValueError("target angles must lie in [-pi/2, pi/2]")
        if self.elevation_halfwidth < 0 or self.azimuth_halfwidth < 0:
            raise ValueError("angular halfwidths must be nonnegative")


@dataclass(frozen=True, eq=False)
class Scenario:
    geometry: ArrayGeometry
    users: tuple
    target: TargetModel
    noise_power: float  # communication noise, W
    radar_noise_power: float  # sensing receiver noise, W
    power_budget: float  # W
    sinr_thresholds: tuple  # linear, per user
    csi_error_frac: tuple = ()  # per user; 0 means perfect CSI
    csi_error_convention: str = "squared"

    def __post_init__(self):
        k = len(self.users)
        if k < 1:
            raise ValueError("need at least one user")
        if len(self.sinr_thresholds) != k:
            raise ValueError("one SINR threshold per user required")
        if not self.csi_error_frac:
            object.__setattr__(self, "csi_error_frac", tuple(0.0 for _ in range(k)))
        if len(self.csi_error_frac) != k:
            raise ValueError("one CSI error fraction per user required")
        if self.csi_error_convention not in ("squared", "linear"):
            raise ValueError("csi_error_convention must be 'squared' or 'linear'")
        if self.noise_power <= 0 or self.radar_noise_power <= 0:
            raise ValueError("noise powers must be positive")
        if self.power_budget < 0:
            raise ValueError("power budget must be nonnegative")
        if any(g <= 0 for g in self.sinr_thresholds):
            raise ValueError("SINR thresholds must be positive (linear scale)")
        if any(f < 0 for f in self.csi_error_frac):
            raise ValueError("CSI error fractions must be nonnegative")

    @property
    def n_users(self):
        return len(self.users)

    def csi_error_bound(self, k, layout):
        """Uncertainty region size eps_k for user k, anchored at a layout.

        'squared' reads the stored fraction as eps_k / ||h_k||^2, 'linear'
        as eps_k / ||h_k||; either way eps_k bounds delta Q delta^H.
        """
        frac = self.csi_error_frac[k]
        if frac == 0.0:
            return 0.0
        h = user_channel(layout, self.users[k], self.geometry.wavelength)
        nrm2 = float(np.vdot(h, h).real)
        if self.csi_error_convention == "squared":
            return frac * nrm2
        return frac * math.sqrt(nrm2)


# ---------------------------------------------------------------------------
# deterministic array / channel operations


def propagation_delta(position, elevation, azimuth):
    """Signed path-length advance x cos(el) sin(az) + y sin(el); broadcasts
    over leading axes of position (..., 2)."""
    pos = np.asarray(position, dtype=float)
    return pos[..., 0] * (math.cos(elevation) * math.sin(azimuth)) + pos[..., 1] * math.sin(
        elevation
    )


def field_response(position, paths, wavelength):
    """Superposed path response at one transmit position (a complex scalar)."""
    pos = np.asarray(position, dtype=float)
    rho = pos[0] * np.cos(paths.elevations) * np.sin(paths.azimuths) + pos[1] * np.sin(
        paths.elevations
    )
    return complex(np.sum(paths.responses * np.exp(1j * TWO_PI / wavelength * rho)))


def user_channel(layout, paths, wavelength):
    """Channel row vector h with h[m] = field_response(t_m)."""
    layout = np.asarray(layout, dtype=float).reshape(-1, 2)
    psi_x = np.cos(paths.elevations) * np.sin(paths.azimuths)
    psi_y = np.sin(paths.elevations)
    rho = layout[:, :1] * psi_x[None, :] + layout[:, 1:2] * psi_y[None, :]
    return np.exp(1j * TWO_PI / wavelength * rho) @ paths.responses


def transmit_steering(layout, elevation, azimuth, wavelength):
    """Unit-modulus steering vector of the fluid array toward one direction."""
    layout = np.asarray(layout, dtype=float).reshape(-1, 2)
    return np.exp(1j * TWO_PI / wavelength * propagation_delta(layout, elevation, azimuth))


def receive_steering(elevation, azimuth, p, q):
    """Steering vector of the fixed P x Q half-wavelength receive grid,
    Kronecker-ordered rows-first: a_P kron a_Q."""
    a_p = np.exp(1j * math.pi * np.arange(p) * math.cos(elevation) * math.sin(azimuth))
    a_q = np.exp(1j * math.pi * np.arange(q) * math.sin(elevation))
    return np.kron(a_p, a_q)


def integrated_coefficient(target, p, q, radar_noise_power):
    """Combined sensing gain |alpha|^2 P Q / sigma_r^2 collapsing the matched
    receive side into one scalar."""
    if p < 1 or q < 1 or radar_noise_power <= 0:
        raise ValueError("receive grid and noise power must be positive")
    return (abs(target.reflection) ** 2) * p * q / radar_noise_power


def sensing_snr(w, layout, elevation, azimuth, scenario):
    """Illumination SNR eta * a W W^H a^H of beamformer W toward a direction."""
    w = np.asarray(w, dtype=complex)
    a = transmit_steering(layout, elevation, azimuth, scenario.geometry.wavelength)
    eta = integrated_coefficient(
        scenario.target,
        scenario.geometry.rx_rows,
        scenario.geometry.rx_cols,
        scenario.radar_noise_power,
    )
    return eta * float(np.sum(np.abs(a @ w) ** 2))


def user_sinr(w, layout, k, scenario):
    """Exact downlink SINR of user k under beamformer columns w_1..w_K."""
    w = np.asarray(w, dtype=complex)
    h = user_channel(layout, scenario.users[k], scenario.geometry.wavelength)
    gains = np.abs(h @ w) ** 2
    signal = gains[k]
    interference = float(np.sum(gains)) - float(signal)
    return float(signal / (interference + scenario.noise_power))


def detection_probability(snr, false_alarm):
    """P_D = erfc(erfc_inv(2 P_FA) - sqrt(snr)) / 2 for the square-law
    detector; strictly increasing in both arguments."""
    if snr < 0:
        raise ValueError("sensing SNR must be nonnegative")
    if not (0.0 < false_alarm < 1.0):
        raise ValueError("false alarm probability must lie in (0, 1)")
    return 0.5 * numerics.erfc(numerics.erfc_inv(2.0 * false_alarm) - math.sqrt(snr))


def validate_layout(layout, geometry, tol=0.0):
    """List of constraint violations (empty when the layout is admissible).

    Region membership is closed: boundary positions are valid.
    """
    layout = np.asarray(layout, dtype=float).reshape(-1, 2)
    problems = []
    if layout.shape[0] != geometry.n_antennas:
        problems.append(
            f"layout has {layout.shape[0]} antennas, geometry expects {geometry.n_antennas}"
        )
    half_w = geometry.width / 2 + tol
    half_l = geometry.length / 2 + tol
    for m, (x, y) in enumerate(layout):
        if abs(x) > half_w or abs(y) > half_l:
            problems.append(f"antenna {m} at ({x:.6g}, {y:.6g}) leaves the region")
    n = layout.shape[0]
    for m in range(n):
        for nn in range(m + 1, n):
            dist = float(np.hypot(*(layout[m] - layout[nn])))
            if dist < geometry.min_spacing - tol:
                problems.append(
                    f"antennas {m} and {nn} are {dist:.6g} m apart, need {geometry.min_spacing:.6g}"
                )
    return problems


def fafp_layout(geometry):
    """Half-wavelength grid of N antennas centered at the origin.

    Grid shape is ceil(sqrt(N)) columns by however many rows N fills,
    row-major.  Raises if the grid leaves the region or breaks min_spacing.
    """
    n = geometry.n_antennas
    lam = geometry.wavelength
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    pitch = lam / 2.0
    if (cols - 1) * pitch > geometry.width + 1e-12 or (rows - 1) * pitch > geometry.length + 1e-12:
        raise ValueError(
            f"half-wavelength {cols} x {rows} grid does not fit the "
            f"{geometry.width} x {geometry.length} region"
        )
    pts = []
    for i in range(n):
        r, c = divmod(i, cols)
        pts.append(((c - (cols - 1) / 2.0) * pitch, ((rows - 1) / 2.0 - r) * pitch))
    layout = np.array(pts, dtype=float)
    problems = validate_layout(layout, geometry, tol=1e-12)
    if problems:
        raise ValueError("grid layout is inadmissible: " + "; ".join(problems))
    return layout


# ---------------------------------------------------------------------------
# random scenarios


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs for sample_scenario, in CLI-friendly units (degrees, dB)."""

    n_antennas: int = 4
    rx_rows: int = 2
    rx_cols: int = 2
    n_users: int = 4
    n_paths: int = 12
    wavelength: float = 0.06
    region_over_lambda: float = 2.0
    min_spacing_over_lambda: float = 0.5
    power_budget: float = 1.0
    noise_power: float = 1e-13
    radar_noise_power: float = 1e-13
    sinr_threshold_db: float = 10.0
    target_elevation_deg: float = 45.0
    target_azimuth_deg: float = -30.0
    target_reflection: complex = 1.0 + 0.0j
    elevation_halfwidth_deg: float = 5.0
    azimuth_halfwidth_deg: float = 5.0
    csi_error_frac: float = 0.05
    csi_error_convention: str = "squared"
    ref_path_gain: float = 1e-4  # mean channel power at 1 m
    path_loss_exponent: float = 2.8
    dist_min: float = 20.0
    dist_max: float = 100.0


def sample_scenario(config=None, seed=0):
    """Deterministic scenario draw: per user, the order is distance, then
    path elevations, then azimuths, then complex responses."""
    cfg = config or ScenarioConfig()
    if cfg.dist_min <= 0 or cfg.dist_max < cfg.dist_min:
        raise ValueError("need 0 < dist_min <= dist_max")
    if cfg.n_paths < 1:
        raise ValueError("need at least one path per user")
    rng = np.random.default_rng(seed)
    lam = cfg.wavelength
    geometry = ArrayGeometry(
        width=cfg.region_over_lambda * lam,
        length=cfg.region_over_lambda * lam,
        n_antennas=cfg.n_antennas,
        rx_rows=cfg.rx_rows,
        rx_cols=cfg.rx_cols,
        min_spacing=cfg.min_spacing_over_lambda * lam,
        wavelength=lam,
    )
    users = []
    for _ in range(cfg.n_users):
        dist = float(rng.uniform(cfg.dist_min, cfg.dist_max))
        els = rng.uniform(-math.pi / 2, math.pi / 2, cfg.n_paths)
        azs = rng.uniform(-math.pi / 2, math.pi / 2, cfg.n_paths)
        var = cfg.ref_path_gain * dist ** (-cfg.path_loss_exponent) / cfg.n_paths
        resp = math.sqrt(var / 2.0) * (
            rng.standard_normal(cfg.n_paths) + 1j * rng.standard_normal(cfg.n_paths)
        )
        users.append(PathSet(els, azs, resp))
    target = TargetModel(
        elevation=math.radians(cfg.target_elevation_deg),
        azimuth=math.radians(cfg.target_azimuth_deg),
        reflection=complex(cfg.target_reflection),
        elevation_halfwidth=math.radians(cfg.elevation_halfwidth_deg),
        azimuth_halfwidth=math.radians(cfg.azimuth_halfwidth_deg),
    )
    gamma = 10.0 ** (cfg.sinr_threshold_db / 10.0)
    return Scenario(
        geometry=geometry,
        users=tuple(users),
        target=target,
        noise_power=cfg.noise_power,
        radar_noise_power=cfg.radar_noise_power,
        power_budget=cfg.power_budget,
        sinr_thresholds=tuple(gamma for _ in range(cfg.n_users)),
        csi_error_frac=tuple(cfg.csi_error_frac for _ in range(cfg.n_users)),
        csi_error_convention=cfg.csi_error_convention,
    )


# ---------------------------------------------------------------------------
# serialization

SCHEMA_VERSION = 1


def _complex_list(arr):
    return [[float(v.real), float(v.imag)] for v in np.asarray(arr, complex)]


def _from_complex_list(pairs):
    return np.array([complex(re, im) for re, im in pairs])


def scenario_to_dict(scenario):
    g = scenario.geometry
    t = scenario.target
    return {
        "schema": SCHEMA_VERSION,
        "geometry": {
            "width": g.width,
            "length": g.length,
            "n_antennas": g.n_antennas,
            "rx_rows": g.rx_rows,
            "rx_cols": g.rx_cols,
            "min_spacing": g.min_spacing,
            "wavelength": g.wavelength,
        },
        "users": [
            {
                "elevations": [float(v) for v in u.elevations],
                "azimuths": [float(v) for v in u.azimuths],
                "responses": _complex_list(u.responses),
            }
            for u in scenario.users
        ],
        "target": {
            "elevation": t.elevation,
            "azimuth": t.azimuth,
            "reflection": [t.reflection.real, t.reflection.imag],
            "elevation_halfwidth": t.elevation_halfwidth,
            "azimuth_halfwidth": t.azimuth_halfwidth,
        },
        "noise_power": scenario.noise_power,
        "radar_noise_power": scenario.radar_noise_power,
        "power_budget": scenario.power_budget,
        "sinr_thresholds": list(scenario.sinr_thresholds),
        "csi_error_frac": list(scenario.csi_error_frac),
        "csi_error_convention": scenario.csi_error_convention,
    }


def scenario_to_json(scenario):
    return json.dumps(scenario_to_dict(scenario), sort_keys=True, separators=(",", ":"))


def scenario_from_dict(d):
    if d.get("schema") != SCHEMA_VERSION:
        raise ValueError(f"unsupported scenario schema {d.get('schema')!r}")
    g = d["geometry"]
    geometry = ArrayGeometry(
        width=g["width"],
        length=g["length"],
        n_antennas=g["n_antennas"],
        rx_rows=g["rx_rows"],
        rx_cols=g["rx_cols"],
        min_spacing=g["min_spacing"],
        wavelength=g["wavelength"],
    )
    users = tuple(
        PathSet(
            np.array(u["elevations"], float),
            np.array(u["azimuths"], float),
            _from_complex_list(u["responses"]),
        )
        for u in d["users"]
    )
    t = d["target"]
    target = TargetModel(
        elevation=t["elevation"],
        azimuth=t["azimuth"],
        reflection=complex(t["reflection"][0], t["reflection"][1]),
        elevation_halfwidth=t["elevation_halfwidth"],
        azimuth_halfwidth=t["azimuth_halfwidth"],
    )
    return Scenario(
        geometry=geometry,
        users=users,
        target=target,
        noise_power=d["noise_power"],
        radar_noise_power=d["radar_noise_power"],
        power_budget=d["power_budget"],
        sinr_thresholds=tuple(d["sinr_thresholds"]),
        csi_error_frac=tuple(d["csi_error_frac"]),
        csi_error_convention=d["csi_error_convention"],
    )


def scenario_from_json(text):
    return scenario_from_dict(json.loads(text))


def scenario_digest(scenario):
    return hashlib.sha256(scenario_to_json(scenario).encode()).hexdigest()[:16]
