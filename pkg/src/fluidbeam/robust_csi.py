"""Robust alternating optimization under bounded channel and angle errors.

The exact-CSI pipeline of perfect_csi is hardened in two ways.  Each user's
channel is only known up to an additive error delta_k with
delta_k Q_k delta_k^H <= eps_k, so the SINR floors become matrix inequalities
through the S-procedure: a single multiplier nu_k turns the quantified
quadratic constraint into one (N+1)-dimensional LMI.  The target direction is
only known up to an interval in elevation and azimuth, so the sensing gain is
maximized in epigraph form against a finite grid of directions covering the
rectangle.  The placement step keeps the LMIs affine in the antenna step by
linearizing the channel border vector and pushing the quadratic corner into a
scalar concave surrogate with a certified curvature constant.  The final
beamformer is recovered from the covariances by Gaussian randomization
validated on sampled error draws.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from . import _quadform, channel, conic, numerics, perfect_csi
from .perfect_csi import SINR_MARGIN, SolveReport, _acceptable, _prox_le

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AngleGrid:
    """Finite direction set covering the angular uncertainty rectangle."""

    points: tuple  # (elevation, azimuth) pairs, elevation-major
    n_elevation: int
    n_azimuth: int


@dataclass
class RobustIterate:
    status: str
    covariances: list | None
    z: float  # worst-grid sensing SNR of the relaxation, physical scale
    multipliers: np.ndarray | None  # S-procedure certificates, 0 for exact users
    layout: np.ndarray


@dataclass(frozen=True)
class BorderModel:
    """First-order model of the border vector b(t) = R h_k(t)^H.

    b is affine in each antenna coordinate separately, so the columns give
    an exact per-coordinate linearization around the expansion layout; the
    coupling constant bounds the Hessian spectral norm of
    2 Re{delta R h_k(t)^H} over the whole error ball, which is what the
    placement corner surrogate adds on top of the exact-CSI curvature.
    """

    base: np.ndarray  # b at the expansion layout, column vector
    x_columns: np.ndarray  # (N, N); column n is d b / d x_n
    y_columns: np.ndarray
    coupling: float

    def affine(self, step):
        step = np.asarray(step, dtype=float)
        return self.base + self.x_columns @ step[0::2] + self.y_columns @ step[1::2]


def angle_grid(target, n_elevation=5, n_azimuth=5):
    """Uniform endpoint-inclusive grid over the target angle rectangle.

    Collapsed axes (zero halfwidth) contribute a single sample regardless
    of the requested count; spread axes need at least two samples so the
    interval ends are always represented.
    """
    if n_elevation < 1 or n_azimuth < 1:
        raise ValueError("need at least one sample per angle axis")
    de, da = target.elevation_halfwidth, target.azimuth_halfwidth
    if de > 0.0 and n_elevation < 2:
        raise ValueError("elevation spread needs at least two samples")
    if da > 0.0 and n_azimuth < 2:
        raise ValueError("azimuth spread needs at least two samples")
    els = (
        np.linspace(target.elevation - de, target.elevation + de, n_elevation)
        if de > 0.0
        else np.array([target.elevation])
    )
    azs = (
        np.linspace(target.azimuth - da, target.azimuth + da, n_azimuth)
        if da > 0.0
        else np.array([target.azimuth])
    )
    points = tuple((float(e), float(a)) for e in els for a in azs)
    return AngleGrid(points=points, n_elevation=len(els), n_azimuth=len(azs))


def u_grad_and_bound(layout, elevation, azimuth, m, wavelength):
    """Directional gain a(t) M a(t)^H, its position gradient, and a certified
    curvature constant valid at every layout."""
    value, grad = _quadform.quadform_eval(layout, [elevation], [azimuth], [1.0], m, wavelength)
    n = np.asarray(layout).reshape(-1, 2).shape[0]
    return value, grad, _quadform.steering_curvature_bound(n, m, wavelength)


def _error_bounds(scenario, layout):
    """Normalized squared error radii eps_k / sigma^2, anchored at a layout."""
    return [
        scenario.csi_error_bound(k, layout) / scenario.noise_power
        for k in range(scenario.n_users)
    ]


def w_k_linearization(layout, scenario, k, r_k, error_bound=None):
    """Border model of user k's channel-error coupling at a layout.

    error_bound overrides the scenario-derived normalized squared radius;
    algorithm2 passes the value frozen at its initial layout so the
    uncertainty set does not drift between iterations.
    """
    paths = scenario.users[k]
    lam = scenario.geometry.wavelength
    sig = paths.responses / math.sqrt(scenario.noise_power)
    c, cx, cy = _quadform.field_stack(layout, paths.elevations, paths.azimuths, sig, lam)
    r_k = np.asarray(r_k, dtype=complex)
    base = r_k @ np.conj(c)
    x_cols, y_cols = _quadform.border_derivative_columns(r_k, cx, cy)
    if error_bound is None:
        error_bound = _error_bounds(scenario, layout)[k]
    coupling = _quadform.error_coupling_bound(
        scenario.geometry.n_antennas, sig, r_k, math.sqrt(max(0.0, error_bound)), lam
    )
    return BorderModel(base=base, x_columns=x_cols, y_columns=y_cols, coupling=coupling)


# ---------------------------------------------------------------------------
# sampled validation of the error region


def _error_draws(rng, n, radius, n_draws):
    # first half on the boundary sphere, rest uniform in the ball
    g = rng.standard_normal((n_draws, n)) + 1j * rng.standard_normal((n_draws, n))
    nrm = np.linalg.norm(g, axis=1, keepdims=True)
    nrm[nrm == 0.0] = 1.0
    u = g / nrm
    r = np.ones(n_draws)
    half = n_draws // 2
    if half < n_draws:
        r[half:] = rng.uniform(0.0, 1.0, n_draws - half) ** (1.0 / (2 * n))
    return radius * u * r[:, None]


def sampled_robust_sinr(covariances, scenario, layout, error_bounds=None, n_draws=256, seed=0):
    """Worst sampled covariance-level SINR per user over the error region.

    Draws are boundary-weighted: worst cases of a quadratic over a ball sit
    on the sphere, interior points only guard against bookkeeping mistakes.
    """
    rng = np.random.default_rng(seed)
    lam = scenario.geometry.wavelength
    scale = 1.0 / math.sqrt(scenario.noise_power)
    if error_bounds is None:
        error_bounds = _error_bounds(scenario, layout)
    worst = np.empty(scenario.n_users)
    for k in range(scenario.n_users):
        h = channel.user_channel(layout, scenario.users[k], lam) * scale
        radius = math.sqrt(max(0.0, error_bounds[k]))
        draws = h[None, :] + _error_draws(rng, h.shape[0], radius, n_draws)
        own = np.einsum("dn,nm,dm->d", draws, covariances[k], draws.conj()).real
        total = np.zeros_like(own)
        for q in range(scenario.n_users):
            if q != k:
                total += np.einsum(
                    "dn,nm,dm->d", draws, covariances[q], draws.conj()
                ).real
        worst[k] = float(np.min(own / (total + 1.0)))
    return worst


def _sampled_worst_sinr_w(w, draw_sets):
    """Worst sampled SINR per user of a concrete beamformer; draw_sets[k] is
    the (D, N) matrix of perturbed channels for user k."""
    w = np.asarray(w, dtype=complex)
    worst = np.empty(len(draw_sets))
    for k, draws in enumerate(draw_sets):
        gains = np.abs(draws @ w) ** 2
        own = gains[:, k]
        interference = gains.sum(axis=1) - own
        worst[k] = float(np.min(own / (interference + 1.0)))
    return worst


def _ball_min_quadratic(r_hat, h, radius):
    """Exact minimum of (h + delta) R (h + delta)^H over ||delta|| <= radius.

    Trust-region subproblem: in the eigenbasis of R the stationary point for
    shift mu is y_i = -g_i / (lam_i + mu), and the shift solving
    ||y(mu)|| = radius is found by bisection (the norm is decreasing in mu).
    The degenerate branch with no coupling into the bottom eigenspace fills
    the remaining radius along the bottom eigenvector.
    """
    r_hat = np.asarray(r_hat, dtype=complex)
    lam, u = np.linalg.eigh(r_hat)
    c0 = np.conj(np.asarray(h, dtype=complex))
    g = lam * (u.conj().T @ c0)
    const = float(np.real(c0.conj() @ (r_hat @ c0)))
    r2 = float(radius) ** 2
    if r2 <= 0.0:
        return const

    def objective(y):
        return const + float(np.sum(lam * np.abs(y) ** 2) + 2.0 * np.real(np.conj(y) @ g))

    def norm2(mu):
        # an exactly singular shift reads as an infinite norm, which the
        # bisection treats as "still inside the forbidden interval"
        with np.errstate(divide="ignore"):
            return float(np.sum(np.abs(g) ** 2 / (lam + mu) ** 2))

    if lam[0] > 0.0 and norm2(0.0) <= r2:
        return objective(-g / lam)
    mu0 = max(0.0, -float(lam[0]))
    scale = max(1.0, float(np.max(np.abs(lam))))
    lo = mu0 + 1e-14 * scale
    if norm2(lo) < r2:
        # hard case: fill the radius along the bottom eigenvector
        y = -g / (lam + lo)
        extra = math.sqrt(max(0.0, r2 - float(np.vdot(y, y).real)))
        e = np.zeros_like(y)
        e[0] = extra
        return objective(y + e)
    hi = max(1.0, mu0)
    while norm2(hi) > r2:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if norm2(mid) > r2:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return objective(-g / (lam + 0.5 * (lo + hi)))


def worst_case_margins(covariances, scenario, layout, error_bounds=None, thresholds=None):
    """Exact per-user worst-case SINR constraint margins of a covariance set.

    Entry k is min over the error ball of (h+delta) R_k (h+delta)^H minus the
    threshold, with R_k the threshold-weighted covariance combination; all
    entries nonnegative means the covariances are robustly feasible, with no
    sampling gap.  Pass rank-1 outer products to certify a concrete
    beamformer.
    """
    lam = scenario.geometry.wavelength
    scale = 1.0 / math.sqrt(scenario.noise_power)
    if error_bounds is None:
        error_bounds = _error_bounds(scenario, layout)
    if thresholds is None:
        thresholds = scenario.sinr_thresholds
    total = np.sum(covariances, axis=0)
    margins = np.empty(scenario.n_users)
    for k in range(scenario.n_users):
        gamma = thresholds[k]
        r_hat = np.asarray(covariances[k], dtype=complex) - gamma * (
            total - covariances[k]
        )
        h = channel.user_channel(layout, scenario.users[k], lam) * scale
        radius = math.sqrt(max(0.0, error_bounds[k]))
        margins[k] = _ball_min_quadratic(r_hat, h, radius) - gamma
    return margins


# ---------------------------------------------------------------------------
# robust beamforming step


def _min_grid_gain(layout, m, grid, wavelength):
    vals = [
        _quadform.quadform_eval(layout, [el], [az], [1.0], m, wavelength)[0]
        for el, az in grid.points
    ]
    return min(vals)


def robust_beamforming_sdp(scenario, layout, grid=None, margin=SINR_MARGIN, error_bounds=None):
    """Worst-direction covariance beamforming with S-procedure SINR LMIs.

    Maximizes the epigraph of the grid-worst sensing gain subject to one
    robust LMI per uncertain user (exact users keep the deterministic affine
    row) and the power budget.  Returns the covariances without extraction;
    the outer loop only needs them, and rounding happens once at the end.
    """
    geom = scenario.geometry
    lam = geom.wavelength
    problems = channel.validate_layout(layout, geom, tol=1e-6 * lam)
    if problems:
        raise ValueError("layout inadmissible: " + "; ".join(problems))
    layout = np.asarray(layout, dtype=float).reshape(-1, 2)
    n = geom.n_antennas
    n_users = scenario.n_users
    if grid is None:
        grid = angle_grid(scenario.target)
    if error_bounds is None:
        error_bounds = _error_bounds(scenario, layout)
    eta = channel.integrated_coefficient(
        scenario.target, geom.rx_rows, geom.rx_cols, scenario.radar_noise_power
    )

    prog = conic.ConvexProgram()
    names = [prog.hermitian_psd_var(f"cov{k}", n) for k in range(n_users)]
    prog.real_var("z", 1)
    prog.maximize({"z": 1.0})
    for el, az in grid.points:
        a = channel.transmit_steering(layout, el, az, lam)
        a_gram = np.outer(a.conj(), a)
        row_scale = 1.0 / max(1.0, float(np.linalg.norm(a_gram)))
        terms = {name: a_gram * row_scale for name in names}
        terms["z"] = -row_scale
        prog.affine_ge(terms, 0.0)

    noise_scale = 1.0 / math.sqrt(scenario.noise_power)
    for k in range(n_users):
        h = channel.user_channel(layout, scenario.users[k], lam) * noise_scale
        tight = scenario.sinr_thresholds[k] * (1.0 + margin)
        if error_bounds[k] <= 0.0:
            gram = np.outer(h.conj(), h)
            row_scale = 1.0 / max(1.0, float(np.linalg.norm(gram)))
            terms = {}
            for q, name in enumerate(names):
                terms[name] = (gram if q == k else -tight * gram) * row_scale
            prog.affine_ge(terms, tight * row_scale)
            continue
        nu = prog.real_var(f"nu{k}", 1)
        prog.affine_ge({nu: 1.0}, 0.0)
        # congruence S X S^H with S = [I; h / s] stacks the robust quadratic
        # into one LMI; the diagonal 1/s keeps the border row O(1)
        s_norm = max(1.0, float(np.linalg.norm(h)))
        s_map = np.vstack([np.eye(n, dtype=complex), h[None, :] / s_norm])
        expr = conic.MatExpr(n + 1)
        for q, name in enumerate(names):
            expr.add_congruence(name, s_map, 1.0 if q == k else -tight)
        f_nu = np.zeros((n + 1, n + 1), dtype=complex)
        f_nu[:n, :n] = np.eye(n)
        f_nu[n, n] = -error_bounds[k] / s_norm**2
        expr.add_term(nu, 0, f_nu)
        const = np.zeros((n + 1, n + 1), dtype=complex)
        const[n, n] = -tight / s_norm**2
        expr.add_const(const)
        prog.lmi(expr)

    eye = np.eye(n, dtype=complex)
    prog.affine_le({name: eye for name in names}, scenario.power_budget)
    sol = prog.solve(feas_tol=1e-8, gap_tol=1e-8)

    if not _acceptable(sol):
        status = "infeasible" if sol.status == conic.INFEASIBLE else sol.status
        return RobustIterate(
            status=status, covariances=None, z=math.nan, multipliers=None, layout=layout
        )
    covariances = [sol.value(name) for name in names]
    multipliers = np.array(
        [
            float(sol.value(f"nu{k}")[0]) if error_bounds[k] > 0.0 else 0.0
            for k in range(n_users)
        ]
    )
    return RobustIterate(
        status="optimal",
        covariances=covariances,
        z=eta * float(sol.objective),
        multipliers=multipliers,
        layout=layout,
    )


# ---------------------------------------------------------------------------
# robust placement step


def _corner_slack(r_hat, h, eps_bar, threshold):
    """Feasibility headroom for the incumbent layout's robust LMI.

    The incumbent clears the hardened floor iff the exact worst case over the
    error ball does, so any deficiency is solver slop carried over from the
    beamforming step.  It is absorbed by lifting the corner bound, capped so
    a structurally infeasible instance still surfaces as such.
    """
    worst = _ball_min_quadratic(r_hat, h, math.sqrt(eps_bar))
    deficiency = max(0.0, threshold - worst)
    return min(deficiency * (1.0 + 1e-6), 1e-3 * max(1.0, abs(threshold))) + 1e-9


def _extend_certified_robust(
    scenario, covariances, error_bounds, m_total, grid, origin, direction, best_layout, best_gain
):
    """Largest certified geometric extension of a robust layout displacement.

    Same idea as the perfect-CSI extension: the certified curvature constants
    leave accepted steps reliably short, so the displacement from origin is
    doubled while the box, the spacing check, the exact worst-case SINR
    margins (within the certification tolerance), and the grid-worst beam
    gain all keep certifying.
    """
    geom = scenario.geometry
    lam = geom.wavelength
    half_w, half_l = geom.width / 2.0, geom.length / 2.0
    accepted = 1.0
    scale = 2.0
    while scale <= 2.0**20:
        cand = (origin + scale * direction).reshape(-1, 2)
        cand[:, 0] = np.clip(cand[:, 0], -half_w, half_w)
        cand[:, 1] = np.clip(cand[:, 1], -half_l, half_l)
        if np.max(np.abs(cand - best_layout)) < 1e-15:
            break
        if channel.validate_layout(cand, geom, tol=1e-6 * lam):
            break
        margins = worst_case_margins(covariances, scenario, cand, error_bounds=error_bounds)
        if float(np.min(margins)) < -1e-4:
            break
        gain_ext = _min_grid_gain(cand, m_total, grid, lam)
        if gain_ext <= best_gain:
            break
        best_layout = cand
        best_gain = gain_ext
        accepted = scale
        scale *= 2.0
    return best_layout, best_gain, accepted


def position_subproblem_robust(
    scenario, covariances, layout, grid=None, margin=SINR_MARGIN, error_bounds=None
):
    """One robust placement step at fixed covariances: (new_layout, info).

    Maximizes the epigraph of the grid-worst sensing surrogate subject to the
    per-user robust LMIs with linearized borders, the corner surrogates, the
    region box, and linearized spacing.  Every failure branch keeps the
    incumbent layout so the outer sweep stays monotone.
    """
    geom = scenario.geometry
    lam = geom.wavelength
    layout = np.asarray(layout, dtype=float).reshape(-1, 2)
    flat = layout.reshape(-1)
    n = geom.n_antennas
    if grid is None:
        grid = angle_grid(scenario.target)
    if error_bounds is None:
        error_bounds = _error_bounds(scenario, layout)

    m_total = np.zeros((n, n), dtype=complex)
    for t in covariances:
        m_total = m_total + np.asarray(t, dtype=complex)
    if float(np.max(np.abs(m_total))) == 0.0:
        return layout.copy(), {"status": "degenerate", "z": 0.0}

    dim = 2 * n
    prog = conic.ConvexProgram()
    prog.real_var("step", dim)
    prog.real_var("z", 1)
    prog.maximize({"z": 1.0})

    delta2 = _quadform.steering_curvature_bound(n, m_total, lam)
    worst_before = math.inf
    for el, az in grid.points:
        val, grad = _quadform.quadform_eval(layout, [el], [az], [1.0], m_total, lam)
        worst_before = min(worst_before, val)
        _prox_le(prog, "step", dim, delta2, {"z": 1.0, "step": -grad}, val)

    noise_scale = 1.0 / math.sqrt(scenario.noise_power)
    interference = [m_total - np.asarray(t, dtype=complex) for t in covariances]
    for k in range(scenario.n_users):
        tight = scenario.sinr_thresholds[k] * (1.0 + margin)
        paths = scenario.users[k]
        sig = paths.responses * noise_scale
        if error_bounds[k] <= 0.0:
            r_neg = tight * interference[k] - np.asarray(covariances[k], dtype=complex)
            f_val, f_grad = _quadform.quadform_eval(
                layout, paths.elevations, paths.azimuths, sig, r_neg, lam
            )
            zeta = _quadform.curvature_bound(n, sig, r_neg, lam)
            slack = max(0.0, f_val + tight) + 1e-10
            _prox_le(prog, "step", dim, zeta, {"step": f_grad}, slack - tight - f_val)
            continue
        r_hat = np.asarray(covariances[k], dtype=complex) - tight * interference[k]
        v_val, v_grad = _quadform.quadform_eval(
            layout, paths.elevations, paths.azimuths, sig, r_hat, lam
        )
        zeta = _quadform.curvature_bound(n, sig, r_hat, lam)
        model = w_k_linearization(layout, scenario, k, r_hat, error_bound=error_bounds[k])
        omega = zeta + model.coupling
        beta = prog.real_var(f"beta{k}", 1)
        mult = prog.real_var(f"lam{k}", 1)
        prog.affine_ge({mult: 1.0}, 0.0)

        h = channel.user_channel(layout, paths, lam) * noise_scale
        s_norm = max(1.0, float(np.linalg.norm(h)))
        expr = conic.MatExpr(n + 1)
        const = np.zeros((n + 1, n + 1), dtype=complex)
        const[:n, :n] = r_hat
        const[:n, n] = model.base / s_norm
        const[n, :n] = model.base.conj() / s_norm
        const[n, n] = -tight / s_norm**2
        expr.add_const(const)
        for m in range(n):
            f_x = np.zeros((n + 1, n + 1), dtype=complex)
            f_x[:n, n] = model.x_columns[:, m] / s_norm
            f_x[n, :n] = model.x_columns[:, m].conj() / s_norm
            expr.add_term("step", 2 * m, f_x)
            f_y = np.zeros((n + 1, n + 1), dtype=complex)
            f_y[:n, n] = model.y_columns[:, m] / s_norm
            f_y[n, :n] = model.y_columns[:, m].conj() / s_norm
            expr.add_term("step", 2 * m + 1, f_y)
        f_b = np.zeros((n + 1, n + 1), dtype=complex)
        f_b[n, n] = 1.0 / s_norm**2
        expr.add_term(beta, 0, f_b)
        f_l = np.zeros((n + 1, n + 1), dtype=complex)
        f_l[:n, :n] = np.eye(n)
        f_l[n, n] = -error_bounds[k] / s_norm**2
        expr.add_term(mult, 0, f_l)
        prog.lmi(expr)

        slack = _corner_slack(r_hat, h, error_bounds[k], tight)
        _prox_le(prog, "step", dim, omega, {beta: 1.0, "step": -v_grad}, v_val + slack)

    half_w, half_l = geom.width / 2.0, geom.length / 2.0
    for m in range(n):
        ex = np.zeros(dim)
        ex[2 * m] = 1.0
        ey = np.zeros(dim)
        ey[2 * m + 1] = 1.0
        prog.affine_le({"step": ex}, half_w - flat[2 * m])
        prog.affine_le({"step": -ex}, half_w + flat[2 * m])
        prog.affine_le({"step": ey}, half_l - flat[2 * m + 1])
        prog.affine_le({"step": -ey}, half_l + flat[2 * m + 1])
    if geom.min_spacing > 0.0:
        for m in range(n):
            for p in range(m + 1, n):
                d = layout[m] - layout[p]
                coeff = np.zeros(dim)
                coeff[2 * m : 2 * m + 2] = 2.0 * d
                coeff[2 * p : 2 * p + 2] = -2.0 * d
                prog.affine_ge({"step": coeff}, geom.min_spacing**2 - float(d @ d))

    sol = prog.solve(feas_tol=1e-9, gap_tol=1e-9)
    if not _acceptable(sol):
        log.debug("robust placement step stalled: %s", sol.status)
        return layout.copy(), {"status": "stall:" + sol.status, "z": worst_before}

    step = sol.value("step")
    new_layout = (flat + step).reshape(-1, 2)
    new_layout[:, 0] = np.clip(new_layout[:, 0], -half_w, half_w)
    new_layout[:, 1] = np.clip(new_layout[:, 1], -half_l, half_l)

    worst_after = _min_grid_gain(new_layout, m_total, grid, lam)
    problems = channel.validate_layout(new_layout, geom, tol=1e-5 * lam)
    margins = worst_case_margins(
        covariances, scenario, new_layout, error_bounds=error_bounds
    )
    if (
        problems
        or float(np.min(margins)) < -1e-4
        or worst_after < worst_before - 1e-7 * max(1.0, abs(worst_before))
    ):
        log.debug(
            "robust placement step rejected: problems=%s worst_margin=%.3e",
            problems,
            float(np.min(margins)),
        )
        return layout.copy(), {"status": "rejected", "z": worst_before}

    new_layout, worst_after, extension = _extend_certified_robust(
        scenario, covariances, error_bounds, m_total, grid, flat, step, new_layout, worst_after
    )

    return new_layout, {
        "status": "ok",
        "z": worst_after,
        "z_before": worst_before,
        "surrogate": float(sol.objective),
        "step_norm": float(np.linalg.norm(new_layout.reshape(-1) - flat)),
        "extension": extension,
    }


# ---------------------------------------------------------------------------
# randomized recovery and outer loop


def gaussian_randomization(
    covariances, scenario, layout, grid=None, n_draws=100, seed=0, error_bounds=None
):
    """Beamformer recovery from covariances by validated random sampling.

    Candidates are drawn per user from the covariance, rescaled to the power
    budget, screened by the exact worst-case SINR certificate (which subsumes
    any sampled check), and ranked by the grid-worst sensing SNR.  The
    deterministic dominant-component extraction competes on the same terms
    and is also the fallback when nothing passes.
    """
    geom = scenario.geometry
    lam = geom.wavelength
    layout = np.asarray(layout, dtype=float).reshape(-1, 2)
    if grid is None:
        grid = angle_grid(scenario.target)
    if error_bounds is None:
        error_bounds = _error_bounds(scenario, layout)
    extracted = []
    ratios = []
    for t in covariances:
        r1 = numerics.rank1_extract(t)
        extracted.append(r1.w)
        ratios.append(r1.eigenvalue_ratio)
    base = np.column_stack(extracted)
    if n_draws <= 0 or max(ratios) < 1e-10:
        return base

    rng = np.random.default_rng(seed)
    steer = np.array([channel.transmit_steering(layout, el, az, lam) for el, az in grid.points])
    eta = channel.integrated_coefficient(
        scenario.target, geom.rx_rows, geom.rx_cols, scenario.radar_noise_power
    )

    def robust_ok(w):
        outers = [np.outer(w[:, k], w[:, k].conj()) for k in range(w.shape[1])]
        return float(np.min(worst_case_margins(
            outers, scenario, layout, error_bounds=error_bounds
        ))) >= 0.0

    def score(w):
        return eta * float(np.min(np.sum(np.abs(steer @ w) ** 2, axis=1)))

    best, best_score = None, -math.inf
    if robust_ok(base):
        best, best_score = base, score(base)
    for w in perfect_csi._covariance_draws(covariances, rng, n_draws):
        power = float(np.sum(np.abs(w) ** 2))
        if power > 0.0 and scenario.power_budget > 0.0:
            w = w * math.sqrt(scenario.power_budget / power)
        if not robust_ok(w):
            continue
        s = score(w)
        if s > best_score:
            best, best_score = w, s
    if best is None:
        log.info("no randomization candidate certified robust; extracting")
        return base
    return best


def algorithm2(
    scenario,
    init=None,
    xi=1e-3,
    max_outer=50,
    margin=SINR_MARGIN,
    grid=None,
    n_draws=100,
    seed=0,
):
    """Robust alternating optimization from a feasible initial layout.

    The error radii are resolved once at the initial layout and frozen, so
    the uncertainty sets (and with them the monotonicity argument) do not
    drift as antennas move.  The trace records the grid-worst sensing SNR of
    the covariance iterate; the beamformer is recovered only at the end.
    """
    start = time.perf_counter()
    geom = scenario.geometry
    layout = (
        channel.fafp_layout(geom)
        if init is None
        else np.asarray(init, dtype=float).reshape(-1, 2)
    )
    problems = channel.validate_layout(layout, geom, tol=1e-9)
    if problems:
        raise ValueError("initial layout inadmissible: " + "; ".join(problems))
    if grid is None:
        grid = angle_grid(scenario.target)
    error_bounds = _error_bounds(scenario, layout)
    eta = channel.integrated_coefficient(
        scenario.target, geom.rx_rows, geom.rx_cols, scenario.radar_noise_power
    )
    lam = geom.wavelength

    trace = []
    layouts = [layout.copy()]
    diagnostics = []
    covariances = None
    status = "max_outer"
    previous = None
    for j in range(max_outer):
        rb = robust_beamforming_sdp(
            scenario, layout, grid=grid, margin=margin, error_bounds=error_bounds
        )
        if rb.status != "optimal":
            if rb.status == "infeasible" and j == 0:
                status = "infeasible"
            else:
                status = "stalled:" + rb.status
            diagnostics.append({"iteration": j, "beamforming": rb.status})
            break
        kept_previous = False
        new_total = np.sum(rb.covariances, axis=0)
        new_z = _min_grid_gain(layout, new_total, grid, lam)
        if covariances is not None:
            held_z = _min_grid_gain(layout, np.sum(covariances, axis=0), grid, lam)
            if new_z < held_z:
                kept_previous = True
                new_z = held_z
        if not kept_previous:
            covariances = rb.covariances
        after_bf = eta * new_z

        layout, info = position_subproblem_robust(
            scenario, covariances, layout, grid=grid, margin=margin,
            error_bounds=error_bounds,
        )
        if j >= 1 and info["status"] == "ok":
            # inertial pass spanning the last two placement steps: consecutive
            # steps zigzag across the valley re-centered by each covariance
            # solve, and their certified sum tracks the valley floor
            two_back = layouts[-2]
            d = (layout - two_back).reshape(-1)
            if float(np.max(np.abs(d))) > 0.0:
                m_total = np.sum(covariances, axis=0)
                g_now = _min_grid_gain(layout, m_total, grid, lam)
                layout, _, boost = _extend_certified_robust(
                    scenario, covariances, error_bounds, m_total, grid,
                    two_back.reshape(-1), d, layout, g_now,
                )
                info["momentum"] = boost
        layouts.append(layout.copy())
        z_now = eta * _min_grid_gain(layout, np.sum(covariances, axis=0), grid, lam)
        trace.append(z_now)
        diagnostics.append(
            {
                "iteration": j,
                "after_beamforming": after_bf,
                "after_position": z_now,
                "kept_previous": kept_previous,
                "position": info["status"],
            }
        )
        reference = previous if previous is not None else after_bf
        if z_now - reference < xi * max(1.0, abs(reference)):
            status = "converged"
            break
        previous = z_now

    beamformer = None
    if covariances is not None:
        beamformer = gaussian_randomization(
            covariances, scenario, layout, grid=grid, n_draws=n_draws, seed=seed,
            error_bounds=error_bounds,
        )
        cov_margin = float(np.min(worst_case_margins(
            covariances, scenario, layout, error_bounds=error_bounds
        )))
        w_margin = float(np.min(worst_case_margins(
            [np.outer(beamformer[:, k], beamformer[:, k].conj()) for k in range(beamformer.shape[1])],
            scenario, layout, error_bounds=error_bounds,
        )))
        diagnostics.append(
            {
                "final_margin_covariance": cov_margin,
                "final_margin_beamformer": w_margin,
                "error_bounds": [float(b) for b in error_bounds],
            }
        )
    return SolveReport(
        status=status,
        objective_trace=np.asarray(trace),
        layouts=layouts,
        beamformer=beamformer,
        layout=layout,
        iterations=len(trace),
        diagnostics=diagnostics,
        wall_time=time.perf_counter() - start,
    )
