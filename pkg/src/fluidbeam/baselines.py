"""Reference placement schemes the joint design is benchmarked against.

All three keep the beamforming stage of the main algorithms and only change
how the transmit layout is chosen: a fixed half-wavelength grid (fafp),
uniform random placement inside the region (farp), and a greedy sweep over a
half-wavelength lattice re-solving the beamforming problem per candidate
position (aps).  Each returns the same certified quantities the main solvers
report so sweep comparisons stay apples to apples.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import channel, perfect_csi, robust_csi

log = logging.getLogger(__name__)


@dataclass
class BaselineResult:
    scheme: str
    layout: np.ndarray
    beamformer: np.ndarray | None
    snr: float
    feasible: bool
    diagnostics: dict = field(default_factory=dict)


def _solve_at(scenario, layout, robust, n_draws, seed):
    """Beamform at a fixed layout; (snr, w, feasible, status).

    Perfect mode reports the physical sensing SNR of the certified extracted
    beamformer; robust mode reports the covariance-stage worst-grid value, the
    same convention the alternating loops use in their traces.
    """
    if not robust:
        bf = perfect_csi.beamforming_sdp(scenario, layout, n_draws=n_draws, seed=seed)
        if bf.status != "optimal":
            return math.nan, None, False, bf.status
        return bf.objective, bf.beamformer, bool(bf.certified), bf.status
    rb = robust_csi.robust_beamforming_sdp(scenario, layout)
    if rb.status != "optimal":
        return math.nan, None, False, rb.status
    w = robust_csi.gaussian_randomization(
        rb.covariances, scenario, layout, n_draws=n_draws, seed=seed
    )
    outers = [np.outer(w[:, k], w[:, k].conj()) for k in range(scenario.n_users)]
    margins = robust_csi.worst_case_margins(outers, scenario, layout)
    return rb.z, w, bool(np.min(margins) >= -1e-4), rb.status


def fafp(scenario, robust=False, n_draws=200, seed=0):
    """Fixed half-wavelength grid layout, beamforming only.

    Raises if the centered grid does not fit the region.
    """
    layout = channel.fafp_layout(scenario.geometry)
    snr, w, feasible, status = _solve_at(scenario, layout, robust, n_draws, seed)
    return BaselineResult(
        scheme="fafp",
        layout=layout,
        beamformer=w,
        snr=snr,
        feasible=feasible,
        diagnostics={"status": status},
    )


def _draw_layout(rng, geometry, cap=100_000):
    """Uniform rejection sample of an admissible layout.

    Resamples the whole layout on any pairwise-distance violation so the
    accepted sample stays uniform over the feasible set.
    """
    half_w, half_l = geometry.width / 2.0, geometry.length / 2.0
    n = geometry.n_antennas
    for _ in range(cap):
        layout = np.column_stack(
            [rng.uniform(-half_w, half_w, n), rng.uniform(-half_l, half_l, n)]
        )
        ok = True
        for m in range(n):
            d = layout[m + 1 :] - layout[m]
            if d.size and float(np.min(np.einsum("ij,ij->i", d, d))) < geometry.min_spacing**2:
                ok = False
                break
        if ok:
            return layout
    raise RuntimeError(
        f"no admissible random layout in {cap} attempts; "
        f"region too crowded for spacing {geometry.min_spacing:.4g}"
    )


def farp(scenario, seed=0, n_layouts=1, robust=False, n_draws=200):
    """Random placement: best of n_layouts uniform admissible draws."""
    rng = np.random.default_rng(seed)
    best = None
    for j in range(n_layouts):
        layout = _draw_layout(rng, scenario.geometry)
        snr, w, feasible, status = _solve_at(scenario, layout, robust, n_draws, seed)
        score = snr if feasible else -math.inf
        if best is None or score > best[0]:
            best = (score, layout, w, snr, feasible, status, j)
    _, layout, w, snr, feasible, status, j = best
    return BaselineResult(
        scheme="farp",
        layout=layout,
        beamformer=w,
        snr=snr,
        feasible=feasible,
        diagnostics={"status": status, "chosen_draw": j, "n_layouts": n_layouts},
    )


def aps_grid(geometry):
    """Half-wavelength lattice over the region, row-major from the top-left.

    Ticks run from the region edge inward in lambda/2 steps, so when the side
    length is an odd multiple of lambda/2 the lattice contains the centered
    fafp grid.
    """
    pitch = geometry.wavelength / 2.0
    half_w, half_l = geometry.width / 2.0, geometry.length / 2.0
    nx = int(math.floor(geometry.width / pitch + 1e-9)) + 1
    ny = int(math.floor(geometry.length / pitch + 1e-9)) + 1
    xs = -half_w + pitch * np.arange(nx)
    ys = half_l - pitch * np.arange(ny)
    return np.array([(x, y) for y in ys for x in xs])


def _feasible_spots(grid, assignment, m, min_spacing):
    """Grid indices antenna m may occupy with the others held fixed."""
    occupied = {i for j, i in enumerate(assignment) if j != m}
    others = grid[sorted(occupied)]
    spots = []
    for i, p in enumerate(grid):
        if i in occupied:
            continue
        d = others - p
        if others.size == 0 or float(np.min(np.einsum("ij,ij->i", d, d))) >= min_spacing**2 * (1 - 1e-12):
            spots.append(i)
    return spots


def aps(scenario, robust=False, max_passes=3, n_draws=200, seed=0):
    """Greedy per-antenna selection over the half-wavelength lattice.

    Sweeps antennas in index order; each step re-solves the beamforming
    relaxation at every admissible candidate spot and keeps the argmax, ties
    going to the lowest grid index.  Sweeps repeat until no antenna moves or
    max_passes is hit.  Candidate scoring uses the relaxation value without
    randomized rounding (extraction noise would break ties nondeterminally and
    the full rounding only matters at the final layout, which is re-solved in
    full at the end).
    """
    if max_passes < 1:
        raise ValueError("max_passes must be at least 1")
    geom = scenario.geometry
    grid = aps_grid(geom)
    n = geom.n_antennas
    if grid.shape[0] < n:
        raise RuntimeError(f"lattice has {grid.shape[0]} spots for {n} antennas")

    def candidate_score(layout):
        if robust:
            rb = robust_csi.robust_beamforming_sdp(scenario, layout)
            return rb.z if rb.status == "optimal" else -math.inf
        bf = perfect_csi.beamforming_sdp(scenario, layout, n_draws=0)
        return bf.relaxation_value if bf.status == "optimal" else -math.inf

    # initial assignment: first n lattice spots that respect the spacing
    taken = []
    for i, p in enumerate(grid):
        if all(float(np.hypot(*(p - grid[j]))) >= geom.min_spacing * (1 - 1e-12) for j in taken):
            taken.append(i)
        if len(taken) == n:
            break
    if len(taken) < n:
        raise RuntimeError("no admissible initial lattice assignment")
    assignment = list(taken)
    layout = grid[assignment].copy()

    first_pass = None
    evaluations = 0
    for sweep in range(max_passes):
        moved = False
        for m in range(n):
            best_idx, best_val = None, -math.inf
            for i in _feasible_spots(grid, assignment, m, geom.min_spacing):
                trial = layout.copy()
                trial[m] = grid[i]
                val = candidate_score(trial)
                evaluations += 1
                if best_idx is None or val > best_val + 1e-12 * max(1.0, abs(best_val)):
                    best_idx, best_val = i, val
            if best_idx is None:
                raise RuntimeError(f"antenna {m} has no feasible lattice spot")
            if best_val == -math.inf:
                raise RuntimeError(f"beamforming infeasible at every lattice spot for antenna {m}")
            if best_idx != assignment[m]:
                moved = True
                assignment[m] = best_idx
                layout[m] = grid[best_idx]
        if first_pass is None:
            first_pass = candidate_score(layout)
        if not moved:
            break

    snr, w, feasible, status = _solve_at(scenario, layout, robust, n_draws, seed)
    log.info(
        "aps: %d evaluations, %d sweeps, first pass %.6g, final %.6g",
        evaluations, sweep + 1, first_pass, snr,
    )
    return BaselineResult(
        scheme="aps",
        layout=layout,
        beamformer=w,
        snr=snr,
        feasible=feasible,
        diagnostics={
            "status": status,
            "first_pass": first_pass,
            "fixpoint": candidate_score(layout),
            "sweeps": sweep + 1,
            "evaluations": evaluations,
        },
    )
