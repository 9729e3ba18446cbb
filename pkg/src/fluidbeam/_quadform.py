"""Quadratic forms of multipath field vectors in the antenna positions.

Every position-dependent scalar the placement subproblems touch has the shape

    v(t) = c(t) M c(t)^H,    c(t)[m] = sum_l sigma_l exp(j 2 pi / lam rho_l(t_m))

with M Hermitian and rho_l the per-path length advance of channel.py.  The
sensing beam gain is the single-path unit-gain case, the SINR terms use a
user's full path set, and the robust channel-error coupling needs the border
derivatives of M c^H.  This module evaluates v, its gradient and Hessian in
the interleaved coordinate vector (x_1, y_1, ..., x_N, y_N), and certified
curvature (Hessian spectral norm) bounds for building proximal surrogates.

The curvature bounds intentionally return max(closed form, Frobenius entry
bound): the closed forms are kept verbatim for reference, the Frobenius route
is re-derived from the entry inequalities, and taking the larger guards the
surrogate bound properties against either being an under-estimate.
"""

from __future__ import annotations

import math

import numpy as np

TWO_PI = 2.0 * math.pi


def field_stack(layout, elevations, azimuths, responses, wavelength, order=1):
    """Field vector c and its per-antenna coordinate derivatives.

    Returns (c, cx, cy) for order 1 and (c, cx, cy, cxx, cxy, cyy) for
    order 2; all are length-N complex vectors, entry m differentiated in
    the coordinates of antenna m only (c[m] depends on t_m alone).
    """
    layout = np.asarray(layout, dtype=float).reshape(-1, 2)
    el = np.atleast_1d(np.asarray(elevations, dtype=float))
    az = np.atleast_1d(np.asarray(azimuths, dtype=float))
    sig = np.atleast_1d(np.asarray(responses, dtype=complex))
    wave = TWO_PI / wavelength
    psi_x = np.cos(el) * np.sin(az)
    psi_y = np.sin(el)
    weighted = sig * np.exp(
        1j * wave * (layout[:, :1] * psi_x[None, :] + layout[:, 1:2] * psi_y[None, :])
    )  # (N, L), per-path contributions
    c = weighted.sum(axis=1)
    cx = (1j * wave) * (weighted * psi_x).sum(axis=1)
    cy = (1j * wave) * (weighted * psi_y).sum(axis=1)
    if order == 1:
        return c, cx, cy
    cxx = (-wave * wave) * (weighted * psi_x * psi_x).sum(axis=1)
    cxy = (-wave * wave) * (weighted * psi_x * psi_y).sum(axis=1)
    cyy = (-wave * wave) * (weighted * psi_y * psi_y).sum(axis=1)
    return c, cx, cy, cxx, cxy, cyy


def quadform_eval(layout, elevations, azimuths, responses, matrix, wavelength, want_hess=False):
    """Value, gradient, and optionally Hessian of c(t) M c(t)^H.

    grad[2m + u] = 2 Re{ c_u[m] (M c^H)[m] },
    hess[2m + u, 2n + v] = 2 Re{ c_u[m] M[m, n] conj(c_v[n]) }   for m != n,
    with the same-antenna blocks picking up 2 Re{ c_uv[m] (M c^H)[m] } extra.
    """
    m_mat = np.asarray(matrix, dtype=complex)
    stack = field_stack(layout, elevations, azimuths, responses, wavelength, order=2 if want_hess else 1)
    c, cx, cy = stack[:3]
    n = c.shape[0]
    mc = m_mat @ np.conj(c)
    value = float(np.real(c @ mc))
    grad = np.empty(2 * n)
    grad[0::2] = 2.0 * np.real(cx * mc)
    grad[1::2] = 2.0 * np.real(cy * mc)
    if not want_hess:
        return value, grad
    cxx, cxy, cyy = stack[3:]
    first = (cx, cy)
    hess = np.empty((2 * n, 2 * n))
    for u in (0, 1):
        for v in (0, 1):
            hess[u::2, v::2] = 2.0 * np.real(
                first[u][:, None] * m_mat * np.conj(first[v])[None, :]
            )
    diag = np.arange(n)
    second = ((cxx, cxy), (cxy, cyy))
    for u in (0, 1):
        for v in (0, 1):
            hess[2 * diag + u, 2 * diag + v] += 2.0 * np.real(second[u][v] * mc)
    return value, grad, hess


def trig_expansion_value(layout, elevations, azimuths, responses, matrix, wavelength):
    """Oracle evaluation of c M c^H by explicit cosine expansion.

    Quadruple loop over antenna pairs and path pairs using only real
    arithmetic (math.cos / math.sin), deliberately sharing nothing with
    quadform_eval.  O((N L)^2); for tests.
    """
    layout = np.asarray(layout, dtype=float).reshape(-1, 2)
    el = [float(v) for v in np.atleast_1d(elevations)]
    az = [float(v) for v in np.atleast_1d(azimuths)]
    sig = [complex(v) for v in np.atleast_1d(responses)]
    m_mat = np.asarray(matrix, dtype=complex)
    wave = TWO_PI / wavelength
    n_ant = layout.shape[0]
    n_path = len(el)
    phases = [
        [
            wave
            * (
                layout[m, 0] * math.cos(el[l]) * math.sin(az[l])
                + layout[m, 1] * math.sin(el[l])
            )
            for l in range(n_path)
        ]
        for m in range(n_ant)
    ]
    total = 0.0
    for a in range(n_ant):
        for b in range(n_ant):
            mr = m_mat[a, b].real
            mi = m_mat[a, b].imag
            for l in range(n_path):
                for p in range(n_path):
                    # real and imaginary parts of sigma_l conj(sigma_p) M[a, b]
                    sr = sig[l].real * sig[p].real + sig[l].imag * sig[p].imag
                    si = sig[l].imag * sig[p].real - sig[l].real * sig[p].imag
                    ar = sr * mr - si * mi
                    ai = sr * mi + si * mr
                    d = phases[a][l] - phases[b][p]
                    total += ar * math.cos(d) - ai * math.sin(d)
    return total


# ---------------------------------------------------------------------------
# curvature (Hessian spectral norm) bounds


def curvature_bound(n_antennas, responses, matrix, wavelength):
    """Constant zeta with zeta I >= Hessian of c M c^H at every layout.

    Frobenius route: same-antenna 2x2 blocks have entries bounded by B_d
    (the l = p path terms cancel there, so cross-path and cross-antenna
    sums remain), cross blocks by B_o, giving
    ||H||_F <= sqrt(4 N B_d^2 + 4 N (N - 1) B_o^2).  The closed reference
    form is evaluated with its printed index ranges and the larger of the
    two is returned.
    """
    sig = np.abs(np.atleast_1d(np.asarray(responses, dtype=complex)))
    n = int(n_antennas)
    s1 = float(np.sum(sig))
    s2 = 0.5 * (s1 * s1 - float(np.sum(sig * sig)))  # sum over l < p
    eta = float(np.max(np.abs(matrix))) if np.size(matrix) else 0.0
    k2 = (TWO_PI / wavelength) ** 2
    b_d = 2.0 * k2 * eta * (4.0 * s2 + 2.0 * (n - 1) * s1 * s1)
    b_o = 4.0 * k2 * eta * s1 * s1
    frob = math.sqrt(4.0 * n * b_d * b_d + 4.0 * n * (n - 1) * b_o * b_o)
    pair = 0.0
    for l in range(len(sig) - 1):
        for p in range(l, len(sig)):
            pair += sig[l] * sig[p]
    closed = 4.0 * n * k2 * eta * (pair + (n - 1) * s1 * s1)
    return max(frob, closed)


def steering_curvature_bound(n_antennas, matrix, wavelength):
    """Curvature constant for the unit-gain single-path form a M a^H.

    The same-antenna second-derivative terms cancel exactly for a single
    path, so only off-diagonal entries of M drive the Frobenius bound; the
    closed reference form uses the overall entry maximum and an extra N
    factor and is kept as a floor.
    """
    m_mat = np.asarray(matrix, dtype=complex)
    n = int(n_antennas)
    if n < 2:
        return 0.0
    off = m_mat - np.diag(np.diag(m_mat))
    eps_off = float(np.max(np.abs(off)))
    eps_all = float(np.max(np.abs(m_mat)))
    k2 = (TWO_PI / wavelength) ** 2
    frob = 4.0 * n * math.sqrt(n - 1.0) * k2 * eps_off
    closed = 4.0 * n * n * math.sqrt(n - 1.0) * k2 * eps_all
    return max(frob, closed)


def error_coupling_bound(n_antennas, responses, matrix, error_radius, wavelength):
    """Curvature constant for w(t) = 2 Re{ delta M c(t)^H }, ||delta|| <= radius.

    w is a sum of per-antenna terms, so its Hessian is 2x2 block diagonal;
    each entry is at most 2 radius sqrt(N) max|M| k^2 S with S the absolute
    path-gain sum.  The returned constant 4 N k^2 radius max|M| S dominates
    that uniformly over the error ball.
    """
    sig = np.abs(np.atleast_1d(np.asarray(responses, dtype=complex)))
    s1 = float(np.sum(sig))
    varpi = float(np.max(np.abs(matrix))) if np.size(matrix) else 0.0
    k2 = (TWO_PI / wavelength) ** 2
    return 4.0 * int(n_antennas) * k2 * float(error_radius) * varpi * s1


# ---------------------------------------------------------------------------
# channel-error coupling terms


def error_link_value_grad(delta, matrix, c, cx, cy):
    """w = 2 Re{ delta M c^H } and its position gradient (interleaved).

    delta is a fixed error row vector; grad[2n + u] = 2 Re{ (delta M)[n]
    conj(c_u[n]) }.
    """
    row = np.asarray(delta, dtype=complex) @ np.asarray(matrix, dtype=complex)
    value = 2.0 * float(np.real(row @ np.conj(c)))
    n = c.shape[0]
    grad = np.empty(2 * n)
    grad[0::2] = 2.0 * np.real(row * np.conj(cx))
    grad[1::2] = 2.0 * np.real(row * np.conj(cy))
    return value, grad


def border_derivative_columns(matrix, cx, cy):
    """Per-antenna derivative columns of the border vector b(t) = M c(t)^H.

    Column n of the first (second) result is d b / d x_n (d b / d y_n),
    namely M[:, n] conj(c_x[n]); b itself is affine in each coordinate
    through c[n] alone, which is what lets the robust matrix constraint
    stay affine after linearization.
    """
    m_mat = np.asarray(matrix, dtype=complex)
    s_cols = m_mat * np.conj(cx)[None, :]
    p_cols = m_mat * np.conj(cy)[None, :]
    return s_cols, p_cols
