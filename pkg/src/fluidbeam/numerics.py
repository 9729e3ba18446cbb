"""Dense complex-Hermitian linear algebra and special functions.

Small fixed-size problems only (matrix dimensions up to a few tens), so the
eigensolver is a cyclic complex Jacobi iteration: self-contained, and at these
sizes its O(n^3)-per-sweep cost is irrelevant.  All functions are pure.

A "Hermitian matrix" throughout this package is a square complex ndarray with
A equal to its conjugate transpose within a small relative tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

HERMITIAN_RTOL = 1e-12

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)


def check_hermitian(a, rtol=HERMITIAN_RTOL):
    """Validate conjugate symmetry and return an exactly symmetrized copy.

    Raises ValueError if the input is not square or departs from Hermitian
    symmetry by more than rtol * max(1, ||A||_F).
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.linalg.norm(a)))
    asym = float(np.linalg.norm(a - a.conj().T))
    if asym > rtol * scale:
        raise ValueError(
            f"matrix is not Hermitian: asymmetry {asym:.3e} exceeds "
            f"{rtol:.1e} * max(1, ||A||_F) = {rtol * scale:.3e}"
        )
    return 0.5 * (a + a.conj().T)


@dataclass(frozen=True)
class EigResult:
    """Eigenvalues sorted descending (real) and orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def hermitian_eig(a, rtol=HERMITIAN_RTOL):
    """Full eigendecomposition of a Hermitian matrix by cyclic complex Jacobi.

    Returns EigResult with eigenvalues descending; reconstruction error is
    at the 1e-14 * ||A||_F level, well inside the 1e-10 contract.
    """
    a = check_hermitian(a, rtol=rtol)
    n = a.shape[0]
    v = np.eye(n, dtype=np.complex128)
    if n == 1:
        return EigResult(np.array([a[0, 0].real]), v)

    a = a.copy()
    norm = float(np.linalg.norm(a))
    if norm == 0.0:
        return EigResult(np.zeros(n), v)

    off_tol = 1e-14 * norm
    rotate_tol = off_tol / (n * n)
    for _ in range(100):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off <= off_tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= rotate_tol:
                    continue
                # unitary 2x2 rotation zeroing the (p, q) entry: phase-align the
                # pivot, then a classical symmetric Jacobi rotation
                phase = apq / abs(apq)
                app = a[p, p].real
                aqq = a[q, q].real
                tau = (aqq - app) / (2.0 * abs(apq))
                t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                sp = s * phase
                # A <- J^H A J, columns then rows
                col_p = a[:, p] * c - a[:, q] * sp.conjugate()
                col_q = a[:, p] * sp + a[:, q] * c
                a[:, p] = col_p
                a[:, q] = col_q
                row_p = a[p, :] * c - a[q, :] * sp
                row_q = a[p, :] * sp.conjugate() + a[q, :] * c
                a[p, :] = row_p
                a[q, :] = row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                vcol_p = v[:, p] * c - v[:, q] * sp.conjugate()
                vcol_q = v[:, p] * sp + v[:, q] * c
                v[:, p] = vcol_p
                v[:, q] = vcol_q

    w = np.diag(a).real.copy()
    order = np.argsort(-w, kind="stable")
    return EigResult(w[order], v[:, order])


@dataclass(frozen=True)
class Rank1Result:
    """Principal rank-1 factor of a PSD matrix.

    w is sqrt(lambda_max) times the leading eigenvector, with global phase
    fixed so the largest-magnitude entry is real nonnegative.  residual is
    ||w w^H - T||_F / ||T||_F (zero for T = 0).  degenerate is True when
    lambda_max <= 0, in which case w is the zero vector.
    """

    w: np.ndarray
    residual: float
    degenerate: bool
    eigenvalue_ratio: float  # lambda_2 / lambda_1, 0 when n == 1 or degenerate


def rank1_extract(t, rtol=HERMITIAN_RTOL):
    eig = hermitian_eig(t, rtol=rtol)
    lam = eig.eigenvalues
    n = lam.shape[0]
    t_norm = float(np.linalg.norm(t))
    if lam[0] <= 0.0:
        w = np.zeros(n, dtype=np.complex128)
        residual = 1.0 if t_norm > 0.0 else 0.0
        return Rank1Result(w, residual, True, 0.0)
    w = math.sqrt(lam[0]) * eig.eigenvectors[:, 0]
    i = int(np.argmax(np.abs(w)))
    if abs(w[i]) > 0.0:
        w = w * (w[i].conjugate() / abs(w[i]))
    residual = float(np.linalg.norm(np.outer(w, w.conj()) - t))
    residual = residual / t_norm if t_norm > 0.0 else 0.0
    ratio = float(max(0.0, lam[1]) / lam[0]) if n > 1 else 0.0
    return Rank1Result(w, residual, False, ratio)


def erfc(x):
    """Complementary error function (2/sqrt(pi)) * integral_x^inf exp(-t^2) dt."""
    return math.erfc(x)


def erfc_inv(y):
    """Inverse of erfc on (0, 2) by safeguarded Newton with a bisection bracket.

    Raises ValueError at or outside the endpoints; the composed residual
    |erfc(erfc_inv(y)) - y| stays below 1e-12.
    """
    if not (0.0 < y < 2.0):
        raise ValueError(f"erfc_inv domain is the open interval (0, 2), got {y}")
    if y == 1.0:
        return 0.0
    if y > 1.0:
        # erfc(-x) = 2 - erfc(x); 2 - y is exact in floating point for y in (1, 2)
        return -erfc_inv(2.0 - y)

    # bracket [lo, hi] with erfc(lo) >= y >= erfc(hi)
    lo = 0.0
    hi = 1.0
    while math.erfc(hi) > y:
        lo = hi
        hi *= 2.0
        if hi > 1e3:  # erfc underflows long before this
            break
    x = 0.5 * (lo + hi)
    for _ in range(200):
        f = math.erfc(x) - y
        if f == 0.0:
            break
        if f > 0.0:
            lo = x
        else:
            hi = x
        d = -_TWO_OVER_SQRT_PI * math.exp(-x * x)
        if d == 0.0:
            x_new = 0.5 * (lo + hi)
        else:
            x_new = x - f / d
            if not (lo < x_new < hi):
                x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-16 * max(1.0, abs(x_new)):
            x = x_new
            break
        x = x_new
    return x


def is_psd(a, tol=1e-9):
    """True iff lambda_min(A) >= -tol * max(1, ||A||_F)."""
    a = check_hermitian(a)
    eig = hermitian_eig(a)
    scale = max(1.0, float(np.linalg.norm(a)))
    return bool(eig.eigenvalues[-1] >= -tol * scale)
