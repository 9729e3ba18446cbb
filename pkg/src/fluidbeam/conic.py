"""Self-contained convex conic solver.

Programs hold real vector variables and Hermitian PSD matrix variables, a
linear objective to maximize, and three constraint kinds: affine scalar
inequalities, convex quadratic scalar inequalities (PSD-certified at build
time, lowered to small arrow-form LMIs), and affine linear matrix
inequalities.  Everything is lowered to the standard cone form

    minimize c^T x   subject to   G x + s = h,   s in K,

with K a product of a nonnegative orthant and real symmetric PSD cones;
Hermitian data enters through the real symmetric embedding
[[Re A, -Im A], [Im A, Re A]].  The solver is a dense Nesterov-Todd scaled
Mehrotra predictor-corrector interior-point method on the homogeneous
self-dual embedding, so primal or dual infeasibility is reported as a
status instead of being mistaken for convergence failure.  Problem sizes
here are tiny (tens of variables, a few hundred cone rows), so everything
is dense numpy and deterministic.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import numerics

log = logging.getLogger(__name__)

_SQRT2 = math.sqrt(2.0)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITER = "max_iter"


def embed_hermitian(a):
    """Real symmetric embedding [[Re A, -Im A], [Im A, Re A]] of Hermitian A.

    The embedding doubles the spectrum: each eigenvalue of A appears twice,
    and A is PSD iff the embedding is.
    """
    a = np.asarray(a, dtype=np.complex128)
    re, im = a.real, a.imag
    top = np.concatenate([re, -im], axis=1)
    bot = np.concatenate([im, re], axis=1)
    return np.concatenate([top, bot], axis=0)


_svec_cache = {}


def _svec_indices(d):
    try:
        return _svec_cache[d]
    except KeyError:
        rows, cols = np.triu_indices(d)
        w = np.where(rows == cols, 1.0, _SQRT2)
        _svec_cache[d] = (rows, cols, w)
        return _svec_cache[d]


def _svec(s):
    d = s.shape[0]
    rows, cols, w = _svec_indices(d)
    return s[rows, cols] * w


def _smat(v, d):
    rows, cols, w = _svec_indices(d)
    m = np.zeros((d, d))
    vals = v / w
    m[rows, cols] = vals
    m[cols, rows] = vals
    return m


def _smat_many(cols_matrix, d):
    """Columns of svec vectors -> (ncols, d, d) symmetric matrices."""
    rows, cols, w = _svec_indices(d)
    n = cols_matrix.shape[1]
    out = np.zeros((n, d, d))
    vals = (cols_matrix / w[:, None]).T
    out[:, rows, cols] = vals
    out[:, cols, rows] = vals
    return out


def _svec_many(mats):
    """(ncols, d, d) symmetric matrices -> svec columns (L, ncols)."""
    d = mats.shape[1]
    rows, cols, w = _svec_indices(d)
    return (mats[:, rows, cols] * w).T


# Hermitian matrix variables are parametrized by n^2 real numbers: the n real
# diagonal entries first, then (Re, Im) pairs of the strict upper triangle in
# row-major order.

_basis_cache = {}


def _herm_basis(n):
    try:
        return _basis_cache[n]
    except KeyError:
        basis = []
        for i in range(n):
            b = np.zeros((n, n), dtype=np.complex128)
            b[i, i] = 1.0
            basis.append(b)
        for i in range(n):
            for j in range(i + 1, n):
                b = np.zeros((n, n), dtype=np.complex128)
                b[i, j] = 1.0
                b[j, i] = 1.0
                basis.append(b)
                b = np.zeros((n, n), dtype=np.complex128)
                b[i, j] = 1.0j
                b[j, i] = -1.0j
                basis.append(b)
        _basis_cache[n] = basis
        return basis


def _herm_from_params(p, n):
    m = np.zeros((n, n), dtype=np.complex128)
    m[np.arange(n), np.arange(n)] = p[:n]
    k = n
    for i in range(n):
        for j in range(i + 1, n):
            m[i, j] = p[k] + 1j * p[k + 1]
            m[j, i] = p[k] - 1j * p[k + 1]
            k += 2
    return m


def _herm_pairing(c):
    """Vector v with Tr(c X) = v . params(X) for Hermitian c and X."""
    n = c.shape[0]
    out = np.empty(n * n)
    out[:n] = np.diag(c).real
    k = n
    for i in range(n):
        for j in range(i + 1, n):
            out[k] = 2.0 * c[i, j].real
            out[k + 1] = 2.0 * c[i, j].imag
            k += 2
    return out


class MatExpr:
    """Affine Hermitian-matrix-valued expression, for LMI constraints.

    Contributions:
      - a constant Hermitian block,
      - scalar terms  x * F            (x an entry of a real variable),
      - congruences   coeff * S X S^H  (X a Hermitian matrix variable),
      - trace terms   Tr(C X) * F.
    """

    def __init__(self, dim):
        self.dim = dim
        self.const = np.zeros((dim, dim), dtype=np.complex128)
        self.scalar_terms = []  # (var, entry, F)
        self.congruences = []  # (var, S, coeff)
        self.trace_terms = []  # (var, C, F)

    def add_const(self, f):
        self.const = self.const + np.asarray(f, dtype=np.complex128)

    def add_term(self, var, entry, f):
        self.scalar_terms.append((var, int(entry), np.asarray(f, dtype=np.complex128)))

    def add_congruence(self, var, s, coeff=1.0):
        self.congruences.append((var, np.asarray(s, dtype=np.complex128), float(coeff)))

    def add_trace_term(self, var, c, f):
        self.trace_terms.append(
            (var, np.asarray(c, dtype=np.complex128), np.asarray(f, dtype=np.complex128))
        )


@dataclass
class Solution:
    status: str
    objective: float
    gap: float
    iterations: int
    primal_residual: float
    dual_residual: float
    values: dict = field(default_factory=dict)

    def value(self, name):
        return self.values[name]


class _Var:
    __slots__ = ("name", "kind", "offset", "size", "n")

    def __init__(self, name, kind, offset, size, n=0):
        self.name = name
        self.kind = kind
        self.offset = offset
        self.size = size
        self.n = n


class ConvexProgram:
    def __init__(self):
        self._vars = {}
        self._order = []
        self._nx = 0
        self._objective = None
        self._rows = []  # orthant: (coeff_map, ub)
        self._lmis = []  # (MatExpr, is_real)
        self._quads = []  # (var, L_factor, coeff_map, ub)

    # -- variables ---------------------------------------------------------

    def real_var(self, name, dim=1):
        if name in self._vars:
            raise ValueError(f"duplicate variable {name!r}")
        v = _Var(name, "real", self._nx, int(dim))
        self._vars[name] = v
        self._order.append(v)
        self._nx += v.size
        return name

    def hermitian_psd_var(self, name, n):
        if name in self._vars:
            raise ValueError(f"duplicate variable {name!r}")
        v = _Var(name, "herm", self._nx, int(n) * int(n), n=int(n))
        self._vars[name] = v
        self._order.append(v)
        self._nx += v.size
        return name

    # -- objective and constraints ----------------------------------------

    def maximize(self, terms):
        self._objective = dict(terms)

    def affine_le(self, terms, ub):
        """sum of terms <= ub.  Real-var coeffs are vectors (or scalars for
        dim-1 vars); Hermitian-var coeffs are Hermitian C meaning Tr(C X)."""
        self._rows.append((dict(terms), float(ub)))

    def affine_ge(self, terms, lb):
        neg = {k: -np.asarray(v) for k, v in terms.items()}
        self._rows.append((neg, -float(lb)))

    def quadratic_le(self, var, p, terms, ub, psd_tol=1e-9):
        """x_var^T P x_var + sum of terms <= ub, P PSD (certified here)."""
        v = self._vars[var]
        if v.kind != "real":
            raise ValueError("quadratic forms apply to real variables only")
        p = np.asarray(p, dtype=float)
        if p.shape != (v.size, v.size):
            raise ValueError(f"P shape {p.shape} does not match variable dim {v.size}")
        p = 0.5 * (p + p.T)
        if not numerics.is_psd(p.astype(complex), tol=psd_tol):
            raise ValueError("quadratic coefficient matrix is not PSD")
        lam, vecs = np.linalg.eigh(p)
        lam = np.clip(lam, 0.0, None)
        keep = lam > max(1e-300, lam[-1] * 1e-14)
        l_factor = vecs[:, keep] * np.sqrt(lam[keep])  # P = L L^T
        self._quads.append((var, l_factor, dict(terms), float(ub)))

    def lmi(self, expr):
        """Constrain the Hermitian affine expression to be PSD."""
        self._lmis.append(expr)

    # -- lowering ----------------------------------------------------------

    def _coeff_vector(self, terms):
        c = np.zeros(self._nx)
        for name, coeff in terms.items():
            v = self._vars[name]
            if v.kind == "real":
                arr = np.atleast_1d(np.asarray(coeff, dtype=float))
                if arr.shape != (v.size,):
                    raise ValueError(
                        f"coefficient for {name!r} has shape {arr.shape}, expected ({v.size},)"
                    )
                c[v.offset : v.offset + v.size] += arr
            else:
                cm = numerics.check_hermitian(coeff)
                if cm.shape[0] != v.n:
                    raise ValueError(f"trace coefficient for {name!r} has wrong size")
                c[v.offset : v.offset + v.size] += _herm_pairing(cm)
        return c

    def _lower(self):
        nx = self._nx
        if self._objective is None:
            raise ValueError("objective not set")
        c = -self._coeff_vector(self._objective)  # internal form minimizes

        orth_g = []
        orth_h = []
        for terms, ub in self._rows:
            orth_g.append(self._coeff_vector(terms))
            orth_h.append(ub)

        blocks = []  # (d_real, h_block (L,), g_block (L, nx))

        # PSD cone block per Hermitian variable
        for v in self._order:
            if v.kind != "herm":
                continue
            d = 2 * v.n
            basis = _herm_basis(v.n)
            rows, cols, w = _svec_indices(d)
            L = rows.shape[0]
            g = np.zeros((L, nx))
            for p, b in enumerate(basis):
                g[:, v.offset + p] = -_svec(embed_hermitian(b))
            blocks.append((d, np.zeros(L), g))

        # constraint LMIs
        for expr in self._lmis:
            coeffs = {}  # param index -> Hermitian matrix
            for var, entry, f in expr.scalar_terms:
                v = self._vars[var]
                if v.kind != "real":
                    raise ValueError("scalar LMI terms index real variables")
                if not (0 <= entry < v.size):
                    raise ValueError("scalar LMI term entry out of range")
                key = v.offset + entry
                coeffs[key] = coeffs.get(key, 0) + f
            for var, s, coeff in expr.congruences:
                v = self._vars[var]
                if v.kind != "herm":
                    raise ValueError("congruence LMI terms need a matrix variable")
                if s.shape != (expr.dim, v.n):
                    raise ValueError(
                        f"congruence map has shape {s.shape}, expected {(expr.dim, v.n)}"
                    )
                sh = s.conj().T
                for p, b in enumerate(_herm_basis(v.n)):
                    f = coeff * (s @ b @ sh)
                    key = v.offset + p
                    coeffs[key] = coeffs.get(key, 0) + f
            for var, cm, f in expr.trace_terms:
                v = self._vars[var]
                if v.kind != "herm":
                    raise ValueError("trace LMI terms need a matrix variable")
                pair = _herm_pairing(numerics.check_hermitian(cm))
                for p in range(v.size):
                    if pair[p] != 0.0:
                        key = v.offset + p
                        coeffs[key] = coeffs.get(key, 0) + pair[p] * f

            d = 2 * expr.dim
            rows, cols, w = _svec_indices(d)
            L = rows.shape[0]
            g = np.zeros((L, nx))
            for key, f in coeffs.items():
                fh = 0.5 * (f + f.conj().T)
                g[:, key] = -_svec(embed_hermitian(fh))
            h0 = _svec(embed_hermitian(0.5 * (expr.const + expr.const.conj().T)))
            blocks.append((d, h0, g))

        # quadratic constraints lowered to arrow LMIs:
        # [[I_r, L^T x], [x^T L, ub - lin(x)]] >= 0
        for var, l_factor, terms, ub in self._quads:
            v = self._vars[var]
            r = l_factor.shape[1]
            d = r + 1
            rows, cols, w = _svec_indices(d)
            L = rows.shape[0]
            g = np.zeros((L, nx))
            # border terms from x_var entries
            for i in range(v.size):
                f = np.zeros((d, d))
                f[:r, r] = l_factor[i, :]
                f[r, :r] = l_factor[i, :]
                g[:, v.offset + i] -= _svec(f)
            # corner linear terms
            lin = self._coeff_vector(terms)
            corner = np.zeros((d, d))
            corner[r, r] = 1.0
            corner_svec = _svec(corner)
            nz = np.nonzero(lin)[0]
            for i in nz:
                g[:, i] -= -lin[i] * corner_svec
            f0 = np.zeros((d, d))
            f0[:r, :r] = np.eye(r)
            f0[r, r] = ub
            blocks.append((d, _svec(f0), g))

        l = len(orth_g)
        psd_dims = [d for d, _, _ in blocks]
        m = l + sum(b[1].shape[0] for b in blocks)
        G = np.zeros((m, nx))
        h = np.zeros(m)
        if l:
            G[:l] = np.array(orth_g)
            h[:l] = np.array(orth_h)
        off = l
        for d, hb, gb in blocks:
            L = hb.shape[0]
            G[off : off + L] = gb
            h[off : off + L] = hb
            off += L
        return c, G, h, l, psd_dims

    # -- solve -------------------------------------------------------------

    def solve(self, feas_tol=1e-7, gap_tol=1e-7, max_iter=100):
        c, G, h, l, psd_dims = self._lower()
        raw = _solve_cone(c, G, h, l, psd_dims, feas_tol, gap_tol, max_iter)
        values = {}
        if raw.status in (OPTIMAL, MAX_ITER):
            x = raw.x
            for v in self._order:
                seg = x[v.offset : v.offset + v.size]
                if v.kind == "real":
                    values[v.name] = seg.copy()
                else:
                    values[v.name] = _herm_from_params(seg, v.n)
        objective = -float(np.dot(c, raw.x)) if raw.x is not None else math.nan
        return Solution(
            status=raw.status,
            objective=objective,
            gap=raw.gap,
            iterations=raw.iterations,
            primal_residual=raw.pres,
            dual_residual=raw.dres,
            values=values,
        )


# ---------------------------------------------------------------------------
# cone solver core


class _RawResult:
    def __init__(self, status, x, gap, iterations, pres, dres):
        self.status = status
        self.x = x
        self.gap = gap
        self.iterations = iterations
        self.pres = pres
        self.dres = dres


class _Scaling:
    """Nesterov-Todd scaling point for the current (s, z)."""

    def __init__(self, s, z, l, psd_dims, offsets):
        self.l = l
        self.offsets = offsets
        self.psd_dims = psd_dims
        self.w_orth = np.sqrt(s[:l] / z[:l]) if l else np.empty(0)
        self.lam_orth = np.sqrt(s[:l] * z[:l]) if l else np.empty(0)
        self.R = []
        self.Rinv = []
        self.Pinv = []
        self.lam_psd = []
        for d, (a, b) in zip(psd_dims, offsets):
            smat_s = _smat(s[a:b], d)
            smat_z = _smat(z[a:b], d)
            ls = _chol_psd(smat_s)
            lz = _chol_psd(smat_z)
            u, sig, vt = np.linalg.svd(lz.T @ ls)
            sig = np.maximum(sig, 1e-300)
            r = ls @ vt.T / np.sqrt(sig)
            # R^{-1} = Sigma^{1/2} V^T Ls^{-1}
            rinv = np.sqrt(sig)[:, None] * np.linalg.solve(ls.T, vt.T).T
            self.R.append(r)
            self.Rinv.append(rinv)
            self.Pinv.append(rinv.T @ rinv)
            self.lam_psd.append(sig)

    def lam_vec(self):
        parts = [self.lam_orth]
        for d, sig in zip(self.psd_dims, self.lam_psd):
            parts.append(_svec(np.diag(sig)))
        return np.concatenate(parts) if parts else np.empty(0)

    def _per_block(self, vec, fn):
        out = np.empty_like(vec)
        out[: self.l] = fn(None, vec[: self.l], None)
        for i, (d, (a, b)) in enumerate(zip(self.psd_dims, self.offsets)):
            out[a:b] = fn(i, vec[a:b], d)
        return out

    def apply_winv_t(self, vec):
        """W^{-T}: orthant v/w, PSD block M -> Rinv M Rinv^T."""

        def fn(i, seg, d):
            if i is None:
                return seg / self.w_orth if self.l else seg
            m = _smat(seg, d)
            return _svec(self.Rinv[i] @ m @ self.Rinv[i].T)

        return self._per_block(vec, fn)

    def apply_wt(self, vec):
        """W^T: orthant v*w, PSD block M -> R M R^T."""

        def fn(i, seg, d):
            if i is None:
                return seg * self.w_orth if self.l else seg
            m = _smat(seg, d)
            return _svec(self.R[i] @ m @ self.R[i].T)

        return self._per_block(vec, fn)

    def apply_w(self, vec):
        """W: orthant v*w, PSD block M -> R^T M R."""

        def fn(i, seg, d):
            if i is None:
                return seg * self.w_orth if self.l else seg
            m = _smat(seg, d)
            return _svec(self.R[i].T @ m @ self.R[i])

        return self._per_block(vec, fn)

    def apply_wtw_inv(self, vec):
        """(W^T W)^{-1}: orthant v/w^2, PSD block M -> Pinv M Pinv."""

        def fn(i, seg, d):
            if i is None:
                return seg / (self.w_orth * self.w_orth) if self.l else seg
            m = _smat(seg, d)
            return _svec(self.Pinv[i] @ m @ self.Pinv[i])

        return self._per_block(vec, fn)

    def scale_g(self, G):
        """W^{-T} applied to every column of G, blockwise vectorized."""
        out = np.empty_like(G)
        if self.l:
            out[: self.l] = G[: self.l] / self.w_orth[:, None]
        for i, (d, (a, b)) in enumerate(zip(self.psd_dims, self.offsets)):
            mats = _smat_many(G[a:b], d)
            scaled = self.Rinv[i][None] @ mats @ self.Rinv[i].T[None]
            out[a:b] = _svec_many(scaled)
        return out


def _chol_psd(m):
    d = m.shape[0]
    jitter = 0.0
    tr = max(float(np.trace(m)), 1e-300)
    for attempt in range(6):
        try:
            return np.linalg.cholesky(m + jitter * np.eye(d))
        except np.linalg.LinAlgError:
            jitter = max(jitter * 100.0, 1e-15 * tr / d)
    raise np.linalg.LinAlgError("cone block lost positive definiteness")


def _jordan_div(lam_scaling, vec):
    """Solve lam o u = vec in the scaled Jordan algebra (lam diagonal)."""
    l = lam_scaling.l
    out = np.empty_like(vec)
    if l:
        out[:l] = vec[:l] / lam_scaling.lam_orth
    for i, (d, (a, b)) in enumerate(zip(lam_scaling.psd_dims, lam_scaling.offsets)):
        m = _smat(vec[a:b], d)
        sig = lam_scaling.lam_psd[i]
        denom = 0.5 * (sig[:, None] + sig[None, :])
        out[a:b] = _svec(m / denom)
    return out


def _jordan_prod(scal, u, v):
    """u o v blockwise: orthant elementwise, PSD symmetrized product."""
    l = scal.l
    out = np.empty_like(u)
    if l:
        out[:l] = u[:l] * v[:l]
    for d, (a, b) in zip(scal.psd_dims, scal.offsets):
        mu = _smat(u[a:b], d)
        mv = _smat(v[a:b], d)
        out[a:b] = _svec(0.5 * (mu @ mv + mv @ mu))
    return out


def _alpha_max(scal_unused, l, psd_dims, offsets, s, ds, tau, dtau, kappa, dkappa, z, dz):
    alpha = 1.0
    if l:
        for cur, step in ((s[:l], ds[:l]), (z[:l], dz[:l])):
            neg = step < 0
            if np.any(neg):
                alpha = min(alpha, float(np.min(-cur[neg] / step[neg])))
    for d, (a, b) in zip(psd_dims, offsets):
        for cur, step in ((s[a:b], ds[a:b]), (z[a:b], dz[a:b])):
            mc = _smat(cur, d)
            md = _smat(step, d)
            try:
                lc = _chol_psd(mc)
            except np.linalg.LinAlgError:
                alpha = min(alpha, 1e-8)
                continue
            a1 = np.linalg.solve(lc, md)
            m = np.linalg.solve(lc, a1.T).T
            m = 0.5 * (m + m.T)
            lam_min = float(np.linalg.eigvalsh(m)[0])
            if lam_min < 0:
                alpha = min(alpha, -1.0 / lam_min)
    if dtau < 0:
        alpha = min(alpha, -tau / dtau)
    if dkappa < 0:
        alpha = min(alpha, -kappa / dkappa)
    return alpha


def _identity_vec(l, psd_dims):
    parts = [np.ones(l)] if l else []
    if l == 0:
        parts = [np.empty(0)]
    for d in psd_dims:
        parts.append(_svec(np.eye(d)))
    return np.concatenate(parts)


def _solve_cone(c, G, h, l, psd_dims, feas_tol, gap_tol, max_iter):
    nx = c.shape[0]
    m = G.shape[0]
    if m == 0:
        if np.allclose(c, 0.0):
            return _RawResult(OPTIMAL, np.zeros(nx), 0.0, 0, 0.0, 0.0)
        return _RawResult(UNBOUNDED, None, math.inf, 0, 0.0, 0.0)

    offsets = []
    off = l
    for d in psd_dims:
        L = d * (d + 1) // 2
        offsets.append((off, off + L))
        off += L

    e = _identity_vec(l, psd_dims)
    deg = l + sum(psd_dims)

    x = np.zeros(nx)
    s = e.copy()
    z = e.copy()
    tau = 1.0
    kappa = 1.0

    norm_h = max(1.0, float(np.linalg.norm(h)))
    norm_c = max(1.0, float(np.linalg.norm(c)))

    best = None
    pres = dres = math.inf
    gap_rel = math.inf
    slow = 0
    prev_metric = math.inf
    prev_cert = math.inf
    prev_tau = tau
    it = 0

    for it in range(max_iter + 1):
        # convergence bookkeeping at the current point
        xt = x / tau
        st = s / tau
        zt = z / tau
        pres_vec = G @ xt + st - h
        dres_vec = G.T @ zt + c
        pres = float(np.linalg.norm(pres_vec)) / norm_h
        dres = float(np.linalg.norm(dres_vec)) / norm_c
        pobj = float(np.dot(c, xt))
        gap_abs = abs(float(np.dot(st, zt)))
        gap_rel = gap_abs / max(1.0, abs(pobj))
        log.debug(
            "it %d gap %.2e pres %.2e dres %.2e tau %.2e", it, gap_rel, pres, dres, tau
        )
        if pres <= feas_tol and dres <= feas_tol and gap_rel <= gap_tol:
            return _RawResult(OPTIMAL, xt, gap_rel, it, pres, dres)

        # infeasibility certificates
        cert = math.inf
        hz = float(np.dot(h, z))
        if hz < 0:
            cert = float(np.linalg.norm(G.T @ z)) * norm_h / (-hz)
            if cert <= feas_tol:
                return _RawResult(INFEASIBLE, None, gap_rel, it, pres, dres)
        cx = float(np.dot(c, x))
        if cx < 0:
            cert = min(cert, float(np.linalg.norm(G @ x + s)) * norm_c / (-cx))
            if cert <= feas_tol:
                return _RawResult(UNBOUNDED, None, gap_rel, it, pres, dres)

        # rank iterates by feasibility first; the gap only breaks ties so the
        # endgame cannot trade residual quality for a marginally smaller gap
        score = max(pres, dres) + 0.1 * gap_rel
        if best is None or score < best[0]:
            best = (score, xt.copy(), gap_rel, pres, dres)
        metric = pres + dres + gap_rel
        # a collapsing tau is certificate formation, not a stall: the scaled
        # residuals stagnate by construction while the ray matures
        if metric > 0.98 * prev_metric and not cert < 0.999 * prev_cert and not tau < 0.9 * prev_tau:
            slow += 1
        else:
            slow = 0
        prev_metric = min(prev_metric, metric)
        prev_cert = min(prev_cert, cert)
        prev_tau = tau
        # conditioning floor of the scaled system: no factorization at this
        # precision will make further progress, so stop churning
        if slow >= 4:
            log.debug(
                "it %d: stalled (gap %.2e pres %.2e dres %.2e)", it, gap_rel, pres, dres
            )
            break
        if it == max_iter:
            break

        mu = (float(np.dot(s, z)) + tau * kappa) / (deg + 1)

        try:
            scal = _Scaling(s, z, l, psd_dims, offsets)
        except np.linalg.LinAlgError:
            break
        lam = scal.lam_vec()

        Gs = scal.scale_g(G)
        ridge_base = 1e-13 * max(1.0, float(np.linalg.norm(Gs)) / math.sqrt(max(1, nx)))

        # residuals of the homogeneous embedding
        rx = G.T @ z + c * tau
        rz = s + G @ x - h * tau
        rtau = kappa + float(np.dot(c, x)) + float(np.dot(h, z))

        def try_step(ridge, rounds):
            """One predictor-corrector step using a QR factorization of the
            scaled constraint matrix with the given ridge.  QR on the stacked
            matrix solves the reduced system without squaring its condition
            number the way explicit normal equations would; refinement runs
            against the unridged KKT residual so a larger ridge only slows
            convergence of the correction, never biases the answer."""
            Gs_aug = np.concatenate([Gs, ridge * np.eye(nx)], axis=0)
            try:
                Q, R = np.linalg.qr(Gs_aug)
            except np.linalg.LinAlgError:
                return None
            if not np.all(np.abs(np.diag(R)) > 0):
                return None
            Qm = Q[:m]

            def nsolve(bx, bz_scaled):
                t1 = np.linalg.solve(R.T, bx)
                return np.linalg.solve(R, t1 + Qm.T @ bz_scaled)

            def kkt_solve(bx, bz_row):
                """Solve [0 G^T; G -W^TW][dx;dz] = [bx; bz_row] with iterative
                refinement.  Corrections are applied through the round budget
                (a plateau of the combined residual norm can hide progress in
                one component), but a clearly diverging correction rolls back
                to the best iterate so it cannot poison the step."""
                dx = nsolve(bx, scal.apply_winv_t(bz_row))
                dz = scal.apply_wtw_inv(G @ dx - bz_row)
                best_err = math.inf
                best_pair = (dx, dz)
                for round_no in range(rounds + 1):
                    r1 = bx - G.T @ dz
                    r2 = bz_row - G @ dx + scal.apply_wt(scal.apply_w(dz))
                    err = math.hypot(float(np.linalg.norm(r1)), float(np.linalg.norm(r2)))
                    if err < best_err:
                        best_err = err
                        best_pair = (dx, dz)
                    elif err > 2.0 * best_err:
                        return best_pair
                    if round_no == rounds or err == 0.0:
                        break
                    ddx = nsolve(r1, scal.apply_winv_t(r2))
                    ddz = scal.apply_wtw_inv(G @ ddx - r2)
                    dx = dx + ddx
                    dz = dz + ddz
                return dx, dz

            try:
                dx2, dz2 = kkt_solve(-c, h)
            except np.linalg.LinAlgError:
                return None

            def direction(sigma, comp_extra, tk_extra):
                ds_comp = sigma * mu * e - _jordan_prod(scal, lam, lam) - comp_extra
                d_tk = sigma * mu - tau * kappa - tk_extra
                bx = -(1.0 - sigma) * rx
                bz = -(1.0 - sigma) * rz
                btau = -(1.0 - sigma) * rtau
                bz_row = bz - scal.apply_wt(_jordan_div(scal, ds_comp))
                try:
                    dx1, dz1 = kkt_solve(bx, bz_row)
                except np.linalg.LinAlgError:
                    return None
                den = float(np.dot(c, dx2) + np.dot(h, dz2)) - kappa / tau
                if abs(den) < 1e-300:
                    return None
                num = btau - float(np.dot(c, dx1)) - float(np.dot(h, dz1)) - d_tk / tau
                dtau = num / den
                dx = dx1 + dtau * dx2
                dz = dz1 + dtau * dz2
                # recover ds and dkappa from the affine Newton rows rather
                # than the scaled complementarity form: identical in exact
                # arithmetic, but free of the W amplification that otherwise
                # injects primal residual error into the late iterations
                ds = bz - G @ dx + h * dtau
                dkappa = btau - float(np.dot(c, dx)) - float(np.dot(h, dz))
                return dx, dz, ds, dtau, dkappa

            aff = direction(0.0, 0.0, 0.0)
            if aff is None:
                return None
            dxa, dza, dsa, dtaua, dkappaa = aff
            alpha_aff = _alpha_max(
                scal, l, psd_dims, offsets, s, dsa, tau, dtaua, kappa, dkappaa, z, dza
            )
            alpha_aff = min(1.0, alpha_aff)
            mu_aff = (
                float(np.dot(s + alpha_aff * dsa, z + alpha_aff * dza))
                + (tau + alpha_aff * dtaua) * (kappa + alpha_aff * dkappaa)
            ) / (deg + 1)
            sigma = max(0.0, min(1.0, (mu_aff / mu))) ** 3

            # corrector with Mehrotra second-order term in the scaled space
            ds_scaled = scal.apply_winv_t(dsa)
            dz_scaled = scal.apply_w(dza)
            comp_extra = _jordan_prod(scal, ds_scaled, dz_scaled)
            tk_extra = dtaua * dkappaa
            comb = direction(sigma, comp_extra, tk_extra)
            if comb is None:
                return None
            dx, dz, ds, dtau, dkappa = comb
            alpha = _alpha_max(
                scal, l, psd_dims, offsets, s, ds, tau, dtau, kappa, dkappa, z, dz
            )
            alpha = min(1.0, 0.99 * alpha)
            return alpha, dx, dz, ds, dtau, dkappa

        # near a degenerate optimal face the scaled system can defeat the
        # lightly-ridged factorization: the step collapses or, worse, an
        # inaccurate direction would corrupt the iterate.  Retry with heavier
        # regularization, and only accept steps that do not blow up the
        # residuals or the complementarity measure.
        accepted = None
        for ridge_mult, rounds in ((1.0, 3), (1e3, 6), (1e5, 8)):
            step = try_step(ridge_base * ridge_mult, rounds)
            if step is None or step[0] <= 1e-8:
                log.debug(
                    "it %d ridge x%g: step %s", it, ridge_mult,
                    "failed" if step is None else f"alpha={step[0]:.2e}",
                )
                continue
            alpha, dx, dz, ds, dtau, dkappa = step
            tau_n = tau + alpha * dtau
            if tau_n <= 0 or kappa + alpha * dkappa < 0:
                continue
            x_n = x + alpha * dx
            z_n = z + alpha * dz
            s_n = s + alpha * ds
            pres_n = float(np.linalg.norm(G @ (x_n / tau_n) + s_n / tau_n - h)) / norm_h
            dres_n = float(np.linalg.norm(G.T @ (z_n / tau_n) + c)) / norm_c
            mu_n = (float(np.dot(s_n, z_n)) + tau_n * (kappa + alpha * dkappa)) / (deg + 1)
            # a diverging iterate is fine when it is building an
            # infeasibility or unboundedness certificate
            cert_n = math.inf
            hz_n = float(np.dot(h, z_n))
            if hz_n < 0:
                cert_n = float(np.linalg.norm(G.T @ z_n)) * norm_h / (-hz_n)
            cx_n = float(np.dot(c, x_n))
            if cx_n < 0:
                cert_n = min(
                    cert_n, float(np.linalg.norm(G @ x_n + s_n)) * norm_c / (-cx_n)
                )
            # mu must not explode (the signature of a poisoned direction);
            # normalized residuals may grow substantially while tau collapses
            # toward an infeasibility certificate, so their gate is loose
            if (
                mu_n <= 4.0 * mu
                and pres_n <= max(1e4 * pres, 1e-6)
                and dres_n <= max(1e4 * dres, 1e-6)
            ) or cert_n < 0.999 * min(cert, prev_cert):
                accepted = (x_n, z_n, s_n, tau_n, kappa + alpha * dkappa)
                break
            log.debug(
                "it %d ridge x%g: rejected alpha=%.2e pres %.1e->%.1e "
                "dres %.1e->%.1e mu %.1e->%.1e cert %.1e",
                it, ridge_mult, alpha, pres, pres_n, dres, dres_n, mu, mu_n, cert_n,
            )
        if accepted is None:
            log.debug("it %d: no acceptable step, stopping", it)
            break
        x, z, s, tau, kappa = accepted

    # a collapsed tau with a near-clean ray is an infeasibility verdict that
    # ran out of iterations polishing, not an unsolved problem
    if tau <= 1e-3 * max(1.0, kappa):
        hz = float(np.dot(h, z))
        if hz < 0 and float(np.linalg.norm(G.T @ z)) * norm_h / (-hz) <= max(1e-6, feas_tol):
            return _RawResult(INFEASIBLE, None, gap_rel, it, pres, dres)
        cx = float(np.dot(c, x))
        if cx < 0 and float(np.linalg.norm(G @ x + s)) * norm_c / (-cx) <= max(1e-6, feas_tol):
            return _RawResult(UNBOUNDED, None, gap_rel, it, pres, dres)
    if best is not None:
        _, xb, gapb, presb, dresb = best
        return _RawResult(MAX_ITER, xb, gapb, it, presb, dresb)
    return _RawResult(MAX_ITER, x / tau, gap_rel, it, pres, dres)
