"""Variable-coefficient Poisson solvers and the constraint projection.

The elliptic problem is ``div(b grad phi) = rhs`` with ``b = 1/rho`` on
faces.  Boundary-normal faces carry no gradient (their velocity is fixed by
the boundary conditions), so the problem always has the constant null space;
solutions are returned with zero mean.

Solvers
-------
``"mg"``
    Conjugate gradients preconditioned by one symmetric multigrid V-cycle
    (red-black Gauss-Seidel, bilinear prolongation, face-averaged coarse
    coefficients, pseudo-inverse on the coarsest level).
``"vcycle"``
    Plain multigrid V-cycle iteration.
``"spectral"``
    Conjugate gradients preconditioned by the exact constant-coefficient
    solve (FFT along periodic and DCT along bounded directions); a single
    iteration suffices when ``b`` is uniform.
``"direct"``
    Sparse LU factorisation; used as the reference solver in tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba as nb
import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .eos import EosParams
from .errors import DegenerateStateError, SolvabilityError, SolverError
from .fields import FaceVec, Grid2D
from .operators import divergence_cell, gradient_faces

__all__ = [
    "PoissonSettings",
    "SolveInfo",
    "ProjectionResult",
    "poisson_apply",
    "solve_variable_poisson",
    "compute_S",
    "project_RS",
    "MultigridHierarchy",
]

_METHODS = ("mg", "vcycle", "spectral", "direct")


@dataclass(frozen=True)
class PoissonSettings:
    """Tolerances and multigrid parameters.

    Parameters
    ----------
    rel_tol : float
        Stop when the max-norm residual falls below ``rel_tol`` times the
        max-norm of the right-hand side.
    abs_tol : float
        Absolute residual floor.
    max_iter : int
        Maximum CG iterations or V-cycles.
    method : {"mg", "vcycle", "spectral", "direct"}
    n_pre, n_post : int
        Red-black sweeps before and after each coarse-grid correction.
    coarsest : int
        Stop coarsening at or below this many cells.
    compat_tol : float
        Relative mean of the right-hand side tolerated (and removed) by the
        singular solve.
    """

    rel_tol: float = 1e-11
    abs_tol: float = 1e-300
    max_iter: int = 200
    method: str = "mg"
    n_pre: int = 2
    n_post: int = 2
    coarsest: int = 16
    compat_tol: float = 1e-10

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"unknown Poisson method {self.method!r}")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("Poisson tolerances must be positive")


@dataclass
class SolveInfo:
    """Iteration count and final relative residual (worst over a batch)."""

    iterations: int = 0
    residual: float = 0.0
    method: str = ""
    history: list = field(default_factory=list)


@dataclass
class ProjectionResult:
    """Outcome of :func:`project_RS`."""

    m: FaceVec
    v: FaceVec
    phi: np.ndarray
    info: SolveInfo


# ---------------------------------------------------------------- kernels
# Coefficient layout: ``W[b, i, j]`` couples cells (i-1, j) and (i, j) and
# ``S[b, i, j]`` couples (i, j-1) and (i, j), already divided by h^2.  On a
# bounded direction the entries of the first row are zero and the coupling
# past the last row is absent.

@nb.njit(cache=True)
def _apply_kernel(phi, W, S, px, py, out):
    nb_, nx, ny = phi.shape
    for b in range(nb_):
        for i in range(nx):
            ip = i + 1 if i + 1 < nx else 0
            for j in range(ny):
                jp = j + 1 if j + 1 < ny else 0
                p = phi[b, i, j]
                we = W[b, ip, j] if (i + 1 < nx or px) else 0.0
                sn = S[b, i, jp] if (j + 1 < ny or py) else 0.0
                acc = we * (phi[b, ip, j] - p) - W[b, i, j] * (p - phi[b, i - 1, j])
                acc += sn * (phi[b, i, jp] - p) - S[b, i, j] * (p - phi[b, i, j - 1])
                out[b, i, j] = acc


@nb.njit(cache=True)
def _rbgs_kernel(phi, rhs, W, S, px, py, color):
    nb_, nx, ny = phi.shape
    for b in range(nb_):
        for i in range(nx):
            ip = i + 1 if i + 1 < nx else 0
            j0 = (color + i) % 2
            for j in range(j0, ny, 2):
                jp = j + 1 if j + 1 < ny else 0
                we = W[b, ip, j] if (i + 1 < nx or px) else 0.0
                sn = S[b, i, jp] if (j + 1 < ny or py) else 0.0
                ww = W[b, i, j]
                ss = S[b, i, j]
                diag = we + ww + sn + ss
                if diag > 0.0:
                    nbsum = (we * phi[b, ip, j] + ww * phi[b, i - 1, j]
                             + sn * phi[b, i, jp] + ss * phi[b, i, j - 1])
                    phi[b, i, j] = (nbsum - rhs[b, i, j]) / diag


def _coefficients(b_faces: FaceVec, grid: Grid2D):
    """Kernel coefficient arrays from face values of ``b``."""
    bx = b_faces.x[..., : grid.nx, :] / grid.dx**2
    by = b_faces.y[..., :, : grid.ny] / grid.dy**2
    bx = np.array(bx, dtype=float)
    by = np.array(by, dtype=float)
    if not grid.periodic(0):
        bx[..., 0, :] = 0.0
    if not grid.periodic(1):
        by[..., :, 0] = 0.0
    return bx, by


def _prolongation_1d(nc: int, periodic: bool) -> np.ndarray:
    """Linear interpolation from ``nc`` coarse to ``2 nc`` fine cells."""
    P = np.zeros((2 * nc, nc))
    for I in range(nc):
        for f, nbr in ((2 * I, I - 1), (2 * I + 1, I + 1)):
            if periodic:
                nbr %= nc
            elif nbr < 0 or nbr >= nc:
                nbr = I
            P[f, I] += 0.75
            P[f, nbr] += 0.25
    return P


class _Level:
    def __init__(self, W, S, px, py):
        self.W = np.ascontiguousarray(W)
        self.S = np.ascontiguousarray(S)
        self.px = px
        self.py = py
        self.shape = W.shape

    def apply(self, phi):
        out = np.empty_like(phi)
        _apply_kernel(phi, self.W, self.S, self.px, self.py, out)
        return out

    def dense(self, b):
        nx, ny = self.shape[1:]
        n = nx * ny
        A = np.zeros((n, n))
        e = np.zeros((1, nx, ny))
        for k in range(n):
            e[:] = 0.0
            e.reshape(-1)[k] = 1.0
            out = np.empty_like(e)
            _apply_kernel(e, self.W[b:b + 1], self.S[b:b + 1], self.px, self.py, out)
            A[:, k] = out.reshape(-1)
        return A


class MultigridHierarchy:
    """Geometric multigrid hierarchy for ``div(b grad .)``.

    Parameters
    ----------
    b_faces : FaceVec
        Face coefficients, optionally with leading batch axes.
    grid : Grid2D
    settings : PoissonSettings
    symmetric : bool
        Restrict with the adjoint of the prolongation so that the cycle is
        a symmetric operator (needed inside CG).  Otherwise the four-cell
        average is used, which contracts slightly faster as a solver.
    """

    def __init__(self, b_faces: FaceVec, grid: Grid2D, settings: PoissonSettings,
                 symmetric: bool = True):
        self.symmetric = symmetric
        W, S = _coefficients(b_faces, grid)
        self.batch = W.shape[:-2]
        W = W.reshape((-1,) + W.shape[-2:])
        S = S.reshape((-1,) + S.shape[-2:])
        self.settings = settings
        px, py = grid.periodic(0), grid.periodic(1)
        self.levels = [_Level(W, S, px, py)]
        self.P = []
        nx, ny = grid.shape
        while nx % 2 == 0 and ny % 2 == 0 and nx * ny > settings.coarsest:
            # coarse faces average the two fine faces they cover; 1/h^2 drops by 4
            W = 0.125 * (W[:, 0::2, 0::2] + W[:, 0::2, 1::2])
            S = 0.125 * (S[:, 0::2, 0::2] + S[:, 1::2, 0::2])
            nx //= 2
            ny //= 2
            self.P.append((_prolongation_1d(nx, px), _prolongation_1d(ny, py)))
            self.levels.append(_Level(W, S, px, py))
        coarse = self.levels[-1]
        self.coarse_pinv = np.stack([np.linalg.pinv(coarse.dense(b))
                                     for b in range(coarse.shape[0])])

    def _restrict(self, r, k):
        if not self.symmetric:
            return 0.25 * (r[:, 0::2, 0::2] + r[:, 1::2, 0::2]
                           + r[:, 0::2, 1::2] + r[:, 1::2, 1::2])
        Px, Py = self.P[k]
        return 0.25 * np.matmul(np.matmul(Px.T, r), Py)

    def _prolong(self, e, k):
        Px, Py = self.P[k]
        return np.matmul(np.matmul(Px, e), Py.T)

    def _cycle(self, k, phi, rhs):
        lev = self.levels[k]
        if k == len(self.levels) - 1:
            flat = np.einsum("bij,bj->bi", self.coarse_pinv, rhs.reshape(rhs.shape[0], -1))
            phi[...] = flat.reshape(phi.shape)
            return
        s = self.settings
        for _ in range(s.n_pre):
            _rbgs_kernel(phi, rhs, lev.W, lev.S, lev.px, lev.py, 0)
            _rbgs_kernel(phi, rhs, lev.W, lev.S, lev.px, lev.py, 1)
        r = rhs - lev.apply(phi)
        rc = self._restrict(r, k)
        ec = np.zeros_like(rc)
        self._cycle(k + 1, ec, rc)
        phi += self._prolong(ec, k)
        for _ in range(s.n_post):
            _rbgs_kernel(phi, rhs, lev.W, lev.S, lev.px, lev.py, 1)
            _rbgs_kernel(phi, rhs, lev.W, lev.S, lev.px, lev.py, 0)

    def vcycle(self, phi, rhs):
        """One V-cycle on arrays shaped ``(B, nx, ny)``; updates ``phi``."""
        self._cycle(0, phi, rhs)
        return phi

    def apply(self, phi):
        return self.levels[0].apply(phi)


def _mean_free(a):
    return a - a.mean(axis=(-2, -1), keepdims=True)


def _norm_inf(a):
    return np.abs(a).max(axis=(-2, -1))


def poisson_apply(phi, rho_faces: FaceVec, grid: Grid2D):
    """``div((1/rho) grad phi)`` with no flux through boundary faces."""
    g = gradient_faces(phi, grid)
    return divergence_cell(g / rho_faces, grid)


class _SpectralSolver:
    """Exact inverse of the constant-coefficient operator."""

    def __init__(self, grid: Grid2D, bx, by):
        self.grid = grid
        lam = []
        for d in (0, 1):
            n, h = grid.n(d), grid.h(d)
            k = np.arange(n)
            arg = np.pi * k / n if grid.periodic(d) else np.pi * k / (2 * n)
            lam.append(-4.0 / h**2 * np.sin(arg) ** 2)
        lx = lam[0][:, None]
        ly = lam[1][None, :]
        eig = bx[..., None, None] * lx + by[..., None, None] * ly
        eig = np.where(eig == 0.0, np.inf, eig)
        self.inv = 1.0 / eig

    def solve(self, r):
        g = self.grid
        a = r
        for d, ax in ((0, -2), (1, -1)):
            if not g.periodic(d):
                a = sfft.dct(a, type=2, norm="ortho", axis=ax)
        pax = [ax for d, ax in ((0, -2), (1, -1)) if g.periodic(d)]
        if pax:
            a = sfft.fftn(a, axes=pax)
        a = a * self.inv
        if pax:
            a = sfft.ifftn(a, axes=pax).real
        for d, ax in ((0, -2), (1, -1)):
            if not g.periodic(d):
                a = sfft.idct(a, type=2, norm="ortho", axis=ax)
        return a


def _pcg(apply_A, precond, rhs, tol, max_iter, history):
    """Batched preconditioned CG for the singular SPD operator ``-L``."""
    x = np.zeros_like(rhs)
    r = rhs.copy()
    z = _mean_free(precond(r))
    p = z.copy()
    rz = np.einsum("bij,bij->b", r, z)
    active = _norm_inf(r) > tol
    it = 0
    while np.any(active):
        if it >= max_iter:
            break
        it += 1
        Ap = apply_A(p)
        pAp = np.einsum("bij,bij->b", p, Ap)
        alpha = np.where(active & (pAp != 0), rz / np.where(pAp == 0, 1.0, pAp), 0.0)
        x += alpha[:, None, None] * p
        r -= alpha[:, None, None] * Ap
        res = _norm_inf(r)
        history.append(float(np.max(res / np.maximum(tol, 1e-300))))
        active = active & (res > tol)
        z = _mean_free(precond(r))
        rz_new = np.einsum("bij,bij->b", r, z)
        beta = np.where(active, rz_new / np.where(rz == 0, 1.0, rz), 0.0)
        p = z + beta[:, None, None] * p
        rz = rz_new
    return x, it


def _direct(rho_faces: FaceVec, rhs, grid: Grid2D):
    bx, by = _coefficients(FaceVec(1.0 / rho_faces.x, 1.0 / rho_faces.y), grid)
    nx, ny = grid.shape
    idx = np.arange(nx * ny).reshape(nx, ny)
    out = np.empty_like(rhs)
    for b in range(rhs.shape[0]):
        rows, cols, vals = [], [], []
        for coef, nbr, mask in _couplings(bx[b], by[b], idx, grid):
            c = coef[mask]
            i0 = idx[mask]
            i1 = nbr[mask]
            rows += [i0, i0, i1, i1]
            cols += [i1, i0, i0, i1]
            vals += [c, -c, c, -c]
        A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(nx * ny, nx * ny)).tolil()
        f = rhs[b].reshape(-1).copy()
        A[0, :] = 0.0
        A[0, 0] = 1.0
        f[0] = 0.0
        sol = spla.splu(A.tocsc()).solve(f)
        out[b] = sol.reshape(nx, ny)
    return _mean_free(out)


def _couplings(bx, by, idx, grid):
    """(coefficient, neighbour index, mask) for each lower face of each cell."""
    left = np.roll(idx, 1, axis=0)
    down = np.roll(idx, 1, axis=1)
    mx = np.ones_like(bx, dtype=bool)
    my = np.ones_like(by, dtype=bool)
    if not grid.periodic(0):
        mx[0, :] = False
    if not grid.periodic(1):
        my[:, 0] = False
    if grid.nx == 1:
        mx[:] = False
    if grid.ny == 1:
        my[:] = False
    return ((bx, left, mx), (by, down, my))


def solve_variable_poisson(rho_faces: FaceVec, rhs, grid: Grid2D,
                           settings: PoissonSettings | None = None, rhs_scale=None):
    """Solve ``div((1/rho) grad phi) = rhs`` with zero-mean ``phi``.

    Parameters
    ----------
    rho_faces : FaceVec
        Face densities (only interior faces matter).
    rhs : ndarray
        Cell right-hand side, shape ``(..., nx, ny)``.
    grid : Grid2D
    settings : PoissonSettings, optional
    rhs_scale : float or ndarray, optional
        Magnitude of the terms that were combined into ``rhs`` (per batch
        member).  Compatibility and convergence are judged relative to the
        larger of this and the size of ``rhs`` itself, so a right-hand side
        that is pure cancellation roundoff is accepted as solved.

    Returns
    -------
    phi : ndarray
    info : SolveInfo

    Raises
    ------
    SolvabilityError
        If the mean of ``rhs`` exceeds the compatibility tolerance.
    SolverError
        If the iteration does not converge.
    """
    s = settings or PoissonSettings()
    rmin = min(rho_faces.x.min(), rho_faces.y.min())
    rmax = max(rho_faces.x.max(), rho_faces.y.max())
    if not rmin > 1e-12 * rmax:
        raise DegenerateStateError(f"face density {rmin:.3e} below floor")
    batch = rhs.shape[:-2]
    r = np.array(rhs, dtype=float).reshape((-1,) + grid.shape)
    scale = np.abs(r).mean(axis=(-2, -1))
    ref = np.zeros_like(scale)
    if rhs_scale is not None:
        ref = np.broadcast_to(np.asarray(rhs_scale, dtype=float), batch).reshape(-1)
        scale = np.maximum(scale, ref)
    mean = r.mean(axis=(-2, -1))
    bad = np.abs(mean) > s.compat_tol * np.maximum(scale, 1e-300)
    if np.any(bad):
        raise SolvabilityError(
            f"right-hand side mean {mean[bad].max():.3e} exceeds compatibility tolerance")
    r = _mean_free(r)
    info = SolveInfo(method=s.method)
    tol = np.maximum(s.rel_tol * np.maximum(_norm_inf(r), ref), s.abs_tol)
    if np.all(_norm_inf(r) <= s.abs_tol):
        return np.zeros(batch + grid.shape), info

    b_faces = FaceVec((1.0 / rho_faces.x), (1.0 / rho_faces.y))
    if s.method == "direct":
        phi = _direct(_broadcast_faces(rho_faces, r.shape[0]), r, grid)
        hier = None
        res = _norm_inf(r - _apply_batched(phi, b_faces, grid, r.shape[0]))
        info.iterations = 1
    elif s.method == "spectral":
        W, S = _coefficients(_broadcast_faces(b_faces, r.shape[0]), grid)
        lev = _Level(W, S, grid.periodic(0), grid.periodic(1))
        bx = np.broadcast_to(_batch_means(b_faces.x, grid, 0, r.shape[0]), (r.shape[0],))
        by = np.broadcast_to(_batch_means(b_faces.y, grid, 1, r.shape[0]), (r.shape[0],))
        spec = _SpectralSolver(grid, bx, by)
        phi, info.iterations = _pcg(lambda p: -lev.apply(p), lambda q: -spec.solve(q),
                                    -r, tol, s.max_iter, info.history)
        res = _norm_inf(r - lev.apply(phi))
    else:
        hier = MultigridHierarchy(_broadcast_faces(b_faces, r.shape[0]), grid, s,
                                  symmetric=s.method == "mg")
        if s.method == "vcycle":
            phi = np.zeros_like(r)
            res = _norm_inf(r)
            while np.any(res > tol) and info.iterations < s.max_iter:
                hier.vcycle(phi, r)
                phi = _mean_free(phi)
                res = _norm_inf(r - hier.apply(phi))
                info.history.append(float(np.max(res / np.maximum(_norm_inf(r), 1e-300))))
                info.iterations += 1
        else:
            def precond(q):
                return -hier.vcycle(np.zeros_like(q), -q)
            phi, info.iterations = _pcg(lambda p: -hier.apply(p), precond, -r, tol,
                                        s.max_iter, info.history)
            res = _norm_inf(r - hier.apply(phi))
    info.residual = float(np.max(res / np.maximum(_norm_inf(r), 1e-300)))
    if np.any(res > tol * (1.0 + 1e-6)) and s.method != "direct":
        raise SolverError(f"Poisson solve ({s.method}) did not converge: relative residual "
                          f"{info.residual:.3e} after {info.iterations} iterations")
    return _mean_free(phi).reshape(batch + grid.shape), info


def _broadcast_faces(f: FaceVec, nb_: int) -> FaceVec:
    def bc(a):
        a = np.asarray(a)
        if a.ndim == 2:
            return np.broadcast_to(a, (nb_,) + a.shape)
        return a.reshape((-1,) + a.shape[-2:])
    return FaceVec(bc(f.x), bc(f.y))


def _apply_batched(phi, b_faces, grid, nb_):
    W, S = _coefficients(_broadcast_faces(b_faces, nb_), grid)
    return _Level(W, S, grid.periodic(0), grid.periodic(1)).apply(phi)


def _batch_means(a, grid: Grid2D, d: int, nb_: int):
    a = np.asarray(a)
    a = a.reshape((-1,) + a.shape[-2:]) if a.ndim > 2 else a[None]
    if not grid.periodic(d):
        a = a[:, 1:-1, :] if d == 0 else a[:, :, 1:-1]
    if a.size == 0:
        return np.zeros(nb_)
    m = a.mean(axis=(-2, -1))
    return np.broadcast_to(m, (nb_,))


def compute_S(F: FaceVec, grid: Grid2D, p: EosParams):
    """Velocity divergence ``(1/rho1_bar - 1/rho2_bar) div F`` implied by the EOS."""
    return -p.beta_over_rho * divergence_cell(F, grid)


def project_RS(m_tilde: FaceVec, rho_faces: FaceVec, S, grid: Grid2D,
               settings: PoissonSettings | None = None,
               v_boundary: FaceVec | None = None) -> ProjectionResult:
    """Project momentum so that the face velocity has divergence ``S``.

    Parameters
    ----------
    m_tilde : FaceVec
        Momentum to project.
    rho_faces : FaceVec
        Face densities, including boundary values on reservoir faces.
    S : ndarray
        Target cell divergence.
    grid : Grid2D
    settings : PoissonSettings, optional
    v_boundary : FaceVec, optional
        Supplies the boundary-normal face velocities (only those faces are
        read); zero normal velocity when omitted.

    Returns
    -------
    ProjectionResult
        ``m = rho_f v`` with ``v = m_tilde/rho_f - (1/rho_f) grad phi``;
        only interior faces are corrected, by a discrete gradient.
    """
    v = m_tilde / rho_faces
    for d, comp in ((0, v.x), (1, v.y)):
        if grid.periodic(d):
            continue
        view = np.moveaxis(comp, d - 2, 0)
        src = None if v_boundary is None else np.moveaxis(v_boundary[d], d - 2, 0)
        for i in (0, -1):
            view[i] = 0.0 if src is None else src[i]
    rhs = divergence_cell(v, grid) - S
    h = min(grid.dx, grid.dy)
    ref = (np.maximum(np.abs(v.x).max(axis=(-2, -1)), np.abs(v.y).max(axis=(-2, -1))) / h
           + np.abs(S).max(axis=(-2, -1)))
    phi, info = solve_variable_poisson(rho_faces, rhs, grid, settings, rhs_scale=ref)
    g = gradient_faces(phi, grid)
    v = v - g / rho_faces
    return ProjectionResult(v * rho_faces, v, phi, info)
