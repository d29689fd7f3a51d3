"""Nonlinear and linear solver stack.

Damped Newton on the assembled residual; inner linear solves by BiCGStab
preconditioned with a geometric multigrid V-cycle (ILU(0) smoothing,
dense LU on the coarsest level, Galerkin coarse operators).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from fracmlmc._kernels import ilu0_factor, ilu0_solve

__all__ = [
    "NewtonConfig",
    "KrylovConfig",
    "SolveReport",
    "SolverError",
    "KrylovError",
    "NewtonError",
    "ZeroPivotError",
    "Ilu0",
    "bicgstab",
    "GmgHierarchy",
    "newton_solve",
]


class SolverError(RuntimeError):
    pass


class KrylovError(SolverError):
    pass


class NewtonError(SolverError):
    pass


class ZeroPivotError(SolverError):
    def __init__(self, row: int):
        super().__init__(f"zero pivot in ILU(0) at row {row}")
        self.row = row


@dataclass(frozen=True)
class NewtonConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_iterations: int = 20
    line_search_halvings: int = 4

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("Newton tolerances must be positive")


@dataclass(frozen=True)
class KrylovConfig:
    rel_tol: float = 1e-8
    max_iterations: int = 200
    preconditioner: str = "gmg"   # gmg | ilu0 | none

    def __post_init__(self):
        if not 0.0 < self.rel_tol < 1.0:
            raise ValueError("Krylov tolerance must lie in (0, 1)")
        if self.preconditioner not in ("gmg", "ilu0", "none"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class SolveReport:
    newton_iterations: int = 0
    krylov_iterations: list[int] = field(default_factory=list)
    residual_norms: list[float] = field(default_factory=list)
    wall_seconds: float = 0.0

    @property
    def total_krylov(self) -> int:
        return int(sum(self.krylov_iterations))


# ---------------------------------------------------------------------------
# ILU(0)
# ---------------------------------------------------------------------------

class Ilu0:
    """Zero-fill incomplete LU on the sparsity pattern of a CSR matrix."""

    def __init__(self, matrix: sp.csr_matrix, shift_retry: bool = True):
        a = matrix.tocsr().copy()
        a.sort_indices()
        self._indptr = a.indptr.astype(np.int64)
        self._indices = a.indices.astype(np.int64)
        n = a.shape[0]
        rows = np.repeat(np.arange(n, dtype=np.int64),
                         np.diff(self._indptr))
        diag_entries = np.flatnonzero(self._indices == rows)
        if len(diag_entries) != n:
            present = np.zeros(n, dtype=bool)
            present[rows[self._indices == rows]] = True
            raise ZeroPivotError(int(np.flatnonzero(~present)[0]))
        diag_pos = diag_entries.astype(np.int64)
        self._diag_pos = diag_pos
        self._data = a.data.astype(np.float64).copy()
        bad = ilu0_factor(self._indptr, self._indices, self._data, diag_pos)
        if bad >= 0:
            if not shift_retry:
                raise ZeroPivotError(int(bad))
            # retry once with a small diagonal shift
            shifted = a.copy()
            scale = max(1.0, float(np.abs(a.diagonal()).max()))
            shifted = (shifted + sp.identity(n, format="csr") * (1e-12 * scale)).tocsr()
            shifted.sort_indices()
            self._data = shifted.data.astype(np.float64).copy()
            bad = ilu0_factor(self._indptr, self._indices, self._data, diag_pos)
            if bad >= 0:
                raise ZeroPivotError(int(bad))
        self.shape = a.shape

    def solve(self, b: np.ndarray) -> np.ndarray:
        out = np.empty_like(b, dtype=np.float64)
        ilu0_solve(self._indptr, self._indices, self._data, self._diag_pos,
                   np.asarray(b, dtype=np.float64), out)
        return out

    __call__ = solve


# ---------------------------------------------------------------------------
# BiCGStab
# ---------------------------------------------------------------------------

def bicgstab(operator, rhs: np.ndarray, preconditioner=None,
             config: KrylovConfig = KrylovConfig(), x0: np.ndarray | None = None):
    """Preconditioned BiCGStab; returns (solution, iterations).

    ``operator`` is a sparse matrix or any object supporting ``@``.
    ``preconditioner`` is a callable approximating the inverse action.
    """
    b = np.asarray(rhs, dtype=np.float64)
    if not np.all(np.isfinite(b)):
        raise KrylovError("right-hand side contains non-finite entries")
    n = len(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    m = preconditioner if preconditioner is not None else lambda v: v

    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros(n), 0
    r = b - operator @ x if x.any() else b.copy()
    if np.linalg.norm(r) <= config.rel_tol * b_norm:
        return x, 0
    r0 = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros(n)
    p = np.zeros(n)
    tiny = np.finfo(np.float64).tiny

    for it in range(1, config.max_iterations + 1):
        rho_new = float(r0 @ r)
        if abs(rho_new) < tiny * 1e3:
            raise KrylovError(f"BiCGStab breakdown (rho ~ 0) at iteration {it}")
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        ph = m(p)
        v = operator @ ph
        denom = float(r0 @ v)
        if abs(denom) < tiny * 1e3:
            raise KrylovError(f"BiCGStab breakdown (r0.v ~ 0) at iteration {it}")
        alpha = rho / denom
        s = r - alpha * v
        if np.linalg.norm(s) <= config.rel_tol * b_norm:
            x = x + alpha * ph
            return x, it
        sh = m(s)
        t = operator @ sh
        tt = float(t @ t)
        if tt == 0.0:
            raise KrylovError(f"BiCGStab breakdown (t = 0) at iteration {it}")
        omega = float(t @ s) / tt
        x = x + alpha * ph + omega * sh
        r = s - omega * t
        if np.linalg.norm(r) <= config.rel_tol * b_norm:
            return x, it
        if omega == 0.0:
            raise KrylovError(f"BiCGStab breakdown (omega = 0) at iteration {it}")

    raise KrylovError(
        f"BiCGStab did not reach rtol={config.rel_tol:g} in "
        f"{config.max_iterations} iterations")


# ---------------------------------------------------------------------------
# geometric multigrid
# ---------------------------------------------------------------------------

class GmgHierarchy:
    """V-cycle preconditioner built from Galerkin coarse operators.

    Level ``L`` holds the given fine matrix; coarser operators are
    restriction * A * prolongation with restriction = prolongation^T.
    ILU(0) smooths every level except the coarsest, which is solved by
    dense LU ("Gaussian elimination").
    """

    def __init__(self, fine_matrix: sp.csr_matrix, transfers,
                 pre_smooth: int = 2, post_smooth: int = 2):
        self.pre_smooth = pre_smooth
        self.post_smooth = post_smooth
        self.transfers = list(transfers)
        mats = [fine_matrix.tocsr()]
        for p in reversed(self.transfers):
            mats.append((p.T @ mats[-1] @ p).tocsr())
        mats.reverse()
        self.matrices = mats
        for a in self.matrices:
            a.sort_indices()
        self.smoothers = [None] + [Ilu0(a) for a in self.matrices[1:]]
        coarse = self.matrices[0].toarray()
        self._coarse_lu = sla.lu_factor(coarse)

    @property
    def n_levels(self) -> int:
        return len(self.matrices)

    def vcycle(self, level: int, rhs: np.ndarray, x: np.ndarray | None = None):
        """One V-cycle on the given level (0 = coarsest)."""
        if level == 0:
            return sla.lu_solve(self._coarse_lu, rhs)
        a = self.matrices[level]
        smoother = self.smoothers[level]
        if x is None:
            x = np.zeros(a.shape[0])
        for _ in range(self.pre_smooth):
            x = x + smoother.solve(rhs - a @ x)
        residual = rhs - a @ x
        p = self.transfers[level - 1]
        coarse_correction = self.vcycle(level - 1, p.T @ residual)
        x = x + p @ coarse_correction
        for _ in range(self.post_smooth):
            x = x + smoother.solve(rhs - a @ x)
        return x

    def preconditioner(self):
        top = self.n_levels - 1
        return lambda r: self.vcycle(top, r)


# ---------------------------------------------------------------------------
# Newton
# ---------------------------------------------------------------------------

def newton_solve(system, guess: np.ndarray,
                 config: NewtonConfig = NewtonConfig(),
                 krylov: KrylovConfig = KrylovConfig(),
                 preconditioner_factory=None):
    """Damped Newton iteration.

    ``system`` provides ``residual(u) -> r`` and ``jacobian_system(u) ->
    (r, J)``.  ``preconditioner_factory(J, iteration)`` may return a
    callable used to precondition the inner BiCGStab solves (or None).
    Raises NewtonError when the iteration stalls or exceeds its budget;
    the caller is expected to retry with a smaller time step.
    """
    t0 = time.perf_counter()
    report = SolveReport()
    u = np.array(guess, dtype=np.float64)
    r = system.residual(u)
    if not np.all(np.isfinite(r)):
        raise NewtonError("non-finite residual at the initial guess")
    norm = float(np.linalg.norm(r))
    norm0 = norm
    report.residual_norms.append(norm)

    for it in range(config.max_iterations):
        if norm <= config.abs_tol or norm <= config.rel_tol * norm0:
            report.wall_seconds = time.perf_counter() - t0
            return u, report
        r, jac = system.jacobian_system(u)
        m = None
        if preconditioner_factory is not None:
            m = preconditioner_factory(jac, it)
        try:
            step, kit = bicgstab(jac, -r, preconditioner=m, config=krylov)
        except KrylovError as exc:
            raise NewtonError(f"linear solve failed: {exc}") from exc
        report.krylov_iterations.append(kit)
        report.newton_iterations += 1

        scale = 1.0
        accepted = False
        for _ in range(config.line_search_halvings + 1):
            u_try = u + scale * step
            r_try = system.residual(u_try)
            norm_try = float(np.linalg.norm(r_try))
            if np.isfinite(norm_try) and (norm_try < norm or norm_try <= config.abs_tol):
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            raise NewtonError(
                f"line search stalled at iteration {it + 1} "
                f"(residual {norm:.3e})")
        u = u_try
        norm = norm_try
        report.residual_norms.append(norm)

    if norm <= config.abs_tol or norm <= config.rel_tol * norm0:
        report.wall_seconds = time.perf_counter() - t0
        return u, report
    raise NewtonError(
        f"no convergence in {config.max_iterations} iterations "
        f"(residual {norm:.3e}, initial {norm0:.3e})")
