"""Analysis-side l1 separation of a signal into two frame-sparse components.

Solves::

    min  ||Phi_1^T S_1||_1 + ||Phi_2^T S_2||_1   subject to  S_1 + S_2 = S

over the single variable ``S_1`` (``S_2 := S - S_1``) with a first-order
primal-dual proximal splitting scheme, plus an independent dense-simplex
linear-programming oracle for small real matrix frames.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

import numpy as np


class Frame(Protocol):
    """Analysis/synthesis pair; ``synthesis`` must be the adjoint of ``analysis``."""

    def analysis(self, x: np.ndarray) -> np.ndarray: ...

    def synthesis(self, c: np.ndarray) -> np.ndarray: ...


class NonConvergenceError(RuntimeError):
    """Raised by callers that require convergence within the iteration cap."""


@dataclass(frozen=True)
class SolverConfig:
    """Settings of the primal-dual solver.

    ``step_ratio`` is ``tau / sigma``; the product is fixed to
    ``1 / norm_bound`` with ``norm_bound >= ||K||^2``. ``None`` balances
    the primal scale ``||Phi_2^T S||`` against the unit-modulus dual scale
    (``tau / sigma = ||Phi_2^T S||^2 / #coefficients``).

    Iteration stops once, over the last ``window`` iterations, the objective
    stayed within a relative band of width ``tol`` and the root-mean-square
    change of the dual variables stayed below ``dual_tol``. The second test
    prevents stopping on plateaus where the primal iterate stalls while the
    duals are still travelling.
    """

    max_iter: int = 5000
    tol: float = 1e-7
    window: int = 10
    dual_tol: float = 1e-5
    norm_bound: Optional[float] = None
    step_ratio: Optional[float] = None
    log_every: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iter < 1 or self.window < 1:
            raise ValueError("max_iter and window must be positive")


@dataclass
class SepProblem:
    """Observed signal ``S``, a frame pair and solver settings.

    ``frame_bounds`` are upper frame bounds ``B_1, B_2`` (1 for Parseval
    frames); ``project`` optionally maps the primal variable onto a closed
    subspace that contains ``S`` (e.g. real fields, or a frequency band).
    """

    S: np.ndarray
    frames: tuple
    config: SolverConfig = field(default_factory=SolverConfig)
    frame_bounds: tuple[float, float] = (1.0, 1.0)
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if len(self.frames) != 2:
            raise ValueError("a separation problem needs exactly two frames")
        self.S = np.asarray(self.S)


@dataclass
class SepSolution:
    S1: np.ndarray
    S2: np.ndarray
    trace: list
    iterations: int
    residual: float
    converged: bool = True

    @property
    def objective(self) -> float:
        return self.trace[-1] if self.trace else 0.0


def _l1(c: np.ndarray) -> float:
    return float(np.sum(np.abs(c)))


def objective(problem: SepProblem, S1: np.ndarray, S2: np.ndarray) -> float:
    """``||Phi_1^T S_1||_1 + ||Phi_2^T S_2||_1`` with the complex modulus."""
    f1, f2 = problem.frames
    S1, S2 = np.asarray(S1), np.asarray(S2)
    if S1.shape != problem.S.shape or S2.shape != problem.S.shape:
        raise ValueError("components must match the observed signal's shape")
    return _l1(f1.analysis(S1)) + _l1(f2.analysis(S2))


def _project_unit(y: np.ndarray) -> np.ndarray:
    """Project each entry onto the closed complex unit disk (in place)."""
    mag = np.abs(y)
    np.maximum(mag, 1.0, out=mag)
    y /= mag
    return y


def solve_sep(problem: SepProblem, x0: Optional[np.ndarray] = None) -> SepSolution:
    """Primal-dual splitting for the reduced separation problem.

    With ``K x = (Phi_1^T x, -Phi_2^T x)`` and ``b = Phi_2^T S`` the problem
    reads ``min_x ||(K x)_1||_1 + ||(K x)_2 + b||_1``. Both dual proxes are
    projections onto unit disks (the second after a shift by ``sigma b``),
    and the primal step only needs the synthesis operators, so no inner
    solves are required. ``S_2 = S - S_1`` keeps feasibility exact.

    The returned trace is the best objective seen so far (hence
    non-increasing) and the returned pair is the corresponding iterate.
    Stopping follows :class:`SolverConfig`.
    """
    cfg = problem.config
    f1, f2 = problem.frames
    S = problem.S
    proj = problem.project or (lambda v: v)
    L2 = cfg.norm_bound if cfg.norm_bound is not None else float(sum(problem.frame_bounds))

    b = f2.analysis(S)
    x = np.zeros_like(S, dtype=complex) if x0 is None else proj(np.asarray(x0, dtype=complex))
    a1 = f1.analysis(x)
    a2 = f2.analysis(x)

    def obj_of(c1, c2):
        return _l1(c1) + _l1(b - c2)

    current = obj_of(a1, a2)
    best, best_x = current, x.copy()
    trace = [best]
    history = [current]
    if current == 0.0:
        return _finish(problem, best_x, trace, 0, True)

    if cfg.step_ratio is not None:
        ratio = cfg.step_ratio
    else:
        # tau ~ ||x|| / ||K^* y|| and sigma ~ ||y|| / ||K x|| with ||x|| ~ ||b||
        # (Parseval) and unit-modulus duals give tau / sigma ~ ||b||^2 / #coefficients
        ratio = max(float(np.vdot(b, b).real) / (b.size + a1.size), 1e-300)
    tau = math.sqrt(ratio / L2)
    sigma = 1.0 / (L2 * tau)

    y1 = np.zeros_like(a1, dtype=complex)
    y2 = np.zeros_like(b, dtype=complex)
    bar1, bar2 = a1, a2
    converged = False
    it = 0
    n_dual = y1.size + y2.size
    dual_steps = []
    for it in range(1, cfg.max_iter + 1):
        y1_new = _project_unit(y1 + sigma * bar1)
        y2_new = _project_unit(y2 + sigma * (b - bar2))
        y1 -= y1_new
        y2 -= y2_new
        step = np.vdot(y1, y1).real + np.vdot(y2, y2).real
        dual_steps.append(math.sqrt(step / n_dual))
        y1, y2 = y1_new, y2_new
        x_new = proj(x - tau * (f1.synthesis(y1) - f2.synthesis(y2)))
        n1 = f1.analysis(x_new)
        n2 = f2.analysis(x_new)
        a1 *= -1.0
        a1 += 2.0 * n1
        a2 *= -1.0
        a2 += 2.0 * n2
        bar1, bar2 = a1, a2
        x, a1, a2 = x_new, n1, n2
        current = obj_of(a1, a2)
        history.append(current)
        if current < best:
            best, best_x = current, x.copy()
        trace.append(best)
        if cfg.log_every and it % cfg.log_every == 0:
            print(f"iter {it:5d}  objective {current:.10g}  best {best:.10g}")
        if it >= cfg.window:
            recent = history[-1 - cfg.window:]
            flat = max(recent) - min(recent) <= cfg.tol * max(abs(current), 1e-300)
            if flat and max(dual_steps[-cfg.window:]) <= cfg.dual_tol:
                converged = True
                break
    return _finish(problem, best_x, trace, it, converged)


def _finish(problem, x, trace, iterations, converged) -> SepSolution:
    S = problem.S
    S1 = x.real.copy() if np.isrealobj(S) else x
    S2 = S - S1
    residual = float(np.max(np.abs(S1 + S2 - S))) if S.size else 0.0
    return SepSolution(S1, S2, trace, iterations, residual, converged)


# ---------------------------------------------------------------------------
# Finite-dimensional frames and the linear-programming oracle
# ---------------------------------------------------------------------------

@dataclass
class MatrixFrame:
    """Frame given by an explicit synthesis matrix whose columns are atoms."""

    atoms: np.ndarray

    def analysis(self, x):
        return self.atoms.conj().T @ x

    def synthesis(self, c):
        return self.atoms @ c

    @property
    def upper_bound(self) -> float:
        return float(np.linalg.norm(self.atoms, 2) ** 2)


def random_parseval_frame(dim: int, size: int, rng: np.random.Generator) -> MatrixFrame:
    """Real Parseval frame of ``size`` atoms in ``R^dim`` (rows of a random orthogonal matrix)."""
    if size < dim:
        raise ValueError("a frame needs at least as many atoms as the dimension")
    q, r = np.linalg.qr(rng.standard_normal((size, size)))
    q = q * np.sign(np.diag(r))
    return MatrixFrame(q[:dim, :])


class LPInfeasibleError(RuntimeError):
    pass


def _simplex(T: np.ndarray, basis: list, n_cols: int, eps: float) -> int:
    """Run Bland-rule simplex pivots on tableau ``T`` (last row is the cost row).

    Columns ``>= n_cols`` are never allowed to enter. Returns the pivot count.
    """
    m = T.shape[0] - 1
    pivots = 0
    while True:
        cost = T[-1, :n_cols]
        entering = next((k for k in range(n_cols) if cost[k] < -eps), None)
        if entering is None:
            return pivots
        col = T[:m, entering]
        best_ratio, leaving = math.inf, None
        for i in range(m):
            if col[i] > eps:
                ratio = T[i, -1] / col[i]
                if ratio < best_ratio - eps or (abs(ratio - best_ratio) <= eps and basis[i] < basis[leaving]):
                    best_ratio, leaving = ratio, i
        if leaving is None:
            raise RuntimeError("linear program is unbounded")
        T[leaving] /= T[leaving, entering]
        for i in range(m + 1):
            if i != leaving and T[i, entering] != 0.0:
                T[i] -= T[i, entering] * T[leaving]
        basis[leaving] = entering
        pivots += 1


def linprog_simplex(c: np.ndarray, A: np.ndarray, b: np.ndarray, eps: float = 1e-10):
    """Minimise ``c . z`` subject to ``A z = b``, ``z >= 0`` (dense two-phase simplex).

    Returns ``(z, value, pivots)``.
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    # phase 1: artificial columns n..n+m-1
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    pivots = _simplex(T, basis, n, eps)
    if T[-1, -1] < -1e-8 * max(1.0, np.abs(b).max(initial=0.0)):
        raise LPInfeasibleError("linear program is infeasible")
    # drive remaining artificials out of the basis (or drop redundant rows)
    keep = []
    for i in range(m):
        if basis[i] >= n:
            k = next((k for k in range(n) if abs(T[i, k]) > eps), None)
            if k is None:
                continue  # redundant constraint
            T[i] /= T[i, k]
            for r in range(m + 1):
                if r != i and T[r, k] != 0.0:
                    T[r] -= T[r, k] * T[i]
            basis[i] = k
            pivots += 1
        keep.append(i)
    T2 = np.zeros((len(keep) + 1, n + 1))
    T2[:-1, :n] = T[keep, :n]
    T2[:-1, -1] = T[keep, -1]
    basis2 = [basis[i] for i in keep]
    T2[-1, :n] = c
    for i, k in enumerate(basis2):
        T2[-1] -= c[k] * T2[i]
    pivots += _simplex(T2, basis2, n, eps)
    z = np.zeros(n)
    for i, k in enumerate(basis2):
        z[k] = T2[i, -1]
    return z, float(c @ z), pivots


def lp_oracle(problem: SepProblem) -> SepSolution:
    """Exact minimiser for real matrix frames via linear programming.

    Variables ``x = x+ - x-`` and ``Phi_i^T x``-residual parts ``u_i - v_i``
    are split into non-negative pieces; the constraints
    ``Phi_1^T x = u_1 - v_1`` and ``Phi_2^T (S - x) = u_2 - v_2`` make the
    objective ``sum(u + v)`` equal to the separation objective at optimality.
    """
    f1, f2 = problem.frames
    A1 = np.asarray(getattr(f1, "atoms", None))
    A2 = np.asarray(getattr(f2, "atoms", None))
    if A1.ndim != 2 or A2.ndim != 2 or np.iscomplexobj(A1) or np.iscomplexobj(A2):
        raise TypeError("the LP oracle needs real matrix frames")
    S = np.asarray(problem.S, dtype=float)
    d = S.size
    if d > 16:
        raise ValueError("the LP oracle is limited to ambient dimension <= 16")
    n1, n2 = A1.shape[1], A2.shape[1]
    P1, P2 = A1.T, A2.T
    n_var = 2 * d + 2 * n1 + 2 * n2
    A = np.zeros((n1 + n2, n_var))
    A[:n1, :d] = P1
    A[:n1, d:2 * d] = -P1
    A[:n1, 2 * d:2 * d + n1] = -np.eye(n1)
    A[:n1, 2 * d + n1:2 * d + 2 * n1] = np.eye(n1)
    o = 2 * d + 2 * n1
    A[n1:, :d] = P2
    A[n1:, d:2 * d] = -P2
    A[n1:, o:o + n2] = np.eye(n2)
    A[n1:, o + n2:] = -np.eye(n2)
    rhs = np.concatenate([np.zeros(n1), P2 @ S])
    cost = np.concatenate([np.zeros(2 * d), np.ones(2 * n1 + 2 * n2)])
    try:
        z, value, pivots = linprog_simplex(cost, A, rhs)
    except LPInfeasibleError as exc:  # cannot happen for a consistent problem
        raise LPInfeasibleError("separation LP infeasible; the problem data is inconsistent") from exc
    x = z[:d] - z[d:2 * d]
    sol = SepSolution(x, S - x, [], pivots, 0.0, True)
    sol.trace = [objective(problem, sol.S1, sol.S2)]
    return sol
