"""Small dense conic solver for the per-stream / per-relay subproblems.

Problems are linear (or convex-quadratic via squared affine terms) in a set
of Hermitian PSD blocks and free/nonnegative scalars, subject to affine
trace-functional equality and inequality constraints.

Internally every problem is lowered to one linear cone program:

* each complex Hermitian block of dimension n is carried through the
  standard 2n x 2n real symmetric embedding ``[[Re X, -Im X], [Im X, Re X]]``,
* each quadratic term ``w * (affine)^2`` becomes an epigraph scalar ``t``
  with the 2x2 Schur block ``[[1, affine], [affine, t]] >= 0``,

and handed to cvxopt's dense interior-point solver. Optimality certificates
(duality gap, constraint violation, PSD floor) are recomputed here from the
original problem data rather than trusted from the backend.

``solve`` is pure per call: no shared mutable state, safe to run many solves
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from cvxopt import matrix as _cvxmat
from cvxopt import solvers as _cvxsolvers

from .linalg import check_hermitian

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITERS = 200

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical_failure"


class ProblemFormatError(ValueError):
    """Raised when a ConicProblem references undeclared variables or is non-convex."""


@dataclass
class AffineExpr:
    """Real-valued affine functional sum_b tr(X_b C_b) + sum_j a_j s_j + const.

    ``blocks`` maps block names to Hermitian coefficient matrices, ``scalars``
    maps scalar-variable names to real coefficients.
    """

    blocks: dict = field(default_factory=dict)
    scalars: dict = field(default_factory=dict)
    constant: float = 0.0


@dataclass
class Constraint:
    expr: AffineExpr
    sense: str  # "eq" | "le"  (expr == rhs or expr <= rhs)
    rhs: float = 0.0


@dataclass
class ConicProblem:
    psd_blocks: list  # [(name, dim), ...]
    scalars: list = field(default_factory=list)  # [(name, "free"|"nonneg"), ...]
    objective: AffineExpr = field(default_factory=AffineExpr)
    quad_terms: list = field(default_factory=list)  # [(weight >= 0, AffineExpr), ...]
    constraints: list = field(default_factory=list)


@dataclass
class ConicSolution:
    status: str
    blocks: dict | None = None
    scalars: dict | None = None
    objective: float | None = None
    max_violation: float | None = None
    gap: float | None = None
    psd_floor: float | None = None
    iterations: int = 0
    message: str = ""
    # Lagrange multipliers per constraint, in ``problem.constraints`` order,
    # for the Lagrangian  objective + sum_i dual_i * (expr_i - rhs_i):
    # "le" duals are >= 0, equality duals are free, redundant equalities 0.
    duals: list | None = None


def _hermitian_param_count(n: int) -> int:
    return n * n


def _hermitian_row_coeffs(C: np.ndarray) -> np.ndarray:
    """Coefficients of tr(X C) in the real parameters of Hermitian X.

    Parameter order per block: the n diagonal entries, then for each pair
    i < j (row-major) the real and imaginary parts of X[i, j].
    """
    n = C.shape[0]
    coeffs = np.empty(n * n)
    coeffs[:n] = np.real(np.diag(C))
    pos = n
    for i in range(n):
        for j in range(i + 1, n):
            coeffs[pos] = 2.0 * C[i, j].real
            coeffs[pos + 1] = 2.0 * C[i, j].imag
            pos += 2
    return coeffs


def _block_from_params(x: np.ndarray, n: int) -> np.ndarray:
    X = np.zeros((n, n), dtype=np.complex128)
    X[np.arange(n), np.arange(n)] = x[:n]
    pos = n
    for i in range(n):
        for j in range(i + 1, n):
            X[i, j] = x[pos] + 1j * x[pos + 1]
            X[j, i] = x[pos] - 1j * x[pos + 1]
            pos += 2
    return X


def _embedding_columns(n: int) -> np.ndarray:
    """Columns of the map from Hermitian parameters to the embedded 2n x 2n
    real symmetric matrix, flattened column-major (one column per parameter)."""
    m = 2 * n
    cols = np.zeros((m * m, n * n))

    def put(col, r, c, val):
        cols[c * m + r, col] = val

    for i in range(n):
        put(i, i, i, 1.0)
        put(i, n + i, n + i, 1.0)
    pos = n
    for i in range(n):
        for j in range(i + 1, n):
            # real part basis: E_ij + E_ji in both diagonal copies
            for (r, c) in ((i, j), (j, i), (n + i, n + j), (n + j, n + i)):
                put(pos, r, c, 1.0)
            # imaginary part basis: off-diagonal copies of E_ij - E_ji
            put(pos + 1, i, n + j, -1.0)
            put(pos + 1, n + j, i, -1.0)
            put(pos + 1, j, n + i, 1.0)
            put(pos + 1, n + i, j, 1.0)
            pos += 2
    return cols


class _Assembled:
    """Index bookkeeping for one lowered problem."""

    def __init__(self, problem: ConicProblem):
        self.problem = problem
        self.block_dims = {}
        self.block_offset = {}
        self.scalar_offset = {}
        self.scalar_sign = {}
        nvar = 0
        for name, sign in problem.scalars:
            if name in self.scalar_offset:
                raise ProblemFormatError(f"duplicate scalar {name!r}")
            if sign not in ("free", "nonneg"):
                raise ProblemFormatError(f"unknown scalar sign {sign!r}")
            self.scalar_offset[name] = nvar
            self.scalar_sign[name] = sign
            nvar += 1
        for name, dim in problem.psd_blocks:
            if name in self.block_offset or name in self.scalar_offset:
                raise ProblemFormatError(f"duplicate block {name!r}")
            if dim < 1:
                raise ProblemFormatError("block dimension must be >= 1")
            self.block_offset[name] = nvar
            self.block_dims[name] = dim
            nvar += _hermitian_param_count(dim)
        # one epigraph scalar per quadratic term
        self.quad_offset = nvar
        nvar += len(problem.quad_terms)
        self.nvar = nvar

    def expr_row(self, expr: AffineExpr):
        """Return (row vector over variables, constant) for an affine expr."""
        row = np.zeros(self.nvar)
        for name, coef in expr.scalars.items():
            if name not in self.scalar_offset:
                raise ProblemFormatError(f"expression references undeclared scalar {name!r}")
            row[self.scalar_offset[name]] += float(coef)
        for name, C in expr.blocks.items():
            if name not in self.block_offset:
                raise ProblemFormatError(f"expression references undeclared block {name!r}")
            n = self.block_dims[name]
            Cm = check_hermitian(np.asarray(C, dtype=np.complex128))
            if Cm.shape != (n, n):
                raise ProblemFormatError(
                    f"coefficient for block {name!r} has shape {Cm.shape}, expected {(n, n)}")
            off = self.block_offset[name]
            row[off:off + n * n] += _hermitian_row_coeffs(Cm)
        return row, float(expr.constant)

    def eval_expr(self, expr: AffineExpr, x: np.ndarray) -> float:
        row, const = self.expr_row(expr)
        return float(row @ x + const)


def _independent_equalities(A: np.ndarray, b: np.ndarray):
    """Reduce Ax = b to an equivalent full-row-rank system.

    Returns (A_red, b_red, consistent, kept_row_indices). Inconsistent
    systems (rank([A b]) > rank(A)) report consistent=False.
    """
    rows = np.arange(A.shape[0])
    if A.shape[0] == 0:
        return A, b, True, rows
    scale = max(np.abs(A).max(), np.abs(b).max(), 1.0)
    tol = max(A.shape) * np.finfo(float).eps * scale * 10.0
    rank_a = np.linalg.matrix_rank(A, tol=tol)
    rank_ab = np.linalg.matrix_rank(np.column_stack([A, b]), tol=tol)
    if rank_ab > rank_a:
        return A, b, False, rows
    if rank_a == A.shape[0]:
        return A, b, True, rows
    # QR with column pivoting on A^T picks a maximal independent row subset
    _, _, piv = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
    keep = np.sort(piv[:rank_a])
    return A[keep], b[keep], True, keep


def solve(problem: ConicProblem, tol: float = DEFAULT_TOL,
          max_iters: int = DEFAULT_MAX_ITERS) -> ConicSolution:
    """Solve a conic problem to tolerance ``tol`` with certificate checks."""
    idx = _Assembled(problem)
    for w, _ in problem.quad_terms:
        if w < 0:
            raise ProblemFormatError("quadratic term weights must be nonnegative")

    c = np.zeros(idx.nvar)
    obj_row, obj_const = idx.expr_row(problem.objective)
    c += obj_row
    for q, (w, _) in enumerate(problem.quad_terms):
        c[idx.quad_offset + q] += float(w)

    # orthant rows: nonneg scalars, then declared inequalities
    lin_rows, lin_rhs, lin_src = [], [], []
    for name, sign in problem.scalars:
        if sign == "nonneg":
            row = np.zeros(idx.nvar)
            row[idx.scalar_offset[name]] = -1.0
            lin_rows.append(row)
            lin_rhs.append(0.0)
            lin_src.append(None)
    eq_rows, eq_rhs, eq_src = [], [], []
    for ci, con in enumerate(problem.constraints):
        row, const = idx.expr_row(con.expr)
        if con.sense == "le":
            lin_rows.append(row)
            lin_rhs.append(float(con.rhs) - const)
            lin_src.append(ci)
        elif con.sense == "eq":
            eq_rows.append(row)
            eq_rhs.append(float(con.rhs) - const)
            eq_src.append(ci)
        else:
            raise ProblemFormatError(f"unknown constraint sense {con.sense!r}")

    # PSD slack blocks: embedded Hermitian blocks, then 2x2 epigraph blocks
    sdp_dims, G_parts, h_parts = [], [], []
    nl = len(lin_rows)
    if nl:
        G_parts.append(np.vstack(lin_rows))
        h_parts.append(np.asarray(lin_rhs))
    else:
        G_parts.append(np.zeros((0, idx.nvar)))
        h_parts.append(np.zeros(0))
    for name, dim in problem.psd_blocks:
        off = idx.block_offset[name]
        emb = _embedding_columns(dim)  # (4 dim^2, dim^2)
        Gb = np.zeros((emb.shape[0], idx.nvar))
        Gb[:, off:off + dim * dim] = -emb
        G_parts.append(Gb)
        h_parts.append(np.zeros(emb.shape[0]))
        sdp_dims.append(2 * dim)
    for q, (w, expr) in enumerate(problem.quad_terms):
        row, const = idx.expr_row(expr)
        Gb = np.zeros((4, idx.nvar))
        hb = np.zeros(4)
        hb[0] = 1.0                     # block (0,0) = 1
        Gb[1, :] = -row                 # block (1,0) = affine expr
        hb[1] = const
        Gb[2, :] = -row                 # block (0,1) mirror
        hb[2] = const
        Gb[3, idx.quad_offset + q] = -1.0  # block (1,1) = t
        G_parts.append(Gb)
        h_parts.append(hb)
        sdp_dims.append(2)

    G = np.vstack(G_parts)
    h = np.concatenate(h_parts)
    A = np.vstack(eq_rows) if eq_rows else np.zeros((0, idx.nvar))
    bvec = np.asarray(eq_rhs) if eq_rhs else np.zeros(0)

    # variables appearing nowhere make the KKT system singular; pin or reject
    used = (np.abs(G).sum(axis=0) + np.abs(A).sum(axis=0)) > 0
    if not used.all():
        missing = np.where(~used)[0]
        if np.any(c[missing] != 0.0):
            return ConicSolution(status=NUMERICAL_FAILURE,
                                 message="objective is unbounded in an unconstrained variable")
        pin = np.zeros((missing.size, idx.nvar))
        pin[np.arange(missing.size), missing] = 1.0
        A = np.vstack([A, pin])
        bvec = np.concatenate([bvec, np.zeros(missing.size)])
        eq_src = eq_src + [None] * missing.size

    A, bvec, consistent, kept = _independent_equalities(A, bvec)
    if not consistent:
        return ConicSolution(status=INFEASIBLE,
                             message="equality constraints are inconsistent")
    eq_src = [eq_src[i] for i in kept]

    dims = {"l": nl, "q": [], "s": sdp_dims}
    options = {
        "show_progress": False,
        "maxiters": int(max_iters),
        "abstol": tol,
        "reltol": tol,
        "feastol": max(tol, 1e-9),
        "refinement": 1,
    }
    try:
        sol = _cvxsolvers.conelp(
            _cvxmat(c), _cvxmat(G), _cvxmat(h), dims,
            _cvxmat(A) if A.shape[0] else None,
            _cvxmat(bvec) if A.shape[0] else None,
            options=options)
    except (ValueError, ArithmeticError) as exc:
        return ConicSolution(status=NUMERICAL_FAILURE, message=f"backend error: {exc}")

    status = sol["status"]
    if status == "primal infeasible":
        return ConicSolution(status=INFEASIBLE, message="primal infeasibility certificate found")
    if status == "dual infeasible":
        return ConicSolution(status=NUMERICAL_FAILURE,
                             message="dual infeasibility certificate (problem unbounded)")
    if sol["x"] is None:
        return ConicSolution(status=NUMERICAL_FAILURE,
                             message=f"backend stopped without a solution (status {status!r})")

    x = np.asarray(sol["x"]).ravel()
    blocks = {name: _block_from_params(x[idx.block_offset[name]:
                                         idx.block_offset[name] + dim * dim], dim)
              for name, dim in problem.psd_blocks}
    scalars = {name: float(x[idx.scalar_offset[name]]) for name, _ in problem.scalars}

    objective = float(obj_row @ x) + obj_const
    for w, expr in problem.quad_terms:
        objective += float(w) * idx.eval_expr(expr, x) ** 2

    violation = 0.0
    for con in problem.constraints:
        val = idx.eval_expr(con.expr, x) - float(con.rhs)
        violation = max(violation, abs(val) if con.sense == "eq" else max(0.0, val))
    for name, sign in problem.scalars:
        if sign == "nonneg":
            violation = max(violation, max(0.0, -scalars[name]))
    psd_floor = min((float(np.linalg.eigvalsh(X).min()) for X in blocks.values()),
                    default=0.0)

    # independent duality-gap estimate -h'z - b'y vs c'x on the lowered cone LP
    z = np.asarray(sol["z"]).ravel()
    y = np.asarray(sol["y"]).ravel() if sol["y"] is not None else np.zeros(0)
    dual_obj = -float(h @ z) - (float(bvec @ y) if y.size else 0.0)
    gap = abs(float(c @ x) - dual_obj)

    # constraint multipliers for obj + sum dual_i (expr_i - rhs_i):
    # cvxopt's Lagrangian is c'x + z'(Gx - h) + y'(Ax - b), so the orthant
    # rows map to their z entries and equality rows to y directly
    duals = [0.0] * len(problem.constraints)
    for pos, src in enumerate(lin_src):
        if src is not None:
            duals[src] = float(z[pos])
    for pos, src in enumerate(eq_src):
        if src is not None:
            duals[src] = float(y[pos])

    res = ConicSolution(status=OPTIMAL, blocks=blocks, scalars=scalars,
                        objective=objective, max_violation=violation, gap=gap,
                        psd_floor=psd_floor, iterations=int(sol["iterations"]),
                        message="", duals=duals)
    if status == "unknown":
        # iteration cap or numerical trouble; keep the iterate for diagnostics
        res.status = NUMERICAL_FAILURE
        res.message = ("backend did not certify optimality "
                       f"(gap {gap:.3e}, violation {violation:.3e})")
    return res


def infeasibility_probe(problem: ConicProblem) -> bool:
    """True iff ``solve`` reports infeasibility at tolerance 1e-6."""
    return solve(problem, tol=1e-6).status == INFEASIBLE
