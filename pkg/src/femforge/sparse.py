"""Compressed-row matrices with a fixed symbolic pattern, and linear solvers.

The pattern is built once from mesh connectivity and reused; only values
change between assemblies.
"""
from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg


class AssemblyError(RuntimeError):
    """Element contribution outside the symbolic pattern."""


class SingularMatrixError(np.linalg.LinAlgError):
    pass


class PreconditionerError(ValueError):
    pass


class ConstraintError(ValueError):
    pass


DENSE_CAP = 3000


@dataclass
class SolveReport:
    iterations: int
    final_residual_norm: float
    converged: bool
    method: str = "cg"
    initial_residual_norm: float = 0.0

    def as_dict(self) -> dict:
        return {"method": self.method, "iterations": self.iterations,
                "residual": self.final_residual_norm, "converged": self.converged}


class SparseMatrix:
    """Square CSR matrix whose sparsity pattern never changes after creation."""

    def __init__(self, n, row_offsets, column_indices, values=None):
        self.n = int(n)
        self.row_offsets = np.asarray(row_offsets, dtype=np.int64)
        self.column_indices = np.asarray(column_indices, dtype=np.int64)
        self.values = (np.zeros(len(self.column_indices)) if values is None
                       else np.asarray(values, dtype=float))
        self._rows = np.repeat(np.arange(self.n), np.diff(self.row_offsets))
        # sorted because rows ascend and columns ascend within a row
        self._keys = self._rows * self.n + self.column_indices
        self._position_cache = {}

    @property
    def nnz(self) -> int:
        return len(self.column_indices)

    @property
    def rows(self) -> np.ndarray:
        """Row index of every stored entry."""
        return self._rows

    def zeros_like(self) -> "SparseMatrix":
        out = SparseMatrix(self.n, self.row_offsets, self.column_indices)
        out._rows = self._rows
        out._keys = self._keys
        out._position_cache = self._position_cache
        return out

    def copy(self) -> "SparseMatrix":
        out = self.zeros_like()
        out.values = self.values.copy()
        return out

    def zero(self):
        self.values[:] = 0.0

    def same_pattern(self, other: "SparseMatrix") -> bool:
        return (self.n == other.n and self.nnz == other.nnz
                and np.array_equal(self.column_indices, other.column_indices)
                and np.array_equal(self.row_offsets, other.row_offsets))

    def linear_combination(self, *terms) -> "SparseMatrix":
        """``sum(coef * matrix)`` over ``(coef, matrix)`` pairs sharing this pattern."""
        out = self.zeros_like()
        for coef, mat in terms:
            if mat is not self and not self.same_pattern(mat):
                raise AssemblyError("matrices do not share a sparsity pattern")
            out.values += coef * mat.values
        return out

    def positions(self, rows, cols) -> np.ndarray:
        """Storage positions of entries ``(rows[k], cols[k])``; raises if absent."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        keys = rows * self.n + cols
        all_keys = self._keys
        pos = np.searchsorted(all_keys, keys)
        pos = np.minimum(pos, self.nnz - 1)
        missing = all_keys[pos] != keys
        if np.any(missing):
            k = int(np.argmax(missing))
            raise AssemblyError(f"entry ({int(rows.flat[k])}, {int(cols.flat[k])}) "
                                "is not in the sparsity pattern")
        return pos

    def element_positions(self, element_dofs) -> np.ndarray:
        """Cached storage positions for a batch of element dof lists, shape (ne, k*k)."""
        dofs = np.asarray(element_dofs, dtype=np.int64)
        key = hashlib.blake2b(dofs.tobytes() + bytes(str(dofs.shape), "ascii"),
                              digest_size=16).digest()
        pos = self._position_cache.get(key)
        if pos is None:
            k = dofs.shape[1]
            rows = np.repeat(dofs, k, axis=1)
            cols = np.tile(dofs, (1, k))
            pos = self.positions(rows, cols)
            self._position_cache[key] = pos
        return pos

    def get(self, i, j) -> float:
        lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
        k = np.searchsorted(self.column_indices[lo:hi], j)
        if k < hi - lo and self.column_indices[lo + k] == j:
            return float(self.values[lo + k])
        return 0.0

    def diagonal(self) -> np.ndarray:
        return self.values[self.positions(np.arange(self.n), np.arange(self.n))]

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.bincount(self._rows, weights=self.values * x[self.column_indices],
                           minlength=self.n)

    __matmul__ = matvec

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        np.add.at(a, (self._rows, self.column_indices), self.values)
        return a

    def to_scipy(self) -> scipy.sparse.csr_matrix:
        return scipy.sparse.csr_matrix(
            (self.values, self.column_indices, self.row_offsets), shape=(self.n, self.n))

    def transpose_values(self) -> np.ndarray:
        """Values of the transpose laid out in this (symmetric) pattern."""
        return self.values[self.positions(self.column_indices, self._rows)]

    def is_symmetric(self, tol=0.0) -> bool:
        return bool(np.all(np.abs(self.values - self.transpose_values()) <= tol))

    def digest(self) -> bytes:
        return hashlib.blake2b(self.values.tobytes(), digest_size=16).digest()


def pattern_from_connectivity(n_dofs: int, element_dofs) -> SparseMatrix:
    dofs = np.asarray(element_dofs, dtype=np.int64)
    k = dofs.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    keys = np.unique(rows * n_dofs + cols)
    rows, cols = np.divmod(keys, n_dofs)
    offsets = np.zeros(n_dofs + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_dofs), out=offsets[1:])
    return SparseMatrix(n_dofs, offsets, cols)


def build_pattern(mesh, dofs_per_node: int = 1) -> SparseMatrix:
    """Zero-valued matrix with an entry for every dof pair sharing an element."""
    return pattern_from_connectivity(mesh.n_nodes * dofs_per_node,
                                     mesh.element_dofs(dofs_per_node))


def scatter_add(matrix: SparseMatrix, element_dof_indices, element_matrix):
    """Accumulate one dense element matrix into ``matrix``."""
    dofs = np.asarray(element_dof_indices, dtype=np.int64)
    ke = np.asarray(element_matrix, dtype=float)
    k = len(dofs)
    if ke.shape != (k, k):
        raise AssemblyError(f"element matrix shape {ke.shape} does not match {k} dofs")
    pos = matrix.positions(np.repeat(dofs, k), np.tile(dofs, k))
    np.add.at(matrix.values, pos, ke.ravel())


def scatter_add_batch(matrix: SparseMatrix, element_dofs, element_matrices):
    """Accumulate ``(ne, k, k)`` element matrices, element by element in order."""
    pos = matrix.element_positions(element_dofs)
    np.add.at(matrix.values, pos.ravel(), np.asarray(element_matrices).reshape(-1))


def assemble_vector(n: int, element_dofs, element_vectors) -> np.ndarray:
    out = np.zeros(n)
    np.add.at(out, np.asarray(element_dofs).ravel(), np.asarray(element_vectors).ravel())
    return out


def _constraint_arrays(n, constraints):
    values = {}
    for dof, value in constraints:
        dof = int(dof)
        if not 0 <= dof < n:
            raise ConstraintError(f"constrained dof {dof} out of range 0..{n - 1}")
        value = float(value)
        if dof in values and values[dof] != value:
            raise ConstraintError(f"conflicting constraints on dof {dof}: "
                                  f"{values[dof]} vs {value}")
        values[dof] = value
    idx = np.fromiter(values.keys(), dtype=np.int64, count=len(values))
    val = np.fromiter(values.values(), dtype=float, count=len(values))
    return idx, val


def apply_dirichlet(matrix: SparseMatrix, rhs: np.ndarray, constraints):
    """Symmetric elimination of prescribed dofs, in place on ``matrix`` and ``rhs``.

    Columns of constrained dofs are moved to the right-hand side, their rows
    and columns are zeroed and a diagonal ``s`` is set, so the constrained
    equations read ``s x[d] = s value``. ``s`` is the mean absolute diagonal
    of the free rows (1 if every dof is constrained), which keeps the
    constrained rows on the same scale as the rest of the system.
    """
    idx, val = _constraint_arrays(matrix.n, constraints)
    if len(idx) == 0:
        return rhs
    fixed = np.zeros(matrix.n, dtype=bool)
    fixed[idx] = True
    free_diag = np.abs(matrix.diagonal()[~fixed])
    scale = float(free_diag.mean()) if free_diag.size else 1.0
    if not (np.isfinite(scale) and scale > 0.0):
        scale = 1.0
    prescribed = np.zeros(matrix.n)
    prescribed[idx] = val
    rows, cols = matrix.rows, matrix.column_indices
    col_fixed = fixed[cols]
    move = col_fixed & ~fixed[rows]
    rhs -= np.bincount(rows[move], weights=matrix.values[move] * prescribed[cols[move]],
                       minlength=matrix.n)
    matrix.values[col_fixed | fixed[rows]] = 0.0
    matrix.values[matrix.positions(idx, idx)] = scale
    rhs[idx] = scale * val
    return rhs


def cg_solve(matrix: SparseMatrix, rhs, x0=None, tol: float = 1e-12, max_iter: int | None = None):
    """Jacobi-preconditioned conjugate gradients.

    Converged means ``||b - A x|| <= tol * ||b||``. Non-convergence is
    reported, not raised.
    """
    b = np.asarray(rhs, dtype=float)
    n = len(b)
    max_iter = 10 * n if max_iter is None else max_iter
    diag = matrix.diagonal()
    if np.any(diag == 0.0):
        raise PreconditionerError(f"zero diagonal at dof {int(np.argmax(diag == 0.0))}")
    inv_diag = 1.0 / diag
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    b_norm = float(np.linalg.norm(b))
    r = b - matrix.matvec(x)
    r_norm = float(np.linalg.norm(r))
    r0 = r_norm
    target = tol * b_norm
    if r_norm <= target:
        return x, SolveReport(0, r_norm, True, "cg", r0)
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, max_iter + 1):
        ap = matrix.matvec(p)
        pap = float(p @ ap)
        if pap <= 0.0:
            return x, SolveReport(it, r_norm, False, "cg", r0)
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        r_norm = float(np.linalg.norm(r))
        if r_norm <= target:
            # recompute to guard against drift in the recursive residual
            r_true = float(np.linalg.norm(b - matrix.matvec(x)))
            if r_true <= target:
                return x, SolveReport(it, r_true, True, "cg", r0)
            r = b - matrix.matvec(x)
            r_norm = r_true
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, SolveReport(max_iter, r_norm, False, "cg", r0)


def _lu(a):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("dense_solve needs a square matrix")
    with warnings.catch_warnings():
        # exact singularity is reported below as SingularMatrixError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
    d = np.abs(np.diag(lu))
    scale = max(float(np.abs(a).max()), np.finfo(float).tiny)
    if d.min() <= a.shape[0] * np.finfo(float).eps * scale:
        raise SingularMatrixError("matrix is singular to machine precision")
    return lu, piv


def dense_solve(matrix, rhs, cap: int = DENSE_CAP) -> np.ndarray:
    """LU solve with partial pivoting. Accepts a dense array or a SparseMatrix."""
    a = matrix.to_dense() if isinstance(matrix, SparseMatrix) else np.asarray(matrix, float)
    if a.shape[0] > cap:
        raise ValueError(f"dense_solve limited to n <= {cap}, got {a.shape[0]}")
    return scipy.linalg.lu_solve(_lu(a), np.asarray(rhs, dtype=float))


class SolverFailure(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class LinearSolver:
    """Dispatches constrained systems to CG, dense LU or GMRES.

    Symmetric systems go to CG. Nonsymmetric systems use a dense LU when
    ``n <= dense_cap`` (factorizations are cached by matrix content, so a
    transient run with a constant operator factors once) and restarted
    GMRES with a Jacobi preconditioner otherwise.
    """

    def __init__(self, tol: float = 1e-12, max_iter: int | None = None,
                 dense_cap: int = DENSE_CAP, restart: int = 50):
        self.tol = tol
        self.max_iter = max_iter
        self.dense_cap = dense_cap
        self.restart = restart
        self._lu_key = None
        self._lu = None

    def solve(self, matrix: SparseMatrix, rhs, x0=None, symmetric: bool = True):
        if symmetric:
            x, report = cg_solve(matrix, rhs, x0, self.tol, self.max_iter)
        elif matrix.n <= self.dense_cap:
            x, report = self._dense(matrix, rhs)
        else:
            x, report = self._gmres(matrix, rhs, x0)
        if not report.converged:
            raise SolverFailure(f"{report.method} did not converge: residual "
                                f"{report.final_residual_norm:.3e} after "
                                f"{report.iterations} iterations", report)
        return x, report

    def _dense(self, matrix, rhs):
        key = matrix.digest()
        if key != self._lu_key:
            self._lu = _lu(matrix.to_dense())
            self._lu_key = key
        b = np.asarray(rhs, dtype=float)
        x = scipy.linalg.lu_solve(self._lu, b)
        # one step of iterative refinement keeps long transient runs conservative
        x += scipy.linalg.lu_solve(self._lu, b - matrix.matvec(x))
        res = float(np.linalg.norm(b - matrix.matvec(x)))
        return x, SolveReport(1, res, True, "lu", float(np.linalg.norm(b)))

    def _gmres(self, matrix, rhs, x0):
        a = matrix.to_scipy()
        diag = matrix.diagonal()
        if np.any(diag == 0.0):
            raise PreconditionerError("zero diagonal in GMRES preconditioner")
        m = scipy.sparse.linalg.LinearOperator(a.shape, matvec=lambda v: v / diag)
        b = np.asarray(rhs, dtype=float)
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = scipy.sparse.linalg.gmres(
            a, b, x0=x0, rtol=self.tol, atol=0.0, restart=self.restart,
            maxiter=self.max_iter or 20 * matrix.n, M=m, callback=cb,
            callback_type="pr_norm")
        res = float(np.linalg.norm(b - a @ x))
        ok = info == 0 and res <= 10 * self.tol * max(np.linalg.norm(b), 1e-300)
        return x, SolveReport(count[0], res, ok, "gmres", float(np.linalg.norm(b)))
