"""Dense linear algebra for small symmetric/general matrices.

Everything in this toolkit works on plain ``numpy`` arrays at desk scale
(dims up to ~100), so the helpers here stay dense and deterministic:
LAPACK-backed symmetric eigendecompositions and Cholesky factorizations
behind small convenience wrappers, plus block assembly for building the
structured matrices the LMI compiler needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


@dataclass(frozen=True)
class NumericPolicy:
    """Central record of the numeric tolerances shared across modules."""

    sym_tol: float = 1e-12        # symmetry assertion tolerance (relative)
    pivot_floor: float = 1e-12    # Cholesky pivot floor, relative to diagonal scale
    eig_residual: float = 1e-10   # eigendecomposition reconstruction budget
    spd_condition_cap: float = 1e12


DEFAULT_POLICY = NumericPolicy()


def canonical_basis(s: int, i: int) -> np.ndarray:
    """Column vector of the canonical basis of R^s with a 1 at position i.

    Indices are 1-based, matching the usual e_s(i) convention.
    """
    if s < 1:
        raise ValueError(f"dimension must be >= 1, got {s}")
    if not 1 <= i <= s:
        raise IndexError(f"basis index {i} out of range 1..{s}")
    e = np.zeros((s, 1))
    e[i - 1, 0] = 1.0
    return e


def unit_outer(m: int, n: int, i: int, j: int) -> np.ndarray:
    """m-by-n matrix with a single 1 at (i, j), 1-based."""
    if not 1 <= i <= m:
        raise IndexError(f"row index {i} out of range 1..{m}")
    if not 1 <= j <= n:
        raise IndexError(f"col index {j} out of range 1..{n}")
    h = np.zeros((m, n))
    h[i - 1, j - 1] = 1.0
    return h


def symmetrize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


def assert_symmetric(mat: np.ndarray, policy: NumericPolicy = DEFAULT_POLICY) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {mat.shape}")
    scale = max(1.0, float(np.abs(mat).max()) if mat.size else 1.0)
    if mat.size and float(np.abs(mat - mat.T).max()) > policy.sym_tol * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    return symmetrize(mat)


def sym_eigvals(mat: np.ndarray, policy: NumericPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Ascending eigenvalues of a symmetric matrix."""
    mat = assert_symmetric(mat, policy)
    try:
        return np.linalg.eigvalsh(mat)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK rarely fails here
        raise RuntimeError(f"symmetric eigensolve did not converge: {exc}") from exc


def sym_eig(mat: np.ndarray, policy: NumericPolicy = DEFAULT_POLICY):
    """Full symmetric eigendecomposition (w ascending, columns of q orthonormal).

    The reconstruction q @ diag(w) @ q.T matches the input to within
    ``policy.eig_residual`` relative to the Frobenius norm.
    """
    mat = assert_symmetric(mat, policy)
    try:
        w, q = np.linalg.eigh(mat)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise RuntimeError(f"symmetric eigensolve did not converge: {exc}") from exc
    residual = np.linalg.norm(q @ np.diag(w) @ q.T - mat)
    budget = policy.eig_residual * max(1.0, np.linalg.norm(mat))
    if residual > budget:  # pragma: no cover - defensive
        raise RuntimeError(f"eigendecomposition residual {residual:.3e} exceeds {budget:.3e}")
    return w, q


def is_pd(mat: np.ndarray, margin: float = 0.0, policy: NumericPolicy = DEFAULT_POLICY) -> bool:
    """True iff lambda_min(mat) > margin.

    Attempts a Cholesky factorization of (mat - margin*I) first and falls
    back to an eigenvalue check when the factorization fails near the
    boundary. Total: never raises for symmetric input.
    """
    mat = assert_symmetric(mat, policy)
    shifted = mat - margin * np.eye(mat.shape[0])
    try:
        np.linalg.cholesky(shifted)
        return True
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(mat)
        return bool(w[0] > margin)


@dataclass
class BlockLayout:
    """Partitioned matrix layout: unplaced cells are zero.

    Block indices are 0-based; every placed block must match the cell
    dimensions given by the row/column partitions.
    """

    row_sizes: tuple[int, ...]
    col_sizes: tuple[int, ...]
    blocks: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def place(self, i: int, j: int, block: np.ndarray) -> "BlockLayout":
        block = np.atleast_2d(np.asarray(block, dtype=float))
        if not (0 <= i < len(self.row_sizes) and 0 <= j < len(self.col_sizes)):
            raise IndexError(f"block cell ({i}, {j}) outside layout")
        want = (self.row_sizes[i], self.col_sizes[j])
        if block.shape != want:
            raise ValueError(f"block at ({i}, {j}) has shape {block.shape}, cell wants {want}")
        self.blocks[(i, j)] = block
        return self

    @property
    def shape(self) -> tuple[int, int]:
        return sum(self.row_sizes), sum(self.col_sizes)


def assemble(layout: BlockLayout) -> np.ndarray:
    """Copy every placed block of the layout into one dense matrix."""
    out = np.zeros(layout.shape)
    row_off = np.concatenate([[0], np.cumsum(layout.row_sizes)])
    col_off = np.concatenate([[0], np.cumsum(layout.col_sizes)])
    for (i, j), block in layout.blocks.items():
        out[row_off[i]:row_off[i + 1], col_off[j]:col_off[j + 1]] = block
    return out


def solve_spd(mat: np.ndarray, rhs: np.ndarray, policy: NumericPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Solve mat @ x = rhs for symmetric positive definite mat via Cholesky."""
    mat = assert_symmetric(mat, policy)
    rhs = np.asarray(rhs, dtype=float)
    try:
        factor = scipy.linalg.cho_factor(mat, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise ValueError(f"matrix is not positive definite: {exc}") from exc
    pivots = np.diag(factor[0]) ** 2
    if pivots.min() < policy.pivot_floor * max(1.0, float(np.abs(np.diag(mat)).max())):
        raise ValueError("positive definite solve rejected: pivot below floor")
    return scipy.linalg.cho_solve(factor, rhs)
