"""LMI compiler: affine symmetric matrix expressions and observer synthesis.

Builds the disturbance-attenuation matrix inequalities for a Luenberger
observer of a discrete-time Lipschitz system, in two flavours:

* ``young``  - a single LMI obtained by bounding the slope-coupling terms
  with a Young-type inequality and a structured multiplier pair, with the
  worst-case slopes entering through constant scaling rows;
* ``vertex`` - a family of smaller LMIs, one per vertex of the slope box
  (LPV approach), using a sharper completion-of-squares bound.

Both are compiled to the canonical block-SDP form of :mod:`hinfobs.sdp`
(objective: minimize the squared attenuation level mu).  Decision variables
are the Lyapunov matrix P, the transformed gain R (with L = P^{-1} R'),
mu, and the multiplier blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lipschitz import SlopeBounds, coupling_matrix
from .matrixcore import solve_spd, sym_eigvals, symmetrize
from .model import DetailedSystem
from .sdp import (STATUS_FEASIBLE, STATUS_OPTIMAL, SdpBlock, SdpProblem,
                  SdpSolution, SolveOptions, solve)

MULTIPLIER_LEVELS = ("scalar", "block-diag", "full")
METHODS = ("young", "vertex")


# ---------------------------------------------------------------------------
# Affine matrix expressions over scalar decision variables
# ---------------------------------------------------------------------------

class AffineMatrix:
    """Matrix expression ``const + sum_k x_k * coeff_k`` over registry scalars."""

    __array_ufunc__ = None  # keep numpy from absorbing us in mixed operations

    def __init__(self, shape, const=None, coeffs=None):
        self.shape = (int(shape[0]), int(shape[1]))
        self.const = np.zeros(self.shape) if const is None else np.asarray(const, dtype=float)
        if self.const.shape != self.shape:
            raise ValueError(f"constant part has shape {self.const.shape}, expected {self.shape}")
        self.coeffs: dict[int, np.ndarray] = {} if coeffs is None else coeffs

    # -- constructors --------------------------------------------------------
    @classmethod
    def constant(cls, arr) -> "AffineMatrix":
        arr = np.atleast_2d(np.asarray(arr, dtype=float))
        return cls(arr.shape, const=arr.copy())

    @classmethod
    def zeros(cls, rows, cols) -> "AffineMatrix":
        return cls((rows, cols))

    # -- algebra --------------------------------------------------------------
    def _like(self, const, coeffs) -> "AffineMatrix":
        return AffineMatrix(const.shape, const=const, coeffs=coeffs)

    def __add__(self, other):
        other = _as_affine(other, self.shape)
        coeffs = {k: v.copy() for k, v in self.coeffs.items()}
        for k, v in other.coeffs.items():
            coeffs[k] = coeffs[k] + v if k in coeffs else v.copy()
        return self._like(self.const + other.const, coeffs)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-_as_affine(other, self.shape))

    def __rsub__(self, other):
        return _as_affine(other, self.shape) + (-self)

    def __neg__(self):
        return self._like(-self.const, {k: -v for k, v in self.coeffs.items()})

    def __mul__(self, scalar):
        scalar = float(scalar)
        return self._like(scalar * self.const, {k: scalar * v for k, v in self.coeffs.items()})

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = np.asarray(other, dtype=float)
        return self._like(self.const @ other, {k: v @ other for k, v in self.coeffs.items()})

    def __rmatmul__(self, other):
        other = np.asarray(other, dtype=float)
        return self._like(other @ self.const, {k: other @ v for k, v in self.coeffs.items()})

    @property
    def T(self) -> "AffineMatrix":
        return self._like(self.const.T.copy(), {k: v.T.copy() for k, v in self.coeffs.items()})

    def broadcast(self, mat) -> "AffineMatrix":
        """Scale a matrix by this 1x1 expression (e.g. mu -> mu * I)."""
        if self.shape != (1, 1):
            raise ValueError("broadcast needs a scalar (1x1) expression")
        mat = np.asarray(mat, dtype=float)
        return AffineMatrix(mat.shape, const=self.const[0, 0] * mat,
                            coeffs={k: v[0, 0] * mat for k, v in self.coeffs.items()})

    # -- evaluation ------------------------------------------------------------
    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        out = self.const.copy()
        for k, v in self.coeffs.items():
            out += x[k] * v
        return out

    def var_ids(self):
        return sorted(self.coeffs)


def _as_affine(value, shape) -> AffineMatrix:
    if isinstance(value, AffineMatrix):
        if value.shape != shape:
            raise ValueError(f"shape mismatch: {value.shape} vs {shape}")
        return value
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.shape != shape:
        raise ValueError(f"shape mismatch: {arr.shape} vs {shape}")
    return AffineMatrix.constant(arr)


def affine_block(grid) -> AffineMatrix:
    """Assemble a 2-D grid of AffineMatrix/ndarray cells into one expression."""
    rows = [[cell if isinstance(cell, AffineMatrix) else AffineMatrix.constant(cell)
             for cell in row] for row in grid]
    row_sizes = [row[0].shape[0] for row in rows]
    col_sizes = [cell.shape[1] for cell in rows[0]]
    for i, row in enumerate(rows):
        for j, cell in enumerate(row):
            if cell.shape != (row_sizes[i], col_sizes[j]):
                raise ValueError(f"cell ({i}, {j}) has shape {cell.shape}, "
                                 f"expected {(row_sizes[i], col_sizes[j])}")
    shape = (sum(row_sizes), sum(col_sizes))
    const = np.zeros(shape)
    coeffs: dict[int, np.ndarray] = {}
    r0 = 0
    for i, row in enumerate(rows):
        c0 = 0
        for j, cell in enumerate(row):
            r1, c1 = r0 + row_sizes[i], c0 + col_sizes[j]
            const[r0:r1, c0:c1] = cell.const
            for k, v in cell.coeffs.items():
                if k not in coeffs:
                    coeffs[k] = np.zeros(shape)
                coeffs[k][r0:r1, c0:c1] += v
            c0 = c1
        r0 += row_sizes[i]
    return AffineMatrix(shape, const=const, coeffs=coeffs)


class VarRegistry:
    """Ordered scalar decision variables with origin tags.

    Symmetric matrix atoms register only their upper triangle; the mirrored
    entry aliases the same scalar, so no equality constraints are ever needed
    downstream.
    """

    def __init__(self):
        self.origins: list[str] = []

    @property
    def count(self) -> int:
        return len(self.origins)

    def _new(self, origin: str) -> int:
        self.origins.append(origin)
        return len(self.origins) - 1

    def scalar(self, name: str) -> AffineMatrix:
        k = self._new(name)
        return AffineMatrix((1, 1), coeffs={k: np.ones((1, 1))})

    def sym(self, name: str, n: int) -> AffineMatrix:
        coeffs = {}
        for i in range(n):
            for j in range(i, n):
                k = self._new(f"{name}[{i},{j}]")
                basis = np.zeros((n, n))
                basis[i, j] = 1.0
                basis[j, i] = 1.0
                coeffs[k] = basis
        return AffineMatrix((n, n), coeffs=coeffs)

    def dense(self, name: str, rows: int, cols: int) -> AffineMatrix:
        coeffs = {}
        for i in range(rows):
            for j in range(cols):
                k = self._new(f"{name}[{i},{j}]")
                basis = np.zeros((rows, cols))
                basis[i, j] = 1.0
                coeffs[k] = basis
        return AffineMatrix((rows, cols), coeffs=coeffs)


# ---------------------------------------------------------------------------
# Structured multipliers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MultiplierStructure:
    """Shape of one structured multiplier: ``family`` groups of ``inner`` rows
    of inner-sized symmetric blocks, at one of three richness levels."""

    family: int
    inner: int
    level: str = "full"

    def __post_init__(self):
        if self.level not in MULTIPLIER_LEVELS:
            raise ValueError(f"level must be one of {MULTIPLIER_LEVELS}")

    @property
    def grid(self) -> int:
        return self.family * self.inner

    @property
    def dim(self) -> int:
        return self.grid * self.inner


@dataclass
class MultiplierResult:
    big: AffineMatrix
    sides: list[tuple[AffineMatrix, bool]]   # (expression >= 0, strict?)
    atoms: dict[str, AffineMatrix]
    structure: MultiplierStructure


def build_multiplier(reg: VarRegistry, structure: MultiplierStructure,
                     prefix: str) -> MultiplierResult:
    """Instantiate a structured multiplier as an affine matrix plus side
    positivity constraints.

    Level ``scalar`` degenerates to one positive scalar times the identity;
    ``block-diag`` keeps only the positive definite diagonal blocks;
    ``full`` adds the within-group and cross-group PSD blocks, mirrored so
    the overall matrix stays symmetric (mirrored cells share one block).
    """
    fam, inner = structure.family, structure.inner
    if fam == 0:
        return MultiplierResult(AffineMatrix.zeros(0, 0), [], {}, structure)
    sides: list[tuple[AffineMatrix, bool]] = []
    atoms: dict[str, AffineMatrix] = {}

    if structure.level == "scalar":
        zeta = reg.scalar(f"{prefix}#scale")
        atoms["scale"] = zeta
        big = zeta.broadcast(np.eye(structure.dim))
        sides.append((zeta, True))
        return MultiplierResult(big, sides, atoms, structure)

    grid = structure.grid
    zero = np.zeros((inner, inner))
    cells = [[None] * grid for _ in range(grid)]

    def gidx(group: int, member: int) -> int:
        return group * inner + member

    for i in range(fam):
        for j in range(inner):
            atom = reg.sym(f"{prefix}[{i + 1},{j + 1}]", inner)
            atoms[f"diag[{i + 1},{j + 1}]"] = atom
            cells[gidx(i, j)][gidx(i, j)] = atom
            sides.append((atom, True))

    if structure.level == "full":
        # within-group off-diagonals: cell (i: j, i: k), j < k
        for i in range(fam):
            for j in range(inner):
                for k in range(j + 1, inner):
                    atom = reg.sym(f"{prefix}a[{i + 1};{j + 1},{k + 1}]", inner)
                    atoms[f"within[{i + 1};{j + 1},{k + 1}]"] = atom
                    cells[gidx(i, j)][gidx(i, k)] = atom
                    cells[gidx(i, k)][gidx(i, j)] = atom
                    sides.append((atom, False))
        # cross-group blocks: groups k < i, members (j in group k, l in group i);
        # the mirrored cell reuses the same symmetric block
        for k in range(fam):
            for i in range(k + 1, fam):
                for j in range(inner):
                    for el in range(inner):
                        atom = reg.sym(f"{prefix}b[{k + 1},{j + 1};{i + 1},{el + 1}]", inner)
                        atoms[f"cross[{k + 1},{j + 1};{i + 1},{el + 1}]"] = atom
                        cells[gidx(k, j)][gidx(i, el)] = atom
                        cells[gidx(i, el)][gidx(k, j)] = atom
                        sides.append((atom, False))

    grid_cells = [[cell if cell is not None else zero for cell in row] for row in cells]
    big = affine_block(grid_cells)
    sides.append((big, True))  # the whole multiplier must be positive definite
    return MultiplierResult(big, sides, atoms, structure)


# ---------------------------------------------------------------------------
# LMI building blocks
# ---------------------------------------------------------------------------

def build_hinf_core(system: DetailedSystem, p_atom: AffineMatrix,
                    r_atom: AffineMatrix, mu_atom: AffineMatrix) -> AffineMatrix:
    """Core (2n+q)-dim block tying Lyapunov decrease, the error norm and the
    disturbance attenuation level together:

        [ I - P        0          A' P - C' R ]
        [ 0           -mu I       E' P - D' R ]
        [ sym          sym       -P           ]
    """
    n, q = system.n, system.q
    top_right = system.A.T @ p_atom - system.C.T @ r_atom
    mid_right = system.E.T @ p_atom - system.D.T @ r_atom
    return affine_block([
        [AffineMatrix.constant(np.eye(n)) - p_atom, np.zeros((n, q)), top_right],
        [np.zeros((q, n)), (-1.0 * mu_atom).broadcast(np.eye(q)), mid_right],
        [top_right.T, mid_right.T, -1.0 * p_atom],
    ])


@dataclass
class CouplingStacks:
    """Row stacks that couple the slope coefficients into the LMI.

    ``pg_rows``/``rf_rows`` are affine (in P resp. R); the projection
    stacks and worst-case slope stacks are constant.
    """

    width: int
    pg_rows: AffineMatrix          # (m*nbar*nbar) x width, affine in P
    rf_rows: AffineMatrix          # (r*pbar*pbar) x width, affine in R
    proj_f: np.ndarray             # block-diagonal projection stack (dynamics)
    proj_g: np.ndarray
    slope_f: np.ndarray            # worst-case slope stack (identity blocks)
    slope_g: np.ndarray
    f_sel: list                    # [proj_i, 0, 0] per (i, j) in lex order
    g_sel: list

    def f_slope_rows(self, coeffs: np.ndarray) -> np.ndarray:
        """Stack coeffs[i, j] * [proj_i, 0, 0] over (i, j), lex order."""
        if not self.f_sel:
            return np.zeros((0, self.width))
        return np.vstack([c * sel for c, sel in zip(np.asarray(coeffs).ravel(), self.f_sel)])

    def g_slope_rows(self, coeffs: np.ndarray) -> np.ndarray:
        if not self.g_sel:
            return np.zeros((0, self.width))
        return np.vstack([c * sel for c, sel in zip(np.asarray(coeffs).ravel(), self.g_sel)])


def build_nl_coupling(system: DetailedSystem, f_bounds: SlopeBounds,
                      g_bounds: SlopeBounds, p_atom: AffineMatrix,
                      r_atom: AffineMatrix) -> CouplingStacks:
    """Coupling rows for both nonlinearity families.

    For the dynamics family, row block (i, j) is ``[0 0 (P G E_ij)']`` and
    its projection selector is ``[proj_i 0 0]``; the output family uses
    ``[0 0 (-R' F E_ij)']`` with selectors built from the output projections.
    All block heights are the family's inner dimension, so the stacked
    matrices compose with the multiplier of matching grid.
    """
    n, q = system.n, system.q
    width = 2 * n + q
    m, nbar = f_bounds.shape
    r, pbar = g_bounds.shape
    if m != system.m or (m and nbar != system.nbar):
        raise ValueError("dynamics slope bounds do not match the component family")
    if r != system.r or (r and pbar != system.pbar):
        raise ValueError("output slope bounds do not match the component family")

    def family_rows(count, inner, columns, atom, sign):
        rows = []
        for i in range(count):
            for j in range(inner):
                sel = np.zeros((inner, columns.shape[0]))
                sel[j, :] = columns[:, i]
                rows.append([np.zeros((inner, n)), np.zeros((inner, q)),
                             sign * (sel @ atom)])
        if not rows:
            return AffineMatrix.zeros(0, width)
        return affine_block(rows)

    # (P G E_ij)' = E_ij' G' P: row j of the selector carries G[:, i]
    pg_rows = family_rows(m, nbar, system.G, p_atom, 1.0)
    # (-R' F E_ij)' = -E_ij' F' R
    rf_rows = family_rows(r, pbar, system.F, r_atom, -1.0)

    def selectors(comps, inner):
        sel = []
        for comp in comps:
            block = np.hstack([comp.proj, np.zeros((inner, q)), np.zeros((inner, n))])
            sel.extend([block] * inner)
        return sel

    f_sel = selectors(system.f_components, nbar) if m else []
    g_sel = selectors(system.g_components, pbar) if r else []

    def blockdiag(sel_rows, inner, count):
        if not sel_rows:
            return np.zeros((0, 0))
        total = count * inner
        out = np.zeros((total * inner, total * width))
        for t, block in enumerate(sel_rows):
            out[t * inner:(t + 1) * inner, t * width:(t + 1) * width] = block
        return out

    def slope_stack(bounds, inner, count):
        if count == 0:
            return np.zeros((0, width))
        return np.vstack([bounds.upper[i, j] * np.eye(width)
                          for i in range(count) for j in range(inner)])

    return CouplingStacks(
        width=width,
        pg_rows=pg_rows,
        rf_rows=rf_rows,
        proj_f=blockdiag(f_sel, nbar, m),
        proj_g=blockdiag(g_sel, pbar, r),
        slope_f=slope_stack(f_bounds, nbar, m),
        slope_g=slope_stack(g_bounds, pbar, r),
        f_sel=f_sel,
        g_sel=g_sel,
    )


# ---------------------------------------------------------------------------
# Problem assembly
# ---------------------------------------------------------------------------

@dataclass
class SynthesisProblem:
    """Normalized synthesis input: system, slope boxes, multiplier levels."""

    system: DetailedSystem
    f_bounds: SlopeBounds
    g_bounds: SlopeBounds
    method: str = "vertex"
    z_level: str = "full"
    s_level: str = "full"
    eps: float | None = None
    vertex_cap: int = 4096

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if not self.f_bounds.is_normalized or not self.g_bounds.is_normalized:
            raise ValueError("slope bounds must be normalized (zero lower bounds) "
                             "before synthesis; see lipschitz.normalize_bounds")
        m, r = self.system.m, self.system.r
        if m and self.f_bounds.shape != (m, self.system.nbar):
            raise ValueError("dynamics bounds shape mismatch")
        if r and self.g_bounds.shape != (r, self.system.pbar):
            raise ValueError("output bounds shape mismatch")


@dataclass
class CompiledLmi:
    sdp: SdpProblem
    registry: VarRegistry
    p_atom: AffineMatrix
    r_atom: AffineMatrix
    mu_atom: AffineMatrix
    z_big: AffineMatrix | None
    s_big: AffineMatrix | None
    eps: float
    fingerprint: dict
    main_affines: list[AffineMatrix] = field(default_factory=list)


def _strictness_margin(problem: SynthesisProblem, main_const: np.ndarray) -> float:
    if problem.eps is not None:
        return float(problem.eps)
    norm2 = float(np.linalg.norm(main_const, 2)) if main_const.size else 0.0
    return 1e-7 * (1.0 + norm2)


def _affine_to_block(aff: AffineMatrix, shift: float = 0.0) -> SdpBlock:
    """PSD block for the constraint ``aff - shift*I >= 0``."""
    dim = aff.shape[0]
    if aff.shape[0] != aff.shape[1]:
        raise ValueError("PSD constraints need square expressions")
    ids = aff.var_ids()
    stack = (np.stack([symmetrize(aff.coeffs[k]) for k in ids])
             if ids else np.zeros((0, dim, dim)))
    return SdpBlock(f0=symmetrize(aff.const) - shift * np.eye(dim),
                    idx=np.array(ids, dtype=int), coeff=stack)


def _common_blocks(compiled_sides, p_atom, mu_atom, eps):
    blocks = []
    for aff, strict in compiled_sides:
        blocks.append(_affine_to_block(aff, eps if strict else 0.0))
    blocks.append(_affine_to_block(p_atom, eps))
    blocks.append(_affine_to_block(mu_atom, eps))
    return blocks


def _fingerprint(problem, reg, nblocks, rows, method, extra):
    sys_ = problem.system
    fp = {"n": sys_.n, "p": sys_.p, "q": sys_.q, "m": sys_.m, "nbar": sys_.nbar,
          "r": sys_.r, "pbar": sys_.pbar, "variables": reg.count,
          "constraints": nblocks, "total_rows": rows, "method": method,
          "z_level": problem.z_level, "s_level": problem.s_level}
    fp.update(extra)
    return fp


def assemble_young_lmi(problem: SynthesisProblem) -> CompiledLmi:
    """Single-LMI synthesis condition with worst-case slope scaling rows.

    Families that are empty drop their rows, so linear-output systems get
    the reduced two-border form and fully linear systems degenerate to the
    core block alone.
    """
    sys_ = problem.system
    reg = VarRegistry()
    p_atom = reg.sym("P", sys_.n)
    r_atom = reg.dense("R", sys_.p, sys_.n)
    mu_atom = reg.scalar("mu")
    zres = build_multiplier(reg, MultiplierStructure(sys_.m, sys_.nbar, problem.z_level), "Z")
    sres = build_multiplier(reg, MultiplierStructure(sys_.r, sys_.pbar, problem.s_level), "S")
    core = build_hinf_core(sys_, p_atom, r_atom, mu_atom)
    stacks = build_nl_coupling(sys_, problem.f_bounds, problem.g_bounds, p_atom, r_atom)

    # border rows per family: the raw coupling rows and the multiplier-scaled
    # worst-case slope rows, each facing its own negated multiplier diagonal
    borders = []
    if sys_.m:
        z_scaled = zres.big @ stacks.f_slope_rows(problem.f_bounds.upper)
        borders += [(stacks.pg_rows, zres.big), (z_scaled, zres.big)]
    if sys_.r:
        s_scaled = sres.big @ stacks.g_slope_rows(problem.g_bounds.upper)
        borders += [(stacks.rf_rows, sres.big), (s_scaled, sres.big)]
    grid = [[core] + [b.T for b, _ in borders]]
    for i, (border_i, mult_i) in enumerate(borders):
        row = [border_i]
        for j, (_, _) in enumerate(borders):
            if i == j:
                row.append(-1.0 * mult_i)
            else:
                row.append(np.zeros((border_i.shape[0], borders[j][0].shape[0])))
        grid.append(row)
    main = affine_block(grid)
    eps = _strictness_margin(problem, main.const)

    blocks = [_affine_to_block(-1.0 * main, eps)]
    blocks += _common_blocks(zres.sides + sres.sides, p_atom, mu_atom, eps)
    sdp = SdpProblem(c=_objective(reg, mu_atom), blocks=blocks)
    fp = _fingerprint(problem, reg, len(blocks), sum(b.dim for b in blocks), "young",
                      {"eps": eps, "main_rows": main.shape[0]})
    return CompiledLmi(sdp, reg, p_atom, r_atom, mu_atom,
                       zres.big if sys_.m else None, sres.big if sys_.r else None,
                       eps, fp, [main])


def vertex_coefficients(upper: np.ndarray, index: int, offset: int) -> np.ndarray:
    """Vertex ``index`` of the slope box: coordinate t (lex over (i, j)) takes
    its upper bound iff bit (offset + t) of the index is set."""
    upper = np.atleast_2d(upper)
    flat = np.zeros(upper.size)
    for t in range(upper.size):
        if (index >> (offset + t)) & 1:
            flat[t] = upper.ravel()[t]
    return flat.reshape(upper.shape)


def assemble_vertex_lmi(problem: SynthesisProblem) -> CompiledLmi:
    """Vertex-family synthesis condition: one LMI per vertex of the slope box.

    Vertices are enumerated by binary counting over the lexicographic
    coordinate order (dynamics family first), deterministically.
    """
    sys_ = problem.system
    bits = sys_.m * sys_.nbar + sys_.r * sys_.pbar
    nvertices = 1 << bits
    if nvertices > problem.vertex_cap:
        raise ValueError(f"vertex count {nvertices} exceeds the cap {problem.vertex_cap}; "
                         "use the single-LMI ('young') form instead")
    reg = VarRegistry()
    p_atom = reg.sym("P", sys_.n)
    r_atom = reg.dense("R", sys_.p, sys_.n)
    mu_atom = reg.scalar("mu")
    zres = build_multiplier(reg, MultiplierStructure(sys_.m, sys_.nbar, problem.z_level), "Z")
    sres = build_multiplier(reg, MultiplierStructure(sys_.r, sys_.pbar, problem.s_level), "S")
    core = build_hinf_core(sys_, p_atom, r_atom, mu_atom)
    stacks = build_nl_coupling(sys_, problem.f_bounds, problem.g_bounds, p_atom, r_atom)

    mains = []
    for v in range(nvertices):
        rows = [[core]]
        if sys_.m:
            fcoef = vertex_coefficients(problem.f_bounds.upper, v, 0)
            border = stacks.pg_rows + zres.big @ stacks.f_slope_rows(fcoef)
            rows = [[core, border.T], [border, -2.0 * zres.big]]
        if sys_.r:
            gcoef = vertex_coefficients(problem.g_bounds.upper, v, sys_.m * sys_.nbar)
            gborder = stacks.rf_rows + sres.big @ stacks.g_slope_rows(gcoef)
            sdim = sres.structure.dim
            if sys_.m:
                zdim = zres.structure.dim
                rows = [[rows[0][0], rows[0][1], gborder.T],
                        [rows[1][0], rows[1][1], np.zeros((zdim, sdim))],
                        [gborder, np.zeros((sdim, zdim)), -2.0 * sres.big]]
            else:
                rows = [[core, gborder.T], [gborder, -2.0 * sres.big]]
        mains.append(affine_block(rows))

    eps = _strictness_margin(problem, mains[0].const)
    blocks = [_affine_to_block(-1.0 * main, eps) for main in mains]
    blocks += _common_blocks(zres.sides + sres.sides, p_atom, mu_atom, eps)
    sdp = SdpProblem(c=_objective(reg, mu_atom), blocks=blocks)
    fp = _fingerprint(problem, reg, len(blocks), sum(b.dim for b in blocks), "vertex",
                      {"eps": eps, "vertices": nvertices, "main_rows": mains[0].shape[0]})
    return CompiledLmi(sdp, reg, p_atom, r_atom, mu_atom,
                       zres.big if sys_.m else None, sres.big if sys_.r else None,
                       eps, fp, mains)


def assemble(problem: SynthesisProblem) -> CompiledLmi:
    if problem.method == "young":
        return assemble_young_lmi(problem)
    return assemble_vertex_lmi(problem)


def _objective(reg: VarRegistry, mu_atom: AffineMatrix) -> np.ndarray:
    c = np.zeros(reg.count)
    (mu_id,) = mu_atom.var_ids()
    c[mu_id] = 1.0
    return c


# ---------------------------------------------------------------------------
# Gain extraction and verification
# ---------------------------------------------------------------------------

@dataclass
class VerificationReport:
    samples: int
    violations: list
    max_cond_eig: float
    max_spectral_radius: float
    tol: float
    passed: bool


@dataclass
class SynthesisResult:
    P: np.ndarray
    R: np.ndarray
    L: np.ndarray
    mu: float
    nu: float
    sqrt_mu: float
    z_value: np.ndarray | None
    s_value: np.ndarray | None
    status: str
    solution: SdpSolution
    fingerprint: dict
    verification: VerificationReport | None = None


def extract_gain(solution: SdpSolution, compiled: CompiledLmi) -> SynthesisResult:
    """Read P, R, mu and the multipliers out of a solved problem; the observer
    gain solves P L = R'."""
    if solution.status not in (STATUS_OPTIMAL, STATUS_FEASIBLE):
        raise ValueError(f"no gain from a solve with status {solution.status!r}")
    x = solution.x
    p_val = symmetrize(compiled.p_atom.evaluate(x))
    r_val = compiled.r_atom.evaluate(x)
    mu = float(compiled.mu_atom.evaluate(x)[0, 0])
    eigs = sym_eigvals(p_val)
    if eigs[0] <= 0.0 or eigs[-1] / eigs[0] > 1e12:
        raise ValueError(f"P is numerically singular (eigs {eigs[0]:.3e}..{eigs[-1]:.3e})")
    gain = solve_spd(p_val, r_val.T)
    return SynthesisResult(
        P=p_val, R=r_val, L=gain, mu=mu, nu=float(eigs[-1]), sqrt_mu=float(np.sqrt(max(mu, 0.0))),
        z_value=compiled.z_big.evaluate(x) if compiled.z_big is not None else None,
        s_value=compiled.s_big.evaluate(x) if compiled.s_big is not None else None,
        status=solution.status, solution=solution, fingerprint=dict(compiled.fingerprint))


def closed_loop_matrices(system: DetailedSystem, gain: np.ndarray,
                         f_coeffs: np.ndarray, g_coeffs: np.ndarray):
    """Error-dynamics pair (state matrix, disturbance matrix) at given slopes."""
    a_cl = system.A - gain @ system.C
    if system.m:
        a_cl = a_cl + coupling_matrix(system.n, system.G, system.f_components, f_coeffs)
    if system.r:
        out = coupling_matrix(system.p, system.F, system.g_components, g_coeffs)
        a_cl = a_cl - gain @ out
    e_cl = system.E - gain @ system.D
    return a_cl, e_cl


def dissipation_matrix(a_cl: np.ndarray, e_cl: np.ndarray, p_val: np.ndarray,
                       mu: float) -> np.ndarray:
    """Quadratic certificate matrix whose negativity gives per-step decrease
    of the Lyapunov function against the disturbance budget."""
    n = a_cl.shape[0]
    q = e_cl.shape[1]
    top = np.eye(n) - p_val + a_cl.T @ p_val @ a_cl
    off = a_cl.T @ p_val @ e_cl
    bot = e_cl.T @ p_val @ e_cl - mu * np.eye(q)
    return np.block([[top, off], [off.T, bot]])


def verify_synthesis(result: SynthesisResult, problem: SynthesisProblem,
                     samples: int = 500, seed: int = 0,
                     tol: float | None = None) -> VerificationReport:
    """Sample the slope box and check the solved design pointwise.

    Each draw forms the closed-loop error dynamics at random slopes in
    [0, upper], asserts the dissipation matrix stays negative semidefinite
    (up to ``tol``) and the state matrix stays Schur.  With no nonlinearities
    the single deterministic instance is checked.
    """
    sys_ = problem.system
    if tol is None:
        tol = 1e-8 * (1.0 + float(np.linalg.norm(result.P, 2)))
    rng = np.random.default_rng(seed)
    fu = problem.f_bounds.upper
    gu = problem.g_bounds.upper
    deterministic = sys_.m == 0 and sys_.r == 0
    count = 1 if deterministic else samples
    violations = []
    max_eig = -np.inf
    max_rho = 0.0
    for k in range(count):
        f_coeffs = np.zeros((0, 0)) if sys_.m == 0 else (fu if deterministic else rng.uniform(0.0, 1.0, fu.shape) * fu)
        g_coeffs = np.zeros((0, 0)) if sys_.r == 0 else (gu if deterministic else rng.uniform(0.0, 1.0, gu.shape) * gu)
        a_cl, e_cl = closed_loop_matrices(sys_, result.L, f_coeffs, g_coeffs)
        w = dissipation_matrix(a_cl, e_cl, result.P, result.mu)
        top = float(sym_eigvals(w)[-1])
        rho = float(np.abs(np.linalg.eigvals(a_cl)).max())
        max_eig = max(max_eig, top)
        max_rho = max(max_rho, rho)
        if top > tol or rho >= 1.0:
            if len(violations) < 16:
                violations.append({"sample": k, "max_eig": top, "spectral_radius": rho,
                                   "f_coeffs": np.atleast_2d(f_coeffs).tolist(),
                                   "g_coeffs": np.atleast_2d(g_coeffs).tolist()})
            else:
                violations.append({"sample": k})
    report = VerificationReport(samples=count, violations=violations,
                                max_cond_eig=max_eig, max_spectral_radius=max_rho,
                                tol=tol, passed=not violations)
    result.verification = report
    return report


def design(problem: SynthesisProblem,
           options: SolveOptions | None = None) -> tuple[SynthesisResult | None, SdpSolution, CompiledLmi]:
    """Assemble, solve and extract in one call.

    Returns (result, solution, compiled); result is None when the solve did
    not produce a usable point (infeasible or failed).
    """
    compiled = assemble(problem)
    solution = solve(compiled.sdp, options)
    if solution.status in (STATUS_OPTIMAL, STATUS_FEASIBLE):
        return extract_gain(solution, compiled), solution, compiled
    return None, solution, compiled
