"""Canonical block SDPs, a dense interior-point solver, and SDPA text I/O.

Problems are stored in the linear-matrix-inequality form

    minimize    c' x
    subject to  F0_b + sum_i x_i F_i_b  >= 0   (PSD, one constraint per block)

The solver is a primal-dual path-following method on the homogeneous
self-dual embedding of that problem: Nesterov-Todd scaling per block,
Mehrotra predictor-corrector steps, and dense Schur-complement normal
equations.  Infeasibility is detected through the embedding's tau/kappa
split, with an improving-ray certificate attached to the solution.
Everything is deterministic: identical inputs produce identical iterates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .matrixcore import sym_eigvals, symmetrize

STATUS_OPTIMAL = "optimal"
STATUS_FEASIBLE = "feasible"
STATUS_INFEASIBLE = "infeasible"
STATUS_ITERATION_LIMIT = "iteration_limit"
STATUS_NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class SdpBlock:
    """One PSD constraint ``f0 + sum_k x[idx[k]] * coeff[k] >= 0``."""

    f0: np.ndarray
    idx: np.ndarray
    coeff: np.ndarray
    diag: bool = False  # block known diagonal (maps to a negative SDPA size)

    def __post_init__(self):
        self.f0 = symmetrize(np.atleast_2d(np.asarray(self.f0, dtype=float)))
        self.idx = np.asarray(self.idx, dtype=int).ravel()
        self.coeff = np.asarray(self.coeff, dtype=float)
        if self.coeff.size == 0:
            self.coeff = self.coeff.reshape(0, self.dim, self.dim)
        if self.coeff.shape != (self.idx.size, self.dim, self.dim):
            raise ValueError(f"coefficient stack shape {self.coeff.shape} does not match "
                             f"{self.idx.size} variables on a dim-{self.dim} block")
        self.coeff = 0.5 * (self.coeff + np.transpose(self.coeff, (0, 2, 1)))

    @property
    def dim(self) -> int:
        return self.f0.shape[0]

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        out = self.f0.copy()
        if self.idx.size:
            out = out + np.tensordot(np.asarray(x, dtype=float)[self.idx], self.coeff, axes=1)
        return out

    def coeff_of(self, var: int) -> np.ndarray:
        """Dense coefficient of one variable on this block (zero if absent)."""
        hits = np.nonzero(self.idx == var)[0]
        out = np.zeros((self.dim, self.dim))
        for k in hits:
            out += self.coeff[k]
        return out


@dataclass
class SdpProblem:
    c: np.ndarray
    blocks: list[SdpBlock]

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        if not self.blocks:
            raise ValueError("an SDP needs at least one block")
        for b in self.blocks:
            if b.idx.size and (b.idx.min() < 0 or b.idx.max() >= self.nvars):
                raise ValueError("block references a variable outside the problem")

    @property
    def nvars(self) -> int:
        return self.c.size

    @property
    def total_dim(self) -> int:
        return sum(b.dim for b in self.blocks)


@dataclass(frozen=True)
class SolveOptions:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iter: int = 200
    initial_radius: float | None = None
    step_fraction: float = 0.98


@dataclass
class IterationRecord:
    iteration: int
    mu: float
    pobj: float
    dobj: float
    rel_gap: float
    primal_res: float
    dual_res: float
    tau: float
    kappa: float
    sigma: float
    alpha: float


@dataclass
class SdpSolution:
    status: str
    x: np.ndarray
    objective: float
    duals: list[np.ndarray]
    block_min_eigs: np.ndarray
    trace: list[IterationRecord] = field(default_factory=list)
    message: str = ""
    certificate: dict | None = None

    @property
    def iterations(self) -> int:
        return len(self.trace)


def check_feasibility(problem: SdpProblem, x: np.ndarray) -> np.ndarray:
    """Exact per-block minimum eigenvalue at x; no tolerance applied."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != problem.nvars:
        raise ValueError(f"x has {x.size} entries, problem has {problem.nvars} variables")
    return np.array([sym_eigvals(b.evaluate(x))[0] for b in problem.blocks])


class _BlockState:
    """Per-block iterate data and Nesterov-Todd scaling workspace."""

    __slots__ = ("dim", "idx", "coeff", "g", "norm_g", "X", "Y",
                 "lam", "R", "Rinv", "Ft", "Gt", "rPt", "LD")

    def __init__(self, block: SdpBlock, rho: float):
        self.dim = block.dim
        self.idx = block.idx
        self.coeff = block.coeff
        self.g = -block.f0  # internal form: sum_i x_i F_i - g - X = 0
        self.norm_g = float(np.linalg.norm(self.g))
        self.X = rho * np.eye(self.dim)
        self.Y = rho * np.eye(self.dim)

    def lin_op(self, x: np.ndarray) -> np.ndarray:
        if self.idx.size == 0:
            return np.zeros((self.dim, self.dim))
        return np.tensordot(x[self.idx], self.coeff, axes=1)

    def adjoint(self, mat: np.ndarray, out: np.ndarray) -> None:
        if self.idx.size:
            out[self.idx] += self.coeff.reshape(self.idx.size, -1) @ mat.ravel()

    def update_scaling(self) -> None:
        lx = np.linalg.cholesky(self.X)
        ly = np.linalg.cholesky(self.Y)
        u, sv, vt = np.linalg.svd(ly.T @ lx)
        isq = 1.0 / np.sqrt(sv)
        self.lam = sv
        self.R = lx @ vt.T * isq[np.newaxis, :]
        self.Rinv = (isq[:, np.newaxis] * u.T) @ ly.T
        if self.idx.size:
            self.Ft = self.Rinv @ self.coeff @ self.Rinv.T
        else:
            self.Ft = np.zeros((0, self.dim, self.dim))
        self.Gt = self.Rinv @ self.g @ self.Rinv.T


def _block_step_bound(lam: np.ndarray, direction: np.ndarray) -> float:
    """Largest alpha with diag(lam) + alpha*direction staying PD (inf if any)."""
    scale = 1.0 / np.sqrt(lam)
    scaled = scale[:, np.newaxis] * direction * scale[np.newaxis, :]
    wmin = float(np.linalg.eigvalsh(symmetrize(scaled))[0])
    return np.inf if wmin >= 0.0 else -1.0 / wmin


def solve(problem: SdpProblem, options: SolveOptions | None = None) -> SdpSolution:
    """Solve a block SDP; see the module docstring for the algorithm."""
    opts = options or SolveOptions()
    c = problem.c
    nvars = problem.nvars
    norm_c = float(np.linalg.norm(c))

    data_norm = max([1.0] + [float(np.linalg.norm(b.f0)) for b in problem.blocks]
                    + [float(np.linalg.norm(b.coeff[k])) for b in problem.blocks
                       for k in range(b.idx.size)])
    rho = float(opts.initial_radius) if opts.initial_radius is not None else data_norm

    states = [_BlockState(b, rho) for b in problem.blocks]
    ntotal = sum(s.dim for s in states)

    x = np.zeros(nvars)
    tau = 1.0
    kappa = 1.0
    trace: list[IterationRecord] = []

    def finalize(status, message="", certificate=None):
        if tau > 1e-12:
            xhat = x / tau
            duals = [s.Y / tau for s in states]
        else:
            xhat = x.copy()
            duals = [s.Y.copy() for s in states]
        mineigs = check_feasibility(problem, xhat)
        objective = float(c @ xhat)
        if status in (STATUS_ITERATION_LIMIT, STATUS_NUMERICAL_FAILURE):
            # salvage a usable point when the scaled iterate already satisfies
            # every block to tolerance
            if mineigs.min() >= -opts.feas_tol:
                status = STATUS_FEASIBLE
        if status in (STATUS_OPTIMAL, STATUS_FEASIBLE):
            if mineigs.min() < -opts.feas_tol:
                status = STATUS_NUMERICAL_FAILURE
                message = message or "returned point violates primal feasibility"
        if status not in (STATUS_OPTIMAL, STATUS_FEASIBLE):
            objective = float("nan")
        return SdpSolution(status=status, x=xhat, objective=objective, duals=duals,
                           block_min_eigs=mineigs, trace=trace, message=message,
                           certificate=certificate)

    for iteration in range(opts.max_iter):
        # residuals of the homogeneous model
        adj = np.zeros(nvars)        # A(Y)_i = sum_b <F_i, Y_b>
        dual_g = 0.0                 # sum_b <G_b, Y_b>
        mu_blocks = 0.0
        for s in states:
            s.adjoint(s.Y, adj)
            dual_g += float(np.sum(s.g * s.Y))
            mu_blocks += float(np.sum(s.X * s.Y))
        rD = adj - c * tau
        rG = float(c @ x) - dual_g + kappa
        rP = []
        pres = 0.0
        for s in states:
            r = s.lin_op(x) - s.g * tau - s.X
            rP.append(r)
            pres = max(pres, float(np.linalg.norm(r)) / (tau * (1.0 + s.norm_g)))
        dres = float(np.linalg.norm(rD)) / (tau * (1.0 + norm_c))
        mu_h = (mu_blocks + tau * kappa) / (ntotal + 1)

        pobj = float(c @ x) / tau
        dobj = dual_g / tau
        gap = mu_blocks / tau**2
        rel_gap = gap / (1.0 + abs(pobj) + abs(dobj))

        trace.append(IterationRecord(iteration, mu_h, pobj, dobj, rel_gap,
                                     pres, dres, tau, kappa, 0.0, 0.0))

        if pres <= opts.feas_tol and dres <= opts.feas_tol and rel_gap <= opts.gap_tol:
            return finalize(STATUS_OPTIMAL)

        # improving-ray certificates
        if dual_g > 0.0:
            ray_res = float(np.linalg.norm(adj)) / dual_g
            if ray_res <= opts.feas_tol:
                cert = {"kind": "primal_infeasible",
                        "ray": [s.Y / dual_g for s in states],
                        "residual": ray_res,
                        "tau": tau, "kappa": kappa}
                return finalize(STATUS_INFEASIBLE,
                                message="dual improving ray certifies primal infeasibility",
                                certificate=cert)
        cx = float(c @ x)
        if cx < -1e6 * max(1.0, norm_c):
            ray = x / (-cx)
            ray_eigs = np.array([sym_eigvals(s.lin_op(ray))[0] for s in states])
            if ray_eigs.min() >= -opts.feas_tol:
                cert = {"kind": "unbounded", "ray": ray, "residual": float(-ray_eigs.min())}
                return finalize(STATUS_NUMERICAL_FAILURE,
                                message="objective certified unbounded below",
                                certificate=cert)

        # Nesterov-Todd scalings and Schur complement assembly
        try:
            schur = np.zeros((nvars, nvars))
            ghat = np.zeros(nvars)
            gamma = 0.0
            for s, r in zip(states, rP):
                s.update_scaling()
                s.rPt = s.Rinv @ r @ s.Rinv.T
                if s.idx.size:
                    vec = s.Ft.reshape(s.idx.size, -1)
                    schur[np.ix_(s.idx, s.idx)] += vec @ vec.T
                    ghat[s.idx] += vec @ s.Gt.ravel()
                gamma += float(np.sum(s.Gt * s.Gt))
            factor = scipy.linalg.cho_factor(schur, lower=True)
        except np.linalg.LinAlgError as exc:
            return finalize(STATUS_NUMERICAL_FAILURE, message=f"scaling/Cholesky failed: {exc}")
        except scipy.linalg.LinAlgError as exc:
            return finalize(STATUS_NUMERICAL_FAILURE, message=f"Schur factorization failed: {exc}")

        col = scipy.linalg.cho_solve(factor, c - ghat)
        denom_base = float((c + ghat) @ col) + gamma

        def newton(sigma, eta, corr_blocks, corr_tk):
            d_tk = sigma * mu_h - tau * kappa - corr_tk
            q = eta * rD.copy()
            q_tau = -eta * rG - d_tk / tau
            for s in states:
                d = sigma * mu_h * np.eye(s.dim) - np.diag(s.lam**2)
                if corr_blocks is not None:
                    d = d - corr_blocks.pop(0)
                s.LD = 2.0 * d / (s.lam[:, np.newaxis] + s.lam[np.newaxis, :])
                rhs_mat = s.LD - eta * s.rPt
                if s.idx.size:
                    q[s.idx] += s.Ft.reshape(s.idx.size, -1) @ rhs_mat.ravel()
                q_tau += float(np.sum(s.Gt * rhs_mat))
            u = scipy.linalg.cho_solve(factor, q)
            denom = denom_base + kappa / tau
            dtau = (float((c + ghat) @ u) - q_tau) / denom
            dx = u - col * dtau
            dkappa = (d_tk - kappa * dtau) / tau
            dXt, dYt = [], []
            for s in states:
                step = -s.Gt * dtau + eta * s.rPt
                if s.idx.size:
                    step = step + np.tensordot(dx[s.idx], s.Ft, axes=1)
                dXt.append(symmetrize(step))
                dYt.append(symmetrize(s.LD - step))
            return dx, dtau, dkappa, dXt, dYt

        def max_step(dtau, dkappa, dXt, dYt):
            bound = np.inf
            if dtau < 0.0:
                bound = min(bound, -tau / dtau)
            if dkappa < 0.0:
                bound = min(bound, -kappa / dkappa)
            for s, dxt, dyt in zip(states, dXt, dYt):
                bound = min(bound, _block_step_bound(s.lam, dxt))
                bound = min(bound, _block_step_bound(s.lam, dyt))
            return bound

        try:
            # predictor (affine scaling)
            dx_a, dtau_a, dkappa_a, dXt_a, dYt_a = newton(0.0, 1.0, None, 0.0)
            alpha_a = min(1.0, max_step(dtau_a, dkappa_a, dXt_a, dYt_a))
            mu_aff = (sum(float(np.sum((np.diag(s.lam) + alpha_a * dxt)
                                       * (np.diag(s.lam) + alpha_a * dyt)))
                          for s, dxt, dyt in zip(states, dXt_a, dYt_a))
                      + (tau + alpha_a * dtau_a) * (kappa + alpha_a * dkappa_a)) / (ntotal + 1)
            sigma = float(np.clip((max(mu_aff, 0.0) / mu_h) ** 3, 0.0, 1.0 - 1e-12))

            # corrector (combined direction)
            corr = [symmetrize(dxt @ dyt) for dxt, dyt in zip(dXt_a, dYt_a)]
            dx_c, dtau_c, dkappa_c, dXt_c, dYt_c = newton(sigma, 1.0 - sigma, corr,
                                                          dtau_a * dkappa_a)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, FloatingPointError) as exc:
            return finalize(STATUS_NUMERICAL_FAILURE, message=f"Newton step failed: {exc}")

        alpha = min(1.0, opts.step_fraction * max_step(dtau_c, dkappa_c, dXt_c, dYt_c))
        trace[-1].sigma = sigma
        trace[-1].alpha = alpha
        if not np.isfinite(alpha) or alpha <= 1e-12:
            return finalize(STATUS_NUMERICAL_FAILURE, message="step length collapsed")

        x += alpha * dx_c
        tau += alpha * dtau_c
        kappa += alpha * dkappa_c
        for s, dxt, dyt in zip(states, dXt_c, dYt_c):
            s.X = symmetrize(s.X + alpha * (s.R @ dxt @ s.R.T))
            s.Y = symmetrize(s.Y + alpha * (s.Rinv.T @ dyt @ s.Rinv))
        if tau <= 0.0 or kappa <= 0.0:
            return finalize(STATUS_NUMERICAL_FAILURE, message="tau/kappa left the cone")

    return finalize(STATUS_ITERATION_LIMIT, message="iteration limit reached")


# ---------------------------------------------------------------------------
# SDPA sparse text format (".dat-s")
# ---------------------------------------------------------------------------
#
# The file encodes   minimize c'x  s.t.  sum_i x_i F_i - F0 >= 0 per block,
# so the constant matrix stored in the file is the NEGATED f0 of our blocks.
# Entries are written upper-triangle, 1-based, with '%.17g' so a write/read
# cycle reproduces every coefficient bit-exactly.  Diagonal (LP-style) blocks
# carry a negative size in the block-structure line.


def export_sdpa(problem: SdpProblem, destination, comment: str = "") -> None:
    """Write the problem in sparse SDPA format to a path or file object."""
    own = isinstance(destination, (str, bytes)) or hasattr(destination, "__fspath__")
    fh = open(destination, "w", encoding="ascii") if own else destination
    try:
        if comment:
            fh.write(f'"{comment}"\n')
        fh.write(f"{problem.nvars}\n")
        fh.write(f"{len(problem.blocks)}\n")
        sizes = [(-b.dim if b.diag else b.dim) for b in problem.blocks]
        fh.write(" ".join(str(sz) for sz in sizes) + "\n")
        fh.write(" ".join(_fmt(v) for v in problem.c) + "\n")
        for bno, block in enumerate(problem.blocks, start=1):
            _write_entries(fh, 0, bno, -block.f0)
            order = np.argsort(block.idx, kind="stable")
            for k in order:
                _write_entries(fh, int(block.idx[k]) + 1, bno, block.coeff[k])
    finally:
        if own:
            fh.close()


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def _write_entries(fh, matno: int, blkno: int, mat: np.ndarray) -> None:
    dim = mat.shape[0]
    for i in range(dim):
        for j in range(i, dim):
            if mat[i, j] != 0.0:
                fh.write(f"{matno} {blkno} {i + 1} {j + 1} {_fmt(mat[i, j])}\n")


def read_sdpa(source) -> SdpProblem:
    """Read a sparse SDPA file back into an :class:`SdpProblem`."""
    own = isinstance(source, (str, bytes)) or hasattr(source, "__fspath__")
    fh = open(source, "r", encoding="ascii") if own else source
    try:
        lines = iter(fh.read().splitlines())
    finally:
        if own:
            fh.close()

    def next_data():
        for line in lines:
            stripped = line.strip()
            if stripped and not stripped.startswith(("*", '"')):
                return stripped
        raise ValueError("truncated SDPA file")

    def tokens(text):
        for ch in "{}(),":
            text = text.replace(ch, " ")
        return text.split()

    mdim = int(next_data())
    nblock = int(next_data())
    sizes = [int(t) for t in tokens(next_data())]
    if len(sizes) != nblock:
        raise ValueError(f"block structure lists {len(sizes)} sizes, header says {nblock}")
    c = np.array([float(t) for t in tokens(next_data())])
    if c.size != mdim:
        raise ValueError(f"objective has {c.size} entries, header says {mdim}")

    f0 = [np.zeros((abs(sz), abs(sz))) for sz in sizes]
    coeffs: list[dict[int, np.ndarray]] = [{} for _ in sizes]
    for line in lines:
        stripped = line.strip()
        if not stripped or stripped.startswith(("*", '"')):
            continue
        parts = tokens(stripped)
        if len(parts) != 5:
            raise ValueError(f"malformed entry line: {line!r}")
        matno, blkno = int(parts[0]), int(parts[1])
        i, j, val = int(parts[2]), int(parts[3]), float(parts[4])
        if not 1 <= blkno <= nblock:
            raise ValueError(f"entry references block {blkno} of {nblock}")
        size = sizes[blkno - 1]
        if size < 0 and i != j:
            raise ValueError("off-diagonal entry in a diagonal block")
        target = f0[blkno - 1] if matno == 0 else coeffs[blkno - 1].setdefault(
            matno - 1, np.zeros((abs(size), abs(size))))
        target[i - 1, j - 1] = val
        target[j - 1, i - 1] = val

    blocks = []
    for bno, size in enumerate(sizes):
        var_ids = np.array(sorted(coeffs[bno]), dtype=int)
        stack = (np.stack([coeffs[bno][v] for v in var_ids])
                 if var_ids.size else np.zeros((0, abs(size), abs(size))))
        blocks.append(SdpBlock(f0=-f0[bno], idx=var_ids, coeff=stack, diag=size < 0))
    return SdpProblem(c=c, blocks=blocks)
