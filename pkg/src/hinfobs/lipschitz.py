"""Detailed-form nonlinearities and their exact slope decomposition.

A vector nonlinearity is modelled component-wise as ``f_i(proj_i @ x)``
where each ``f_i`` is a scalar function of the projected coordinates.
The central tool is the constructive rewriting of a difference
``f(x) - f(xhat)`` as a finite sum of bounded scalar divided differences
times constant rank-one selector matrices acting on ``x - xhat``.  That
rewriting is exact (telescoping), which is what lets an observer design
treat a Lipschitz nonlinearity as a polytopic uncertainty with known
per-direction slope bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .matrixcore import unit_outer

# Deadband under which a telescoping term is skipped: the contribution of a
# coordinate with (psi_j - phi_j) ~ 0 is exactly zero, so no slope is needed.
_DEADBAND = 1e-12


@dataclass
class NonlinearityComponent:
    """One scalar nonlinearity ``fn(proj @ x)`` with its declared domain box.

    ``proj`` has shape (inner, n); ``lo``/``hi`` bound each projected
    coordinate and are only used by grid-based slope estimation.  When the
    slope range per projected coordinate is known in closed form it can be
    attached via ``analytic_lo``/``analytic_hi`` and is used verbatim.
    """

    index: int
    proj: np.ndarray
    fn: Callable[[np.ndarray], float]
    lo: np.ndarray
    hi: np.ndarray
    name: str = ""
    params: dict = field(default_factory=dict)
    analytic_lo: np.ndarray | None = None
    analytic_hi: np.ndarray | None = None

    def __post_init__(self):
        self.proj = np.atleast_2d(np.asarray(self.proj, dtype=float))
        self.lo = np.asarray(self.lo, dtype=float).ravel()
        self.hi = np.asarray(self.hi, dtype=float).ravel()
        if self.lo.shape != (self.inner,) or self.hi.shape != (self.inner,):
            raise ValueError("domain box must have one (lo, hi) pair per projected coordinate")
        if np.any(self.lo > self.hi):
            raise ValueError("domain box has lo > hi")

    @property
    def inner(self) -> int:
        return self.proj.shape[0]

    def __call__(self, v: np.ndarray) -> float:
        return float(self.fn(np.asarray(v, dtype=float).ravel()))


@dataclass
class SlopeBounds:
    """Per-(component, coordinate) slope interval [lower, upper]."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.atleast_2d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_2d(np.asarray(self.upper, dtype=float))
        if self.lower.shape != self.upper.shape:
            raise ValueError("lower/upper shapes differ")
        if np.any(self.lower > self.upper):
            raise ValueError("slope bounds have lower > upper")

    @property
    def shape(self) -> tuple[int, int]:
        return self.lower.shape

    @property
    def is_normalized(self) -> bool:
        return bool(np.all(self.lower == 0.0))

    @classmethod
    def empty(cls) -> "SlopeBounds":
        return cls(np.zeros((0, 0)), np.zeros((0, 0)))


def interpolation_point(psi: np.ndarray, phi: np.ndarray, j: int) -> np.ndarray:
    """Mixed point taking the first j coordinates from phi, the rest from psi.

    j = 0 returns psi, j = len(psi) returns phi.
    """
    psi = np.asarray(psi, dtype=float).ravel()
    phi = np.asarray(phi, dtype=float).ravel()
    if psi.shape != phi.shape:
        raise ValueError(f"dimension mismatch: {psi.shape} vs {phi.shape}")
    if not 0 <= j <= psi.size:
        raise IndexError(f"interpolation count {j} outside 0..{psi.size}")
    return np.concatenate([phi[:j], psi[j:]])


def divided_difference(fn: Callable[[np.ndarray], float], psi: np.ndarray,
                       phi: np.ndarray, j: int) -> float:
    """Slope of ``fn`` between consecutive interpolation points along axis j.

    j is 1-based.  Returns 0 when |psi_j - phi_j| falls inside the deadband;
    the corresponding telescoping term is then exactly zero.
    """
    psi = np.asarray(psi, dtype=float).ravel()
    phi = np.asarray(phi, dtype=float).ravel()
    if not 1 <= j <= psi.size:
        raise IndexError(f"coordinate index {j} outside 1..{psi.size}")
    delta = psi[j - 1] - phi[j - 1]
    if abs(delta) <= _DEADBAND * max(1.0, abs(psi[j - 1]), abs(phi[j - 1])):
        return 0.0
    upper = interpolation_point(psi, phi, j - 1)
    lower = interpolation_point(psi, phi, j)
    return (float(fn(upper)) - float(fn(lower))) / delta


def decompose(components: Sequence[NonlinearityComponent], psi: np.ndarray,
              phi: np.ndarray) -> np.ndarray:
    """Exact slope coefficients h[i, j] between the states psi and phi.

    The coefficients satisfy the telescoping identity
    ``sum_ij h[i, j] * E_ij @ proj_i @ (psi - phi) = f(psi) - f(phi)``
    where E_ij is the (i, j) unit selector, f stacks the scalar components.
    """
    psi = np.asarray(psi, dtype=float).ravel()
    phi = np.asarray(phi, dtype=float).ravel()
    if not components:
        return np.zeros((0, 0))
    inner = components[0].inner
    coeffs = np.zeros((len(components), inner))
    for i, comp in enumerate(components):
        if comp.inner != inner:
            raise ValueError("components of one family must share the inner dimension")
        v = comp.proj @ psi
        w = comp.proj @ phi
        for j in range(1, inner + 1):
            coeffs[i, j - 1] = divided_difference(comp.fn, v, w, j)
    return coeffs


def apply_decomposition(components: Sequence[NonlinearityComponent],
                        coeffs: np.ndarray, error: np.ndarray) -> np.ndarray:
    """Evaluate ``sum_ij h[i, j] * E_ij @ proj_i @ error`` for given coefficients."""
    m = len(components)
    if m == 0:
        return np.zeros(0)
    inner = components[0].inner
    out = np.zeros(m)
    for i, comp in enumerate(components):
        out[i] = coeffs[i] @ (comp.proj @ np.asarray(error, dtype=float).ravel())
    if coeffs.shape != (m, inner):
        raise ValueError("coefficient shape does not match the component family")
    return out


def estimate_bounds(component: NonlinearityComponent, resolution: int = 33,
                    widen: float = 1.05) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate slope interval from derivative extremes over a grid.

    Central finite differences of the component over a tensor grid of its
    declared domain box; the resulting [min, max] per coordinate is widened
    multiplicatively on the half-range (default 5%) to stay conservative.
    Analytic bounds attached to the component short-circuit the grid sweep.
    """
    if component.analytic_lo is not None and component.analytic_hi is not None:
        return (np.asarray(component.analytic_lo, dtype=float).copy(),
                np.asarray(component.analytic_hi, dtype=float).copy())
    if resolution < 2:
        raise ValueError("resolution must be at least 2 per axis")
    if not np.all(np.isfinite(component.lo)) or not np.all(np.isfinite(component.hi)):
        raise ValueError("grid bound estimation needs a finite domain box")
    axes = [np.linspace(component.lo[j], component.hi[j], resolution)
            for j in range(component.inner)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    vals = np.array([component.fn(p) for p in pts]).reshape(mesh[0].shape)
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite function value on the estimation grid")
    lo = np.zeros(component.inner)
    hi = np.zeros(component.inner)
    for j in range(component.inner):
        if axes[j][0] == axes[j][-1]:
            continue  # degenerate axis: function constant along it inside the box
        grad = np.gradient(vals, axes[j], axis=j)
        lo[j], hi[j] = float(grad.min()), float(grad.max())
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    return center - widen * half, center + widen * half


def estimate_family_bounds(components: Sequence[NonlinearityComponent],
                           resolution: int = 33, widen: float = 1.05) -> SlopeBounds:
    """Stack per-component slope intervals into family-level bounds."""
    if not components:
        return SlopeBounds.empty()
    rows = [estimate_bounds(c, resolution, widen) for c in components]
    return SlopeBounds(np.vstack([r[0] for r in rows]), np.vstack([r[1] for r in rows]))


def normalize_bounds(system, f_bounds: SlopeBounds, g_bounds: SlopeBounds):
    """Absorb nonzero lower slope bounds into the linear part of the system.

    Returns an adjusted system with
    ``A <- A + sum_ij f_lo[i,j] * outer(G[:,i], f_proj_i[j,:])`` and the
    analogous update of C through the output family, together with bounds
    shifted to [0, upper - lower].  Applying it twice is a no-op.
    """
    a_new = system.A.copy()
    c_new = system.C.copy()
    for i, comp in enumerate(system.f_components):
        for j in range(comp.inner):
            shift = f_bounds.lower[i, j]
            if shift != 0.0:
                a_new += shift * np.outer(system.G[:, i], comp.proj[j, :])
    for i, comp in enumerate(system.g_components):
        for j in range(comp.inner):
            shift = g_bounds.lower[i, j]
            if shift != 0.0:
                c_new += shift * np.outer(system.F[:, i], comp.proj[j, :])
    new_system = system.replace(A=a_new, C=c_new)
    f_shifted = SlopeBounds(np.zeros_like(f_bounds.lower), f_bounds.upper - f_bounds.lower)
    g_shifted = SlopeBounds(np.zeros_like(g_bounds.lower), g_bounds.upper - g_bounds.lower)
    return new_system, f_shifted, g_shifted


def coupling_matrix(n: int, G: np.ndarray, components, coeffs: np.ndarray) -> np.ndarray:
    """``sum_ij coeffs[i,j] * G @ E_ij @ proj_i`` as an n-by-n matrix."""
    out = np.zeros((n, n))
    for i, comp in enumerate(components):
        col = G[:, i]
        for j in range(comp.inner):
            cij = coeffs[i, j]
            if cij != 0.0:
                out += cij * np.outer(col, comp.proj[j, :])
    return out


# ---------------------------------------------------------------------------
# Named scalar-function registry, so scenario files stay declarative.
# ---------------------------------------------------------------------------

def _sin_theta(params):
    theta = float(params["theta"])
    weights = np.asarray(params["weights"], dtype=float)
    return lambda v: np.sin(theta * float(weights @ v))


def _cos_theta(params):
    theta = float(params["theta"])
    weights = np.asarray(params["weights"], dtype=float)
    return lambda v: np.cos(theta * float(weights @ v))


def _linear(params):
    weights = np.asarray(params["weights"], dtype=float)
    return lambda v: float(weights @ v)


def _ocv_cubic(params):
    coeffs = np.asarray(params["coeffs"], dtype=float)  # highest power first, cubic
    return lambda v: float(np.polyval(coeffs, v[0]))


FUNCTION_REGISTRY: dict[str, Callable[[dict], Callable[[np.ndarray], float]]] = {
    "sin_theta": _sin_theta,
    "cos_theta": _cos_theta,
    "linear": _linear,
    "ocv_cubic": _ocv_cubic,
}


def make_component(index: int, name: str, params: dict, proj, lo, hi,
                   analytic_lo=None, analytic_hi=None) -> NonlinearityComponent:
    """Instantiate a registered named scalar function as a component."""
    if name not in FUNCTION_REGISTRY:
        raise KeyError(f"unknown nonlinearity {name!r}; known: {sorted(FUNCTION_REGISTRY)}")
    fn = FUNCTION_REGISTRY[name](params)
    return NonlinearityComponent(index=index, proj=proj, fn=fn, lo=lo, hi=hi,
                                 name=name, params=dict(params),
                                 analytic_lo=analytic_lo, analytic_hi=analytic_hi)
