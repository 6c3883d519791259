"""Plant description for disturbance-affected discrete-time Lipschitz systems.

The plant is
    x_{k+1} = A x_k + G f(x_k) + B1 u_k + E w_k
    y_k     = C x_k + F g(x_k) + B2 u_k + D w_k
with f and g given in detailed form: lists of scalar components acting on
projected coordinates (see :mod:`hinfobs.lipschitz`).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .lipschitz import NonlinearityComponent


@dataclass
class DetailedSystem:
    A: np.ndarray
    G: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C: np.ndarray
    E: np.ndarray
    D: np.ndarray
    F: np.ndarray
    f_components: list[NonlinearityComponent] = field(default_factory=list)
    g_components: list[NonlinearityComponent] = field(default_factory=list)

    def __post_init__(self):
        for name in ("A", "G", "B1", "B2", "C", "E", "D", "F"):
            setattr(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        self.validate()

    # -- dimensions ---------------------------------------------------------
    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def q(self) -> int:
        return self.E.shape[1]

    @property
    def s(self) -> int:
        return self.B1.shape[1]

    @property
    def m(self) -> int:
        return len(self.f_components)

    @property
    def r(self) -> int:
        return len(self.g_components)

    @property
    def nbar(self) -> int:
        return self.f_components[0].inner if self.f_components else 0

    @property
    def pbar(self) -> int:
        return self.g_components[0].inner if self.g_components else 0

    def validate(self) -> None:
        n, p, q, s = self.n, self.p, self.q, self.s
        checks = {
            "A": (n, n), "G": (n, self.m), "B1": (n, s), "B2": (p, s),
            "C": (p, n), "E": (n, q), "D": (p, q), "F": (p, self.r),
        }
        for name, want in checks.items():
            got = getattr(self, name).shape
            if got != want:
                raise ValueError(f"{name} has shape {got}, expected {want}")
        for fam, fam_name in ((self.f_components, "dynamics"), (self.g_components, "output")):
            inners = {c.inner for c in fam}
            if len(inners) > 1:
                raise ValueError(f"{fam_name} components disagree on inner dimension: {inners}")
            for comp in fam:
                if comp.proj.shape[1] != n:
                    raise ValueError(f"{fam_name} projection acts on R^{comp.proj.shape[1]}, state is R^{n}")

    # -- evaluation ---------------------------------------------------------
    def f(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        return np.array([comp(comp.proj @ x) for comp in self.f_components])

    def g(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        return np.array([comp(comp.proj @ x) for comp in self.g_components])

    def replace(self, **changes) -> "DetailedSystem":
        return dataclasses.replace(self, **changes)


def empty_matrix(rows: int, cols: int) -> np.ndarray:
    return np.zeros((rows, cols))
