"""Fibre of the generalized twistor space over one point.

A fibre point is a compatible generalized complex structure, stored through
its pair (J1, J2) of g-orthogonal complex structures on T. Vertical vectors
are pairs (V1, V2) with V_i g-skew and anticommuting with J_i.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .linalg import (
    GenMetric,
    ValidationError,
    assemble,
    check_orthogonal_complex,
    component_label,
    component_signs,
    orientation_sign,
    orthonormal_frame,
    pairing_matrix,
    random_complex_structure,
)

VERT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class FiberPoint:
    gm: GenMetric
    j1: np.ndarray
    j2: np.ndarray
    orientation: int = 1

    def __post_init__(self):
        check_orthogonal_complex(self.gm.g, self.j1, "J1")
        check_orthogonal_complex(self.gm.g, self.j2, "J2")

    @cached_property
    def structure(self) -> np.ndarray:
        return assemble(self.gm, self.j1, self.j2)

    @cached_property
    def component(self) -> str:
        return component_label(
            orientation_sign(self.gm.g, self.j1, self.orientation),
            orientation_sign(self.gm.g, self.j2, self.orientation),
        )

    def full(self, v: VertVec) -> np.ndarray:
        """Vertical vector as an endomorphism of T + T* (V' on E', V'' on E'')."""
        gm = self.gm
        return gm.lift_plus @ v.v1 @ gm.pr_plus + gm.lift_minus @ v.v2 @ gm.pr_minus

    @cached_property
    def vertical_basis(self) -> list[VertVec]:
        """Orthonormal basis of the vertical space for the fibre metric."""
        n = self.gm.n
        frame = orthonormal_frame(self.gm.g)
        finv = np.linalg.inv(frame)
        gens = []
        for a in range(n):
            for b in range(a + 1, n):
                s = np.zeros((n, n))
                s[b, a] = 1.0
                s[a, b] = -1.0
                gens.append(frame @ s @ finv)
        out = []
        for slot, j in ((0, self.j1), (1, self.j2)):
            projected = [0.5 * (s + j @ s @ j) for s in gens]
            # fibre metric -1/2 tr(VW) equals 1/2 the Frobenius product in the frame
            coords = np.array([(finv @ p @ frame).ravel() for p in projected]) / np.sqrt(2.0)
            u, sing, _ = np.linalg.svd(coords.T, full_matrices=False)
            rank = int((sing > 1e-9).sum())
            zero = np.zeros((n, n))
            for k in range(rank):
                m = frame @ (np.sqrt(2.0) * u[:, k].reshape(n, n)) @ finv
                out.append(VertVec(m, zero) if slot == 0 else VertVec(zero, m))
        return out


@dataclass(frozen=True, eq=False)
class VertVec:
    v1: np.ndarray
    v2: np.ndarray

    def __add__(self, other):
        return VertVec(self.v1 + other.v1, self.v2 + other.v2)

    def __sub__(self, other):
        return VertVec(self.v1 - other.v1, self.v2 - other.v2)

    def __mul__(self, c: float):
        return VertVec(c * self.v1, c * self.v2)

    __rmul__ = __mul__

    def __neg__(self):
        return VertVec(-self.v1, -self.v2)

    def norm(self) -> float:
        return float(max(np.abs(self.v1).max(), np.abs(self.v2).max()))


@dataclass(frozen=True, eq=False)
class VertCovec:
    """Vertical covector, stored as its dual vertical vector for the fibre metric."""

    dual: VertVec

    def __call__(self, w: VertVec) -> float:
        return fiber_metric(self.dual, w)


@dataclass(frozen=True, eq=False)
class GenTwistorTangent:
    h: np.ndarray
    v: VertVec
    vstar: VertCovec


def vertical_residual(fp: FiberPoint, v: VertVec) -> float:
    g = fp.gm.g
    worst = 0.0
    for vi, ji in ((v.v1, fp.j1), (v.v2, fp.j2)):
        worst = max(worst, float(np.abs(vi @ ji + ji @ vi).max()), float(np.abs(g @ vi + vi.T @ g).max()))
    return worst


def check_vertical(fp: FiberPoint, v: VertVec) -> None:
    r = vertical_residual(fp, v)
    if r > VERT_TOL:
        raise ValidationError(f"not a vertical vector at this fibre point (residual {r:.3e})", r)


def fiber_metric(a: VertVec, b: VertVec) -> float:
    return float(-0.5 * np.trace(a.v1 @ b.v1) - 0.5 * np.trace(a.v2 @ b.v2))


def k_eps(fp: FiberPoint, v: VertVec, eps: int) -> VertVec:
    """The four complex structures on the vertical space."""
    a = fp.j1 @ v.v1
    b = fp.j2 @ v.v2
    if eps == 1:
        return VertVec(a, b)
    if eps == 2:
        return VertVec(a, -b)
    if eps == 3:
        return VertVec(-a, b)
    if eps == 4:
        return VertVec(-a, -b)
    raise ValueError("eps must be 1, 2, 3 or 4")


def jeps_action(fp: FiberPoint, t: GenTwistorTangent, eps: int) -> GenTwistorTangent:
    """Apply the generalized almost complex structure J_eps to a tangent."""
    # on covectors J_eps is minus the transpose of K_eps; through the fibre
    # metric that is K_eps applied to the dual vector
    return GenTwistorTangent(
        fp.structure @ t.h,
        k_eps(fp, t.v, eps),
        VertCovec(k_eps(fp, t.vstar.dual, eps)),
    )


def vertical_pairing(a: GenTwistorTangent, b: GenTwistorTangent) -> float:
    return 0.5 * (a.vstar(b.v) + b.vstar(a.v))


def dual_of(fp: FiberPoint, functional) -> VertCovec:
    """Vertical covector representing a linear functional on vertical vectors."""
    basis = fp.vertical_basis
    acc = VertVec(np.zeros_like(fp.j1), np.zeros_like(fp.j1))
    for b in basis:
        acc = acc + functional(b) * b
    return VertCovec(acc)


def omega_eps(fp: FiberPoint, a: np.ndarray, b: np.ndarray, eps: int) -> VertCovec:
    """W -> <(K_1 W - K_eps W) A, B> - <(K_1 W - K_eps W) B, A>."""
    p = pairing_matrix(fp.gm.n)

    def value(w):
        diff = fp.full(k_eps(fp, w, 1) - k_eps(fp, w, eps))
        return float((diff @ a) @ p @ b - (diff @ b) @ p @ a)

    return dual_of(fp, value)


def fiber_involution(fp: FiberPoint) -> FiberPoint:
    return FiberPoint(fp.gm, fp.j1, -fp.j2, fp.orientation)


def fiber_swap(fp: FiberPoint) -> FiberPoint:
    return FiberPoint(fp.gm, fp.j2, fp.j1, fp.orientation)


def random_fiber_point(gm: GenMetric, component: str, rng, orientation: int = 1) -> FiberPoint:
    """Random point of the given orientation component.

    ``rng`` is a numpy Generator or an integer seed.
    """
    rng = np.random.default_rng(rng)
    s1, s2 = component_signs(component)
    j1 = random_complex_structure(gm.g, rng, s1 * orientation)
    j2 = random_complex_structure(gm.g, rng, s2 * orientation)
    return FiberPoint(gm, j1, j2, orientation)


def random_vertical(fp: FiberPoint, rng) -> VertVec:
    acc = VertVec(np.zeros_like(fp.j1), np.zeros_like(fp.j1))
    for b in fp.vertical_basis:
        acc = acc + float(rng.standard_normal()) * b
    return acc


def random_tangent(fp: FiberPoint, rng) -> GenTwistorTangent:
    return GenTwistorTangent(
        rng.standard_normal(2 * fp.gm.n),
        random_vertical(fp, rng),
        VertCovec(random_vertical(fp, rng)),
    )
