"""Riemann tensor, curvature operator on 2-vectors and its decomposition.

Sign convention: R(X, Y) = nabla_{[X,Y]} - [nabla_X, nabla_Y], and the
curvature operator is fixed by g(R(X ^ Y), Z ^ U) = g(R(X, Y) Z, U), with the
Gram-determinant metric on 2-vectors. With these choices the round unit
sphere has curvature operator equal to the identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .fields import FieldGenMetric, christoffel
from .linalg import bivector_pairs, orthonormal_frame


class CurvatureSymmetryError(ValueError):
    pass


def riemann(gm: FieldGenMetric, point, connection: str = "lc") -> np.ndarray:
    """R[i, j, a, b]: the d_a component of R(d_i, d_j) d_b."""
    gamma, dgamma = christoffel(gm, point, connection, second=True)
    # textbook [nabla_i, nabla_j] = d_i G_j - d_j G_i + G_i G_j - G_j G_i
    std = (
        np.einsum("ijab->ijab", dgamma)
        - np.einsum("jiab->ijab", dgamma)
        + np.einsum("iac,jcb->ijab", gamma, gamma)
        - np.einsum("jac,icb->ijab", gamma, gamma)
    )
    return -std


def lower(r: np.ndarray, g: np.ndarray) -> np.ndarray:
    """rl[i, j, b, d] = g(R(d_i, d_j) d_b, d_d)."""
    return np.einsum("da,ijab->ijbd", g, r)


def curvature_form(rl: np.ndarray, x, y, z, u) -> np.ndarray:
    """g(R(X ^ Y), Z ^ U), batched over leading axes of the vectors."""
    return np.einsum("ijbd,...i,...j,...b,...d->...", rl, x, y, z, u)


def levi_civita_symbol(n: int) -> dict[tuple[int, ...], int]:
    out = {}
    for perm in permutations(range(n)):
        inversions = sum(1 for a in range(n) for b in range(a + 1, n) if perm[a] > perm[b])
        out[perm] = -1 if inversions % 2 else 1
    return out


@dataclass(frozen=True)
class CurvOp:
    """Curvature operator in the orthonormal 2-vector frame E_a ^ E_b, a < b.

    ``frame`` holds the oriented g-orthonormal tangent frame as columns.
    """

    matrix: np.ndarray
    frame: np.ndarray
    pairs: tuple[tuple[int, int], ...]
    frame_tensor: np.ndarray
    kind: str

    @property
    def n(self) -> int:
        return self.frame.shape[0]


def curvature_operator(gm: FieldGenMetric, point, connection: str = "lc", symmetry_tol: float = 1e-7) -> CurvOp:
    point = np.asarray(point, float)
    g = gm.jets(point)[0].val
    rl = lower(riemann(gm, point, connection), g)
    frame = orthonormal_frame(g)
    if gm.chart.orientation < 0:
        frame[:, -1] *= -1.0
    rf = np.einsum("ijkl,ia,jb,kc,ld->abcd", rl, frame, frame, frame, frame)
    pairs = tuple(bivector_pairs(g.shape[0]))
    m = np.array([[rf[a, b, c, d] for (c, d) in pairs] for (a, b) in pairs])
    if connection == "lc":
        asym = float(np.abs(m - m.T).max())
        if asym > symmetry_tol * max(1.0, float(np.abs(m).max())):
            raise CurvatureSymmetryError(f"curvature operator is not symmetric (residual {asym:.3e})")
    return CurvOp(m, frame, pairs, rf, connection)


def ricci(op: CurvOp) -> np.ndarray:
    """Ricci tensor in the orthonormal frame."""
    return np.einsum("abac->bc", op.frame_tensor)


def _wedge_coeffs(u: np.ndarray, v: np.ndarray, pairs) -> np.ndarray:
    w = np.outer(u, v) - np.outer(v, u)
    return np.array([w[c, d] for (c, d) in pairs])


def hodge_star(n: int, pairs) -> np.ndarray:
    if n != 4:
        raise ValueError("Hodge star on 2-vectors is only used in dimension 4")
    eps = levi_civita_symbol(4)
    star = np.zeros((len(pairs), len(pairs)))
    for col, (a, b) in enumerate(pairs):
        for row, (c, d) in enumerate(pairs):
            star[row, col] = eps.get((a, b, c, d), 0)
    return star


@dataclass(frozen=True)
class CurvDecomp:
    scalar: float
    ricci: np.ndarray
    scalar_part: np.ndarray
    ricci_part: np.ndarray
    weyl: np.ndarray
    weyl_plus: np.ndarray | None
    weyl_minus: np.ndarray | None

    def reassembly_residual(self, op: CurvOp) -> float:
        return float(np.abs(self.scalar_part + self.ricci_part + self.weyl - op.matrix).max())


def decompose(op: CurvOp) -> CurvDecomp:
    """Scalar, traceless-Ricci and Weyl parts of the curvature operator."""
    n = op.n
    pairs = op.pairs
    rho = ricci(op)
    s = float(np.trace(rho))
    eye = np.eye(len(pairs))
    scalar_part = s / (n * (n - 1)) * eye
    ricci_part = np.zeros_like(op.matrix)
    if n > 2:
        basis = np.eye(n)
        for col, (a, b) in enumerate(pairs):
            image = (
                _wedge_coeffs(rho @ basis[a], basis[b], pairs)
                + _wedge_coeffs(basis[a], rho @ basis[b], pairs)
                - (2.0 * s / n) * _wedge_coeffs(basis[a], basis[b], pairs)
            )
            ricci_part[:, col] = image / (n - 2)
    weyl = op.matrix - scalar_part - ricci_part
    wp = wm = None
    if n == 4:
        star = hodge_star(n, pairs)
        p_plus = 0.5 * (eye + star)
        p_minus = 0.5 * (eye - star)
        wp = p_plus @ weyl @ p_plus
        wm = p_minus @ weyl @ p_minus
    return CurvDecomp(s, rho, scalar_part, ricci_part, weyl, wp, wm)


def conn_curvature_action(gm: FieldGenMetric, point, x, y, j1, j2, connection: str = "torsion"):
    """Curvature of the induced connection on endomorphisms, applied to (J1, J2)."""
    r = riemann(gm, point, connection)
    rxy = np.einsum("i,j,ijab->ab", x, y, r)
    return rxy @ j1 - j1 @ rxy, rxy @ j2 - j2 @ rxy
