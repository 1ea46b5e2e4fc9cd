"""Pointwise linear algebra on the generalized tangent space T + T*.

An element of T + T* is a length-2n array holding tangent coefficients first
and covector coefficients second. Endomorphisms are 2n x 2n arrays in the
same block order.

A 2-form B is always passed as its antisymmetric coefficient matrix
``B[i, j] = B(d_i, d_j)``. The induced map X -> i_X B sends coefficients X
to ``B.T @ X``; every formula below uses that map, never the raw matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations

import numpy as np

TOL = 1e-9

COMPONENTS = ("++", "+-", "-+", "--")


class ValidationError(ValueError):
    """Input fails a structural check; ``residual`` is the offending size."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


def element(vec, cov) -> np.ndarray:
    return np.concatenate([np.asarray(vec, float), np.asarray(cov, float)])


def split(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = a.shape[0] // 2
    return a[:n], a[n:]


def pairing_matrix(n: int) -> np.ndarray:
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return 0.5 * np.block([[zero, eye], [eye, zero]])


def pairing(a: np.ndarray, b: np.ndarray) -> float:
    """<X + alpha, Y + beta> = (alpha(Y) + beta(X)) / 2."""
    if a.shape != b.shape or a.ndim != 1 or a.shape[0] % 2:
        raise ValidationError(f"cannot pair elements of shapes {a.shape} and {b.shape}")
    x, alpha = split(a)
    y, beta = split(b)
    return 0.5 * float(alpha @ y + beta @ x)


def form_map(b: np.ndarray) -> np.ndarray:
    """Matrix of X -> i_X B for a 2-form coefficient matrix B."""
    return np.asarray(b, float).T


def b_field(b: np.ndarray) -> np.ndarray:
    """Matrix of e^B : X + alpha -> X + alpha + i_X B."""
    n = b.shape[0]
    out = np.eye(2 * n)
    out[n:, :n] = form_map(b)
    return out


def b_transform(b: np.ndarray, a: np.ndarray) -> np.ndarray:
    return b_field(b) @ a


def conjugate(b: np.ndarray, j: np.ndarray) -> np.ndarray:
    """e^B J e^{-B}."""
    return b_field(b) @ j @ b_field(-b)


@dataclass(frozen=True, eq=False)
class GenMetric:
    """Generalized metric at a point, described by a metric g and a 2-form.

    The positive subbundle is E' = {X + g(X) + theta(X)} and its orthogonal
    complement is E'' = {X - g(X) + theta(X)}.
    """

    g: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        g = np.array(self.g, float)
        theta = np.array(self.theta, float)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or theta.shape != g.shape:
            raise ValidationError("g and theta must be square matrices of equal size")
        asym = float(np.abs(g - g.T).max())
        if asym > TOL * max(1.0, float(np.abs(g).max())):
            raise ValidationError(f"metric is not symmetric (residual {asym:.3e})", asym)
        skew = float(np.abs(theta + theta.T).max())
        if skew > TOL * max(1.0, float(np.abs(theta).max())):
            raise ValidationError(f"2-form is not antisymmetric (residual {skew:.3e})", skew)
        g = 0.5 * (g + g.T)
        theta = 0.5 * (theta - theta.T)
        lowest = float(np.linalg.eigvalsh(g)[0])
        if lowest <= 0.0:
            raise ValidationError(f"metric is not positive definite (eigenvalue {lowest:.3e})", lowest)
        g.setflags(write=False)
        theta.setflags(write=False)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "theta", theta)

    @property
    def n(self) -> int:
        return self.g.shape[0]

    @cached_property
    def ginv(self) -> np.ndarray:
        return np.linalg.inv(self.g)

    @cached_property
    def theta_map(self) -> np.ndarray:
        return form_map(self.theta)

    @cached_property
    def lift_plus(self) -> np.ndarray:
        """2n x n matrix X -> X + g(X) + theta(X), the inverse of pr_T on E'."""
        return np.vstack([np.eye(self.n), self.g + self.theta_map])

    @cached_property
    def lift_minus(self) -> np.ndarray:
        return np.vstack([np.eye(self.n), -self.g + self.theta_map])

    @cached_property
    def pr_plus(self) -> np.ndarray:
        """n x 2n matrix: tangent part of the E' component."""
        gi = self.ginv
        return 0.5 * np.hstack([np.eye(self.n) - gi @ self.theta_map, gi])

    @cached_property
    def pr_minus(self) -> np.ndarray:
        gi = self.ginv
        return 0.5 * np.hstack([np.eye(self.n) + gi @ self.theta_map, -gi])

    @cached_property
    def g_operator(self) -> np.ndarray:
        return g_operator(self)


def project(gm: GenMetric, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split ``a`` into its E' and E'' components (closed form)."""
    g, gi, th = gm.g, gm.ginv, gm.theta_map
    x, alpha = split(a)
    gix = gi @ (th @ x)
    gia = gi @ alpha
    x_plus = 0.5 * (x - gix)
    x_minus = 0.5 * (x + gix)
    # tangent part of (X)_{E'} plus tangent part of (alpha)_{E'}, then lift
    vec_plus = x_plus + 0.5 * gia
    vec_minus = x_minus - 0.5 * gia
    cov_plus = 0.5 * (g @ x - th @ gix) + 0.5 * (alpha + th @ gia)
    cov_minus = 0.5 * (-g @ x + th @ gix) + 0.5 * (alpha - th @ gia)
    return element(vec_plus, cov_plus), element(vec_minus, cov_minus)


def g_operator(gm: GenMetric) -> np.ndarray:
    """The involution equal to +1 on E' and -1 on E''."""
    n = gm.n
    zero = np.zeros((n, n))
    swap = np.block([[zero, gm.ginv], [gm.g, zero]])
    return b_field(gm.theta) @ swap @ b_field(-gm.theta)


def from_complex(j: np.ndarray) -> np.ndarray:
    j = np.asarray(j, float)
    n = j.shape[0]
    zero = np.zeros((n, n))
    return np.block([[j, zero], [zero, -j.T]])


def from_symplectic(omega: np.ndarray) -> np.ndarray:
    """X + alpha -> omega^{-1}(alpha) - omega(X) for a nondegenerate 2-form."""
    omega = np.asarray(omega, float)
    n = omega.shape[0]
    if float(np.abs(omega + omega.T).max()) > TOL * max(1.0, float(np.abs(omega).max())):
        raise ValidationError("symplectic form must be antisymmetric")
    w = form_map(omega)
    if abs(np.linalg.det(w)) < TOL:
        raise ValidationError("symplectic form is degenerate")
    zero = np.zeros((n, n))
    return np.block([[zero, np.linalg.inv(w)], [-w, zero]])


def from_complex_bivector(j: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """Deform a complex structure by a complex bivector.

    ``pi`` is a complex antisymmetric matrix of bivector coefficients; only
    its Lambda^2 T^{1,0} part (with respect to ``j``) enters the result.
    """
    j = np.asarray(j, float)
    n = j.shape[0]
    pi = np.asarray(pi, complex)
    holo = 0.5 * (np.eye(n) - 1j * j)
    pi20 = holo @ pi @ holo.T
    # alpha -> 2 (Im pi)^sharp(alpha), with beta(pi^sharp alpha) = pi(alpha, beta)
    upper = 2.0 * pi20.imag.T
    out = from_complex(j)
    out[:n, n:] = upper
    residual = float(np.abs(out @ out + np.eye(2 * n)).max())
    if residual > 1e-8:
        raise ValidationError(f"incompatible bivector (square residual {residual:.3e})", residual)
    return out


def direct_sum(j1: np.ndarray, j2: np.ndarray) -> np.ndarray:
    """Structure on (T1 + T2) + (T1 + T2)*, blocks ordered (X1, X2, a1, a2)."""
    n1 = j1.shape[0] // 2
    n2 = j2.shape[0] // 2
    idx1 = np.r_[0:n1, n1 + n2 : 2 * n1 + n2]
    idx2 = np.r_[n1 : n1 + n2, 2 * n1 + n2 : 2 * (n1 + n2)]
    out = np.zeros((2 * (n1 + n2),) * 2)
    out[np.ix_(idx1, idx1)] = j1
    out[np.ix_(idx2, idx2)] = j2
    return out


def check_orthogonal_complex(g: np.ndarray, j: np.ndarray, label: str = "J") -> None:
    n = g.shape[0]
    sq = float(np.abs(j @ j + np.eye(n)).max())
    if sq > 1e-8:
        raise ValidationError(f"{label} does not square to -1 (residual {sq:.3e})", sq)
    orth = float(np.abs(j.T @ g @ j - g).max())
    if orth > 1e-8 * max(1.0, float(np.abs(g).max())):
        raise ValidationError(f"{label} is not g-orthogonal (residual {orth:.3e})", orth)


def assemble(gm: GenMetric, j1: np.ndarray, j2: np.ndarray) -> np.ndarray:
    """Generalized complex structure compatible with ``gm`` built from (J1, J2)."""
    j1 = np.asarray(j1, float)
    j2 = np.asarray(j2, float)
    check_orthogonal_complex(gm.g, j1, "J1")
    check_orthogonal_complex(gm.g, j2, "J2")
    g, gi = gm.g, gm.ginv
    om1 = -g @ j1
    om2 = -g @ j2
    om1_inv = j1 @ gi
    om2_inv = j2 @ gi
    middle = 0.5 * np.block([[j1 + j2, om1_inv - om2_inv], [-(om1 - om2), -(j1.T + j2.T)]])
    return b_field(gm.theta) @ middle @ b_field(-gm.theta)


def extract_pair(gm: GenMetric, jj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Recover (J1, J2) by transporting ``jj`` to T along E' and E''."""
    n = gm.n
    j1 = (jj @ gm.lift_plus)[:n]
    j2 = (jj @ gm.lift_minus)[:n]
    return j1, j2


def gen_complex_residuals(jj: np.ndarray) -> dict[str, float]:
    """How far ``jj`` is from squaring to -1 and from being pairing-skew."""
    m = jj.shape[0]
    p = pairing_matrix(m // 2)
    return {
        "square": float(np.abs(jj @ jj + np.eye(m)).max()),
        "skew": float(np.abs(jj.T @ p + p @ jj).max()),
    }


def is_compatible(gm: GenMetric, jj: np.ndarray, tol: float = TOL) -> bool:
    """Compatibility via E'-preservation and via commuting with the metric operator.

    Both tests run; a disagreement between them is reported as an error.
    """
    n = gm.n
    image = jj @ gm.lift_plus
    vec, cov = image[:n], image[n:]
    leak = float(np.abs(cov - (gm.g + gm.theta_map) @ vec).max())
    comm = float(np.abs(gm.g_operator @ jj - jj @ gm.g_operator).max())
    by_subbundle = leak <= tol
    by_operator = comm <= tol
    if by_subbundle != by_operator and max(leak, comm) > 10 * tol:
        raise ValidationError(
            f"compatibility tests disagree (subbundle {leak:.3e}, operator {comm:.3e})",
            max(leak, comm),
        )
    return by_subbundle and by_operator


def second_structure(gm: GenMetric, jj: np.ndarray) -> np.ndarray:
    return gm.g_operator @ jj


def pfaffian(a: np.ndarray) -> float:
    """Pfaffian by expansion along the first row."""
    m = a.shape[0]
    if m % 2:
        return 0.0
    if m == 0:
        return 1.0
    total = 0.0
    rest = list(range(1, m))
    for pos, k in enumerate(rest):
        if a[0, k] == 0.0:
            continue
        keep = [i for i in rest if i != k]
        sign = -1.0 if pos % 2 else 1.0
        total += sign * a[0, k] * pfaffian(a[np.ix_(keep, keep)])
    return total


def orientation_sign(g: np.ndarray, j: np.ndarray, orientation: int = 1) -> int:
    """+1 when J induces the chart orientation (times ``orientation``)."""
    # -g J = J^T g is antisymmetric; a positive change of frame keeps the sign.
    pf = pfaffian(-g @ j)
    if pf == 0.0:
        raise ValidationError("degenerate complex structure")
    return orientation * (1 if pf > 0 else -1)


def classify_component(gm: GenMetric, jj: np.ndarray, orientation: int = 1) -> str:
    j1, j2 = extract_pair(gm, jj)
    return component_label(orientation_sign(gm.g, j1, orientation), orientation_sign(gm.g, j2, orientation))


def component_label(s1: int, s2: int) -> str:
    return ("+" if s1 > 0 else "-") + ("+" if s2 > 0 else "-")


def component_signs(component: str) -> tuple[int, int]:
    if component not in COMPONENTS:
        raise ValueError(f"unknown component {component!r}")
    return tuple(1 if c == "+" else -1 for c in component)


def standard_complex(n: int) -> np.ndarray:
    """J e_{2k-1} = e_{2k} in 0-based pairs (0, 1), (2, 3), ..."""
    if n % 2:
        raise ValidationError("odd dimension has no complex structure")
    j = np.zeros((n, n))
    for k in range(0, n, 2):
        j[k + 1, k] = 1.0
        j[k, k + 1] = -1.0
    return j


def orthonormal_frame(g: np.ndarray, vectors: np.ndarray | None = None) -> np.ndarray:
    """Gram-Schmidt in the metric g; columns of the result are g-orthonormal.

    Starting from the coordinate basis the frame has the chart orientation.
    """
    n = g.shape[0]
    vs = np.eye(n) if vectors is None else np.array(vectors, float)
    out = np.zeros((n, n))
    for k in range(n):
        v = vs[:, k].copy()
        for _ in range(2):
            for i in range(k):
                v -= (out[:, i] @ g @ v) * out[:, i]
        norm = np.sqrt(v @ g @ v)
        if norm < 1e-12:
            raise ValidationError("degenerate vectors in Gram-Schmidt")
        out[:, k] = v / norm
    return out


def random_metric(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n))
    g = a @ a.T / n + np.eye(n)
    return g / np.abs(g).max()


def random_form(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((n, n)) * scale
    return a - a.T


def random_complex_structure(g: np.ndarray, rng: np.random.Generator, sign: int | None = None) -> np.ndarray:
    """Random g-orthogonal complex structure, optionally of a given orientation."""
    n = g.shape[0]
    frame = orthonormal_frame(g, rng.standard_normal((n, n)))
    if sign is not None and np.sign(np.linalg.det(frame)) != sign:
        frame[:, -1] *= -1.0
    return frame @ standard_complex(n) @ np.linalg.inv(frame)


def random_gen_metric(rng: np.random.Generator, n: int, theta_scale: float = 1.0) -> GenMetric:
    return GenMetric(random_metric(rng, n), random_form(rng, n, theta_scale))


def bivector_pairs(n: int) -> list[tuple[int, int]]:
    return list(combinations(range(n), 2))
