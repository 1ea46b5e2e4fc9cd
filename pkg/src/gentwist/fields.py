"""Fields on a coordinate chart and the differential operators acting on them.

Everything here is evaluated at a single point from jets: values plus first
(and, where curvature needs them, second) partial derivatives. Index
conventions:

* a jet gradient carries the derivative index last: ``grad[..., k]``;
* a section jet stores ``jac[c, k] = d_k (component c)``;
* connection coefficients ``gamma[i, a, b]`` mean nabla_{d_i} d_b = gamma[i, a, b] d_a.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from . import expr as ex
from .linalg import GenMetric, assemble, pairing_matrix, split


class DomainRestrictionError(ValueError):
    pass


@dataclass(frozen=True)
class Chart:
    coords: tuple[str, ...]
    box: np.ndarray
    orientation: int = 1

    def __post_init__(self):
        box = np.array(self.box, float).reshape(len(self.coords), 2)
        if np.any(box[:, 1] <= box[:, 0]):
            raise ValueError("empty chart box")
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        object.__setattr__(self, "coords", tuple(self.coords))
        object.__setattr__(self, "box", box)

    @property
    def n(self) -> int:
        return len(self.coords)

    @property
    def center(self) -> np.ndarray:
        return self.box.mean(axis=1)

    def lattice(self, count: int) -> np.ndarray:
        """Deterministic Halton points strictly inside the box, centre first."""
        halton = qmc.Halton(d=self.n, scramble=False)
        unit = halton.random(count + 1)[1:count] if count > 1 else np.zeros((0, self.n))
        lo, hi = self.box[:, 0], self.box[:, 1]
        inner = lo + (hi - lo) * (0.05 + 0.9 * unit)
        return np.vstack([self.center[None, :], inner])[:count]


@dataclass
class TensorJet:
    val: np.ndarray
    grad: np.ndarray
    hess: np.ndarray | None = None


def eval_tensor(exprs: np.ndarray, point) -> TensorJet:
    """2-jet of an array of expressions; zero entries are skipped."""
    point = np.asarray(point, float)
    n = point.shape[0]
    shape = exprs.shape
    val = np.zeros(shape)
    grad = np.zeros(shape + (n,))
    hess = np.zeros(shape + (n, n))
    for idx in np.ndindex(*shape):
        e = exprs[idx]
        if e is None or ex.is_zero(e):
            continue
        j = ex.eval_jet(e, point)
        val[idx] = j.val
        grad[idx] = j.grad
        hess[idx] = j.hess
    return TensorJet(val, grad, hess)


def parse_array(entries, coords) -> np.ndarray:
    arr = np.empty(np.shape(entries), dtype=object)
    for idx in np.ndindex(*arr.shape):
        item = entries[idx[0]] if arr.ndim == 1 else entries[idx[0]][idx[1]]
        arr[idx] = item if not isinstance(item, (str, int, float)) else ex.parse(str(item), coords)
    return arr


@dataclass(frozen=True)
class SectionJet:
    """First jet of a section of T + T* (or of T alone) at a point."""

    val: np.ndarray
    jac: np.ndarray

    @classmethod
    def constant(cls, val, n: int) -> SectionJet:
        val = np.asarray(val, float)
        return cls(val, np.zeros(val.shape + (n,)))


@dataclass(frozen=True)
class EndoJet:
    val: np.ndarray
    jac: np.ndarray

    def apply(self, a: SectionJet) -> SectionJet:
        return SectionJet(
            self.val @ a.val,
            np.einsum("cdk,d->ck", self.jac, a.val) + self.val @ a.jac,
        )


def scale(f: ex.Jet2 | tuple, a: SectionJet) -> SectionJet:
    """f * a for a scalar with value and gradient."""
    fv, fg = (f.val, f.grad) if isinstance(f, ex.Jet2) else f
    return SectionJet(fv * a.val, np.outer(a.val, fg) + fv * a.jac)


class FieldVector:
    def __init__(self, exprs):
        self.exprs = np.asarray(exprs, dtype=object)

    def jet1(self, point) -> SectionJet:
        t = eval_tensor(self.exprs, point)
        return SectionJet(t.val, t.grad)


class FieldGenSection(FieldVector):
    """Section of T + T*: n vector components then n covector components."""


class FieldEndo:
    def __init__(self, exprs):
        self.exprs = np.asarray(exprs, dtype=object)

    def jet1(self, point) -> EndoJet:
        t = eval_tensor(self.exprs, point)
        return EndoJet(t.val, t.grad)


class JetField:
    """Field given directly by a function returning its jet at a point."""

    def __init__(self, fn):
        self.fn = fn

    def jet1(self, point):
        return self.fn(np.asarray(point, float))


def _jet1(obj, point):
    if isinstance(obj, (SectionJet, EndoJet)):
        return obj
    return obj.jet1(point)


def exterior_d(form: TensorJet) -> TensorJet:
    """d of a k-form given by antisymmetric coefficients, k = 0..3.

    The result carries a gradient when the input carries a Hessian, so d can
    be applied twice.
    """
    k = form.val.ndim
    if k > 3:
        raise ValueError("exterior derivative implemented for k <= 3")

    def alt(d):
        # d[..., m] -> sum_a (-1)^a d_{i_a} w_{i_0 .. ^i_a .. i_k}
        moved = np.moveaxis(d, k, 0)
        return sum((-1) ** a * np.moveaxis(moved, 0, a) for a in range(k + 1))

    val = alt(form.grad)
    grad = None
    if form.hess is not None:
        # last Hessian axis is the outer derivative
        grad = np.stack([alt(form.hess[..., m]) for m in range(form.hess.shape[-1])], axis=-1)
    return TensorJet(val, grad)


def lie_bracket(x, y, point) -> np.ndarray:
    a = _jet1(x, point)
    b = _jet1(y, point)
    return b.jac @ a.val - a.jac @ b.val


def courant(a: SectionJet, b: SectionJet) -> np.ndarray:
    """Courant bracket at a point from first jets of both sections."""
    n = a.val.shape[0] // 2
    x, al = a.val[:n], a.val[n:]
    y, be = b.val[:n], b.val[n:]
    dx, dal = a.jac[:n], a.jac[n:]
    dy, dbe = b.jac[:n], b.jac[n:]
    vec = dy @ x - dx @ y
    lie_x_beta = dbe @ x + dx.T @ be
    lie_y_alpha = dal @ y + dy.T @ al
    d_ixb = dx.T @ be + dbe.T @ x
    d_iya = dy.T @ al + dal.T @ y
    return np.concatenate([vec, lie_x_beta - lie_y_alpha - 0.5 * (d_ixb - d_iya)])


def courant_bracket(a, b, point) -> np.ndarray:
    return courant(_jet1(a, point), _jet1(b, point))


def nijenhuis(jj: EndoJet, a: SectionJet, b: SectionJet) -> np.ndarray:
    """-[A,B] + [JA,JB] - J[JA,B] - J[A,JB] at the point."""
    ja = jj.apply(a)
    jb = jj.apply(b)
    return -courant(a, b) + courant(ja, jb) - jj.val @ courant(ja, b) - jj.val @ courant(a, jb)


def nijenhuis_field(jfield, a, b, point) -> np.ndarray:
    return nijenhuis(_jet1(jfield, point), _jet1(a, point), _jet1(b, point))


def b_transform_jet(theta: TensorJet, a: SectionJet) -> SectionJet:
    """Jet of e^theta A = X + alpha + i_X theta."""
    n = a.val.shape[0] // 2
    x = a.val[:n]
    tmap = theta.val.T
    dtmap = np.swapaxes(theta.grad, 0, 1)
    cov_jac = a.jac[n:] + np.einsum("cdk,d->ck", dtmap, x) + tmap @ a.jac[:n]
    return SectionJet(
        np.concatenate([x, a.val[n:] + tmap @ x]),
        np.vstack([a.jac[:n], cov_jac]),
    )


def pushforward_jet(a: SectionJet, m: np.ndarray) -> SectionJet:
    """Image of a section under the affine map x -> m x + c, in new coordinates."""
    minv = np.linalg.inv(m)
    f = np.zeros((2 * m.shape[0],) * 2)
    n = m.shape[0]
    f[:n, :n] = m
    f[n:, n:] = minv.T
    return SectionJet(f @ a.val, f @ a.jac @ minv)


def courant_props_check(a, b, c, f, theta, point, affine: np.ndarray | None = None) -> dict[str, float]:
    """Residuals of the standard Courant bracket identities at one point.

    ``f`` is a scalar field (Expr or Jet2), ``theta`` a 2-form given as an
    expression array or a TensorJet, ``affine`` an invertible matrix used for
    the diffeomorphism invariance test.
    """
    a, b, c = (_jet1(s, point) for s in (a, b, c))
    n = a.val.shape[0] // 2
    fj = f if isinstance(f, ex.Jet2) else ex.eval_jet(f, point)
    th = theta if isinstance(theta, TensorJet) else eval_tensor(theta, point)
    p = pairing_matrix(n)
    x, y = a.val[:n], b.val[:n]

    df = np.concatenate([np.zeros(n), fj.grad])
    lhs = courant(a, scale(fj, b))
    rhs = fj.val * courant(a, b) + (fj.grad @ x) * b.val - (a.val @ p @ b.val) * df
    leibniz = float(np.abs(lhs - rhs).max())

    h = exterior_d(th).val
    ea, eb = b_transform_jet(th, a), b_transform_jet(th, b)
    br = courant(a, b)
    ebr = br.copy()
    ebr[n:] += th.val.T @ br[:n]
    defect = courant(ea, eb) - ebr
    expected = np.concatenate([np.zeros(n), -np.einsum("i,j,jil->l", x, y, h)])
    b_symmetry = float(np.abs(defect - expected).max())

    m = np.eye(n) if affine is None else np.asarray(affine, float)
    fa, fb = pushforward_jet(a, m), pushforward_jet(b, m)
    fwd = pushforward_jet(SectionJet.constant(br, n), m).val
    naturality = float(np.abs(courant(fa, fb) - fwd).max())

    def pair_d(u, v):
        # d <u, v> as a T* element
        return np.concatenate([np.zeros(n), u.jac.T @ p @ v.val + v.jac.T @ p @ u.val])

    d_bc = pair_d(b, c)[n:]
    lhs6 = x @ d_bc
    rhs6 = (courant(a, b) + pair_d(a, b)) @ p @ c.val + b.val @ p @ (courant(a, c) + pair_d(a, c))
    invariance = abs(float(lhs6 - rhs6))
    return {
        "leibniz": leibniz,
        "b_symmetry": b_symmetry,
        "naturality": naturality,
        "invariance": invariance,
    }


def symplectic_field(omega_exprs) -> JetField:
    """Generalized complex structure of a nondegenerate 2-form field."""
    omega_exprs = np.asarray(omega_exprs, dtype=object)

    def jet(point):
        t = eval_tensor(omega_exprs, point)
        w = t.val.T
        dw = np.swapaxes(t.grad, 0, 1)
        winv = np.linalg.inv(w)
        dwinv = -np.einsum("ab,bck,cd->adk", winv, dw, winv)
        n = w.shape[0]
        val = np.zeros((2 * n, 2 * n))
        jac = np.zeros((2 * n, 2 * n, n))
        val[:n, n:] = winv
        val[n:, :n] = -w
        jac[:n, n:] = dwinv
        jac[n:, :n] = -dw
        return EndoJet(val, jac)

    return JetField(jet)


@dataclass(frozen=True)
class ConnCoeffs:
    gamma: np.ndarray
    kind: str

    def derivative(self, z, x: SectionJet) -> np.ndarray:
        """nabla_Z X for a vector field jet X."""
        z = np.asarray(z, float)
        return x.jac @ z + np.einsum("i,iab,b->a", z, self.gamma, x.val)

    def torsion(self) -> np.ndarray:
        """torsion[i, j, a]: the d_a component of T(d_i, d_j)."""
        return np.einsum("iaj->ija", self.gamma) - np.einsum("jai->ija", self.gamma)


class FieldGenMetric:
    """Generalized metric field: expressions for g (symmetric) and theta."""

    def __init__(self, chart: Chart, g_exprs, theta_exprs):
        self.chart = chart
        self.g_exprs = np.asarray(g_exprs, dtype=object)
        self.theta_exprs = np.asarray(theta_exprs, dtype=object)
        self._cache: dict[bytes, tuple] = {}
        self._derived_cache: dict = {}

    @property
    def n(self) -> int:
        return self.chart.n

    @classmethod
    def from_text(cls, chart: Chart, g_text, theta_text=None) -> FieldGenMetric:
        n = chart.n
        g = parse_array(g_text, chart.coords)
        theta = parse_array(theta_text if theta_text is not None else [["0"] * n] * n, chart.coords)
        return cls(chart, g, theta)

    def jets(self, point) -> tuple[TensorJet, TensorJet]:
        point = np.asarray(point, float)
        key = point.tobytes()
        hit = self._cache.get(key)
        if hit is None:
            if len(self._cache) > 4096:
                self._cache.clear()
            gj = eval_tensor(self.g_exprs, point)
            tj = eval_tensor(self.theta_exprs, point)
            # symmetrize against round-off in the expressions
            for t, s in ((gj, 1), (tj, -1)):
                t.val = 0.5 * (t.val + s * t.val.T)
                t.grad = 0.5 * (t.grad + s * np.swapaxes(t.grad, 0, 1))
                t.hess = 0.5 * (t.hess + s * np.swapaxes(t.hess, 0, 1))
            hit = (gj, tj)
            self._cache[key] = hit
        return hit

    def _derived(self, point, name, build):
        key = (name, np.asarray(point, float).tobytes())
        hit = self._derived_cache.get(key)
        if hit is None:
            if len(self._derived_cache) > 4096:
                self._derived_cache.clear()
            hit = self._derived_cache[key] = build()
        return hit

    def at(self, point) -> GenMetric:
        def build():
            gj, tj = self.jets(point)
            return GenMetric(gj.val, tj.val)

        return self._derived(point, "at", build)

    def dtheta(self, point) -> TensorJet:
        return self._derived(point, "dtheta", lambda: exterior_d(self.jets(point)[1]))


def _christoffel(gm: FieldGenMetric, point, torsion_sign: float, second: bool):
    gj, tj = gm.jets(point)
    g, dg = gj.val, gj.grad
    ginv = np.linalg.inv(g)
    # first[l, i, b] = 1/2 (d_i g_lb + d_b g_li - d_l g_ib)
    first = 0.5 * (np.einsum("lbi->lib", dg) + np.einsum("lib->lib", dg) - np.einsum("ibl->lib", dg))
    h = exterior_d(tj)
    first = first + torsion_sign * 0.5 * np.einsum("ibl->lib", h.val)
    gamma = np.einsum("al,lib->iab", ginv, first)
    if not second:
        return gamma, None
    ddg = gj.hess
    dginv = -np.einsum("ap,pqk,ql->alk", ginv, dg, ginv)
    dfirst = 0.5 * (np.einsum("lbik->libk", ddg) + np.einsum("libk->libk", ddg) - np.einsum("iblk->libk", ddg))
    dfirst = dfirst + torsion_sign * 0.5 * np.einsum("iblk->libk", h.grad)
    dgamma = np.einsum("alk,lib->kiab", dginv, first) + np.einsum("al,libk->kiab", ginv, dfirst)
    return gamma, dgamma


_TORSION_SIGN = {"lc": 0.0, "torsion": 1.0, "torsion_minus": -1.0}


def christoffel(gm: FieldGenMetric, point, kind: str = "lc", second: bool = False):
    """Connection coefficients and, optionally, their first derivatives.

    ``kind`` is ``lc`` (Levi-Civita), ``torsion`` (metric connection with
    torsion +d theta) or ``torsion_minus`` (torsion -d theta). With
    ``second`` the result is ``(gamma, dgamma)`` with
    ``dgamma[k, i, a, b] = d_k gamma[i, a, b]``.
    """
    gamma, dgamma = _christoffel(gm, point, _TORSION_SIGN[kind], second)
    return (gamma, dgamma) if second else gamma


def levi_civita(gm: FieldGenMetric, point) -> ConnCoeffs:
    return ConnCoeffs(christoffel(gm, point, "lc"), "lc")


def torsion_connection(gm: FieldGenMetric, point) -> tuple[ConnCoeffs, np.ndarray, ConnCoeffs]:
    """(nabla', its torsion, nabla'') with torsions +d theta and -d theta."""
    plus = ConnCoeffs(christoffel(gm, point, "torsion"), "torsion")
    minus = ConnCoeffs(christoffel(gm, point, "torsion_minus"), "torsion_minus")
    return plus, plus.torsion(), minus


def _projector_jets(gm: FieldGenMetric, point):
    """Values and derivatives of the lifts and tangent projections of E', E''."""
    gj, tj = gm.jets(point)
    n = gm.n
    g, dg = gj.val, gj.grad
    tm, dtm = tj.val.T, np.swapaxes(tj.grad, 0, 1)
    ginv = np.linalg.inv(g)
    dginv = -np.einsum("ap,pqk,qb->abk", ginv, dg, ginv)
    eye = np.eye(n)
    g_t = np.einsum("abk,bc->ack", dginv, tm) + np.einsum("ab,bck->ack", ginv, dtm)
    pr_p = 0.5 * np.hstack([eye - ginv @ tm, ginv])
    pr_m = 0.5 * np.hstack([eye + ginv @ tm, -ginv])
    dpr_p = 0.5 * np.concatenate([-g_t, dginv], axis=1)
    dpr_m = 0.5 * np.concatenate([g_t, -dginv], axis=1)
    lift_p = np.vstack([eye, g + tm])
    lift_m = np.vstack([eye, -g + tm])
    dlift_p = np.concatenate([np.zeros((n, n, n)), dg + dtm], axis=0)
    dlift_m = np.concatenate([np.zeros((n, n, n)), -dg + dtm], axis=0)
    return (lift_p, dlift_p, pr_p, dpr_p), (lift_m, dlift_m, pr_m, dpr_m)


def d_connection_matrices(gm: FieldGenMetric, point) -> np.ndarray:
    """C[k] with D_{d_k} A = d_k A + C[k] A for the connection D on T + T*.

    D transfers the torsion connection to E' and to E'' through the tangent
    projections.
    """
    gamma = christoffel(gm, point, "torsion")
    (lp, _, pp, dpp), (lm, _, pm, dpm) = _projector_jets(gm, point)
    return np.stack([lp @ (dpp[..., k] + gamma[k] @ pp) + lm @ (dpm[..., k] + gamma[k] @ pm) for k in range(gm.n)])


def connection_D(gm: FieldGenMetric, z, a, point) -> np.ndarray:
    aj = _jet1(a, point)
    c = d_connection_matrices(gm, point)
    z = np.asarray(z, float)
    return aj.jac @ z + np.einsum("k,kab,b->a", z, c, aj.val)


def lift_jet(gm: FieldGenMetric, x, point, side: str = "+") -> SectionJet:
    """Jet of the E' (or E'') lift of a vector field (constant if an array)."""
    xj = (
        x
        if isinstance(x, SectionJet)
        else (SectionJet.constant(x, gm.n) if isinstance(x, np.ndarray) else _jet1(x, point))
    )
    plus, minus = _projector_jets(gm, point)
    lift, dlift = (plus if side == "+" else minus)[:2]
    return SectionJet(lift @ xj.val, np.einsum("cak,a->ck", dlift, xj.val) + lift @ xj.jac)


def courant_connection_check(gm: FieldGenMetric, x, s, point) -> float:
    """Distance between [X'', S] projected to E' and D_X S, for S in E'."""
    x = np.asarray(x, float)
    sj = _jet1(s, point)
    x2 = lift_jet(gm, x, point, "-")
    m = gm.at(point)
    bracket_e = m.lift_plus @ (m.pr_plus @ courant(x2, sj))
    return float(np.abs(bracket_e - connection_D(gm, x, sj, point)).max())


def courant_christoffel(gm: FieldGenMetric, point, side: str = "+") -> np.ndarray:
    """Connection on T obtained from the Courant bracket on E' (or E'').

    nabla_{d_i} d_b = pr_T of the E-side component of [d_i lifted to the
    opposite side, d_b lifted to this side].
    """
    n = gm.n
    m = gm.at(point)
    other = "-" if side == "+" else "+"
    pr = m.pr_plus if side == "+" else m.pr_minus
    gamma = np.zeros((n, n, n))
    eye = np.eye(n)
    lifts = [lift_jet(gm, eye[b], point, side) for b in range(n)]
    for i in range(n):
        xi = lift_jet(gm, eye[i], point, other)
        for b in range(n):
            gamma[i, :, b] = pr @ courant(xi, lifts[b])
    return gamma


def retract_complex(g: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Nearest g-orthogonal complex structure to ``m`` (polar projection)."""
    chol = np.linalg.cholesky(g)
    tilde = chol.T @ m @ np.linalg.inv(chol.T)
    skew = 0.5 * (tilde - tilde.T)
    w, v = np.linalg.eigh(-skew @ skew)
    if w[0] < 0.25:
        raise DomainRestrictionError("extension left the neighbourhood of complex structures")
    inv_sqrt = v @ np.diag(w**-0.5) @ v.T
    return np.linalg.inv(chol.T) @ (skew @ inv_sqrt) @ chol.T


@dataclass
class ParallelExtension:
    """Field of compatible structures with prescribed value and D S = 0 at a point.

    Built from the first-order Taylor expansion of (J1, J2) along the torsion
    connection, projected back onto compatible structures at each point.
    """

    gm: FieldGenMetric
    base: np.ndarray
    j1: np.ndarray
    j2: np.ndarray
    radius: float = 0.25
    d1: np.ndarray = field(init=False)
    d2: np.ndarray = field(init=False)

    def __post_init__(self):
        self.base = np.asarray(self.base, float)
        gamma = christoffel(self.gm, self.base, "torsion")
        self.d1 = np.stack([self.j1 @ gk - gk @ self.j1 for gk in gamma])
        self.d2 = np.stack([self.j2 @ gk - gk @ self.j2 for gk in gamma])

    def pair(self, point) -> tuple[np.ndarray, np.ndarray]:
        h = np.asarray(point, float) - self.base
        if np.linalg.norm(h) > self.radius:
            raise DomainRestrictionError(f"point is farther than {self.radius} from the base point")
        if not h.any():
            return self.j1, self.j2
        g = self.gm.jets(point)[0].val
        m1 = self.j1 + np.einsum("k,kab->ab", h, self.d1)
        m2 = self.j2 + np.einsum("k,kab->ab", h, self.d2)
        return retract_complex(g, m1), retract_complex(g, m2)

    def __call__(self, point) -> np.ndarray:
        s1, s2 = self.pair(point)
        return assemble(self.gm.at(point), s1, s2)

    def jet1(self, point=None) -> EndoJet:
        """Exact first jet at the base point."""
        if point is not None and not np.allclose(point, self.base, rtol=0, atol=1e-14):
            raise DomainRestrictionError("exact jet is available at the base point only")
        s0 = assemble(self.gm.at(self.base), self.j1, self.j2)
        c = d_connection_matrices(self.gm, self.base)
        jac = np.stack([s0 @ ck - ck @ s0 for ck in c], axis=-1)
        return EndoJet(s0, jac)


def parallel_extension(gm: FieldGenMetric, j1, j2, point) -> ParallelExtension:
    return ParallelExtension(gm, np.asarray(point, float), np.asarray(j1, float), np.asarray(j2, float))


def constant_section(a) -> SectionJet:
    a = np.asarray(a, float)
    return SectionJet.constant(a, a.shape[0] // 2)


__all__ = [
    "Chart",
    "ConnCoeffs",
    "DomainRestrictionError",
    "EndoJet",
    "FieldEndo",
    "FieldGenMetric",
    "FieldGenSection",
    "FieldVector",
    "JetField",
    "ParallelExtension",
    "SectionJet",
    "TensorJet",
    "christoffel",
    "connection_D",
    "courant",
    "courant_bracket",
    "courant_christoffel",
    "courant_connection_check",
    "courant_props_check",
    "d_connection_matrices",
    "eval_tensor",
    "exterior_d",
    "levi_civita",
    "lie_bracket",
    "lift_jet",
    "nijenhuis",
    "nijenhuis_field",
    "parallel_extension",
    "split",
    "symplectic_field",
    "torsion_connection",
]
