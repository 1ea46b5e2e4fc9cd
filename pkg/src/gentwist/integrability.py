"""Nijenhuis tensor components of J_eps and the integrability predicates."""

from __future__ import annotations

import itertools
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import curvature as cv
from .fiber import (
    FiberPoint,
    VertCovec,
    VertVec,
    k_eps,
    omega_eps,
    random_fiber_point,
    random_vertical,
)
from .fields import (
    FieldGenMetric,
    SectionJet,
    nijenhuis,
    parallel_extension,
)
from .linalg import b_field, classify_component, conjugate, extract_pair, orthonormal_frame, standard_complex

DEFAULT_TOL = 1e-6


@dataclass
class Sampling:
    points: int = 16
    fibers: int = 8
    probes: int = 24
    tol: float = DEFAULT_TOL
    seed: int = 0
    threads: int | None = None

    def workers(self) -> int:
        if self.threads is not None:
            return max(1, self.threads)
        env = os.environ.get("GENTWIST_THREADS")
        if env:
            try:
                return max(1, int(env))
            except ValueError:
                raise ValueError(f"GENTWIST_THREADS must be an integer, got {env!r}") from None
        return 1


def rng_for(sampling: Sampling, *tags) -> np.random.Generator:
    """Generator determined by the seed and the sample's identity only."""
    words = [sampling.seed & 0xFFFFFFFF, sampling.seed >> 32]
    for t in tags:
        words.append(zlib.crc32(t.encode()) if isinstance(t, str) else int(t))
    return np.random.default_rng(words)


def fan_out(fn, items, sampling: Sampling) -> list:
    """Map preserving order; results never depend on the worker count."""
    items = list(items)
    workers = sampling.workers()
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class Verdict:
    predicate: str
    component: str | None
    passed: bool | None
    max_residual: float
    samples: int
    tolerance: float
    witness: dict | None = None
    reason: str | None = None
    expected: bool = True

    def as_dict(self) -> dict:
        out = {
            "predicate": self.predicate,
            "component": self.component,
            "pass": self.passed,
            "max_residual": float(self.max_residual),
            "samples": int(self.samples),
            "tolerance": float(self.tolerance),
        }
        if self.passed is False:
            out["witness"] = self.witness or {}
        if self.reason:
            out["reason"] = self.reason
        if not self.expected:
            out["expected"] = "fail"
        return out

    @classmethod
    def from_dict(cls, data: dict) -> Verdict:
        return cls(
            data["predicate"],
            data["component"],
            data["pass"],
            data["max_residual"],
            data["samples"],
            data["tolerance"],
            data.get("witness"),
            data.get("reason"),
            data.get("expected") != "fail",
        )

    @property
    def as_expected(self) -> bool:
        if self.passed is None:
            return True
        return self.passed == self.expected


def verdict_from(predicate, component, residuals, witnesses, tol, reason=None) -> Verdict:
    """Build a verdict from per-sample residuals; fail iff the max exceeds tol."""
    residuals = list(residuals)
    if not residuals:
        return Verdict(predicate, component, None, 0.0, 0, tol, reason=reason or "no samples")
    k = int(np.argmax(residuals))
    worst = float(residuals[k])
    passed = bool(worst <= tol)
    return Verdict(predicate, component, passed, worst, len(residuals), tol, None if passed else witnesses[k], reason)


@dataclass
class NijComponents:
    horizontal: np.ndarray
    vertical: VertVec
    vertical_covector: VertCovec
    extra: dict = field(default_factory=dict)


def _t_forms(gm: FieldGenMetric, point):
    m = gm.at(point)
    h = gm.dtheta(point).val
    torsion = np.einsum("al,ijl->ija", m.ginv, h)
    return m, h, torsion


def _bracket_parallel(torsion, a, b, n):
    """Courant bracket of sections that are parallel at the point (batched)."""
    x, al = a[..., :n], a[..., n:]
    y, be = b[..., :n], b[..., n:]
    vec = -np.einsum("...i,...j,ija->...a", x, y, torsion)
    # beta(i_X T) is the 1-form Z -> beta(T(X, Z))
    cov = np.einsum("...a,...i,iza->...z", be, x, torsion) - np.einsum("...a,...j,jza->...z", al, y, torsion)
    return np.concatenate([vec, cov], axis=-1)


def untransformed(fp: FiberPoint) -> np.ndarray:
    """The structure before the e^theta conjugation."""
    gm = fp.gm
    return b_field(-gm.theta) @ fp.structure @ b_field(gm.theta)


def horizontal_nijenhuis(gm: FieldGenMetric, point, fp: FiberPoint, a, b) -> np.ndarray:
    """Horizontal part of N_eps(A^h, B^h) from the torsion of the connection.

    ``a`` and ``b`` may carry leading batch axes.
    """
    m, h, torsion = _t_forms(gm, point)
    n = m.n
    k = untransformed(fp)
    ea = b_field(-m.theta)
    a0 = np.asarray(a) @ ea.T
    b0 = np.asarray(b) @ ea.T
    ka, kb = a0 @ k.T, b0 @ k.T

    def br(u, v):
        return _bracket_parallel(torsion, u, v, n)

    nk = -br(a0, b0) + br(ka, kb) - br(ka, b0) @ k.T - br(a0, kb) @ k.T

    def ii(u, v):
        # i_U i_V dtheta as a T + T* element, i.e. dtheta(V, U, .)
        cov = np.einsum("...j,...i,jil->...l", v[..., :n], u[..., :n], h)
        return np.concatenate([np.zeros_like(cov), cov], axis=-1)

    eth = b_field(m.theta)
    return (nk + (ii(ka, b0) + ii(a0, kb)) @ k.T) @ eth.T + ii(a0, b0) - ii(ka, kb)


def horizontal_nijenhuis_direct(gm: FieldGenMetric, point, fp: FiberPoint, a, b) -> np.ndarray:
    """Same quantity from the Courant bracket of a parallel extension."""
    ext = parallel_extension(gm, fp.j1, fp.j2, point)
    s = ext.jet1()
    n = gm.n
    return nijenhuis(s, SectionJet.constant(a, n), SectionJet.constant(b, n))


def curvature_on_pair(r: np.ndarray, x, y, fp: FiberPoint) -> VertVec:
    rxy = np.einsum("i,j,ijab->ab", x, y, r)
    return VertVec(rxy @ fp.j1 - fp.j1 @ rxy, rxy @ fp.j2 - fp.j2 @ rxy)


def vertical_nijenhuis(gm: FieldGenMetric, point, fp: FiberPoint, a, b, eps: int, r=None):
    """(vertical, vertical covector) parts of N_eps(A^h, B^h)."""
    n = gm.n
    if r is None:
        r = cv.riemann(gm, point, "torsion")
    ja, jb = fp.structure @ a, fp.structure @ b
    x, y, jx, jy = a[:n], b[:n], ja[:n], jb[:n]
    vert = (
        -curvature_on_pair(r, x, y, fp)
        + curvature_on_pair(r, jx, jy, fp)
        - k_eps(fp, curvature_on_pair(r, jx, y, fp), eps)
        - k_eps(fp, curvature_on_pair(r, x, jy, fp), eps)
    )
    om = omega_eps(fp, a, b, eps)
    return vert, VertCovec(-om.dual)


def nijenhuis_components(gm: FieldGenMetric, point, fp: FiberPoint, a, b, eps: int, r=None) -> NijComponents:
    vert, covec = vertical_nijenhuis(gm, point, fp, a, b, eps, r)
    return NijComponents(horizontal_nijenhuis(gm, point, fp, a, b), vert, covec)


def mixed_nijenhuis(fp: FiberPoint, a, v: VertVec, eps: int) -> np.ndarray:
    """Horizontal element with N_eps(A^h, V) = (that element)^h."""
    return -fp.full(k_eps(fp, v, eps)) @ a + fp.full(k_eps(fp, v, 1)) @ a


def mixed_covector_nijenhuis(
    gm: FieldGenMetric, point, fp: FiberPoint, a, b, phi: VertCovec, eps: int, r=None
) -> float:
    """<pi_* N_eps(A^h, phi), B> = -1/2 phi(vertical part of N_eps(A^h, B^h))."""
    vert, _ = vertical_nijenhuis(gm, point, fp, a, b, eps, r)
    return -0.5 * phi(vert)


def mixed_witness(gm: FieldGenMetric, point) -> dict[int, float]:
    """Residuals of the explicit non-integrability witnesses for eps = 2, 3, 4.

    With orthonormal bases Q', Q'' of E', E'' adapted to J and
    V = S_13 + S_42, the values are N(Q_1^h, V) = 2 Q_4^h on the relevant side.
    """
    m = gm.at(point)
    n = m.n
    frame = orthonormal_frame(m.g)
    finv = np.linalg.inv(frame)
    j = frame @ standard_complex(n) @ finv
    fp = FiberPoint(m, j, j)
    s = np.zeros((n, n))
    # S_ij Q_k = delta_ik Q_j - delta_kj Q_i, indices 0-based
    for i, jj in ((0, 2), (3, 1)):
        s[jj, i] += 1.0
        s[i, jj] -= 1.0
    gen = frame @ s @ finv
    zero = np.zeros((n, n))
    q1p, q4p = m.lift_plus @ frame[:, 0], m.lift_plus @ frame[:, 3]
    q1m, q4m = m.lift_minus @ frame[:, 0], m.lift_minus @ frame[:, 3]
    out = {}
    out[2] = float(np.abs(mixed_nijenhuis(fp, q1m, VertVec(zero, gen), 2) - 2 * q4m).max())
    out[3] = float(np.abs(mixed_nijenhuis(fp, q1p, VertVec(gen, zero), 3) - 2 * q4p).max())
    out[4] = float(np.abs(mixed_nijenhuis(fp, q1m, VertVec(zero, gen), 4) - 2 * q4m).max())
    return out


def wedge(x, y):
    return np.einsum("...a,...b->...ab", x, y) - np.einsum("...a,...b->...ab", y, x)


def bivector_form(rl: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """g(R(P), Q) for 2-vectors given as antisymmetric coefficient arrays."""
    return 0.25 * np.einsum("ijbd,...ij,...bd->...", rl, p, q)


def curvature_identity_residual(rl: np.ndarray, js: tuple, x, y, z, u, on_x: int, on_y: int, on_zu: int) -> np.ndarray:
    """|lhs - rhs| of the curvature identity; the indices (1 or 2) pick the structure acting on each slot."""
    jj, jl, jr = js[on_x - 1], js[on_y - 1], js[on_zu - 1]
    jx = x @ jj.T
    ly = y @ jl.T
    rz = z @ jr.T
    ru = u @ jr.T
    lhs = bivector_form(rl, wedge(x, y) - wedge(jx, ly), wedge(z, u) - wedge(rz, ru))
    rhs = bivector_form(rl, wedge(jx, y) + wedge(x, ly), wedge(rz, u) + wedge(z, ru))
    return np.abs(lhs - rhs)


def _dtheta_precondition(gm: FieldGenMetric, points, tol):
    worst, where = 0.0, None
    for p in points:
        v = float(np.abs(gm.dtheta(p).val).max())
        if v > worst:
            worst, where = v, p
    if worst > tol:
        return worst, {"point": [float(c) for c in where], "dtheta": worst}
    return None


def _fibers(gm: FieldGenMetric, point, component, sampling, tag, idx):
    m = gm.at(point)
    return [
        random_fiber_point(m, component, rng_for(sampling, tag, component, idx, f), gm.chart.orientation)
        for f in range(sampling.fibers)
    ]


def _probe_vectors(rng, count, n):
    return [rng.standard_normal((count, n)) for _ in range(4)]


def _not_applicable(name, component, sampling, reason):
    return Verdict(name, component, None, 0.0, 0, sampling.tol, reason=reason)


def curvature_identity_verdict(
    gm: FieldGenMetric, component: str, sampling: Sampling, name: str = "curvature_identity"
) -> Verdict:
    """Sample the curvature identity over points, fibre points and vectors."""
    points = gm.chart.lattice(sampling.points)
    pre = _dtheta_precondition(gm, points, sampling.tol)
    if pre:
        return Verdict(name, component, False, pre[0], 1, sampling.tol, pre[1], "d theta is not zero")
    n = gm.n

    def work(item):
        idx, p = item
        g = gm.jets(p)[0].val
        rl = cv.lower(cv.riemann(gm, p, "lc"), g)
        res, wit = [], []
        for f, fp in enumerate(_fibers(gm, p, component, sampling, name, idx)):
            rng = rng_for(sampling, name, "probe", component, idx, f)
            x, y, z, u = _probe_vectors(rng, sampling.probes, n)
            js = (fp.j1, fp.j2)
            best, best_at = 0.0, None
            for triple in itertools.product((1, 2), repeat=3):
                vals = curvature_identity_residual(rl, js, x, y, z, u, *triple)
                k = int(np.argmax(vals))
                if vals[k] > best or best_at is None:
                    best, best_at = float(vals[k]), (*triple, k)
            res.append(best)
            wit.append(
                {"point": [float(c) for c in p], "fiber": f, "structures": list(best_at[:3]), "probe": best_at[3]}
            )
        return res, wit

    out = fan_out(work, enumerate(points), sampling)
    residuals = [r for rs, _ in out for r in rs]
    witnesses = [w for _, ws in out for w in ws]
    return verdict_from(name, component, residuals, witnesses, sampling.tol)


def _curvature_samples(gm: FieldGenMetric, sampling: Sampling, metric_fn, name, component):
    points = gm.chart.lattice(sampling.points)

    def work(p):
        op = cv.curvature_operator(gm, p, "lc")
        return metric_fn(op, cv.decompose(op))

    vals = fan_out(work, points, sampling)
    witnesses = [{"point": [float(c) for c in p]} for p in points]
    return vals, witnesses, points


def same_orientation_predicate(gm: FieldGenMetric, component: str, sampling: Sampling) -> tuple[Verdict, Verdict]:
    """Integrability of J_1 on a same-orientation component, from curvature.

    Returns the curvature-based verdict and the independent verdict from
    sampling the pointwise curvature identity; the two are expected to agree.
    """
    name = "same_orientation"
    if component not in ("++", "--"):
        raise ValueError("same_orientation concerns the ++ and -- components")
    n = gm.n
    if n % 4 != 0:
        reason = "no verdict in dimension not divisible by 4"
        return _not_applicable(name, component, sampling, reason), _not_applicable(
            name + "_identity", component, sampling, reason
        )
    points = gm.chart.lattice(sampling.points)
    pre = _dtheta_precondition(gm, points, sampling.tol)
    if pre:
        v = Verdict(name, component, False, pre[0], 1, sampling.tol, pre[1], "d theta is not zero")
        return v, curvature_identity_verdict(gm, component, sampling, name + "_identity")

    def metric(op, dec):
        if n == 4:
            w = dec.weyl_plus if component == "++" else dec.weyl_minus
            return float(max(np.abs(dec.ricci).max(), np.abs(w).max()))
        return float(np.abs(op.matrix).max())

    vals, wit, _ = _curvature_samples(gm, sampling, metric, name, component)
    reason = None if n == 4 else "flatness criterion in dimension >= 8"
    return (
        verdict_from(name, component, vals, wit, sampling.tol, reason),
        curvature_identity_verdict(gm, component, sampling, name + "_identity"),
    )


def mixed_orientation_predicate(gm: FieldGenMetric, component: str, sampling: Sampling) -> tuple[Verdict, Verdict]:
    """Integrability of J_1 on a mixed component: constant sectional curvature."""
    name = "mixed_orientation"
    if component not in ("+-", "-+"):
        raise ValueError("mixed_orientation concerns the +- and -+ components")
    n = gm.n
    if n % 4 != 0:
        reason = "no verdict in dimension not divisible by 4"
        return _not_applicable(name, component, sampling, reason), _not_applicable(
            name + "_identity", component, sampling, reason
        )
    points = gm.chart.lattice(sampling.points)
    pre = _dtheta_precondition(gm, points, sampling.tol)
    if pre:
        v = Verdict(name, component, False, pre[0], 1, sampling.tol, pre[1], "d theta is not zero")
        return v, curvature_identity_verdict(gm, component, sampling, name + "_identity")

    def metric(op, dec):
        return float(np.abs(op.matrix - dec.scalar_part).max()), dec.scalar

    vals, wit, _ = _curvature_samples(gm, sampling, metric, name, component)
    s0 = vals[0][1]
    residuals = [max(r, abs(s - s0) / (n * (n - 1))) for r, s in vals]
    return (
        verdict_from(name, component, residuals, wit, sampling.tol),
        curvature_identity_verdict(gm, component, sampling, name + "_identity"),
    )


def curvature_compatibility(gm: FieldGenMetric, component: str, sampling: Sampling) -> Verdict:
    """g(R(X ^ Y), J_k Z ^ U + Z ^ J_k U) = 0 for k = 1, 2 on sampled data."""
    name = "curvature_compatibility"
    points = gm.chart.lattice(sampling.points)
    n = gm.n

    def work(item):
        idx, p = item
        g = gm.jets(p)[0].val
        rl = cv.lower(cv.riemann(gm, p, "lc"), g)
        res, wit = [], []
        for f, fp in enumerate(_fibers(gm, p, component, sampling, name, idx)):
            rng = rng_for(sampling, name, "probe", component, idx, f)
            x, y, z, u = _probe_vectors(rng, sampling.probes, n)
            best = 0.0
            for jk in (fp.j1, fp.j2):
                vals = np.abs(bivector_form(rl, wedge(x, y), wedge(z @ jk.T, u) + wedge(z, u @ jk.T)))
                best = max(best, float(vals.max()))
            res.append(best)
            wit.append({"point": [float(c) for c in p], "fiber": f})
        return res, wit

    out = fan_out(work, enumerate(points), sampling)
    return verdict_from(
        name, component, [r for rs, _ in out for r in rs], [w for _, ws in out for w in ws], sampling.tol
    )


def curvature_compatibility_expected(gm: FieldGenMetric, component: str, sampling: Sampling) -> Verdict:
    """Curvature-decomposition prediction for the previous condition (dimension 4)."""
    name = "curvature_compatibility_prediction"
    if gm.n != 4:
        return _not_applicable(name, component, sampling, "prediction stated for dimension 4")

    def metric(op, dec):
        if component == "++":
            return float(max(np.abs(dec.ricci).max(), np.abs(dec.weyl_plus).max()))
        if component == "--":
            return float(max(np.abs(dec.ricci).max(), np.abs(dec.weyl_minus).max()))
        return float(np.abs(op.matrix).max())

    vals, wit, _ = _curvature_samples(gm, sampling, metric, name, component)
    return verdict_from(name, component, vals, wit, sampling.tol)


def _equivalence_residual(gm, gm_hat, point, fp, rng, psi, probes):
    """Intertwining and Nijenhuis-transport residuals at one fibre point."""
    m_hat = gm_hat.at(point)
    jj = fp.structure
    jj_hat = conjugate(psi, jj)
    j1h, j2h = extract_pair(m_hat, jj_hat)
    fp_hat = FiberPoint(m_hat, j1h, j2h, fp.orientation)
    worst = 0.0
    worst = max(worst, float(np.abs(fp_hat.structure - jj_hat).max()))
    if classify_component(m_hat, jj_hat, fp.orientation) != fp.component:
        worst = max(worst, 1.0)
    e_psi, e_mpsi = b_field(psi), b_field(-psi)
    n = gm.n
    for _ in range(probes):
        h = rng.standard_normal(2 * n)
        v = random_vertical(fp, rng)
        u = random_vertical(fp, rng)
        vf, uf = fp.full(v), fp.full(u)
        # left: B o (e^psi J e^-psi), right: J_hat o B, all in T + T* matrices
        lh = e_psi @ jj @ e_mpsi @ h
        rh = fp_hat.structure @ h
        lv = e_psi @ (jj @ vf) @ e_mpsi
        v_hat = e_psi @ vf @ e_mpsi
        rv = fp_hat.structure @ v_hat
        lu = e_psi @ (jj @ uf) @ e_mpsi
        ru = fp_hat.structure @ (e_psi @ uf @ e_mpsi)
        worst = max(worst, float(np.abs(lh - rh).max()), float(np.abs(lv - rv).max()), float(np.abs(lu - ru).max()))
        # the transported vertical vector is vertical at the image point
        worst = max(worst, float(np.abs(v_hat @ fp_hat.structure + fp_hat.structure @ v_hat).max()))
        v_rep = VertVec(m_hat.pr_plus @ v_hat @ m_hat.lift_plus, m_hat.pr_minus @ v_hat @ m_hat.lift_minus)
        worst = max(worst, float(np.abs(fp_hat.full(v_rep) - v_hat).max()))
        # Nijenhuis components transported by e^psi
        a = rng.standard_normal(2 * n)
        b = rng.standard_normal(2 * n)
        nc = nijenhuis_components(gm, point, fp, a, b, 1)
        nh = nijenhuis_components(gm_hat, point, fp_hat, e_psi @ a, e_psi @ b, 1)
        worst = max(worst, float(np.abs(nh.horizontal - e_psi @ nc.horizontal).max()))
        worst = max(
            worst, (nh.vertical - nc.vertical).norm(), (nh.vertical_covector.dual - nc.vertical_covector.dual).norm()
        )
        mx = mixed_nijenhuis(fp, a, v, 1)
        mxh = mixed_nijenhuis(fp_hat, e_psi @ a, v_rep, 1)
        worst = max(worst, float(np.abs(mxh - e_psi @ mx).max()))
    return worst


def b_transform_equivalence(
    gm: FieldGenMetric, gm_hat: FieldGenMetric, sampling: Sampling, tangents: int | None = None
) -> Verdict:
    """Check that the closed 2-form psi = theta_hat - theta intertwines the structures."""
    name = "b_transform_equivalence"
    points = gm.chart.lattice(sampling.points)
    if np.any(np.abs(gm.jets(points[0])[0].val - gm_hat.jets(points[0])[0].val) > 1e-12):
        raise ValueError("equivalence needs the same metric on both sides")
    worst, where = 0.0, None
    for p in points:
        d = float(np.abs(gm_hat.dtheta(p).val - gm.dtheta(p).val).max())
        if d > worst:
            worst, where = d, p
    if worst > sampling.tol:
        return Verdict(
            name,
            None,
            False,
            worst,
            len(points),
            sampling.tol,
            {"point": [float(c) for c in where], "dpsi": worst},
            "psi is not closed",
        )
    total = tangents if tangents is not None else 200
    per_fiber = max(1, -(-total // (4 * len(points))))

    def work(item):
        idx, p = item
        psi = gm_hat.at(p).theta - gm.at(p).theta
        res, wit = [], []
        for comp in ("++", "+-", "-+", "--"):
            rng = rng_for(sampling, name, comp, idx)
            fp = random_fiber_point(gm.at(p), comp, rng, gm.chart.orientation)
            res.append(_equivalence_residual(gm, gm_hat, p, fp, rng, psi, per_fiber))
            wit.append({"point": [float(c) for c in p], "component": comp})
        return res, wit

    out = fan_out(work, enumerate(points), sampling)
    residuals = [r for rs, _ in out for r in rs]
    witnesses = [w for _, ws in out for w in ws]
    v = verdict_from(name, None, residuals, witnesses, sampling.tol)
    v.samples = len(residuals) * per_fiber
    return v
