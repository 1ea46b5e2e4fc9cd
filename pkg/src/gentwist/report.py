"""Verification suites over a manifold description and the report they produce."""

from __future__ import annotations

import json
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import curvature as cv
from . import expr as ex
from . import fields as fl
from . import integrability as ig
from .fiber import (
    fiber_metric,
    jeps_action,
    k_eps,
    random_fiber_point,
    random_tangent,
    random_vertical,
    vertical_pairing,
)
from .linalg import (
    COMPONENTS,
    classify_component,
    extract_pair,
    gen_complex_residuals,
    is_compatible,
    pairing_matrix,
    project,
    random_complex_structure,
    second_structure,
)
from .manifold_file import ManifoldSpec

REPORT_VERSION = 1
SUITES = ("linalg", "courant", "connection", "curvature", "twistor", "theorems", "equivalence")
CROSS_CHECK_TOL = 1e-5


@dataclass
class SuiteResult:
    name: str
    verdicts: list
    elapsed_ms: float | None = None

    def as_dict(self, timings: bool) -> dict:
        return {
            "name": self.name,
            "verdicts": [v.as_dict() for v in self.verdicts],
            "elapsed_ms": round(self.elapsed_ms, 3) if timings and self.elapsed_ms is not None else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> SuiteResult:
        return cls(data["name"], [ig.Verdict.from_dict(v) for v in data["verdicts"]], data.get("elapsed_ms"))


@dataclass
class Report:
    spec_hash: str
    seed: int
    suites: list = field(default_factory=list)
    version: int = REPORT_VERSION

    def as_dict(self, timings: bool = False) -> dict:
        return {
            "version": self.version,
            "spec_hash": self.spec_hash,
            "seed": self.seed,
            "suites": [s.as_dict(timings) for s in self.suites],
        }

    def to_json(self, timings: bool = False) -> str:
        return json.dumps(self.as_dict(timings), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> Report:
        return cls(data["spec_hash"], data["seed"], [SuiteResult.from_dict(s) for s in data["suites"]], data["version"])

    @classmethod
    def from_json(cls, text: str) -> Report:
        return cls.from_dict(json.loads(text))

    @property
    def ok(self) -> bool:
        return all(v.as_expected for s in self.suites for v in s.verdicts)

    def to_text(self) -> str:
        rows = [("suite", "predicate", "comp", "result", "max residual", "tol", "samples")]
        for s in self.suites:
            for v in s.verdicts:
                if v.passed is None:
                    result = "n/a"
                else:
                    result = "pass" if v.passed else "FAIL"
                    if not v.expected:
                        result += " (expected fail)" if not v.passed else " (expected fail!)"
                rows.append(
                    (
                        s.name,
                        v.predicate,
                        v.component or "-",
                        result,
                        f"{v.max_residual:.3e}",
                        f"{v.tolerance:.0e}",
                        str(v.samples),
                    )
                )
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths, strict=True)).rstrip() for r in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        bad = sum(not v.as_expected for s in self.suites for v in s.verdicts)
        lines.append("")
        lines.append("all verdicts as expected" if bad == 0 else f"{bad} verdict(s) not as expected")
        return "\n".join(lines) + "\n"


def _points(manifold: ManifoldSpec, sampling: ig.Sampling) -> np.ndarray:
    return manifold.chart.lattice(sampling.points)


def _pt(p) -> list:
    return [float(c) for c in p]


def _collect(name, component, items, tol):
    """items: list of (residual, witness)."""
    return ig.verdict_from(name, component, [r for r, _ in items], [w for _, w in items], tol)


def suite_linalg(manifold: ManifoldSpec, sampling: ig.Sampling) -> list:
    tol = 1e-9
    fm = manifold.metric
    checks = {
        k: []
        for k in (
            "assemble_invariants",
            "extract_roundtrip",
            "projection",
            "g_operator",
            "second_structure",
            "classification",
        )
    }
    for idx, p in enumerate(_points(manifold, sampling)):
        gm = fm.at(p)
        n = gm.n
        scale = max(1.0, float(np.abs(gm.g).max()), float(np.abs(gm.theta).max()))
        rng = ig.rng_for(sampling, "linalg", idx)
        for comp in COMPONENTS:
            w = {"point": _pt(p), "component": comp}
            fp = random_fiber_point(gm, comp, rng, manifold.chart.orientation)
            jj = fp.structure
            # entries of jj grow with g and theta, so measure relative to that size
            jscale = max(1.0, float(np.abs(jj).max()))
            res = gen_complex_residuals(jj)
            leak = 0.0 if is_compatible(gm, jj, tol * jscale * scale) else 1.0
            checks["assemble_invariants"].append((max(res.values()) / jscale**2 + leak, w))
            e1, e2 = extract_pair(gm, jj)
            checks["extract_roundtrip"].append(
                (max(np.abs(e1 - fp.j1).max(), np.abs(e2 - fp.j2).max()) / (jscale * scale), w)
            )
            got = classify_component(gm, jj, manifold.chart.orientation)
            checks["classification"].append((0.0 if got == comp else 1.0, {**w, "got": got}))
            second = second_structure(gm, jj)
            sres = gen_complex_residuals(second)
            comm = float(np.abs(second @ jj - jj @ second).max())
            checks["second_structure"].append((max(max(sres.values()), comm) / (jscale * scale) ** 2, w))
        a = rng.standard_normal(2 * n)
        plus, minus = project(gm, a)
        go = gm.g_operator
        proj = (
            max(
                float(np.abs(plus + minus - a).max()),
                float(np.abs(go @ plus - plus).max()),
                float(np.abs(go @ minus + minus).max()),
            )
            / scale**2
        )
        checks["projection"].append((proj, {"point": _pt(p)}))
        pm = pairing_matrix(n)
        gres = max(float(np.abs(go @ go - np.eye(2 * n)).max()), float(np.abs(go.T @ pm - pm @ go).max()))
        checks["g_operator"].append((gres / scale**2, {"point": _pt(p)}))
    return [_collect(k, None, v, tol) for k, v in checks.items()]


def random_polynomial(rng: np.random.Generator, coords, degree: int = 2) -> ex.Expr:
    """Random polynomial of the given degree, built through the parser."""
    n = len(coords)
    terms = [f"{rng.normal():.6f}"]
    for i in range(n):
        terms.append(f"{rng.normal():.6f}*{coords[i]}")
    if degree >= 2:
        for i in range(n):
            for j in range(i, n):
                if rng.random() < 0.5:
                    terms.append(f"{rng.normal():.6f}*{coords[i]}*{coords[j]}")
    return ex.parse(" + ".join(terms), coords)


def random_section(rng, coords) -> fl.FieldGenSection:
    return fl.FieldGenSection([random_polynomial(rng, coords) for _ in range(2 * len(coords))])


def courant_identities(manifold: ManifoldSpec, sampling: ig.Sampling, triples: int) -> dict[str, list]:
    coords = manifold.chart.coords
    n = manifold.chart.n
    points = _points(manifold, sampling)
    out = {k: [] for k in ("leibniz", "b_symmetry", "naturality", "invariance")}
    for t in range(triples):
        rng = ig.rng_for(sampling, "courant", t)
        p = points[t % len(points)]
        a, b, c = (random_section(rng, coords) for _ in range(3))
        f = random_polynomial(rng, coords)
        theta = manifold.metric.jets(p)[1]
        affine = rng.standard_normal((n, n)) + 2 * np.eye(n)
        res = fl.courant_props_check(a, b, c, f, theta, p, affine)
        for k, v in res.items():
            out[k].append((v, {"point": _pt(p), "triple": t}))
    return out


def suite_courant(manifold: ManifoldSpec, sampling: ig.Sampling) -> list:
    tol = 1e-8
    triples = max(sampling.points, 2 * sampling.probes)
    out = courant_identities(manifold, sampling, triples)
    verdicts = [_collect(k, None, v, tol) for k, v in out.items()]
    # a constant complex structure is integrable
    n = manifold.chart.n
    rng = ig.rng_for(sampling, "courant", "examples")
    items = []
    for p in _points(manifold, sampling):
        j = random_complex_structure(np.eye(n), rng)
        const = fl.EndoJet(np.block([[j, np.zeros((n, n))], [np.zeros((n, n)), -j.T]]), np.zeros((2 * n, 2 * n, n)))
        a = random_section(rng, manifold.chart.coords)
        b = random_section(rng, manifold.chart.coords)
        items.append((float(np.abs(fl.nijenhuis_field(const, a, b, p)).max()), {"point": _pt(p)}))
    verdicts.append(_collect("constant_complex_integrable", None, items, tol))
    return verdicts


def suite_connection(manifold: ManifoldSpec, sampling: ig.Sampling) -> list:
    fm = manifold.metric
    n = fm.n
    checks = {
        k: []
        for k in (
            "torsion_identity",
            "courant_connection",
            "averaged_connection",
            "d_metric_compatible",
            "d_closed_forms",
        )
    }
    pm = pairing_matrix(n)
    for idx, p in enumerate(_points(manifold, sampling)):
        w = {"point": _pt(p)}
        rng = ig.rng_for(sampling, "connection", idx)
        gm = fm.at(p)
        plus, torsion, minus = fl.torsion_connection(fm, p)
        h = fm.dtheta(p).val
        checks["torsion_identity"].append((float(np.abs(np.einsum("ija,al->ijl", torsion, gm.g) - h).max()), w))
        cp = fl.courant_christoffel(fm, p, "+")
        cm = fl.courant_christoffel(fm, p, "-")
        lc = fl.christoffel(fm, p, "lc")
        sec = fl.FieldVector([random_polynomial(rng, fm.chart.coords) for _ in range(n)])
        s_jet = fl.lift_jet(fm, sec, p, "+")
        z = rng.standard_normal(n)
        checks["courant_connection"].append(
            (max(float(np.abs(cp - plus.gamma).max()), fl.courant_connection_check(fm, z, s_jet, p)), w)
        )
        checks["averaged_connection"].append((float(np.abs(0.5 * (cp + cm) - lc).max()), w))
        a = random_section(rng, fm.chart.coords).jet1(p)
        b = random_section(rng, fm.chart.coords).jet1(p)
        lhs = z @ (a.jac.T @ pm @ b.val + b.jac.T @ pm @ a.val)
        rhs = fl.connection_D(fm, z, a, p) @ pm @ b.val + a.val @ pm @ fl.connection_D(fm, z, b, p)
        checks["d_metric_compatible"].append((abs(float(lhs - rhs)), w))
        checks["d_closed_forms"].append((d_closed_form_residual(fm, p, z, rng), w))
    return [_collect(k, None, v, 1e-8 if k != "courant_connection" else 1e-6) for k, v in checks.items()]


def d_closed_form_residual(fm: fl.FieldGenMetric, p, z, rng) -> float:
    """Compare D on constant vectors and covectors with the closed expressions."""
    n = fm.n
    gamma = fl.christoffel(fm, p, "torsion")
    tj = fm.jets(p)[1]
    x = rng.standard_normal(n)
    alpha = rng.standard_normal(n)
    # (nabla_Z theta)_{jk} = d_Z theta_jk - gamma^l_{Zj} theta_lk - gamma^l_{Zk} theta_jl
    zg = np.einsum("i,iab->ab", z, gamma)
    nabla_theta = tj.grad @ z - zg.T @ tj.val - tj.val @ zg
    dx = fl.connection_D(fm, z, fl.SectionJet.constant(np.concatenate([x, np.zeros(n)]), n), p)
    want_x = np.concatenate([zg @ x, -nabla_theta.T @ x])
    da = fl.connection_D(fm, z, fl.SectionJet.constant(np.concatenate([np.zeros(n), alpha]), n), p)
    want_a = np.concatenate([np.zeros(n), -zg.T @ alpha])
    return float(max(np.abs(dx - want_x).max(), np.abs(da - want_a).max()))


def suite_curvature(manifold: ManifoldSpec, sampling: ig.Sampling) -> list:
    fm = manifold.metric
    checks = {
        k: [] for k in ("decomposition_reassembly", "decomposition_orthogonal", "weyl_trace_free", "first_bianchi")
    }
    for p in _points(manifold, sampling):
        w = {"point": _pt(p)}
        op = cv.curvature_operator(fm, p)
        dec = cv.decompose(op)
        checks["decomposition_reassembly"].append((dec.reassembly_residual(op), w))
        parts = (dec.scalar_part, dec.ricci_part, dec.weyl)
        ortho = max(abs(float(np.sum(parts[i] * parts[j]))) for i in range(3) for j in range(i + 1, 3))
        checks["decomposition_orthogonal"].append((ortho, w))
        # Ricci contraction of the Weyl part in the orthonormal frame
        wt = np.zeros_like(op.frame_tensor)
        for r, (a, b) in enumerate(op.pairs):
            for c_, (c, d) in enumerate(op.pairs):
                val = dec.weyl[r, c_]
                wt[a, b, c, d] = val
                wt[b, a, c, d] = -val
                wt[a, b, d, c] = -val
                wt[b, a, d, c] = val
        checks["weyl_trace_free"].append((float(np.abs(np.einsum("abac->bc", wt)).max()), w))
        rf = op.frame_tensor
        bianchi = rf + np.einsum("jkil->ijkl", rf) + np.einsum("kijl->ijkl", rf)
        checks["first_bianchi"].append((float(np.abs(bianchi).max()), w))
    return [_collect(k, None, v, 1e-8) for k, v in checks.items()]


def suite_twistor(manifold: ManifoldSpec, sampling: ig.Sampling) -> list:
    fm = manifold.metric
    n = fm.n
    tol = sampling.tol
    points = _points(manifold, sampling)
    verdicts = []

    def per_point(item):
        idx, p = item
        gm = fm.at(p)
        r = cv.riemann(fm, p, "torsion")
        out = {}
        for comp in COMPONENTS:
            rows = {
                k: []
                for k in (
                    "jeps_structure",
                    "k1_intertwining",
                    "horizontal_nijenhuis_vanishes",
                    "horizontal_cross_check",
                    "mixed_nijenhuis_eps1",
                    "vertical_nijenhuis_eps1",
                )
            }
            for f in range(sampling.fibers):
                rng = ig.rng_for(sampling, "twistor", comp, idx, f)
                fp = random_fiber_point(gm, comp, rng, manifold.chart.orientation)
                w = {"point": _pt(p), "component": comp, "fiber": f}
                t = random_tangent(fp, rng)
                s = random_tangent(fp, rng)
                worst = 0.0
                for eps in (1, 2, 3, 4):
                    tt = jeps_action(fp, jeps_action(fp, t, eps), eps)
                    worst = max(
                        worst,
                        float(np.abs(tt.h + t.h).max()),
                        (tt.v + t.v).norm(),
                        (tt.vstar.dual + t.vstar.dual).norm(),
                    )
                    kv, ks = k_eps(fp, t.v, eps), k_eps(fp, s.v, eps)
                    worst = max(worst, abs(fiber_metric(kv, ks) - fiber_metric(t.v, s.v)))
                    jt, js = jeps_action(fp, t, eps), jeps_action(fp, s, eps)
                    worst = max(worst, abs(vertical_pairing(jt, s) + vertical_pairing(t, js)))
                rows["jeps_structure"].append((worst, w))
                v = t.v
                rows["k1_intertwining"].append(
                    (float(np.abs(fp.full(k_eps(fp, v, 1)) - fp.structure @ fp.full(v)).max()), w)
                )
                a_all = rng.standard_normal((sampling.probes, 2 * n))
                b_all = rng.standard_normal((sampling.probes, 2 * n))
                hn = ig.horizontal_nijenhuis(fm, p, fp, a_all, b_all)
                hmax = float(np.abs(hn).max())
                direct = ig.horizontal_nijenhuis_direct(fm, p, fp, a_all[0], b_all[0])
                cmax = float(np.abs(hn[0] - direct).max())
                mmax, vmax = 0.0, 0.0
                for q in range(min(4, sampling.probes)):
                    vv = random_vertical(fp, rng)
                    mmax = max(mmax, float(np.abs(ig.mixed_nijenhuis(fp, a_all[q], vv, 1)).max()))
                    vert, covec = ig.vertical_nijenhuis(fm, p, fp, a_all[q], b_all[q], 1, r)
                    vmax = max(vmax, vert.norm(), covec.dual.norm())
                rows["horizontal_nijenhuis_vanishes"].append((hmax, w))
                rows["horizontal_cross_check"].append((cmax, w))
                rows["mixed_nijenhuis_eps1"].append((mmax, w))
                rows["vertical_nijenhuis_eps1"].append((vmax, w))
            out[comp] = rows
        pw = ig.mixed_witness(fm, p)
        return out, (max(pw.values()), {"point": _pt(p)})

    results = ig.fan_out(per_point, enumerate(points), sampling)
    for comp in COMPONENTS:
        names = results[0][0][comp].keys()
        for name in names:
            items = [it for res, _ in results for it in res[comp][name]]
            verdicts.append(_collect(name, comp, items, CROSS_CHECK_TOL if name == "horizontal_cross_check" else tol))
    verdicts.append(_collect("mixed_witness", None, [w for _, w in results], 1e-9))
    return verdicts


def _agreement(first: ig.Verdict, second: ig.Verdict) -> ig.Verdict:
    agree = first.passed == second.passed
    return ig.Verdict(
        first.predicate + "_agreement",
        first.component,
        agree,
        0.0 if agree else 1.0,
        1,
        0.5,
        None if agree else {first.predicate: first.passed, second.predicate: second.passed},
    )


def suite_theorems(manifold: ManifoldSpec, sampling: ig.Sampling) -> list:
    verdicts = []
    for comp in ("++", "--"):
        a, b = ig.same_orientation_predicate(manifold.metric, comp, sampling)
        verdicts += [a, b, _agreement(a, b)]
    for comp in ("+-", "-+"):
        a, b = ig.mixed_orientation_predicate(manifold.metric, comp, sampling)
        verdicts += [a, b, _agreement(a, b)]
    return verdicts


def suite_equivalence(manifold: ManifoldSpec, sampling: ig.Sampling, against: ManifoldSpec | None = None) -> list:
    other = against if against is not None else manifold.without_theta()
    verdicts = [ig.b_transform_equivalence(manifold.metric, other.metric, sampling)]
    verdicts[0].tolerance = max(verdicts[0].tolerance, 1e-7)
    for comp in COMPONENTS:
        a = ig.curvature_compatibility(manifold.metric, comp, sampling)
        b = ig.curvature_compatibility_expected(manifold.metric, comp, sampling)
        verdicts += [a, b, _agreement(a, b)]
    return verdicts


_RUNNERS = {
    "linalg": suite_linalg,
    "courant": suite_courant,
    "connection": suite_connection,
    "curvature": suite_curvature,
    "twistor": suite_twistor,
    "theorems": suite_theorems,
}


def run_suite(manifold: ManifoldSpec, suites, sampling: ig.Sampling, against: ManifoldSpec | None = None) -> Report:
    report = Report(manifold.spec_hash, sampling.seed)
    for name in suites:
        if name not in SUITES:
            raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
        start = time.perf_counter()
        if name == "equivalence":
            verdicts = suite_equivalence(manifold, sampling, against)
        else:
            verdicts = _RUNNERS[name](manifold, sampling)
        for v in verdicts:
            v.expected = manifold.expected_pass(name, v.predicate, v.component)
        report.suites.append(SuiteResult(name, verdicts, 1000.0 * (time.perf_counter() - start)))
    return report


def emit_report(report: Report, fmt: str = "text", path: str | None = None, timings: bool = False) -> None:
    """Write the report as a text table or JSON to ``path``, or to stdout when it is None or '-'."""
    if fmt not in ("text", "json"):
        raise ValueError(f"unknown report format {fmt!r}; choose text or json")
    body = report.to_text() if fmt == "text" else report.to_json(timings)
    if path is None or path == "-":
        sys.stdout.write(body)
        return
    with open(path, "w") as fh:
        fh.write(body)
