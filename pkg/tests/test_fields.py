import numpy as np
import pytest

from gentwist import expr as ex
from gentwist import fields as fl
from gentwist import linalg as la
from oracles import array_fn, christoffel_fd, courant_fd, fd_gradient, metric_fn, nijenhuis_fd

C4 = ("x1", "x2", "x3", "x4")
C2 = ("x1", "x2")


def chart(coords=C4, lo=-1.0, hi=1.0):
    return fl.Chart(coords, [[lo, hi]] * len(coords))


def section(texts, coords=C4):
    return fl.FieldGenSection([ex.parse(t, coords) for t in texts])


def flat_metric(theta_entries=None, n=4, coords=C4):
    g = [["1" if i == j else "0" for j in range(n)] for i in range(n)]
    theta = [["0"] * n for _ in range(n)]
    for (i, j), t in (theta_entries or {}).items():
        theta[i][j] = t
        theta[j][i] = f"-({t})"
    return fl.FieldGenMetric.from_text(chart(coords), g, theta)


CURVED_G = [
    ["1 + 0.2*x1^2", "0.1*x2", "0", "0.05*x1*x3"],
    ["0.1*x2", "2 + sin(x3)", "0.1*x4", "0"],
    ["0", "0.1*x4", "1.5 + 0.1*x1*x2", "0"],
    ["0.05*x1*x3", "0", "0", "1 + 0.3*x4^2"],
]
CURVED_THETA = {(0, 1): "x3*x4", (1, 2): "sin(x1)", (0, 3): "x2^2", (2, 3): "0.5*x1*x2"}


def curved_metric():
    n = 4
    theta = [["0"] * n for _ in range(n)]
    for (i, j), t in CURVED_THETA.items():
        theta[i][j] = t
        theta[j][i] = f"-({t})"
    return fl.FieldGenMetric.from_text(chart(), CURVED_G, theta)


def theta_fn():
    texts = [["0"] * 4 for _ in range(4)]
    for (i, j), t in CURVED_THETA.items():
        texts[i][j] = t
        texts[j][i] = f"-({t})"
    return metric_fn(texts, C4)


class TestChart:
    def test_lattice_deterministic_and_inside(self):
        c = fl.Chart(C2, [[0.0, 2.0], [-1.0, 1.0]])
        pts = c.lattice(16)
        assert np.array_equal(pts, c.lattice(16))
        assert np.allclose(pts[0], [1.0, 0.0])
        assert np.all(pts > c.box[:, 0]) and np.all(pts < c.box[:, 1])
        assert len({tuple(p) for p in pts}) == 16

    def test_rejects_bad_box(self):
        with pytest.raises(ValueError):
            fl.Chart(C2, [[1.0, 0.0], [0.0, 1.0]])


class TestBrackets:
    def test_lie_bracket(self):
        p = np.array([1.0, 1.0])
        d1, d2 = fl.FieldVector(["1", "0"]), fl.FieldVector(["0", "1"])
        parse = lambda ts: fl.FieldVector([ex.parse(t, C2) for t in ts])  # noqa: E731
        assert np.allclose(fl.lie_bracket(parse(d1.exprs), parse(d2.exprs), p), 0)
        assert np.allclose(fl.lie_bracket(parse(["1", "0"]), parse(["0", "x1"]), p), [0, 1])
        assert np.allclose(fl.lie_bracket(parse(["x2", "0"]), parse(["0", "x1"]), p), [-1, 1])

    def test_exterior_derivative(self):
        p = np.array([0.3, -0.2, 0.5, 0.1])
        one = fl.eval_tensor(np.array([ex.parse(t, C4) for t in ("0", "x1", "0", "0")], dtype=object), p)
        d1 = fl.exterior_d(one).val
        expected = np.zeros((4, 4))
        expected[0, 1], expected[1, 0] = 1, -1
        assert np.allclose(d1, expected)
        area = flat_metric({(0, 1): "1"}).jets(p)[1]
        assert np.allclose(fl.exterior_d(area).val, 0)
        h = flat_metric({(1, 2): "x1"}).dtheta(p).val
        assert h[0, 1, 2] == pytest.approx(1.0)
        assert h[1, 0, 2] == pytest.approx(-1.0) and h[2, 1, 0] == pytest.approx(-1.0)
        assert np.count_nonzero(np.abs(h) > 1e-12) == 6

    def test_courant_examples(self):
        p = np.array([0.4, -0.3])
        d1 = section(["1", "0", "0", "0"], C2)
        x1dx2 = section(["0", "0", "0", "x1"], C2)
        x2dx1 = section(["0", "0", "x2", "0"], C2)
        d2 = section(["0", "1", "0", "0"], C2)
        assert np.allclose(fl.courant_bracket(d1, x1dx2, p), [0, 0, 0, 1])
        assert np.allclose(fl.courant_bracket(x2dx1, d2, p), [0, 0, -1, 0])
        const = section(["1", "2", "3", "4"], C2)
        assert np.allclose(fl.courant_bracket(const, d1, p), 0)

    def test_courant_against_differences(self, rng):
        for _ in range(5):
            texts_a = [
                f"{rng.normal():.3f}*x1*x2 + {rng.normal():.3f}*sin(x3) + {rng.normal():.3f}*x4^2" for _ in range(8)
            ]
            texts_b = [f"{rng.normal():.3f}*exp(0.3*x1) + {rng.normal():.3f}*x2*x3*x4" for _ in range(8)]
            p = rng.uniform(-0.5, 0.5, 4)
            got = fl.courant_bracket(section(texts_a), section(texts_b), p)
            ref = courant_fd(array_fn(texts_a, C4), array_fn(texts_b, C4), p)
            assert np.abs(got - ref).max() < 1e-7

    def test_antisymmetry(self, rng):
        p = rng.uniform(-0.5, 0.5, 4)
        a = section([f"{rng.normal():.3f}*x{k % 4 + 1}^2" for k in range(8)])
        b = section([f"{rng.normal():.3f}*x{(k + 1) % 4 + 1}*x1" for k in range(8)])
        assert np.abs(fl.courant_bracket(a, b, p) + fl.courant_bracket(b, a, p)).max() == 0.0

    def test_b_transform_defect(self):
        # [e^theta A, e^theta B] - e^theta [A, B] = -i_X i_Y d theta, here -d theta(d3, d2, .) = dx1
        p = np.array([0.2, 0.1, -0.3, 0.4])
        theta = flat_metric({(1, 2): "x1"}).jets(p)[1]
        d2 = fl.constant_section(np.eye(8)[1])
        d3 = fl.constant_section(np.eye(8)[2])
        ea, eb = fl.b_transform_jet(theta, d2), fl.b_transform_jet(theta, d3)
        defect = fl.courant(ea, eb) - fl.courant(d2, d3)
        assert np.allclose(defect, [0, 0, 0, 0, 1, 0, 0, 0])


class TestNijenhuis:
    def test_constant_complex_structure(self, rng):
        j = la.random_complex_structure(np.eye(4), rng)
        jj = fl.EndoJet(la.from_complex(j), np.zeros((8, 8, 4)))
        for _ in range(5):
            p = rng.uniform(-1, 1, 4)
            a = section([f"{rng.normal():.3f}*x1*x{k % 4 + 1}" for k in range(8)])
            b = section([f"{rng.normal():.3f}*sin(x{k % 4 + 1})" for k in range(8)])
            assert np.abs(fl.nijenhuis_field(jj, a, b, p)).max() < 1e-12

    def test_closed_symplectic_form_is_integrable(self, rng):
        omega = np.full((4, 4), ex.Num(0.0), dtype=object)
        omega[0, 1], omega[1, 0] = ex.parse("exp(x1)", C4), ex.parse("-exp(x1)", C4)
        omega[2, 3], omega[3, 2] = ex.Num(1.0), ex.Num(-1.0)
        field = fl.symplectic_field(omega)
        p = rng.uniform(-1, 1, 4)
        eye = np.eye(8)
        worst = max(
            float(np.abs(fl.nijenhuis(field.jet1(p), fl.constant_section(eye[i]), fl.constant_section(eye[k]))).max())
            for i in range(8)
            for k in range(8)
        )
        assert worst < 1e-12

    def test_non_closed_form_against_differences(self):
        texts = [["0", "exp(x3)", "0", "0"], ["-exp(x3)", "0", "0", "0"], ["0", "0", "0", "1"], ["0", "0", "-1", "0"]]
        omega = np.array([[ex.parse(t, C4) for t in row] for row in texts], dtype=object)
        field = fl.symplectic_field(omega)
        w_fn = metric_fn(texts, C4)
        j_fn = lambda q: la.from_symplectic(w_fn(q))  # noqa: E731
        p = np.array([0.1, 0.2, 0.3, -0.4])
        eye = np.eye(8)
        worst = 0.0
        for i, k in ((0, 2), (0, 1), (4, 6), (2, 5)):
            got = fl.nijenhuis(field.jet1(p), fl.constant_section(eye[i]), fl.constant_section(eye[k]))
            ref = nijenhuis_fd(j_fn, lambda q, i=i: eye[i], lambda q, k=k: eye[k], p)
            assert np.abs(got - ref).max() < 1e-6
            worst = max(worst, float(np.abs(got).max()))
        assert worst > 1e-3

    def test_holomorphic_bivector(self):
        j = la.standard_complex(4)
        u, v = np.array([1, -1j, 0, 0]), np.array([0, 0, 1, -1j])
        jj = la.from_complex_bivector(j, 0.8 * (np.outer(u, v) - np.outer(v, u)))
        field = fl.EndoJet(jj, np.zeros((8, 8, 4)))
        p = np.array([0.3, 0.1, -0.2, 0.5])
        a = section(["x1*x2", "x3", "0", "x4^2", "x1", "0", "x2*x3", "1"])
        b = section(["sin(x4)", "0", "x1*x3", "0", "0", "x2", "1", "x1^2"])
        assert np.abs(fl.nijenhuis_field(field, a, b, p)).max() < 1e-12

    def test_tensorial(self, rng):
        texts = [["0", "exp(x3)", "0", "0"], ["-exp(x3)", "0", "0", "0"], ["0", "0", "0", "1"], ["0", "0", "-1", "0"]]
        field = fl.symplectic_field(np.array([[ex.parse(t, C4) for t in row] for row in texts], dtype=object))
        p = rng.uniform(-0.5, 0.5, 4)
        a = section([f"{rng.normal():.3f}*x{k % 4 + 1}" for k in range(8)]).jet1(p)
        b = section([f"{rng.normal():.3f}*x1*x{k % 4 + 1}" for k in range(8)]).jet1(p)
        f = ex.eval_jet(ex.parse("1 + x1*x2 + sin(x3)", C4), p)
        nab = fl.nijenhuis(field.jet1(p), a, b)
        nafb = fl.nijenhuis(field.jet1(p), a, fl.scale(f, b))
        assert np.abs(nafb - f.val * nab).max() < 1e-8


class TestConnections:
    def test_levi_civita_flat_and_sphere_origin(self):
        assert np.allclose(fl.christoffel(flat_metric(), np.zeros(4)), 0)
        sphere = [["4/(1+x1^2+x2^2+x3^2+x4^2)^2" if i == j else "0" for j in range(4)] for i in range(4)]
        gm = fl.FieldGenMetric.from_text(chart(), sphere)
        assert np.abs(fl.christoffel(gm, np.zeros(4))).max() < 1e-14

    def test_levi_civita_against_differences(self):
        gm = curved_metric()
        p = np.array([0.2, -0.3, 0.4, 0.1])
        ref = christoffel_fd(metric_fn(CURVED_G, C4), p)
        assert np.abs(fl.christoffel(gm, p, "lc") - ref).max() < 1e-8

    def test_metric_compatibility(self):
        gm = curved_metric()
        p = np.array([0.2, -0.3, 0.4, 0.1])
        g, dg = gm.jets(p)[0].val, gm.jets(p)[0].grad
        for kind in ("lc", "torsion", "torsion_minus"):
            gamma = fl.christoffel(gm, p, kind)
            # d_k g_ab = g(nabla_k d_a, d_b) + g(d_a, nabla_k d_b)
            lhs = np.einsum("abk->kab", dg)
            rhs = np.einsum("kca,cb->kab", gamma, g) + np.einsum("ac,kcb->kab", g, gamma)
            assert np.abs(lhs - rhs).max() < 1e-12

    def test_torsion_example(self):
        plus, torsion, minus = fl.torsion_connection(flat_metric({(1, 2): "x1"}), np.zeros(4))
        assert np.allclose(torsion[0, 1], [0, 0, 1, 0])
        assert np.allclose(minus.torsion()[0, 1], [0, 0, -1, 0])

    def test_torsion_identity_and_average(self):
        gm = curved_metric()
        for p in chart().lattice(5):
            plus, torsion, minus = fl.torsion_connection(gm, p)
            g = gm.jets(p)[0].val
            h = gm.dtheta(p).val
            assert np.abs(np.einsum("ija,az->ijz", torsion, g) - h).max() < 1e-12
            lc = fl.christoffel(gm, p, "lc")
            assert np.abs(0.5 * (plus.gamma + minus.gamma) - lc).max() < 1e-12

    def test_closed_theta_gives_levi_civita(self):
        gm = flat_metric({(0, 1): "x3", (1, 2): "-x1"})  # d(x3 dx1^dx2 - x1 dx2^dx3) = 0
        p = np.array([0.1, 0.2, 0.3, 0.4])
        assert np.abs(fl.christoffel(gm, p, "torsion")).max() < 1e-14

    def test_d_of_coordinate_vector(self):
        gm = flat_metric({(1, 2): "x1"})
        d2 = fl.constant_section(np.eye(8)[1])
        got = fl.connection_D(gm, np.eye(4)[0], d2, np.zeros(4))
        assert np.allclose(got, [0, 0, 0.5, 0, 0, 0, -1, 0])

    def test_d_on_vectors_and_forms_against_oracle(self, rng):
        """D X = nabla X - (nabla theta)(X) and D alpha = nabla alpha, by differences."""
        gm = curved_metric()
        g_fn, t_fn = metric_fn(CURVED_G, C4), theta_fn()
        p = np.array([0.1, -0.2, 0.3, 0.2])
        h = fd_gradient(t_fn, p)  # h[a, b, k] = d_k theta_ab
        lc = christoffel_fd(g_fn, p)
        ginv = np.linalg.inv(g_fn(p))
        dth = np.einsum("bck->kbc", h)
        dtheta = dth - np.einsum("kbc->bkc", dth) + np.einsum("kbc->bck", dth)
        gamma = lc + 0.5 * np.einsum("al,ibl->iab", ginv, dtheta)
        theta = t_fn(p)
        # (nabla_k theta)(d_a, d_b)
        nabla_theta = (
            np.einsum("abk->kab", h) - np.einsum("kca,cb->kab", gamma, theta) - np.einsum("ac,kcb->kab", theta, gamma)
        )
        eye = np.eye(8)
        for z in (np.eye(4)[0], rng.standard_normal(4)):
            for b in range(4):
                dx = fl.connection_D(gm, z, fl.constant_section(eye[b]), p)
                vec = np.einsum("i,ia->a", z, gamma[:, :, b])
                cov = -np.einsum("k,kc->c", z, nabla_theta[:, b, :])
                assert np.abs(dx - np.concatenate([vec, cov])).max() < 1e-7
                da = fl.connection_D(gm, z, fl.constant_section(eye[4 + b]), p)
                # nabla_Z dx^b = -gamma[i, b, c] z^i dx^c
                assert np.abs(da - np.concatenate([np.zeros(4), -np.einsum("i,ic->c", z, gamma[:, b, :])])).max() < 1e-7

    def test_d_is_metric_and_preserves_subbundles(self, rng):
        gm = curved_metric()
        p = np.array([0.3, 0.2, -0.1, 0.0])
        m = gm.at(p)
        c = fl.d_connection_matrices(gm, p)
        pm = la.pairing_matrix(4)
        go = m.g_operator
        for k in range(4):
            assert np.abs(c[k].T @ pm + pm @ c[k]).max() < 1e-12
            # D commutes with the metric operator, so d_k G = G C_k - C_k G
            dgo = fd_gradient(lambda q: gm.at(q).g_operator, p)[..., k]
            assert np.abs(dgo - (go @ c[k] - c[k] @ go)).max() < 1e-7

    def test_courant_connection(self):
        gm = flat_metric({(1, 2): "x1"})
        for p in (np.zeros(4), np.array([0.3, -0.2, 0.1, 0.5])):
            s = fl.JetField(lambda q, gm=gm: fl.lift_jet(gm, np.eye(4)[1], q, "+"))
            for z in np.eye(4):
                assert fl.courant_connection_check(gm, z, s, p) < 1e-7
        conformal = fl.FieldGenMetric.from_text(
            chart(), [["(1 + 0.3*x1^2 + 0.2*x2*x3)^2" if i == j else "0" for j in range(4)] for i in range(4)]
        )
        p = np.array([0.2, 0.3, -0.1, 0.4])
        s = fl.JetField(
            lambda q: fl.lift_jet(
                conformal, fl.FieldVector([ex.parse(t, C4) for t in ("x2", "1", "x1*x3", "0")]), q, "+"
            )
        )
        assert fl.courant_connection_check(conformal, np.array([1.0, 0.5, -0.2, 0.3]), s, p) < 1e-6

    def test_courant_christoffel_matches_closed_form(self):
        gm = curved_metric()
        p = np.array([0.1, 0.2, 0.3, 0.4])
        assert np.abs(fl.courant_christoffel(gm, p, "+") - fl.christoffel(gm, p, "torsion")).max() < 1e-10
        assert np.abs(fl.courant_christoffel(gm, p, "-") - fl.christoffel(gm, p, "torsion_minus")).max() < 1e-10


class TestParallelExtension:
    def test_flat_is_constant(self, rng):
        gm = flat_metric()
        j1 = la.random_complex_structure(np.eye(4), rng)
        j2 = la.random_complex_structure(np.eye(4), rng)
        ext = fl.parallel_extension(gm, j1, j2, np.zeros(4))
        assert np.allclose(ext(np.array([0.1, 0.0, -0.1, 0.05])), ext(np.zeros(4)))

    def test_value_and_parallel_at_base(self, rng):
        gm = curved_metric()
        p = np.array([0.1, -0.2, 0.3, 0.2])
        m = gm.at(p)
        j1 = la.random_complex_structure(m.g, rng)
        j2 = la.random_complex_structure(m.g, rng)
        ext = fl.parallel_extension(gm, j1, j2, p)
        assert np.array_equal(ext(p), la.assemble(m, j1, j2))
        c = fl.d_connection_matrices(gm, p)
        ds = fd_gradient(ext, p, 1e-5)
        s0 = ext(p)
        worst = max(float(np.abs(ds[..., k] + c[k] @ s0 - s0 @ c[k]).max()) for k in range(4))
        assert worst < 1e-7
        assert np.abs(ext.jet1(p).jac - ds).max() < 1e-7

    def test_domain_restriction(self, rng):
        gm = flat_metric()
        j = la.standard_complex(4)
        ext = fl.parallel_extension(gm, j, j, np.zeros(4))
        with pytest.raises(fl.DomainRestrictionError):
            ext(np.array([0.9, 0, 0, 0]))
        with pytest.raises(fl.DomainRestrictionError):
            ext.jet1(np.array([0.1, 0, 0, 0]))
