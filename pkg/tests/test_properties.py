import numpy as np
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gentwist import expr as ex
from gentwist import fiber as fb
from gentwist import fields as fl
from gentwist import linalg as la
from oracles import fd_gradient

settings.register_profile("gentwist", derandomize=True, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("gentwist")

COORDS = ("x1", "x2", "x3")
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
seeds = st.integers(0, 2**32 - 1)
dims = st.sampled_from([2, 4, 6])
components = st.sampled_from(la.COMPONENTS)


def vectors(size):
    return arrays(np.float64, size, elements=finite)


# expressions -----------------------------------------------------------------

leaves = st.one_of(
    st.sampled_from([ex.Var(name, k) for k, name in enumerate(COORDS)]),
    st.floats(-3, 3, allow_nan=False).map(lambda v: ex.Num(round(v, 3))),
)


def positive(e):
    return ex.BinOp("+", ex.Num(1.0), ex.BinOp("^", e, ex.Num(2.0)))


def extend(children):
    return st.one_of(
        st.builds(ex.Neg, children),
        st.builds(ex.BinOp, st.sampled_from(["+", "-", "*"]), children, children),
        st.builds(lambda a, b: ex.BinOp("/", a, positive(b)), children, children),
        st.builds(lambda a, k: ex.BinOp("^", a, ex.Num(float(k))), children, st.integers(2, 3)),
        st.builds(ex.Call, st.sampled_from(["sin", "cos", "atan"]), children),
        st.builds(lambda a: ex.Call("exp", ex.Call("sin", a)), children),
        st.builds(lambda f, a: ex.Call(f, positive(a)), st.sampled_from(["log", "sqrt"]), children),
    )


smooth_exprs = st.recursive(leaves, extend, max_leaves=8)
points = arrays(np.float64, 3, elements=st.floats(-1, 1, allow_nan=False))


def any_exprs(numbers=leaves):
    """Unrestricted trees for printing; evaluation may leave the domain."""
    return st.recursive(
        numbers,
        lambda c: st.one_of(
            st.builds(ex.Neg, c),
            st.builds(ex.BinOp, st.sampled_from(["+", "-", "*", "/", "^"]), c, c),
            st.builds(ex.Call, st.sampled_from(sorted(ex.FUNCTIONS)), c),
        ),
        max_leaves=10,
    )


# the grammar has no negative literals, so parsed trees only hold non-negative numbers
parsed_leaves = st.one_of(
    st.sampled_from([ex.Var(name, k) for k, name in enumerate(COORDS)]),
    st.floats(0, 1e6, allow_nan=False).map(ex.Num),
)


@given(any_exprs(parsed_leaves))
def test_printing_roundtrips_parsed_trees(e):
    text = ex.to_text(e)
    again = ex.parse(text, COORDS)
    assert again == e
    assert ex.to_text(again) == text


@given(any_exprs(), points)
def test_printing_preserves_values(e, point):
    text = ex.to_text(e)
    again = ex.parse(text, COORDS)
    assert ex.to_text(ex.parse(ex.to_text(again), COORDS)) == ex.to_text(again)
    try:
        want = ex.evaluate(e, point)
    except (ex.DomainError, OverflowError, ZeroDivisionError):
        return
    got = ex.evaluate(again, point)
    assert got == want or (np.isnan(got) and np.isnan(want))


@settings(max_examples=200)
@given(smooth_exprs, points)
def test_jets_match_differences(e, point):
    jet = ex.eval_jet(e, point)
    assume(np.isfinite(jet.val) and abs(jet.val) < 1e6)
    grad_fd = fd_gradient(lambda q: ex.evaluate(e, q), point)
    hess_fd = fd_gradient(lambda q: ex.eval_jet(e, q).grad, point)
    scale = max(1.0, float(np.abs(jet.grad).max()), float(np.abs(jet.hess).max()))
    assert np.abs(jet.grad - grad_fd).max() <= 1e-5 * scale
    assert np.abs(jet.hess - hess_fd).max() <= 1e-5 * scale
    assert np.abs(jet.hess - jet.hess.T).max() <= 1e-12 * scale


# linear algebra --------------------------------------------------------------


@given(dims.flatmap(lambda n: st.tuples(vectors(2 * n), vectors(2 * n))))
def test_pairing_symmetric(pair):
    a, b = pair
    assert la.pairing(a, b) == la.pairing(b, a)


@given(seeds, dims)
def test_projections_sum_and_are_isotropic_complements(seed, n):
    rng = np.random.default_rng(seed)
    gm = la.random_gen_metric(rng, n)
    a = rng.standard_normal(2 * n)
    plus, minus = la.project(gm, a)
    scale = max(1.0, float(np.abs(gm.g).max()), float(np.abs(gm.theta).max())) ** 2
    assert np.abs(plus + minus - a).max() < 1e-10 * scale
    # E' and E'' are orthogonal for the pairing, positive and negative definite
    assert abs(la.pairing(plus, minus)) < 1e-9 * scale
    assert la.pairing(plus, plus) >= -1e-12 and la.pairing(minus, minus) <= 1e-12


@given(seeds, dims, st.floats(-3, 3))
def test_b_transform_is_orthogonal(seed, n, size):
    rng = np.random.default_rng(seed)
    b = la.random_form(rng, n, abs(size))
    e = la.b_field(b)
    pm = la.pairing_matrix(n)
    assert np.abs(e.T @ pm @ e - pm).max() < 1e-12 * max(1.0, size**2)
    assert np.abs(la.b_field(-b) @ e - np.eye(2 * n)).max() < 1e-12 * max(1.0, size**2)


@given(seeds, dims, components)
def test_assemble_invariants(seed, n, comp):
    rng = np.random.default_rng(seed)
    gm = la.random_gen_metric(rng, n)
    fp = fb.random_fiber_point(gm, comp, rng)
    jj = la.assemble(gm, fp.j1, fp.j2)
    scale = max(1.0, float(np.abs(jj).max())) ** 2
    assert max(la.gen_complex_residuals(jj).values()) < 1e-9 * scale
    e1, e2 = la.extract_pair(gm, jj)
    assert max(np.abs(e1 - fp.j1).max(), np.abs(e2 - fp.j2).max()) < 1e-9 * scale
    assert la.classify_component(gm, jj) == comp
    # J and the second structure commute and multiply to -G
    second = la.second_structure(gm, jj)
    assert np.abs(jj @ second + gm.g_operator).max() < 1e-9 * scale


@given(seeds, components, st.sampled_from([1, 2, 3, 4]))
def test_k_eps_is_complex_and_isometric(seed, comp, eps):
    rng = np.random.default_rng(seed)
    gm = la.random_gen_metric(rng, 4)
    fp = fb.random_fiber_point(gm, comp, rng)
    v, w = fb.random_vertical(fp, rng), fb.random_vertical(fp, rng)
    kv, kw = fb.k_eps(fp, v, eps), fb.k_eps(fp, w, eps)
    assert (fb.k_eps(fp, kv, eps) + v).norm() < 1e-10 * max(1.0, v.norm())
    assert abs(fb.fiber_metric(kv, kw) - fb.fiber_metric(v, w)) < 1e-10 * max(1.0, v.norm() * w.norm())


# Courant bracket -------------------------------------------------------------


def section_jets(n):
    return st.builds(lambda v, j: fl.SectionJet(v, j), vectors(2 * n), arrays(np.float64, (2 * n, n), elements=finite))


@given(dims.flatmap(lambda n: st.tuples(section_jets(n), section_jets(n))))
def test_courant_antisymmetric(pair):
    a, b = pair
    assert np.abs(fl.courant(a, b) + fl.courant(b, a)).max() == 0.0


@given(dims.flatmap(lambda n: st.tuples(section_jets(n), section_jets(n), seeds)))
def test_closed_constant_b_transform_is_a_symmetry(data):
    a, b, seed = data
    n = a.val.shape[0] // 2
    theta = la.random_form(np.random.default_rng(seed), n)
    tj = fl.TensorJet(theta, np.zeros((n, n, n)), np.zeros((n, n, n, n)))
    ea, eb = fl.b_transform_jet(tj, a), fl.b_transform_jet(tj, b)
    lhs = fl.courant(ea, eb)
    rhs = la.b_transform(theta, fl.courant(a, b))
    scale = max(1.0, float(np.abs(lhs).max()))
    assert np.abs(lhs - rhs).max() < 1e-12 * scale * max(1.0, float(np.abs(theta).max()))
