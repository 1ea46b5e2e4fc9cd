import numpy as np
import pytest

from gentwist import expr as ex
from oracles import fd_gradient, fd_hessian

COORDS4 = ("x1", "x2", "x3", "x4")


def jet(text, point, coords=("x1", "x2")):
    return ex.eval_jet(ex.parse(text, coords), point)


class TestParse:
    def test_sphere_factor(self):
        e = ex.parse("4/(1+x1^2+x2^2)^2", ("x1", "x2"))
        assert isinstance(e, ex.BinOp) and e.op == "/"
        assert ex.evaluate(e, [0.0, 0.0]) == 4.0

    def test_unknown_identifier(self):
        with pytest.raises(ex.UnknownIdentifierError) as info:
            ex.parse("x1 + x5", COORDS4)
        assert info.value.name == "x5"
        assert (info.value.line, info.value.col) == (1, 6)

    def test_functions(self):
        assert ex.evaluate(ex.parse("sin(x1)*exp(x2)", ("x1", "x2")), [0.0, 0.0]) == 0.0

    def test_precedence(self):
        c = ("x",)
        assert ex.evaluate(ex.parse("-x^2", c), [3.0]) == -9.0
        assert ex.evaluate(ex.parse("2^3^2", c), [0.0]) == 512.0
        assert ex.evaluate(ex.parse("2^-1", c), [0.0]) == 0.5
        assert ex.evaluate(ex.parse("8/4/2", c), [0.0]) == 1.0
        assert ex.evaluate(ex.parse("1-2-3", c), [0.0]) == -4.0
        assert ex.evaluate(ex.parse("1.5e1 + .5", c), [0.0]) == 15.5

    @pytest.mark.parametrize(
        "text, line, col, expected",
        [
            ("x1 +", 1, 5, "identifier"),
            ("(x1", 1, 4, ")"),
            ("x1 x2", 1, 4, "end of input"),
            ("x1 $ 2", 1, 4, "number"),
            ("x1 +\n  * 2", 2, 3, "("),
            ("sin x1", 1, 5, "("),
        ],
    )
    def test_syntax_errors(self, text, line, col, expected):
        with pytest.raises(ex.ExprSyntaxError) as info:
            ex.parse(text, COORDS4)
        assert (info.value.line, info.value.col) == (line, col)
        assert expected in info.value.expected
        assert f"line {line}, column {col}" in str(info.value)

    def test_function_name_needs_call(self):
        with pytest.raises(ex.ExprSyntaxError):
            ex.parse("exp + 1", COORDS4)


class TestPrinter:
    @pytest.mark.parametrize(
        "text",
        [
            "x1 - (x2 - x3)",
            "(x1 - x2) - x3",
            "x1^x2^x3",
            "(x1^x2)^x3",
            "-(x1 + x2)",
            "-x1^2",
            "(-x1)^2",
            "x1/(x2*x3)",
            "x1/x2*x3",
            "sin(-x1)*exp(x2^-1)",
            "2^-x1",
            "-(-x1)",
        ],
    )
    def test_roundtrip(self, text):
        e = ex.parse(text, COORDS4)
        printed = ex.to_text(e)
        assert ex.parse(printed, COORDS4) == e
        assert ex.to_text(ex.parse(printed, COORDS4)) == printed


class TestJets:
    def test_product(self):
        j = jet("x1*x2", [2.0, 3.0])
        assert j.val == 6.0
        assert np.allclose(j.grad, [3.0, 2.0])
        assert np.allclose(j.hess, [[0.0, 1.0], [1.0, 0.0]])

    def test_cube(self):
        j = ex.eval_jet(ex.parse("x1^3", ("x1",)), [2.0])
        assert (j.val, j.grad[0], j.hess[0, 0]) == (8.0, 12.0, 12.0)

    def test_sphere_factor_against_differences(self):
        text = "4/(1+x1^2)^2"
        j = ex.eval_jet(ex.parse(text, ("x1",)), [1.0])
        assert j.val == pytest.approx(1.0)
        assert j.grad[0] == pytest.approx(-2.0)
        f = lambda p: ex.evaluate(ex.parse(text, ("x1",)), p)  # noqa: E731
        assert abs(j.hess[0, 0] - fd_hessian(f, np.array([1.0]))[0, 0]) < 1e-6

    @pytest.mark.parametrize(
        "text",
        [
            "sin(x1)*cos(x2)",
            "exp(x1*x2)/(2+x1^2)",
            "log(3+x1+x2^2)",
            "sqrt(2+x1*x2)",
            "atan(x1-x2)",
            "x1^x2",
            "(1+x1^2)^1.5",
            "2^x1",
        ],
    )
    def test_functions_against_differences(self, text):
        coords = ("x1", "x2")
        p = np.array([0.3, 0.7])
        e = ex.parse(text, coords)
        j = ex.eval_jet(e, p)
        f = lambda q: ex.evaluate(e, q)  # noqa: E731
        assert np.allclose(j.grad, fd_gradient(f, p), rtol=1e-7, atol=1e-8)
        assert np.allclose(j.hess, fd_hessian(f, p), rtol=1e-5, atol=1e-6)


class TestDomain:
    @pytest.mark.parametrize(
        "text, where",
        [
            ("log(x1)", "log(x1)"),
            ("sqrt(x1 - 1)", "sqrt(x1 - 1.0)"),
            ("1/x1", "1.0 / x1"),
            ("(x1-1)^0.5", "(x1 - 1.0)^0.5"),
        ],
    )
    def test_reports_subexpression(self, text, where):
        e = ex.parse(text, ("x1",))
        with pytest.raises(ex.DomainError) as info:
            ex.eval_jet(e, [0.0])
        assert info.value.subexpr == where

    def test_integer_power_of_negative_is_fine(self):
        assert ex.eval_jet(ex.parse("x1^3", ("x1",)), [-2.0]).val == -8.0
