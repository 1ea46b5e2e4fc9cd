"""Reading manifold descriptions and the built-in fixtures.

A description is an INI-style file::

    [chart]
    coords = x1, x2, x3, x4
    box = -1 1            # one interval for all coordinates, or n of them
    orientation = 1

    [metric]              # lower triangle, i >= j, 1-based
    1,1 = 4/(1+x1^2)^2

    [theta]               # strict upper triangle, i < j
    2,3 = x1

    [sampling]
    points = 16

    [expect]              # predicates expected to fail
    theorems.same_orientation = fail
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import expr as ex
from .fields import Chart, FieldGenMetric

BUILTINS = ("flat4", "sphere4", "flat4_theta", "flat4_btransform", "perturbed4")
PD_PROBES = 8


class ManifoldFileError(ValueError):
    pass


@dataclass
class ManifoldSpec:
    name: str
    text: str
    metric: FieldGenMetric
    sampling: dict = field(default_factory=dict)
    expect: dict = field(default_factory=dict)

    @property
    def chart(self) -> Chart:
        return self.metric.chart

    @property
    def spec_hash(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    def expected_pass(self, suite: str, predicate: str, component: str | None) -> bool:
        for key in (f"{suite}.{predicate}.{component}", f"{suite}.{predicate}"):
            if key in self.expect:
                return self.expect[key] == "pass"
        return True

    def without_theta(self, name: str | None = None) -> ManifoldSpec:
        n = self.chart.n
        zero = np.full((n, n), ex.Num(0.0), dtype=object)
        fm = FieldGenMetric(self.chart, self.metric.g_exprs, zero)
        return ManifoldSpec(name or self.name + "/theta=0", self.text, fm, dict(self.sampling), {})


def _index(key: str, n: int, section: str) -> tuple[int, int]:
    parts = key.replace(" ", "").split(",")
    try:
        i, j = (int(p) for p in parts)
    except ValueError:
        raise ManifoldFileError(f"[{section}] key {key!r} must look like 'i,j'") from None
    if not (1 <= i <= n and 1 <= j <= n):
        raise ManifoldFileError(f"[{section}] index {key!r} out of range 1..{n}")
    return i - 1, j - 1


def _expr(text: str, coords, where: str) -> ex.Expr:
    try:
        return ex.parse(text, coords)
    except ex.ExprError as err:
        raise ManifoldFileError(f"{where}: {err}") from err


def parse_manifold(text: str, name: str = "<manifold>") -> ManifoldSpec:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text, source=name)
    except configparser.Error as err:
        raise ManifoldFileError(f"{name}: {err}") from err
    for required in ("chart", "metric"):
        if not cp.has_section(required):
            raise ManifoldFileError(f"{name}: missing [{required}] section")
    unknown = set(cp.sections()) - {"chart", "metric", "theta", "sampling", "expect"}
    if unknown:
        raise ManifoldFileError(f"{name}: unknown section(s) {sorted(unknown)}")

    chart_sec = cp["chart"]
    coords = [c.strip() for c in chart_sec.get("coords", "").split(",") if c.strip()]
    if not coords:
        raise ManifoldFileError(f"{name}: [chart] needs coords")
    if len(set(coords)) != len(coords) or any(c in ex.FUNCTIONS for c in coords):
        raise ManifoldFileError(f"{name}: coordinate names must be distinct and not function names")
    n = len(coords)
    if n % 2:
        raise ManifoldFileError(f"{name}: dimension {n} is odd")
    try:
        nums = [float(t) for t in chart_sec.get("box", "-1 1").replace(",", " ").replace(";", " ").split()]
        orientation = int(chart_sec.get("orientation", "1"))
    except ValueError as err:
        raise ManifoldFileError(f"{name}: bad [chart] entry: {err}") from None
    if len(nums) == 2:
        nums = nums * n
    if len(nums) != 2 * n:
        raise ManifoldFileError(f"{name}: box needs 2 or {2 * n} numbers")
    try:
        chart = Chart(tuple(coords), np.array(nums).reshape(n, 2), orientation)
    except ValueError as err:
        raise ManifoldFileError(f"{name}: {err}") from None

    zero = ex.Num(0.0)
    g = np.full((n, n), zero, dtype=object)
    seen = set()
    for key, value in cp["metric"].items():
        i, j = _index(key, n, "metric")
        if i < j:
            raise ManifoldFileError(f"{name}: [metric] key {key!r} is above the diagonal; give the lower triangle")
        if (i, j) in seen:
            raise ManifoldFileError(f"{name}: [metric] entry {key!r} given twice")
        seen.add((i, j))
        e = _expr(value, coords, f"{name} [metric] {key}")
        g[i, j] = g[j, i] = e
    missing = [k + 1 for k in range(n) if (k, k) not in seen]
    if missing:
        raise ManifoldFileError(f"{name}: [metric] diagonal entries missing for {missing}")

    theta = np.full((n, n), zero, dtype=object)
    if cp.has_section("theta"):
        for key, value in cp["theta"].items():
            i, j = _index(key, n, "theta")
            if i >= j:
                raise ManifoldFileError(f"{name}: [theta] key {key!r} must satisfy i < j")
            e = _expr(value, coords, f"{name} [theta] {key}")
            theta[i, j] = e
            theta[j, i] = ex.Neg(e)

    sampling = {}
    if cp.has_section("sampling"):
        for key, value in cp["sampling"].items():
            if key not in ("points", "fibers", "probes", "tol", "seed"):
                raise ManifoldFileError(f"{name}: unknown [sampling] key {key!r}")
            try:
                sampling[key] = float(value) if key == "tol" else int(value)
            except ValueError:
                raise ManifoldFileError(f"{name}: [sampling] {key} = {value!r} is not a number") from None
            if sampling[key] <= 0 and key != "seed":
                raise ManifoldFileError(f"{name}: [sampling] {key} must be positive")

    expect = {}
    if cp.has_section("expect"):
        for key, value in cp["expect"].items():
            if value not in ("pass", "fail"):
                raise ManifoldFileError(f"{name}: [expect] {key} must be pass or fail")
            expect[key] = value

    fm = FieldGenMetric(chart, g, theta)
    _check_positive(fm, name)
    return ManifoldSpec(name, text, fm, sampling, expect)


def _check_positive(fm: FieldGenMetric, name: str) -> None:
    for p in fm.chart.lattice(PD_PROBES):
        try:
            gv = fm.jets(p)[0].val
            fm.jets(p)[1]
        except ex.ExprError as err:
            raise ManifoldFileError(f"{name}: cannot evaluate fields at {p.tolist()}: {err}") from err
        lowest = float(np.linalg.eigvalsh(gv)[0])
        if not lowest > 0.0:
            raise ManifoldFileError(
                f"{name}: metric is not positive definite at {p.tolist()} (eigenvalue {lowest:.3e})"
            )


def builtin_text(name: str) -> str:
    if name not in BUILTINS:
        raise ManifoldFileError(f"unknown fixture {name!r}; built-ins are {', '.join(BUILTINS)}")
    return resources.files("gentwist").joinpath("fixtures", f"{name}.ini").read_text()


def load_spec(source: str) -> ManifoldSpec:
    """Load a description from a path or a built-in fixture name."""
    if source in BUILTINS:
        return parse_manifold(builtin_text(source), source)
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as err:
        raise ManifoldFileError(f"cannot read {source}: {err.strerror}") from None
    return parse_manifold(text, path.name)
