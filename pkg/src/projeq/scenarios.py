"""Ready-made verification scenarios.

Three families:

* a torus product family S^1 x T^{n-2} x S^1 whose metric and its pullback
  under the coordinate swap (x, y, z) -> (z, y, x) have the same
  unparameterized geodesics (the classical warped-product construction of
  projectively equivalent pairs), with base translations as stock isometries
  and an optional orientation-preserving variant;
* the flat torus T^2 with a unimodular integer linear map (connection-
  preserving, isometric only when orthogonal);
* a round-sphere gnomonic patch with projective-linear maps (geodesics are
  straight chart lines, so these maps send geodesics to geodesics).

Scenarios serialize to a JSON document (chart + expressions + labels) so
they can be saved, diffed, and replayed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .charts import (
    Chart,
    Diffeomorphism,
    MetricField,
    compose_maps,
    metric_values,
    pullback_metric,
)
from .expr import (
    BinOp,
    Expr,
    Neg,
    Num,
    Pow,
    Var,
    eval_value,
    format_number,
    free_vars,
    parse,
    serialize,
    substitute,
    validate_profile,
)
from .metrization import SolBasis, WeightedSolution


class ScenarioError(ValueError):
    pass


DEFAULT_PROFILE = "2 + 0.5*cos(2*pi*x)"


@dataclass
class Scenario:
    """A chart, metrics, labeled maps, and expected verdicts."""

    name: str
    chart: Chart
    g: MetricField
    g_bar: MetricField | None
    maps: dict[str, Diffeomorphism]
    expected: dict[str, str]  # map label -> expected classification kind
    sol_basis: SolBasis | None = None
    sample_box: list[tuple[float, float]] | None = None
    provenance: str = ""
    profile: Expr | None = None
    check_collinearity: bool = False
    extras: dict = dataclass_field(default_factory=dict)


def _mul(*exprs: Expr) -> Expr:
    out = exprs[0]
    for e in exprs[1:]:
        out = BinOp("*", out, e)
    return out


def _family_components(f: Expr, n: int, base: np.ndarray):
    """Upper-triangle components of the family metric and of the displayed
    pullback form (the latter multiplies each block by f(z)/f(x)^2,
    f(z)/f(x), f(z)^2/f(x) respectively)."""
    fx = f
    fz = substitute(f, {"x": Var("z")})
    one = Num(1.0)
    a = BinOp("-", fx, BinOp("/", one, fz))  # f(x) - 1/f(z)
    b = BinOp("-", fx, one)  # f(x) - 1
    c = BinOp("-", one, BinOp("/", one, fz))  # 1 - 1/f(z)
    fac_x = BinOp("/", fz, Pow(fx, 2.0))
    fac_y = BinOp("/", fz, fx)
    fac_z = BinOp("/", Pow(fz, 2.0), fx)
    comps: dict[tuple[int, int], Expr] = {(0, 0): _mul(a, b), (n - 1, n - 1): _mul(a, c)}
    pulled: dict[tuple[int, int], Expr] = {
        (0, 0): _mul(a, b, fac_x),
        (n - 1, n - 1): _mul(a, c, fac_z),
    }
    for i in range(n - 2):
        for j in range(i, n - 2):
            coeff = float(base[i, j])
            if coeff == 0.0:
                continue
            block = _mul(b, c) if coeff == 1.0 else _mul(b, c, Num(coeff))
            comps[(1 + i, 1 + j)] = block
            pulled[(1 + i, 1 + j)] = BinOp("*", block, fac_y)
    return comps, pulled


def _coerce_profile(f) -> Expr:
    f_expr = parse(f) if isinstance(f, str) else f
    extra = free_vars(f_expr) - {"x"}
    if extra:
        raise ScenarioError(f"profile must be a function of x only, found {sorted(extra)}")
    return f_expr


def build_levi_civita_family(n: int = 3, f=DEFAULT_PROFILE, base=None,
                             orientable: bool = False, base_reflection=None,
                             translation: float = 0.375) -> Scenario:
    """Projectively equivalent pair on S^1 x T^{n-2} x S^1.

    ``f`` must be 1-periodic, smooth, nonconstant, and > 1 (validated on a
    grid).  ``base`` is a constant SPD matrix for the middle torus block
    (identity by default); n = 2 drops the middle block entirely.  With
    ``orientable`` the candidate map is composed with an orientation-
    reversing isometry (x -> -x for n = 2, which needs f even; y_1 -> -y_1
    for n >= 3, overridable via ``base_reflection`` expressions).
    """
    if n < 2:
        raise ScenarioError("family needs dimension >= 2")
    f_expr = _coerce_profile(f)
    violations = validate_profile(f_expr, "x")
    if violations:
        raise ScenarioError(
            "profile rejected: " + "; ".join(v.message for v in violations)
        )
    if base is None:
        base = np.eye(n - 2)
    base = np.asarray(base, dtype=float)
    if base.shape != (n - 2, n - 2) or not np.allclose(base, base.T):
        raise ScenarioError("base metric must be a symmetric (n-2)x(n-2) matrix")
    if n > 2:
        try:
            np.linalg.cholesky(base)
        except np.linalg.LinAlgError:
            raise ScenarioError("base metric must be positive definite") from None

    names = ("x", *(f"y{i + 1}" for i in range(n - 2)), "z")
    chart = Chart.torus(names)
    comps, pulled = _family_components(f_expr, n, base)
    g = MetricField(chart, comps, metric_id="g")
    g_bar = MetricField(chart, pulled, metric_id="gbar")

    x, z = Var("x"), Var("z")
    ys = [Var(nm) for nm in names[1:-1]]
    swap_exprs = [z, *ys, x]
    swap = Diffeomorphism(chart, swap_exprs, inverse_exprs=swap_exprs, label="swap")

    maps: dict[str, Diffeomorphism] = {"swap": swap}
    expected: dict[str, str] = {"swap": "projective-nonaffine"}
    for i, nm in enumerate(names[1:-1]):
        t = translation + 0.125 * i
        exprs = [Var(m) if m != nm else BinOp("+", Var(nm), Num(t)) for m in names]
        inv = [Var(m) if m != nm else BinOp("-", Var(nm), Num(t)) for m in names]
        label = f"translate-{nm}"
        maps[label] = Diffeomorphism(chart, exprs, inverse_exprs=inv, label=label)
        expected[label] = "isometry"
    if n >= 3:
        psi = compose_maps(swap, maps["translate-y1"], label="swap.translate-y1")
        maps[psi.label] = psi
        expected[psi.label] = "projective-nonaffine"

    if orientable:
        if n == 2:
            gap = max(
                abs(eval_value(f_expr, {"x": i / 64}) - eval_value(f_expr, {"x": (64 - i) / 64}))
                for i in range(65)
            )
            if gap > 1e-9:
                raise ScenarioError(f"orientable n=2 variant needs an even profile (gap {gap:g})")
            refl = Diffeomorphism(chart, [Neg(x), z], inverse_exprs=[Neg(x), z], label="reflect-x")
        else:
            if base_reflection is None:
                if np.abs(base[0, 1:]).max(initial=0.0) > 0.0:
                    raise ScenarioError(
                        "default base reflection y1 -> -y1 is not an isometry of this base; "
                        "pass base_reflection explicitly"
                    )
                base_reflection = [Neg(ys[0]), *ys[1:]]
            refl_exprs = [x, *base_reflection, z]
            refl = Diffeomorphism(chart, refl_exprs, inverse_exprs=refl_exprs, label="reflect-base")
        orient = compose_maps(swap, refl, label="swap-orientable")
        maps[orient.label] = orient
        expected[orient.label] = "projective-nonaffine"

    basis = SolBasis(WeightedSolution.from_metric(g), WeightedSolution.from_metric(g_bar))
    return Scenario(
        name=f"levi-civita-n{n}",
        chart=chart,
        g=g,
        g_bar=g_bar,
        maps=maps,
        expected=expected,
        sol_basis=basis,
        provenance=f"warped torus product family, n={n}, f={serialize(f_expr)}",
        profile=f_expr,
    )


def pullback_formula_residual(f, n: int, p) -> float:
    """Componentwise relative gap at p between the pointwise pullback of the
    family metric under the swap and its closed displayed form.

    Accepts any f > 1 at the evaluation points (constant profiles included;
    this is an identity check, not a scenario build).
    """
    f_expr = _coerce_profile(f)
    chart = Chart.torus(("x", *(f"y{i + 1}" for i in range(n - 2)), "z"))
    comps, pulled = _family_components(f_expr, n, np.eye(n - 2))
    g = MetricField(chart, comps, metric_id="g", check_periodic=False)
    g_bar = MetricField(chart, pulled, metric_id="gbar-displayed", check_periodic=False)
    names = chart.names
    swap_exprs = [Var(names[-1]), *(Var(nm) for nm in names[1:-1]), Var(names[0])]
    swap = Diffeomorphism(chart, swap_exprs, label="swap", check=False)
    direct = pullback_metric(swap, g, p)
    displayed = metric_values(g_bar, p)[0]
    denom = np.maximum(np.maximum(np.abs(direct), np.abs(displayed)), 1.0)
    return float((np.abs(direct - displayed) / denom).max())


def pullback_identity_grid_residual(grid: int = 50, lo: float = 1.1, hi: float = 6.0) -> float:
    """Algebraic identity behind the displayed pullback, on a value grid.

    For all u, w > 1:  (w - 1/u)(1 - 1/u) == (u - 1/w)(u - 1) * w / u^2
    (both sides expand to (u*w - 1)(u - 1)/u^2).  Returns the max relative
    gap over a grid x grid lattice of (u, w) values in [lo, hi].
    """
    u = np.linspace(lo, hi, grid)[:, None]
    w = np.linspace(lo, hi, grid)[None, :]
    lhs = (w - 1.0 / u) * (1.0 - 1.0 / u)
    rhs = (u - 1.0 / w) * (u - 1.0) * w / u**2
    denom = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1.0)
    return float((np.abs(lhs - rhs) / denom).max())


def _linear_expr(coeffs, names, constant: float = 0.0) -> Expr:
    terms: list[Expr] = []
    for c, nm in zip(coeffs, names):
        c = float(c)
        if c == 0.0:
            continue
        terms.append(Var(nm) if c == 1.0 else BinOp("*", Num(c), Var(nm)))
    if constant != 0.0 or not terms:
        terms.append(Num(float(constant)))
    out = terms[0]
    for t in terms[1:]:
        out = BinOp("+", out, t)
    return out


def build_flat_torus(A) -> Scenario:
    """Flat T^2 with the lattice map u -> A u (mod 1), A integer, det A = 1.

    The map preserves the (flat) connection, so the expected class is
    affine-nonisometric unless A is orthogonal, in which case it is an
    isometry.
    """
    A = np.asarray(A)
    if A.shape != (2, 2) or not np.issubdtype(A.dtype, np.integer):
        A = np.asarray(A, dtype=float)
        if np.abs(A - np.round(A)).max() > 0:
            raise ScenarioError("lattice map must have integer entries")
        A = np.round(A).astype(int)
    det = int(round(float(np.linalg.det(A.astype(float)))))
    if det != 1:
        raise ScenarioError(f"lattice map must have determinant 1, got {det}")
    chart = Chart.torus(("x", "y"))
    g = MetricField(chart, {(0, 0): Num(1.0), (1, 1): Num(1.0)}, metric_id="g")
    Ainv = np.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]], dtype=int)  # adjugate, det 1
    exprs = [_linear_expr(A[i], chart.names) for i in range(2)]
    inv = [_linear_expr(Ainv[i], chart.names) for i in range(2)]
    lattice = Diffeomorphism(chart, exprs, inverse_exprs=inv, label="lattice")
    orthogonal = np.array_equal(A.T @ A, np.eye(2, dtype=int))
    pulled = A.T @ A
    return Scenario(
        name="flat-torus",
        chart=chart,
        g=g,
        g_bar=None,
        maps={"lattice": lattice},
        expected={"lattice": "isometry" if orthogonal else "affine-nonisometric"},
        provenance=f"flat torus with unimodular lattice map {A.tolist()}",
        extras={"matrix": A.tolist(), "pullback_matrix": pulled.tolist()},
    )


def build_sphere_projective(A, chart_halfwidth: float = 10.0,
                            sample_halfwidth: float = 1.0,
                            denom_margin: float = 0.05) -> Scenario:
    """Round-sphere gnomonic patch with the projective-linear action of A.

    The chart metric is g_ij(u) = ((1+|u|^2) delta_ij - u_i u_j)/(1+|u|^2)^2
    on an open box; phi_A(u) takes the first two components of A(u, 1)
    divided by the third.  Geodesics are straight chart lines, so phi_A maps
    geodesics to geodesics: expected projective-nonaffine for non-orthogonal
    A, isometry for orthogonal A.  Verification is restricted to the
    sampling box |u_i| <= sample_halfwidth (a local check of a global
    statement).
    """
    A = np.asarray(A, dtype=float)
    if A.shape != (3, 3):
        raise ScenarioError("expected a 3x3 matrix")
    det = float(np.linalg.det(A))
    if abs(det - 1.0) > 1e-9:
        raise ScenarioError(f"matrix must have determinant 1, got {det!r}")
    w = float(chart_halfwidth)
    chart = Chart.box(("u1", "u2"), [(-w, w), (-w, w)])
    denom2 = "(1 + u1^2 + u2^2)^2"
    g = MetricField(chart, {
        (0, 0): parse(f"(1 + u2^2) / {denom2}", chart.names),
        (0, 1): parse(f"-(u1*u2) / {denom2}", chart.names),
        (1, 1): parse(f"(1 + u1^2) / {denom2}", chart.names),
    }, metric_id="g")

    sb = float(sample_halfwidth)
    grid = np.linspace(-sb, sb, 9)
    U = np.array([(a, b) for a in grid for b in grid])

    def proj_exprs(M):
        rows = []
        for i in range(2):
            num = _linear_expr(M[i, :2], chart.names, constant=M[i, 2])
            den = _linear_expr(M[2, :2], chart.names, constant=M[2, 2])
            rows.append(BinOp("/", num, den))
        return rows

    P3 = U @ A[2, :2] + A[2, 2]
    if np.abs(P3).min() < denom_margin:
        raise ScenarioError(
            f"projective denominator reaches {np.abs(P3).min():g} on the sampling box"
        )
    img = (U @ A[:2, :2].T + A[:2, 2]) / P3[:, None]
    if np.abs(img).max() >= w:
        raise ScenarioError("map image leaves the chart box; enlarge chart_halfwidth")

    phi = Diffeomorphism(chart, proj_exprs(A), inverse_exprs=proj_exprs(np.linalg.inv(A)),
                         label="projective-linear")
    orthogonal = np.abs(A.T @ A - np.eye(3)).max() <= 1e-12
    return Scenario(
        name="sphere-gnomonic",
        chart=chart,
        g=g,
        g_bar=None,
        maps={"projective-linear": phi},
        expected={"projective-linear": "isometry" if orthogonal else "projective-nonaffine"},
        sample_box=[(-sb, sb), (-sb, sb)],
        provenance=f"gnomonic round-sphere patch with projective-linear map {A.tolist()}",
        check_collinearity=True,
        extras={"matrix": A.tolist()},
    )


def perturbed_companion(scenario: Scenario, eps: float = 1e-2) -> MetricField:
    """Companion metric plus eps * h, h_ab = delta_ab (0.6 + 0.4 sin(2 pi x)).

    The perturbation is smooth, symmetric, nonvanishing, and generic: it
    breaks projective equivalence, which the discriminative-power checks
    assert.
    """
    if scenario.g_bar is None:
        raise ScenarioError("scenario has no companion metric")
    g_bar = scenario.g_bar
    chart = g_bar.chart
    bump = parse(f"{format_number(eps)} * (0.6 + 0.4*sin(2*pi*{chart.names[0]}))", chart.names)
    comps = {}
    n = chart.dim
    for i in range(n):
        for j in range(i, n):
            e = g_bar.components[i][j]
            comps[(i, j)] = BinOp("+", e, bump) if i == j else e
    return MetricField(chart, comps, metric_id=f"{g_bar.metric_id}+{eps:g}h",
                       check_periodic=False)


BUILTIN_SCENARIOS = {
    "levi-civita-n2": lambda: build_levi_civita_family(2),
    "levi-civita-n3": lambda: build_levi_civita_family(3),
    "levi-civita-n4": lambda: build_levi_civita_family(4),
    "flat-torus-shear": lambda: build_flat_torus([[1, 1], [0, 1]]),
    "flat-torus-rotation": lambda: build_flat_torus([[0, -1], [1, 0]]),
    "sphere-stretch": lambda: build_sphere_projective(np.diag([2.0, 1.0, 0.5])),
}


def load_scenario(selector: str) -> Scenario:
    """Builtin scenario name, or a path to a scenario JSON file."""
    if selector in BUILTIN_SCENARIOS:
        return BUILTIN_SCENARIOS[selector]()
    try:
        with open(selector, "r", encoding="utf-8") as fh:
            return scenario_from_dict(json.load(fh))
    except FileNotFoundError:
        raise ScenarioError(
            f"unknown scenario {selector!r} (builtins: {', '.join(sorted(BUILTIN_SCENARIOS))})"
        ) from None


# --------------------------------------------------------------------------
# Serialization


def _metric_to_dict(g: MetricField) -> dict:
    n = g.chart.dim
    return {
        "metric_id": g.metric_id,
        "signature": g.signature,
        "components": {f"{i},{j}": serialize(g.components[i][j])
                       for i in range(n) for j in range(i, n)
                       if not (isinstance(g.components[i][j], Num) and g.components[i][j].value == 0.0)},
    }


def _metric_from_dict(chart: Chart, d: dict) -> MetricField:
    comps = {}
    for key, src in d["components"].items():
        i, j = (int(t) for t in key.split(","))
        comps[(i, j)] = parse(src, chart.names)
    return MetricField(chart, comps, signature=d.get("signature", "riemannian"),
                       metric_id=d.get("metric_id", "g"))


def scenario_to_dict(sc: Scenario) -> dict:
    d = {
        "format": "projeq-scenario/1",
        "name": sc.name,
        "chart": {
            "names": list(sc.chart.names),
            "kinds": list(sc.chart.kinds),
            "bounds": [list(b) for b in sc.chart.bounds],
        },
        "g": _metric_to_dict(sc.g),
        "maps": {
            label: {
                "exprs": [serialize(e) for e in m.exprs],
                "inverse_exprs": [serialize(e) for e in m.inverse_exprs] if m.inverse_exprs else None,
                "expected": sc.expected.get(label),
            }
            for label, m in sc.maps.items()
        },
        "provenance": sc.provenance,
        "check_collinearity": sc.check_collinearity,
        "extras": sc.extras,
    }
    if sc.g_bar is not None:
        d["g_bar"] = _metric_to_dict(sc.g_bar)
    if sc.sol_basis is not None:
        d["sol_basis"] = {"from_metrics": ["g", "g_bar"]}
    if sc.sample_box is not None:
        d["sample_box"] = [list(b) for b in sc.sample_box]
    if sc.profile is not None:
        d["profile"] = serialize(sc.profile)
    return d


def scenario_from_dict(d: dict) -> Scenario:
    if d.get("format") != "projeq-scenario/1":
        raise ScenarioError(f"unsupported scenario format {d.get('format')!r}")
    ch = d["chart"]
    chart = Chart(tuple(ch["names"]), tuple(ch["kinds"]),
                  tuple((float(a), float(b)) for a, b in ch["bounds"]))
    g = _metric_from_dict(chart, d["g"])
    g_bar = _metric_from_dict(chart, d["g_bar"]) if "g_bar" in d else None
    maps = {}
    expected = {}
    for label, md in d["maps"].items():
        maps[label] = Diffeomorphism(chart, [parse(s, chart.names) for s in md["exprs"]],
                                     inverse_exprs=[parse(s, chart.names) for s in md["inverse_exprs"]]
                                     if md.get("inverse_exprs") else None,
                                     label=label)
        if md.get("expected"):
            expected[label] = md["expected"]
    basis = None
    if "sol_basis" in d:
        ref = d["sol_basis"]
        if ref.get("from_metrics") == ["g", "g_bar"]:
            if g_bar is None:
                raise ScenarioError("sol_basis references g_bar but the scenario has none")
            basis = SolBasis(WeightedSolution.from_metric(g), WeightedSolution.from_metric(g_bar))
        else:
            raise ScenarioError("unsupported sol_basis specification")
    return Scenario(
        name=d.get("name", "scenario"),
        chart=chart,
        g=g,
        g_bar=g_bar,
        maps=maps,
        expected=expected,
        sol_basis=basis,
        sample_box=[tuple(b) for b in d["sample_box"]] if "sample_box" in d else None,
        provenance=d.get("provenance", ""),
        profile=parse(d["profile"]) if "profile" in d else None,
        check_collinearity=bool(d.get("check_collinearity", False)),
        extras=d.get("extras", {}),
    )


def save_scenario(sc: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(sc), fh, indent=2, sort_keys=True)
        fh.write("\n")
