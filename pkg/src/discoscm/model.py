"""Finite structural causal models with unit-level semantics.

A model couples a finite unit population with unit-independent exogenous
noises and per-group structural equations over finite domains. The
`coupling` field selects how counterfactual worlds relate to the factual
one:

* ``disco`` -- interventions draw fresh, independent noise copies with
  identical distributions (distribution-consistency semantics);
* ``scm``  -- interventions reuse the factual noise values (classical
  consistency-rule semantics).

All types are immutable and hashable; every operation here is pure, so
models are safe to share across threads and to memoize on.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from math import lcm
from typing import Iterable, Mapping, Sequence

from . import expressions as ex
from .errors import (
    EvaluationError,
    ExpressionError,
    InternalInvariantError,
    ModelValidationError,
    UnknownVariableError,
)
from .rationals import Value, as_value, format_value

COUPLING_DISCO = "disco"
COUPLING_SCM = "scm"

DEFAULT_GROUP_BODY = "default"


# --- probability mass functions -----------------------------------------


@dataclass(frozen=True)
class FinitePMF:
    """Exact finite probability mass function over rational values."""

    entries: tuple[tuple[Value, Fraction], ...]

    @staticmethod
    def of(pairs: Iterable[tuple[Value, Value]]) -> "FinitePMF":
        return FinitePMF(tuple((as_value(v), Fraction(p)) for v, p in pairs))

    @staticmethod
    def uniform(values: Sequence[Value]) -> "FinitePMF":
        n = len(values)
        return FinitePMF(tuple((as_value(v), Fraction(1, n)) for v in values))

    @staticmethod
    def point(value: Value) -> "FinitePMF":
        return FinitePMF(((as_value(value), Fraction(1)),))

    def violations(self, where: str) -> list[str]:
        out = []
        if not self.entries:
            out.append(f"{where}: empty pmf")
            return out
        values = [v for v, _ in self.entries]
        if len(set(values)) != len(values):
            out.append(f"{where}: duplicate values in pmf")
        if any(p < 0 for _, p in self.entries):
            out.append(f"{where}: negative probability")
        total = sum((p for _, p in self.entries), Fraction(0))
        if total != 1:
            out.append(f"{where}: pmf not normalized (sums to {total})")
        return out

    def support(self) -> tuple[Value, ...]:
        return tuple(v for v, _ in self.entries)

    def prob(self, value: Value) -> Fraction:
        for v, p in self.entries:
            if v == value:
                return p
        return Fraction(0)

    def is_point_mass(self) -> bool:
        return sum(1 for _, p in self.entries if p > 0) == 1

    def modal_value(self) -> Value:
        best = max(p for _, p in self.entries)
        for v, p in self.entries:
            if p == best:
                return v
        raise InternalInvariantError("empty pmf")

    def integer_weights(self) -> tuple[tuple[Value, ...], tuple[int, ...], int]:
        """Support, integer masses, and their common denominator."""
        den = lcm(*(p.denominator for _, p in self.entries))
        values = tuple(v for v, _ in self.entries)
        weights = tuple(int(p * den) for _, p in self.entries)
        return values, weights, den


# --- population ----------------------------------------------------------


@dataclass(frozen=True)
class UnitPopulation:
    """Units 1..size partitioned into named groups, with optional weights
    and per-unit rational feature values."""

    size: int
    groups: tuple[tuple[str, int, int], ...]  # (name, lo, hi) inclusive ranges
    weights: FinitePMF | None = None  # over unit ids; None means uniform
    features: tuple[tuple[str, tuple[Value, ...]], ...] = ()

    def units(self) -> range:
        return range(1, self.size + 1)

    def group_names(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for name, _, _ in self.groups:
            seen.setdefault(name)
        return tuple(seen)

    def group_of(self, unit: int) -> str:
        for name, lo, hi in self.groups:
            if lo <= unit <= hi:
                return name
        raise UnknownVariableError(f"unit {unit} outside population 1..{self.size}")

    def units_in(self, group: str) -> tuple[int, ...]:
        return tuple(u for name, lo, hi in self.groups if name == group for u in range(lo, hi + 1))

    def weight_of(self, unit: int) -> Fraction:
        if self.weights is None:
            return Fraction(1, self.size)
        return self.weights.prob(unit)

    def feature_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.features)

    def feature_map(self, unit: int) -> dict[str, Value]:
        return {name: vals[unit - 1] for name, vals in self.features}

    def violations(self) -> list[str]:
        out = []
        if self.size < 1:
            out.append("population: size must be >= 1")
            return out
        covered = [0] * self.size
        for name, lo, hi in self.groups:
            if lo > hi:
                out.append(f"population: group {name} has empty range {lo}..{hi}")
            for u in range(lo, hi + 1):
                if 1 <= u <= self.size:
                    covered[u - 1] += 1
                else:
                    out.append(f"population: group {name} covers unit {u} outside 1..{self.size}")
        for u, c in enumerate(covered, start=1):
            if c == 0:
                out.append(f"population: unit {u} belongs to no group")
            elif c > 1:
                out.append(f"population: unit {u} belongs to {c} groups")
        if self.weights is not None:
            out.extend(self.weights.violations("population weights"))
            if set(self.weights.support()) != set(self.units()):
                out.append("population weights: support must be exactly the unit ids")
        for name, vals in self.features:
            if len(vals) != self.size:
                out.append(f"feature {name}: {len(vals)} values for {self.size} units")
        names = self.feature_names()
        if len(set(names)) != len(names):
            out.append("population: duplicate feature names")
        return out


# --- noises, variables and equations --------------------------------------


@dataclass(frozen=True)
class NoiseDecl:
    """A unit-independent exogenous noise. The same distribution applies
    to every unit; unit-specific behavior belongs in the equations."""

    name: str
    pmf: FinitePMF


@dataclass(frozen=True)
class StructuralEquation:
    """One equation per endogenous variable, with one expression body per
    population group (or a shared ``default`` body)."""

    target: str
    parents: tuple[str, ...]
    noises: tuple[str, ...]
    bodies: tuple[tuple[str, ex.Expr], ...]  # (group name or "default", body)

    def body_for(self, group: str) -> ex.Expr:
        fallback = None
        for name, body in self.bodies:
            if name == group:
                return body
            if name == DEFAULT_GROUP_BODY:
                fallback = body
        if fallback is None:
            raise EvaluationError(f"equation {self.target}: no body for group {group!r}")
        return fallback


@dataclass(frozen=True)
class DiscoModel:
    population: UnitPopulation
    noises: tuple[NoiseDecl, ...]
    variables: tuple[tuple[str, tuple[Value, ...]], ...]  # (name, finite domain)
    equations: tuple[StructuralEquation, ...]
    coupling: str = COUPLING_DISCO

    def variable_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.variables)

    def domain_of(self, var: str) -> tuple[Value, ...]:
        for name, dom in self.variables:
            if name == var:
                return dom
        raise UnknownVariableError(f"unknown variable {var!r}")

    def noise_names(self) -> tuple[str, ...]:
        return tuple(n.name for n in self.noises)

    def equation_for(self, var: str) -> StructuralEquation:
        for eq in self.equations:
            if eq.target == var:
                return eq
        raise UnknownVariableError(f"no equation for {var!r}")

    def with_coupling(self, coupling: str) -> "DiscoModel":
        return replace(self, coupling=coupling)


# --- validation -----------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    code: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok:
            return "valid (0 violations)"
        return "\n".join(str(v) for v in self.violations)


def _v(code: str, message: str) -> Violation:
    return Violation(code, message)


@lru_cache(maxsize=512)
def validate_model(model: DiscoModel) -> ValidationReport:
    """Check every structural invariant; violations are reported, not raised."""
    out: list[Violation] = []
    if model.coupling not in (COUPLING_DISCO, COUPLING_SCM):
        out.append(_v("coupling", f"unknown coupling {model.coupling!r}"))

    out.extend(_v("population", m) for m in model.population.violations())
    group_names = set(model.population.group_names())
    feature_names = set(model.population.feature_names())

    noise_names = [n.name for n in model.noises]
    if len(set(noise_names)) != len(noise_names):
        out.append(_v("noise", "duplicate noise names"))
    for decl in model.noises:
        out.extend(_v("noise", m) for m in decl.pmf.violations(f"noise {decl.name}"))

    var_names = [name for name, _ in model.variables]
    if len(set(var_names)) != len(var_names):
        out.append(_v("variable", "duplicate variable names"))
    overlap = set(var_names) & set(noise_names)
    if overlap:
        out.append(_v("variable", f"names used as both variable and noise: {sorted(overlap)}"))
    for name, dom in model.variables:
        if not dom:
            out.append(_v("variable", f"variable {name} has an empty domain"))
        if len(set(dom)) != len(dom):
            out.append(_v("variable", f"variable {name} has duplicate domain values"))

    targets = [eq.target for eq in model.equations]
    for name in var_names:
        if targets.count(name) == 0:
            out.append(_v("equation", f"variable {name} has no equation"))
        elif targets.count(name) > 1:
            out.append(_v("equation", f"variable {name} has multiple equations"))
    for t in targets:
        if t not in var_names:
            out.append(_v("equation", f"equation targets undeclared variable {t!r}"))

    noise_users: dict[str, list[str]] = {}
    known = set(var_names) | set(noise_names)
    for eq in model.equations:
        body_groups = [g for g, _ in eq.bodies]
        if len(set(body_groups)) != len(body_groups):
            out.append(_v("equation", f"equation {eq.target}: duplicate group bodies"))
        for g, body in eq.bodies:
            if g != DEFAULT_GROUP_BODY and g not in group_names:
                out.append(_v("equation", f"equation {eq.target}: unknown group {g!r}"))
            refs = ex.referenced_names(body)
            for r in refs - known:
                out.append(_v("equation", f"equation {eq.target}: unknown name {r!r}"))
            for feat in ex.referenced_features(body) - feature_names:
                out.append(_v("equation", f"equation {eq.target}: unknown feature {feat!r}"))
            for grp in ex.referenced_groups(body) - group_names:
                out.append(_v("equation", f"equation {eq.target}: unknown group test {grp!r}"))
            try:
                if ex.infer_type(body) != "num":
                    out.append(_v("equation", f"equation {eq.target}: body is not numeric"))
            except ExpressionError as e:
                out.append(_v("equation", f"equation {eq.target}: {e}"))
        if DEFAULT_GROUP_BODY not in body_groups:
            missing = group_names - set(body_groups)
            if missing:
                out.append(
                    _v("equation", f"equation {eq.target}: no body for groups {sorted(missing)}")
                )
        referenced = frozenset().union(*(ex.referenced_names(b) for _, b in eq.bodies))
        want_parents = tuple(sorted(referenced & set(var_names)))
        want_noises = tuple(sorted(referenced & set(noise_names)))
        if tuple(sorted(eq.parents)) != want_parents:
            out.append(_v("equation", f"equation {eq.target}: parents field does not match body"))
        if tuple(sorted(eq.noises)) != want_noises:
            out.append(_v("equation", f"equation {eq.target}: noises field does not match body"))
        if eq.target in referenced:
            out.append(_v("equation", f"equation {eq.target}: refers to its own target"))
        for noise in want_noises:
            noise_users.setdefault(noise, []).append(eq.target)
    for noise, users in noise_users.items():
        if len(users) > 1:
            out.append(_v("noise", f"noise {noise} feeds several equations: {users}"))

    try:
        topological_order(model)
    except CyclicModelError as e:
        out.append(_v("cycle", str(e)))

    return ValidationReport(tuple(out))


def require_valid(model: DiscoModel) -> None:
    report = validate_model(model)
    if not report.ok:
        raise ModelValidationError(report)


class CyclicModelError(EvaluationError):
    """Raised by topological_order; validate_model reports it instead."""


@lru_cache(maxsize=2048)
def topological_order(model: DiscoModel) -> tuple[str, ...]:
    """Kahn's algorithm with declaration-order tie-breaking."""
    names = list(model.variable_names())
    parents: dict[str, set[str]] = {}
    for eq in model.equations:
        parents.setdefault(eq.target, set()).update(p for p in eq.parents if p in names)
    for name in names:
        parents.setdefault(name, set())
    order: list[str] = []
    remaining = dict(parents)
    while remaining:
        ready = [n for n in names if n in remaining and not remaining[n]]
        if not ready:
            cycle = sorted(remaining)
            raise CyclicModelError(f"cyclic dependency among {cycle}")
        nxt = ready[0]
        del remaining[nxt]
        order.append(nxt)
        for deps in remaining.values():
            deps.discard(nxt)
    return tuple(order)


# --- model construction helper --------------------------------------------


def build_model(
    population: UnitPopulation,
    noises: Sequence[NoiseDecl],
    variables: Sequence[tuple[str, Sequence[Value]]],
    bodies: Mapping[str, Mapping[str, str | ex.Expr]],
    coupling: str = COUPLING_DISCO,
) -> DiscoModel:
    """Assemble a model from textual or AST equation bodies, inferring each
    equation's parent and noise lists from the names its bodies reference."""
    var_names = [name for name, _ in variables]
    noise_names = {n.name for n in noises}
    equations = []
    for target in var_names:
        if target not in bodies:
            raise ExpressionError(f"no equation body given for {target!r}")
        parsed: list[tuple[str, ex.Expr]] = []
        for group, body in bodies[target].items():
            ast = ex.parse_expr(body) if isinstance(body, str) else body
            parsed.append((group, ast))
        refs = frozenset().union(*(ex.referenced_names(b) for _, b in parsed))
        equations.append(
            StructuralEquation(
                target=target,
                parents=tuple(sorted(refs & set(var_names))),
                noises=tuple(sorted(refs & noise_names)),
                bodies=tuple(parsed),
            )
        )
    return DiscoModel(
        population=population,
        noises=tuple(noises),
        variables=tuple((name, tuple(as_value(v) for v in dom)) for name, dom in variables),
        equations=tuple(equations),
        coupling=coupling,
    )


# --- solving ---------------------------------------------------------------


@lru_cache(maxsize=512)
def _compiled(model: DiscoModel) -> dict[tuple[str, str], ex.CompiledExpr]:
    """Compiled body per (target, group), resolved through default bodies."""
    out: dict[tuple[str, str], ex.CompiledExpr] = {}
    for eq in model.equations:
        for group in model.population.group_names():
            out[(eq.target, group)] = ex.compile_expr(eq.body_for(group))
    return out


@lru_cache(maxsize=512)
def _feature_maps(model: DiscoModel) -> dict[int, dict[str, Value]]:
    return {u: model.population.feature_map(u) for u in model.population.units()}


def solve(model: DiscoModel, unit: int, noise_assignment: Mapping[str, Value]) -> dict[str, Value]:
    """Evaluate all equations in topological order; pure and deterministic."""
    require_valid(model)
    group = model.population.group_of(unit)
    feats = _feature_maps(model)[unit]
    compiled = _compiled(model)
    for decl in model.noises:
        if decl.name not in noise_assignment:
            raise EvaluationError(f"missing value for noise {decl.name!r}")
        if noise_assignment[decl.name] not in decl.pmf.support():
            raise EvaluationError(
                f"noise {decl.name!r}: value {format_value(noise_assignment[decl.name])} "
                "outside its support"
            )
    env: dict[str, Value] = dict(noise_assignment)
    result: dict[str, Value] = {}
    for var in topological_order(model):
        value = as_value(compiled[(var, group)](env, group, feats))
        if value not in model.domain_of(var):
            raise EvaluationError(
                f"equation {var}: result {format_value(value)} outside declared domain "
                f"for unit {unit}"
            )
        env[var] = value
        result[var] = value
    return result


# --- interventions ----------------------------------------------------------


def fresh_noise_renaming(model: DiscoModel) -> dict[str, str]:
    """The renaming an intervention applies to noises under disco coupling."""
    existing = set(model.noise_names())
    renaming = {}
    for name in model.noise_names():
        fresh = name + "'"
        while fresh in existing:
            fresh += "'"
        existing.add(fresh)
        renaming[name] = fresh
    return renaming


def normalize_intervention(intervention: Mapping[str, Value]) -> tuple[tuple[str, Value], ...]:
    return tuple(sorted((var, as_value(val)) for var, val in intervention.items()))


@lru_cache(maxsize=2048)
def _apply_do_cached(model: DiscoModel, do_key: tuple[tuple[str, Value], ...]) -> DiscoModel:
    for var, val in do_key:
        if var not in model.variable_names():
            raise UnknownVariableError(f"cannot intervene on undeclared variable {var!r}")
        if val not in model.domain_of(var):
            raise EvaluationError(
                f"do({var}={format_value(val)}): value outside the domain of {var}"
            )
    intervened = dict(do_key)
    if model.coupling == COUPLING_DISCO:
        renaming = fresh_noise_renaming(model)
    else:
        renaming = {name: name for name in model.noise_names()}
    subst = {old: ex.Name(new) for old, new in renaming.items()}

    noises = tuple(NoiseDecl(renaming[n.name], n.pmf) for n in model.noises)
    equations = []
    for eq in model.equations:
        if eq.target in intervened:
            equations.append(
                StructuralEquation(
                    target=eq.target,
                    parents=(),
                    noises=(),
                    bodies=((DEFAULT_GROUP_BODY, ex.Lit(intervened[eq.target])),),
                )
            )
        else:
            equations.append(
                StructuralEquation(
                    target=eq.target,
                    parents=eq.parents,
                    noises=tuple(sorted(renaming[n] for n in eq.noises)),
                    bodies=tuple((g, ex.substitute(b, subst)) for g, b in eq.bodies),
                )
            )
    return replace(model, noises=noises, equations=tuple(equations))


def apply_do(model: DiscoModel, intervention: Mapping[str, Value]) -> DiscoModel:
    """Build the interventional submodel: intervened equations become
    constants; under disco coupling every noise is relabeled as a fresh,
    identically distributed copy, while scm coupling keeps the factual
    noises. The empty intervention is allowed and yields a distinct world."""
    require_valid(model)
    return _apply_do_cached(model, normalize_intervention(intervention))


# --- group-conditioned noise sugar -------------------------------------------


def desugar_group_noise(
    name: str, by_group: Mapping[str, FinitePMF]
) -> tuple[NoiseDecl, dict[str, ex.Expr]]:
    """Turn per-group noise laws into one unit-independent uniform noise
    plus per-group decode expressions.

    The returned noise is uniform on 1..L (L the lcm of all probability
    denominators); the decode expression for group g maps the uniform draw
    back to g's declared values with exactly g's probabilities. Substituting
    the decode expression for the noise name inside g's equation bodies
    preserves each unit's conditional law while keeping the declared noise
    distribution unit-independent.
    """
    dens = [p.denominator for pmf in by_group.values() for _, p in pmf.entries]
    grid = lcm(*dens)
    decl = NoiseDecl(name, FinitePMF.uniform(tuple(range(1, grid + 1))))
    decoders: dict[str, ex.Expr] = {}
    for group, pmf in by_group.items():
        cumulative = 0
        expr: ex.Expr | None = None
        thresholds: list[tuple[int, Value]] = []
        for value, prob in pmf.entries:
            cumulative += int(prob * grid)
            thresholds.append((cumulative, value))
        expr = ex.Lit(thresholds[-1][1])
        for bound, value in reversed(thresholds[:-1]):
            expr = ex.IfElse(ex.Compare("<=", ex.Name(name), ex.Lit(bound)), ex.Lit(value), expr)
        decoders[group] = expr
    return decl, decoders
