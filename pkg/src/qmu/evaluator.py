"""Denotational evaluation by nested fixed-point iteration.

A formula denotes an expectation computed pointwise over the state space:
constants and variables look up vectors, a modality is the pre-expectation of
its body, junctions are pointwise min/max, and the binders are solved by
plain Kleene iteration from their canonical seeds (all-zero for ``mu``,
all-one for ``nu``, the constant ``x`` for ``fix(x)``).  Nested fixpoints are
re-solved from their seeds on every outer iterate, which keeps alternation
correct at the cost of some repeated work.

The strategy-extended semantics resolves junctions by consulting a pair of
strategy functions instead of taking min/max; with memoriless strategies the
specialised system is solved exactly, otherwise the formula is unfolded to a
bounded depth with truncated fixpoints contributing their binder's default
(0 for ``mu``, 1 for ``nu``).
"""

from __future__ import annotations

import sys
from collections import deque
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import Model, pre_expectation_all
from .formula import (
    Cond, Const, Fix, MaxJ, MinJ, Modal, Mu, Node, Nu, Var,
    choice_sites, contains_fix, free_variables, is_reduced, junction_free,
)


class EvaluationError(ValueError):
    """Base class for evaluation failures."""


class UnresolvedSymbolError(EvaluationError):
    """A formula symbol has no binding in the valuation."""

    def __init__(self, kind: str, name: str):
        super().__init__(f"unresolved {kind} symbol {name!r}")
        self.kind = kind
        self.name = name


class FixNotSupportedError(EvaluationError):
    """Intermediate fixed points require the dedicated entry point."""


class NondeterministicFixBodyError(EvaluationError):
    """A fix(x) body contains min/max choice and force was not requested."""


class DivergenceError(EvaluationError):
    """Forced fix(x) iteration showed no sign of converging."""


class NotConvergedError(EvaluationError):
    """An operation that needs a converged value did not get one."""


#: Window length for the forced-fix oscillation detector: iteration aborts
#: when the residual has not decreased once across this many iterates.
_DIVERGENCE_WINDOW = 50


@dataclass(frozen=True)
class EvalConfig:
    """Iteration control: sup-norm threshold and per-fixpoint cap."""

    tolerance: float = 1e-9
    max_iterations: int = 1_000_000

    def __post_init__(self):
        if self.tolerance <= 0.0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class FixpointStats:
    """Iteration record for one binder (its most recent solve)."""

    binder: str
    iterations: int
    residual: float
    converged: bool
    solves: int


@dataclass(frozen=True, eq=False)
class EvalReport:
    result: np.ndarray
    fixpoints: dict[str, FixpointStats]
    converged: bool

    def __eq__(self, other):
        if not isinstance(other, EvalReport):
            return NotImplemented
        return (np.array_equal(self.result, other.result)
                and self.fixpoints == other.fixpoints
                and self.converged == other.converged)


@dataclass(frozen=True)
class PathStrategy:
    """Choice rule for one player: (site id, path so far, state) -> bool.

    True means "take the left 'junct".  The path is the sequence of game
    positions traversed so far, with fixpoint re-entries presented by binder
    name only, so strategies cannot distinguish the underlying colours.
    ``memoriless`` promises the rule ignores the path argument entirely.
    """

    decide: Callable[[int, Sequence, int], bool]
    memoriless: bool = False

    @staticmethod
    def from_choices(choices: Sequence) -> "PathStrategy":
        """Per-site, per-state boolean tables; ignores history."""
        tables = tuple(np.asarray(c, dtype=bool) for c in choices)
        return PathStrategy(
            decide=lambda site, path, s: bool(tables[site][s]),
            memoriless=True,
        )

    @staticmethod
    def constant(left: bool) -> "PathStrategy":
        return PathStrategy(decide=lambda site, path, s: left, memoriless=True)


class _Engine:
    """Shared tree-walking evaluator with pluggable junction handling."""

    def __init__(self, model: Model, cfg: EvalConfig, fix_policy: str = "reject",
                 min_masks=None, max_masks=None):
        self.model = model
        self.v = model.valuation
        self.n = model.space.size
        self.cfg = cfg
        self.fix_policy = fix_policy
        self.min_masks = min_masks
        self.max_masks = max_masks
        self.stats: dict[str, FixpointStats] = {}
        self._fix_body_ok: dict[int, bool] = {}

    # -- symbol lookups ------------------------------------------------

    def _const(self, name: str) -> np.ndarray:
        try:
            return self.v.expectations[name]
        except KeyError:
            raise UnresolvedSymbolError("expectation", name) from None

    def _transition(self, name: str):
        try:
            return self.v.transitions[name]
        except KeyError:
            raise UnresolvedSymbolError("transition", name) from None

    def _predicate(self, name: str) -> np.ndarray:
        try:
            return self.v.predicates[name]
        except KeyError:
            raise UnresolvedSymbolError("predicate", name) from None

    # -- evaluation ----------------------------------------------------

    def eval(self, node: Node, env: dict[str, np.ndarray]) -> np.ndarray:
        if isinstance(node, Modal):
            return pre_expectation_all(self._transition(node.transition),
                                       self.eval(node.body, env))
        if isinstance(node, MaxJ):
            left = self.eval(node.left, env)
            right = self.eval(node.right, env)
            if self.max_masks is not None:
                return np.where(self.max_masks[node.site], left, right)
            return np.maximum(left, right)
        if isinstance(node, MinJ):
            left = self.eval(node.left, env)
            right = self.eval(node.right, env)
            if self.min_masks is not None:
                return np.where(self.min_masks[node.site], left, right)
            return np.minimum(left, right)
        if isinstance(node, Var):
            try:
                return env[node.name]
            except KeyError:
                raise UnresolvedSymbolError("variable", node.name) from None
        if isinstance(node, Const):
            return self._const(node.name)
        if isinstance(node, Cond):
            return np.where(self._predicate(node.predicate),
                            self.eval(node.then_branch, env),
                            self.eval(node.else_branch, env))
        if isinstance(node, (Mu, Nu, Fix)):
            return self.solve_fixpoint(node, env)
        raise EvaluationError(f"cannot evaluate node {node!r}; reduce the formula first")

    def _seed(self, node) -> np.ndarray:
        if isinstance(node, Mu):
            return np.zeros(self.n)
        if isinstance(node, Nu):
            return np.ones(self.n)
        return np.full(self.n, float(node.start))

    def _check_fix(self, node: Fix) -> bool:
        """Returns whether divergence detection is needed for this node."""
        if self.fix_policy == "reject":
            raise FixNotSupportedError(
                "formula contains fix(x) binders; use evaluate_fix")
        ok = self._fix_body_ok.get(id(node))
        if ok is None:
            ok = junction_free(node.body)
            self._fix_body_ok[id(node)] = ok
        if ok:
            return False
        if self.fix_policy != "force":
            raise NondeterministicFixBodyError(
                f"fix body of {node.var!r} contains min/max choice; "
                "pass force=True to iterate anyway")
        return True

    def solve_fixpoint(self, node, env: dict[str, np.ndarray]) -> np.ndarray:
        detect_divergence = isinstance(node, Fix) and self._check_fix(node)
        cur = self._seed(node)
        var = node.var
        outer = env.get(var)
        tol = self.cfg.tolerance
        residual = np.inf
        iterations = 0
        window: deque[float] = deque(maxlen=_DIVERGENCE_WINDOW + 1)
        try:
            for iterations in range(1, self.cfg.max_iterations + 1):
                env[var] = cur
                new = np.clip(self.eval(node.body, env), 0.0, 1.0)
                residual = float(np.max(np.abs(new - cur)))
                cur = new
                if residual <= tol:
                    break
                if detect_divergence:
                    window.append(residual)
                    if (len(window) == _DIVERGENCE_WINDOW + 1
                            and all(b >= a for a, b in zip(window, list(window)[1:]))):
                        raise DivergenceError(
                            f"fix({node.start}) iteration for {var!r} shows "
                            f"non-decreasing residual over {_DIVERGENCE_WINDOW} "
                            "iterates")
        finally:
            if outer is None:
                env.pop(var, None)
            else:
                env[var] = outer
        converged = residual <= tol
        prev = self.stats.get(var)
        self.stats[var] = FixpointStats(
            binder=var,
            iterations=iterations,
            residual=residual,
            converged=converged and (prev.converged if prev else True),
            solves=(prev.solves if prev else 0) + 1,
        )
        return cur


def _check_entry(phi: Node) -> None:
    free = free_variables(phi)
    if free:
        raise UnresolvedSymbolError("variable", sorted(free)[0])
    if not is_reduced(phi):
        raise EvaluationError("formula contains set modalities; reduce it first")


def _report(engine: _Engine, result: np.ndarray) -> EvalReport:
    result = np.clip(result, 0.0, 1.0)
    result.setflags(write=False)
    converged = all(st.converged for st in engine.stats.values())
    return EvalReport(result=result, fixpoints=dict(engine.stats), converged=converged)


def evaluate(phi: Node, model: Model, cfg: EvalConfig | None = None) -> EvalReport:
    """Evaluate a closed, reduced formula without fix(x) binders."""
    cfg = cfg or EvalConfig()
    _check_entry(phi)
    engine = _Engine(model, cfg, fix_policy="reject")
    return _report(engine, engine.eval(phi, {}))


def evaluate_fix(phi: Node, model: Model, cfg: EvalConfig | None = None,
                 force: bool = False) -> EvalReport:
    """Evaluate a formula that may contain intermediate fixed points.

    Each ``fix(x)`` is the limit of repeated body application starting from
    the constant-x expectation.  Bodies containing min/max choice are
    rejected unless ``force`` is set, in which case iteration proceeds under
    an oscillation detector that raises :class:`DivergenceError`.
    """
    cfg = cfg or EvalConfig()
    _check_entry(phi)
    engine = _Engine(model, cfg, fix_policy="force" if force else "pure")
    return _report(engine, engine.eval(phi, {}))


def converged_walk(phi: Node, model: Model, cfg: EvalConfig | None,
                   on_junction) -> np.ndarray:
    """Walk a formula in its final converged environment.

    Every binder is solved to its fixpoint under the already-converged
    enclosing environment and its body then walked once with the solved
    value bound.  ``on_junction(node, left, right)`` is called at each
    min/max node with the operand expectations seen there; the return value
    is the formula's expectation, which agrees with :func:`evaluate` up to
    iteration tolerance.
    """
    cfg = cfg or EvalConfig()
    _check_entry(phi)
    engine = _Engine(model, cfg, fix_policy="pure")

    def walk(node: Node, env: dict[str, np.ndarray]) -> np.ndarray:
        if isinstance(node, (Mu, Nu, Fix)):
            value = engine.solve_fixpoint(node, env)
            outer = env.get(node.var)
            env[node.var] = value
            try:
                return walk(node.body, env)
            finally:
                if outer is None:
                    env.pop(node.var, None)
                else:
                    env[node.var] = outer
        if isinstance(node, MaxJ):
            left = walk(node.left, env)
            right = walk(node.right, env)
            on_junction(node, left, right)
            return np.maximum(left, right)
        if isinstance(node, MinJ):
            left = walk(node.left, env)
            right = walk(node.right, env)
            on_junction(node, left, right)
            return np.minimum(left, right)
        if isinstance(node, Modal):
            return pre_expectation_all(engine._transition(node.transition),
                                       walk(node.body, env))
        if isinstance(node, Cond):
            return np.where(engine._predicate(node.predicate),
                            walk(node.then_branch, env),
                            walk(node.else_branch, env))
        return engine.eval(node, env)

    return np.clip(walk(phi, {}), 0.0, 1.0)


def _strategy_masks(phi: Node, model: Model, sigma: PathStrategy | None,
                    kind: str) -> list | None:
    if sigma is None:
        return None
    mins, maxs = choice_sites(phi)
    count = mins if kind == "min" else maxs
    n = model.space.size
    return [np.array([bool(sigma.decide(site, (), s)) for s in range(n)])
            for site in range(count)]


def evaluate_with_strategies(
    phi: Node,
    model: Model,
    sigma_min: PathStrategy | None,
    sigma_max: PathStrategy | None,
    cfg: EvalConfig | None = None,
    depth: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Strategy-extended semantics, as a (lower, upper) pair of expectations.

    A ``None`` strategy leaves that player's junctions adversarial (true
    min/max).  With memoriless (or absent) strategies on both sides the
    junctions collapse to per-state selections and the specialised system is
    solved by fixpoint iteration; lower and upper coincide.  Otherwise the
    formula is unfolded: each binder may be re-entered at most ``depth``
    times per binding, and a truncated ``mu`` (``nu``) contributes 0 (1).
    """
    cfg = cfg or EvalConfig()
    _check_entry(phi)
    if contains_fix(phi):
        raise FixNotSupportedError("strategy semantics does not cover fix(x)")
    if ((sigma_min is None or sigma_min.memoriless)
            and (sigma_max is None or sigma_max.memoriless)):
        engine = _Engine(model, cfg, fix_policy="reject",
                         min_masks=_strategy_masks(phi, model, sigma_min, "min"),
                         max_masks=_strategy_masks(phi, model, sigma_max, "max"))
        value = np.clip(engine.eval(phi, {}), 0.0, 1.0)
        return value.copy(), value.copy()
    if depth is None:
        raise TypeError("history-dependent strategies require an unfolding depth")
    if depth < 0:
        raise ValueError("depth must be non-negative")
    n = model.space.size
    values = np.empty(n)
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 100_000))
    try:
        for s0 in range(n):
            values[s0] = _unfold(phi, model, s0, sigma_min, sigma_max, depth)
    finally:
        sys.setrecursionlimit(limit)
    values = np.clip(values, 0.0, 1.0)
    return values.copy(), values.copy()


def _unfold(phi: Node, model: Model, s0: int, sigma_min: PathStrategy | None,
            sigma_max: PathStrategy | None, depth: int) -> float:
    """Depth-bounded unfolding of the path/strategy-extended semantics.

    The path built here mirrors the game's position sequence exactly (binder
    positions are followed by a binder-name position), so history-dependent
    strategies see the same histories in both interpretations.
    """
    v = model.valuation
    view: list = []

    def go(node: Node, s: int, budgets: dict[str, int],
           defaults: dict[str, float], bodies: dict[str, Node]) -> float:
        view.append((node, s))
        try:
            if isinstance(node, Const):
                try:
                    return float(v.expectations[node.name][s])
                except KeyError:
                    raise UnresolvedSymbolError("expectation", node.name) from None
            if isinstance(node, Var):
                remaining = budgets[node.name]
                if remaining == 0:
                    return defaults[node.name]
                inner = dict(budgets)
                inner[node.name] = remaining - 1
                # the variable position itself is what strategies see
                view[-1] = (node.name, s)
                return go(bodies[node.name], s, inner, defaults, bodies)
            if isinstance(node, Modal):
                t = v.transitions.get(node.transition)
                if t is None:
                    raise UnresolvedSymbolError("transition", node.transition)
                total = t.payoff_weights[s]
                for target, prob in t.successors[s]:
                    total += prob * go(node.body, target, budgets, defaults, bodies)
                return total
            if isinstance(node, MaxJ):
                if sigma_max is None:
                    return max(go(node.left, s, budgets, defaults, bodies),
                               go(node.right, s, budgets, defaults, bodies))
                take_left = sigma_max.decide(node.site, view, s)
                return go(node.left if take_left else node.right,
                          s, budgets, defaults, bodies)
            if isinstance(node, MinJ):
                if sigma_min is None:
                    return min(go(node.left, s, budgets, defaults, bodies),
                               go(node.right, s, budgets, defaults, bodies))
                take_left = sigma_min.decide(node.site, view, s)
                return go(node.left if take_left else node.right,
                          s, budgets, defaults, bodies)
            if isinstance(node, Cond):
                pred = v.predicates.get(node.predicate)
                if pred is None:
                    raise UnresolvedSymbolError("predicate", node.predicate)
                branch = node.then_branch if pred[s] else node.else_branch
                return go(branch, s, budgets, defaults, bodies)
            if isinstance(node, (Mu, Nu)):
                default = 0.0 if isinstance(node, Mu) else 1.0
                inner_defaults = dict(defaults)
                inner_defaults[node.var] = default
                inner_bodies = dict(bodies)
                inner_bodies[node.var] = node.body
                if depth == 0:
                    view.append((node.var, s))
                    try:
                        return default
                    finally:
                        view.pop()
                inner = dict(budgets)
                inner[node.var] = depth - 1
                # game semantics inserts a re-entry position after binding
                view.append((node.var, s))
                try:
                    return go(node.body, s, inner, inner_defaults, inner_bodies)
                finally:
                    view.pop()
            raise EvaluationError(f"cannot unfold node {node!r}")
        finally:
            view.pop()

    return min(1.0, max(0.0, go(phi, s0, {}, {}, {})))
