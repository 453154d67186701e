"""Operational semantics: playouts of the formula-gambling game.

A play walks positions ``(formula, state)`` until a payoff: constants pay
their value, a modality rolls the transition's distribution (possibly
halting with the residual mass at the transition's payoff), junctions ask
the players' strategies, and a fixpoint binds a fresh colour that re-enters
its body.  A colour revisited more than ``max_depth`` times truncates the
play: the recorded value bracket is then the binder's default, 0 for ``mu``
and 1 for ``nu``, as if the path had continued forever.  A secondary step
budget of ``max_depth * formula_size`` catches non-colour growth, with the
uninformative bracket (0, 1).

``expand_tree`` computes the same truncated value exactly, by expanding the
whole probabilistic tree and weighting payoffs by path probability instead
of sampling.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import Model, halt_payoff
from .evaluator import PathStrategy, UnresolvedSymbolError
from .formula import (
    Cond, Const, Fix, MaxJ, MinJ, Modal, Mu, Node, Nu, Var,
    children, formula_size, free_variables, is_reduced,
)


class GameError(ValueError):
    """A playout or tree expansion cannot proceed."""


class TreeBudgetError(GameError):
    """Exact tree expansion exceeded its node cap."""


@dataclass(frozen=True)
class Colour:
    """Fresh token bound when a fixpoint unfolds; identifies the recursion.

    The creation index is the path length at binding time, which makes every
    colour of a playout distinct.
    """

    binder: str
    kind: str  # "mu" | "nu"
    created_at: int


@dataclass
class GamePath:
    """Recorded positions of one playout plus per-colour occurrence counts.

    Positions are ``("node", formula, state)``, ``("colour", Colour, state)``
    or a final ``("payoff", y)``.
    """

    positions: list
    colour_counts: dict[Colour, int]

    @property
    def steps(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class PlayoutResult:
    value_low: float
    value_high: float
    terminated: bool
    steps: int
    truncating_colour_kind: str | None  # "mu" | "nu" | None


class EstimateResult(NamedTuple):
    mean_low: float
    mean_high: float
    std_error: float
    n_truncated: int


def path_bracket(path: GamePath, max_depth: int) -> PlayoutResult:
    """Value bracket of a recorded path, per its stopping reason.

    Insensitive to any finite colour-free prefix: only the terminal payoff
    or the over-limit colour matters.
    """
    steps = path.steps
    last = path.positions[-1] if path.positions else None
    if last is not None and last[0] == "payoff":
        y = float(last[1])
        return PlayoutResult(y, y, True, steps, None)
    for colour, count in path.colour_counts.items():
        if count > max_depth:
            default = 0.0 if colour.kind == "mu" else 1.0
            return PlayoutResult(default, default, False, steps, colour.kind)
    return PlayoutResult(0.0, 1.0, False, steps, None)


def walk_playout(phi: Node, model: Model, s0: int, sigma_min: PathStrategy,
                 sigma_max: PathStrategy, max_depth: int, rng) -> GamePath:
    """Play one game, recording the full position sequence."""
    if max_depth < 1:
        raise GameError("max_depth must be at least 1")
    _check_playable(phi, model)
    v = model.valuation
    step_budget = max_depth * formula_size(phi)

    positions: list = []
    view: list = []  # what strategies may inspect: (node-or-binder-name, state)
    counts: dict[Colour, int] = {}
    env: dict[str, Colour] = {}
    bodies: dict[Colour, Node] = {}

    def as_colour(node: Node, s: int):
        """Resolve variables to their colour before taking up a position."""
        if isinstance(node, Var):
            return ("colour", env[node.name], s)
        return ("node", node, s)

    current = as_colour(phi, s0)
    while True:
        positions.append(current)
        if current[0] == "payoff":
            break
        kind, label, s = current
        view.append((label.binder if kind == "colour" else label, s))
        if kind == "colour":
            colour = label
            counts[colour] = counts.get(colour, 0) + 1
            if counts[colour] > max_depth:
                break
            if len(positions) > step_budget:
                break
            current = as_colour(bodies[colour], s)
            continue
        if len(positions) > step_budget:
            break
        node = label
        if isinstance(node, Const):
            current = ("payoff", float(v.expectations[node.name][s]))
        elif isinstance(node, Modal):
            t = v.transitions[node.transition]
            u = rng.random()
            acc = 0.0
            chosen = None
            row = t.successors[s]
            for target, prob in row:
                acc += prob
                if u <= acc:
                    chosen = target
                    break
            if chosen is None:
                if 1.0 - acc <= 1e-12 and row:
                    # float dust: the distribution is total, keep last edge
                    chosen = row[-1][0]
                else:
                    current = ("payoff", halt_payoff(t, s))
                    continue
            current = as_colour(node.body, chosen)
        elif isinstance(node, MaxJ):
            take_left = sigma_max.decide(node.site, view, s)
            current = as_colour(node.left if take_left else node.right, s)
        elif isinstance(node, MinJ):
            take_left = sigma_min.decide(node.site, view, s)
            current = as_colour(node.left if take_left else node.right, s)
        elif isinstance(node, Cond):
            branch = (node.then_branch if v.predicates[node.predicate][s]
                      else node.else_branch)
            current = as_colour(branch, s)
        elif isinstance(node, (Mu, Nu)):
            colour = Colour(node.var, "mu" if isinstance(node, Mu) else "nu",
                            created_at=len(positions))
            env[node.var] = colour
            bodies[colour] = node.body
            current = ("colour", colour, s)
        else:
            raise GameError(f"cannot play node {node!r}")

    return GamePath(positions=positions, colour_counts=counts)


def play(phi: Node, model: Model, s0: int, sigma_min: PathStrategy,
         sigma_max: PathStrategy, max_depth: int, rng) -> PlayoutResult:
    """One playout; sampling uses only the supplied generator."""
    path = walk_playout(phi, model, s0, sigma_min, sigma_max, max_depth, rng)
    return path_bracket(path, max_depth)


def estimate(phi: Node, model: Model, s0: int, sigma_min: PathStrategy,
             sigma_max: PathStrategy, n_paths: int, max_depth: int,
             seed: int) -> EstimateResult:
    """Monte-Carlo value estimate over independent seeded playouts.

    Each path draws from its own stream derived from (seed, path index), so
    the result is a deterministic function of the seed and is reproducible
    under any parallel schedule.
    """
    if n_paths < 1:
        raise GameError("n_paths must be at least 1")
    streams = np.random.SeedSequence(seed).spawn(n_paths)
    lows = np.empty(n_paths)
    highs = np.empty(n_paths)
    n_truncated = 0
    for i, stream in enumerate(streams):
        rng = np.random.Generator(np.random.PCG64(stream))
        result = play(phi, model, s0, sigma_min, sigma_max, max_depth, rng)
        lows[i] = result.value_low
        highs[i] = result.value_high
        if not result.terminated:
            n_truncated += 1
    if n_paths > 1:
        std_error = float(np.std(highs, ddof=1) / np.sqrt(n_paths))
    else:
        std_error = 0.0
    return EstimateResult(float(lows.mean()), float(highs.mean()),
                          std_error, n_truncated)


def expand_tree(phi: Node, model: Model, s0: int, sigma_min: PathStrategy,
                sigma_max: PathStrategy, depth: int,
                node_cap: int = 2_000_000) -> tuple[float, float]:
    """Exact expected value of the depth-truncated game from ``s0``.

    Expands the probabilistic tree (probability-one edges for all
    non-modality rules) and sums payoff values weighted by path probability.
    Colour re-entry is bounded exactly as in :func:`play`.  Raises
    :class:`TreeBudgetError` when more than ``node_cap`` tree nodes would be
    built.

    With two memoriless strategies the expansion shares identical subtrees,
    which keeps deep expansions tractable.
    """
    if depth < 0:
        raise GameError("depth must be non-negative")
    _check_playable(phi, model)
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 100_000))
    try:
        if sigma_min.memoriless and sigma_max.memoriless:
            return _expand_shared(phi, model, s0, sigma_min, sigma_max, depth,
                                  node_cap)
        return _expand_literal(phi, model, s0, sigma_min, sigma_max, depth,
                               node_cap)
    finally:
        sys.setrecursionlimit(limit)


def _check_playable(phi: Node, model: Model) -> None:
    free = free_variables(phi)
    if free:
        raise UnresolvedSymbolError("variable", sorted(free)[0])
    if not is_reduced(phi):
        raise GameError("formula contains set modalities; reduce it first")
    stack = [phi]
    while stack:
        node = stack.pop()
        if isinstance(node, Fix):
            raise GameError("the game rules do not cover fix(x) binders")
        if isinstance(node, (Modal,)):
            stack.append(node.body)
        elif isinstance(node, (MinJ, MaxJ)):
            stack.extend((node.left, node.right))
        elif isinstance(node, Cond):
            stack.extend((node.then_branch, node.else_branch))
        elif isinstance(node, (Mu, Nu)):
            stack.append(node.body)


def _expand_literal(phi: Node, model: Model, s0: int, sigma_min: PathStrategy,
                    sigma_max: PathStrategy, depth: int,
                    node_cap: int) -> tuple[float, float]:
    """Tree expansion with explicit paths and colour bookkeeping."""
    v = model.valuation
    view: list = []
    visits = [0]

    def tick():
        visits[0] += 1
        if visits[0] > node_cap:
            raise TreeBudgetError(f"tree expansion exceeded {node_cap} nodes")

    def colour_value(colour: Colour, s: int, env, counts, bodies) -> float:
        tick()
        view.append((colour.binder, s))
        try:
            seen = counts.get(colour, 0) + 1
            if seen > depth:
                return 0.0 if colour.kind == "mu" else 1.0
            inner = dict(counts)
            inner[colour] = seen
            return node_value(bodies[colour], s, env, inner, bodies)
        finally:
            view.pop()

    def node_value(node: Node, s: int, env, counts, bodies) -> float:
        if isinstance(node, Var):
            return colour_value(env[node.name], s, env, counts, bodies)
        tick()
        view.append((node, s))
        try:
            if isinstance(node, Const):
                return float(v.expectations[node.name][s])
            if isinstance(node, Modal):
                t = v.transitions[node.transition]
                total = t.payoff_weights[s]
                for target, prob in t.successors[s]:
                    total += prob * node_value(node.body, target, env, counts,
                                               bodies)
                return total
            if isinstance(node, MaxJ):
                take_left = sigma_max.decide(node.site, view, s)
                return node_value(node.left if take_left else node.right,
                                  s, env, counts, bodies)
            if isinstance(node, MinJ):
                take_left = sigma_min.decide(node.site, view, s)
                return node_value(node.left if take_left else node.right,
                                  s, env, counts, bodies)
            if isinstance(node, Cond):
                branch = (node.then_branch if v.predicates[node.predicate][s]
                          else node.else_branch)
                return node_value(branch, s, env, counts, bodies)
            if isinstance(node, (Mu, Nu)):
                colour = Colour(node.var,
                                "mu" if isinstance(node, Mu) else "nu",
                                created_at=len(view))
                inner_env = dict(env)
                inner_env[node.var] = colour
                inner_bodies = dict(bodies)
                inner_bodies[colour] = node.body
                return colour_value(colour, s, inner_env, counts, inner_bodies)
            raise GameError(f"cannot expand node {node!r}")
        finally:
            view.pop()

    value = node_value(phi, s0, {}, {}, {})
    return value, value


def _expand_shared(phi: Node, model: Model, s0: int, sigma_min: PathStrategy,
                   sigma_max: PathStrategy, depth: int,
                   node_cap: int) -> tuple[float, float]:
    """Tree expansion with subtree sharing, valid for memoriless strategies.

    With history-insensitive strategies the value below a position depends
    only on the formula node, the state and the remaining re-entry budget of
    each enclosing binder, so identical subtrees are computed once.
    """
    v = model.valuation
    binder_default: dict[str, float] = {}
    binder_body: dict[str, Node] = {}
    stack = [phi]
    while stack:
        cur = stack.pop()
        if isinstance(cur, (Mu, Nu)):
            binder_default[cur.var] = 0.0 if isinstance(cur, Mu) else 1.0
            binder_body[cur.var] = cur.body
        stack.extend(children(cur))
    memo: dict = {}
    visits = [0]

    def go(node: Node, s: int, budgets: tuple) -> float:
        key = (id(node), s, budgets)
        hit = memo.get(key)
        if hit is not None:
            return hit
        visits[0] += 1
        if visits[0] > node_cap:
            raise TreeBudgetError(f"tree expansion exceeded {node_cap} nodes")
        if isinstance(node, Const):
            value = float(v.expectations[node.name][s])
        elif isinstance(node, Var):
            entry = dict(budgets)
            remaining = entry[node.name]
            if remaining == 0:
                value = binder_default[node.name]
            else:
                entry[node.name] = remaining - 1
                value = go(binder_body[node.name], s, tuple(sorted(entry.items())))
        elif isinstance(node, Modal):
            t = v.transitions[node.transition]
            value = t.payoff_weights[s]
            for target, prob in t.successors[s]:
                value += prob * go(node.body, target, budgets)
        elif isinstance(node, MaxJ):
            take_left = sigma_max.decide(node.site, (), s)
            value = go(node.left if take_left else node.right, s, budgets)
        elif isinstance(node, MinJ):
            take_left = sigma_min.decide(node.site, (), s)
            value = go(node.left if take_left else node.right, s, budgets)
        elif isinstance(node, Cond):
            branch = (node.then_branch if v.predicates[node.predicate][s]
                      else node.else_branch)
            value = go(branch, s, budgets)
        elif isinstance(node, (Mu, Nu)):
            if depth == 0:
                value = binder_default[node.var]
            else:
                entry = dict(budgets)
                entry[node.var] = depth - 1
                value = go(node.body, s, tuple(sorted(entry.items())))
        else:
            raise GameError(f"cannot expand node {node!r}")
        memo[key] = value
        return value

    value = go(phi, s0, ())
    return value, value
