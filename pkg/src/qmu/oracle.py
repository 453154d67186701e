"""Brute-force ground truth and random desk-scale instances.

The brute force enumerates every memoriless strategy tuple for both players,
evaluates the fully specialised (choice-free) formula for each pair, and
takes the pointwise min-of-max and max-of-min.  Their equality with each
other and with the direct evaluation is the desk-scale check of the
minimax/denotation equivalence; the enumeration order is fixed so failures
reproduce exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import Model, StateSpace, Valuation, expectation, predicate, transition
from .evaluator import EvalConfig, evaluate
from .formula import (
    Angelic, Cond, Const, Demonic, Fix, MaxJ, MinJ, Mu, Node, Nu, Var,
    assign_sites, choice_sites, parse, pretty_print, reduce,
)
from .strategy import (
    MemorilessStrategy, max_site_symbol, min_site_symbol, specialize,
    specialized_model,
)


class StrategySpaceError(ValueError):
    """The instance's strategy space exceeds the enumeration budget."""


#: Hard cap on enumerated strategy pairs (2 ** bits).
MAX_STRATEGY_BITS = 20


@dataclass(frozen=True)
class InstanceBounds:
    """Size limits for generated instances.

    ``max_strategy_bits`` bounds (min sites + max sites) * states so the
    brute force stays fast; ``max_continue_mass`` caps each transition row's
    successor probability mass (mass below one halts with the residue),
    which bounds how slowly values can converge.
    """

    max_states: int = 4
    max_min_sites: int = 2
    max_max_sites: int = 2
    max_binders: int = 2
    max_strategy_bits: int = 12
    max_continue_mass: float = 1.0

    def __post_init__(self):
        if self.max_states < 1 or self.max_states > 4:
            raise ValueError("max_states must be between 1 and 4")
        if self.max_strategy_bits > MAX_STRATEGY_BITS:
            raise ValueError(f"max_strategy_bits cannot exceed {MAX_STRATEGY_BITS}")


@dataclass(frozen=True, eq=False)
class TinyInstance:
    """A small model plus a closed reduced formula over it."""

    model: Model
    phi: Node
    text: str
    open_body: Node      # reduced body with one free variable, for property tests
    free_var: str
    alternating: bool    # nested mu/nu of opposite kinds
    template: str


# Formula templates; {a}/{b} are expectation symbols, {k}/{k2} transitions,
# {g} a predicate, {K} a two-member transition set.  Counts of (min sites,
# max sites, binders) refer to the reduced formula.
_TEMPLATES: list[tuple[str, int, int, int, bool]] = [
    ("{a}", 0, 0, 0, False),
    ("<{k}> {a}", 0, 0, 0, False),
    ("<{k}> {a} /\\ <{k2}> {b}", 1, 0, 0, False),
    ("mu X . {a} \\/ <{k}> X", 0, 1, 1, False),
    ("nu X . {a} /\\ <{k}> X", 1, 0, 1, False),
    ("mu X . <{k}> ({a} \\/ X)", 0, 1, 1, False),
    ("nu X . if {g} then <{k}> X else {a} /\\ <{k2}> X", 1, 0, 1, False),
    ("mu X . <{k}> {a} \\/ <{k2}> (X /\\ <{k}> X)", 1, 1, 1, False),
    ("mu X . nu Y . <{k}> Y /\\ ({a} \\/ <{k2}> X)", 1, 1, 2, True),
    ("nu X . mu Y . <{k}> (({a} /\\ X) \\/ Y)", 1, 1, 2, True),
    ("mu X . ({a} \\/ <{k}> X) /\\ ({b} \\/ <{k2}> X)", 1, 2, 1, False),
    ("nu X . ({a} /\\ <{k}> X) \\/ ({b} /\\ <{k2}> X)", 2, 1, 1, False),
    ("mu X . {a} \\/ <{K}> X", 0, 2, 1, False),
    ("[{K}] ({a} \\/ <{k}> {b})", 1, 2, 0, False),
]

# Junction-free bodies over a free variable W0, for fix/mu/nu comparisons.
_PROBABILISTIC_BODIES = [
    "<{k}> W0",
    "<{k}> <{k2}> W0",
    "if {g} then <{k}> W0 else {a}",
    "<{k}> (if {g} then W0 else {b})",
]

# Bodies with junctions allowed, for monotonicity-style properties.
_OPEN_BODIES = _PROBABILISTIC_BODIES + [
    "{a} \\/ <{k}> W0",
    "{b} /\\ <{k}> W0",
    "<{k}> ({a} \\/ W0) /\\ <{k2}> W0",
]


def _random_transition(rng, n: int, mass_cap: float, nested: bool):
    rows = []
    weights = []
    for _ in range(n):
        n_succ = int(rng.integers(1, min(2, n) + 1))
        targets = rng.choice(n, size=n_succ, replace=False)
        raw = rng.random(n_succ) + 0.05
        raw /= raw.sum()
        u = rng.random()
        if u < 0.6 or nested:
            mass = rng.uniform(0.15, 0.55)
        elif u < 0.85 or mass_cap < 1.0:
            mass = rng.uniform(0.55, 0.85)
        else:
            mass = 1.0
        mass = min(mass, mass_cap)
        rows.append([(int(t), float(mass * p)) for t, p in zip(targets, raw)])
        if mass >= 1.0:
            weights.append(0.0)
        elif rng.random() < 0.3:
            weights.append(0.0)
        else:
            weights.append(float((1.0 - mass) * rng.uniform(0.3, 1.0)))
    return transition(rows, weights)


def _parse_open(text: str, free_var: str, valuation: Valuation) -> Node:
    """Parse and reduce a body with one free variable via a throwaway binder."""
    wrapped = reduce(parse(f"mu {free_var} . {text}"), valuation)
    return assign_sites(wrapped.body)


def random_instance(seed, bounds: InstanceBounds | None = None) -> TinyInstance:
    """Deterministically generate a valid TinyInstance from a seed.

    The template mix always includes alternating mu/nu nesting; instances
    with two binders are kept small (at most 3 states) so nested fixpoint
    solving stays quick.
    """
    bounds = bounds or InstanceBounds()
    rng = np.random.default_rng(seed)

    for _ in range(100):
        text_tmpl, mins, maxs, binders, alternating = _TEMPLATES[
            int(rng.integers(0, len(_TEMPLATES)))]
        if mins > bounds.max_min_sites or maxs > bounds.max_max_sites:
            continue
        if binders > bounds.max_binders:
            continue
        n = int(rng.integers(1, bounds.max_states + 1))
        if binders >= 2:
            n = min(n, 3)
        if (mins + maxs) * n > bounds.max_strategy_bits:
            continue
        break
    else:
        text_tmpl, mins, maxs, binders, alternating = _TEMPLATES[0]
        n = 1

    nested = binders >= 2
    space = StateSpace(tuple(f"s{i}" for i in range(n)))
    t0 = _random_transition(rng, n, bounds.max_continue_mass, nested)
    t1 = _random_transition(rng, n, bounds.max_continue_mass, nested)
    valuation = Valuation(
        expectations={"a0": expectation(rng.random(n)),
                      "a1": expectation(rng.random(n))},
        transitions={"t0": t0, "t1": t1},
        transition_sets={"K0": ("t0", "t1")},
        predicates={"g0": predicate(rng.random(n) < 0.5)},
    )
    model = Model(space, valuation)

    picks = {
        "a": ("a0", "a1")[int(rng.integers(0, 2))],
        "b": ("a0", "a1")[int(rng.integers(0, 2))],
        "k": ("t0", "t1")[int(rng.integers(0, 2))],
        "k2": ("t0", "t1")[int(rng.integers(0, 2))],
        "g": "g0",
        "K": "K0",
    }
    text = text_tmpl.format(**picks)
    phi = reduce(parse(text), valuation)

    body_tmpl = _OPEN_BODIES[int(rng.integers(0, len(_OPEN_BODIES)))]
    open_body = _parse_open(body_tmpl.format(**picks), "W0", valuation)

    return TinyInstance(model=model, phi=phi, text=text, open_body=open_body,
                        free_var="W0", alternating=alternating,
                        template=text_tmpl)


def random_probabilistic_body(seed, bounds: InstanceBounds | None = None
                              ) -> tuple[Model, str, Node]:
    """A junction-free open body over a fresh model, for fix comparisons."""
    bounds = bounds or InstanceBounds()
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, bounds.max_states + 1))
    space = StateSpace(tuple(f"s{i}" for i in range(n)))
    valuation = Valuation(
        expectations={"a0": expectation(rng.random(n)),
                      "a1": expectation(rng.random(n))},
        transitions={"t0": _random_transition(rng, n, bounds.max_continue_mass, False),
                     "t1": _random_transition(rng, n, bounds.max_continue_mass, False)},
        transition_sets={},
        predicates={"g0": predicate(rng.random(n) < 0.5)},
    )
    picks = {"a": "a0", "b": "a1",
             "k": ("t0", "t1")[int(rng.integers(0, 2))],
             "k2": ("t0", "t1")[int(rng.integers(0, 2))],
             "g": "g0"}
    body_tmpl = _PROBABILISTIC_BODIES[int(rng.integers(0, len(_PROBABILISTIC_BODIES)))]
    body = _parse_open(body_tmpl.format(**picks), "W0", valuation)
    return Model(space, valuation), "W0", body


def random_formula(seed, max_depth: int = 5) -> Node:
    """A free-form closed parse-level AST, for printer/parser round trips.

    Uses only node kinds the parser can produce (set modalities rather than
    bare transition modalities, which only arise through reduction).
    """
    rng = np.random.default_rng(seed)
    consts = ("c0", "c1", "c2")
    sets_ = ("K0", "K1", "t0")
    preds = ("g0", "g1")
    binder_pool = ("X", "Y", "Z")

    def gen(depth: int, scope: tuple[str, ...]) -> Node:
        leafy = depth <= 0
        kinds = ["const", "angelic", "demonic", "minj", "maxj",
                 "cond", "mu", "nu", "fix"]
        if scope:
            kinds.append("var")
        if leafy:
            kinds = ["const", "var"] if scope else ["const"]
        kind = kinds[int(rng.integers(0, len(kinds)))]
        if kind == "const":
            return Const(consts[int(rng.integers(0, len(consts)))])
        if kind == "var":
            return Var(scope[int(rng.integers(0, len(scope)))])
        if kind == "angelic":
            return Angelic(sets_[int(rng.integers(0, len(sets_)))],
                           gen(depth - 1, scope))
        if kind == "demonic":
            return Demonic(sets_[int(rng.integers(0, len(sets_)))],
                           gen(depth - 1, scope))
        if kind == "minj":
            return MinJ(gen(depth - 1, scope), gen(depth - 1, scope))
        if kind == "maxj":
            return MaxJ(gen(depth - 1, scope), gen(depth - 1, scope))
        if kind == "cond":
            return Cond(preds[int(rng.integers(0, 2))],
                        gen(depth - 1, scope), gen(depth - 1, scope))
        var = binder_pool[int(rng.integers(0, len(binder_pool)))]
        body = gen(depth - 1, scope + (var,))
        if kind == "mu":
            return Mu(var, body)
        if kind == "nu":
            return Nu(var, body)
        return Fix(float(np.round(rng.random(), 6)), var, body)

    return assign_sites(gen(max_depth, ()))


# --- Brute-force minimax ----------------------------------------------------

def bits_to_choices(bits: tuple[bool, ...], n_sites: int,
                    n_states: int) -> tuple[np.ndarray, ...]:
    """Unpack a flat (site-major) boolean tuple into per-site predicates."""
    return tuple(np.array(bits[site * n_states:(site + 1) * n_states], dtype=bool)
                 for site in range(n_sites))


@dataclass(frozen=True, eq=False)
class BruteForceResult:
    minimax: np.ndarray
    maximin: np.ndarray
    min_witness: MemorilessStrategy   # achieves the min-of-max as a single tuple
    max_witness: MemorilessStrategy   # achieves the max-of-min as a single tuple
    min_witness_gap: float
    max_witness_gap: float
    table: np.ndarray                 # (n_min_tuples, n_max_tuples, n_states)


def brute_minimax(inst: TinyInstance, cfg: EvalConfig | None = None) -> BruteForceResult:
    """Exact strategy-enumeration values of a tiny instance.

    Evaluates the fully specialised formula for every (min tuple, max tuple)
    pair; min/max tuples are enumerated in lexicographic (site, state) order.
    """
    cfg = cfg or EvalConfig()
    phi = inst.phi
    model = inst.model
    n = model.space.size
    mins, maxs = choice_sites(phi)
    bits = (mins + maxs) * n
    if bits > MAX_STRATEGY_BITS:
        raise StrategySpaceError(
            f"strategy space has 2^{bits} tuples, budget is 2^{MAX_STRATEGY_BITS}")

    placeholder = MemorilessStrategy(
        min_choices=tuple(np.zeros(n, dtype=bool) for _ in range(mins)),
        max_choices=tuple(np.zeros(n, dtype=bool) for _ in range(maxs)),
    )
    phi_spec, _ = specialize(phi, placeholder, n)

    min_tuples = list(itertools.product((False, True), repeat=mins * n))
    max_tuples = list(itertools.product((False, True), repeat=maxs * n))
    table = np.empty((len(min_tuples), len(max_tuples), n))
    for i, min_bits in enumerate(min_tuples):
        min_preds = {min_site_symbol(site): arr for site, arr in
                     enumerate(bits_to_choices(min_bits, mins, n))}
        for j, max_bits in enumerate(max_tuples):
            preds = dict(min_preds)
            preds.update({max_site_symbol(site): arr for site, arr in
                          enumerate(bits_to_choices(max_bits, maxs, n))})
            m2 = specialized_model(model, preds)
            table[i, j] = evaluate(phi_spec, m2, cfg).result

    max_first = table.max(axis=1)          # best Max reply per Min tuple
    minimax = max_first.min(axis=0)
    min_first = table.min(axis=0)          # worst Min reply per Max tuple
    maximin = min_first.max(axis=0)

    min_gaps = (max_first - minimax[None, :]).max(axis=1)
    i0 = int(np.argmin(min_gaps))
    max_gaps = (maximin[None, :] - min_first).max(axis=1)
    j0 = int(np.argmin(max_gaps))

    return BruteForceResult(
        minimax=minimax,
        maximin=maximin,
        min_witness=MemorilessStrategy(
            min_choices=bits_to_choices(min_tuples[i0], mins, n)),
        max_witness=MemorilessStrategy(
            max_choices=bits_to_choices(max_tuples[j0], maxs, n)),
        min_witness_gap=float(min_gaps[i0]),
        max_witness_gap=float(max_gaps[j0]),
        table=table,
    )


# --- Randomised cross-checking ----------------------------------------------

@dataclass(frozen=True)
class CheckFailure:
    index: int
    message: str
    dump_paths: tuple[str, ...] = ()


@dataclass(frozen=True)
class CrosscheckReport:
    checked: int
    failures: tuple[CheckFailure, ...]

    @property
    def ok(self) -> bool:
        return not self.failures


def crosscheck(count: int, seed: int, bounds: InstanceBounds | None = None,
               cfg: EvalConfig | None = None, dump_dir=None,
               evaluate_fn=None, tolerance: float = 1e-6) -> CrosscheckReport:
    """Run the minimax = maximin = denotation check over random instances.

    ``evaluate_fn`` is an injection point for fault testing; it defaults to
    the real evaluator.  On failure the instance is dumped (model file plus
    formula text) for replay when ``dump_dir`` is given.
    """
    evaluate_fn = evaluate_fn or evaluate
    cfg = cfg or EvalConfig()
    failures: list[CheckFailure] = []
    for i in range(count):
        inst = random_instance([seed, i], bounds)
        result = brute_minimax(inst, cfg)
        deno = evaluate_fn(inst.phi, inst.model, cfg).result
        gap_mm = float(np.max(np.abs(result.minimax - result.maximin)))
        gap_de = float(np.max(np.abs(result.minimax - deno)))
        if gap_mm > tolerance or gap_de > tolerance:
            message = (f"instance {i}: |minimax - maximin| = {gap_mm:.3e}, "
                       f"|minimax - evaluate| = {gap_de:.3e}")
            dump_paths = ()
            if dump_dir is not None:
                dump_paths = _dump_instance(dump_dir, i, inst)
            failures.append(CheckFailure(i, message, dump_paths))
    return CrosscheckReport(checked=count, failures=tuple(failures))


def _dump_instance(dump_dir, index: int, inst: TinyInstance) -> tuple[str, ...]:
    import os

    from .modelio import save_model

    os.makedirs(dump_dir, exist_ok=True)
    model_path = os.path.join(str(dump_dir), f"counterexample_{index}.model.json")
    formula_path = os.path.join(str(dump_dir), f"counterexample_{index}.formula.txt")
    save_model(model_path, inst.model)
    with open(formula_path, "w") as fh:
        fh.write(pretty_print(inst.phi) + "\n")
    return (model_path, formula_path)
