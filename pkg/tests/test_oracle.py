"""Brute-force enumeration oracle and random instance generation."""

import numpy as np
import pytest

from qmu.core import validate
from qmu.evaluator import evaluate
from qmu.formula import MaxJ, MinJ, Mu, Nu, alpha_equal, choice_sites, parse, reduce
from qmu.modelio import load_model
from qmu.oracle import (
    _TEMPLATES, InstanceBounds, StrategySpaceError, TinyInstance,
    brute_minimax, crosscheck, random_instance,
)
from qmu.strategy import specialize, specialized_model


class TestRandomInstance:
    def test_deterministic_in_seed(self):
        a = random_instance(99)
        b = random_instance(99)
        assert a.text == b.text
        assert alpha_equal(a.phi, b.phi)
        for name, t in a.model.valuation.transitions.items():
            assert t == b.model.valuation.transitions[name]
        for name, arr in a.model.valuation.expectations.items():
            assert np.array_equal(arr, b.model.valuation.expectations[name])

    def test_thousand_instances_validate(self):
        for trial in range(1000):
            inst = random_instance([7001, trial])
            assert validate(inst.model) == [], trial

    def test_bounds_are_respected(self):
        bounds = InstanceBounds(max_states=2, max_min_sites=1,
                                max_max_sites=1, max_binders=1)
        for trial in range(100):
            inst = random_instance([311, trial], bounds)
            mins, maxs = choice_sites(inst.phi)
            assert inst.model.space.size <= 2
            assert mins <= 1 and maxs <= 1

    def test_zero_site_bounds_give_constant_formulae(self):
        bounds = InstanceBounds(max_states=1, max_min_sites=0, max_max_sites=0,
                                max_binders=0)
        inst = random_instance(3, bounds)
        assert choice_sites(inst.phi) == (0, 0)
        report = evaluate(inst.phi, inst.model)
        assert report.result.shape == (1,)

    def test_template_metadata_matches_reality(self):
        seen = set()
        for trial in range(400):
            inst = random_instance([999, trial])
            meta = {text: (m, x, b, alt) for text, m, x, b, alt in _TEMPLATES}
            mins, maxs, binders, alternating = meta[inst.template]
            assert choice_sites(inst.phi) == (mins, maxs), inst.template
            assert inst.alternating == alternating
            seen.add(inst.template)
        assert len(seen) == len(_TEMPLATES)

    def test_alternating_templates_in_the_mix(self):
        flags = [random_instance([55, i]).alternating for i in range(60)]
        assert any(flags)

    def test_continue_mass_cap(self):
        bounds = InstanceBounds(max_continue_mass=0.25)
        for trial in range(50):
            inst = random_instance([777, trial], bounds)
            for t in inst.model.valuation.transitions.values():
                for s in range(t.n_states):
                    assert sum(p for _, p in t.successors[s]) <= 0.25 + 1e-12


class TestBruteMinimax:
    def test_vardi_is_half_everywhere(self, vardi):
        model, phi = vardi
        inst = TinyInstance(model=model, phi=phi, text="", open_body=phi,
                            free_var="W0", alternating=False, template="")
        result = brute_minimax(inst)
        assert np.allclose(result.minimax, 0.5, atol=1e-9)
        assert np.allclose(result.maximin, 0.5, atol=1e-9)

    def test_zero_sites_equals_evaluation(self):
        bounds = InstanceBounds(max_min_sites=0, max_max_sites=0)
        inst = random_instance(17, bounds)
        result = brute_minimax(inst)
        base = evaluate(inst.phi, inst.model).result
        assert np.array_equal(result.minimax, base)
        assert np.array_equal(result.maximin, base)

    def test_order_insensitivity(self):
        inst = random_instance(23)
        result = brute_minimax(inst)
        table = result.table
        via_min_first = table.min(axis=0).max(axis=0)
        via_max_first = table.max(axis=1).min(axis=0)
        assert np.array_equal(via_max_first, result.minimax)
        assert np.array_equal(via_min_first, result.maximin)

    def test_witnesses_achieve_the_value(self):
        for trial in range(20):
            inst = random_instance([401, trial])
            result = brute_minimax(inst)
            assert result.min_witness_gap <= 1e-6
            assert result.max_witness_gap <= 1e-6

    def test_synthesized_strategy_matches_witness_value(self):
        from qmu.strategy import synthesize
        for trial in range(20):
            inst = random_instance([433, trial])
            result = brute_minimax(inst)
            strategy, value = synthesize(inst.phi, inst.model)
            assert np.abs(value - result.minimax).max() <= 1e-6
            phi2, ext = specialize(inst.phi, strategy, inst.model.space.size)
            achieved = evaluate(phi2, specialized_model(inst.model, ext)).result
            assert np.abs(achieved - result.minimax).max() <= 1e-6

    def test_budget_exceeded(self):
        # 3 min + 3 max sites over 4 states needs 2^24 tuples
        inst = random_instance(5, InstanceBounds(max_states=4))
        text = ("(a0 \\/ <t0> a1) /\\ (a1 \\/ <t1> a0) /\\ "
                "(a0 \\/ a1) /\\ (<t0> a0 \\/ <t0> a1)")
        phi = reduce(parse(text), inst.model.valuation)
        big = TinyInstance(model=inst.model, phi=phi, text=text,
                           open_body=phi, free_var="W0", alternating=False,
                           template="")
        if inst.model.space.size * sum(choice_sites(phi)) > 20:
            with pytest.raises(StrategySpaceError):
                brute_minimax(big)


class TestCrosscheck:
    def test_small_run_passes(self):
        report = crosscheck(10, seed=61)
        assert report.ok and report.checked == 10

    def test_count_zero_passes(self):
        report = crosscheck(0, seed=1)
        assert report.ok and report.checked == 0

    def test_faulty_evaluator_is_caught_and_dumped(self, tmp_path):
        def flipped(phi, model, cfg=None):
            def swap(node):
                if isinstance(node, MaxJ):
                    return MinJ(swap(node.left), swap(node.right), node.site)
                if isinstance(node, MinJ):
                    return MaxJ(swap(node.left), swap(node.right), node.site)
                if isinstance(node, Mu):
                    return Mu(node.var, swap(node.body))
                if isinstance(node, Nu):
                    return Nu(node.var, swap(node.body))
                from qmu.formula import Cond, Modal
                if isinstance(node, Modal):
                    return Modal(node.transition, swap(node.body))
                if isinstance(node, Cond):
                    return Cond(node.predicate, swap(node.then_branch),
                                swap(node.else_branch))
                return node

            return evaluate(swap(phi), model, cfg)

        report = crosscheck(30, seed=8, dump_dir=tmp_path, evaluate_fn=flipped)
        assert not report.ok
        failure = report.failures[0]
        assert failure.dump_paths
        # the dump round-trips through the model loader for replay
        replayed = load_model(failure.dump_paths[0])
        assert validate(replayed) == []
        with open(failure.dump_paths[1]) as fh:
            text = fh.read().strip()
        reparsed = reduce(parse(text), replayed.valuation)
        assert choice_sites(reparsed) == choice_sites(
            random_instance([8, failure.index]).phi)
