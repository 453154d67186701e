"""Strategy synthesis, specialisation, verification and advice."""

import numpy as np
import pytest

from qmu.core import Model, StateSpace, Valuation, expectation
from qmu.evaluator import evaluate
from qmu.examples import futures_index
from qmu.formula import Cond, Modal, Mu, Var, alpha_equal, parse, reduce
from qmu.oracle import random_instance
from qmu.strategy import (
    FingerprintMismatchError, MemorilessStrategy, StrategyError,
    load_strategy, one_step_advice, save_strategy, specialize,
    specialized_model, synthesize, verify_strategy,
)


class TestSynthesize:
    def test_futures_reserve_set(self, futures, futures_strategy):
        model, _ = futures
        strategy, _value = futures_strategy
        picks = strategy.max_choices[0]
        for v in range(11):
            expected = v >= 6
            assert bool(picks[futures_index(v, 5, 10)]) == expected, v

    def test_vardi_picks_the_committing_state(self, vardi):
        model, phi = vardi
        strategy, value = synthesize(phi, model)
        assert np.array_equal(strategy.max_choices[0],
                              model.valuation.predicates["atA"])
        assert np.allclose(value, 0.5, atol=1e-9)

    def test_junction_free_formula_gives_empty_strategy(self, vardi):
        model, _ = vardi
        phi = reduce(parse("<k> atB"), model.valuation)
        strategy, value = synthesize(phi, model)
        assert strategy.min_choices == ()
        assert strategy.max_choices == ()
        assert np.array_equal(value, evaluate(phi, model).result)

    def test_ties_break_left(self):
        space_model = Model(
            space=StateSpace(("a",)),
            valuation=Valuation(expectations={"e": expectation([0.5])}))
        phi = parse("e \\/ e")
        strategy, _ = synthesize(phi, space_model)
        assert strategy.max_choices[0].all()
        phi2 = parse("e /\\ e")
        strategy2, _ = synthesize(phi2, space_model)
        assert strategy2.min_choices[0].all()


class TestSpecialize:
    def test_vardi_committed_formula_shape(self, vardi):
        model, phi = vardi
        strategy = MemorilessStrategy(
            max_choices=(model.valuation.predicates["atA"],))
        phi2, ext = specialize(phi, strategy, model.space.size)
        assert isinstance(phi2, Mu)
        cond = phi2.body
        assert isinstance(cond, Cond)
        assert cond.then_branch == Modal("k", parse("atB"))
        assert cond.else_branch == Modal("k", Var(phi2.var))
        assert set(ext) == {"_max0"}
        # committed value stays the game value
        value = evaluate(phi2, specialized_model(model, ext)).result
        assert np.allclose(value, 0.5, atol=1e-9)

    def test_empty_strategy_leaves_formula_alone(self, vardi):
        _, phi = vardi
        phi2, ext = specialize(phi, MemorilessStrategy())
        assert alpha_equal(phi2, phi)
        assert ext == {}

    def test_site_count_mismatch(self, vardi):
        model, phi = vardi
        bad = MemorilessStrategy(max_choices=(np.array([True, False]),) * 2)
        with pytest.raises(StrategyError):
            specialize(phi, bad, model.space.size)

    def test_neutral_extension_does_not_move_values(self, vardi):
        model, phi = vardi
        strategy = MemorilessStrategy(
            max_choices=(model.valuation.predicates["atA"],))
        _, ext = specialize(phi, strategy, model.space.size)
        base = evaluate(phi, model).result
        extended = evaluate(phi, specialized_model(model, ext)).result
        assert np.array_equal(base, extended)


class TestVerify:
    def test_synthesized_strategy_is_tight(self, futures, futures_strategy):
        model, game = futures
        strategy, _ = futures_strategy
        assert verify_strategy(game, model, strategy) <= 1e-8

    def test_one_sided_fixing_is_tight(self, futures, futures_strategy):
        model, game = futures
        strategy, _ = futures_strategy
        for side in (MemorilessStrategy(max_choices=strategy.max_choices),
                     MemorilessStrategy(min_choices=strategy.min_choices)):
            assert verify_strategy(game, model, side) <= 1e-8

    def test_always_wait_forfeits_everything(self, futures, futures_report):
        model, game = futures
        n = model.space.size
        always_wait = MemorilessStrategy(max_choices=(np.zeros(n, bool),))
        residual = verify_strategy(game, model, always_wait)
        assert residual >= 0.05
        phi2, ext = specialize(game, always_wait, n)
        wait_value = evaluate(phi2, specialized_model(model, ext)).result
        i = futures_index(10, 5, 10)
        gap = futures_report.result[i] - wait_value[i]
        # never reserving never sells: the whole 0.95 is forfeited at v=10
        assert gap == pytest.approx(0.95, abs=1e-6)

    def test_random_synthesis_verifies(self):
        for trial in range(40):
            inst = random_instance([271, trial])
            strategy, _ = synthesize(inst.phi, inst.model)
            assert verify_strategy(inst.phi, inst.model, strategy) <= 1e-8


class TestOneStepAdvice:
    @pytest.mark.parametrize("v,expected", [(6, True), (3, False), (10, True)])
    def test_boundary_share_values(self, futures, futures_report, v, expected):
        model, _ = futures
        s = futures_index(v, 5, 10)
        assert one_step_advice(model, futures_report.result, s) is expected

    def test_reserve_set_matches_table_comparison(self, futures, futures_report):
        model, _ = futures
        reserve = {v for v in range(11)
                   if one_step_advice(model, futures_report.result,
                                      futures_index(v, 5, 10))}
        assert reserve == {6, 7, 8, 9, 10}


class TestStrategyFiles:
    def test_round_trip(self, tmp_path, vardi):
        model, phi = vardi
        strategy, _ = synthesize(phi, model)
        path = tmp_path / "vardi.strategy.json"
        save_strategy(path, strategy, phi)
        loaded = load_strategy(path, phi)
        assert np.array_equal(loaded.max_choices[0], strategy.max_choices[0])
        assert loaded.min_choices == ()

    def test_fingerprint_mismatch_rejected(self, tmp_path, vardi):
        model, phi = vardi
        strategy, _ = synthesize(phi, model)
        path = tmp_path / "vardi.strategy.json"
        save_strategy(path, strategy, phi)
        other = reduce(parse("mu X . <k> (atB \\/ X)"), model.valuation)
        with pytest.raises(FingerprintMismatchError):
            load_strategy(path, other)

    def test_partial_strategy_round_trip(self, tmp_path, vardi):
        model, phi = vardi
        partial = MemorilessStrategy(
            max_choices=(model.valuation.predicates["atA"],))
        path = tmp_path / "partial.json"
        save_strategy(path, partial, phi)
        loaded = load_strategy(path, phi)
        assert loaded.min_choices is None
        assert np.array_equal(loaded.max_choices[0], partial.max_choices[0])
