import pytest

from qmu.evaluator import evaluate
from qmu.examples import futures_formula, futures_model, vardi_model
from qmu.formula import reduce
from qmu.strategy import synthesize


@pytest.fixture(scope="session")
def futures():
    model = futures_model()
    game = reduce(futures_formula(), model.valuation)
    return model, game


@pytest.fixture(scope="session")
def futures_report(futures):
    model, game = futures
    return evaluate(game, model)


@pytest.fixture(scope="session")
def futures_strategy(futures):
    model, game = futures
    return synthesize(game, model)


@pytest.fixture(scope="session")
def vardi():
    model, psi = vardi_model()
    return model, reduce(psi, model.valuation)
