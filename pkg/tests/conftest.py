import numpy as np
import pytest

from ctaf_goalcast.geometry import DEFAULT_AIRPORT, intent_label_set
from ctaf_goalcast.goalnet import GoalMixture


@pytest.fixture
def airport():
    return DEFAULT_AIRPORT


@pytest.fixture
def labels():
    return intent_label_set(DEFAULT_AIRPORT)


@pytest.fixture(autouse=True)
def _weights_sum_to_one(monkeypatch):
    # every mixture built anywhere in the suite must carry normalised weights
    orig = GoalMixture.__post_init__

    def checked(self):
        orig(self)
        assert abs(self.weights.sum() - 1.0) <= 1e-12, self.weights.sum()

    monkeypatch.setattr(GoalMixture, "__post_init__", checked)
