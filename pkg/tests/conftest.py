# SPDX-License-Identifier: MIT-0

import pytest

from cbfe_aif.tmaze import build_bandit_model, build_tmaze_model


@pytest.fixture
def tmaze():
    return build_tmaze_model(alpha=0.9, c=2.0)


@pytest.fixture
def indifferent_tmaze():
    return build_tmaze_model(alpha=0.9, c=0.0)


@pytest.fixture
def bandit():
    return build_bandit_model()


@pytest.fixture(autouse=True)
def single_thread(monkeypatch):
    monkeypatch.setenv("CBFE_AIF_THREADS", "1")
    monkeypatch.delenv("CBFE_AIF_PROFILE", raising=False)
