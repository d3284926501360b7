import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kpseq import model as M
from kpseq.compute import ParameterStore

settings.register_profile("kpseq", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("kpseq")

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def derived():
    return json.loads((FIXTURES / "derived.json").read_text())


def tiny_model(seed, vocab=20, embed=8, hidden=8, coverage=True, weight=1.0, scale=0.5, bias_scale=0.2):
    """Random model with non-zero biases so every parameter path is exercised."""
    cfg = M.ModelConfig(vocab, embed, hidden, hidden, coverage=coverage, coverage_weight=weight, preset="tiny")
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    for name, shape in M.param_shapes(cfg).items():
        s = bias_scale if name.endswith(".b") else scale
        store.add(name, rng.uniform(-s, s, size=shape))
    return cfg, store


def store_from_lists(P):
    return ParameterStore({k: np.array(v, dtype=np.float64) for k, v in P.items()})
