import json
import os

import numpy as np
import pytest

from mode_monitor import actions
from mode_monitor import core
from mode_monitor import simulator

# three nodes, 20 s at 256 Hz, uniform 30% stiffness loss from 12 s on
SMALL_SCENARIO = dict(
    nodes=3,
    damage=[ dict(kind='zone', zone=[0, 4], factor=0.7, onset=12.0, ramp=0.0) ],
    duration=20.0,
    window_length=16,
    stride=16,
    seed=3,
)

@pytest.fixture
def rng():
    return np.random.default_rng(1234)

def small_spec(**overrides) -> simulator.ScenarioSpec:
    settings = dict(SMALL_SCENARIO)
    settings.update(overrides)
    return simulator.ScenarioSpec().alias(**settings)

def small_run_config(**overrides) -> core.RunConfig:
    settings = dict(
        window_length=16, stride=16, batch_size=32, layer='fast', layer_count=1,
        hidden_dims=4, bottleneck=1, retained_modes=2, epochs=2, learning_rate=0.01, seed=0)
    settings.update(overrides)
    return core.RunConfig().alias(**settings)

def write_json(path, content) -> str:
    with open(path, 'wt') as fp:
        json.dump(content, fp)
    return str(path)

@pytest.fixture
def small_dataset(tmp_path) -> str:
    """Manifest path of the simulated small scenario"""
    out_dir = os.path.join(str(tmp_path), 'data')
    actions.cmd_simulate(small_spec(), out_dir)
    return os.path.join(out_dir, 'manifest.json')
