import logging
import os

import numpy as np
import pytest

from mode_monitor import artifact
from mode_monitor import core
from mode_monitor import errors
from mode_monitor import formats

def test_arrays_survive_json_bit_exactly(rng):
    values = dict(
        real=rng.standard_normal((3, 4)),
        complex=rng.standard_normal(5) + 1j * rng.standard_normal(5),
        counts=np.arange(6, dtype=np.int64).reshape(2, 3))
    restored = formats.loads(formats.dumps(values))
    for name, value in values.items():
        assert restored[name].dtype == value.dtype
        assert restored[name].shape == value.shape
        assert np.array_equal(restored[name], value)

def test_digest_ignores_key_order_but_not_values():
    assert formats.digest(dict(a=1, b=[1.0, 2.0])) == formats.digest(dict(b=[1.0, 2.0], a=1))
    assert formats.digest(dict(a=1, b=[1.0, 2.0])) != formats.digest(dict(a=1, b=[1.0, 2.5]))

def test_malformed_json_names_the_position():
    with pytest.raises(errors.ConfigurationError) as caught:
        formats.loads('{"a": 1,,}')
    assert 'line 1' in str(caught.value)

def test_missing_file_is_a_configuration_error(tmp_path):
    with pytest.raises(errors.ConfigurationError) as caught:
        formats.load_file(str(tmp_path / 'absent.json'))
    assert caught.value.exit_code == 2

def test_persist_in_file_replaces_atomically(tmp_path):
    path = str(tmp_path / 'config.json')
    config = core.RunConfig().alias(epochs=3)
    persistor = artifact.PersistInFile(path, config)
    persistor.save()
    assert os.path.exists(path)
    assert not os.path.exists(path + '.next')
    loaded = artifact.PersistInFile(path, core.RunConfig()).load()
    assert loaded.epochs() == 3

def test_phase_saves_on_success_only(tmp_path, caplog):
    path = str(tmp_path / 'config.json')
    config = core.RunConfig()
    caplog.set_level(logging.INFO)
    with pytest.raises(ValueError):
        with artifact.Phase('failing stage', artifact.PersistInFile(path, config), config):
            raise ValueError('boom')
    assert not os.path.exists(path)
    assert any('FAIL  failing stage' in record.message for record in caplog.records)
    with artifact.Phase('working stage', artifact.PersistInFile(path, config), config) as phase:
        assert phase.elapsed() >= 0
    assert os.path.exists(path)
    assert any('BEGIN working stage' in record.message for record in caplog.records)

def test_phase_without_a_persistor_only_logs(caplog):
    caplog.set_level(logging.INFO)
    with artifact.Phase('bare stage') as phase:
        pass
    assert isinstance(phase.persistor, artifact.NoPersistor)
    assert any('END   bare stage' in record.message for record in caplog.records)

def test_error_exit_codes():
    assert errors.ScenarioError('nodes', 'bad').exit_code == 2
    assert errors.AliasingError('sweep.f_end', 'bad').exit_code == 2
    assert errors.NumericError('did not converge', 60).exit_code == 1
    assert 'after 60 iterations' in str(errors.NumericError('did not converge', 60))
    assert isinstance(errors.TrainingError(3, 'nan'), RuntimeError)
