import os

import numpy as np
import pytest

from mode_monitor import anomaly
from mode_monitor import artifact
from mode_monitor import core
from mode_monitor import errors
from mode_monitor import modeconv
from mode_monitor import nn
from mode_monitor import simulator
from mode_monitor import spectral

from conftest import small_run_config
from conftest import small_spec

def two_node_context(rng) -> nn.BatchContext:
    graph = core.SensorGraph(2, ((0, 1, 0.6),), np.ones(2))
    L, A_norm = modeconv.normalized_laplacian(graph)
    Q, _ = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
    bank = modeconv.ComplexFilterBank(Q[:, :1], np.ones(1))
    return nn.BatchContext(bank, A_norm, modeconv.scaled_laplacian(L), graph.adjacency())

def numeric_gradient_matches(model, x, context, h=1e-5):
    _, grads = nn.backward(model, x, context)
    for name, value in model.parameters().items():
        for index in np.ndindex(value.shape):
            original = value[index]
            value[index] = original + h
            plus = nn.mse_loss(x, nn.forward(model, x, context))
            value[index] = original - h
            minus = nn.mse_loss(x, nn.forward(model, x, context))
            value[index] = original
            numeric, analytic = (plus - minus) / (2 * h), grads[name][index]
            assert abs(analytic - numeric) <= 1e-4 * max(abs(analytic), abs(numeric)) + 1e-7, (name, index)

@pytest.mark.parametrize('kind, widths', [
    ('fast', [3, 2, 3]),
    ('laplace', [3, 2, 3]),
    ('cheb', [3, 2, 3]),
    ('fast', [3, 3]),
    ('laplace', [3, 3, 3]),
])
def test_gradients_match_central_differences(kind, widths):
    rng = np.random.default_rng(sum(widths) + len(kind))
    model = nn.Autoencoder(kind, widths, rng, cheb_order=3)
    for params in model.parameters().values():
        params += 0.1 * rng.standard_normal(params.shape)
    numeric_gradient_matches(model, rng.standard_normal((2, 2, 3)), two_node_context(rng))

@pytest.mark.parametrize('kind', ['fast', 'laplace', 'cheb'])
def test_graphcon_gradients_match_central_differences(kind):
    rng = np.random.default_rng(len(kind))
    cfg = nn.GraphConConfig(dt=0.5, alpha=0.5, gamma=0.7)
    model = nn.Autoencoder(kind, [3, 3, 3], rng, cheb_order=2, graphcon=cfg)
    assert all(isinstance(layer, nn.GraphConLayer) for layer in model.layers)
    numeric_gradient_matches(model, rng.standard_normal((2, 2, 3)), two_node_context(rng))

def test_zero_input_gives_zero_loss_and_gradients(rng):
    model = nn.Autoencoder('laplace', [3, 2, 3], rng)
    loss, grads = nn.backward(model, np.zeros((4, 2, 3)), two_node_context(rng))
    assert loss == 0.0
    assert all(not np.any(grad) for grad in grads.values())

def test_frozen_parameters_stay_put(rng):
    model = nn.Autoencoder('fast', [3, 2, 3], rng)
    model.frozen.add('0.W_r')
    before = model.parameters()['0.W_r'].copy()
    _, grads = nn.backward(model, rng.standard_normal((2, 2, 3)), two_node_context(rng))
    assert not np.any(grads['0.W_r'])
    model.step(0.1)
    assert np.array_equal(model.parameters()['0.W_r'], before)

@pytest.mark.parametrize('kind', ['fast', 'laplace', 'cheb'])
def test_repeating_the_batch_keeps_loss_and_gradients(kind, rng):
    model = nn.Autoencoder(kind, [3, 2, 3], np.random.default_rng(3), cheb_order=2)
    context = two_node_context(rng)
    x = rng.standard_normal((3, 2, 3))
    loss, grads = nn.backward(model, x, context)
    grads = { name: value.copy() for name, value in grads.items() }
    repeated_loss, repeated_grads = nn.backward(model, np.concatenate([x, x]), context)
    assert repeated_loss == pytest.approx(loss)
    for name, value in grads.items():
        assert np.allclose(repeated_grads[name], value), name

@pytest.mark.parametrize('kind', ['fast', 'laplace', 'cheb'])
def test_zero_weights_leave_only_the_bias(kind, rng):
    model = nn.Autoencoder(kind, [3, 3], rng, cheb_order=2)
    bias = np.array([0.5, -1.0, 2.0])
    for name, value in model.parameters().items():
        value[...] = bias if name.endswith('bias') else 0.0
    y = nn.forward(model, rng.standard_normal((4, 2, 3)), two_node_context(rng))
    assert np.array_equal(y, np.broadcast_to(bias, (4, 2, 3)))

def test_two_fast_layers_by_hand():
    model = nn.Autoencoder('fast', [1, 1, 1], np.random.default_rng(0))
    params = model.parameters()
    # on one node with U = 1 the first layer gives 2x - 0.25
    params['0.W_r'][...], params['0.W_i'][...] = 2.0, 1.0
    params['0.mix'][...] = [[0.5], [1.0]]
    params['0.bias'][...] = -0.25
    params['1.W_r'][...], params['1.W_i'][...] = 1.0, -1.0
    params['1.mix'][...] = [[1.0], [0.5]]
    params['1.bias'][...] = 0.1
    context = nn.BatchContext.identity(1)
    y = nn.forward(model, np.array([[[0.75]], [[-0.75]]]), context)
    # 0.5 relu(2x - 0.25) + 0.1; the ReLU zeroes the second window
    assert y[:, 0, 0] == pytest.approx([0.725, 0.1])

@pytest.mark.parametrize('kind', ['fast', 'laplace', 'cheb'])
def test_feature_width_must_match_the_model(kind, rng):
    model = nn.Autoencoder(kind, [3, 2, 3], rng)
    with pytest.raises(errors.DomainError):
        nn.forward(model, np.zeros((2, 2, 4)), two_node_context(rng))
    with pytest.raises(errors.DomainError):
        nn.forward(model, np.zeros(3), two_node_context(rng))

def test_stacked_graphcon_layers_keep_the_shape(rng):
    cfg = nn.GraphConConfig(dt=0.5, alpha=0.5, gamma=0.5)
    model = nn.Autoencoder('laplace', [3] * 6, rng, graphcon=cfg)
    assert len(model.layers) == 5
    assert all(isinstance(layer, nn.GraphConLayer) for layer in model.layers)
    x = rng.standard_normal((4, 2, 3))
    y = nn.forward(model, x, two_node_context(rng))
    assert y.shape == x.shape
    assert np.all(np.isfinite(y))
    X, Y = x, np.zeros_like(x)
    for _ in range(10):
        X, Y = nn.graphcon_step(X, Y, np.tanh, cfg)
        assert X.shape == Y.shape == x.shape

def test_mse_loss():
    assert nn.mse_loss(np.array([1.0, 0.0]), np.array([0.0, 0.0])) == 0.5
    with pytest.raises(errors.DomainError):
        nn.mse_loss(np.zeros(2), np.zeros(3))

def test_layer_widths_mirror_the_encoder():
    assert nn.layer_widths(16, 1, 8, 2) == [16, 16]
    assert nn.layer_widths(16, 3, 8, 2) == [16, 8, 2, 16]
    assert nn.layer_widths(16, 5, 8, 2) == [16, 8, 8, 2, 8, 16]
    assert nn.layer_widths(4, 3, 8, 4) == [4, 4, 4, 4]
    assert len(nn.layer_widths(16, 10, 16, 4)) == 11

def test_unknown_layer_kind():
    with pytest.raises(errors.DomainError):
        nn.make_layer('attention', 2, 2, np.random.default_rng(0))

def test_layer_base_is_abstract():
    with pytest.raises(TypeError):
        nn.Layer()

# -- GraphCON -----------------------------------------------------------------

def test_graphcon_step_on_a_scalar():
    cfg = nn.GraphConConfig(dt=0.5, alpha=1.0, gamma=1.0)
    X, Y = nn.graphcon_step(np.array([[1.0]]), np.array([[0.0]]), lambda X: X, cfg)
    assert Y.tolist() == [[0.0]]
    assert X.tolist() == [[1.0]]

def test_graphcon_without_forces_drifts_with_the_velocity():
    cfg = nn.GraphConConfig(dt=0.25, alpha=0.0, gamma=0.0)
    X, Y = nn.graphcon_step(np.array([[2.0]]), np.array([[4.0]]), np.zeros_like, cfg)
    assert Y.tolist() == [[4.0]]
    assert X.tolist() == [[3.0]]

def test_graphcon_dropout_applies_only_while_training(rng):
    cfg = nn.GraphConConfig(dt=0.5, dropout=0.5)
    X, Y = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
    plain = nn.graphcon_step(X, Y, np.tanh, nn.GraphConConfig(dt=0.5))
    evaluated = nn.graphcon_step(X, Y, np.tanh, cfg, training=False, rng=rng)
    assert all(np.array_equal(a, b) for a, b in zip(plain, evaluated))
    trained = nn.graphcon_step(X, Y, np.tanh, cfg, training=True, rng=np.random.default_rng(5))
    assert not np.array_equal(trained[0], plain[0])
    assert np.all((trained[0] == 0) | np.isclose(trained[0], 2 * plain[0]))

def test_graphcon_settings_are_validated():
    with pytest.raises(errors.DomainError):
        nn.GraphConConfig(dt=0.0)
    with pytest.raises(errors.DomainError):
        nn.GraphConConfig(alpha=2.5)
    with pytest.raises(errors.DomainError):
        nn.GraphConConfig(dropout=1.0)
    with pytest.raises(errors.DomainError):
        nn.GraphConLayer(nn.make_layer('fast', 3, 2, np.random.default_rng(0)), nn.GraphConConfig())

# -- training -----------------------------------------------------------------

def test_single_layer_learns_the_identity():
    model = nn.Autoencoder('cheb', [3, 3], np.random.default_rng(0), cheb_order=0)
    x = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    context = nn.BatchContext.identity(2)
    for _ in range(500):
        nn.backward(model, x, context)
        model.step(1.0)
    assert nn.mse_loss(x, nn.forward(model, x, context)) < 1e-6

def synthetic_dataset(rng, labels=None) -> nn.PreparedDataset:
    features = rng.standard_normal((12, 2, 3))
    labels = labels if labels is not None else (0,) * 12
    split = core.DatasetSplit(tuple(range(8)), (8, 9), (10, 11), tuple(labels))
    context = nn.BatchContext.identity(2)
    batches = {
        name: [ (chunk, context) for chunk in nn.batch_indices(indices, 4) ]
        for name, indices in (('train', split.train), ('validation', split.validation), ('test', split.test))
    }
    return nn.PreparedDataset(features, split, core.Normalizer(np.zeros((2, 1)), np.ones((2, 1))), batches)

def linear_config(**overrides) -> core.RunConfig:
    settings = dict(layer='cheb', cheb_order=2, epochs=3)
    settings.update(overrides)
    return small_run_config(**settings)

def test_zero_learning_rate_keeps_the_loss(rng):
    _, state, _ = nn.train(synthetic_dataset(rng), linear_config(learning_rate=0.0))
    assert len(state.train_loss) == 3
    assert len(set(state.train_loss)) == 1
    assert len(set(state.validation_loss)) == 1

def test_training_reduces_the_loss(rng):
    _, state, _ = nn.train(synthetic_dataset(rng), linear_config(learning_rate=0.2, epochs=20))
    assert state.train_loss[-1] < 0.5 * state.train_loss[0]
    assert state.best_epoch >= 1
    assert all(norm >= 0 for norm in state.gradient_norms)

def test_training_is_deterministic(rng):
    dataset = synthetic_dataset(rng)
    first_model, first, _ = nn.train(dataset, linear_config(layer='fast', learning_rate=0.05))
    second_model, second, _ = nn.train(dataset, linear_config(layer='fast', learning_rate=0.05))
    assert first.train_loss == second.train_loss
    for name, value in first_model.parameters().items():
        assert np.array_equal(value, second_model.parameters()[name])

def test_resumed_training_matches_an_uninterrupted_run(tmp_path, rng):
    dataset = synthetic_dataset(rng)
    path = str(tmp_path / 'checkpoint.json')
    nn.train(dataset, linear_config(epochs=1, learning_rate=0.1), path)
    assert os.path.exists(path)
    resumed_model, resumed, _ = nn.train(dataset, linear_config(epochs=2, learning_rate=0.1), path, resume=True)
    straight_model, straight, _ = nn.train(dataset, linear_config(epochs=2, learning_rate=0.1))
    assert resumed.epoch == 2
    assert resumed.train_loss == straight.train_loss
    for name, value in straight_model.parameters().items():
        assert np.array_equal(value, resumed_model.parameters()[name])

def test_checkpoint_rebuilds_the_best_model(tmp_path, rng):
    dataset = synthetic_dataset(rng)
    path = str(tmp_path / 'checkpoint.json')
    model, state, checkpoint = nn.train(dataset, linear_config(learning_rate=0.1), path)
    restored = artifact.PersistInFile(path, nn.Checkpoint()).load()
    assert restored.epoch() == 3
    assert restored.best_epoch() == state.best_epoch
    latest = restored.model(best=False)
    for name, value in model.parameters().items():
        assert np.array_equal(latest.parameters()[name], value)

def test_anomalous_training_windows_are_rejected(rng):
    labels = (1,) + (0,) * 11
    with pytest.raises(errors.ConfigurationError):
        nn.train(synthetic_dataset(rng, labels), linear_config())

def test_residuals_cover_the_split(rng):
    dataset = synthetic_dataset(rng)
    model, _, _ = nn.train(dataset, linear_config(epochs=1))
    indices, rows = nn.residuals(model, dataset, 'test')
    assert indices.tolist() == [10, 11]
    assert rows.shape == (2, 6)

def test_scaler_is_kept_in_the_checkpoint(tmp_path, rng):
    dataset = synthetic_dataset(rng)
    scaler = nn.FeatureScaler.fit(dataset.features[list(dataset.split.train)])
    dataset = nn.PreparedDataset(scaler.apply(dataset.features), dataset.split, dataset.normalizer, dataset.batches, scaler)
    path = str(tmp_path / 'checkpoint.json')
    nn.train(dataset, linear_config(epochs=1), path)
    restored = artifact.PersistInFile(path, nn.Checkpoint()).load().scaler()
    assert np.allclose(restored.mean, scaler.mean)
    assert np.allclose(restored.std, scaler.std)

def test_checkpoint_without_a_scaler(tmp_path, rng):
    path = str(tmp_path / 'checkpoint.json')
    nn.train(synthetic_dataset(rng), linear_config(epochs=1), path)
    assert artifact.PersistInFile(path, nn.Checkpoint()).load().scaler() is None

def test_validation_loss_counts_normal_windows_only(rng):
    dataset = synthetic_dataset(rng, (0,) * 9 + (1, 0, 0))
    dataset.features[9] *= 100.0
    model = nn.Autoencoder('cheb', [3, 3], np.random.default_rng(0), cheb_order=0)
    everything = nn.mean_loss(model, dataset, 'validation')
    normal = nn.mean_loss(model, dataset, 'validation', normal_only=True)
    x = dataset.features[8:9]
    assert normal == pytest.approx(nn.mse_loss(x, nn.forward(model, x, nn.BatchContext.identity(2))))
    assert everything > normal

def test_validation_without_normal_windows_has_no_loss(rng):
    dataset = synthetic_dataset(rng, (0,) * 8 + (1,) * 4)
    model = nn.Autoencoder('cheb', [3, 3], np.random.default_rng(0), cheb_order=0)
    assert nn.mean_loss(model, dataset, 'validation', normal_only=True) is None
    assert nn.mean_loss(model, dataset, 'validation') is not None

# -- features -------------------------------------------------------------------

def test_scaler_standardizes_every_node_and_feature(rng):
    features = rng.normal(5.0, 3.0, (50, 2, 4))
    features[:, 1, 2] = 7.0
    scaler = nn.FeatureScaler.fit(features)
    scaled = scaler.apply(features)
    assert np.allclose(scaled.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(scaled[:, 0].std(axis=0), 1.0)
    # a constant feature is only centered
    assert scaler.std[1, 2] == 1.0
    assert not np.any(scaled[:, 1, 2])

def test_scaler_rejects_other_shapes_and_empty_fits(rng):
    scaler = nn.FeatureScaler.fit(rng.standard_normal((5, 2, 3)))
    with pytest.raises(errors.SchemaError):
        scaler.apply(np.zeros((5, 2, 4)))
    with pytest.raises(errors.ConfigurationError):
        nn.FeatureScaler.fit(np.zeros((0, 2, 3)))

def test_window_features_by_kind(rng):
    values = rng.standard_normal((3, 2, 32))
    window = core.SignalWindow(0, 64.0, values)
    samples = nn.window_features([ window ], 'samples', 3)
    spectrum = nn.window_features([ window ], 'spectrum', 3)
    assert samples.shape == (1, 3, 32 + 4)
    assert spectrum.shape == (1, 3, 32 // 4 + 1 + 4)
    # the auxiliary summaries are shared
    assert np.array_equal(spectrum[0, :, -4:], samples[0, :, -4:])
    assert nn.window_features([], 'spectrum', 3).shape == (0, 3, 0)
    with pytest.raises(errors.ConfigurationError):
        nn.window_features([ window ], 'wavelet', 3)

def test_spectral_features_separate_a_softened_chain():
    l = 256
    spec = small_spec(
        nodes=8, duration=120.0, window_length=l, stride=l, seed=11,
        damage=[ dict(kind='zone', zone=[0, 9], factor=0.7, onset=60.0, ramp=0.0) ])
    output = simulator.simulate(spec)
    labels = np.asarray(output.window_labels(l, l))
    features = np.stack([
        spectral.log_spectrum(output.acceleration[:, start:start + l], output.sample_rate)
        for start in range(0, labels.shape[0] * l, l) ])
    assert labels[:60].sum() == 0 and labels[60:].all()
    scaler = nn.FeatureScaler.fit(features[:40])
    scores = np.abs(scaler.apply(features[40:])).sum(axis=(1, 2))
    truth = labels[40:]
    report = anomaly.metrics(np.zeros(truth.shape, dtype=bool), truth, scores)
    assert report.auc >= 0.9
