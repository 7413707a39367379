#! env python3

"""Graph autoencoder built from modal (fast / Laplace) or Chebyshev convolution layers, trained by
plain gradient descent on hand-derived gradients, with the optional GraphCON wrapper"""

from __future__ import annotations

import abc
import dataclasses
import logging
import math
import os
import typing

import numpy as np
import scipy.sparse

from . import __version__
from . import artifact
from . import configurable
from . import core
from . import errors
from . import modeconv
from . import spectral
from . import structure

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1
FEATURE_STD_FLOOR = 1e-12
LAYER_KINDS = ('fast', 'laplace', 'cheb')

# (real, imaginary) node states, each [..., n, d]
State = typing.Tuple[np.ndarray, np.ndarray]

def glorot(rng: np.random.Generator, shape: typing.Tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)

def _sum_outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """sum over every leading axis and the node axis of a^T b"""
    return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])

@dataclasses.dataclass(frozen=True, eq=False)
class BatchContext:
    """Everything a layer needs that is derived from the data of one batch rather than trained"""
    bank: modeconv.ComplexFilterBank
    A_norm: np.ndarray
    cheb_laplacian: scipy.sparse.csr_matrix
    edge_weights: np.ndarray

    @classmethod
    def identity(cls, n: int) -> BatchContext:
        """Unit modal basis, self-loop-only adjacency and a vanishing scaled Laplacian"""
        bank = modeconv.ComplexFilterBank(np.eye(n, dtype=np.complex128), np.ones(n), total_energy=float(n))
        return cls(bank, np.eye(n), scipy.sparse.csr_matrix((n, n)), np.eye(n))

def prepare_context(
    windows: typing.Sequence[core.SignalWindow],
    graph: core.SensorGraph,
    matrices: structure.StructuralMatrices,
    config: core.RunConfig
) -> BatchContext:
    """Signal block -> PDE block -> filter bank for one batch: the batch-mean correlation gives the PSD
    and the edge weights, the PSD weighted by the FRF gives the modal basis"""
    l = windows[0].length
    lags = spectral.default_lags(l)
    R = np.mean([ spectral.correlate(window, lags).R for window in windows ], axis=0)
    spectrum = spectral.psd(R, lags, windows[0].sample_rate)
    response = structure.frequency_response(matrices.M, matrices.C, matrices.K, 2 * np.pi * spectrum.frequencies)
    weighted = modeconv.weighted_psd(spectrum, response.H, config.psd_product())
    bank = modeconv.filter_bank(weighted, config.retained_modes(), trace=spectrum.trace(), method=config.svd_method())
    weights = spectral.edge_weights_from_correlation(R)
    L, A_norm = modeconv.normalized_laplacian(graph.with_weights(weights))
    return BatchContext(bank, A_norm, modeconv.scaled_laplacian(L), weights)

# -- layers -------------------------------------------------------------------

class Layer(abc.ABC):
    kind: str
    d_in: int
    d_out: int
    params: typing.Dict[str, np.ndarray]
    grads: typing.Dict[str, np.ndarray]

    def zero_grads(self):
        self.grads = { name: np.zeros_like(value) for name, value in self.params.items() }

    @abc.abstractmethod
    def forward(self, state: State, context: BatchContext) -> State:
        raise RuntimeError(f"Unsupported method")

    @abc.abstractmethod
    def backward(self, grad: State) -> State:
        raise RuntimeError(f"Unsupported method")

class FastLayer(Layer):
    """Modal projection with the batch basis U; the imaginary input channel is not used"""
    kind = 'fast'

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        self.d_in, self.d_out = d_in, d_out
        self.params = dict(
            W_r=glorot(rng, (d_in, d_out), d_in, d_out),
            W_i=glorot(rng, (d_in, d_out), d_in, d_out),
            mix=glorot(rng, (2 * d_out, d_out), 2 * d_out, d_out),
            bias=np.zeros(d_out))
        self.zero_grads()

    def forward(self, state: State, context: BatchContext) -> State:
        self.x, self.U = state[0], context.bank.U
        bank = context.bank.with_weights(self.params['W_r'], self.params['W_i'])
        y = modeconv.modeconv_fast_forward(self.x, bank, self.params['mix'], self.params['bias'])
        return y, np.zeros_like(y)

    def backward(self, grad: State) -> State:
        U, W = self.U, self.params['W_r'] + 1j * self.params['W_i']
        p = np.matmul(U.conj().T, self.x)
        z = np.matmul(U, p @ W)
        g = grad[0]
        self.grads['mix'] += _sum_outer(np.concatenate([z.real, z.imag], axis=-1), g)
        self.grads['bias'] += g.reshape(-1, self.d_out).sum(axis=0)
        g_cat = g @ self.params['mix'].T
        g_z = g_cat[..., :self.d_out] + 1j * g_cat[..., self.d_out:]
        g_q = np.matmul(U.conj().T, g_z)
        g_W = _sum_outer(np.conj(p), g_q)
        self.grads['W_r'] += g_W.real
        self.grads['W_i'] += g_W.imag
        g_x = np.real(np.matmul(U, g_q @ W.conj().T))
        return g_x, np.zeros_like(g_x)

class LaplaceLayer(Layer):
    """Complex message passing over the correlation-weighted normalized adjacency"""
    kind = 'laplace'

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        self.d_in, self.d_out = d_in, d_out
        self.params = dict(
            W_r=glorot(rng, (d_in, d_out), d_in, d_out),
            W_i=glorot(rng, (d_in, d_out), d_in, d_out),
            bias=np.zeros(d_out))
        self.zero_grads()

    def forward(self, state: State, context: BatchContext) -> State:
        self.x_r, self.x_i, self.A = state[0], state[1], context.A_norm
        y = modeconv.modeconv_laplace_forward(self.x_r, self.x_i, self.A, self.params['W_r'], self.params['W_i'])
        return y[..., :self.d_out] + self.params['bias'], y[..., self.d_out:]

    def backward(self, grad: State) -> State:
        W_r, W_i = self.params['W_r'], self.params['W_i']
        g_mr = np.matmul(self.A.T, grad[0])
        g_mi = np.matmul(self.A.T, grad[1])
        self.grads['bias'] += grad[0].reshape(-1, self.d_out).sum(axis=0)
        self.grads['W_r'] += _sum_outer(self.x_r, g_mr) + _sum_outer(self.x_i, g_mi)
        self.grads['W_i'] += _sum_outer(self.x_r, g_mi) - _sum_outer(self.x_i, g_mr)
        return g_mr @ W_r.T + g_mi @ W_i.T, g_mi @ W_r.T - g_mr @ W_i.T

class ChebLayer(Layer):
    kind = 'cheb'

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, order: int = 5):
        if order < 0:
            raise errors.DomainError(f"Chebyshev order must be >= 0, got {order}")
        self.d_in, self.d_out, self.order = d_in, d_out, order
        self.params = dict(
            theta=glorot(rng, (order + 1, d_in, d_out), d_in, d_out),
            bias=np.zeros(d_out))
        self.zero_grads()

    def forward(self, state: State, context: BatchContext) -> State:
        self.laplacian = context.cheb_laplacian
        self.terms = modeconv.chebyshev_terms(state[0], self.laplacian, self.order)
        y = sum(term @ self.params['theta'][k] for k, term in enumerate(self.terms)) + self.params['bias']
        return y, np.zeros_like(y)

    def backward(self, grad: State) -> State:
        g, theta = grad[0], self.params['theta']
        self.grads['bias'] += g.reshape(-1, self.d_out).sum(axis=0)
        for k, term in enumerate(self.terms):
            self.grads['theta'][k] += _sum_outer(term, g)
        g_terms = [ g @ theta[k].T for k in range(self.order + 1) ]
        for k in range(self.order, 1, -1):
            g_terms[k - 1] = g_terms[k - 1] + 2 * modeconv.graph_product(self.laplacian, g_terms[k])
            g_terms[k - 2] = g_terms[k - 2] - g_terms[k]
        if self.order >= 1:
            g_terms[0] = g_terms[0] + modeconv.graph_product(self.laplacian, g_terms[1])
        return g_terms[0], np.zeros_like(g_terms[0])

def make_layer(kind: str, d_in: int, d_out: int, rng: np.random.Generator, cheb_order: int = 5) -> Layer:
    if kind == 'fast':
        return FastLayer(d_in, d_out, rng)
    if kind == 'laplace':
        return LaplaceLayer(d_in, d_out, rng)
    if kind == 'cheb':
        return ChebLayer(d_in, d_out, rng, cheb_order)
    raise errors.DomainError(f"unknown layer kind {kind!r}, expected one of {LAYER_KINDS}")

# -- GraphCON -----------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class GraphConConfig:
    dt: float = 1.0
    alpha: float = 1.0
    gamma: float = 1.0
    dropout: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise errors.DomainError(f"GraphCON dt must be > 0, got {self.dt}")
        if not (0 <= self.alpha <= 2 and 0 <= self.gamma <= 2):
            raise errors.DomainError(f"GraphCON alpha and gamma must lie in [0, 2], got {self.alpha}, {self.gamma}")
        if not 0 <= self.dropout < 1:
            raise errors.DomainError(f"dropout must lie in [0, 1), got {self.dropout}")

def dropout_masks(rng: np.random.Generator, shape: typing.Tuple[int, ...], p: float) -> typing.Tuple[np.ndarray, np.ndarray]:
    """Inverted dropout masks for X and Y"""
    return tuple((rng.random(shape) >= p) / (1.0 - p) for _ in range(2))  # type: ignore[return-value]

def graphcon_step(
    X: np.ndarray,
    Y: np.ndarray,
    layer: typing.Callable[[ np.ndarray ], np.ndarray],
    cfg: GraphConConfig,
    training: bool = False,
    rng: None|np.random.Generator = None,
    masks: None|typing.Tuple[np.ndarray, np.ndarray] = None
) -> typing.Tuple[np.ndarray, np.ndarray]:
    """Y' = Y + dt (ReLU(layer(X)) - alpha Y - gamma X), X' = X + dt Y'; dropout only while training"""
    if X.shape != Y.shape:
        raise errors.DomainError(f"GraphCON states differ in shape: {X.shape} vs {Y.shape}")
    Y_next = Y + cfg.dt * (np.maximum(layer(X), 0.0) - cfg.alpha * Y - cfg.gamma * X)
    X_next = X + cfg.dt * Y_next
    if training and cfg.dropout > 0:
        if masks is None:
            masks = dropout_masks(rng if rng is not None else np.random.default_rng(), X.shape, cfg.dropout)
        X_next, Y_next = X_next * masks[0], Y_next * masks[1]
    return X_next, Y_next

class GraphConLayer:
    """Wraps a width-preserving layer in the damped oscillator update; the real channel is the position X"""
    kind = 'graphcon'

    def __init__(self, inner: Layer, cfg: GraphConConfig):
        if inner.d_in != inner.d_out:
            raise errors.DomainError(f"GraphCON needs a width-preserving layer, got {inner.d_in} -> {inner.d_out}")
        self.inner, self.cfg = inner, cfg
        self.d_in, self.d_out = inner.d_in, inner.d_out

    @property
    def params(self) -> typing.Dict[str, np.ndarray]:
        return self.inner.params

    @property
    def grads(self) -> typing.Dict[str, np.ndarray]:
        return self.inner.grads

    def zero_grads(self):
        self.inner.zero_grads()

    def forward_pair(self, X: np.ndarray, Y: np.ndarray, context: BatchContext, training: bool, rng: None|np.random.Generator) -> typing.Tuple[np.ndarray, np.ndarray]:
        self.masks = dropout_masks(rng, X.shape, self.cfg.dropout) if training and self.cfg.dropout > 0 and rng is not None else None
        def inner(X: np.ndarray) -> np.ndarray:
            self.activation = self.inner.forward((X, np.zeros_like(X)), context)[0]
            return self.activation
        return graphcon_step(X, Y, inner, self.cfg, training and self.masks is not None, rng, self.masks)

    def backward_pair(self, g_X_next: np.ndarray, g_Y_next: np.ndarray) -> typing.Tuple[np.ndarray, np.ndarray]:
        cfg = self.cfg
        if self.masks is not None:
            g_X_next, g_Y_next = g_X_next * self.masks[0], g_Y_next * self.masks[1]
        g_Y_total = g_Y_next + cfg.dt * g_X_next
        g_inner, _ = self.inner.backward((cfg.dt * g_Y_total * (self.activation > 0), np.zeros_like(g_Y_total)))
        return g_X_next - cfg.dt * cfg.gamma * g_Y_total + g_inner, g_Y_total * (1 - cfg.dt * cfg.alpha)

# -- autoencoder --------------------------------------------------------------

def layer_widths(d: int, layer_count: int, hidden: int, bottleneck: int) -> typing.List[int]:
    """Encoder d -> h .. h -> b over ceil(L/2) layers, decoder mirrors back to d"""
    if layer_count == 1:
        return [ d, d ]
    h = min(hidden, d)
    b = min(bottleneck, h)
    encoder = math.ceil(layer_count / 2)
    widths = [ d ] + [ h ] * (encoder - 1) + [ b ]
    for index in range(encoder + 1, layer_count + 1):
        widths.append(widths[layer_count - index])
    return widths

class Autoencoder:
    layers: typing.List[Layer|GraphConLayer]
    frozen: typing.Set[str]

    def __init__(
        self,
        kind: str,
        widths: typing.Sequence[int],
        rng: np.random.Generator,
        cheb_order: int = 5,
        graphcon: None|GraphConConfig = None
    ):
        self.kind = kind
        self.widths = list(widths)
        self.layers = []
        for d_in, d_out in zip(self.widths[:-1], self.widths[1:]):
            layer = make_layer(kind, d_in, d_out, rng, cheb_order)
            self.layers.append(GraphConLayer(layer, graphcon) if graphcon is not None and d_in == d_out else layer)
        self.frozen = set()

    @classmethod
    def from_config(cls, config: core.RunConfig, d: int, rng: np.random.Generator) -> Autoencoder:
        graphcon = GraphConConfig(config.graphcon_dt(), config.graphcon_alpha(), config.graphcon_gamma(), config.dropout()) if config.graphcon() else None
        widths = layer_widths(d, config.layer_count(), config.hidden_dims(), config.bottleneck())
        return cls(config.layer(), widths, rng, config.cheb_order(), graphcon)

    def parameters(self) -> typing.Dict[str, np.ndarray]:
        return { f"{index}.{name}": value for index, layer in enumerate(self.layers) for name, value in layer.params.items() }

    def gradients(self) -> typing.Dict[str, np.ndarray]:
        grads = { f"{index}.{name}": value for index, layer in enumerate(self.layers) for name, value in layer.grads.items() }
        for name in self.frozen:
            grads[name] = np.zeros_like(grads[name])
        return grads

    def load(self, params: typing.Mapping[str, np.ndarray]):
        own = self.parameters()
        if set(own) != set(params):
            raise errors.ConfigurationError('params', f"checkpoint parameters {sorted(params)} do not fit the model {sorted(own)}")
        for name, value in params.items():
            if own[name].shape != np.shape(value):
                raise errors.ConfigurationError(f"params.{name}", f"shape {np.shape(value)} does not fit {own[name].shape}")
            own[name][...] = value

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()

    def forward(self, x: np.ndarray, context: BatchContext, training: bool = False, rng: None|np.random.Generator = None) -> np.ndarray:
        if x.ndim < 2 or x.shape[-1] != self.widths[0]:
            raise errors.DomainError(f"expected features [..., n, {self.widths[0]}], got {x.shape}")
        state: State = (x, np.zeros_like(x))
        velocity: None|np.ndarray = None
        self.trace: typing.List[typing.Any] = []
        for index, layer in enumerate(self.layers):
            last = index == len(self.layers) - 1
            if isinstance(layer, GraphConLayer):
                fresh = velocity is None
                X, velocity = layer.forward_pair(state[0], np.zeros_like(state[0]) if fresh else velocity, context, training, rng)
                state = (X, np.zeros_like(X))
                self.trace.append(fresh)
            else:
                velocity = None
                state = layer.forward(state, context)
                if last:
                    self.trace.append(None)
                else:
                    masks = (state[0] > 0, state[1] > 0)
                    state = (state[0] * masks[0], state[1] * masks[1])
                    self.trace.append(masks)
        return state[0]

    def backward(self, grad_output: np.ndarray):
        """Accumulate parameter gradients for the last forward pass"""
        grad: State = (grad_output, np.zeros_like(grad_output))
        g_velocity: None|np.ndarray = None
        for layer, record in zip(reversed(self.layers), reversed(self.trace)):
            if isinstance(layer, GraphConLayer):
                g_X, g_Y = layer.backward_pair(grad[0], g_velocity if g_velocity is not None else np.zeros_like(grad[0]))
                grad = (g_X, np.zeros_like(g_X))
                g_velocity = None if record else g_Y
            else:
                g_velocity = None
                if record is not None:
                    grad = (grad[0] * record[0], grad[1] * record[1])
                grad = layer.backward(grad)

    def step(self, learning_rate: float):
        for index, layer in enumerate(self.layers):
            for name, value in layer.params.items():
                if f"{index}.{name}" not in self.frozen:
                    value -= learning_rate * layer.grads[name]

def mse_loss(Y: np.ndarray, Y_hat: np.ndarray) -> float:
    if np.shape(Y) != np.shape(Y_hat):
        raise errors.DomainError(f"shapes differ: {np.shape(Y)} vs {np.shape(Y_hat)}")
    return float(np.mean((np.asarray(Y_hat) - np.asarray(Y)) ** 2))

def mse_gradient(Y: np.ndarray, Y_hat: np.ndarray) -> np.ndarray:
    return 2.0 * (Y_hat - Y) / Y.size

def forward(model: Autoencoder, batch: np.ndarray, context: BatchContext) -> np.ndarray:
    """Reconstruction in evaluation mode"""
    return model.forward(batch, context)

def backward(model: Autoencoder, batch: np.ndarray, context: BatchContext, training: bool = False, rng: None|np.random.Generator = None) -> typing.Tuple[float, typing.Dict[str, np.ndarray]]:
    """Loss and gradient of the reconstruction MSE with respect to every parameter"""
    model.zero_grads()
    Y_hat = model.forward(batch, context, training, rng)
    model.backward(mse_gradient(batch, Y_hat))
    return mse_loss(batch, Y_hat), model.gradients()

# -- training -----------------------------------------------------------------

@dataclasses.dataclass
class TrainState:
    epoch: int = 0
    learning_rate: float = 0.01
    train_loss: typing.List[float] = dataclasses.field(default_factory=list)
    validation_loss: typing.List[float] = dataclasses.field(default_factory=list)
    gradient_norms: typing.List[float] = dataclasses.field(default_factory=list)
    seed: int = 0
    best_epoch: int = 0
    best_validation: None|float = None

@dataclasses.dataclass(frozen=True, eq=False)
class FeatureScaler:
    """Per (node, feature) z-scoring of window features, fitted on the training windows"""
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> FeatureScaler:
        if features.shape[0] == 0:
            raise errors.ConfigurationError('splits', "no training windows to fit the feature scaler on")
        std = features.std(axis=0)
        return cls(features.mean(axis=0), np.where(std > FEATURE_STD_FLOOR, std, 1.0))

    def apply(self, features: np.ndarray) -> np.ndarray:
        if features.shape[1:] != self.mean.shape:
            raise errors.SchemaError(f"features of shape {features.shape[1:]} do not fit the scaler's {self.mean.shape}")
        return (features - self.mean) / self.std

def window_features(windows: typing.Sequence[core.SignalWindow], kind: str, node_count: int) -> np.ndarray:
    """[N x n x d] node features: raw first-channel samples or their log spectral shape,
    followed by the auxiliary channel summaries"""
    if not windows:
        return np.zeros((0, node_count, 0))
    if kind == 'samples':
        return np.stack([ window.features() for window in windows ])
    if kind == 'spectrum':
        return np.stack([
            np.concatenate([ spectral.log_spectrum(window), window.features()[:, window.length:] ], axis=-1)
            for window in windows ])
    raise errors.ConfigurationError('features', f"unknown feature kind {kind!r}")

@dataclasses.dataclass(eq=False)
class PreparedDataset:
    """Normalized window features [N x n x d] with the batches of every split and their contexts"""
    features: np.ndarray
    split: core.DatasetSplit
    normalizer: core.Normalizer
    batches: typing.Dict[str, typing.List[typing.Tuple[np.ndarray, BatchContext]]]
    scaler: None|FeatureScaler = None

    @property
    def input_width(self) -> int:
        return int(self.features.shape[-1])

def batch_indices(indices: typing.Sequence[int], batch_size: int) -> typing.List[np.ndarray]:
    """Contiguous chunks in chronological order"""
    indices = np.asarray(indices, dtype=np.int64)
    return [ indices[start:start + batch_size] for start in range(0, indices.shape[0], batch_size) ]

def prepare_dataset(
    windows: typing.Sequence[core.SignalWindow],
    split: core.DatasetSplit,
    normalizer: core.Normalizer,
    graph: core.SensorGraph,
    matrices: structure.StructuralMatrices,
    config: core.RunConfig,
    scaler: None|FeatureScaler = None
) -> PreparedDataset:
    """Features of every window and the modal context of every batch. Spectral features are
    z-scored with the given scaler, or with one fitted on the training split."""
    features = window_features(windows, config.features(), graph.node_count)
    if config.features() == 'spectrum':
        scaler = scaler or FeatureScaler.fit(features[list(split.train)])
        features = scaler.apply(features)
    batches: typing.Dict[str, typing.List[typing.Tuple[np.ndarray, BatchContext]]] = {}
    with artifact.Phase(f"prepare {len(windows)} windows") as phase:
        for name, indices in (('train', split.train), ('validation', split.validation), ('test', split.test)):
            batches[name] = [
                (chunk, prepare_context([ windows[index] for index in chunk ], graph, matrices, config))
                for chunk in batch_indices(indices, config.batch_size())
            ]
            log.debug(f"{name}: {len(batches[name])} batches after {phase.elapsed():.3f}s")
    return PreparedDataset(features, split, normalizer, batches, scaler)

class Checkpoint(artifact.Artifact):
    """Training snapshot: configuration, latest and best parameters, normalization, rng state and history"""
    format_version: configurable.Var[int]
    code_version: configurable.Var[str]
    seed: configurable.Var[int]
    epoch: configurable.Var[int]
    learning_rate: configurable.Var[float]
    train_loss: configurable.Var[list]
    validation_loss: configurable.Var[list]
    gradient_norms: configurable.Var[list]
    best_epoch: configurable.Var[int]
    best_validation: configurable.Var[float]
    input_width: configurable.Var[int]
    node_count: configurable.Var[int]

    def __init__(self, artifact_path: typing.Union[ None, typing.List[str] ] = None):
        super().__init__(artifact_path)
        self.format_version = configurable.Var(self, 'format_version', CHECKPOINT_FORMAT)
        self.code_version = configurable.Var(self, 'code_version', __version__)
        self.seed = configurable.Var(self, 'seed', 0)
        self.epoch = configurable.Var(self, 'epoch', 0)
        self.learning_rate = configurable.Var(self, 'learning_rate', 0.01)
        self.train_loss = configurable.Var(self, 'train_loss', [])
        self.validation_loss = configurable.Var(self, 'validation_loss', [])
        self.gradient_norms = configurable.Var(self, 'gradient_norms', [])
        self.best_epoch = configurable.Var(self, 'best_epoch', 0)
        self.best_validation = configurable.Var(self, 'best_validation')
        self.input_width = configurable.Var(self, 'input_width')
        self.node_count = configurable.Var(self, 'node_count')
        self.config = core.RunConfig()
        self.params: typing.Dict[str, np.ndarray] = {}
        self.best_params: typing.Dict[str, np.ndarray] = {}
        self.normalizer_mean = np.zeros(0)
        self.normalizer_std = np.zeros(0)
        self.feature_mean = np.zeros(0)
        self.feature_std = np.zeros(0)
        self.rng_state: typing.Dict[str, typing.Any] = {}

    def marshal(self, visitor, inner=None):
        def body(visitor):
            for attr_name in ('config', 'params', 'best_params', 'normalizer_mean', 'normalizer_std', 'feature_mean', 'feature_std', 'rng_state'):
                visitor.inline(attr_name)
        super().marshal(visitor, body)

    def record(self, model: Autoencoder, best: typing.Dict[str, np.ndarray], state: TrainState, rng: np.random.Generator):
        self.params = { name: value.copy() for name, value in model.parameters().items() }
        self.best_params = best
        self.rng_state = rng.bit_generator.state
        self.alias(
            seed=state.seed, epoch=state.epoch, learning_rate=state.learning_rate,
            train_loss=list(state.train_loss), validation_loss=list(state.validation_loss),
            gradient_norms=list(state.gradient_norms), best_epoch=state.best_epoch)
        if state.best_validation is not None:
            self.best_validation.select(state.best_validation)

    def state(self) -> TrainState:
        return TrainState(
            self.epoch(), self.learning_rate(), list(self.train_loss()), list(self.validation_loss()),
            list(self.gradient_norms()), self.seed(), self.best_epoch(),
            self.best_validation() if self.best_validation else None)

    def normalizer(self) -> core.Normalizer:
        return core.Normalizer(np.asarray(self.normalizer_mean), np.asarray(self.normalizer_std))

    def scaler(self) -> None|FeatureScaler:
        mean = np.asarray(self.feature_mean)
        return FeatureScaler(mean, np.asarray(self.feature_std)) if mean.size else None

    def model(self, best: bool = True) -> Autoencoder:
        """Rebuild the autoencoder and load the best (or latest) parameters"""
        model = Autoencoder.from_config(self.config, self.input_width(), np.random.default_rng(self.seed()))
        model.load(self.best_params if best and self.best_params else self.params)
        return model

def mean_loss(model: Autoencoder, dataset: PreparedDataset, split_name: str, normal_only: bool = False) -> None|float:
    """Mean reconstruction MSE per window of a split; `normal_only` skips the windows labeled anomalous"""
    total, count = 0.0, 0
    for chunk, context in dataset.batches[split_name]:
        x = dataset.features[chunk]
        window_errors = np.mean((model.forward(x, context) - x) ** 2, axis=tuple(range(1, x.ndim)))
        if normal_only:
            window_errors = window_errors[[ not dataset.split.labels[index] for index in chunk ]]
        total += float(window_errors.sum())
        count += window_errors.shape[0]
    return total / count if count else None

def train(
    dataset: PreparedDataset,
    config: core.RunConfig,
    checkpoint_path: None|str = None,
    resume: bool = False
) -> typing.Tuple[Autoencoder, TrainState, Checkpoint]:
    """Gradient descent over contiguous training batches; the checkpoint is saved at the end of every epoch"""
    if not dataset.split.train:
        raise errors.ConfigurationError('splits', "training split is empty")
    anomalous = [ index for index in dataset.split.train if dataset.split.labels[index] ]
    if anomalous:
        raise errors.ConfigurationError('splits', f"training split holds anomalous windows {anomalous[:10]}")
    seed = config.seed()
    rng = np.random.default_rng(seed)
    model = Autoencoder.from_config(config, dataset.input_width, rng)
    checkpoint = Checkpoint()
    checkpoint.config = config
    checkpoint.alias(input_width=dataset.input_width, node_count=int(dataset.features.shape[1]))
    checkpoint.normalizer_mean = dataset.normalizer.mean
    checkpoint.normalizer_std = dataset.normalizer.std
    if dataset.scaler is not None:
        checkpoint.feature_mean, checkpoint.feature_std = dataset.scaler.mean, dataset.scaler.std
    state = TrainState(learning_rate=config.learning_rate(), seed=seed)
    best = { name: value.copy() for name, value in model.parameters().items() }
    if resume and checkpoint_path is not None and os.path.exists(checkpoint_path):
        previous = artifact.PersistInFile(checkpoint_path, Checkpoint()).load()
        model.load(previous.params)
        best = previous.best_params or best
        rng.bit_generator.state = previous.rng_state
        state = previous.state()
        log.info(f"RESUME {checkpoint_path} at epoch {state.epoch}")
    persistor = artifact.PersistInFile(checkpoint_path, checkpoint) if checkpoint_path is not None else artifact.NoPersistor()
    warned = False
    for epoch in range(state.epoch, config.epochs()):
        with artifact.Phase(f"epoch {epoch + 1}/{config.epochs()}", persistor, checkpoint) as phase:
            total, count, norms = 0.0, 0, []
            for chunk, context in dataset.batches['train']:
                x = dataset.features[chunk]
                loss, grads = backward(model, x, context, training=True, rng=rng)
                if not math.isfinite(loss):
                    raise errors.TrainingError(epoch + 1, f"loss diverged to {loss}")
                norms.append(math.sqrt(sum(float(np.sum(grad ** 2)) for grad in grads.values())))
                model.step(state.learning_rate)
                total += loss * chunk.shape[0]
                count += chunk.shape[0]
            train_loss = total / count
            validation_loss = mean_loss(model, dataset, 'validation', normal_only=True)
            if validation_loss is None:
                if not warned:
                    log.warning("validation split holds no normal windows, tracking the training loss instead")
                    warned = True
                validation_loss = train_loss
            if not math.isfinite(validation_loss):
                raise errors.TrainingError(epoch + 1, f"validation loss diverged to {validation_loss}")
            state.epoch = epoch + 1
            state.train_loss.append(train_loss)
            state.validation_loss.append(validation_loss)
            state.gradient_norms.append(float(np.mean(norms)))
            if state.best_validation is None or validation_loss < state.best_validation:
                state.best_validation, state.best_epoch = validation_loss, epoch + 1
                best = { name: value.copy() for name, value in model.parameters().items() }
            checkpoint.record(model, best, state, rng)
            log.info(f"epoch {epoch + 1}: train {train_loss:.6g} validation {validation_loss:.6g} ({phase.elapsed():.2f}s)")
    checkpoint.record(model, best, state, rng)
    return model, state, checkpoint

def residuals(model: Autoencoder, dataset: PreparedDataset, split_name: str) -> typing.Tuple[np.ndarray, np.ndarray]:
    """Window indices of the split and their flattened reconstruction residuals [N x n*d]"""
    indices, rows = [], []
    for chunk, context in dataset.batches[split_name]:
        x = dataset.features[chunk]
        rows.append((model.forward(x, context) - x).reshape(chunk.shape[0], -1))
        indices.append(chunk)
    if not rows:
        return np.zeros(0, dtype=np.int64), np.zeros((0, int(np.prod(dataset.features.shape[1:]))))
    return np.concatenate(indices), np.concatenate(rows)
