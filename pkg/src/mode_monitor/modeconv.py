#! env python3

"""Convolution block: weighted cross-PSD, complex SVD, the modal filter bank with its fast and
Laplace forward passes, and the Chebyshev polynomial baseline"""

from __future__ import annotations

import collections
import dataclasses
import logging
import typing

import numpy as np
import scipy.signal
import scipy.sparse

from . import core
from . import errors
from . import spectral

log = logging.getLogger(__name__)

PRODUCTS = ('matrix', 'elementwise', 'conjugate')
JACOBI_TOLERANCE = 1e-13
JACOBI_MAX_SWEEPS = 60

class OperationCounter:
    """Exact real multiply-add tally; a real x complex product counts 2, complex x complex counts 4"""
    def __init__(self):
        self.counts: typing.Dict[str, int] = collections.OrderedDict()

    def add(self, what: str, count: int):
        self.counts[what] = self.counts.get(what, 0) + int(count)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def __str__(self):
        return ', '.join(f"{key}={value}" for key, value in self.counts.items())

def _count(counter: None|OperationCounter, what: str, count: int):
    if counter is not None:
        counter.add(what, count)

@dataclasses.dataclass(frozen=True, eq=False)
class WeightedPsd:
    frequencies: np.ndarray
    S: np.ndarray

@dataclasses.dataclass(frozen=True, eq=False)
class ComplexFilterBank:
    U: np.ndarray
    eps: np.ndarray
    W_r: None|np.ndarray = None
    W_i: None|np.ndarray = None
    bins: typing.Tuple[int, ...] = ()
    total_energy: float = 0.0

    @property
    def retained(self) -> int:
        return int(self.U.shape[1])

    @property
    def captured_energy(self) -> float:
        """Share of the singular value mass kept by the retained modes"""
        return 1.0 if self.total_energy <= 0 else float(self.eps.sum()) / self.total_energy

    def with_weights(self, W_r: np.ndarray, W_i: np.ndarray) -> ComplexFilterBank:
        if W_r.shape != W_i.shape:
            raise errors.DomainError(f"real weights {W_r.shape} and imaginary weights {W_i.shape} differ in shape")
        return dataclasses.replace(self, W_r=W_r, W_i=W_i)

@dataclasses.dataclass(frozen=True, eq=False)
class ChebFilter:
    order: int
    theta: np.ndarray
    laplacian: scipy.sparse.csr_matrix

    def __post_init__(self):
        if self.order < 0:
            raise errors.DomainError(f"Chebyshev order must be >= 0, got {self.order}")
        if self.theta.shape[0] != self.order + 1:
            raise errors.DomainError(f"expected {self.order + 1} coefficient blocks, got {self.theta.shape[0]}")

# -- weighted spectrum and SVD ------------------------------------------------

def weighted_psd(S: spectral.SpectralEstimate|np.ndarray, H: np.ndarray, product: str = 'matrix') -> WeightedPsd:
    """Per bin S_yy = S H^T (matrix), S * H (elementwise) or H S H^H (conjugate)"""
    frequencies = S.frequencies if isinstance(S, spectral.SpectralEstimate) else np.arange(np.shape(S)[-1], dtype=np.float64)
    S = S.S if isinstance(S, spectral.SpectralEstimate) else np.asarray(S)
    H = np.asarray(H)
    if S.shape != H.shape or S.ndim != 3 or S.shape[0] != S.shape[1]:
        raise errors.DomainError(f"spectrum {S.shape} and response {H.shape} must share one [n x n x bins] grid")
    if product == 'matrix':
        weighted = np.einsum('ikf,jkf->ijf', S, H)
    elif product == 'elementwise':
        weighted = S * H
    elif product == 'conjugate':
        weighted = np.einsum('ikf,klf,jlf->ijf', H, S, np.conj(H))
    else:
        raise errors.DomainError(f"unknown product {product!r}, expected one of {PRODUCTS}")
    return WeightedPsd(frequencies, weighted)

def _phase_convention(U: np.ndarray, V: np.ndarray) -> typing.Tuple[np.ndarray, np.ndarray]:
    """Rotate each singular pair so the largest entry of the U column is real and positive;
    both factors hold the same number of columns"""
    peak = U[np.argmax(np.abs(U), axis=0), np.arange(U.shape[1])]
    phase = np.conj(peak / np.abs(peak))
    return U * phase[None, :], V * phase[None, :]

def jacobi_svd(A: np.ndarray) -> typing.Tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """One-sided Jacobi: rotate column pairs of A until they are mutually orthogonal.
    Returns U, singular values (descending), V and the number of sweeps."""
    G = np.array(A, dtype=np.complex128)
    rows, cols = G.shape
    if rows != cols:
        raise errors.DomainError(f"jacobi_svd expects a square matrix, got {G.shape}")
    V = np.eye(cols, dtype=np.complex128)
    for sweep in range(1, JACOBI_MAX_SWEEPS + 1):
        rotated = False
        for p in range(cols - 1):
            for q in range(p + 1, cols):
                alpha = np.vdot(G[:, p], G[:, p]).real
                beta = np.vdot(G[:, q], G[:, q]).real
                gamma = np.vdot(G[:, p], G[:, q])
                if abs(gamma) <= JACOBI_TOLERANCE * np.sqrt(alpha * beta) or abs(gamma) == 0.0:
                    continue
                rotated = True
                phase = np.conj(gamma) / abs(gamma)
                zeta = (beta - alpha) / (2 * abs(gamma))
                t = 1.0 if zeta == 0 else np.sign(zeta) / (abs(zeta) + np.sqrt(1 + zeta * zeta))
                c = 1 / np.sqrt(1 + t * t)
                s = c * t
                for X in (G, V):
                    xp, xq = X[:, p].copy(), X[:, q] * phase
                    X[:, p] = c * xp - s * xq
                    X[:, q] = s * xp + c * xq
        if not rotated:
            break
    else:
        raise errors.NumericError("Jacobi rotations did not converge", JACOBI_MAX_SWEEPS)
    sigma = np.linalg.norm(G, axis=0)
    order = np.argsort(-sigma, kind='stable')
    sigma, G, V = sigma[order], G[:, order], V[:, order]
    rank = int(np.sum(sigma > sigma[0] * 1e-13)) if sigma.size and sigma[0] > 0 else 0
    U = np.zeros_like(G)
    U[:, :rank] = G[:, :rank] / sigma[:rank]
    if rank < rows:
        Q, _ = np.linalg.qr(np.hstack([U[:, :rank], np.eye(rows)]))
        U[:, rank:] = Q[:, rank:rows]
    return U, sigma, V, sweep

def complex_svd(A: np.ndarray, method: str = 'lapack') -> typing.Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """A = U diag(eps) V^H with eps descending; U and V keep min(rows, cols) columns"""
    A = np.asarray(A, dtype=np.complex128)
    if A.ndim != 2 or min(A.shape) < 1:
        raise errors.DomainError(f"complex_svd expects a non-empty matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise errors.DomainError("complex_svd input has non-finite entries")
    if method == 'lapack':
        try:
            U, eps, Vh = np.linalg.svd(A, full_matrices=False)
        except np.linalg.LinAlgError as e:
            raise errors.NumericError(f"SVD did not converge: {e}")
        V = Vh.conj().T
    elif method == 'jacobi':
        U, eps, V, sweeps = jacobi_svd(A)
        log.debug(f"jacobi_svd converged after {sweeps} sweeps")
    else:
        raise errors.DomainError(f"unknown SVD method {method!r}")
    U, V = _phase_convention(U, V)
    return U, eps, V

def select_bins(trace: np.ndarray, m: int) -> typing.Tuple[int, ...]:
    """The m largest peaks of |trace|; when fewer peaks exist the largest remaining bins fill in"""
    magnitude = np.abs(np.asarray(trace))
    peaks, _ = scipy.signal.find_peaks(magnitude)
    ranked = sorted(peaks.tolist(), key=lambda index: (-magnitude[index], index))
    chosen = set(ranked)
    rest = [ index for index in np.argsort(-magnitude, kind='stable').tolist() if index not in chosen ]
    return tuple(sorted((ranked + rest)[:m]))

def filter_bank(
    S_yy: WeightedPsd,
    m: int,
    bins: None|typing.Sequence[int] = None,
    trace: None|np.ndarray = None,
    method: str = 'lapack'
) -> ComplexFilterBank:
    """SVD of S_yy summed over the selected bins; the first m left singular vectors are retained"""
    n = S_yy.S.shape[0]
    if not 1 <= m <= n:
        raise errors.DomainError(f"retained modes must lie in [1, {n}], got {m}")
    if bins is None:
        bins = select_bins(np.einsum('iif->f', S_yy.S) if trace is None else trace, m)
    aggregate = S_yy.S[:, :, list(bins)].sum(axis=2)
    U, eps, _ = complex_svd(aggregate, method)
    bank = ComplexFilterBank(U[:, :m], eps[:m], bins=tuple(int(index) for index in bins), total_energy=float(eps.sum()))
    log.debug(f"filter bank keeps {m}/{n} modes at bins {list(bins)}, captured energy {bank.captured_energy:.4f}")
    return bank

# -- forward passes -----------------------------------------------------------

def _check_features(x: np.ndarray, n: int, d_in: int, what: str):
    if x.ndim < 2 or x.shape[-2] != n or x.shape[-1] != d_in:
        raise errors.DomainError(f"{what} expects features [..., {n}, {d_in}], got {x.shape}")

def modeconv_fast_forward(
    x: np.ndarray,
    bank: ComplexFilterBank,
    mix: None|np.ndarray = None,
    bias: None|np.ndarray = None,
    counter: None|OperationCounter = None
) -> np.ndarray:
    """Project onto the retained modes, apply W = W_r + i W_i in modal coordinates, project back;
    the real and imaginary parts are stacked and mixed down to the output width"""
    if bank.W_r is None or bank.W_i is None:
        raise errors.DomainError("filter bank has no weights")
    n, m = bank.U.shape
    d_in, d_out = bank.W_r.shape
    _check_features(x, n, d_in, 'modeconv_fast_forward')
    mix = np.vstack([np.eye(d_out), np.zeros((d_out, d_out))]) if mix is None else mix
    if mix.shape[0] != 2 * d_out:
        raise errors.DomainError(f"mix must have {2 * d_out} rows, got {mix.shape}")
    p = np.matmul(bank.U.conj().T, x)
    q = p @ (bank.W_r + 1j * bank.W_i)
    z = np.matmul(bank.U, q)
    y = np.concatenate([z.real, z.imag], axis=-1) @ mix
    if bias is not None:
        y = y + bias
    windows = int(np.prod(x.shape[:-2]))
    _count(counter, 'project', windows * 2 * n * m * d_in)
    _count(counter, 'modal_weights', windows * 4 * m * d_in * d_out)
    _count(counter, 'back_project', windows * 4 * n * m * d_out)
    _count(counter, 'mix', windows * n * 2 * d_out * mix.shape[1])
    return y

def modeconv_laplace_forward(
    x_r: np.ndarray,
    x_i: None|np.ndarray,
    A_norm: np.ndarray,
    W_r: np.ndarray,
    W_i: np.ndarray,
    counter: None|OperationCounter = None
) -> np.ndarray:
    """Complex messages (W_r + i W_i)(x_r + i x_i) aggregated with A_norm; returns [..., n, 2 d_out],
    real channels first"""
    n = A_norm.shape[0]
    d_in, d_out = W_r.shape
    _check_features(x_r, n, d_in, 'modeconv_laplace_forward')
    x_i = np.zeros_like(x_r) if x_i is None else x_i
    if x_i.shape != x_r.shape or W_i.shape != W_r.shape:
        raise errors.DomainError(f"real/imaginary shapes differ: {x_r.shape}/{x_i.shape}, {W_r.shape}/{W_i.shape}")
    message_r = x_r @ W_r - x_i @ W_i
    message_i = x_r @ W_i + x_i @ W_r
    windows = int(np.prod(x_r.shape[:-2]))
    _count(counter, 'messages', windows * 4 * n * d_in * d_out)
    _count(counter, 'aggregate', windows * 2 * int(np.count_nonzero(A_norm)) * d_out)
    return np.concatenate([np.matmul(A_norm, message_r), np.matmul(A_norm, message_i)], axis=-1)

# -- graph operators ----------------------------------------------------------

def normalized_laplacian(graph: core.SensorGraph, add_self_loops: bool = True) -> typing.Tuple[np.ndarray, np.ndarray]:
    """L = I - D^-1/2 A D^-1/2 and the normalized adjacency; nodes without degree get zero rows"""
    if any(weight < 0 for _, _, weight in graph.edges):
        raise errors.DomainError("edge weights must be non-negative for the normalized Laplacian")
    adjacency = graph.adjacency()
    if add_self_loops:
        adjacency = adjacency + np.eye(graph.node_count)
    degree = adjacency.sum(axis=1)
    scale = np.where(degree > 0, 1.0 / np.sqrt(np.where(degree > 0, degree, 1.0)), 0.0)
    A_norm = scale[:, None] * adjacency * scale[None, :]
    return np.eye(graph.node_count) - A_norm, A_norm

def scaled_laplacian(L: np.ndarray) -> scipy.sparse.csr_matrix:
    """2 L / lambda_max - I, with lambda_max from a dense eigensolve (2 when L vanishes)"""
    largest = float(np.linalg.eigvalsh(L)[-1]) if L.size else 0.0
    if largest < 1e-12:
        largest = 2.0
    return scipy.sparse.csr_matrix(2.0 * L / largest - np.eye(L.shape[0]))

def _as_columns(x: np.ndarray) -> typing.Tuple[np.ndarray, typing.Tuple[int, ...]]:
    """[..., n, d] -> [n, prod(...) * d] so one sparse product serves the whole batch"""
    moved = np.moveaxis(x, -2, 0)
    return moved.reshape(x.shape[-2], -1), moved.shape

def _from_columns(columns: np.ndarray, shape: typing.Tuple[int, ...]) -> np.ndarray:
    return np.moveaxis(columns.reshape(shape), 0, -2)

def graph_product(operator: scipy.sparse.csr_matrix|np.ndarray, x: np.ndarray) -> np.ndarray:
    """operator @ x for node features [..., n, d]"""
    columns, shape = _as_columns(x)
    return _from_columns(operator @ columns, shape)

def chebyshev_terms(x: np.ndarray, laplacian: scipy.sparse.csr_matrix, order: int, counter: None|OperationCounter = None) -> typing.List[np.ndarray]:
    """T_0 x .. T_K x by the three-term recursion"""
    columns, shape = _as_columns(x)
    terms = [ columns ]
    if order >= 1:
        terms.append(laplacian @ columns)
    for _ in range(2, order + 1):
        terms.append(2 * (laplacian @ terms[-1]) - terms[-2])
    _count(counter, 'recursion', max(order, 0) * laplacian.nnz * columns.shape[1])
    return [ _from_columns(term, shape) for term in terms ]

def cheb_forward(x: np.ndarray, cheb: ChebFilter, counter: None|OperationCounter = None) -> np.ndarray:
    """sum_k T_k(L~) x theta_k"""
    n = cheb.laplacian.shape[0]
    _check_features(x, n, cheb.theta.shape[1], 'cheb_forward')
    terms = chebyshev_terms(x, cheb.laplacian, cheb.order, counter)
    windows = int(np.prod(x.shape[:-2]))
    _count(counter, 'coefficients', windows * (cheb.order + 1) * n * cheb.theta.shape[1] * cheb.theta.shape[2])
    return sum(term @ cheb.theta[k] for k, term in enumerate(terms))
