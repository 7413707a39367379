#! env python3

"""PDE block: lumped mass-spring chain, eigenmodes, modal coordinates and frequency response"""

from __future__ import annotations

import dataclasses
import logging
import typing

import numpy as np
import scipy.linalg

from . import core
from . import errors

log = logging.getLogger(__name__)

# scale of the residue pair of every mode; unit modal mass convention
RESIDUE_SCALING = 1.0

SYMMETRY_TOLERANCE = 1e-9
ORTHOGONALITY_TOLERANCE = 1e-8
PROPORTIONALITY_TOLERANCE = 1e-6
CONDITION_LIMIT = 1e12

@dataclasses.dataclass(frozen=True, eq=False)
class StructuralMatrices:
    M: np.ndarray
    K: np.ndarray
    C: np.ndarray
    stiffness: float
    damping_ratio: float
    alpha: float
    beta: float
    springs: np.ndarray

    @property
    def node_count(self) -> int:
        return int(self.M.shape[0])

@dataclasses.dataclass(frozen=True, eq=False)
class ModalModel:
    omega: np.ndarray
    shapes: np.ndarray
    modal_mass: None|np.ndarray = None
    modal_stiffness: None|np.ndarray = None
    modal_damping: None|np.ndarray = None
    damping_ratios: None|np.ndarray = None
    poles: None|np.ndarray = None
    residues: None|np.ndarray = None

    @property
    def natural_frequencies(self) -> np.ndarray:
        """f_n in Hz"""
        return self.omega / (2 * np.pi)

    @property
    def mode_count(self) -> int:
        return int(self.omega.shape[0])

    def report(self) -> typing.Dict[str, typing.Any]:
        content: typing.Dict[str, typing.Any] = dict(
            omega=self.omega, natural_frequencies=self.natural_frequencies, shapes=self.shapes)
        if self.poles is not None:
            content.update(poles=self.poles, damping_ratios=self.damping_ratios)
        return content

@dataclasses.dataclass(frozen=True, eq=False)
class FrfEvaluation:
    omega: np.ndarray
    H: np.ndarray

def chain_springs(node_count: int, k: float) -> np.ndarray:
    """Springs of a chain held by a bearing at either end: spring s joins node s-1 and node s,
    springs 0 and n are the bearings. A single node hangs on one spring."""
    return np.full(1 if node_count == 1 else node_count + 1, float(k))

def stiffness_matrix(springs: np.ndarray) -> np.ndarray:
    springs = np.asarray(springs, dtype=np.float64)
    if springs.shape[0] == 1:
        return springs.reshape(1, 1).copy()
    n = springs.shape[0] - 1
    K = np.diag(springs[:-1] + springs[1:])
    inner = springs[1:n]
    K[np.arange(n - 1), np.arange(1, n)] = -inner
    K[np.arange(1, n), np.arange(n - 1)] = -inner
    return K

def rayleigh_coefficients(omega: np.ndarray, damping_ratio: float, reference_modes: typing.Tuple[int, int]) -> typing.Tuple[float, float]:
    """alpha, beta meeting the damping ratio exactly at the two reference modes (1-based)"""
    r1, r2 = reference_modes
    if not (1 <= r1 <= omega.shape[0] and 1 <= r2 <= omega.shape[0]):
        raise errors.DomainError(f"reference modes {reference_modes} out of range for {omega.shape[0]} modes")
    w1, w2 = float(omega[r1 - 1]), float(omega[r2 - 1])
    if r1 == r2 or np.isclose(w1, w2):
        return 0.0, 2 * damping_ratio / w1
    return 2 * damping_ratio * w1 * w2 / (w1 + w2), 2 * damping_ratio / (w1 + w2)

def assemble_matrices(
    graph: core.SensorGraph,
    k: float,
    damping_ratio: float,
    reference_modes: None|typing.Tuple[int, int] = None,
    springs: None|np.ndarray = None
) -> StructuralMatrices:
    """M, K and Rayleigh C of the lumped chain; `springs` overrides the uniform chain (damaged structures)"""
    if not k > 0:
        raise errors.DomainError(f"stiffness must be positive, got {k}")
    if not 0 <= damping_ratio < 1:
        raise errors.DomainError(f"damping ratio must lie in [0, 1), got {damping_ratio}")
    n = graph.node_count
    springs = chain_springs(n, k) if springs is None else np.asarray(springs, dtype=np.float64)
    if springs.shape != chain_springs(n, k).shape:
        raise errors.DomainError(f"{springs.shape[0]} springs do not fit a chain of {n} nodes")
    if np.any(springs <= 0):
        raise errors.DomainError(f"spring constants must be positive, got {springs.tolist()}")
    M = np.diag(graph.node_masses)
    K = stiffness_matrix(springs)
    reference_modes = reference_modes if reference_modes is not None else (1, n)
    omega = solve_eigenmodes(M, K).omega
    alpha, beta = rayleigh_coefficients(omega, damping_ratio, reference_modes)
    return StructuralMatrices(M, K, alpha * M + beta * K, float(k), float(damping_ratio), alpha, beta, springs)

def _check_mass(M: np.ndarray) -> np.ndarray:
    masses = np.diagonal(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise errors.DomainError(f"mass matrix must be square, got shape {M.shape}")
    if np.any(np.abs(M - np.diag(masses)) > 0) or np.any(masses <= 0):
        raise errors.DomainError("mass matrix must be diagonal with strictly positive diagonal")
    return masses

def solve_eigenmodes(M: np.ndarray, K: np.ndarray) -> ModalModel:
    """Solve K phi = omega^2 M phi by the symmetric reduction M^-1/2 K M^-1/2; modes ascending,
    each shape scaled so its largest entry is exactly +1"""
    masses = _check_mass(np.asarray(M, dtype=np.float64))
    K = np.asarray(K, dtype=np.float64)
    if K.shape != M.shape:
        raise errors.DomainError(f"stiffness shape {K.shape} does not match mass shape {M.shape}")
    asymmetry = np.max(np.abs(K - K.T)) if K.size else 0.0
    if asymmetry > SYMMETRY_TOLERANCE * max(1.0, np.max(np.abs(K))):
        raise errors.DomainError(f"stiffness matrix is not symmetric (deviation {asymmetry:.3g})")
    scale = 1.0 / np.sqrt(masses)
    try:
        eigenvalues, vectors = scipy.linalg.eigh(scale[:, None] * K * scale[None, :])
    except np.linalg.LinAlgError as e:
        raise errors.NumericError(f"eigen solver did not converge: {e}")
    omega = np.sqrt(np.clip(eigenvalues, 0.0, None))
    shapes = scale[:, None] * vectors
    peak = np.argmax(np.abs(shapes), axis=0)
    shapes = shapes / shapes[peak, np.arange(shapes.shape[1])][None, :]
    order = np.lexsort(tuple(shapes[::-1]) + (omega,))
    return ModalModel(omega[order], shapes[:, order])

def _diagonal_or_raise(matrix: np.ndarray, tolerance: float, what: str, error: typing.Type[errors.ValidationError]) -> np.ndarray:
    diagonal = np.diagonal(matrix).copy()
    off = matrix - np.diag(diagonal)
    reference = np.max(np.abs(diagonal)) if diagonal.size else 0.0
    relative = np.max(np.abs(off)) / reference if reference > 0 else np.max(np.abs(off))
    if relative > tolerance:
        raise error(f"modal {what} is not diagonal (relative off-diagonal {relative:.3g})")
    return diagonal

def modal_projection(M: np.ndarray, K: np.ndarray, C: np.ndarray, model: ModalModel) -> ModalModel:
    """Congruence with the mode shapes, then poles and residue scale factors per mode"""
    shapes = model.shapes
    modal_mass = _diagonal_or_raise(shapes.T @ M @ shapes, ORTHOGONALITY_TOLERANCE, 'mass', errors.DomainError)
    modal_stiffness = _diagonal_or_raise(shapes.T @ K @ shapes, ORTHOGONALITY_TOLERANCE, 'stiffness', errors.DomainError)
    modal_damping = _diagonal_or_raise(shapes.T @ C @ shapes, PROPORTIONALITY_TOLERANCE, 'damping', errors.ProportionalityError)
    omega = np.sqrt(modal_stiffness / modal_mass)
    ratios = modal_damping / (2 * modal_mass * omega)
    if np.any(ratios >= 1):
        raise errors.DomainError(f"modes {np.flatnonzero(ratios >= 1).tolist()} are not underdamped")
    damped = omega * np.sqrt(1 - ratios ** 2)
    poles = -ratios * omega + 1j * damped
    residues = RESIDUE_SCALING / (2j * damped * modal_mass)
    return dataclasses.replace(
        model,
        modal_mass=np.diag(modal_mass), modal_stiffness=np.diag(modal_stiffness), modal_damping=np.diag(modal_damping),
        damping_ratios=ratios, poles=poles, residues=residues)

def modal_model(matrices: StructuralMatrices) -> ModalModel:
    return modal_projection(matrices.M, matrices.K, matrices.C, solve_eigenmodes(matrices.M, matrices.K))

def frequency_response(
    M: np.ndarray, C: np.ndarray, K: np.ndarray,
    omega: typing.Sequence[float],
    form: str = 'direct',
    model: None|ModalModel = None
) -> FrfEvaluation:
    """H(omega) = (-omega^2 M + i omega C + K)^-1 by linear solve, or as the sum of residue pairs over the modes"""
    omega = np.asarray(omega, dtype=np.float64)
    if not np.all(np.isfinite(omega)):
        raise errors.DomainError("frequency grid must be finite")
    n = M.shape[0]
    H = np.zeros((n, n, omega.shape[0]), dtype=np.complex128)
    if form == 'direct':
        identity = np.eye(n)
        for index, w in enumerate(omega):
            system = -w ** 2 * M + 1j * w * C + K
            condition = np.linalg.cond(system)
            if not np.isfinite(condition) or condition > CONDITION_LIMIT:
                raise errors.ResonanceError(float(w))
            H[:, :, index] = np.linalg.solve(system, identity)
    elif form == 'modal':
        model = model if model is not None and model.poles is not None else modal_projection(M, K, C, model or solve_eigenmodes(M, K))
        undamped = model.damping_ratios == 0
        for w in omega:
            if np.any(undamped & np.isclose(model.omega, abs(w), rtol=1e-6, atol=0.0)):
                raise errors.ResonanceError(float(w))
        outer = np.einsum('ir,jr->ijr', model.shapes, model.shapes)
        s = 1j * omega
        weights = (model.residues[:, None] / (s[None, :] - model.poles[:, None])
            + np.conj(model.residues)[:, None] / (s[None, :] - np.conj(model.poles)[:, None]))
        H = np.einsum('ijr,rw->ijw', outer, weights)
    else:
        raise errors.DomainError(f"unknown frequency response form {form!r}")
    return FrfEvaluation(omega, H)
