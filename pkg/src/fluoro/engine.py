"""Deterministic propagation of the qubit state forward and of the measurement effect backward.

All rates are in 1/us and frequencies in MHz; the Hamiltonian is stored divided by
hbar, in rad/us, so no Planck constant appears anywhere.
"""
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from fluoro import qubit
from fluoro.config import POSTSELECTIONS, PREPARATIONS
from fluoro.errors import ConfigError
from fluoro.qubit import DensityMatrix, Effect, Operator2, Pauli
from fluoro.settings import logger

SIGMA_MINUS = qubit.make_pauli(Pauli.MINUS).matrix
SIGMA_PLUS = qubit.make_pauli(Pauli.PLUS).matrix
SIGMA_Z = qubit.make_pauli(Pauli.Z).matrix
SIGMA_Y = qubit.make_pauli(Pauli.Y).matrix
IDENTITY = qubit.make_pauli(Pauli.I).matrix
NUMBER = SIGMA_PLUS @ SIGMA_MINUS

# (4, 2, 2) stack of the matrix units |i><j|, ordered like a row-major flatten
MATRIX_UNITS = np.eye(4, dtype=np.complex128).reshape(4, 2, 2)


class Direction(str, Enum):
    FORWARD = 'forward'
    BACKWARD = 'backward'


@dataclass(frozen=True)
class StateTrace:
    times: np.ndarray
    states: np.ndarray
    direction: Direction
    raw_states: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        for array in (self.times, self.states, self.raw_states):
            if array is not None:
                array.flags.writeable = False

    def __len__(self):
        return len(self.times)

    def __getitem__(self, index):
        wrapper = DensityMatrix if self.direction == Direction.FORWARD else Effect
        return wrapper(self.states[index], tol=1e-9)

    def expectation(self, operator):
        """Tr[state(t) A] at every stored time."""
        return qubit.trace_stack(self.states @ np.asarray(operator))

    def subsample(self, stride):
        return StateTrace(self.times[::stride].copy(), self.states[::stride].copy(), self.direction,
                          None if self.raw_states is None else self.raw_states[::stride].copy())


def population(trace):
    """<sigma_z>(t) along a forward trace, -1 in |g> and +1 in |e>."""
    return trace.expectation(SIGMA_Z).real


def hamiltonian(cfg):
    """H/hbar in rad/us, rotating frame at the drive frequency."""
    return Operator2(math.pi * cfg.detuning * SIGMA_Z + math.pi * cfg.nu_r * SIGMA_Y)


def prepare_rho0(cfg, prep='e'):
    if prep not in PREPARATIONS:
        raise ConfigError(f"Unknown preparation {prep!r}")
    if prep == 'maximally_mixed':
        return DensityMatrix(0.5 * IDENTITY)
    if prep == 'e':
        return DensityMatrix(np.diag([cfg.p0, 1 - cfg.p0]))
    return DensityMatrix(np.diag([1 - cfg.p0, cfg.p0]))


def postselect_effect_ground(cfg):
    return Effect(np.diag([1 - cfg.p_t, cfg.p_t]))


def postselect_effect_excited(cfg):
    return Effect(np.diag([cfg.p_t, 1 - cfg.p_t]))


def postselect_effect(cfg, post='g'):
    if post not in POSTSELECTIONS:
        raise ConfigError(f"Unknown post-selection {post!r}")
    if post == 'none':
        return Effect(IDENTITY)
    if post == 'g':
        return postselect_effect_ground(cfg)
    return postselect_effect_excited(cfg)


def _wrap_like(source, result):
    return Operator2(result) if isinstance(source, Operator2) else result


def lindblad_rhs(rho, cfg):
    """d rho / dt; accepts an Operator2 or any (..., 2, 2) stack."""
    h = hamiltonian(cfg).matrix
    state = np.asarray(rho, dtype=np.complex128)
    result = -1j * (h @ state - state @ h)
    result = result + cfg.gamma1 * (SIGMA_MINUS @ state @ SIGMA_PLUS
                                    - 0.5 * (NUMBER @ state + state @ NUMBER))
    if cfg.gamma_phi:
        result = result + 0.5 * cfg.gamma_phi * (SIGMA_Z @ state @ SIGMA_Z - state)
    return _wrap_like(rho, result)


def adjoint_rhs(effect, cfg):
    """d E / dt of the backward equation, valid for t <= T."""
    h = hamiltonian(cfg).matrix
    state = np.asarray(effect, dtype=np.complex128)
    result = -1j * (h @ state - state @ h)
    result = result - cfg.gamma1 * (SIGMA_PLUS @ state @ SIGMA_MINUS
                                    - 0.5 * (NUMBER @ state + state @ NUMBER))
    if cfg.gamma_phi:
        result = result - 0.5 * cfg.gamma_phi * (SIGMA_Z @ state @ SIGMA_Z - state)
    return _wrap_like(effect, result)


def rk4_step(rhs, state, h, cfg):
    k1 = rhs(state, cfg)
    k2 = rhs(state + 0.5 * h * k1, cfg)
    k3 = rhs(state + 0.5 * h * k2, cfg)
    k4 = rhs(state + h * k3, cfg)
    return state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_step_matrix(rhs, h, cfg):
    """The RK4 update as a 4x4 matrix acting on row-major flattened states.

    The right-hand sides are linear, so one RK4 step applied to the four matrix
    units tabulates the step exactly.
    """
    images = rk4_step(rhs, MATRIX_UNITS, h, cfg)
    return images.reshape(4, 4).T


def _backward_rhs(effect, cfg):
    # integrate in tau = T - t
    return -adjoint_rhs(effect, cfg)


def _integrate(initial, rhs, cfg):
    cfg.check_step()
    step = rk4_step_matrix(rhs, cfg.dt, cfg)
    n = cfg.n_steps
    flat = np.empty((n + 1, 4), dtype=np.complex128)
    flat[0] = np.asarray(initial, dtype=np.complex128).reshape(4)
    for index in range(n):
        flat[index + 1] = step @ flat[index]
    return flat.reshape(n + 1, 2, 2)


def propagate_forward(rho0, cfg):
    logger.debug(f"Forward propagation nu_r={cfg.nu_r} MHz over {cfg.n_steps} steps")
    raw = _integrate(rho0, lindblad_rhs, cfg)
    return StateTrace(cfg.times, qubit.repair_density(raw), Direction.FORWARD, raw)


def propagate_backward(effect_t, cfg):
    logger.debug(f"Backward propagation nu_r={cfg.nu_r} MHz over {cfg.n_steps} steps")
    raw = _integrate(effect_t, _backward_rhs, cfg)[::-1].copy()
    return StateTrace(cfg.times, qubit.repair_effect(raw), Direction.BACKWARD, raw)


def vec(state):
    """Column-stacking vectorization."""
    return np.asarray(state, dtype=np.complex128).reshape(4, order='F')


def unvec(vector):
    return np.asarray(vector).reshape(2, 2, order='F')


def _left(a):
    return np.kron(IDENTITY, a)


def _right(a):
    return np.kron(a.T, IDENTITY)


def _sandwich(a, b):
    """Superoperator of X -> a X b."""
    return np.kron(b.T, a)


def liouvillian_matrix(cfg, direction=Direction.FORWARD):
    """Generator of d vec(state)/dt for either equation, in column-stacking convention."""
    h = hamiltonian(cfg).matrix
    generator = -1j * (_left(h) - _right(h))
    anticommutator = 0.5 * (_left(NUMBER) + _right(NUMBER))
    dephasing = 0.5 * cfg.gamma_phi * (_sandwich(SIGMA_Z, SIGMA_Z) - np.eye(4))
    if Direction(direction) == Direction.FORWARD:
        return generator + cfg.gamma1 * (_sandwich(SIGMA_MINUS, SIGMA_PLUS) - anticommutator) + dephasing
    return generator - cfg.gamma1 * (_sandwich(SIGMA_PLUS, SIGMA_MINUS) - anticommutator) - dephasing


def expm_series(matrix, min_terms=16):
    """exp(matrix) by scaling and squaring around a truncated Taylor series."""
    matrix = np.asarray(matrix, dtype=np.complex128)
    norm = np.linalg.norm(matrix, 1)
    squarings = 0
    while norm / 2 ** squarings >= 0.5:
        squarings += 1
    scaled = matrix / 2 ** squarings
    result = np.eye(matrix.shape[0], dtype=np.complex128)
    term = np.eye(matrix.shape[0], dtype=np.complex128)
    for order in range(1, min_terms + 3):
        term = term @ scaled / order
        result = result + term
    for _ in range(squarings):
        result = result @ result
    return result


def oracle_expm_propagate(state, cfg, t, direction=Direction.FORWARD):
    """Independent propagation by matrix exponential.

    Forward: rho(t) from rho(0) = ``state``. Backward: the effect a time ``t``
    before the final time, from E(T) = ``state``.
    """
    if not 0 <= t <= cfg.duration + 1e-12:
        raise ConfigError(f"t={t} outside [0, {cfg.duration}]")
    direction = Direction(direction)
    generator = liouvillian_matrix(cfg, direction)
    sign = 1.0 if direction == Direction.FORWARD else -1.0
    return Operator2(unvec(expm_series(sign * generator * t) @ vec(state)))
