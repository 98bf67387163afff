"""Conditional expectations from a forward state and a backward effect.

The conditioned operator is rho E / Tr(rho E) with exactly that ordering; the
weak value of an operator A is Tr(rho E A) / Tr(rho E).
"""
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from fluoro import engine, qubit
from fluoro.config import MODES
from fluoro.errors import ConfigError, SingularConditioning
from fluoro.qubit import Pauli
from fluoro.settings import logger
from fluoro.tasks import Task, run_tasks

DEFAULT_EPS = 1e-12
# |Re <sigma_-> | of any unconditioned average stays below this
CLASSICAL_BOUND = 0.5
BOUND_TOLERANCE = 1e-9

SIGMA_MINUS = engine.SIGMA_MINUS
HALF_SIGMA_X = 0.5 * qubit.make_pauli(Pauli.X).matrix


def weak_sigma_minus(rho, effect, eps=DEFAULT_EPS):
    """Return (<sigma_->_w, Re Tr(rho E))."""
    if eps <= 0:
        raise ConfigError("eps must be positive")
    product = np.asarray(rho) @ np.asarray(effect)
    denominator = np.trace(product).real
    if denominator <= eps:
        raise SingularConditioning(f"Tr(rho E) = {denominator:.3g} <= {eps:.3g}: past and future exclude each other")
    return complex(np.trace(product @ SIGMA_MINUS)) / denominator, float(denominator)


def weak_hermitian(rho, effect, operator, eps=DEFAULT_EPS):
    """Tr(rho E A) / Tr(rho E) for a hermitian A, e.g. sigma_x / 2."""
    if eps <= 0:
        raise ConfigError("eps must be positive")
    if not qubit.Operator2(operator).is_hermitian():
        raise ConfigError("weak_hermitian needs a hermitian operator")
    product = np.asarray(rho) @ np.asarray(effect)
    denominator = np.trace(product).real
    if denominator <= eps:
        raise SingularConditioning(f"Tr(rho E) = {denominator:.3g} <= {eps:.3g}")
    return complex(np.trace(product @ np.asarray(operator))) / denominator


def post_only_expectation(effect):
    """Tr(E sigma_-) / Tr(E): the average when only the future is known."""
    norm = np.trace(np.asarray(effect)).real
    if norm <= DEFAULT_EPS:
        raise SingularConditioning(f"Tr(E) = {norm:.3g} vanishes")
    return complex(np.trace(np.asarray(effect) @ SIGMA_MINUS)) / norm


def conditioned_stack(rho, effect, operator, eps=DEFAULT_EPS):
    """Vectorized weak value over stacks; singular entries come back as NaN."""
    product = rho @ effect
    denominators = qubit.trace_stack(product).real
    numerators = qubit.trace_stack(product @ operator)
    singular = denominators <= eps
    values = np.where(singular, np.nan + 0j, numerators / np.where(singular, 1.0, denominators))
    return values, denominators


@dataclass(frozen=True)
class ConditionalMap:
    times: np.ndarray
    rabi_freqs: np.ndarray
    values: np.ndarray
    mode: str
    prep: str
    post: str
    denominators: np.ndarray = None

    def __post_init__(self):
        expected = (len(self.times), len(self.rabi_freqs))
        if self.values.shape != expected:
            raise ValueError(f"values have shape {self.values.shape}, expected {expected}")
        if self.denominators is not None and self.denominators.shape != expected:
            raise ValueError("denominators do not match the grid")

    @property
    def conditioned(self):
        return self.denominators is not None

    @property
    def missing(self):
        return np.isnan(self.values)

    def time_index(self, t, tol=1e-9):
        index = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[index] - t) > tol:
            raise ConfigError(f"t={t} us is not on the map grid")
        return index

    def cut(self, t):
        return self.values[self.time_index(t)]

    def extremum(self):
        """(Re value, t, nu_r) of the cell with the largest |Re value|."""
        magnitude = np.where(self.missing, -np.inf, np.abs(self.values.real))
        i, j = np.unravel_index(int(np.argmax(magnitude)), magnitude.shape)
        return float(self.values.real[i, j]), float(self.times[i]), float(self.rabi_freqs[j])

    def subsample(self, stride):
        denominators = None if self.denominators is None else self.denominators[::stride].copy()
        return ConditionalMap(self.times[::stride].copy(), self.rabi_freqs, self.values[::stride].copy(),
                              self.mode, self.prep, self.post, denominators)

    def with_values(self, values):
        return ConditionalMap(self.times, self.rabi_freqs, values, self.mode, self.prep, self.post,
                              self.denominators)


def check_mode(mode, prep, post):
    if mode not in MODES:
        raise ConfigError(f"Unknown mode {mode!r}")
    if mode == 'pre_only' and post != 'none':
        raise ConfigError("pre_only maps take no post-selection")
    if mode == 'post_only' and prep != 'maximally_mixed':
        raise ConfigError("post_only maps need the maximally mixed preparation")
    if mode != 'pre_only' and post == 'none':
        raise ConfigError(f"{mode} maps need a post-selection")


class ColumnTask(Task):
    """One Rabi-frequency column of a ConditionalMap."""

    def __init__(self, cfg_base, mode, prep, post, stride=1, eps=DEFAULT_EPS):
        self.cfg_base = cfg_base
        self.mode = mode
        self.prep = prep
        self.post = post
        self.stride = stride
        self.eps = eps

    def perform_task(self, nu_r):
        cfg = self.cfg_base.replace(nu_r=float(nu_r))
        if self.mode == 'pre_only':
            forward = engine.propagate_forward(engine.prepare_rho0(cfg, self.prep), cfg).subsample(self.stride)
            return forward.expectation(SIGMA_MINUS), None
        backward = engine.propagate_backward(engine.postselect_effect(cfg, self.post), cfg).subsample(self.stride)
        if self.mode == 'post_only':
            rho = np.broadcast_to(engine.prepare_rho0(cfg, self.prep).matrix, backward.states.shape)
        else:
            rho = engine.propagate_forward(engine.prepare_rho0(cfg, self.prep), cfg).subsample(self.stride).states
        operator = HALF_SIGMA_X if self.mode == 'hermitian_xw' else SIGMA_MINUS
        return conditioned_stack(rho, backward.states, operator, self.eps)


def build_map(cfg_base, rabi_grid, mode, prep='e', post='none', stride=1, workers=1, eps=DEFAULT_EPS):
    rabi_grid = np.asarray(rabi_grid, dtype=float)
    if rabi_grid.size == 0:
        raise ConfigError("rabi_grid is empty")
    check_mode(mode, prep, post)
    for nu_r in rabi_grid:
        cfg_base.check_step(nu_r)
    logger.info(f"Building {mode} map (prep={prep}, post={post}) over {rabi_grid.size} Rabi frequencies")
    columns = run_tasks(ColumnTask(cfg_base, mode, prep, post, stride, eps), rabi_grid, workers)
    values = np.stack([column[0] for column in columns], axis=1)
    denominators = None if mode == 'pre_only' else np.stack([column[1] for column in columns], axis=1)
    result = ConditionalMap(cfg_base.times[::stride].copy(), rabi_grid, values, mode, prep, post, denominators)
    if result.missing.any():
        logger.warning(f"{int(result.missing.sum())} cells of the {mode} map are singular and left missing")
    return result


@dataclass(frozen=True)
class ViolationComponent:
    size: int
    extremum: float
    t: float
    nu_r: float


@dataclass(frozen=True)
class ViolationReport:
    cells: np.ndarray
    components: tuple

    def __bool__(self):
        return bool(self.components)

    def __len__(self):
        return int(self.cells.sum())


def violation_mask(conditional_map):
    real = np.where(conditional_map.missing, 0.0, conditional_map.values.real)
    return np.abs(real) > CLASSICAL_BOUND + BOUND_TOLERANCE


def bound_violation_contours(conditional_map):
    """Cells beyond the classical range, grouped into 4-connected components."""
    cells = violation_mask(conditional_map)
    labels, count = ndimage.label(cells)
    real = conditional_map.values.real
    components = []
    for label in range(1, count + 1):
        member = labels == label
        magnitude = np.where(member, np.abs(np.nan_to_num(real)), -np.inf)
        i, j = np.unravel_index(int(np.argmax(magnitude)), magnitude.shape)
        components.append(ViolationComponent(int(member.sum()), float(real[i, j]),
                                             float(conditional_map.times[i]), float(conditional_map.rabi_freqs[j])))
    components.sort(key=lambda component: -abs(component.extremum))
    return ViolationReport(cells, tuple(components))


def max_slope(rabi_freqs, values):
    """Largest |d value / d nu_r| along a cut."""
    return float(np.nanmax(np.abs(np.gradient(np.asarray(values, dtype=float), rabi_freqs))))


def zero_crossings(rabi_freqs, values):
    """Rabi frequencies where a cut changes sign, by linear interpolation."""
    values = np.asarray(values, dtype=float)
    crossings = []
    for index in range(len(values) - 1):
        left, right = values[index], values[index + 1]
        if np.isnan(left) or np.isnan(right):
            continue
        if left == 0.0:
            crossings.append(float(rabi_freqs[index]))
        elif left * right < 0:
            fraction = left / (left - right)
            crossings.append(float(rabi_freqs[index] + fraction * (rabi_freqs[index + 1] - rabi_freqs[index])))
    if len(values) and values[-1] == 0.0:
        crossings.append(float(rabi_freqs[-1]))
    return crossings
