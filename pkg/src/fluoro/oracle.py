"""Self-checks of the propagation engine against closed forms and the expm oracle."""
import math

import numpy as np

from fluoro import engine, qubit
from fluoro.engine import Direction
from fluoro.settings import logger

ORACLE_RABI_FREQS = (0.6, 1.0, 1.4)
ORACLE_SEED = 1988


def _result(max_dev, tol):
    return {'max_dev': float(max_dev), 'tol': float(tol), 'pass': bool(max_dev <= tol)}


def random_density(rng):
    amplitudes = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho = amplitudes @ amplitudes.conj().T
    return rho / np.trace(rho).real


def random_effect(rng):
    amplitudes = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    effect = amplitudes @ amplitudes.conj().T
    return effect / np.linalg.eigvalsh(effect).max() * rng.uniform(0.2, 1.0)


def check_analytic_decay(model):
    cfg = model.replace(nu_r=0.0, detuning=0.0, gamma_phi=0.0)
    forward = engine.propagate_forward(qubit.projector('e'), cfg)
    backward = engine.propagate_backward(qubit.projector('g'), cfg)
    times = forward.times
    forward_dev = np.max(np.abs(forward.states[:, 1, 1].real - np.exp(-cfg.gamma1 * times)))
    expected_backward = 1 - np.exp(-cfg.gamma1 * (cfg.duration - times))
    backward_dev = np.max(np.abs(backward.states[:, 1, 1].real - expected_backward))
    return {'analytic_decay_forward': _result(forward_dev, 1e-8),
            'analytic_decay_backward': _result(backward_dev, 1e-8)}


def check_oracle_equivalence(model, rabi_freqs=ORACLE_RABI_FREQS, samples=11):
    deviation = 0.0
    for nu_r in rabi_freqs:
        cfg = model.replace(nu_r=float(nu_r))
        rho0 = engine.prepare_rho0(cfg, 'e')
        effect_t = engine.postselect_effect_ground(cfg)
        forward = engine.propagate_forward(rho0, cfg)
        backward = engine.propagate_backward(effect_t, cfg)
        for index in np.linspace(0, cfg.n_steps, samples).astype(int):
            t = forward.times[index]
            exact = engine.oracle_expm_propagate(rho0, cfg, t).matrix
            deviation = max(deviation, np.max(np.abs(forward.raw_states[index] - exact)))
            exact = engine.oracle_expm_propagate(effect_t, cfg, cfg.duration - t, Direction.BACKWARD).matrix
            deviation = max(deviation, np.max(np.abs(backward.raw_states[index] - exact)))
    return {'oracle_equivalence': _result(deviation, 1e-6)}


def check_dual_pairing(model, pairs=10, nu_r=1.0):
    rng = np.random.default_rng(ORACLE_SEED)
    cfg = model.replace(nu_r=nu_r)
    deviation = 0.0
    for _ in range(pairs):
        forward = engine.propagate_forward(random_density(rng), cfg)
        backward = engine.propagate_backward(random_effect(rng), cfg)
        pairing = qubit.trace_stack(forward.raw_states @ backward.raw_states)
        deviation = max(deviation, np.max(np.abs(pairing - pairing[0])))
    return {'dual_pairing': _result(deviation, 1e-7)}


def check_time_reversal(model, nu_r=1.0):
    cfg = model.replace(nu_r=nu_r, gamma1=0.0, gamma1b=0.0, gamma_phi=0.0, p0=0.0, p_t=0.0)
    forward = engine.propagate_forward(engine.prepare_rho0(cfg, 'e'), cfg)
    backward = engine.propagate_backward(engine.postselect_effect_ground(cfg), cfg)
    post_only = (qubit.trace_stack(backward.states @ engine.SIGMA_MINUS)
                 / qubit.trace_stack(backward.states)).real
    pre_only_reversed = forward.expectation(engine.SIGMA_MINUS).real[::-1]
    return {'time_reversal': _result(np.max(np.abs(post_only - pre_only_reversed)), 1e-8)}


def check_rk4_order(model, nu_r=0.5, coarse_dt=0.02, duration=2.0):
    errors = []
    for dt in (coarse_dt, coarse_dt / 2):
        cfg = model.replace(nu_r=nu_r, dt=dt, duration=duration)
        rho0 = engine.prepare_rho0(cfg, 'e')
        trace = engine.propagate_forward(rho0, cfg)
        exact = engine.oracle_expm_propagate(rho0, cfg, cfg.duration).matrix
        errors.append(np.max(np.abs(trace.raw_states[-1] - exact)))
    # a fourth-order method gains 2**4 per halving; 6 leaves room for roundoff
    return {'rk4_order': _result(errors[1], errors[0] / 6)}


def check_liouvillian(model, count=20):
    rng = np.random.default_rng(ORACLE_SEED + 1)
    deviation = 0.0
    for direction, rhs in ((Direction.FORWARD, engine.lindblad_rhs), (Direction.BACKWARD, engine.adjoint_rhs)):
        generator = engine.liouvillian_matrix(model, direction)
        for _ in range(count):
            state = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            expected = engine.vec(rhs(state, model))
            deviation = max(deviation, np.max(np.abs(generator @ engine.vec(state) - expected)))
    return {'liouvillian_agreement': _result(deviation, 1e-13 * max(1.0, np.abs(generator).max()))}


def check_state_bounds(model):
    forward = engine.propagate_forward(engine.prepare_rho0(model, 'e'), model)
    backward = engine.propagate_backward(engine.postselect_effect_ground(model), model)
    trace_dev = np.max(np.abs(qubit.trace_stack(forward.raw_states) - 1))
    negativity = max(0.0, -np.min(qubit.min_eigenvalue(forward.raw_states)))
    spectra = np.linalg.eigvalsh(qubit.hermitize(backward.raw_states))
    effect_excess = max(0.0, -spectra.min(), spectra.max() - 1)
    return {'trace_preservation': _result(trace_dev, 1e-9),
            'positivity': _result(negativity, 1e-9),
            'effect_bounds': _result(effect_excess, 1e-9)}


CHECKS = (check_analytic_decay, check_oracle_equivalence, check_dual_pairing, check_time_reversal,
          check_rk4_order, check_liouvillian, check_state_bounds)


def run_oracle(model, max_nu_r=None):
    """Run every engine check; returns {check_name: {max_dev, tol, pass}}."""
    for nu_r in ORACLE_RABI_FREQS + ((max_nu_r,) if max_nu_r is not None else ()):
        model.check_step(nu_r)
    summary = {}
    for check in CHECKS:
        summary.update(check(model))
    for name, result in summary.items():
        level = logger.info if result['pass'] else logger.error
        level(f"{name}: max_dev={result['max_dev']:.3g} tol={result['tol']:.3g} pass={result['pass']}")
    return summary


def all_passed(summary):
    return all(result['pass'] and math.isfinite(result['max_dev']) for result in summary.values())
