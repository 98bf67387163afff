"""Single-shot simulation of the full protocol and conditional averaging of records.

Each shot prepares a basis state, evolves under the diffusive heterodyne
unraveling of the master equation (measurement operator sqrt(eta gamma1) sigma_-,
the undetected part of the decay stays in the deterministic drift), and ends with
an imperfect sigma_z readout. Every shot draws from its own Philox stream keyed
by (master_seed, shot_index), so results do not depend on batching or workers.
"""
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from fluoro import engine, qubit, weak
from fluoro.config import SELECTIONS
from fluoro.errors import ConfigError, EmptySelection
from fluoro.settings import logger
from fluoro.tasks import Task, run_tasks
from fluoro.utils import n_steps

SIGMA_MINUS = engine.SIGMA_MINUS
GROUND = qubit.projector('g')
EXCITED = qubit.projector('e')


def shot_seed_sequence(master_seed, shot_index):
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(shot_index,))


def shot_rng(master_seed, shot_index):
    return np.random.Generator(np.random.Philox(shot_seed_sequence(master_seed, shot_index)))


@lru_cache(maxsize=32)
def drift_matrix(model, dt):
    """Deterministic part of one SDE step, the same RK4 update the engine uses."""
    return engine.rk4_step_matrix(engine.lindblad_rhs, dt, model)


def sde_step(rho, noise, mc):
    """One step of the heterodyne stochastic master equation.

    ``rho`` is a (..., 2, 2) stack and ``noise`` the matching complex Wiener
    increments (real and imaginary parts each of variance dt_sde / 2). The drift
    is the engine's Lindblad step, the innovation is taken Euler-Maruyama style
    at the start of the step. Returns the renormalized states and the record
    increments dJ = sqrt(eta gamma1) Tr(rho sigma_-) dt + dZ.
    """
    rho = np.asarray(rho, dtype=np.complex128)
    noise = np.asarray(noise, dtype=np.complex128)
    dt = mc.dt_sde
    coupling = math.sqrt(mc.measurement_rate)
    lowered = SIGMA_MINUS @ rho
    mean_lowering = qubit.trace_stack(lowered)
    innovation = ((lowered - mean_lowering[..., None, None] * rho) * np.conj(noise)[..., None, None]
                  + (qubit.dagger(lowered) - np.conj(mean_lowering)[..., None, None] * rho) * noise[..., None, None])
    drifted = (rho.reshape(rho.shape[:-2] + (4,)) @ drift_matrix(mc.model, dt).T).reshape(rho.shape)
    updated = drifted + coupling * innovation
    updated = updated / qubit.trace_stack(updated)[..., None, None]
    return updated, coupling * mean_lowering * dt + noise


@dataclass(frozen=True)
class TrajectoryRecord:
    shot_index: int
    seed: int
    initial: str
    record: np.ndarray = field(repr=False)
    final_outcome: str
    final_true_state_sample: str


def _initial_excited(prep, p0, uniform):
    if prep == 'e':
        return uniform < 1 - p0
    if prep == 'g':
        return uniform < p0
    return uniform < 0.5


@dataclass(frozen=True)
class BatchResult:
    records: list
    states: np.ndarray = None


def simulate_batch(mc, shot_indices, keep_states=False):
    """Simulate several shots in lock-step; ``states`` holds rho at every record-bin edge."""
    shots = [int(index) for index in shot_indices]
    if not shots:
        return BatchResult([], None)
    model = mc.model
    steps, per_bin, n_bins = mc.n_sde_steps, mc.steps_per_bin, mc.n_bins

    streams = [shot_rng(mc.master_seed, index) for index in shots]
    initial_draws = np.array([stream.random() for stream in streams])
    gaussians = np.stack([stream.standard_normal((steps, 2)) for stream in streams])
    final_draws = np.array([stream.random(2) for stream in streams])

    increments = math.sqrt(mc.dt_sde / 2) * (gaussians[..., 0] + 1j * gaussians[..., 1])
    excited = _initial_excited(mc.prep, model.p0, initial_draws)
    rho = np.where(excited[:, None, None], EXCITED, GROUND)
    record = np.zeros((len(shots), n_bins), dtype=np.complex128)
    states = np.empty((len(shots), n_bins + 1, 2, 2), dtype=np.complex128) if keep_states else None
    if keep_states:
        states[:, 0] = rho

    for step in range(steps):
        rho, increment = sde_step(rho, increments[:, step], mc)
        record[:, step // per_bin] += increment
        if keep_states and (step + 1) % per_bin == 0:
            states[:, (step + 1) // per_bin] = qubit.repair_density(rho)

    excited_probability = np.clip(rho[:, 1, 1].real, 0.0, 1.0)
    true_excited = final_draws[:, 0] < excited_probability
    flipped = final_draws[:, 1] < model.p_t
    outcome_excited = true_excited ^ flipped

    records = []
    for row, index in enumerate(shots):
        seed = int(shot_seed_sequence(mc.master_seed, index).generate_state(1, dtype=np.uint64)[0])
        records.append(TrajectoryRecord(
            shot_index=index,
            seed=seed,
            initial='e' if excited[row] else 'g',
            record=record[row].copy(),
            final_outcome='e' if outcome_excited[row] else 'g',
            final_true_state_sample='e' if true_excited[row] else 'g',
        ))
    return BatchResult(records, states)


def simulate_shot(mc, shot_index):
    return simulate_batch(mc, [shot_index]).records[0]


def selected(record, selection):
    if selection == 'none':
        return True
    return record.final_outcome == {'final_g': 'g', 'final_e': 'e'}[selection]


@dataclass(frozen=True)
class ConditionalAverage:
    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_selected: int
    selection: str


class RecordAccumulator:
    """Running sums of calibrated records for every selection."""

    def __init__(self, mc):
        self.mc = mc
        self.n_total = 0
        self.count = {selection: 0 for selection in SELECTIONS}
        self.total = {selection: np.zeros(mc.n_bins, dtype=np.complex128) for selection in SELECTIONS}
        self.squares = {selection: np.zeros(mc.n_bins) for selection in SELECTIONS}

    @property
    def calibration(self):
        return math.sqrt(self.mc.measurement_rate) * self.mc.dt_record

    def add(self, records):
        for record in records:
            self.n_total += 1
            calibrated = record.record / self.calibration
            for selection in SELECTIONS:
                if selected(record, selection):
                    self.count[selection] += 1
                    self.total[selection] += calibrated
                    self.squares[selection] += calibrated.real ** 2
        return self

    def merge(self, other):
        self.n_total += other.n_total
        for selection in SELECTIONS:
            self.count[selection] += other.count[selection]
            self.total[selection] += other.total[selection]
            self.squares[selection] += other.squares[selection]
        return self

    def average(self, selection):
        if selection not in SELECTIONS:
            raise ConfigError(f"Unknown selection {selection!r}")
        n = self.count[selection]
        if n == 0:
            raise EmptySelection(f"no record passes selection {selection}")
        mean = self.total[selection] / n
        if n > 1:
            variance = np.maximum(self.squares[selection] - n * mean.real ** 2, 0.0) / (n - 1)
            stderr = np.sqrt(variance / n)
        else:
            stderr = np.full(self.mc.n_bins, np.nan)
        return ConditionalAverage(self.mc.bin_times, mean, stderr, n, selection)


def conditional_average(records, selection, mc):
    """Per-bin mean of dJ / (sqrt(eta gamma1) dt_record) over the selected records."""
    return RecordAccumulator(mc).add(records).average(selection)


class ShotBatchTask(Task):
    def __init__(self, mc):
        self.mc = mc

    def perform_task(self, shot_indices):
        return RecordAccumulator(self.mc).add(simulate_batch(self.mc, shot_indices).records)


def shot_batches(mc):
    return [range(start, min(start + mc.batch_size, mc.n_traj)) for start in range(0, mc.n_traj, mc.batch_size)]


def run_ensemble(mc, workers=1):
    batches = shot_batches(mc)
    logger.info(f"Simulating {mc.n_traj} shots in {len(batches)} batches "
                f"(eta={mc.efficiency:.3g}, nu_r={mc.model.nu_r} MHz, master_seed={mc.master_seed})")
    accumulator = RecordAccumulator(mc)
    for partial in run_tasks(ShotBatchTask(mc), batches, workers):
        accumulator.merge(partial)
    return accumulator


def selection_effect(model, selection):
    post = {'none': 'none', 'final_g': 'g', 'final_e': 'e'}[selection]
    return engine.postselect_effect(model, post)


def predicted_average(mc, selection):
    """Closed-form weak value of sigma_- averaged over each record bin (left-point rule)."""
    model = mc.model
    forward = engine.propagate_forward(engine.prepare_rho0(model, mc.prep), model)
    backward = engine.propagate_backward(selection_effect(model, selection), model)
    values, _ = weak.conditioned_stack(forward.states, backward.states, SIGMA_MINUS)
    stride = n_steps(mc.dt_record, model.dt)
    return values[:-1].reshape(mc.n_bins, stride).mean(axis=1)


def predicted_fraction(mc, selection):
    """Tr[rho(T) E(T)]: probability that a shot passes ``selection``."""
    model = mc.model
    final = engine.propagate_forward(engine.prepare_rho0(model, mc.prep), model).states[-1]
    return float(np.trace(final @ selection_effect(model, selection).matrix).real)


def z_scores(average, prediction):
    with np.errstate(divide='ignore', invalid='ignore'):
        return (average.mean.real - np.asarray(prediction).real) / average.stderr
