"""From <sigma_-> to the voltages the heterodyne setup records.

Voltages are in units of V0, the amplitude at which the emitted photon rate
equals gamma1b, so the qubit term of the outgoing field is just -scale * <sigma_->.
"""
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace

import numpy as np
from scipy import signal

from fluoro import engine, settings, utils
from fluoro.errors import ConfigError, NumericalError

# stability of the discrete first-order update
MAX_FILTER_GAIN = 0.5


@dataclass(frozen=True)
class SignalTrace:
    times: np.ndarray
    v_re: np.ndarray
    v_im: np.ndarray
    filtered: bool = False
    bandwidth: float = None

    def __post_init__(self):
        if not len(self.times) == len(self.v_re) == len(self.v_im):
            raise ValueError("SignalTrace series differ in length")
        if self.filtered and not (self.bandwidth and self.bandwidth > 0):
            raise ValueError("a filtered trace needs a positive bandwidth")

    @property
    def field(self):
        return self.v_re + 1j * self.v_im


def outgoing_field(sigma_minus_series, det, cfg, times=None, offset=None):
    """v_re + i v_im = offset - scale <sigma_-> (unfiltered)."""
    series = np.asarray(sigma_minus_series, dtype=np.complex128)
    if series.size == 0:
        raise ConfigError("empty <sigma_-> series")
    if times is None:
        times = np.arange(series.size) * cfg.dt
    offset = det.offset if offset is None else offset
    field = offset - det.scale * series
    return SignalTrace(np.asarray(times, dtype=float), field.real.copy(), field.imag.copy())


def extract_s_minus(trace, det, offset=None):
    """Normalized oscillating part of the real quadrature."""
    offset = det.offset if offset is None else offset
    return (offset.real - np.asarray(trace.v_re)) / det.scale


def lowpass(series, dt, bandwidth, axis=-1):
    """First-order low-pass, y[n+1] = y[n] + g (x[n] - y[n]) with y[0] = 0."""
    gain = 2 * math.pi * bandwidth * dt
    if not 0 < gain < MAX_FILTER_GAIN:
        raise ConfigError(f"low-pass at {bandwidth} MHz with dt={dt} us is unstable (gain {gain:.3g})")
    return signal.lfilter([0.0, gain], [1.0, gain - 1.0], np.asarray(series), axis=axis)


def first_order_attenuation(frequency, bandwidth):
    return 1 / math.sqrt(1 + (frequency / bandwidth) ** 2)


class BaseFilter(ABC):
    def __init__(self, bandwidth):
        self.bandwidth = bandwidth

    @abstractmethod
    def apply(self, series, dt, axis=-1):
        pass

    def attenuation(self, frequency):
        return abs(self.response(frequency))

    @abstractmethod
    def response(self, frequency):
        pass


class CascadedLowPass(BaseFilter):
    """``order`` identical first-order sections with the overall 3 dB point at ``bandwidth``."""

    def __init__(self, bandwidth, order=1):
        super().__init__(bandwidth)
        if order < 1:
            raise ConfigError("filter order must be >= 1")
        self.order = order
        self.stage_bandwidth = bandwidth / math.sqrt(2 ** (1 / order) - 1)

    def apply(self, series, dt, axis=-1):
        output = np.asarray(series)
        for _ in range(self.order):
            output = lowpass(output, dt, self.stage_bandwidth, axis)
        return output

    def response(self, frequency):
        return (1 / (1 + 1j * frequency / self.stage_bandwidth)) ** self.order


def get_filter(det, engine_path=None):
    try:
        filter_class = utils.import_string(engine_path or settings.FILTER_ENGINE)
    except ImportError as e:
        raise ConfigError(f"Cannot load filter engine: {e}") from e
    return filter_class(det.bandwidth, det.filter_order)


def filter_trace(trace, det, filter_engine=None):
    if len(trace.times) < 2:
        raise ConfigError("need at least two samples to filter a trace")
    dt = float(trace.times[1] - trace.times[0])
    detector = filter_engine if isinstance(filter_engine, BaseFilter) else get_filter(det, filter_engine)
    return replace(trace, v_re=detector.apply(trace.v_re, dt), v_im=detector.apply(trace.v_im, dt),
                   filtered=True, bandwidth=det.bandwidth)


@dataclass(frozen=True)
class FresnelTrace:
    nu_r: float
    prep: str
    raw: SignalTrace
    filtered: SignalTrace
    sigma_minus: np.ndarray
    sigma_z: np.ndarray
    offset: complex


def drive_offset(det, nu_r):
    """Qubit-independent field: constant offset plus cross-talk proportional to the drive."""
    return det.offset + det.crosstalk * nu_r


def fresnel_traces(model, det, rabi_freqs=(0.6, 1.0, 1.4), preps=('g', 'e'), filter_engine=None):
    """Predicted average traces in the (V_Re, V_Im) plane for several drive amplitudes."""
    traces = []
    for nu_r in rabi_freqs:
        cfg = model.replace(nu_r=float(nu_r))
        for prep in preps:
            forward = engine.propagate_forward(engine.prepare_rho0(cfg, prep), cfg)
            sigma_minus = forward.expectation(engine.SIGMA_MINUS)
            offset = drive_offset(det, nu_r)
            raw = outgoing_field(sigma_minus, det, cfg, times=forward.times, offset=offset)
            traces.append(FresnelTrace(float(nu_r), prep, raw, filter_trace(raw, det, filter_engine),
                                       sigma_minus, engine.population(forward), offset))
    return traces


def filter_map(conditional_map, det, filter_engine=None):
    """Apply the detection filter along time to every Rabi-frequency column of a map."""
    if conditional_map.missing.any():
        raise NumericalError("cannot filter a map with missing cells")
    dt = float(conditional_map.times[1] - conditional_map.times[0])
    detector = filter_engine if isinstance(filter_engine, BaseFilter) else get_filter(det, filter_engine)
    return conditional_map.with_values(detector.apply(conditional_map.values, dt, axis=0))
