import math
from pathlib import Path

import numpy as np
import toml

from fluoro import fields, settings
from fluoro.errors import ConfigError
from fluoro.sections import ConfigSection
from fluoro.utils import is_multiple, n_steps

PREPARATIONS = ('e', 'g', 'maximally_mixed')
POSTSELECTIONS = ('g', 'e', 'none')
MODES = ('pre_only', 'post_only', 'pre_and_post', 'hermitian_xw')
SELECTIONS = ('none', 'final_g', 'final_e')

# rad per step; above this RK4 at fixed dt is no longer trusted
MAX_PHASE_PER_STEP = 0.1


class ModelConfig(ConfigSection):
    gamma1 = fields.RateField(default=0.0625, help="total relaxation rate (1/us)")
    gamma1b = fields.RateField(default=0.02, help="emission rate into the detected line (1/us)")
    gamma_phi = fields.RateField(default=0.0, help="pure dephasing rate (1/us), off by default")
    nu_r = fields.FrequencyField(default=1.0, minimum=0.0, help="Rabi frequency (MHz)")
    detuning = fields.FrequencyField(default=0.0, help="drive detuning (MHz)")
    nu_q = fields.FrequencyField(default=5190.0, help="qubit frequency (MHz), metadata only")
    duration = fields.DurationField(default=2.5, help="experiment duration T (us)")
    dt = fields.DurationField(default=0.001, help="integration step (us)")
    p0 = fields.ProbabilityField(default=0.154, help="preparation error")
    p_t = fields.ProbabilityField(default=0.05, help="final readout error")

    class Meta:
        toml_section = 'model'

    def validate(self):
        if self.gamma1b > self.gamma1:
            raise ConfigError(f"gamma1b ({self.gamma1b}) must not exceed gamma1 ({self.gamma1})")
        if not is_multiple(self.duration, self.dt):
            raise ConfigError(f"dt ({self.dt}) must divide the duration ({self.duration})")

    @property
    def n_steps(self):
        return n_steps(self.duration, self.dt)

    @property
    def times(self):
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def omega_r(self):
        return fields.FrequencyField.angular(self.nu_r)

    def phase_per_step(self, nu_r=None):
        nu_r = self.nu_r if nu_r is None else nu_r
        return self.dt * fields.FrequencyField.angular(math.hypot(nu_r, self.detuning))

    def check_step(self, nu_r=None):
        phase = self.phase_per_step(nu_r)
        if phase >= MAX_PHASE_PER_STEP:
            raise ConfigError(f"dt={self.dt} us is too coarse for nu_r={self.nu_r if nu_r is None else nu_r} MHz "
                              f"({phase:.3g} rad per step, limit {MAX_PHASE_PER_STEP})")


class DetectionConfig(ConfigSection):
    offset_re = fields.FloatField(default=0.0, help="qubit-independent field, real part (V0)")
    offset_im = fields.FloatField(default=0.0, help="qubit-independent field, imaginary part (V0)")
    crosstalk_re = fields.FloatField(default=0.25, help="offset per MHz of Rabi frequency, real part (V0/MHz)")
    crosstalk_im = fields.FloatField(default=0.1, help="offset per MHz of Rabi frequency, imaginary part (V0/MHz)")
    scale = fields.FloatField(default=1.0, minimum=0.0, exclusive_minimum=True,
                              help="volts per unit Re<sigma_->")
    bandwidth = fields.FrequencyField(default=1.6, minimum=0.0, exclusive_minimum=True, help="3 dB bandwidth (MHz)")
    filter_order = fields.IntegerField(default=1, minimum=1)

    class Meta:
        toml_section = 'detection'

    @property
    def offset(self):
        return complex(self.offset_re, self.offset_im)

    @property
    def crosstalk(self):
        return complex(self.crosstalk_re, self.crosstalk_im)


class McConfig(ConfigSection):
    model = None
    n_traj = fields.IntegerField(default=20000, minimum=1)
    dt_sde = fields.DurationField(default=0.0005)
    dt_record = fields.DurationField(default=0.05)
    master_seed = fields.IntegerField(default=20140601, minimum=0)
    eta = fields.FloatField(optional=True, minimum=0.0, maximum=1.0, exclusive_minimum=True,
                            help="detection efficiency, defaults to gamma1b/gamma1")
    prep = fields.ChoiceField(PREPARATIONS, default='e')
    selection = fields.ChoiceField(SELECTIONS, default='final_g')
    batch_size = fields.IntegerField(default=500, minimum=1)

    class Meta:
        toml_section = 'mc'

    def __init__(self, model=None, **kwargs):
        object.__setattr__(self, 'model', model or ModelConfig())
        super().__init__(**kwargs)

    def replace(self, **changes):
        model = changes.pop('model', self.model)
        values = {name: getattr(self, name) for name in self._meta.fields}
        values.update(changes)
        return self.__class__(model=model, **values)

    def as_dict(self):
        data = super().as_dict()
        data['model'] = self.model.as_dict()
        return data

    def __hash__(self):
        return hash((type(self), self.model, tuple(sorted(super().as_dict().items()))))

    def validate(self):
        if self.dt_record < self.dt_sde or not is_multiple(self.dt_record, self.dt_sde):
            raise ConfigError(f"dt_record ({self.dt_record}) must be an integer multiple of dt_sde ({self.dt_sde})")
        if not is_multiple(self.model.duration, self.dt_record):
            raise ConfigError(f"dt_record ({self.dt_record}) must divide the duration ({self.model.duration})")
        if not is_multiple(self.dt_record, self.model.dt):
            raise ConfigError(f"dt_record ({self.dt_record}) must be a multiple of the model dt ({self.model.dt})")
        if self.model.gamma1 == 0:
            raise ConfigError("gamma1 is 0, so no fluorescence reaches the detector (measurement rate eta * gamma1 = 0)")

    @property
    def efficiency(self):
        if self.eta is not None:
            return self.eta
        return self.model.gamma1b / self.model.gamma1

    @property
    def measurement_rate(self):
        """eta * gamma1, the rate of the recorded channel."""
        return self.efficiency * self.model.gamma1

    @property
    def n_sde_steps(self):
        return n_steps(self.model.duration, self.dt_sde)

    @property
    def steps_per_bin(self):
        return n_steps(self.dt_record, self.dt_sde)

    @property
    def n_bins(self):
        return n_steps(self.model.duration, self.dt_record)

    @property
    def bin_times(self):
        return np.arange(self.n_bins) * self.dt_record


class GridConfig(ConfigSection):
    t_step = fields.DurationField(default=0.01, help="time step of emitted maps (us)")
    nu_r_min = fields.FrequencyField(default=0.0, minimum=0.0)
    nu_r_max = fields.FrequencyField(default=2.0, minimum=0.0)
    nu_r_step = fields.FloatField(default=0.02, minimum=0.0, exclusive_minimum=True, help="Rabi frequency step (MHz)")

    class Meta:
        toml_section = 'grid'

    def validate(self):
        if self.nu_r_max < self.nu_r_min:
            raise ConfigError("nu_r_max must be >= nu_r_min")
        if not is_multiple(self.nu_r_max - self.nu_r_min, self.nu_r_step) and self.nu_r_max > self.nu_r_min:
            raise ConfigError("nu_r_step must divide the Rabi frequency range")

    @property
    def rabi_freqs(self):
        count = n_steps(self.nu_r_max - self.nu_r_min, self.nu_r_step) + 1
        return self.nu_r_min + np.arange(count) * self.nu_r_step

    def time_stride(self, model):
        if not is_multiple(self.t_step, model.dt):
            raise ConfigError(f"grid t_step ({self.t_step}) must be a multiple of dt ({model.dt})")
        if not is_multiple(model.duration, self.t_step):
            raise ConfigError(f"grid t_step ({self.t_step}) must divide the duration ({model.duration})")
        return n_steps(self.t_step, model.dt)


class RunConfig(ConfigSection):
    model = None
    detection = None
    mc_options = None
    grid = None
    output_dir = fields.StringField(default='.')
    emit_svg = fields.BoolField(default=False)
    workers = fields.IntegerField(default=settings.WORKERS, minimum=1)
    log_level = fields.ChoiceField(("DEBUG", "INFO", "WARNING", "ERROR"), default=settings.FLUORO_CONFIG.get("log_level", "INFO"))
    filter_engine = fields.StringField(default=settings.FILTER_ENGINE)

    class Meta:
        toml_section = 'fluoro'

    def __init__(self, model=None, detection=None, mc_options=None, grid=None, **kwargs):
        object.__setattr__(self, 'model', model or ModelConfig())
        object.__setattr__(self, 'detection', detection or DetectionConfig())
        object.__setattr__(self, 'mc_options', dict(mc_options or {}))
        object.__setattr__(self, 'grid', grid or GridConfig())
        super().__init__(**kwargs)

    @property
    def mc(self):
        """The [mc] section, validated against the model only when a command asks for it."""
        return McConfig(model=self.model, **self.mc_options)

    @property
    def output_path(self):
        return Path(self.output_dir)


def load_run_config(path=None, **overrides):
    """Build a RunConfig from a TOML file (or the settings already loaded) plus CLI overrides.

    ``overrides`` may hold ``model`` / ``mc`` / ``fluoro`` dicts; ``None`` values are ignored.
    """
    try:
        raw = settings.load_system_config(path) if path else settings.SYSTEM_CONFIG
    except FileNotFoundError as e:
        raise ConfigError(f"Config file {path} not found") from e
    except toml.TomlDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid TOML: {e}") from e
    unknown = set(raw) - {'fluoro', 'model', 'detection', 'mc', 'grid'}
    if unknown:
        raise ConfigError(f"Unknown config sections: {', '.join(sorted(unknown))}")
    model = ModelConfig.from_mapping(raw.get('model'), **overrides.get('model', {}))
    detection = DetectionConfig.from_mapping(raw.get('detection'), **overrides.get('detection', {}))
    grid = GridConfig.from_mapping(raw.get('grid'), **overrides.get('grid', {}))
    mc_raw = dict(raw.get('mc') or {})
    mc_raw.update({key: value for key, value in overrides.get('mc', {}).items() if value is not None})
    return RunConfig.from_mapping(raw.get('fluoro'), model=model, detection=detection, mc_options=mc_raw, grid=grid,
                                  **overrides.get('fluoro', {}))
