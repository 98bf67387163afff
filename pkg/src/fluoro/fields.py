import math
from abc import ABC, abstractmethod

from fluoro.errors import ConfigError

NOT_PROVIDED = object()


class Field(ABC):
    """A single typed configuration key.

    ``to_internal_value`` turns a raw TOML / command-line value into the value the
    simulator works with, ``to_representation`` turns it back into something TOML
    and JSON can hold.
    """

    def __init__(self, default=NOT_PROVIDED, optional=False, help=''):
        self.default = default
        self.optional = optional
        self.help = help
        self.name = None

    @property
    def has_default(self):
        return self.default is not NOT_PROVIDED

    def to_internal_value(self, value):
        if self.optional and value is None:
            return None
        try:
            return self._to_internal_value(value)
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid value {value!r} for '{self.name}': {e}") from e

    def to_representation(self, value):
        if self.optional and value is None:
            return None
        return self._to_representation(value)

    def fail(self, message):
        raise ConfigError(f"'{self.name}' {message}")

    @abstractmethod
    def _to_internal_value(self, value):
        pass

    @abstractmethod
    def _to_representation(self, value):
        pass


class FloatField(Field):
    def __init__(self, *args, minimum=None, maximum=None, exclusive_minimum=False, **kwargs):
        super().__init__(*args, **kwargs)
        self.minimum = minimum
        self.maximum = maximum
        self.exclusive_minimum = exclusive_minimum

    def _to_internal_value(self, value):
        if isinstance(value, bool):
            raise TypeError("booleans are not numbers")
        value = float(value)
        if not math.isfinite(value):
            self.fail(f"must be finite, got {value}")
        if self.minimum is not None:
            if self.exclusive_minimum and value <= self.minimum:
                self.fail(f"must be > {self.minimum}, got {value}")
            if value < self.minimum:
                self.fail(f"must be >= {self.minimum}, got {value}")
        if self.maximum is not None and value > self.maximum:
            self.fail(f"must be <= {self.maximum}, got {value}")
        return value

    def _to_representation(self, value):
        return float(value)


class RateField(FloatField):
    """Rate in 1/μs."""

    def __init__(self, *args, **kwargs):
        kwargs.setdefault('minimum', 0.0)
        super().__init__(*args, **kwargs)


class FrequencyField(FloatField):
    """Cyclic frequency in MHz; ``angular`` gives rad/μs."""

    @staticmethod
    def angular(value):
        return 2 * math.pi * value


class DurationField(FloatField):
    """Strictly positive duration in μs."""

    def __init__(self, *args, **kwargs):
        kwargs.setdefault('minimum', 0.0)
        kwargs.setdefault('exclusive_minimum', True)
        super().__init__(*args, **kwargs)


class ProbabilityField(FloatField):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault('minimum', 0.0)
        kwargs.setdefault('maximum', 0.5)
        super().__init__(*args, **kwargs)


class IntegerField(Field):
    def __init__(self, *args, minimum=None, **kwargs):
        super().__init__(*args, **kwargs)
        self.minimum = minimum

    def _to_internal_value(self, value):
        if isinstance(value, bool):
            raise TypeError("booleans are not integers")
        if isinstance(value, float) and not value.is_integer():
            raise ValueError("not an integer")
        value = int(value)
        if self.minimum is not None and value < self.minimum:
            self.fail(f"must be >= {self.minimum}, got {value}")
        return value

    def _to_representation(self, value):
        return int(value)


class ChoiceField(Field):
    def __init__(self, choices, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.choices = tuple(choices)

    def _to_internal_value(self, value):
        value = str(value)
        if value not in self.choices:
            self.fail(f"must be one of {', '.join(self.choices)}, got {value!r}")
        return value

    def _to_representation(self, value):
        return value


class BoolField(Field):
    TRUE = {'1', 'true', 'yes', 'on'}
    FALSE = {'0', 'false', 'no', 'off'}

    def _to_internal_value(self, value):
        if isinstance(value, bool):
            return value
        lowered = str(value).strip().lower()
        if lowered in self.TRUE:
            return True
        if lowered in self.FALSE:
            return False
        raise ValueError("not a boolean")

    def _to_representation(self, value):
        return bool(value)


class StringField(Field):
    def _to_internal_value(self, value):
        return str(value)

    def _to_representation(self, value):
        return str(value)
