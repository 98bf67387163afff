from fluoro import fields
from fluoro.errors import ConfigError


class SectionBase(type):
    def __new__(cls, name, bases, attrs):
        super_new = super().__new__
        parents = [b for b in bases if isinstance(b, SectionBase)]
        if not parents:
            return super_new(cls, name, bases, attrs)
        attr_meta = attrs.pop('Meta', None)
        new_class = super_new(cls, name, bases, attrs)
        meta = attr_meta or getattr(new_class, 'Meta', None)
        new_class._meta = Options(new_class)
        for parent in parents:
            for field_name, field in getattr(parent, '_meta', Options(parent)).fields.items():
                new_class._meta.add_field(field_name, field)
        if meta:
            for key, value in meta.__dict__.items():
                if not key.startswith('__'):
                    setattr(new_class._meta, key, value)
        for obj_name, obj in attrs.items():
            if isinstance(obj, fields.Field):
                new_class._meta.add_field(obj_name, obj)
                delattr(new_class, obj_name)
        return new_class


class Options:
    def __init__(self, section):
        self.section = section
        self.fields = {}
        self.toml_section = None

    def add_field(self, name, field):
        self.fields[name] = field
        field.name = name

    def get_field(self, name):
        return self.fields[name]


class ConfigSection(metaclass=SectionBase):
    """Immutable, validated group of configuration keys.

    Subclasses declare ``fields.Field`` attributes; ``validate`` checks invariants
    that involve several keys.
    """

    def __init__(self, **kwargs):
        for key in kwargs:
            if key not in self._meta.fields:
                raise ConfigError(f"{key} is not a valid key for [{self.section_name}]")
        for name, field in self._meta.fields.items():
            if name in kwargs:
                value = field.to_internal_value(kwargs[name])
            elif field.has_default:
                value = field.default
            elif field.optional:
                value = None
            else:
                raise ConfigError(f"[{self.section_name}] requires '{name}'")
            object.__setattr__(self, name, value)
        self.validate()

    @property
    def section_name(self):
        return self._meta.toml_section or self.__class__.__name__

    def __setattr__(self, key, value):
        raise AttributeError(f"{self.__class__.__name__} is immutable; use replace()")

    def __eq__(self, other):
        return type(other) is type(self) and self.as_dict() == other.as_dict()

    def __hash__(self):
        return hash((type(self), tuple(sorted(self.as_dict().items()))))

    def __repr__(self):
        body = ', '.join(f"{key}={value!r}" for key, value in self.as_dict().items())
        return f"{self.__class__.__name__}({body})"

    def validate(self):
        pass

    def replace(self, **changes):
        values = {name: getattr(self, name) for name in self._meta.fields}
        values.update(changes)
        return self.__class__(**values)

    def as_dict(self):
        return {name: field.to_representation(getattr(self, name))
                for name, field in self._meta.fields.items()}

    @classmethod
    def from_mapping(cls, mapping, **extra):
        data = dict(mapping or {})
        data.update({key: value for key, value in extra.items() if value is not None})
        return cls(**data)
