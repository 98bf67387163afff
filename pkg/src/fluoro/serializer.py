import csv
import json
import math
from abc import ABC, abstractmethod

SIGNIFICANT_DIGITS = 9


class Column(ABC):
    def __init__(self, source=None):
        self.source = source
        self.name = None

    def get_value(self, row):
        return row[self.source or self.name]

    @abstractmethod
    def to_representation(self, value):
        pass


class NumberColumn(Column):
    def to_representation(self, value):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        return format(value, f'.{SIGNIFICANT_DIGITS}g')


class OptionalNumberColumn(NumberColumn):
    def to_representation(self, value):
        if value is None:
            return ''
        return super().to_representation(value)


class IntegerColumn(Column):
    def to_representation(self, value):
        return str(int(value))


class TextColumn(Column):
    def to_representation(self, value):
        return str(value)


class SerializerMetaclass(type):
    def __new__(cls, name, bases, attrs):
        new_class = super().__new__(cls, name, bases, attrs)
        declared = {}
        for base in reversed(bases):
            declared.update(getattr(base, '_declared_columns', {}))
        for key, value in attrs.items():
            if isinstance(value, Column):
                value.name = key
                declared[key] = value
        new_class._declared_columns = declared
        return new_class


class Serializer(metaclass=SerializerMetaclass):
    """Turns row mappings into CSV text, one declared column per field, in declaration order."""

    @property
    def header(self):
        return list(self._declared_columns)

    def represent_row(self, row):
        return [column.to_representation(column.get_value(row)) for column in self._declared_columns.values()]

    def write(self, path, rows):
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='', encoding='utf-8') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(self.header)
            for row in rows:
                writer.writerow(self.represent_row(row))
        return path


class MapRowSerializer(Serializer):
    t_us = NumberColumn()
    nu_r_mhz = NumberColumn()
    re_value = NumberColumn()
    im_value = NumberColumn()
    denominator = OptionalNumberColumn()


class CutRowSerializer(Serializer):
    t_us = NumberColumn()
    nu_r_mhz = NumberColumn()
    conditioned_re = NumberColumn()
    unconditioned_re = NumberColumn()
    denominator = OptionalNumberColumn()


class McRowSerializer(Serializer):
    t_us = NumberColumn()
    mean_re = NumberColumn()
    mean_im = NumberColumn()
    stderr = NumberColumn()
    n_selected = IntegerColumn()


class McComparisonSerializer(Serializer):
    t_us = NumberColumn()
    mean_re = NumberColumn()
    prediction_re = NumberColumn()
    stderr = NumberColumn()
    z = NumberColumn()


class TraceRowSerializer(Serializer):
    t_us = NumberColumn()
    nu_r_mhz = NumberColumn()
    prep = TextColumn()
    v_re = NumberColumn()
    v_im = NumberColumn()
    v_re_filtered = NumberColumn()
    v_im_filtered = NumberColumn()
    s_minus = NumberColumn()
    s_minus_filtered = NumberColumn()
    sigma_z = NumberColumn()


def _rounded(value):
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            return str(value)
        return float(format(value, f'.{SIGNIFICANT_DIGITS}g'))
    if isinstance(value, dict):
        return {key: _rounded(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_rounded(item) for item in value]
    return value


def write_json(path, payload):
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_rounded(payload), indent=2, sort_keys=True)
    path.write_text(text + '\n', encoding='utf-8')
    return text
