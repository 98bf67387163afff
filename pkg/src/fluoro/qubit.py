"""Exact 2x2 complex algebra on the qubit space.

Basis order is (|g>, |e>) everywhere: index 0 is the ground state, index 1 the
excited state, so sigma_z = |e><e| - |g><g| = diag(-1, +1).
"""
from enum import Enum

import numpy as np

from fluoro.errors import NumericalError

G, E = 0, 1
TOLERANCE = 1e-12


class Pauli(str, Enum):
    I = 'I'
    X = 'X'
    Y = 'Y'
    Z = 'Z'
    MINUS = 'Minus'
    PLUS = 'Plus'


class Operator2:
    """Immutable 2x2 complex matrix in the (|g>, |e>) basis."""

    __slots__ = ('_data',)

    def __init__(self, entries):
        data = np.array(entries, dtype=np.complex128)
        if data.shape != (2, 2):
            raise ValueError(f"Operator2 needs a 2x2 array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise NumericalError("Operator2 entries must be finite")
        data.flags.writeable = False
        self._data = data

    @property
    def matrix(self):
        return self._data

    def __array__(self, dtype=None, copy=None):
        return self._data if dtype is None else self._data.astype(dtype)

    def __getitem__(self, index):
        return self._data[index]

    def __matmul__(self, other):
        return mul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1))

    def __mul__(self, factor):
        return scale(self, factor)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1)

    def __eq__(self, other):
        return isinstance(other, Operator2) and np.array_equal(self._data, other._data)

    def __hash__(self):
        return hash(self._data.tobytes())

    def __repr__(self):
        return f"{self.__class__.__name__}({self._data.tolist()})"

    def is_hermitian(self, tol=TOLERANCE):
        return np.max(np.abs(self._data - self._data.conj().T)) <= tol

    def eigenvalues(self):
        return np.linalg.eigvalsh(hermitize(self._data))


class DensityMatrix(Operator2):
    """Hermitian, unit-trace, positive semidefinite Operator2."""

    __slots__ = ()

    def __init__(self, entries, tol=TOLERANCE):
        super().__init__(entries)
        if not self.is_hermitian(tol):
            raise NumericalError("density matrix is not hermitian")
        if abs(np.trace(self._data) - 1) > tol:
            raise NumericalError(f"density matrix trace is {np.trace(self._data)}, expected 1")
        if self.eigenvalues().min() < -tol:
            raise NumericalError("density matrix has a negative eigenvalue")

    @classmethod
    def repair(cls, entries):
        return cls(repair_density(np.asarray(entries)))

    @classmethod
    def pure(cls, ket):
        ket = np.asarray(ket, dtype=np.complex128)
        ket = ket / np.linalg.norm(ket)
        return cls(np.outer(ket, ket.conj()))


class Effect(Operator2):
    """POVM element: hermitian with spectrum in [0, 1]."""

    __slots__ = ()

    def __init__(self, entries, tol=TOLERANCE):
        super().__init__(entries)
        if not self.is_hermitian(tol):
            raise NumericalError("effect is not hermitian")
        eigenvalues = self.eigenvalues()
        if eigenvalues.min() < -tol or eigenvalues.max() > 1 + tol:
            raise NumericalError(f"effect spectrum {eigenvalues} is outside [0, 1]")

    @classmethod
    def repair(cls, entries):
        return cls(repair_effect(np.asarray(entries)))

    @classmethod
    def projector(cls, ket):
        ket = np.asarray(ket, dtype=np.complex128)
        ket = ket / np.linalg.norm(ket)
        return cls(np.outer(ket, ket.conj()))


_SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=np.complex128)

_PAULI = {
    Pauli.I: np.eye(2, dtype=np.complex128),
    Pauli.Z: np.array([[-1, 0], [0, 1]], dtype=np.complex128),
    Pauli.MINUS: _SIGMA_MINUS,
    Pauli.PLUS: _SIGMA_MINUS.conj().T,
    Pauli.X: _SIGMA_MINUS + _SIGMA_MINUS.conj().T,
    Pauli.Y: 1j * (_SIGMA_MINUS - _SIGMA_MINUS.conj().T),
}


def make_pauli(which):
    return Operator2(_PAULI[Pauli(which)])


def mul(a, b):
    return Operator2(np.asarray(a) @ np.asarray(b))


def add(a, b):
    return Operator2(np.asarray(a) + np.asarray(b))


def scale(a, factor):
    return Operator2(complex(factor) * np.asarray(a))


def adjoint(a):
    return Operator2(np.asarray(a).conj().T)


def trace(a):
    return complex(np.trace(np.asarray(a)))


def commutator(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return Operator2(a @ b - b @ a)


def expect(rho, a):
    """Tr(rho a)."""
    return trace(mul(rho, a))


def bloch(rho):
    return tuple(expect(rho, make_pauli(which)).real for which in (Pauli.X, Pauli.Y, Pauli.Z))


def ket(label):
    return np.eye(2, dtype=np.complex128)[{'g': G, 'e': E}[label]]


def projector(label):
    k = ket(label)
    return np.outer(k, k.conj())


# Stacked helpers: every function below accepts arrays of shape (..., 2, 2).

def dagger(stack):
    return np.swapaxes(np.conj(stack), -1, -2)


def hermitize(stack):
    return 0.5 * (stack + dagger(stack))


def trace_stack(stack):
    return np.trace(stack, axis1=-2, axis2=-1)


def _clip_spectrum(stack, lower, upper):
    values, vectors = np.linalg.eigh(hermitize(stack))
    values = np.clip(values, lower, upper)
    return (vectors * values[..., None, :]) @ dagger(vectors)


def repair_density(stack):
    """Hermitize, clip negative eigenvalues and renormalize to unit trace."""
    repaired = _clip_spectrum(stack, 0.0, None)
    return repaired / trace_stack(repaired).real[..., None, None]


def repair_effect(stack):
    """Hermitize and clip the spectrum into [0, 1]."""
    return _clip_spectrum(stack, 0.0, 1.0)


def min_eigenvalue(stack):
    return np.linalg.eigvalsh(hermitize(stack))[..., 0]
