"""Small dense complex linear algebra and the state types built on it.

Matrices are plain ``numpy`` arrays (row-major, complex128).  The state
types wrap a read-only copy so values can be shared freely between workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Tolerances shared by ops and tests.
HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-9
TRACE_TOL = 1e-10
NORM_TOL = 1e-12
UNITARY_TOL = 1e-10

ComplexMatrix = np.ndarray


class DimensionError(ValueError):
    """Operands have incompatible shapes."""


class DensityError(ValueError):
    """Base class for density-matrix invariant violations."""


class HermiticityError(DensityError):
    pass


class PositivityError(DensityError):
    pass


class TraceError(DensityError):
    pass


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.flags.writeable = False
    return a


def kron(a, b) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


def kron_all(*factors) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for f in factors:
        out = np.kron(out, as_matrix(f))
    return out


def dagger(a) -> np.ndarray:
    return as_matrix(a).conj().T


def mul(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def trace(a) -> complex:
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"trace of non-square {a.shape}")
    return complex(np.trace(a))


def hs_inner(a, b) -> complex:
    """Hilbert-Schmidt inner product ``Tr[a^dagger b]``."""
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))


def frobenius_norm_sq(a) -> float:
    a = as_matrix(a)
    return float(np.sum(a.real**2 + a.imag**2))


def is_unitary(u, tol: float = UNITARY_TOL) -> bool:
    u = as_matrix(u)
    if u.shape[0] != u.shape[1]:
        return False
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) <= tol)


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if abs(np.linalg.norm(v) - 1.0) > NORM_TOL:
            raise ValueError(f"state not normalized (norm {np.linalg.norm(v)!r})")
        object.__setattr__(self, "amplitudes", _frozen(v))

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Validated density operator on ``d = 2**n`` dimensions.

    Use :func:`validate_density` to construct one from a raw matrix; the
    constructor itself stores the matrix without checking.
    """

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)


def outer(s: PureState) -> DensityMatrix:
    v = s.amplitudes
    return DensityMatrix(np.outer(v, v.conj()))


def validate_density(m, trace_preserving: bool = True) -> DensityMatrix:
    """Check the density-matrix invariants and wrap ``m``.

    With ``trace_preserving`` the trace must equal one; otherwise it only has
    to lie in ``(0, 1]`` (outputs of trace-decreasing channels).
    """
    m = as_matrix(m)
    d = m.shape[0]
    if m.shape != (d, d) or d not in (2, 4):
        raise DimensionError(f"density matrix must be 2x2 or 4x4, got {m.shape}")
    herm_err = np.max(np.abs(m - m.conj().T))
    if herm_err > HERMITIAN_TOL:
        raise HermiticityError(f"not Hermitian (max deviation {herm_err:.3g})")
    hm = (m + m.conj().T) / 2
    lowest = np.linalg.eigvalsh(hm)[0]
    if lowest < -PSD_TOL:
        raise PositivityError(f"not positive semidefinite (eigenvalue {lowest:.3g})")
    tr = np.trace(m).real
    if trace_preserving:
        if abs(tr - 1.0) > TRACE_TOL:
            raise TraceError(f"trace {tr!r} != 1")
    elif not 0.0 < tr <= 1.0 + TRACE_TOL:
        raise TraceError(f"trace {tr!r} outside (0, 1]")
    return DensityMatrix(m)


def basis_state(index: int, dim: int) -> PureState:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return PureState(v)
