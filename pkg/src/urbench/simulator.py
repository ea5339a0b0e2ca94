"""Density-matrix execution of gate sequences and shot-sampled Pauli measurements."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .channels import QuantumChannel, compose, identity_channel, unitary_channel
from .pauli import basis_change_unitary, positive_eigenspace_indices, z_tilde
from .qmath import (
    DensityMatrix,
    DimensionError,
    HERMITIAN_TOL,
    PSD_TOL,
    TRACE_TOL,
    DensityError,
    as_matrix,
    validate_density,
)
from .rng import RngStream

__all__ = [
    "Unitary",
    "GateSequence",
    "RngStream",
    "run_exact",
    "evolve",
    "prob_positive",
    "prob_negative",
    "exact_expectation",
    "sample_expectation",
]


@dataclass(frozen=True, eq=False)
class Unitary:
    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        m = np.array(as_matrix(self.matrix), copy=True)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


SequenceElement = Union[Unitary, QuantumChannel]


@dataclass(frozen=True)
class GateSequence:
    """Elements applied left to right (``elements[0]`` acts first)."""

    n: int
    elements: tuple = ()

    def __post_init__(self):
        d = 2**self.n
        for el in self.elements:
            if not isinstance(el, (Unitary, QuantumChannel)):
                raise TypeError(f"unsupported sequence element {el!r}")
            if el.dim != d:
                raise DimensionError(f"element of dim {el.dim} in a {self.n}-qubit sequence")

    def __add__(self, other: "GateSequence") -> "GateSequence":
        if other.n != self.n:
            raise DimensionError("cannot concatenate sequences on different qubit counts")
        return GateSequence(self.n, self.elements + other.elements)

    def __len__(self):
        return len(self.elements)

    def to_channel(self) -> QuantumChannel:
        """The whole sequence as one channel (Kraus set kept at most d^2 long)."""
        ch = identity_channel(self.n)
        for el in self.elements:
            step = unitary_channel(el.matrix) if isinstance(el, Unitary) else el
            ch = reduce_kraus(compose(step, ch))
        return ch


def reduce_kraus(ch: QuantumChannel) -> QuantumChannel:
    """Equivalent channel with at most ``d^2`` Kraus operators (via the Choi matrix)."""
    d = ch.dim
    if len(ch.kraus) <= d * d:
        return ch
    vecs = ch.stacked.reshape(len(ch.kraus), d * d)  # row-major vec of each K
    choi = vecs.T @ vecs.conj()
    w, v = np.linalg.eigh((choi + choi.conj().T) / 2)
    keep = w > 1e-14 * max(w.max(), 1.0)
    kraus = [math.sqrt(wi) * v[:, i].reshape(d, d) for i, wi in enumerate(w) if keep[i]]
    return QuantumChannel(tuple(kraus), label=ch.label)


def evolve(seq: GateSequence, rho: np.ndarray) -> np.ndarray:
    """Apply ``seq`` to raw density matrices of shape ``(..., d, d)``."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-1] != 2**seq.n:
        raise DimensionError(f"state dim {rho.shape[-1]} != sequence dim {2**seq.n}")
    for el in seq.elements:
        if isinstance(el, Unitary):
            u = el.matrix
            rho = u @ rho @ u.conj().T
        else:
            rho = el.apply_matrix(rho)
    return rho


def check_states(rho: np.ndarray) -> None:
    """Vectorized density-invariant check for a batch ``(..., d, d)``."""
    herm = np.max(np.abs(rho - np.swapaxes(rho, -1, -2).conj()), initial=0.0)
    if herm > HERMITIAN_TOL:
        raise DensityError(f"state lost Hermiticity (deviation {herm:.3g})")
    lowest = np.linalg.eigvalsh(rho).min(initial=0.0)
    if lowest < -PSD_TOL:
        raise DensityError(f"state lost positivity (eigenvalue {lowest:.3g})")
    tr = np.trace(rho, axis1=-2, axis2=-1).real
    if np.any(tr <= 0) or np.any(tr > 1 + TRACE_TOL):
        raise DensityError("state trace left (0, 1]")


def run_exact(seq: GateSequence, rho0: DensityMatrix) -> DensityMatrix:
    out = evolve(seq, rho0.matrix)
    return validate_density(out, trace_preserving=False)


def _measured(rho, Q: str) -> tuple[np.ndarray, frozenset[int]]:
    m = rho.matrix if isinstance(rho, DensityMatrix) else as_matrix(rho)
    if m.shape[0] != 2 ** len(Q):
        raise DimensionError(f"observable {Q!r} does not match state dim {m.shape[0]}")
    u = basis_change_unitary(Q)
    rotated = np.real(np.diag(u @ m @ u.conj().T))
    return rotated, positive_eigenspace_indices(z_tilde(Q))


def prob_positive(rho, Q: str) -> float:
    """Probability of the +1 outcome of ``Q``, measured in the computational basis
    after rotating by :func:`~urbench.pauli.basis_change_unitary`."""
    diag, pos = _measured(rho, Q)
    p = sum(diag[i] for i in pos)
    return float(min(max(p, 0.0), 1.0))


def prob_negative(rho, Q: str) -> float:
    diag, pos = _measured(rho, Q)
    p = sum(diag[i] for i in range(len(diag)) if i not in pos)
    return float(min(max(p, 0.0), 1.0))


def exact_expectation(rho, Q: str) -> float:
    return 2.0 * prob_positive(rho, Q) - 1.0


def sample_expectation(p: float, shots: int, rng: RngStream) -> float:
    """Estimate ``2 p - 1`` from ``shots`` binomial draws."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p!r} outside [0, 1]")
    if shots < 1:
        raise ValueError("shots must be >= 1")
    k = rng.binomial(shots, p)
    return 2.0 * k / shots - 1.0
