"""Kraus-form channels, Pauli transfer matrices, unitarity and related bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .pauli import normalized_pauli_basis, pauli_labels, pauli_matrix
from .qmath import (
    DensityMatrix,
    DimensionError,
    UNITARY_TOL,
    as_matrix,
    is_unitary,
    validate_density,
)

KRAUS_TOL = 1e-10
RADICAND_TOL = 1e-12


class ChannelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class QuantumChannel:
    """A completely positive, non-trace-increasing map in Kraus form."""

    kraus: tuple[np.ndarray, ...]
    label: str = field(default="", compare=False)
    trace_preserving: bool = field(init=False, compare=False, default=False)

    def __post_init__(self):
        ks = []
        for k in self.kraus:
            k = np.array(as_matrix(k), copy=True)
            k.flags.writeable = False
            ks.append(k)
        if not ks:
            raise ChannelError("channel needs at least one Kraus operator")
        d = ks[0].shape[0]
        if d not in (2, 4) or any(k.shape != (d, d) for k in ks):
            raise DimensionError("Kraus operators must all be d x d with d in {2, 4}")
        gram = sum(k.conj().T @ k for k in ks)
        excess = np.linalg.eigvalsh((gram + gram.conj().T) / 2)[-1] - 1.0
        if excess > KRAUS_TOL:
            raise ChannelError(f"trace-increasing Kraus set (excess {excess:.3g})")
        object.__setattr__(self, "kraus", tuple(ks))
        object.__setattr__(
            self,
            "trace_preserving",
            bool(np.max(np.abs(gram - np.eye(d))) <= KRAUS_TOL),
        )

    @property
    def dim(self) -> int:
        return self.kraus[0].shape[0]

    @property
    def n(self) -> int:
        return int(round(math.log2(self.dim)))

    @cached_property
    def stacked(self) -> np.ndarray:
        return np.array(self.kraus)

    @cached_property
    def ptm(self) -> "PauliTransferMatrix":
        return to_ptm(self)

    def apply_matrix(self, rho: np.ndarray) -> np.ndarray:
        """Kraus action on a raw (possibly batched, ``(..., d, d)``) matrix."""
        ks = self.stacked
        return np.einsum("kab,...bc,kdc->...ad", ks, rho, ks.conj(), optimize=True)


@dataclass(frozen=True)
class PauliTransferMatrix:
    matrix: np.ndarray  # real (d^2, d^2)

    @property
    def dim_sq(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class DiamondBounds:
    lower: float
    upper: float


def _check_dims(a: QuantumChannel, b: QuantumChannel):
    if a.dim != b.dim:
        raise DimensionError(f"channel dims differ: {a.dim} vs {b.dim}")


def apply(ch: QuantumChannel, rho: DensityMatrix) -> DensityMatrix:
    if rho.dim != ch.dim:
        raise DimensionError(f"state dim {rho.dim} != channel dim {ch.dim}")
    return validate_density(ch.apply_matrix(rho.matrix), trace_preserving=False)


def compose(after: QuantumChannel, before: QuantumChannel) -> QuantumChannel:
    """Channel acting as ``after`` applied to the output of ``before``."""
    _check_dims(after, before)
    kraus = [a @ b for a in after.kraus for b in before.kraus]
    return QuantumChannel(tuple(kraus), label=f"{after.label}*{before.label}")


def identity_channel(n: int) -> QuantumChannel:
    return QuantumChannel((np.eye(2**n, dtype=complex),), label="identity")


def _check_prob(p: float):
    if not 0.0 <= p <= 1.0:
        raise ChannelError(f"probability {p!r} outside [0, 1]")


def depolarizing(n: int, p: float) -> QuantumChannel:
    """``rho -> p rho + (1-p) Tr[rho] I/d`` in uniform Pauli-twirl Kraus form."""
    _check_prob(p)
    d = 2**n
    d2 = d * d
    kraus = [math.sqrt(p + (1 - p) / d2) * np.eye(d, dtype=complex)]
    if p < 1.0:
        w = math.sqrt((1 - p) / d2)
        kraus += [w * pauli_matrix(lab) for lab in pauli_labels(n)]
    return QuantumChannel(tuple(kraus), label=f"depolarizing(n={n},p={p})")


def bit_flip(p: float) -> QuantumChannel:
    _check_prob(p)
    kraus = [math.sqrt(p) * np.eye(2, dtype=complex)]
    if p < 1.0:
        kraus.append(math.sqrt(1 - p) * pauli_matrix("X"))
    return QuantumChannel(tuple(kraus), label=f"bit_flip(p={p})")


def mixed_unitary(terms) -> QuantumChannel:
    terms = [(float(p), as_matrix(u)) for p, u in terms]
    if not terms:
        raise ChannelError("mixed unitary needs at least one term")
    if any(p < 0 for p, _ in terms) or abs(sum(p for p, _ in terms) - 1.0) > KRAUS_TOL:
        raise ChannelError("mixture probabilities must be non-negative and sum to 1")
    for _, u in terms:
        if not is_unitary(u):
            raise ChannelError("mixture element is not unitary")
    kraus = [math.sqrt(p) * u for p, u in terms if p > 0]
    return QuantumChannel(tuple(kraus), label="mixed_unitary")


def unitary_channel(U) -> QuantumChannel:
    U = as_matrix(U)
    if not is_unitary(U, UNITARY_TOL):
        raise ChannelError("matrix is not unitary")
    return QuantumChannel((U,), label="unitary")


def to_ptm(ch: QuantumChannel) -> PauliTransferMatrix:
    """``R[i, j] = Tr[sigma_i ch(sigma_j)]`` over normalized Paulis, identity first."""
    basis = normalized_pauli_basis(ch.n)
    images = ch.apply_matrix(basis)
    # sigma_i are Hermitian, so Tr[sigma_i A] = sum conj(sigma_i) * A^T entrywise
    R = np.einsum("iab,jba->ij", basis, images).real
    R.flags.writeable = False
    return PauliTransferMatrix(R)


def unital_block(ptm: PauliTransferMatrix) -> np.ndarray:
    return ptm.matrix[1:, 1:]


def unitarity(ch: QuantumChannel) -> float:
    """Squared Frobenius norm of the unital block over ``d^2 - 1``."""
    block = unital_block(ch.ptm)
    return float(np.sum(block**2) / (ch.dim**2 - 1))


def unitarity_pauli_sum(ch: QuantumChannel) -> float:
    """The same quantity summed directly as ``sum_{s,t} Tr[t ch(s)]^2 / (d^2-1)``.

    Independent of the PTM path; used to cross-check :func:`unitarity`.
    """
    total = 0.0
    paulis = normalized_pauli_basis(ch.n)[1:]
    for sigma in paulis:
        out = sum(k @ sigma @ k.conj().T for k in ch.kraus)
        for tau in paulis:
            total += np.trace(tau @ out).real ** 2
    return total / (ch.dim**2 - 1)


def unitarity_depolarizing_closed(n: int, p: float) -> float:
    _check_prob(p)
    return p * p


def unitarity_bitflip_closed(p: float) -> float:
    _check_prob(p)
    return (8 * p * p - 8 * p + 3) / 3


def avg_gate_fidelity(ch: QuantumChannel) -> float:
    if not ch.trace_preserving:
        raise ChannelError("average gate fidelity needs a trace-preserving channel")
    d = ch.dim
    f_ent = np.trace(ch.ptm.matrix) / d**2
    return float((d * f_ent + 1) / (d + 1))


def fidelity_unitarity_bound(ch: QuantumChannel) -> tuple[bool, float]:
    """Check ``((d F - 1)/(d - 1))^2 <= u``; returns ``(holds, slack)``."""
    d = ch.dim
    f = avg_gate_fidelity(ch)
    slack = unitarity(ch) - ((d * f - 1) / (d - 1)) ** 2
    return slack >= -1e-12, slack


def diamond_bounds(p_rb: float, u: float, d: int) -> DiamondBounds:
    """Diamond-distance bounds from the RB decay ``p_rb`` and unitarity ``u``."""
    radicand = 1 - 2 * p_rb + u
    if radicand < -RADICAND_TOL:
        raise ChannelError(f"inconsistent inputs: 1 - 2p + u = {radicand:.3g} < 0")
    root = math.sqrt(max(radicand, 0.0) * (d * d - 1))
    return DiamondBounds(lower=root / (2 * d), upper=d * root / 2)
