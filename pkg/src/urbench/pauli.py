"""Pauli labels, the normalized non-identity Pauli set and measurement rotations.

Labels are plain strings over ``IXYZ``; the first letter acts on qubit 0,
which is the left tensor factor (most significant bit of a basis index).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .qmath import PureState, kron_all

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S = np.diag([1, 1j]).astype(complex)
SDG = S.conj().T
# control qubit 0, target qubit 1
CNOT_01 = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
# control qubit 1, target qubit 0
CNOT_10 = np.array(
    [[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex
)

_SINGLE = {"I": I2, "X": X, "Y": Y, "Z": Z}
# single-qubit factor U with U^dagger Z U = letter
_ROTATION = {"I": I2, "Z": I2, "X": H, "Y": H @ SDG}

GRAM_SCHMIDT_TOL = 1e-8


class PauliError(ValueError):
    pass


def check_label(label: str, n: int | None = None) -> str:
    if not label or any(c not in "IXYZ" for c in label):
        raise PauliError(f"invalid Pauli label {label!r}")
    if len(label) not in (1, 2):
        raise PauliError(f"only 1 or 2 qubits supported, got {label!r}")
    if n is not None and len(label) != n:
        raise PauliError(f"label {label!r} does not act on {n} qubit(s)")
    return label


def _non_identity(label: str) -> str:
    check_label(label)
    if set(label) == {"I"}:
        raise PauliError("identity Pauli not allowed here")
    return label


def pauli_labels(n: int, include_identity: bool = False) -> list[str]:
    """All labels on ``n`` qubits in lexicographic ``IXYZ`` order."""
    if n not in (1, 2):
        raise PauliError(f"n must be 1 or 2, got {n}")
    labels = ["".join(p) for p in itertools.product("IXYZ", repeat=n)]
    return labels if include_identity else labels[1:]


def pauli_matrix(label: str) -> np.ndarray:
    check_label(label)
    return kron_all(*(_SINGLE[c] for c in label))


@dataclass(frozen=True)
class NormalizedPauliSet:
    n: int
    labels: tuple[str, ...]
    matrices: np.ndarray  # shape (4**n - 1, d, d)

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(zip(self.labels, self.matrices))


@lru_cache(maxsize=None)
def normalized_pauli_group(n: int) -> NormalizedPauliSet:
    """Non-identity Paulis scaled to unit Hilbert-Schmidt norm."""
    labels = tuple(pauli_labels(n))
    d = 2**n
    mats = np.array([pauli_matrix(lab) for lab in labels]) / np.sqrt(d)
    mats.flags.writeable = False
    return NormalizedPauliSet(n, labels, mats)


@lru_cache(maxsize=None)
def normalized_pauli_basis(n: int) -> np.ndarray:
    """Normalized Paulis including ``I/sqrt(d)`` at index 0, shape (d^2, d, d)."""
    d = 2**n
    mats = np.array([pauli_matrix(lab) for lab in pauli_labels(n, True)]) / np.sqrt(d)
    mats.flags.writeable = False
    return mats


def eigenspace_pure_states(P: str, sign: int) -> list[tuple[PureState, float]]:
    """Equal-weight pure-state decomposition of ``(I + sign*P)/d``.

    The states form an orthonormal basis of the ``sign`` eigenspace, found by
    modified Gram-Schmidt over the projector's columns (left to right).
    """
    _non_identity(P)
    if sign not in (1, -1):
        raise PauliError(f"sign must be +1 or -1, got {sign}")
    d = 2 ** len(P)
    proj = (np.eye(d) + sign * pauli_matrix(P)) / 2
    basis: list[np.ndarray] = []
    for col in proj.T:
        v = col.copy()
        for b in basis:
            v -= np.vdot(b, v) * b
        norm = np.linalg.norm(v)
        if norm < GRAM_SCHMIDT_TOL:
            continue
        basis.append(v / norm)
    weight = 2.0 / d
    return [(PureState(v), weight) for v in basis]


def z_tilde(Q: str) -> str:
    """Diagonal label measured in place of ``Q`` after the basis change.

    Two-letter labels with X/Y on both qubits keep full parity (``ZZ``).
    Those with a Z next to an X/Y have their parity folded onto one qubit:
    ``XZ, YZ -> ZI`` and ``ZX, ZY, ZZ -> IZ``.
    """
    _non_identity(Q)
    if len(Q) == 1:
        return "Z"
    a, b = Q
    if a == "I":
        return "IZ"
    if b == "I":
        return "ZI"
    if a in "XY" and b in "XY":
        return "ZZ"
    if b == "Z" and a in "XY":
        return "ZI"
    return "IZ"


def basis_change_unitary(Q: str) -> np.ndarray:
    """Unitary ``U`` with ``U^dagger z_tilde(Q) U = Q``.

    A per-letter rotation (``H`` for X, ``H S^dagger`` for Y) maps ``Q`` to a
    Z-string; when :func:`z_tilde` folds a two-qubit parity onto one qubit a
    CNOT is appended so the parity lands on the measured qubit.
    """
    _non_identity(Q)
    rot = kron_all(*(_ROTATION[c] for c in Q))
    zt = z_tilde(Q)
    per_letter = "".join("I" if c == "I" else "Z" for c in Q)
    if zt == per_letter:
        return rot
    fold = CNOT_10 if zt == "ZI" else CNOT_01
    return fold @ rot


def positive_eigenspace_indices(ztilde: str) -> frozenset[int]:
    check_label(ztilde)
    if any(c not in "IZ" for c in ztilde):
        raise PauliError(f"label {ztilde!r} is not diagonal")
    n = len(ztilde)
    out = set()
    for b in range(2**n):
        parity = 0
        for q, c in enumerate(ztilde):
            if c == "Z":
                parity ^= (b >> (n - 1 - q)) & 1
        if parity == 0:
            out.add(b)
    return frozenset(out)
