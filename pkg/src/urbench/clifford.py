"""Single- and two-qubit Clifford groups by breadth-first closure.

Members are stored phase-canonicalized (first entry of modulus > 1e-8 is real
positive) and indexed by their entries rounded to six decimals.  Each member
carries the generator word that produced it during the search.
"""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .channels import QuantumChannel, unitary_channel
from .pauli import H, S, pauli_matrix
from .qmath import as_matrix, kron_all
from .rng import RngStream

log = logging.getLogger(__name__)

PHASE_TOL = 1e-8
HASH_DECIMALS = 6
CACHE_VERSION = 1
CACHE_ENV = "URBENCH_CACHE_DIR"

GROUP_ORDER = {1: 24, 2: 11520}


def _cnot(control: int) -> np.ndarray:
    # (II + Z_c + X_t - Z_c X_t) / 2
    if control == 0:
        zc, xt, zx = "ZI", "IX", "ZX"
    else:
        zc, xt, zx = "IZ", "XI", "XZ"
    return (pauli_matrix("II") + pauli_matrix(zc) + pauli_matrix(xt) - pauli_matrix(zx)) / 2


def basic_gate(name: str, n: int) -> np.ndarray:
    """Matrix of a word letter: ``H_q``, ``S_q``, ``CNOT_01`` or ``CNOT_10``."""
    if name == "CNOT_01" and n == 2:
        return _cnot(0)
    if name == "CNOT_10" and n == 2:
        return _cnot(1)
    kind, _, q = name.partition("_")
    single = {"H": H, "S": S}.get(kind)
    if single is None or not q.isdigit() or int(q) >= n:
        raise ValueError(f"unknown basic gate {name!r} for n={n}")
    factors = [np.eye(2, dtype=complex)] * n
    factors[int(q)] = single
    return kron_all(*factors)


def generator_names(n: int) -> tuple[str, ...]:
    if n == 1:
        return ("H_0", "S_0")
    if n == 2:
        return ("H_0", "H_1", "S_0", "S_1", "CNOT_01")
    raise ValueError(f"Clifford groups are only built for n in {{1, 2}}, got {n}")


def replay_word(word, n: int) -> np.ndarray:
    """Product of the word's gates, first letter applied first."""
    m = np.eye(2**n, dtype=complex)
    for name in word:
        m = basic_gate(name, n) @ m
    return m


def _canonicalize(mats: np.ndarray) -> np.ndarray:
    flat = mats.reshape(mats.shape[0], -1)
    first = np.argmax(np.abs(flat) > PHASE_TOL, axis=1)
    lead = flat[np.arange(flat.shape[0]), first]
    return mats * (np.abs(lead) / lead)[:, None, None]


def canonical_form(U) -> np.ndarray:
    U = as_matrix(U)
    return _canonicalize(U[None])[0]


def _keys(canon: np.ndarray) -> list[bytes]:
    scale = 10.0**HASH_DECIMALS
    q = np.stack([canon.real, canon.imag], axis=-1) * scale
    q = np.rint(q).astype(np.int64).reshape(canon.shape[0], -1)
    return [row.tobytes() for row in q]


def matrix_key(U) -> bytes:
    return _keys(canonical_form(U)[None])[0]


@dataclass(frozen=True, eq=False)
class CliffordGate:
    n: int
    matrix: np.ndarray
    word: tuple[str, ...]
    index: int = -1

    @property
    def dim(self) -> int:
        return 2**self.n


@dataclass(frozen=True, eq=False)
class CliffordGroup:
    n: int
    matrices: np.ndarray  # (N, d, d), canonical
    words: tuple[tuple[str, ...], ...]
    index: dict = field(repr=False)

    def __len__(self):
        return len(self.words)

    def __getitem__(self, i: int) -> CliffordGate:
        return CliffordGate(self.n, self.matrices[i], self.words[i], i)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @cached_property
    def identity_index(self) -> int:
        return self.index[matrix_key(np.eye(2**self.n))]

    def lookup(self, U) -> int | None:
        """Member id of ``U`` up to global phase, or ``None``."""
        return self.index.get(matrix_key(U))

    def __contains__(self, U) -> bool:
        return self.lookup(U) is not None


def _bfs(n: int) -> tuple[np.ndarray, list[tuple[str, ...]]]:
    names = generator_names(n)
    gens = [basic_gate(g, n) for g in names]
    d = 2**n
    start = np.eye(d, dtype=complex)[None]
    seen = {_keys(start)[0]: 0}
    mats = [start[0]]
    words: list[tuple[str, ...]] = [()]
    frontier = [0]
    while frontier:
        block = np.array([mats[i] for i in frontier])
        nxt = []
        for gname, g in zip(names, gens):
            cand = _canonicalize(np.einsum("ab,fbc->fac", g, block))
            for parent, key, mat in zip(frontier, _keys(cand), cand):
                if key in seen:
                    continue
                seen[key] = len(mats)
                nxt.append(len(mats))
                mats.append(mat)
                words.append(words[parent] + (gname,))
        frontier = nxt
    return np.array(mats), words


def _checksum(mats: np.ndarray, words) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(mats).tobytes())
    h.update("\n".join(" ".join(w) for w in words).encode())
    return h.hexdigest()


def _cache_path(n: int) -> Path | None:
    root = os.environ.get(CACHE_ENV)
    if not root:
        return None
    return Path(root) / f"clifford_n{n}_v{CACHE_VERSION}.npz"


def _load_cache(path: Path):
    try:
        with np.load(path, allow_pickle=False) as data:
            if int(data["version"]) != CACHE_VERSION:
                return None
            mats = data["matrices"]
            words = [tuple(w.split()) for w in str(data["words"]).split("\n")]
            if str(data["checksum"]) != _checksum(mats, words):
                return None
            return mats, words
    except (OSError, KeyError, ValueError):
        return None


def _save_cache(path: Path, mats, words):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npz")
    np.savez(
        tmp,
        version=CACHE_VERSION,
        matrices=mats,
        words="\n".join(" ".join(w) for w in words),
        checksum=_checksum(mats, words),
    )
    os.replace(tmp, path)


_GROUPS: dict[int, CliffordGroup] = {}


def generate_group(n: int) -> CliffordGroup:
    """The ``n``-qubit Clifford group modulo phase (24 or 11520 members).

    Built once per process.  When ``URBENCH_CACHE_DIR`` is set the matrices
    and words are also stored there and reused if version and checksum match.
    """
    if n in _GROUPS:
        return _GROUPS[n]
    generator_names(n)  # validates n
    path = _cache_path(n)
    loaded = _load_cache(path) if path is not None and path.exists() else None
    if loaded is None:
        mats, words = _bfs(n)
        if path is not None:
            try:
                _save_cache(path, mats, words)
            except OSError as exc:
                log.warning("could not write Clifford cache %s: %s", path, exc)
    else:
        mats, words = loaded
    mats = np.array(mats)
    mats.flags.writeable = False
    index = {k: i for i, k in enumerate(_keys(mats))}
    group = CliffordGroup(n, mats, tuple(tuple(w) for w in words), index)
    if len(group) != GROUP_ORDER[n] or len(index) != len(group):
        raise RuntimeError(f"Clifford closure produced {len(group)} members for n={n}")
    _GROUPS[n] = group
    return group


def sample_uniform(group: CliffordGroup, rng: RngStream, exclude_identity: bool = False) -> CliffordGate:
    if not exclude_identity:
        return group[int(rng.integers(len(group)))]
    # draw from the non-identity members, still uniform
    i = int(rng.integers(len(group) - 1))
    if i >= group.identity_index:
        i += 1
    return group[i]


def gate_as_channel(g: CliffordGate) -> QuantumChannel:
    return unitary_channel(g.matrix)
