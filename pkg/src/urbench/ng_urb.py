"""Native-gate URB: one noisy native gate repeated with ideal identities in between.

Backend noise is a per-gate depolarizing channel read from a small spec file
(``{"backend": ..., "gates": {"cx": {"model": "depolarizing", "p": ...}}}``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

from .channels import QuantumChannel, depolarizing
from .pauli import CNOT_01
from .simulator import GateSequence, Unitary
from .urb import (
    DecayFit,
    ShiftedPurityRecord,
    UrbConfig,
    UrbRun,
    _cell_stream,
    _sample_cell,
    _SHOTS,
    finish_run,
    map_cells,
    outcome_table,
)

NATIVE_GATES = {"id": (1, 0), "u2": (1, 2), "u3": (1, 3), "cx": (2, 0)}  # name -> (qubits, angles)
NOISE_MODELS = ("depolarizing",)
DEFAULT_U2_ANGLES = (0.0, math.pi)
DEFAULT_U3_ANGLES = (math.pi / 2, math.pi / 4, math.pi / 8)
CROSSTALK_THRESHOLD = 0.01
BUILTIN_SPECS = ("burlington-like", "melbourne-like")


class BackendSpecError(ValueError):
    pass


class SpecNotFoundError(BackendSpecError, FileNotFoundError):
    pass


class SpecSchemaError(BackendSpecError):
    pass


class SpecRangeError(BackendSpecError):
    pass


class MissingGateError(BackendSpecError, KeyError):
    pass


@dataclass(frozen=True)
class NativeGate:
    name: str
    angles: tuple[float, ...] = ()

    def __post_init__(self):
        if self.name not in NATIVE_GATES:
            raise ValueError(f"unknown native gate {self.name!r}")
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        want = NATIVE_GATES[self.name][1]
        if len(self.angles) != want:
            raise ValueError(f"{self.name} takes {want} angle(s), got {len(self.angles)}")

    @property
    def n(self) -> int:
        return NATIVE_GATES[self.name][0]

    @classmethod
    def default(cls, name: str, u2_angles=DEFAULT_U2_ANGLES, u3_angles=DEFAULT_U3_ANGLES) -> "NativeGate":
        angles = {"u2": u2_angles, "u3": u3_angles}.get(name, ())
        return cls(name, tuple(angles))


def u3_matrix(theta: float, phi: float, lam: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array(
        [
            [c, -np.exp(1j * lam) * s],
            [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c],
        ],
        dtype=complex,
    )


def native_unitary(g: NativeGate) -> np.ndarray:
    if g.name == "id":
        return np.eye(2, dtype=complex)
    if g.name == "u2":
        return u3_matrix(math.pi / 2, *g.angles)
    if g.name == "u3":
        return u3_matrix(*g.angles)
    return CNOT_01.copy()


@dataclass(frozen=True)
class GateNoise:
    model: str
    p: float


@dataclass(frozen=True)
class BackendNoiseSpec:
    backend: str
    gates: Mapping[str, GateNoise]

    def noise_for(self, name: str) -> GateNoise:
        try:
            return self.gates[name]
        except KeyError:
            raise MissingGateError(f"backend {self.backend!r} has no noise entry for {name!r}") from None

    def channel_for(self, g: NativeGate) -> QuantumChannel:
        entry = self.noise_for(g.name)
        return depolarizing(g.n, entry.p)


def parse_backend_spec(data) -> BackendNoiseSpec:
    if not isinstance(data, Mapping):
        raise SpecSchemaError("backend spec must be a mapping")
    extra = set(data) - {"backend", "gates", "description"}
    if extra:
        raise SpecSchemaError(f"unknown top-level keys {sorted(extra)}")
    backend = data.get("backend")
    gates = data.get("gates")
    if not isinstance(backend, str) or not isinstance(gates, Mapping) or not gates:
        raise SpecSchemaError("spec needs a 'backend' name and a non-empty 'gates' mapping")
    parsed = {}
    for name, entry in gates.items():
        if name not in NATIVE_GATES:
            raise SpecSchemaError(f"unknown gate name {name!r}")
        if not isinstance(entry, Mapping) or set(entry) - {"model", "p"}:
            raise SpecSchemaError(f"gate {name!r}: expected keys 'model' and 'p'")
        model = entry.get("model", "depolarizing")
        if model not in NOISE_MODELS:
            raise SpecSchemaError(f"gate {name!r}: unsupported noise model {model!r}")
        p = entry.get("p")
        if isinstance(p, bool) or not isinstance(p, (int, float)):
            raise SpecSchemaError(f"gate {name!r}: 'p' must be a number")
        if not 0.0 <= p <= 1.0:
            raise SpecRangeError(f"gate {name!r}: p = {p} outside [0, 1]")
        parsed[name] = GateNoise(model, float(p))
    return BackendNoiseSpec(backend, parsed)


def load_backend_spec(path) -> BackendNoiseSpec:
    """Read a backend spec file, or one of the shipped ``BUILTIN_SPECS`` by name."""
    if str(path) in BUILTIN_SPECS:
        text = resources.files("urbench.data").joinpath(f"{path}.json").read_text()
    else:
        path = Path(path)
        if not path.is_file():
            raise SpecNotFoundError(f"backend spec not found: {path}")
        text = path.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SpecSchemaError(f"cannot parse backend spec: {exc}") from None
    return parse_backend_spec(data)


def compose_ngurb_sequence(g: NativeGate, m: int, noise: QuantumChannel) -> GateSequence:
    """``m`` noisy applications of ``g`` separated by ideal identities."""
    if m < 1:
        raise ValueError("depth must be >= 1")
    if noise.dim != 2**g.n:
        raise ValueError(f"noise acts on dim {noise.dim}, gate {g.name} on {2**g.n}")
    gate = Unitary(native_unitary(g), label=g.name)
    ideal = Unitary(np.eye(2**g.n), label="ideal-id")
    elements = []
    for i in range(m):
        if i:
            elements.append(ideal)
        elements += [gate, noise]
    return GateSequence(g.n, tuple(elements))


def _ngurb_depth(args) -> list[ShiftedPurityRecord]:
    g, noise, cfg, depth = args
    # the sequence is fixed, so iterations only differ in their shots
    table = outcome_table(compose_ngurb_sequence(g, depth, noise))
    out = []
    for it in range(cfg.iterations):
        out += _sample_cell(table, cfg, depth, it)
    return out


def run_ngurb(g: NativeGate, spec: BackendNoiseSpec, cfg: UrbConfig, workers: int = 1) -> UrbRun:
    """Benchmark one native gate; ``cfg.n`` is replaced by the gate's qubit count."""
    noise = spec.channel_for(g)
    cfg = replace(cfg, n=g.n)
    tasks = [(g, noise, cfg, m) for m in cfg.depths]
    records = [r for chunk in map_cells(_ngurb_depth, tasks, workers) for r in chunk]
    return finish_run(records, cfg)


@dataclass(frozen=True)
class CrosstalkReport:
    gates: dict[str, tuple[float, float]]  # name -> (u, u_variance)
    single_qubit_min: float
    single_qubit_min_gate: str
    cx_unitarity: float
    deficit: float
    threshold: float
    significant: bool


def crosstalk_report(fits: Mapping[str, DecayFit], threshold: float = CROSSTALK_THRESHOLD) -> CrosstalkReport:
    """Compare the two-qubit gate's unitarity against the worst single-qubit gate."""
    if "cx" not in fits:
        raise MissingGateError("cross-talk report needs a fit for 'cx'")
    singles = {k: f for k, f in fits.items() if k in NATIVE_GATES and NATIVE_GATES[k][0] == 1}
    if not singles:
        raise MissingGateError("cross-talk report needs at least one single-qubit gate fit")
    worst = min(singles, key=lambda k: singles[k].u)
    deficit = singles[worst].u - fits["cx"].u
    return CrosstalkReport(
        gates={k: (f.u, f.u_variance) for k, f in fits.items()},
        single_qubit_min=singles[worst].u,
        single_qubit_min_gate=worst,
        cx_unitarity=fits["cx"].u,
        deficit=deficit,
        threshold=threshold,
        significant=deficit > threshold,
    )
