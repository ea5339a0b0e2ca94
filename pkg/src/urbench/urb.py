"""Modified unitarity RB: pure-state input ensembles, shifted purities and decay fits.

Shifted purities use ordinary Pauli observables and are divided by 4, so for a
single noise application they equal the unitarity of the composed channel.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .channels import QuantumChannel
from .clifford import CliffordGroup, sample_uniform
from .pauli import (
    basis_change_unitary,
    eigenspace_pure_states,
    pauli_labels,
    pauli_matrix,
    positive_eigenspace_indices,
    z_tilde,
)
from .qmath import PureState, outer
from .rng import RngStream
from .simulator import (
    GateSequence,
    Unitary,
    check_states,
    evolve,
    exact_expectation,
    prob_positive,
    run_exact,
    sample_expectation,
)

log = logging.getLogger(__name__)

Q_FLOOR = 1e-4
LOW_SIGNAL_LEVEL = 0.1
FIT_METHODS = ("log-linear", "nonlinear")

# stream-id tags
_GATES = 0
_SHOTS = 1


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class UrbConfig:
    """Parameters of one URB experiment.

    ``epsilon``/``delta`` are the confidence parameters of the sequence
    average; they are recorded with results but do not change ``iterations``.
    """

    n: int = 1
    depths: tuple[int, ...] = tuple(range(1, 11))
    iterations: int = 15
    samples: int = 5
    shots: int = 1024
    seed: int = 0
    include_identity: bool = True
    fit_method: str = "nonlinear"
    q_floor: float = Q_FLOOR
    low_signal_level: float = LOW_SIGNAL_LEVEL
    epsilon: float | None = None
    delta: float | None = None
    noise: Mapping | None = None

    def __post_init__(self):
        object.__setattr__(self, "depths", tuple(int(m) for m in self.depths))
        if self.n not in (1, 2):
            raise ValueError(f"n must be 1 or 2, got {self.n}")
        if not self.depths:
            raise ValueError("depths must be non-empty")
        if any(m < 1 for m in self.depths):
            raise ValueError("depths must be positive")
        if list(self.depths) != sorted(set(self.depths)):
            raise ValueError("depths must be strictly ascending")
        if self.iterations < 1 or self.samples < 1:
            raise ValueError("iterations and samples must be >= 1")
        if self.shots < 0:
            raise ValueError("shots must be >= 0 (0 = exact expectations)")
        if self.fit_method not in FIT_METHODS:
            raise ValueError(f"fit_method must be one of {FIT_METHODS}")
        for name in ("epsilon", "delta"):
            v = getattr(self, name)
            if v is not None and not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1)")


@dataclass(frozen=True)
class ShiftedPurityRecord:
    depth: int
    iteration: int
    sample: int
    value: float


@dataclass(frozen=True)
class DecayFit:
    B: float
    u: float
    u_variance: float
    residual_sum_sq: float
    points_used: int
    method: str
    low_signal: bool = False

    def predict(self, m):
        return self.B * self.u ** (np.asarray(m, dtype=float) - 1)


@dataclass(frozen=True)
class UrbRun:
    records: list[ShiftedPurityRecord]
    points: list[tuple[int, float]]  # (depth, mean shifted purity)
    fit: DecayFit
    config: UrbConfig = field(repr=False, default=None)


# ---------------------------------------------------------------- inputs


def input_ensembles(P: str, n: int | None = None):
    """Pure-state decompositions of ``(I+P)/d`` and ``(I-P)/d``."""
    if n is not None and len(P) != n:
        raise ValueError(f"Pauli {P!r} does not act on {n} qubit(s)")
    return eigenspace_pure_states(P, +1), eigenspace_pure_states(P, -1)


@lru_cache(maxsize=None)
def _tables(n: int):
    """Initial states ``(P, branch, k, d, d)``, weights, Q rotations and +1 masks."""
    d = 2**n
    labels = pauli_labels(n)
    states, weights = [], []
    for P in labels:
        plus, minus = input_ensembles(P, n)
        states.append([[outer(s).matrix for s, _ in side] for side in (plus, minus)])
        weights.append([[w for _, w in side] for side in (plus, minus)])
    states = np.array(states)
    weights = np.array(weights)
    rot = np.array([basis_change_unitary(Q) for Q in labels])
    mask = np.zeros((len(labels), d))
    for qi, Q in enumerate(labels):
        mask[qi, list(positive_eigenspace_indices(z_tilde(Q)))] = 1.0
    for a in (states, weights, rot, mask):
        a.flags.writeable = False
    return states, weights, rot, mask


@dataclass(frozen=True)
class OutcomeTable:
    """Exact +1 probabilities ``prob[P, branch, k, Q]`` for one sequence."""

    n: int
    prob: np.ndarray
    weights: np.ndarray  # (P, branch, k)

    def expectations(self, shots: int = 0, rng: RngStream | None = None) -> np.ndarray:
        """Weighted ``Tr[Q G(rho_branch^(P))]`` as an array ``(P, branch, Q)``."""
        if shots:
            k = rng.binomial(shots, self.prob)
            e = 2.0 * k / shots - 1.0
        else:
            e = 2.0 * self.prob - 1.0
        return np.einsum("pbk,pbkq->pbq", self.weights, e)

    def shifted_purity(self, shots: int = 0, rng: RngStream | None = None) -> float:
        e = self.expectations(shots, rng)
        diff = e[:, 0, :] - e[:, 1, :]
        d2 = 4**self.n
        return float(np.sum(diff**2) / (d2 - 1) / 4.0)


def outcome_table(seq: GateSequence) -> OutcomeTable:
    states, weights, rot, mask = _tables(seq.n)
    out = evolve(seq, states)
    check_states(out)
    # diag(U_Q rho U_Q^dagger)[b] for every state and Q
    diag = np.einsum("qba,pkjac,qbc->pkjqb", rot, out, rot.conj(), optimize=True).real
    prob = np.clip(np.einsum("pkjqb,qb->pkjq", diag, mask), 0.0, 1.0)
    return OutcomeTable(seq.n, prob, weights)


# ---------------------------------------------------------------- estimators


def pair_expectation(seq: GateSequence, P: str, Q: str, shots: int, rng: RngStream | None):
    """``(Tr[Q G(rho^(P))], Tr[Q G(rho_hat^(P))])`` from the pure-state ensembles."""
    plus, minus = input_ensembles(P, seq.n)
    result = []
    for b, side in enumerate((plus, minus)):
        total = 0.0
        for k, (state, w) in enumerate(side):
            rho = run_exact(seq, outer(state))
            if shots:
                e = sample_expectation(prob_positive(rho, Q), shots, rng.child(b, k))
            else:
                e = exact_expectation(rho, Q)
            total += w * e
        result.append(total)
    return tuple(result)


def shifted_purity(seq: GateSequence, n: int, shots: int = 0, rng: RngStream | None = None) -> float:
    if seq.n != n:
        raise ValueError(f"sequence acts on {seq.n} qubit(s), expected {n}")
    if shots and rng is None:
        raise ValueError("an RngStream is required when shots > 0")
    return outcome_table(seq).shifted_purity(shots, rng)


def exact_shifted_purity(ch: QuantumChannel) -> float:
    """Infinite-shot shifted purity of ``ch`` fed the mixed inputs ``(I +- P)/d``."""
    d = ch.dim
    labels = pauli_labels(ch.n)
    paulis = {lab: pauli_matrix(lab) for lab in labels}
    eye = np.eye(d)
    total = 0.0
    for P in labels:
        out_p = ch.apply_matrix((eye + paulis[P]) / d)
        out_m = ch.apply_matrix((eye - paulis[P]) / d)
        for Q in labels:
            diff = np.trace(paulis[Q] @ (out_p - out_m)).real
            total += diff * diff
    return total / (d * d - 1) / 4.0


# ---------------------------------------------------------------- fitting


def _ols(x, y):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    xm = x.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = np.sum((x - xm) * (y - y.mean())) / sxx
    intercept = y.mean() - slope * xm
    dof = len(x) - 2
    resid = y - (intercept + slope * x)
    var_slope = float(np.sum(resid**2) / dof / sxx) if dof > 0 else 0.0
    return slope, intercept, var_slope


def _gauss_newton(m, q, B0, u0, max_iter=200):
    """Levenberg-damped Gauss-Newton for ``q = B u^(m-1)``; returns (B, u, cov)."""
    x = np.asarray(m, float) - 1.0
    q = np.asarray(q, float)
    B, u = float(B0), float(min(max(u0, 1e-6), 1.0))
    lam = 1e-3

    def sse(B, u):
        return float(np.sum((q - B * u**x) ** 2))

    cur = sse(B, u)
    converged = False
    for _ in range(max_iter):
        pw = u**x
        J = np.column_stack([pw, B * x * u ** np.maximum(x - 1, 0)])
        r = q - B * pw
        JTJ = J.T @ J
        g = J.T @ r
        improved = False
        for _ in range(30):
            step = np.linalg.solve(JTJ + lam * np.diag(np.diag(JTJ) + 1e-300), g)
            nB, nu = B + step[0], min(max(u + step[1], 1e-12), 1.0)
            new = sse(nB, nu)
            if new <= cur:
                lam = max(lam / 10, 1e-12)
                improved = True
                break
            lam *= 10
        if not improved:
            converged = True
            break
        done = abs(nB - B) <= 1e-15 + 1e-13 * abs(B) and abs(nu - u) <= 1e-15 + 1e-13 * u
        B, u, cur = nB, nu, new
        if done:
            converged = True
            break
    if not (converged and np.isfinite(B) and np.isfinite(u)):
        raise FitError("nonlinear decay fit did not converge")
    pw = u**x
    J = np.column_stack([pw, B * x * u ** np.maximum(x - 1, 0)])
    dof = len(x) - 2
    try:
        cov = np.linalg.inv(J.T @ J) * (cur / dof) if dof > 0 else np.zeros((2, 2))
    except np.linalg.LinAlgError:
        cov = np.full((2, 2), np.nan)
    return B, u, cov


def fit_decay(
    points: Sequence[tuple[float, float]],
    method: str = "log-linear",
    q_floor: float = Q_FLOOR,
    low_signal_level: float = LOW_SIGNAL_LEVEL,
) -> DecayFit:
    """Fit ``q_m = B u^(m-1)`` to averaged shifted purities.

    ``log-linear`` is ordinary least squares on ``(m-1, ln q)`` over points
    above ``q_floor``, falling back to the nonlinear fit when fewer than two
    survive.  ``nonlinear`` is least squares on ``q`` itself, started from the
    log-linear solution (or the two largest points).  ``u`` is clamped to
    ``[0, 1]``; ``low_signal`` is set when more than half of the points lie
    below ``low_signal_level``, where the estimate tends to be biased upward.
    """
    if method not in FIT_METHODS:
        raise ValueError(f"unknown fit method {method!r}")
    pts = sorted((float(m), float(q)) for m, q in points)
    ms = np.array([m for m, _ in pts])
    qs = np.array([q for _, q in pts])
    if len(np.unique(ms)) < 2:
        raise FitError("need at least two distinct depths")
    if not np.all(np.isfinite(qs)):
        raise FitError("non-finite shifted purity")
    low_signal = bool(np.sum(qs < low_signal_level) > len(qs) / 2)

    keep = qs > q_floor
    loglin = None
    if keep.sum() >= 2 and len(np.unique(ms[keep])) >= 2:
        slope, intercept, var_slope = _ols(ms[keep] - 1, np.log(qs[keep]))
        loglin = (math.exp(intercept), math.exp(slope), var_slope)

    if method == "log-linear" and loglin is not None:
        B, u, var_slope = loglin
        u_var = u * u * var_slope
        used = int(keep.sum())
    else:
        if loglin is not None:
            B0, u0 = loglin[0], loglin[1]
        else:
            order = np.argsort(qs)[::-1][:2]
            (m1, q1), (m2, q2) = sorted(zip(ms[order], qs[order]))
            if q1 <= 0 or q2 <= 0:
                raise FitError("all shifted purities are below the floor")
            u0 = (q2 / q1) ** (1.0 / (m2 - m1))
            B0 = q1 / u0 ** (m1 - 1)
        B, u, cov = _gauss_newton(ms, qs, B0, u0)
        u_var = float(cov[1, 1])
        used = len(qs)
        method = "nonlinear"
    u = min(max(u, 0.0), 1.0)
    rss = float(np.sum((qs - B * u ** (ms - 1)) ** 2))
    return DecayFit(
        B=float(B),
        u=float(u),
        u_variance=float(u_var),
        residual_sum_sq=rss,
        points_used=used,
        method=method,
        low_signal=low_signal,
    )


# ---------------------------------------------------------------- protocol


def _cell_stream(cfg: UrbConfig, tag: int, depth: int, iteration: int, *rest: int) -> RngStream:
    return RngStream(cfg.seed, (tag, depth, iteration) + tuple(rest))


def murb_sequence(group: CliffordGroup, noise: QuantumChannel, depth: int, rng: RngStream, include_identity: bool = True) -> GateSequence:
    """``depth`` uniformly drawn Cliffords, each followed by ``noise``."""
    elements = []
    for _ in range(depth):
        g = sample_uniform(group, rng, exclude_identity=not include_identity)
        elements += [Unitary(g.matrix, label=" ".join(g.word) or "I"), noise]
    return GateSequence(group.n, tuple(elements))


def _sample_cell(table: OutcomeTable, cfg: UrbConfig, depth: int, iteration: int) -> list[ShiftedPurityRecord]:
    out = []
    for s in range(cfg.samples):
        rng = _cell_stream(cfg, _SHOTS, depth, iteration, s) if cfg.shots else None
        out.append(ShiftedPurityRecord(depth, iteration, s, table.shifted_purity(cfg.shots, rng)))
    return out


def _murb_cell(args) -> list[ShiftedPurityRecord]:
    group, noise, cfg, depth, iteration = args
    rng = _cell_stream(cfg, _GATES, depth, iteration)
    seq = murb_sequence(group, noise, depth, rng, cfg.include_identity)
    return _sample_cell(outcome_table(seq), cfg, depth, iteration)


def average_points(records: Sequence[ShiftedPurityRecord]) -> list[tuple[int, float]]:
    """Mean over samples, then over iterations, for every depth."""
    by_cell: dict[tuple[int, int], list[float]] = {}
    for r in records:
        by_cell.setdefault((r.depth, r.iteration), []).append(r.value)
    by_depth: dict[int, list[float]] = {}
    for (depth, _), vals in sorted(by_cell.items()):
        by_depth.setdefault(depth, []).append(float(np.mean(vals)))
    return [(m, float(np.mean(v))) for m, v in sorted(by_depth.items())]


def finish_run(records, cfg: UrbConfig) -> UrbRun:
    records = sorted(records, key=lambda r: (r.depth, r.iteration, r.sample))
    points = average_points(records)
    fit = fit_decay(points, cfg.fit_method, cfg.q_floor, cfg.low_signal_level)
    if fit.low_signal:
        log.warning("low signal: most averaged shifted purities are below %g", cfg.low_signal_level)
    return UrbRun(records, points, fit, cfg)


def map_cells(fn, tasks, workers: int = 1):
    if workers <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def run_murb(group: CliffordGroup, noise: QuantumChannel, cfg: UrbConfig, workers: int = 1) -> UrbRun:
    """m-URB: random Clifford sequences with ``noise`` after every gate.

    Every ``(depth, iteration)`` cell draws its gates and shots from its own
    stream, so results do not depend on ``workers``.
    """
    if noise.dim != 2**group.n or group.n != cfg.n:
        raise ValueError("noise, group and config must act on the same number of qubits")
    tasks = [(group, noise, cfg, m, it) for m in cfg.depths for it in range(cfg.iterations)]
    records = [r for cell in map_cells(_murb_cell, tasks, workers) for r in cell]
    return finish_run(records, cfg)
