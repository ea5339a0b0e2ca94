import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from urbench.channels import QuantumChannel, depolarizing
from urbench.clifford import canonical_form
from urbench.ng_urb import (
    BUILTIN_SPECS,
    BackendNoiseSpec,
    GateNoise,
    MissingGateError,
    NativeGate,
    SpecNotFoundError,
    SpecRangeError,
    SpecSchemaError,
    compose_ngurb_sequence,
    crosstalk_report,
    load_backend_spec,
    native_unitary,
    parse_backend_spec,
    run_ngurb,
)
from urbench.pauli import CNOT_01, H, X
from urbench.qmath import is_unitary
from urbench.simulator import Unitary
from urbench.urb import DecayFit, UrbConfig

REFERENCE_U = {
    "burlington-like": {"id": 0.998763, "u2": 0.998683, "u3": 0.997480, "cx": 0.971898},
    "melbourne-like": {"id": 0.997995, "u2": 0.997861, "u3": 0.995872, "cx": 0.930389},
}
EXACT = UrbConfig(depths=tuple(range(5, 51, 5)), iterations=1, samples=1, shots=0)


def phase_equal(a, b):
    return np.allclose(canonical_form(a), canonical_form(b), atol=1e-12)


def fit(u):
    return DecayFit(B=1.0, u=u, u_variance=0.0, residual_sum_sq=0.0, points_used=10, method="nonlinear")


def test_native_gate_validation():
    assert NativeGate("cx").n == 2
    assert NativeGate("u3", (1, 2, 3)).n == 1
    with pytest.raises(ValueError):
        NativeGate("u2", (1.0,))
    with pytest.raises(ValueError):
        NativeGate("rz", ())
    assert NativeGate.default("u2").angles == (0.0, math.pi)


def test_native_unitary_examples():
    np.testing.assert_allclose(native_unitary(NativeGate("id")), np.eye(2))
    assert phase_equal(native_unitary(NativeGate("u2", (0, math.pi))), H)
    assert phase_equal(native_unitary(NativeGate("u3", (math.pi, 0, math.pi))), X)
    np.testing.assert_allclose(native_unitary(NativeGate("cx")), CNOT_01)


@given(st.floats(-7, 7), st.floats(-7, 7), st.floats(-7, 7))
def test_u3_is_unitary(theta, phi, lam):
    assert is_unitary(native_unitary(NativeGate("u3", (theta, phi, lam))), 1e-12)


def test_builtin_specs_match_reference():
    for name in BUILTIN_SPECS:
        spec = load_backend_spec(name)
        for gate, u in REFERENCE_U[name].items():
            assert spec.noise_for(gate).p ** 2 == pytest.approx(u, abs=1e-12)


def test_load_spec_example(tmp_path):
    path = tmp_path / "b.yaml"
    path.write_text("backend: demo\ngates:\n  cx: {model: depolarizing, p: 0.9859}\n")
    spec = load_backend_spec(path)
    assert spec.backend == "demo"
    assert spec.noise_for("cx").p ** 2 == pytest.approx(0.9720, abs=1e-4)
    with pytest.raises(MissingGateError):
        spec.noise_for("u3")


def test_load_spec_errors(tmp_path):
    with pytest.raises(SpecNotFoundError):
        load_backend_spec(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"backend": "x", "gates": {"cx": {"model": "depolarizing", "p": 1.2}}}))
    with pytest.raises(SpecRangeError):
        load_backend_spec(bad)
    bad.write_text("{not yaml: [")
    with pytest.raises(SpecSchemaError):
        load_backend_spec(bad)


@pytest.mark.parametrize(
    "data",
    [
        [],
        {"gates": {"cx": {"p": 0.9}}},
        {"backend": "x", "gates": {}},
        {"backend": "x", "gates": {"swap": {"p": 0.9}}},
        {"backend": "x", "gates": {"cx": {"model": "amplitude_damping", "p": 0.9}}},
        {"backend": "x", "gates": {"cx": {"p": "high"}}},
        {"backend": "x", "gates": {"cx": {"p": 0.9, "t1": 5}}},
        {"backend": "x", "gates": {"cx": {"p": 0.9}}, "qubits": 5},
    ],
)
def test_schema_violations(data):
    with pytest.raises(SpecSchemaError):
        parse_backend_spec(data)


def test_sequence_structure():
    noise = depolarizing(1, 0.9)
    g = NativeGate("u3", (0.1, 0.2, 0.3))
    seq = compose_ngurb_sequence(g, 1, noise)
    assert len(seq) == 2 and isinstance(seq.elements[0], Unitary) and seq.elements[1] is noise
    for m in (1, 4, 7):
        seq = compose_ngurb_sequence(g, m, noise)
        assert sum(el is noise for el in seq.elements) == m
        assert len(seq) == 3 * m - 1
    with pytest.raises(ValueError):
        compose_ngurb_sequence(g, 0, noise)
    with pytest.raises(ValueError):
        compose_ngurb_sequence(NativeGate("cx"), 2, noise)


def test_noiseless_cx_parity():
    ident = QuantumChannel((np.eye(4),))
    cx = NativeGate("cx")
    odd = compose_ngurb_sequence(cx, 3, ident).to_channel()
    even = compose_ngurb_sequence(cx, 2, ident).to_channel()
    assert phase_equal(odd.kraus[0], CNOT_01)
    assert phase_equal(even.kraus[0], np.eye(4))


def test_run_ngurb_identity_gate_noiseless():
    spec = BackendNoiseSpec("ideal", {"id": GateNoise("depolarizing", 1.0)})
    run = run_ngurb(NativeGate("id"), spec, EXACT)
    assert abs(run.fit.u - 1) < 1e-12


@pytest.mark.parametrize("name", ["id", "u2", "u3", "cx"])
def test_gate_independence_exact(name):
    p = 0.97
    spec = BackendNoiseSpec("flat", {name: GateNoise("depolarizing", p)})
    run = run_ngurb(NativeGate.default(name), spec, EXACT)
    assert abs(run.fit.u - p * p) < 1e-9


def test_angle_independence_exact():
    spec = BackendNoiseSpec("flat", {"u3": GateNoise("depolarizing", 0.95)})
    a = run_ngurb(NativeGate("u3", (0.3, 1.1, -0.4)), spec, EXACT)
    b = run_ngurb(NativeGate("u3", (2.0, 0.0, 0.7)), spec, EXACT)
    assert abs(a.fit.u - b.fit.u) < 1e-9


def test_run_ngurb_sets_qubit_count():
    spec = load_backend_spec("melbourne-like")
    run = run_ngurb(NativeGate("cx"), spec, EXACT)
    assert run.config.n == 2
    assert abs(run.fit.u - REFERENCE_U["melbourne-like"]["cx"]) < 1e-9


def test_run_ngurb_sampled_examples():
    spec = load_backend_spec("burlington-like")
    cfg = UrbConfig(depths=tuple(range(5, 51, 5)), iterations=15, samples=5, shots=1024, seed=21)
    run = run_ngurb(NativeGate.default("u2"), spec, cfg)
    assert abs(run.fit.u - 0.9987) < 0.002
    mel = run_ngurb(NativeGate("cx"), load_backend_spec("melbourne-like"), cfg)
    assert abs(mel.fit.u - 0.9304) < 0.01


def test_run_ngurb_deterministic():
    spec = load_backend_spec("burlington-like")
    cfg = UrbConfig(depths=(5, 10, 15), iterations=3, samples=2, shots=512, seed=2)
    a = run_ngurb(NativeGate("cx"), spec, cfg)
    b = run_ngurb(NativeGate("cx"), spec, cfg, workers=2)
    assert a.records == b.records


def test_crosstalk_examples():
    for name, expected in [("burlington-like", 0.0256), ("melbourne-like", 0.0655)]:
        rep = crosstalk_report({g: fit(u) for g, u in REFERENCE_U[name].items()})
        assert rep.deficit == pytest.approx(expected, abs=5e-4)
        assert rep.single_qubit_min_gate == "u3"
        assert rep.significant
    rep = crosstalk_report({g: fit(1.0) for g in ("id", "u2", "u3", "cx")})
    assert rep.deficit == 0 and not rep.significant


def test_crosstalk_requires_fits():
    with pytest.raises(MissingGateError):
        crosstalk_report({"id": fit(0.99)})
    with pytest.raises(MissingGateError):
        crosstalk_report({"cx": fit(0.99)})


@given(st.floats(0.5, 1.0), st.floats(0.5, 1.0))
def test_deficit_antitone_in_cx(a, b):
    lo, hi = sorted((a, b))
    singles = {"u2": fit(0.999), "u3": fit(0.998)}
    d_lo = crosstalk_report({**singles, "cx": fit(lo)}).deficit
    d_hi = crosstalk_report({**singles, "cx": fit(hi)}).deficit
    assert d_lo >= d_hi
