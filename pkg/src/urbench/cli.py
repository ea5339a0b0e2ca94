"""Command-line entry point: ``urbench {murb,ngurb,theory}``.

Experiment config (YAML or JSON)::

    mode: murb                 # murb | ngurb | theory
    n: 1
    depths: [1, 2, 3]          # or {start: 5, stop: 50, step: 5}, stop inclusive
    iterations: 15
    samples: 5
    shots: 1024                # 0 = exact expectations
    seed: 7
    include_identity: true
    fit_method: nonlinear      # or log-linear
    repetitions: 1
    noise: {kind: depolarizing, n: 1, p: 0.9}      # murb / theory
    backend: burlington-like   # ngurb: builtin name or path to a spec file
    gates: [id, u2, u3, cx]    # ngurb
    u2_angles: [0, pi]
    u3_angles: [pi/2, pi/4, pi/8]
    crosstalk_threshold: 0.01
    p_rb: 0.9                  # theory: RB decay for the diamond bounds
    out: results/dep09

Channel specs: ``depolarizing {n, p}``, ``bit_flip {p}``,
``mixed_unitary {terms: [{p, unitary}, ...]}`` and ``unitary {unitary}``,
where a unitary is a name (Pauli label, ``H``, ``S``, ``CNOT``) or a nested
list of numbers / complex strings.
"""

from __future__ import annotations

import argparse
import ast
import csv
import io
import json
import logging
import math
import operator
import os
import shutil
import sys
import tempfile
from dataclasses import asdict, dataclass, fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .channels import (
    ChannelError,
    QuantumChannel,
    avg_gate_fidelity,
    bit_flip,
    depolarizing,
    diamond_bounds,
    fidelity_unitarity_bound,
    mixed_unitary,
    unital_block,
    unitarity,
    unitarity_bitflip_closed,
    unitarity_depolarizing_closed,
    unitarity_pauli_sum,
    unitary_channel,
)
from .clifford import generate_group
from .ng_urb import (
    CROSSTALK_THRESHOLD,
    DEFAULT_U2_ANGLES,
    DEFAULT_U3_ANGLES,
    NATIVE_GATES,
    BUILTIN_SPECS,
    BackendSpecError,
    NativeGate,
    crosstalk_report,
    load_backend_spec,
    run_ngurb,
)
from .pauli import CNOT_01, CNOT_10, H, S, check_label, pauli_matrix
from .urb import FitError, UrbConfig, UrbRun, run_murb

log = logging.getLogger("urbench")

MODES = ("murb", "ngurb", "theory")
TABLE_LABELS = {
    "id": "Identity ('id')",
    "u2": "Single-Qubit ('u2')",
    "u3": "Single-Qubit ('u3')",
    "cx": "Two-Qubit ('cx')",
}
_URB_KEYS = {f.name for f in fields(UrbConfig)} - {"noise"}
_OTHER_KEYS = {
    "mode", "noise", "backend", "gates", "u2_angles", "u3_angles",
    "crosstalk_threshold", "out", "repetitions", "workers", "p_rb",
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- parsing helpers

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}


def parse_angle(value) -> float:
    """A number or a small arithmetic expression in ``pi`` (e.g. ``"pi/2"``)."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        raise ValueError

    try:
        return ev(ast.parse(str(value).strip(), mode="eval"))
    except (SyntaxError, ValueError, ZeroDivisionError):
        raise ConfigError(f"cannot parse angle {value!r}") from None


def parse_angles(value, count: int, what: str) -> tuple[float, ...]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    if not isinstance(value, (list, tuple)) or len(value) != count:
        raise ConfigError(f"{what} needs {count} angle(s)")
    return tuple(parse_angle(v) for v in value)


def parse_depths(value) -> tuple[int, ...]:
    if isinstance(value, dict):
        try:
            start, stop = int(value["start"]), int(value["stop"])
            step = int(value.get("step", 1))
        except (KeyError, TypeError, ValueError):
            raise ConfigError("depth range needs integer 'start', 'stop' and optional 'step'") from None
        if step < 1:
            raise ConfigError("depth step must be positive")
        return tuple(range(start, stop + 1, step))
    if isinstance(value, (list, tuple)) and all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        return tuple(value)
    raise ConfigError("depths must be a list of integers or a {start, stop, step} range")


_NAMED_UNITARIES = {"H": H, "S": S, "CNOT": CNOT_01, "CNOT_01": CNOT_01, "CNOT_10": CNOT_10}


def parse_unitary(value) -> np.ndarray:
    if isinstance(value, str):
        if value in _NAMED_UNITARIES:
            return _NAMED_UNITARIES[value]
        try:
            return pauli_matrix(check_label(value))
        except ValueError:
            raise ConfigError(f"unknown unitary name {value!r}") from None
    try:
        rows = [[complex(str(x).replace(" ", "")) if isinstance(x, str) else complex(x) for x in row] for row in value]
        return np.array(rows, dtype=complex)
    except (TypeError, ValueError):
        raise ConfigError(f"cannot parse unitary {value!r}") from None


def build_channel(spec) -> QuantumChannel:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("channel spec must be a mapping with a 'kind'")
    kind = spec["kind"]
    try:
        if kind == "depolarizing":
            return depolarizing(int(spec.get("n", 1)), float(spec["p"]))
        if kind == "bit_flip":
            return bit_flip(float(spec["p"]))
        if kind == "mixed_unitary":
            terms = [(float(t["p"]), parse_unitary(t["unitary"])) for t in spec["terms"]]
            return mixed_unitary(terms)
        if kind == "unitary":
            return unitary_channel(parse_unitary(spec["unitary"]))
    except KeyError as exc:
        raise ConfigError(f"channel spec {kind!r} is missing {exc}") from None
    except (ChannelError, ValueError) as exc:
        raise ConfigError(f"invalid {kind} channel: {exc}") from None
    raise ConfigError(f"unknown channel kind {kind!r}")


# ---------------------------------------------------------------- config


def _resolve_backend(name: str, base_dir: Path) -> str:
    """Builtin names pass through; relative paths are tried next to the config first."""
    if name in BUILTIN_SPECS or Path(name).is_absolute():
        return name
    local = base_dir / name
    return str(local) if local.exists() else name


@dataclass
class ExperimentConfig:
    mode: str
    urb: UrbConfig
    noise: dict | None = None
    backend: str | None = None
    gates: tuple[str, ...] = ("id", "u2", "u3", "cx")
    u2_angles: tuple[float, ...] = DEFAULT_U2_ANGLES
    u3_angles: tuple[float, ...] = DEFAULT_U3_ANGLES
    crosstalk_threshold: float = CROSSTALK_THRESHOLD
    out: Path = Path("results")
    repetitions: int = 1
    workers: int = 1
    p_rb: float | None = None
    out_given: bool = False

    def echo(self) -> dict:
        """Every setting that can influence results (no paths, no worker count)."""
        urb = asdict(self.urb)
        urb["depths"] = list(urb["depths"])
        out = {"mode": self.mode, **urb, "noise": self.noise, "repetitions": self.repetitions}
        if self.mode == "ngurb":
            out.update(
                backend=self.backend,
                gates=list(self.gates),
                u2_angles=list(self.u2_angles),
                u3_angles=list(self.u3_angles),
                crosstalk_threshold=self.crosstalk_threshold,
            )
            out.pop("noise")
        return out


def load_config(path, mode: str, overrides: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    return config_from_dict(raw, mode, overrides, base_dir=path.parent)


def config_from_dict(raw: dict, mode: str, overrides: dict | None = None, base_dir=Path(".")) -> ExperimentConfig:
    raw = dict(raw)
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
    unknown = set(raw) - _URB_KEYS - _OTHER_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if raw.get("mode", mode) != mode:
        raise ConfigError(f"config is for mode {raw['mode']!r}, not {mode!r}")

    urb_kwargs = {k: raw[k] for k in _URB_KEYS if k in raw}
    if "depths" in urb_kwargs:
        urb_kwargs["depths"] = parse_depths(urb_kwargs["depths"])
    for k in ("n", "iterations", "samples", "shots", "seed"):
        if k in urb_kwargs and (isinstance(urb_kwargs[k], bool) or not isinstance(urb_kwargs[k], int)):
            raise ConfigError(f"{k} must be an integer")
    if urb_kwargs.get("seed", 0) < 0:
        raise ConfigError("seed must be non-negative")
    noise = raw.get("noise")
    if mode in ("murb", "theory"):
        if noise is None:
            raise ConfigError(f"mode {mode} needs a 'noise' channel spec")
        ch = build_channel(noise)
        urb_kwargs.setdefault("n", ch.n)
        if ch.n != urb_kwargs["n"]:
            raise ConfigError(f"noise acts on {ch.n} qubit(s) but n = {urb_kwargs['n']}")
    try:
        urb = UrbConfig(noise=noise, **urb_kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid experiment parameters: {exc}") from None

    cfg = ExperimentConfig(mode=mode, urb=urb, noise=noise)
    if mode == "ngurb":
        if "backend" not in raw:
            raise ConfigError("mode ngurb needs a 'backend' spec")
        cfg.backend = _resolve_backend(str(raw["backend"]), Path(base_dir))
        gates = raw.get("gates", list(cfg.gates))
        if not isinstance(gates, list) or not gates or any(g not in NATIVE_GATES for g in gates):
            raise ConfigError(f"gates must be a non-empty list drawn from {sorted(NATIVE_GATES)}")
        cfg.gates = tuple(gates)
        cfg.u2_angles = parse_angles(raw.get("u2_angles", list(DEFAULT_U2_ANGLES)), 2, "u2_angles")
        cfg.u3_angles = parse_angles(raw.get("u3_angles", list(DEFAULT_U3_ANGLES)), 3, "u3_angles")
        cfg.crosstalk_threshold = float(raw.get("crosstalk_threshold", CROSSTALK_THRESHOLD))
    reps = raw.get("repetitions", 1)
    if isinstance(reps, bool) or not isinstance(reps, int) or reps < 1:
        raise ConfigError("repetitions must be a positive integer")
    cfg.repetitions = reps
    workers = raw.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers must be a positive integer")
    cfg.workers = workers
    if raw.get("p_rb") is not None:
        cfg.p_rb = float(raw["p_rb"])
    cfg.out_given = "out" in raw
    cfg.out = Path(raw.get("out", Path("results") / mode))
    return cfg


# ---------------------------------------------------------------- output


def _fmt(x) -> str:
    return repr(float(x))


def records_csv(run: UrbRun) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["depth", "iteration", "sample", "shifted_purity"])
    for r in run.records:
        w.writerow([r.depth, r.iteration, r.sample, _fmt(r.value)])
    return buf.getvalue()


def plot_csv(run: UrbRun) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["depth", "mean_shifted_purity", "fitted"])
    B, u = run.fit.B, run.fit.u
    for m, q in run.points:
        w.writerow([m, _fmt(q), _fmt(B * u ** (m - 1))])
    return buf.getvalue()


def repetition_seed(seed: int, rep: int) -> int:
    if rep == 0:
        return seed
    return int(np.random.SeedSequence([seed, rep]).generate_state(1, np.uint64)[0])


def summary(runs: list[UrbRun], cfg: ExperimentConfig, extra: dict | None = None) -> dict:
    fit = runs[0].fit
    us = [r.fit.u for r in runs]
    out = {
        "tool": "urbench",
        "version": __version__,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "seed": runs[0].config.seed,
        "u": fit.u,
        "B": fit.B,
        "u_variance": fit.u_variance,
        "u_variance_across_repetitions": float(np.var(us, ddof=1)) if len(runs) > 1 else None,
        "low_signal": fit.low_signal,
        "fit": {
            "method": fit.method,
            "weights": "unweighted",
            "points_used": fit.points_used,
            "residual_sum_sq": fit.residual_sum_sq,
        },
        "repetitions": [
            {"repetition": i, "seed": r.config.seed, "u": r.fit.u, "B": r.fit.B}
            for i, r in enumerate(runs)
        ],
        "config": cfg.echo(),
    }
    if extra:
        out.update(extra)
    return out


def _json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=False) + "\n"


def write_outputs(out_dir: Path, files: dict[str, str]) -> None:
    """Write every file or none.

    Files are staged in a sibling temp dir.  A new ``out_dir`` is created by a
    single rename; into an existing one files are renamed one by one and the
    previous contents restored if any rename fails.
    """
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.staging-", dir=out_dir.parent))
    try:
        for rel, text in files.items():
            p = staging / rel
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(text)
        if not out_dir.exists():
            os.replace(staging, out_dir)
            return
        _merge(staging, out_dir, files)
    finally:
        shutil.rmtree(staging, ignore_errors=True)


def _merge(staging: Path, out_dir: Path, files) -> None:
    backup = staging / ".previous"
    done: list[tuple[Path, Path | None]] = []
    try:
        for i, rel in enumerate(files):
            dest = out_dir / rel
            dest.parent.mkdir(parents=True, exist_ok=True)
            saved = None
            if dest.exists():
                saved = backup / str(i)
                saved.parent.mkdir(exist_ok=True)
                os.replace(dest, saved)
            done.append((dest, saved))
            os.replace(staging / rel, dest)
    except BaseException:
        for dest, saved in reversed(done):
            try:
                if saved is not None and saved.exists():
                    os.replace(saved, dest)
                elif saved is None:
                    dest.unlink(missing_ok=True)
            except OSError:
                log.error("could not restore %s", dest)
        raise


def run_files(runs: list[UrbRun], cfg: ExperimentConfig, prefix: str = "", extra: dict | None = None) -> dict[str, str]:
    return {
        f"{prefix}records.csv": records_csv(runs[0]),
        f"{prefix}plot.csv": plot_csv(runs[0]),
        f"{prefix}fit.json": _json(summary(runs, cfg, extra)),
    }


# ---------------------------------------------------------------- commands


def _repeat(fn, cfg: ExperimentConfig) -> list[UrbRun]:
    return [fn(replace(cfg.urb, seed=repetition_seed(cfg.urb.seed, r))) for r in range(cfg.repetitions)]


def _murb_files(cfg: ExperimentConfig) -> dict[str, str]:
    noise = build_channel(cfg.noise)
    group = generate_group(cfg.urb.n)
    runs = _repeat(lambda c: run_murb(group, noise, c, workers=cfg.workers), cfg)
    fit = runs[0].fit
    print(f"m-URB {noise.label}: u = {fit.u:.6f} (B = {fit.B:.6f}, var = {fit.u_variance:.3g})"
          + ("  [low signal]" if fit.low_signal else ""))
    return run_files(runs, cfg)


def _ngurb_files(cfg: ExperimentConfig) -> dict[str, str]:
    spec = load_backend_spec(cfg.backend)
    gates = [NativeGate.default(g, cfg.u2_angles, cfg.u3_angles) for g in cfg.gates]
    for g in gates:
        spec.noise_for(g.name)  # fail before running anything
    files: dict[str, str] = {}
    fits = {}
    for g in gates:
        runs = _repeat(lambda c: run_ngurb(g, spec, c, workers=cfg.workers), cfg)
        fits[g.name] = runs[0].fit
        extra = {"gate": g.name, "angles": list(g.angles), "backend": spec.backend,
                 "noise": asdict(spec.noise_for(g.name))}
        files.update(run_files(runs, cfg, prefix=f"{g.name}/", extra=extra))
        print(f"Ng-URB {spec.backend} {g.name}: u = {fits[g.name].u:.6f}")
    has_single = any(NATIVE_GATES[name][0] == 1 for name in fits)
    if "cx" in fits and has_single:
        rep = crosstalk_report(fits, cfg.crosstalk_threshold)
        table = [
            {"gate": name, "label": TABLE_LABELS[name], "u": u, "u_variance": var}
            for name, (u, var) in rep.gates.items()
        ]
        files["crosstalk_report.json"] = _json({
            "backend": spec.backend,
            "table": table,
            "single_qubit_min": rep.single_qubit_min,
            "single_qubit_min_gate": rep.single_qubit_min_gate,
            "cx_unitarity": rep.cx_unitarity,
            "deficit": rep.deficit,
            "threshold": rep.threshold,
            "significant": rep.significant,
        })
        print(f"cross-talk deficit {rep.deficit:.6f} -> {'significant' if rep.significant else 'not significant'}")
    else:
        log.warning("no cross-talk report: needs 'cx' and at least one single-qubit gate")
    return files


def theory_report(ch: QuantumChannel, spec: dict, p_rb: float | None = None) -> dict:
    out = {
        "channel": spec,
        "n": ch.n,
        "u": unitarity(ch),
        "u_pauli_sum": unitarity_pauli_sum(ch),
        "closed_form": None,
        "F_avg": None,
        "bound_holds": None,
        "bound_slack": None,
        "diamond_bounds": None,
        "unital_block": unital_block(ch.ptm).tolist(),
    }
    kind = spec.get("kind")
    if kind == "depolarizing":
        out["closed_form"] = unitarity_depolarizing_closed(ch.n, float(spec["p"]))
    elif kind == "bit_flip":
        out["closed_form"] = unitarity_bitflip_closed(float(spec["p"]))
    if ch.trace_preserving:
        out["F_avg"] = avg_gate_fidelity(ch)
        out["bound_holds"], out["bound_slack"] = fidelity_unitarity_bound(ch)
    if p_rb is not None:
        b = diamond_bounds(p_rb, out["u"], ch.dim)
        out["diamond_bounds"] = {"p_rb": p_rb, "lower": b.lower, "upper": b.upper}
    return out


def _theory_files(cfg: ExperimentConfig) -> dict[str, str]:
    ch = build_channel(cfg.noise)
    try:
        report = theory_report(ch, cfg.noise, cfg.p_rb)
    except ChannelError as exc:
        raise ConfigError(str(exc)) from None
    text = _json(report)
    sys.stdout.write(text)
    return {"theory.json": text}


_BUILDERS = {"murb": _murb_files, "ngurb": _ngurb_files, "theory": _theory_files}
_ERRORS = (ConfigError, BackendSpecError, FitError, ChannelError)


def _execute(mode: str, make_cfg) -> int:
    """Build the config, run, write outputs atomically; map failures to exit codes."""
    try:
        cfg = make_cfg()
        files = _BUILDERS[mode](cfg)
        if mode != "theory" or cfg.out_given:
            write_outputs(cfg.out, files)
            log.info("wrote %d file(s) to %s", len(files), cfg.out)
    except _ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_murb(config, **overrides) -> int:
    """Run m-URB from a config file; keyword overrides replace config keys."""
    return _execute("murb", lambda: load_config(config, "murb", overrides))


def cmd_ngurb(config, **overrides) -> int:
    return _execute("ngurb", lambda: load_config(config, "ngurb", overrides))


def cmd_theory(channel, p_rb: float | None = None, out=None) -> int:
    """Exact figures of merit for ``channel`` (a spec mapping or its JSON text)."""

    def make():
        spec = channel
        if isinstance(spec, str):
            try:
                spec = json.loads(spec)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"channel spec is not valid JSON: {exc}") from None
        raw = {"noise": spec, "p_rb": p_rb}
        if out is not None:
            raw["out"] = str(out)
        return config_from_dict(raw, "theory")

    return _execute("theory", make)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="urbench", description="Unitarity randomized benchmarking on simulated noise.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", type=Path, help="experiment config (YAML/JSON)")
        p.add_argument("--out", type=Path, help="output directory")
        if mode == "theory":
            p.add_argument("--channel", help="inline channel spec as JSON, e.g. '{\"kind\": \"bit_flip\", \"p\": 0.9}'")
            p.add_argument("--p-rb", type=float, help="RB decay parameter for diamond bounds")
            continue
        p.add_argument("--seed", type=int)
        p.add_argument("--shots", type=int)
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
        p.add_argument("--repetitions", type=int)
        if mode == "ngurb":
            p.add_argument("--u2-angles", help="phi,lambda (accepts pi expressions)")
            p.add_argument("--u3-angles", help="theta,phi,lambda")
            p.add_argument("--crosstalk-threshold", type=float)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("mode", "config", "verbose", "channel")}
    if overrides.get("out") is not None:
        overrides["out"] = str(overrides["out"])
    if args.mode == "theory" and args.channel:
        return cmd_theory(args.channel, p_rb=args.p_rb, out=args.out)
    if args.config is None:
        hint = " (or --channel)" if args.mode == "theory" else ""
        print(f"error: --config is required{hint}", file=sys.stderr)
        return 2
    return _execute(args.mode, lambda: load_config(args.config, args.mode, overrides))


if __name__ == "__main__":
    sys.exit(main())
