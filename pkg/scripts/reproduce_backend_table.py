"""Native-gate URB on the built-in synthetic backends: per-gate unitarity table and cross-talk flag.

    python scripts/reproduce_backend_table.py --seed 1 --out results/backends.json
"""

import argparse
import json
from pathlib import Path

from urbench.ng_urb import BUILTIN_SPECS, NativeGate, crosstalk_report, load_backend_spec, run_ngurb
from urbench.urb import UrbConfig

LABELS = {"id": "Identity ('id')", "u2": "Single-Qubit ('u2')", "u3": "Single-Qubit ('u3')", "cx": "Two-Qubit ('cx')"}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--backends", nargs="+", default=list(BUILTIN_SPECS))
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--shots", type=int, default=1024)
    ap.add_argument("--iterations", type=int, default=15)
    ap.add_argument("--samples", type=int, default=5)
    ap.add_argument("--threshold", type=float, default=0.01)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    cfg = UrbConfig(
        depths=tuple(range(5, 51, 5)),
        iterations=args.iterations,
        samples=args.samples,
        shots=args.shots,
        seed=args.seed,
    )
    table, reports = {}, {}
    for backend in args.backends:
        spec = load_backend_spec(backend)
        fits = {g: run_ngurb(NativeGate.default(g), spec, cfg, workers=args.workers).fit for g in LABELS}
        table[spec.backend] = {g: f.u for g, f in fits.items()}
        rep = crosstalk_report(fits, args.threshold)
        reports[spec.backend] = {"deficit": rep.deficit, "significant": rep.significant}

    names = list(table)
    print(f"{'Gate':<22}" + "".join(f"{n:>18}" for n in names))
    for g, label in LABELS.items():
        print(f"{label:<22}" + "".join(f"{table[n][g]:18.6f}" for n in names))
    print(f"{'cx deficit':<22}" + "".join(f"{reports[n]['deficit']:18.4f}" for n in names))
    print(f"{'cross-talk flagged':<22}" + "".join(f"{str(reports[n]['significant']):>18}" for n in names))

    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps({"unitarity": table, "crosstalk": reports}, indent=2) + "\n")


if __name__ == "__main__":
    main()
