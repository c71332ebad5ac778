"""Command-line scenario runner.

``nlcb run SCENARIO.toml`` builds the model, runs the requested
variants and writes, under ``--out``:

* ``modal.csv``: full versus reduced frequencies,
* ``history_<variant>.csv``: probe displacements plus energy terms,
* ``energy.csv``: the energy audit of every variant,
* ``spectrum_<variant>.csv``: FFT amplitudes of global modal amplitudes,
* ``metrics.json``: RMS and peak errors of every variant against ``full``,
* ``manifest.json``: config echo, versions and timings.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np
import scipy
import sklearn
from threadpoolctl import threadpool_limits

from . import __version__
from .partition import partition_model
from .rom import build_rom
from .scenario import (
    VARIANTS,
    ScenarioError,
    full_modes,
    load_scenario,
    modal_amplitudes,
    modal_report,
    parse_probe,
    peak_rel_err,
    rms_rel_err,
    run_variant,
    spectrum,
)
from .tint import NewtonDivergence

ABLATION_FLAGS = {
    "zero_quadratic": "quadratic",
    "zero_quadratic_chi": "quadratic-chi",
    "zero_quadratic_cross": "quadratic-cross",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="nlcb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario file")
    run.add_argument("scenario", help="scenario TOML file, or the name of a bundled scenario")
    run.add_argument("--variant", action="append", choices=VARIANTS, help="variant to run (repeatable)")
    run.add_argument("--probe", action="append", default=[], metavar="NODE:DOF", help="extra probe (repeatable)")
    run.add_argument("--out", default="out", help="output directory")
    run.add_argument("--seed", type=int, default=0, help="recorded in the manifest; the pipeline is deterministic")
    run.add_argument("--threads", type=int, default=1, help="BLAS threads")
    abl = run.add_mutually_exclusive_group()
    abl.add_argument("--zero-quadratic", action="store_true", help="zero the whole quadratic manifold")
    abl.add_argument("--zero-quadratic-chi", action="store_true", help="zero the interface-only quadratic terms")
    abl.add_argument("--zero-quadratic-cross", action="store_true", help="zero the mode/interface coupling terms")
    return parser


def _resolve(path):
    p = Path(path)
    if p.exists():
        return p
    bundled = resources.files("nlcb") / "scenarios" / f"{p.stem}.toml"
    if bundled.is_file():
        return Path(str(bundled))
    return p


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def run(args):
    scenario = load_scenario(_resolve(args.scenario))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ablation = next((v for k, v in ABLATION_FLAGS.items() if getattr(args, k)), "none")
    variants = args.variant or scenario.section("outputs").get("variants", ["full", "linear", "nlcb"])
    timings = {}

    model = scenario.model()
    probes = scenario.probes(model)
    for text in args.probe:
        label, dof = parse_probe(text, model)
        probes[label] = dof
    report_modes = scenario.section("outputs").get("report_modes", 2)
    spec_modes = scenario.section("outputs").get("spectrum_modes", [1, 2, 3])
    f_full, Phi = full_modes(model, max(report_modes, max(spec_modes)))
    f1 = float(f_full[0])

    start = time.perf_counter()
    partition = partition_model(model, scenario.interface_nodes(model))
    rom = build_rom(partition, scenario.n_phi, scenario.interface, method=scenario.method, ablation=ablation)[0]
    timings["rom_build_s"] = time.perf_counter() - start
    _write_csv(
        out / "modal.csv",
        ["mode", "f_full_hz", "f_rom_hz", "error_pct"],
        modal_report(model, rom, report_modes),
    )

    results = {}
    for v in variants:
        res = run_variant(scenario, model, v, f1, ablation=ablation if v == "nlcb" else "none", partition=partition)
        label = v if v != "nlcb" or ablation == "none" else f"nlcb-zero-{ablation}"
        results[label] = res
        timings[f"{label}_build_s"] = res.build_s
        timings[f"{label}_integrate_s"] = res.integrate_s
        cols = res.displacement[:, list(probes.values())] if probes else None
        res.history.to_csv(out / f"history_{label}.csv", probes, values=cols)
        amps = modal_amplitudes(model, Phi[:, [k - 1 for k in spec_modes]], res.displacement)
        dt = res.history.times[1] - res.history.times[0] if len(res.history.times) > 1 else 1.0
        rows = None
        for j, k in enumerate(spec_modes):
            freqs, amp = spectrum(amps[:, j], dt)
            rows = [[f] for f in freqs] if rows is None else rows
            for r, a in zip(rows, amp):
                r.append(float(a))
        _write_csv(out / f"spectrum_{label}.csv", ["f_hz", *[f"mode{k}" for k in spec_modes]], rows)

    energy_rows = []
    for label, res in results.items():
        h = res.history
        for k, t in enumerate(h.times):
            energy_rows.append(
                [label, float(t), float(h.kinetic[k]), float(h.potential[k]), float(h.work_ext[k]),
                 float(h.dissipated[k]), float(h.audit[k])]
            )
    _write_csv(
        out / "energy.csv",
        ["variant", "t", "kinetic", "potential", "work_ext", "dissipated", "audit"],
        energy_rows,
    )

    metrics = []
    ref = results.get("full")
    floor = 1e-9 * np.abs(ref.displacement).max() if ref is not None else 0.0
    for label, res in results.items():
        for name, dof in probes.items():
            y = res.displacement[:, dof]
            rec = {"variant": label, "probe": name, "rms_rel_err": None, "peak_rel_err": None}
            if ref is not None and label != "full" and np.abs(ref.displacement[:, dof]).max() <= floor:
                rec["note"] = "reference vanishes at this probe"
            elif ref is not None and label != "full":
                rec["rms_rel_err"] = rms_rel_err(y, ref.displacement[:, dof])
                rec["peak_rel_err"] = peak_rel_err(y, ref.displacement[:, dof])
            rec["wall_clock_s"] = res.build_s + res.integrate_s
            metrics.append(rec)
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2))

    manifest = {
        "scenario": scenario.name,
        "config": scenario.raw,
        "variants": list(results),
        "ablation": ablation,
        "probes": probes,
        "f1_hz": f1,
        "seed": args.seed,
        "threads": args.threads,
        "argv": sys.argv[1:],
        "versions": {
            "nlcb": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__,
        },
        "timings": timings,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return out


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with threadpool_limits(limits=args.threads):
            out = run(args)
    except ScenarioError as exc:
        print(f"nlcb: invalid scenario: {exc}", file=sys.stderr)
        return 2
    except (NewtonDivergence, RuntimeError, ValueError) as exc:
        print(f"nlcb: run failed: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
