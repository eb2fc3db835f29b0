"""Command-line front end: preprocess -> trace -> train -> eval -> report.

Every command reads an optional flat config file plus flag overrides, writes
its artifacts under the output directory, and finishes by writing
`manifest_<command>.json` listing the input files (with hashes), the effective
configuration hash, and the seed.  Reruns with the same config and seed
produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys


from . import cells, plots
from .config import KEY_SPECS, RunConfig, render_config
from .engine import TransientConfig, transient_solve
from .errors import CapnnError
from .harness import estimate_runtime
from .learning import (
    ClassifierRig,
    RunSummary,
    WeightState,
    compare_report,
    evaluate,
    infer,
    train_class_circuit,
)
from .pipeline import (
    dataset_files,
    export_sd_text,
    load_mnist_csv,
    load_sd_text,
    preprocess_stream,
)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Shared per-command context: config, output directory, manifest."""

    def __init__(self, args):
        flag_values = {k: v for k, v in vars(args).items()
                       if k in KEY_SPECS and v is not None}
        self.config = RunConfig.from_sources(args.config, flag_values)
        self.out = args.out
        self.quiet = args.quiet
        os.makedirs(self.out, exist_ok=True)
        self.inputs: dict = {}
        self.artifacts: dict = {}
        if args.config:
            self.inputs[str(args.config)] = _sha256(args.config)

    def path(self, name) -> str:
        return os.path.join(self.out, name)

    def say(self, message) -> None:
        if not self.quiet:
            print(message)

    def note_input(self, path) -> None:
        # keyed relative to the output directory when inside it, so reruns
        # into differently named directories still produce equal manifests
        rel = os.path.relpath(path, self.out)
        key = str(path) if rel.startswith("..") else rel
        self.inputs[key] = _sha256(path)

    def note_artifact(self, path) -> None:
        self.artifacts[os.path.relpath(path, self.out)] = _sha256(path)

    def write_text(self, name, text) -> str:
        p = self.path(name)
        with open(p, "w") as fh:
            fh.write(text)
        self.note_artifact(p)
        return p

    def finish(self, command) -> None:
        manifest = {
            "command": command,
            "config_hash": self.config.hash,
            "seed": self.config["seed"],
            "inputs": dict(sorted(self.inputs.items())),
            "artifacts": dict(sorted(self.artifacts.items())),
        }
        with open(self.path(f"manifest_{command}.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.write_text(f"config_{command}.txt", render_config(self.config.values))
        self.say(f"{command}: wrote {len(self.artifacts)} artifacts to {self.out}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_preprocess(run: Run) -> None:
    """CSV -> padded 5x5 block means -> paired text files."""
    cfg = run.config
    jobs = [(cfg["mnist_train_csv"], cfg["inputs_path"], cfg["labels_path"])]
    if cfg["mnist_test_csv"]:
        jobs.append((cfg["mnist_test_csv"], cfg["test_inputs_path"],
                     cfg["test_labels_path"]))
    if not jobs[0][0]:
        raise CapnnError("preprocess needs mnist_train_csv (config or flag)")
    for csv_path, inputs_name, labels_name in jobs:
        run.note_input(csv_path)
        files = export_sd_text(preprocess_stream(load_mnist_csv(csv_path)),
                               run.path(inputs_name), run.path(labels_name))
        run.note_artifact(files.inputs_path)
        run.note_artifact(files.labels_path)
        run.say(f"preprocess: {csv_path} -> {files.count} rows")
    run.finish("preprocess")


def cmd_trace(run: Run) -> None:
    """Single-cell step response plus the cascade-vs-single-cell fit study."""
    cfg = run.config
    params = cfg.input_cell()
    step_cfg = TransientConfig(dt=cfg["train_dt"], t_end=cfg["train_duration"],
                               integrator=cfg["integrator"])
    trace = transient_solve(cells.module1_step_netlist(params, cfg["supply"]),
                            step_cfg)
    run.write_text("trace_single.csv", trace.to_csv())
    plots.plot_trace(trace, run.path("trace_single.svg"),
                     title="weight cell, constant drive")
    run.note_artifact(run.path("trace_single.svg"))

    cascade_cfg = TransientConfig(dt=cells.CASCADE_DT, t_end=cells.CASCADE_WINDOW,
                                  integrator=cfg["integrator"])
    ctrace, stim = cells.run_cascade(params, params, cells.CASCADE_STIMULUS,
                                     cascade_cfg)
    run.write_text("trace_cascade.csv", ctrace.to_csv())
    residual, fit_params = cells.single_layer_fit_residual(
        ctrace.times, stim, ctrace.probe("isrc"), return_params=True)
    fit_current, _, _ = cells.single_cell_response(fit_params, ctrace.times,
                                                   stim, linear=True)
    plots.plot_fit_overlay(ctrace.times, ctrace.probe("isrc"), fit_current,
                           residual, run.path("fit_overlay.svg"))
    run.note_artifact(run.path("fit_overlay.svg"))
    run.write_text("fit_residual.csv",
                   "quantity,value\nnormalized_rms,%.17g\n"
                   "fit_r1,%.17g\nfit_r2,%.17g\nfit_r3,%.17g\nfit_c1,%.17g\n"
                   % (residual, fit_params.r1, fit_params.r2,
                      fit_params.r3, fit_params.c1))
    run.say(f"trace: cascade fit residual {residual:.4g}")
    run.finish("trace")


def _load_split(run: Run, inputs_key, labels_key):
    files = dataset_files(run.path(run.config[inputs_key]),
                          run.path(run.config[labels_key]))
    run.note_input(files.inputs_path)
    run.note_input(files.labels_path)
    return load_sd_text(files)


def cmd_train(run: Run) -> None:
    """One weight file per class, trained on rows_per_class rows each."""
    cfg = run.config
    samples = _load_split(run, "inputs_path", "labels_path")
    topo = cfg.topology()
    rule = cfg.feedback_rule()
    per_class = cfg["rows_per_class"]
    rows = samples if per_class <= 0 else _take_per_class(samples, per_class)
    states = []
    for k in range(cfg["n_classes"]):
        ws = train_class_circuit(k, rows, topo, rule, cfg.train_transient(),
                                 threshold=cfg["threshold"],
                                 duration=cfg["train_duration"],
                                 epochs=cfg["epochs"])
        path = run.path(f"weights_{k}.txt")
        ws.save(path)
        run.note_artifact(path)
        states.append(ws)
        run.say(f"train: class {k} done "
                f"({sum(ws.saturated_flags)}/26 capacitors saturated)")
    plots.plot_weight_heatmap(states, run.path("weights.svg"))
    run.note_artifact(run.path("weights.svg"))
    breakdown = estimate_runtime(cfg.workload(), cfg.timing())
    run.write_text("timing.csv", breakdown.to_csv())
    run.finish("train")


def _take_per_class(samples, per_class):
    """First `per_class` rows of every label, in file order."""
    counts: dict = {}
    kept = []
    for s in samples:
        if counts.get(s.label, 0) < per_class:
            counts[s.label] = counts.get(s.label, 0) + 1
            kept.append(s)
    return kept


def cmd_eval(run: Run) -> None:
    """Response matrix, confusion matrix, and accuracy on the held-out split."""
    cfg = run.config
    test = _load_split(run, "test_inputs_path", "test_labels_path")
    if cfg["eval_rows"] > 0:
        test = test[:cfg["eval_rows"]]
    states = []
    for k in range(cfg["n_classes"]):
        path = run.path(f"weights_{k}.txt")
        run.note_input(path)
        states.append(WeightState.load(path))
    topo = cfg.topology()
    sensor = cfg.sensor()
    transient = cfg.infer_transient()
    rig = ClassifierRig(topo, transient, rule=None)
    labeled = []
    lines = ["row,label," + ",".join(f"circuit{k}" for k in range(len(states)))]
    for row, s in enumerate(test):
        resp = infer(s, states, topo, sensor, transient=transient,
                     threshold=cfg["threshold"], duration=cfg["infer_duration"],
                     rig=rig, readout=cfg["readout"])
        labeled.append((s.label, resp))
        lines.append(f"{row},{s.label}," + ",".join(f"{v:.17g}" for v in resp))
    matrix, metrics = evaluate(labeled, n_classes=cfg["n_classes"])
    run.write_text("responses.csv", "\n".join(lines) + "\n")
    run.write_text("matrix.csv", matrix.to_csv())
    run.write_text("metrics.csv", metrics.to_csv())
    plots.plot_result_matrix(matrix, run.path("matrix.svg"), metrics)
    run.note_artifact(run.path("matrix.svg"))
    run.say(f"eval: top-1 {metrics.top1:.3f}, top-3 {metrics.top3:.3f} "
            f"over {metrics.n_eval} rows")
    run.finish("eval")


def _metrics_from_csv(path) -> dict:
    values = {}
    with open(path) as fh:
        for line in fh:
            key, _, rest = line.strip().partition(",")
            if key in ("top1", "top3"):
                values[key] = float(rest)
    if "top1" not in values or "top3" not in values:
        raise CapnnError(f"{path} lacks top1/top3 rows")
    return values


def cmd_report(run: Run) -> None:
    """Comparison table plus the runtime-breakdown chart."""
    cfg = run.config
    metrics_path = run.path("metrics.csv")
    run.note_input(metrics_path)
    analog_metrics = _metrics_from_csv(metrics_path)
    breakdown = estimate_runtime(cfg.workload(), cfg.timing())
    analog = RunSummary(top1=analog_metrics["top1"],
                        top3=analog_metrics["top3"],
                        runtime_s=breakdown.total)
    baseline = None
    baseline_path = run.path("baseline_metrics.csv")
    if os.path.exists(baseline_path):
        run.note_input(baseline_path)
        bm = _metrics_from_csv(baseline_path)
        baseline_runtime = _baseline_runtime(baseline_path)
        baseline = RunSummary(top1=bm["top1"], top3=bm["top3"],
                              runtime_s=baseline_runtime)
    run.write_text("report.txt", compare_report(analog, baseline))
    run.write_text("timing.csv", breakdown.to_csv())
    plots.plot_timing_breakdown(breakdown, run.path("timing_breakdown.svg"))
    run.note_artifact(run.path("timing_breakdown.svg"))
    sd_share = breakdown.sd_latency / breakdown.total
    run.say(f"report: storage latency is {sd_share:.2%} of the modeled runtime")
    run.finish("report")


def _baseline_runtime(path) -> float:
    with open(path) as fh:
        for line in fh:
            key, _, rest = line.strip().partition(",")
            if key == "runtime_s":
                return float(rest)
    return 0.0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

COMMANDS = {
    "preprocess": cmd_preprocess,
    "trace": cmd_trace,
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capnn",
        description="capacitor-diode analog classifier: simulate, train, report")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", default=None, metavar="PATH",
                       help="flat key = value config file")
        p.add_argument("--out", default=".", metavar="DIR",
                       help="output directory for artifacts")
        p.add_argument("--seed", dest="seed", type=int, default=None,
                       metavar="N", help=KEY_SPECS["seed"][2])
        p.add_argument("--quiet", action="store_true",
                       help="suppress progress output")
        for key, (ctor, default, help_text) in KEY_SPECS.items():
            if key == "seed":
                continue
            p.add_argument(f"--{key.replace('_', '-')}", dest=key,
                           type=ctor, default=None, metavar="V",
                           help=f"{help_text} (default {default})")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = Run(args)
        COMMANDS[args.command](run)
    except (CapnnError, OSError, ValueError) as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)},
                  sys.stderr)
        sys.stderr.write("\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
