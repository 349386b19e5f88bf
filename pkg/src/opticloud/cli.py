"""Command-line front-end.

    opticloud <command> --scenario NAME_OR_PATH [--out DIR] [--seed N] [--parallel N]

Commands: convolve, sweep, report, run-cluster, train-toy, eval.  Every run
writes ``manifest.json`` next to its results.  Shipped scenarios can be
named directly; ``$OPTICLOUD_FIXTURES`` points the tool at another fixture
directory.
"""

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import ConfigurationError, OptiCloudError
from .config import load_scenario, scenario_hash
from .experiments import (
    addition_stats,
    bits_sweep,
    first_layer_fidelity,
    kernel_gallery,
    precision_sweep,
    read_vector,
    throughput_table,
    train_mnist_model,
    write_matrix,
    write_rows,
)

__all__ = ["main", "build_parser", "RunManifest"]


class RunManifest:
    def __init__(self, scenario, command):
        self.scenario = scenario
        self.command = command
        self.outputs = {}
        self._t0 = time.perf_counter()

    def add(self, name, path):
        self.outputs[name] = str(path)
        return path

    def as_dict(self):
        return {
            "scenario": self.scenario.name,
            "scenario_hash": scenario_hash(self.scenario),
            "command": self.command,
            "tool_version": __version__,
            "outputs": dict(sorted(self.outputs.items())),
            "wall_clock_s": round(time.perf_counter() - self._t0, 3),
        }

    def write(self, out_dir):
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n")
        return path


def _write_json(path, data):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return Path(path)


def _parse_values(text):
    values = [float(v) for v in text.split(",") if v.strip()]
    if not values:
        raise ConfigurationError("sweep range is empty")
    return values


# --------------------------------------------------------------------------
# commands


def cmd_convolve(sc, out, args, manifest):
    from .convnet.conv2d import correlate_rows_on_opu
    from .convnet.idx import load_mnist
    from .convnet.serialize import fixture_root, load_kernels
    from .opu import measure_enob

    section = sc.convolve
    if section is None:
        raise ConfigurationError("convolve: section missing from scenario")
    config = sc.opu.build(sc.seed)
    if section.kernel is not None:
        kernel = np.asarray(section.kernel)
        if section.input is not None:
            x = np.asarray(section.input, dtype=float)
        else:
            x = read_vector(section.input_csv)
        if len(x) < len(kernel):
            raise ConfigurationError("convolve.input: shorter than convolve.kernel")
        if x.min() < 0 or x.max() > 1:
            raise ConfigurationError("convolve.input: values must lie in [0, 1]")
        ideal = correlate_rows_on_opu(config, x, kernel, mode="ideal")[0]
        noisy = correlate_rows_on_opu(config, x, kernel, mode="noisy", job_id=sc.seed)[0]
        manifest.add("ideal", write_matrix(out / "ideal.csv", ideal[:, None]))
        manifest.add("noisy", write_matrix(out / "noisy.csv", noisy[:, None]))
        trace = [{"sample": i, "ideal": a, "noisy": b} for i, (a, b) in enumerate(zip(ideal, noisy))]
        manifest.add("trace", write_rows(out / "trace.csv", trace))
        err = noisy - ideal
        full_scale = float(np.abs(kernel).sum())
        stats = [{
            "outputs": len(ideal),
            "rmse": float(np.sqrt(np.mean(err**2))),
            "max_abs_error": float(np.abs(err).max()),
            "rmse_fs": float(np.sqrt(np.mean(err**2)) / full_scale),
            "enob": measure_enob(err / full_scale, 1.0) if len(err) > 1 else float("nan"),
        }]
        manifest.add("stats", write_rows(out / "stats.csv", stats))
        return 0

    kernels = load_kernels(Path(fixture_root()) / section.kernel_set)
    split, _, index = (section.image or "mnist:test:0").partition(":")[2].partition(":")
    image = load_mnist(split or "test", limit=int(index or 0) + 1)[0][int(index or 0)]
    pool = [config] * 3
    gallery = kernel_gallery(pool, image, kernels)
    summary = []
    for name, item in gallery.items():
        manifest.add(name, write_matrix(out / "maps" / f"{name}.csv", item["noisy"]))
        summary.append({"kernel": name, "rmse": item["rmse"], "rmse_fs": item["rmse_fs"],
                        "sigma": config.sigma})
    manifest.add("rmse_summary", write_rows(out / "rmse_summary.csv", summary))
    return 0


def cmd_sweep(sc, out, args, manifest):
    axis = args.axis or (sc.sweep.axis if sc.sweep else None)
    if axis is None:
        raise ConfigurationError("sweep.axis: not given on the command line or in the scenario")
    if args.values is not None:
        values = _parse_values(args.values)
    elif sc.sweep is not None:
        values = list(sc.sweep.values)
    else:
        raise ConfigurationError("sweep.values: empty range")
    trials = sc.sweep.trials if sc.sweep else 4096

    if axis == "baud":
        rows = precision_sweep(sc.opu.build(sc.seed), values, trials, sc.seed, args.parallel)
    elif axis == "rop":
        from .link import attenuation_sweep

        link, pam, fec = sc.link.build()
        rng = np.random.default_rng(sc.seed)
        payload = rng.integers(0, 256, sc.link.payload_bytes, dtype=np.uint8).tobytes()
        rows = attenuation_sweep(payload, values, link, pam, fec, seed=sc.seed)
    else:
        from .convnet.model import Dataset

        layers = _model_for(sc, args)
        test = Dataset.mnist("test", limit=sc.convnet.test_limit)
        rows = bits_sweep(layers, test, [int(v) for v in values], sc.convnet.seeds, args.parallel)
    manifest.add(f"sweep_{axis}", write_rows(out / f"sweep_{axis}.csv", rows))
    return 0


def cmd_report(sc, out, args, manifest):
    kind = args.kind or ("throughput" if sc.experiment == "throughput" else "power")
    if kind == "power":
        from .energy import (
            BillOfMaterials,
            ComponentPowerTable,
            default_bom,
            default_table,
            power_reports,
            reports_to_csv,
        )

        table = ComponentPowerTable.from_json(sc.energy.power_table) if sc.energy.power_table else default_table()
        bom = BillOfMaterials.from_json(sc.energy.bom) if sc.energy.bom else default_bom()
        reports = power_reports(table, bom, sc.energy.tops)
        manifest.add("power_json", _write_json(out / "power_report.json", [r.as_dict() for r in reports]))
        path = out / "power_report.csv"
        path.write_text(reports_to_csv(reports))
        manifest.add("power_csv", path)
        return 0

    log = Path(sc.throughput.run_log) if sc.throughput.run_log else out / "cluster_report.json"
    achieved = json.loads(log.read_text())["achieved_tops"] if log.exists() else None
    rows = throughput_table(sc.throughput.points, achieved)
    manifest.add("throughput", write_rows(out / "throughput.csv", rows))
    return 0


def _cluster_jobs(sc):
    from .cluster import Job

    rng = np.random.default_rng(sc.seed)
    jobs = []
    for spec in sc.cluster.jobs:
        payload = spec.payload
        if payload is None:
            if spec.payload_shape is None:
                raise ConfigurationError(f"cluster.jobs[{spec.id}]: needs payload or payload_shape")
            payload = rng.uniform(size=spec.payload_shape)
        jobs.append(Job(spec.id, spec.kind, payload, spec.kernel, spec.origin, spec.seed,
                        spec.submit_time))
    gen = sc.cluster.generate
    if gen is not None:
        for i in range(gen.count):
            jobs.append(Job(len(jobs), "conv1d", rng.uniform(size=gen.length), gen.kernel,
                            submit_time=i * gen.submit_interval))
    return jobs


def cmd_run_cluster(sc, out, args, manifest):
    from .cluster import OpuPool, run_cluster, schedule

    link, _, _ = sc.link.build()
    pool = OpuPool((sc.opu.build(sc.seed),) * sc.cluster.opu_count, sc.cluster.reload_penalty)
    jobs = _cluster_jobs(sc)
    assignment = schedule(jobs, pool, link)
    _, report = run_cluster(assignment, pool, jobs, link,
                            parallel=max(args.parallel, sc.cluster.parallel))
    path = out / "cluster_report.json"
    path.write_text(report.to_json())
    manifest.add("report_json", path)
    path = out / "cluster_jobs.csv"
    path.write_text(report.to_csv())
    manifest.add("report_csv", path)
    return 0


def _model_for(sc, args):
    from .convnet.serialize import load_model

    path = args.model or sc.convnet.model
    if path:
        return load_model(path)
    return train_mnist_model(sc.convnet, sc.seed)


def cmd_train_toy(sc, out, args, manifest):
    from .convnet.model import Dataset, evaluate_classifier
    from .convnet.serialize import save_model

    layers = train_mnist_model(sc.convnet, sc.seed)
    out.mkdir(parents=True, exist_ok=True)
    save_model(out / "model.ocnn", layers)
    manifest.add("model", out / "model.ocnn")
    acc, _ = evaluate_classifier(layers, Dataset.mnist("test", limit=sc.convnet.test_limit))
    manifest.add("training", _write_json(out / "training.json", {"float_accuracy": acc}))
    return 0


def cmd_eval(sc, out, args, manifest):
    if sc.experiment == "addition":
        stats = addition_stats(sc.opu.build(sc.seed), trials=sc.sweep.trials if sc.sweep else 4096,
                               seed=sc.seed)
        manifest.add("addition", _write_json(out / "addition.json", stats))
        return 0

    from .convnet.model import Dataset, evaluate_classifier

    layers = _model_for(sc, args)
    test = Dataset.mnist("test", limit=sc.convnet.test_limit)
    pool = [sc.opu.build(sc.seed)] * sc.convnet.opu_count
    if sc.experiment == "first_layer":
        images = test.images[: sc.convnet.fidelity_images]
        rmse = first_layer_fidelity(layers, images, pool)
        data = {"images": len(images), "normalized_rmse": rmse, "baud": sc.opu.baud}
        manifest.add("first_layer", _write_json(out / "first_layer.json", data))
        return 0

    bits = args.bits if args.bits is not None else None
    acc, cm = evaluate_classifier(layers, test, bits=bits,
                                  opus=pool if sc.convnet.use_opu else None, seed=sc.seed)
    data = {"accuracy": acc, "bits": bits, "opu": sc.convnet.use_opu, "samples": len(test)}
    manifest.add("eval", _write_json(out / "eval.json", data))
    manifest.add("confusion", write_matrix(out / "confusion.csv", cm))
    return 0


COMMANDS = {
    "convolve": cmd_convolve,
    "sweep": cmd_sweep,
    "report": cmd_report,
    "run-cluster": cmd_run_cluster,
    "train-toy": cmd_train_toy,
    "eval": cmd_eval,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="opticloud", description="Optical cloud computing simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True, help="scenario JSON path or shipped scenario name")
        p.add_argument("--out", help="output directory (default: scenario output_dir or out/<name>)")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--parallel", type=int, default=1, help="worker threads for sweep points")
        if name == "sweep":
            p.add_argument("--axis", choices=("baud", "rop", "bits"))
            p.add_argument("--values", help="comma-separated sweep points")
        if name in ("sweep", "eval"):
            p.add_argument("--model", help="trained model container to evaluate")
        if name == "eval":
            p.add_argument("--bits", type=int, help="inject noise at this bit depth")
        if name == "report":
            p.add_argument("--kind", choices=("power", "throughput"))
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigurationError("--seed must be an unsigned 64-bit integer")
        if args.parallel < 1:
            raise ConfigurationError("--parallel must be >= 1")
        sc = load_scenario(args.scenario, seed=args.seed)
        out = Path(args.out or sc.output_dir or Path("out") / sc.name)
        out.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(sc, args.command)
        status = COMMANDS[args.command](sc, out, args, manifest)
        manifest.write(out)
    except (OptiCloudError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return status


if __name__ == "__main__":
    sys.exit(main())
