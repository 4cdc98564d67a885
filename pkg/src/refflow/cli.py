"""Command-line entry point.

    refflow gen-data --kind two_moons --n 500 --noise 0.1 --seed 0 --out moons.csv
    refflow sample --config exp.json --beta0 1.0 --set reference.target=0
    refflow composition-sweep --output-dir runs/sweep
    refflow verify --quick
    refflow plot --kind curve --input composition.csv --output composition.svg

Each run subcommand writes CSV tables, SVG plots and a manifest.json into the
output directory. Exit codes: 0 success, 1 invalid input or config, 2 runtime
failure, 3 a verification check failed.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import experiments as ex
from .config import ExperimentConfig, default_output_dir, load_config, parse_value
from .data import gaussians, mnist_binary, read_dataset_csv, two_moons, write_dataset_csv, write_points_csv
from .errors import ConfigError, InputError, RefFlowError
from .guidance import GuidanceSpec, RmgField
from .metrics import (
    CompositionCurve,
    LabeledPrototypes,
    classify,
    composition_sweep,
    hard_filter,
    mixed_reference,
    pairwise_diversity,
    soft_composition,
)
from .models.checkpoint import load_params, save_params
from .models.fm import MlpModel, MlpParams, fm_train
from .models.spg import SpgModel, SpgParams, spg_train
from .plotting import PlotKind, curve_svg, flow_field_svg, image_grid_svg, render, trajectories_svg, write_svg
from .posterior import DataSet, EmpiricalPosterior
from .sampler import derive_seed, euler_sample, flow_field_grid, sample_source

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3
IMAGE_GRID_CELLS = 16


class VerificationFailed(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config_hash: str
    version: str
    config: dict
    outputs: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    duration_seconds: float = 0.0
    complete: bool = False
    error: Optional[str] = None

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path


class Run:
    """Output directory bookkeeping for one subcommand invocation."""

    def __init__(self, command: str, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir) if cfg.output_dir else default_output_dir(command, cfg)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(command, cfg.hash(), __version__, cfg.to_dict())
        self.t0 = time.perf_counter()

    def path(self, name: str) -> Path:
        self.manifest.outputs.append(name)
        return self.out / name

    def finish(self, error: Optional[BaseException] = None) -> Path:
        self.manifest.duration_seconds = time.perf_counter() - self.t0
        self.manifest.complete = error is None
        if error is not None:
            self.manifest.error = f"{type(error).__name__}: {error}"
        return self.manifest.write(self.out)


# ------------------------------------------------------------------ building


def build_dataset(cfg: ExperimentConfig) -> DataSet:
    d = cfg.dataset
    if d.kind == "two_moons":
        return two_moons(d.n, d.noise, d.seed)
    if d.kind == "gaussians":
        return gaussians(d.centers, d.sigma, d.n_per_class, d.seed)
    if d.kind == "mnist_binary":
        return mnist_binary(d.images, d.labels, d.digits, d.max_per_class)
    return read_dataset_csv(d.path)


def build_prototypes(cfg: ExperimentConfig, data: DataSet) -> Optional[LabeledPrototypes]:
    if data.labels is None or data.classes().size < 2:
        return None
    return LabeledPrototypes.from_dataset(data, cfg.metric.prototypes_per_class, cfg.dataset.seed)


def _labeled_subset(data: DataSet, count: int, rng: np.random.Generator) -> DataSet:
    classes = data.classes()
    per = {int(c): count // len(classes) + (1 if i < count % len(classes) else 0) for i, c in enumerate(classes)}
    return ex.stratified_refs(data, per, rng)


def build_reference(cfg: ExperimentConfig, data: DataSet, fraction: Optional[float] = None) -> DataSet:
    r = cfg.reference
    rng = np.random.default_rng(derive_seed(r.seed, 1))
    if r.kind == "file":
        return read_dataset_csv(r.path)
    if r.kind == "dataset":
        return data
    if data.labels is None:
        raise ConfigError("reference.kind", f"{r.kind!r} references need a labeled dataset")
    if r.target not in set(data.labels.tolist()):
        raise ConfigError("reference.target", f"class {r.target} not present in the dataset")
    if r.kind == "class":
        bank = hard_filter(data, r.target)
        size = len(bank) if r.size is None else min(r.size, len(bank))
        return bank.subset(np.sort(rng.choice(len(bank), size, replace=False)))
    labeled = _labeled_subset(data, r.labeled, rng)
    frac = r.fraction if fraction is None else fraction
    return soft_composition(data, labeled, frac, r.target, r.bandwidth, r.method)


def build_base(cfg: ExperimentConfig, data: DataSet, reference: Optional[DataSet]):
    m = cfg.model
    if m.kind == "empirical":
        return EmpiricalPosterior(data)
    if m.kind == "conditioned":
        if reference is None:
            raise ConfigError("model.kind", "this command builds its own references; use the empirical base")
        return EmpiricalPosterior(reference)
    params = load_params(m.checkpoint)
    if m.kind == "mlp":
        if not isinstance(params, MlpParams):
            raise ConfigError("model.kind", "checkpoint does not hold an MLP")
        return MlpModel(params)
    if not isinstance(params, SpgParams):
        raise ConfigError("model.kind", "checkpoint does not hold an SPG model")
    return SpgModel(params, reference if reference is not None else data)


def build_field(cfg: ExperimentConfig, data: DataSet, spec: Optional[GuidanceSpec] = None,
                fraction: Optional[float] = None):
    spec = spec or (cfg.guidance.spec() if cfg.guidance is not None else None)
    needs_ref = spec is not None or cfg.model.kind in ("spg", "conditioned")
    reference = build_reference(cfg, data, fraction) if needs_ref else None
    base = build_base(cfg, data, reference)
    if spec is None:
        return base
    return RmgField(base, reference, spec)


def sweep_spec(cfg: ExperimentConfig) -> GuidanceSpec:
    """Guidance for commands that always guide; the default schedule when none is configured."""
    return cfg.guidance.spec() if cfg.guidance is not None else GuidanceSpec()


def _classes_column(points: np.ndarray, protos: Optional[LabeledPrototypes]) -> Optional[dict]:
    return None if protos is None else {"class": classify(points, protos).tolist()}


def _write_table(path: Path, header: list[str], rows: list) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


# ---------------------------------------------------------------- commands


def cmd_sample(run: Run) -> None:
    cfg = run.cfg
    data = build_dataset(cfg)
    field_ = build_field(cfg, data)
    sc = cfg.sampler
    x0 = sample_source(sc.seed, sc.n_samples, data.dim)
    traj = euler_sample(field_, x0, sc.config())
    protos = build_prototypes(cfg, data)
    write_points_csv(run.path("samples.csv"), traj.final, _classes_column(traj.final, protos))
    side = int(round(np.sqrt(data.dim)))
    if data.dim >= 16 and side * side == data.dim:
        write_svg(run.path("samples.svg"), image_grid_svg(traj.final[:IMAGE_GRID_CELLS], title="samples"))
    if traj.states is not None:
        k = min(sc.trajectories, sc.n_samples)
        rows = [(i, s, float(traj.times[s]), *map(float, traj.states[s, i]))
                for i in range(k) for s in range(len(traj.times))]
        header = ["traj", "step", "t"] + [f"x{j}" for j in range(data.dim)]
        _write_table(run.path("trajectories.csv"), header, rows)
        if data.dim == 2:
            svg = trajectories_svg([traj.states[:, i] for i in range(k)], points=data.points,
                                   title="sample trajectories")
            write_svg(run.path("trajectories.svg"), svg)


def cmd_flowfield(run: Run) -> None:
    cfg = run.cfg
    data = build_dataset(cfg)
    if data.dim != 2:
        raise InputError("flow-field grids are emitted for 2-D data only")
    m = cfg.metric
    # a conditioned base with no guidance block draws the reweighted posterior itself
    spec = None if cfg.model.kind == "conditioned" and cfg.guidance is None else sweep_spec(cfg)
    soft = cfg.reference.kind == "soft"
    fractions = m.soft_fractions if soft else [None]
    protos = build_prototypes(cfg, data)
    summary = []
    x0 = sample_source(cfg.sampler.seed, cfg.sampler.n_samples, 2)
    for frac in fractions:
        tag = "base" if frac is None else f"f{int(round(frac * 100)):03d}"
        field_ = build_field(cfg, data, spec, frac)
        pts, vec = flow_field_grid(field_, m.bounds, m.resolution, m.t)
        write_points_csv(run.path(f"flowfield_{tag}.csv"), pts,
                         {"u0": [repr(float(v)) for v in vec[:, 0]], "u1": [repr(float(v)) for v in vec[:, 1]]})
        title = f"t={m.t}" + ("" if frac is None else f", {frac:.0%} class {cfg.reference.target}")
        write_svg(run.path(f"flowfield_{tag}.svg"), flow_field_svg(pts, vec, title=title))
        if protos is not None:
            out = euler_sample(field_, x0, cfg.sampler.config()).final
            frac_gen = float(np.mean(classify(out, protos) == cfg.reference.target))
            summary.append((tag, -1.0 if frac is None else float(frac), frac_gen))
    if summary:
        _write_table(run.path("flowfield_summary.csv"), ["tag", "reference_fraction", "generated_fraction"], summary)


def _target_banks(cfg: ExperimentConfig, data: DataSet):
    if data.labels is None:
        raise ConfigError("dataset", "composition sweeps need a labeled dataset")
    target = cfg.metric.target_class
    others = [c for c in data.classes() if c != target]
    if target not in data.classes() or not others:
        raise ConfigError("metric.target_class", f"need class {target} and at least one other class")
    rest = data.subset(np.flatnonzero(data.labels != target))
    return hard_filter(data, target), rest, target


def cmd_composition_sweep(run: Run) -> None:
    cfg = run.cfg
    data = build_dataset(cfg)
    bank_a, bank_b, target = _target_banks(cfg, data)
    protos = build_prototypes(cfg, data)
    size = cfg.reference.size or min(len(bank_a), len(bank_b))
    if cfg.model.kind == "spg":
        # the SPG model is steered by swapping its reference set, no guidance term
        params = load_params(cfg.model.checkpoint)
        sc = cfg.sampler.config()
        x0 = sample_source(sc.seed, cfg.sampler.n_samples, data.dim)
        curve = CompositionCurve()
        for row, f in enumerate(cfg.metric.fractions):
            refs = mixed_reference(bank_a, bank_b, f, size, np.random.default_rng(derive_seed(sc.seed, row)))
            out = euler_sample(SpgModel(params, refs), x0, sc).final
            curve.rows.append((float(f), float(np.mean(classify(out, protos) == target)), cfg.sampler.n_samples))
    else:
        curve = composition_sweep(build_base(cfg, data, None), bank_a, bank_b, cfg.metric.fractions, sweep_spec(cfg),
                                  cfg.sampler.config(),
                                  protos, cfg.sampler.n_samples, size, target)
    curve.to_csv(run.path("composition.csv"))
    svg = curve_svg(curve.reference, curve.generated, title=f"class {target} fraction",
                    x_label="reference fraction", y_label="generated fraction", bounds=((0, 0), (1, 1)))
    write_svg(run.path("composition.svg"), svg)


def cmd_schedule_ablation(run: Run) -> None:
    cfg = run.cfg
    data = build_dataset(cfg)
    protos = build_prototypes(cfg, data)
    reference = build_reference(cfg, data)
    base = build_base(cfg, data, reference)
    sc = cfg.sampler.config()
    x0 = sample_source(sc.seed, cfg.sampler.n_samples, data.dim)
    cutoff = cfg.guidance.cutoff if cfg.guidance is not None else 0.85
    rows = []
    for kind in cfg.metric.kinds:
        curve_x, curve_y = [], []
        for g in cfg.metric.gammas:
            rmg = RmgField(base, reference, GuidanceSpec(kind, float(g), cutoff), record_gains=True)
            out = euler_sample(rmg, x0, sc).final
            frac = float(np.mean(classify(out, protos) == cfg.reference.target)) if protos else float("nan")
            rows.append((str(kind), float(g), frac, pairwise_diversity(out), max(v for _, v in rmg.gains)))
            curve_x.append(float(g))
            curve_y.append(frac)
        if protos is not None:
            write_svg(run.path(f"schedule_{kind}.svg"),
                      curve_svg(curve_x, curve_y, title=f"{kind}", x_label="beta0", y_label="target fraction"))
    _write_table(run.path("schedule_ablation.csv"), ["kind", "beta0", "target_fraction", "diversity", "max_gain"], rows)


def cmd_size_ablation(run: Run) -> None:
    cfg = run.cfg
    data = build_dataset(cfg)
    if data.labels is None:
        raise ConfigError("dataset", "size ablation draws references from one class of a labeled dataset")
    base = build_base(cfg, data, None)
    bank = hard_filter(data, cfg.reference.target)
    spec = sweep_spec(cfg)
    sc = cfg.sampler.config()
    x0 = sample_source(sc.seed, cfg.sampler.n_samples, data.dim)
    rows, means = [], []
    sizes = [int(m) for m in cfg.metric.sizes]
    for m in sizes:
        if m > len(bank):
            raise ConfigError("metric.sizes", f"size {m} exceeds the class bank ({len(bank)} points)")
        vals = []
        for r in range(cfg.metric.replicates):
            rng = np.random.default_rng(derive_seed(cfg.reference.seed, m, r))
            refs = bank.subset(np.sort(rng.choice(len(bank), m, replace=False)))
            vals.append(pairwise_diversity(euler_sample(RmgField(base, refs, spec), x0, sc).final))
            rows.append((m, r, vals[-1]))
        means.append(float(np.mean(vals)))
    _write_table(run.path("size_ablation.csv"), ["M", "replicate", "diversity"], rows)
    slope = float(np.polyfit(np.log(sizes), means, 1)[0]) if len(sizes) > 1 else float("nan")
    _write_table(run.path("size_summary.csv"), ["M", "mean_diversity"], list(zip(sizes, means)))
    _write_table(run.path("size_slope.csv"), ["slope_per_log_M"], [(slope,)])
    write_svg(run.path("size_ablation.svg"),
              curve_svg(np.log(sizes), means, title="diversity vs log M", x_label="log M", y_label="diversity"))


def cmd_nfe_ablation(run: Run) -> None:
    cfg = run.cfg
    data = build_dataset(cfg)
    field_ = build_field(cfg, data)
    x0 = sample_source(cfg.sampler.seed, cfg.sampler.n_samples, data.dim)
    nfes = [int(n) for n in cfg.metric.nfes]
    seconds, ends = [], {}
    for n in nfes:
        best = np.inf
        for _ in range(cfg.metric.repeats):
            t0 = time.perf_counter()
            ends[n] = euler_sample(field_, x0, cfg.sampler.config(nfe=n)).final
            best = min(best, time.perf_counter() - t0)
        seconds.append(float(best))
        write_points_csv(run.path(f"endpoints_nfe{n:04d}.csv"), ends[n])
    # wall-clock goes in its own file so every other table stays byte-reproducible
    _write_table(run.path("nfe_runtime.csv"), ["nfe", "seconds"], list(zip(nfes, seconds)))
    drift = [(nfes[i], nfes[i + 1], float(np.mean(np.linalg.norm(ends[nfes[i]] - ends[nfes[i + 1]], axis=1))))
             for i in range(len(nfes) - 1)]
    _write_table(run.path("nfe_drift.csv"), ["nfe_a", "nfe_b", "mean_endpoint_drift"], drift)
    r2 = float(np.corrcoef(nfes, seconds)[0, 1] ** 2) if len(nfes) > 2 else float("nan")
    run.manifest.summary["runtime_r2"] = r2
    write_svg(run.path("nfe_runtime.svg"), curve_svg(nfes, seconds, title=f"runtime vs NFE (R2={r2:.3f})",
                                                     x_label="NFE", y_label="seconds"))


def _history_svg(run: Run, name: str, steps, values, title: str) -> None:
    keep = [(s, v) for s, v in zip(steps, values) if np.isfinite(v)]
    if keep:
        xs, ys = zip(*keep)
        write_svg(run.path(name), curve_svg(xs, ys, title=title, x_label="step", y_label="probe loss"))


def cmd_train_fm(run: Run) -> None:
    cfg = run.cfg
    data = build_dataset(cfg)
    params = fm_train(data, cfg.train_config())
    save_params(run.path("params.json"), params)
    _write_table(run.path("loss_history.csv"), ["step", "batch_loss", "probe_loss"], params.history)
    _history_svg(run, "loss_history.svg", [h[0] for h in params.history], [h[2] for h in params.history],
                 "FM probe loss")
    rows = [("probe_loss_start", params.history[0][2]), ("probe_loss_end", params.history[-1][2])]
    if data.dim == 2:
        rows.append(("grid_mse_vs_empirical", ex.fm_grid_mse(params, data)))
    _write_table(run.path("train_summary.csv"), ["metric", "value"], rows)


def cmd_train_spg(run: Run) -> None:
    cfg = run.cfg
    data = build_dataset(cfg)
    params = spg_train(data, cfg.train_config())
    save_params(run.path("params.json"), params)
    _write_table(run.path("loss_history.csv"), ["step", "L_mu", "L_ref", "probe_L_mu"], params.history)
    _history_svg(run, "loss_history.svg", [h[0] for h in params.history], [h[3] for h in params.history],
                 "SPG probe L_mu")


def cmd_verify(run: Run, quick: bool, names: Optional[list[str]]) -> None:
    from .verify import run_checks
    results = run_checks(include_slow=not quick, names=names)
    rows = []
    for r in results:
        print(r.line() + (f"  {r.note}" if r.note and not r.skipped else ""))
        rows.append((r.name, r.criterion or "", "skip" if r.skipped else ("pass" if r.passed else "fail"),
                     r.value, r.relation, r.threshold, r.note))
    _write_table(run.path("verify.csv"), ["check", "criterion", "status", "value", "relation", "threshold", "note"],
                 rows)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        raise VerificationFailed(", ".join(r.name for r in failed))


RUNNERS = {
    "sample": cmd_sample,
    "flowfield": cmd_flowfield,
    "composition-sweep": cmd_composition_sweep,
    "schedule-ablation": cmd_schedule_ablation,
    "size-ablation": cmd_size_ablation,
    "nfe-ablation": cmd_nfe_ablation,
    "train-fm": cmd_train_fm,
    "train-spg": cmd_train_spg,
}


# ------------------------------------------------------------------ parsing


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field by dotted key; VALUE is parsed as JSON when possible")
    p.add_argument("--output-dir", help="output directory (default: $REFFLOW_OUTPUT_ROOT/<command>-<hash>)")
    p.add_argument("--dataset", help="dataset CSV; shorthand for dataset.kind=file, dataset.path=...")
    p.add_argument("--seed", type=int, help="sampler seed")
    p.add_argument("--nfe", type=int, help="Euler steps")
    p.add_argument("--eps", type=float, help="terminal cutoff")
    p.add_argument("--n-samples", type=int, help="number of generated samples")
    p.add_argument("--beta0", type=float, help="guidance strength (creates a guidance block)")
    p.add_argument("--schedule", dest="guidance_kind", choices=["constant", "quadratic_decay", "bell"],
                   help="guidance schedule")
    p.add_argument("--cutoff", type=float, help="late-time guidance cutoff")
    p.add_argument("--no-guidance", action="store_true", help="drop the guidance block")
    p.add_argument("--target-class", type=int, help="reference target and metric target class")
    p.add_argument("--model", help="checkpoint JSON; its kind (mlp or spg) selects the base model")
    p.add_argument("--trajectories", action="store_true", help="record and save trajectories")


def _overrides(args: argparse.Namespace) -> list[tuple[str, object]]:
    out = []
    for item in args.set:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        key, val = item.split("=", 1)
        out.append((key.strip(), parse_value(val)))
    if args.dataset:
        out += [("dataset.kind", "file"), ("dataset.path", args.dataset)]
    simple = {"seed": "sampler.seed", "nfe": "sampler.nfe", "eps": "sampler.eps", "n_samples": "sampler.n_samples",
              "beta0": "guidance.beta0", "guidance_kind": "guidance.kind", "cutoff": "guidance.cutoff"}
    for attr, key in simple.items():
        val = getattr(args, attr)
        if val is not None:
            out.append((key, val))
    if args.target_class is not None:
        out += [("reference.target", args.target_class), ("metric.target_class", args.target_class)]
    if args.model:
        try:
            kind = json.loads(Path(args.model).read_text()).get("kind")
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("--model", f"cannot read checkpoint: {exc}") from exc
        out += [("model.kind", kind), ("model.checkpoint", args.model)]
    if args.trajectories:
        out.append(("sampler.record_trajectory", True))
    if args.no_guidance:
        out.append(("guidance", None))
    if args.output_dir:
        out.append(("output_dir", args.output_dir))
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="refflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"refflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate or ingest a dataset and write it as CSV")
    g.add_argument("--kind", required=True, choices=["two_moons", "gaussians", "mnist_binary"])
    g.add_argument("--out", required=True, help="output CSV path")
    g.add_argument("--n", type=int, default=500)
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--centers", type=json.loads, default=[[-2.0, 0.0], [2.0, 0.0]], help="JSON list of centers")
    g.add_argument("--sigma", type=float, default=0.5)
    g.add_argument("--n-per-class", type=int, default=250)
    g.add_argument("--images", help="MNIST IDX image file")
    g.add_argument("--labels", help="MNIST IDX label file")
    g.add_argument("--digits", type=json.loads, default=[0, 1], help="JSON list of digits")
    g.add_argument("--max-per-class", type=int)

    for name in RUNNERS:
        _common(sub.add_parser(name, help=f"run {name}"))
    v = sub.add_parser("verify", help="run every oracle check and report measured errors")
    _common(v)
    v.add_argument("--quick", action="store_true", help="skip the slow experiment checks")
    v.add_argument("--only", action="append", help="run checks whose name contains this text")

    p = sub.add_parser("plot", help="render a CSV as SVG")
    p.add_argument("--kind", required=True, choices=[k.value for k in PlotKind])
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--title")
    p.add_argument("--x", default="fraction", help="curve x column")
    p.add_argument("--y", default="generated_fraction", help="curve y column")
    return parser


def _gen_data(args: argparse.Namespace) -> None:
    if args.kind == "two_moons":
        data = two_moons(args.n, args.noise, args.seed)
    elif args.kind == "gaussians":
        data = gaussians(args.centers, args.sigma, args.n_per_class, args.seed)
    else:
        if not (args.images and args.labels):
            raise InputError("mnist_binary needs --images and --labels")
        data = mnist_binary(args.images, args.labels, args.digits, args.max_per_class)
    write_dataset_csv(args.out, data)
    print(f"wrote {len(data)} rows to {args.out}")


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    if args.command == "gen-data":
        try:
            _gen_data(args)
        except (InputError, ConfigError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVALID
        return EXIT_OK
    if args.command == "plot":
        try:
            write_svg(args.output, render(args.kind, args.input, title=args.title, x=args.x, y=args.y))
        except (InputError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVALID
        return EXIT_OK

    try:
        cfg = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    run = Run(args.command, cfg)
    try:
        if args.command == "verify":
            cmd_verify(run, args.quick, args.only)
        else:
            RUNNERS[args.command](run)
    except VerificationFailed as exc:
        run.finish()
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except ConfigError as exc:
        run.finish(exc)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (InputError, FileNotFoundError) as exc:
        run.finish(exc)
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (RefFlowError, ArithmeticError, ValueError, OSError) as exc:
        run.finish(exc)
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    run.finish()
    print(f"wrote {len(run.manifest.outputs)} files to {run.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
