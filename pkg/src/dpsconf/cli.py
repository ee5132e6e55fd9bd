"""Command-line front end.

Subcommands: ``match``, ``confidence``, ``eval``, ``ablate``.

Exit codes: 0 success, 2 input validation, 3 I/O, 4 external matcher
failure, 5 every image in a batch failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .confidence import sweep_confidence
from .config import RunConfig, parse_shifts, shifts_for_n
from .evaluation import (
    EvalReport,
    msm_confidence,
    pooled_auc,
    random_confidence,
    sparsification_auc,
    write_curve_csv,
    write_report_csv,
)
from .imagery import (
    DisparityMap,
    ImageryError,
    MissingFileError,
    load_disparity,
    load_image,
    save_disparity,
    save_gray_visualization,
    write_pfm,
)
from .matcher import BuiltinMatcher, ExternalMatcher, ExternalMatcherError, MatcherError
from .sweep import SweepError, SweepSpec, step_shifts

logger = logging.getLogger("dpsconf")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_EXTERNAL = 4
EXIT_ALL_FAILED = 5

IMAGE_SUFFIXES = (".png", ".pgm", ".ppm")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, SweepError):
        exc = exc.cause
    if isinstance(exc, CliError):
        return exc.code
    if isinstance(exc, ExternalMatcherError):
        return EXIT_EXTERNAL
    if isinstance(exc, (ImageryError, MatcherError, ValueError)):
        return EXIT_VALIDATION
    if isinstance(exc, OSError):
        return EXIT_IO
    return 1


# ---------------------------------------------------------------------------
# helpers


def make_matcher(cfg: RunConfig):
    if cfg.matcher == "external":
        return ExternalMatcher(cfg.external_spec(), d_max=cfg.d_max)
    return BuiltinMatcher(cfg.matcher_config())


def prepare_out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise CliError(f"output directory {out} is not writable: {exc}", EXIT_IO) from exc
    return out


def _require(path, flag):
    if not path:
        raise CliError(f"{flag} is required", EXIT_VALIDATION)
    if not Path(path).exists():
        raise CliError(f"{flag}: no such file or directory: {path}", EXIT_VALIDATION)
    return path


def gt_format_for(path) -> str:
    return "pfm" if Path(path).suffix.lower() == ".pfm" else "kitti-png16"


def _write(fn, *args):
    try:
        fn(*args)
    except (OSError, ImageryError) as exc:
        raise CliError(f"write failed: {exc}", EXIT_IO) from exc


def write_disparity_outputs(disp: DisparityMap, out: Path, d_max: float) -> None:
    _write(save_disparity, disp, out / "disp_0.pfm", "pfm")
    _write(save_gray_visualization, disp, out / "disp_0_vis.png", 255.0 / d_max)


# ---------------------------------------------------------------------------
# commands


def cmd_match(cfg: RunConfig) -> int:
    left = load_image(_require(cfg.left, "--left"))
    right = load_image(_require(cfg.right, "--right"))
    out = prepare_out_dir(cfg.out)
    disp = make_matcher(cfg)(left, right)
    write_disparity_outputs(disp, out, cfg.d_max)
    print(f"wrote {out / 'disp_0.pfm'} ({disp.valid.mean():.1%} valid)")
    return EXIT_OK


def cmd_confidence(cfg: RunConfig) -> int:
    left = load_image(_require(cfg.left, "--left"))
    right = load_image(_require(cfg.right, "--right"))
    spec = cfg.sweep_spec()
    if spec.n < 2:
        raise CliError("the confidence sweep needs at least two shifts", EXIT_VALIDATION)
    out = prepare_out_dir(cfg.out)
    res = sweep_confidence(
        left, right, spec, make_matcher(cfg), cfg.confidence_params(), parallel=cfg.workers, dump_dir=cfg.dump_dir
    )
    write_disparity_outputs(res.anchor, out, cfg.d_max)
    _write(write_pfm, out / "unreliability.pfm", res.unreliability.masked(np.inf))
    _write(write_pfm, out / "confidence.pfm", res.confidence.masked(np.inf))
    _write(save_gray_visualization, res.confidence, out / "confidence.png", 255.0)
    c = res.confidence.values[res.confidence.valid]
    if c.size:
        print(f"confidence over {c.size} valid pixels: min={c.min():.4f} mean={c.mean():.4f} max={c.max():.4f}")
    else:
        print("confidence: no valid pixels")
    return EXIT_OK


@dataclass
class Sample:
    name: str
    left: Path
    right: Path
    gt: Path


def discover_dataset(root) -> list[Sample]:
    """Pair <root>/left/<name> with right/<name> and gt/<stem>.{png,pfm}."""
    root = Path(_require(root, "--dataset"))
    left_dir = root / "left"
    if not left_dir.is_dir():
        raise CliError(f"{root} has no left/ directory", EXIT_VALIDATION)
    samples = []
    for lp in sorted(left_dir.iterdir()):
        if lp.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        rp = root / "right" / lp.name
        gts = [root / "gt" / (lp.stem + ext) for ext in (".png", ".pfm")]
        gt = next((g for g in gts if g.exists()), gts[0])
        samples.append(Sample(lp.stem, lp, rp, gt))
    if not samples:
        raise CliError(f"dataset {root} contains no images", EXIT_VALIDATION)
    return samples


def _random_seed(seed: int, name: str) -> int:
    return (seed * 1_000_003 + zlib.crc32(name.encode())) & 0xFFFFFFFF


def evaluate_sample(sample: Sample, cfg: RunConfig, spec: SweepSpec, methods, matcher, parallel: int = 1):
    """Reports and raw maps for one image; raises on any failure."""
    left = load_image(sample.left)
    right = load_image(sample.right)
    if not sample.gt.exists():
        raise MissingFileError(f"missing ground truth {sample.gt}")
    gt = load_disparity(sample.gt, gt_format_for(sample.gt), d_max=cfg.d_max)
    if gt.shape != left.shape:
        raise ValueError(f"ground truth {gt.shape} does not match image {left.shape}")
    params = cfg.eval_params()
    res = sweep_confidence(left, right, spec, matcher, cfg.confidence_params(), parallel=parallel)
    confs = {}
    for method in methods:
        if method == "sweep":
            confs[method] = res.confidence
        elif method == "msm":
            confs[method] = msm_confidence(left, right, matcher)
        elif method == "random":
            confs[method] = random_confidence(left.shape, res.anchor.valid, _random_seed(cfg.seed, sample.name))
    reports = [
        sparsification_auc(conf, res.anchor, gt, params, method=m, image=sample.name) for m, conf in confs.items()
    ]
    triples = {m: (conf, res.anchor, gt) for m, conf in confs.items()}
    return reports, triples


def run_dataset(cfg: RunConfig, spec: SweepSpec, methods):
    """Evaluate every sample; failed samples are logged and skipped."""
    samples = discover_dataset(cfg.dataset)
    matcher = make_matcher(cfg)
    workers = cfg.parallel or 1
    # images run concurrently when several exist; matcher calls within an
    # image run concurrently only for single-image datasets
    inner = 1 if len(samples) > 1 else cfg.workers

    def one(sample):
        try:
            return evaluate_sample(sample, cfg, spec, methods, matcher, parallel=inner)
        except Exception as exc:  # noqa: BLE001 - batch mode skips and reports
            return exc

    if workers > 1 and len(samples) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, samples))
    else:
        results = [one(s) for s in samples]

    reports, triples, failures = [], {}, []
    for sample, result in zip(samples, results):
        if isinstance(result, Exception):
            logger.warning("skipping %s: %s", sample.name, result)
            failures.append((sample, result))
            continue
        reports.extend(result[0])
        for m, t in result[1].items():
            triples.setdefault(m, []).append(t)
    if not reports:
        codes = {exit_code_for(exc) for _, exc in failures}
        code = EXIT_EXTERNAL if codes == {EXIT_EXTERNAL} else EXIT_ALL_FAILED
        raise CliError(f"all {len(samples)} images failed", code)
    return reports, triples


def summarize(reports: list[EvalReport], methods) -> list[dict]:
    rows = []
    for m in methods:
        rs = [r for r in reports if r.method == m]
        if not rs:
            continue
        rows.append(
            {
                "method": m,
                "n_images": len(rs),
                "mean_epsilon": float(np.mean([r.epsilon for r in rs])),
                "mean_auc_x100": 100.0 * float(np.mean([r.auc for r in rs])),
                "mean_optimal_x100": 100.0 * float(np.mean([r.optimal_auc for r in rs])),
            }
        )
    return rows


def _write_summary(rows, path, pooled=None):
    import csv

    fields = ["method", "n_images", "mean_epsilon", "mean_auc_x100", "mean_optimal_x100"]
    if pooled:
        fields += ["pooled_auc_x100", "pooled_optimal_x100"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            line = [r["method"], r["n_images"], f"{r['mean_epsilon']:.6f}", f"{r['mean_auc_x100']:.4f}", f"{r['mean_optimal_x100']:.4f}"]
            if pooled:
                p = pooled[r["method"]]
                line += [f"{100 * p.auc:.4f}", f"{100 * p.optimal_auc:.4f}"]
            w.writerow(line)


def _print_table(rows, pooled=None):
    head = f"{'method':<8} {'images':>6} {'eps':>8} {'AUC x100':>10} {'Optimal x100':>13}"
    if pooled:
        head += f" {'pooled AUC':>11}"
    print(head)
    for r in rows:
        line = (
            f"{r['method']:<8} {r['n_images']:>6d} {r['mean_epsilon']:>8.4f} "
            f"{r['mean_auc_x100']:>10.4f} {r['mean_optimal_x100']:>13.4f}"
        )
        if pooled:
            line += f" {100 * pooled[r['method']].auc:>11.4f}"
        print(line)


def cmd_eval(cfg: RunConfig) -> int:
    methods = ["sweep", "random"] if cfg.matcher == "external" else ["sweep", "msm", "random"]
    spec = cfg.sweep_spec()
    out = prepare_out_dir(cfg.out)
    reports, triples = run_dataset(cfg, spec, methods)
    pooled = None
    if cfg.pooled_auc:
        pooled = {m: pooled_auc(t, cfg.eval_params(), method=m) for m, t in triples.items()}
    curves = out / "curves"
    try:
        write_report_csv(reports, out / "eval_report.csv")
        curves.mkdir(exist_ok=True)
        for r in reports:
            write_curve_csv(r, curves / f"{r.image}_{r.method}.csv")
        rows = summarize(reports, methods)
        _write_summary(rows, out / "summary.csv", pooled)
    except OSError as exc:
        raise CliError(f"cannot write reports: {exc}", EXIT_IO) from exc
    _print_table(rows, pooled)
    return EXIT_OK


def ablation_shifts(axis: str, value: int) -> tuple[int, ...]:
    if axis == "N":
        return shifts_for_n(value)
    if axis == "K":
        return step_shifts(value)
    raise ValueError(f"unknown ablation axis {axis!r}")


def cmd_ablate(cfg: RunConfig, axis: str, values) -> int:
    if not values:
        raise CliError("ablation needs at least one axis value", EXIT_VALIDATION)
    try:
        plans = [(v, ablation_shifts(axis, v)) for v in values]
    except ValueError as exc:
        raise CliError(str(exc), EXIT_VALIDATION) from exc
    out = prepare_out_dir(cfg.out)
    rows = []
    for value, shifts in plans:
        reports, _ = run_dataset(cfg, SweepSpec(shifts), ["sweep"])
        s = summarize(reports, ["sweep"])[0]
        rows.append((axis, value, shifts, s))
    path = out / f"ablation_{axis}.csv"
    try:
        with open(path, "w") as fh:
            fh.write("axis,value,shifts,n_images,mean_auc_x100,mean_optimal_x100\n")
            for axis_, value, shifts, s in rows:
                fh.write(
                    f"{axis_},{value},\"{','.join(map(str, shifts))}\",{s['n_images']},"
                    f"{s['mean_auc_x100']:.4f},{s['mean_optimal_x100']:.4f}\n"
                )
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from exc
    print(f"{'axis':<4} {'value':>5} {'shifts':<22} {'AUC x100':>10} {'Optimal x100':>13}")
    for axis_, value, shifts, s in rows:
        print(f"{axis_:<4} {value:>5} {str(list(shifts)):<22} {s['mean_auc_x100']:>10.4f} {s['mean_optimal_x100']:>13.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration; flags override its values")
    common.add_argument("--write-config", metavar="PATH", help="write the resolved configuration and continue")
    common.add_argument("--left")
    common.add_argument("--right")
    common.add_argument("--gt")
    common.add_argument("--dataset", help="root with left/, right/, gt/ subdirectories")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--shifts", help="comma-separated shift list, e.g. -2,-1,0,1,2")
    common.add_argument("--n", type=int, help="number of shifts (with --k, N = 2K + 1)")
    common.add_argument("--k", type=int, help="half-range of the symmetric sweep")
    common.add_argument("--tau", type=float)
    common.add_argument("--sigma", type=float)
    common.add_argument("--d-max", dest="d_max", type=int)
    common.add_argument("--matcher", choices=("builtin", "external"))
    common.add_argument("--external-cmd", dest="external_cmd", help="command with {left} {right} {out} placeholders")
    common.add_argument("--format", choices=("pfm", "kitti-png16"), help="external matcher output format")
    common.add_argument("--parallel", type=int, help="max concurrent matcher calls")
    common.add_argument("--seed", type=int, help="seed of the random control")
    common.add_argument("--dump-dir", dest="dump_dir")
    common.add_argument("--pooled-auc", dest="pooled_auc", action="store_true", default=None)
    common.add_argument("--no-lr-check", dest="lr_check", action="store_false", default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dpsconf", description="Disparity plane sweep stereo confidence.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("match", parents=[common], help="anchor disparity only")
    sub.add_parser("confidence", parents=[common], help="disparity, unreliability and confidence maps")
    sub.add_parser("eval", parents=[common], help="sparsification AUC over a dataset")
    ab = sub.add_parser("ablate", parents=[common], help="AUC over N or step size")
    ab.add_argument("--axis", choices=("N", "K"), required=True)
    ab.add_argument("--values", required=True, help="comma-separated axis values")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise CliError(f"cannot read config {args.config}: {exc}", EXIT_VALIDATION) from exc
        cfg = RunConfig.from_ini(text)
    if args.shifts and (args.n is not None or args.k is not None):
        raise CliError("give either --shifts or --n/--k, not both", EXIT_VALIDATION)
    shifts = None
    if args.shifts:
        shifts = parse_shifts(args.shifts)
    elif args.n is not None or args.k is not None:
        if args.n is None or args.k is None:
            raise CliError("--n and --k must be given together", EXIT_VALIDATION)
        shifts = SweepSpec.from_n_k(args.n, args.k).shifts
    cfg = cfg.with_overrides(
        left=args.left,
        right=args.right,
        gt=args.gt,
        dataset=args.dataset,
        out=args.out,
        shifts=shifts,
        tau=args.tau,
        sigma=args.sigma,
        d_max=args.d_max,
        matcher=args.matcher,
        external_cmd=args.external_cmd,
        format=args.format,
        parallel=args.parallel,
        seed=args.seed,
        dump_dir=args.dump_dir,
        pooled_auc=args.pooled_auc,
        lr_check=args.lr_check,
    )
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.write_config:
            try:
                Path(args.write_config).write_text(cfg.to_ini())
            except OSError as exc:
                raise CliError(f"cannot write config: {exc}", EXIT_IO) from exc
        if args.command == "match":
            return cmd_match(cfg)
        if args.command == "confidence":
            return cmd_confidence(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        values = parse_shifts(args.values) if args.values.strip() else ()
        return cmd_ablate(cfg, args.axis, values)
    except Exception as exc:  # noqa: BLE001 - mapped to documented exit codes
        code = exit_code_for(exc)
        if code == 1:
            raise
        print(f"dpsconf: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
