"""Command line entry point.

Exit codes: 0 success, 2 usage or configuration error, 3 training
divergence, 4 gradient check failure, 5 oracle deviation.
"""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import formats, masks, metrics, oracles, svg, synth, train
from .config import ABLATIONS, RunConfig
from .masks import MARGIN_DEFAULTS
from .voxel import AXES, AXIS_NAMES, IGNORE_LABEL, ConfigError

EXIT_USAGE, EXIT_DIVERGED, EXIT_GRADCHECK, EXIT_ORACLE = 2, 3, 4, 5

log = logging.getLogger("scanssc")


def _int_triple(text):
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected X,Y,Z integers, got {text!r}") from None
    if len(vals) != 3 or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"expected three positive integers, got {text!r}")
    return vals


def _axes(text):
    axes = tuple(a.strip() for a in text.split(",") if a.strip())
    bad = [a for a in axes if a not in AXES]
    if bad or not axes:
        raise argparse.ArgumentTypeError(f"axes must be drawn from {','.join(AXES)}, got {text!r}")
    return axes


def _ints(text):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# masks ---------------------------------------------------------------------------

def cmd_masks(args):
    m = masks.build_mask(args.axis, args.length, args.margin, args.flip, flip_mode=args.flip_mode,
                         width_mode=args.width_mode, margin_mode=args.margin_mode)
    Path(args.out).write_text(m.ascii())
    if args.pgm:
        Path(args.pgm).write_bytes(m.to_pgm())
    return 0


# synth / convert -------------------------------------------------------------------

def cmd_synth(args):
    grid = synth.generate(args.preset, args.dims, args.seed, args.num_classes)
    formats.write_voxel_grid(args.out, grid)
    return 0


def _read_grid(path):
    path = Path(path)
    if path.suffix == ".csv":
        return formats.voxels_from_csv(path.read_text())
    return formats.read_voxel_grid(path)


def cmd_convert(args):
    grid = _read_grid(args.input)
    if Path(args.out).suffix == ".csv":
        Path(args.out).write_text(formats.voxels_to_csv(grid))
    else:
        formats.write_voxel_grid(args.out, grid)
    return 0


# train-toy -------------------------------------------------------------------------

def _load_config(path, default=RunConfig()):
    return RunConfig.load(path) if path else default


def cmd_train_toy(args):
    cfg = _load_config(args.config)
    if args.ablation:
        cfg = cfg.replace(**ABLATIONS[args.ablation])
    if args.steps is not None:
        cfg = cfg.replace(steps=args.steps)
    gt = _read_grid(args.gt)
    out = Path(args.out)
    started = datetime.datetime.now(datetime.timezone.utc)
    try:
        result = train.train(cfg, gt)
    except train.DivergenceError as e:
        print(f"diverged at step {e.step}", file=sys.stderr)
        return EXIT_DIVERGED
    out.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps({"step": s, **r.to_dict()}) for s, r in result.history]
    (out / "losses.jsonl").write_text("\n".join(lines) + "\n")
    formats.write_logit_grid(out / "logits.sscl", result.logits)
    formats.write_voxel_grid(out / "pred.sscg", result.logits.argmax(axis=-1))
    (out / "metrics.json").write_text(json.dumps(
        {"initial": result.initial_metrics, "final": result.final_metrics},
        indent=2, sort_keys=True) + "\n")
    (out / "config.txt").write_text(cfg.dumps())
    finished = datetime.datetime.now(datetime.timezone.utc)
    (out / "run.log").write_text(f"started {started.isoformat()}\nfinished {finished.isoformat()}\n")
    first, last = result.history[0][1].total, result.history[-1][1].total
    print(f"steps={cfg.steps} loss {first:.6f} -> {last:.6f} "
          f"miou {result.initial_metrics['miou']} -> {result.final_metrics['miou']}")
    return 0


# gradcheck -------------------------------------------------------------------------

def cmd_gradcheck(args):
    cfg = _load_config(args.config, train.GRADCHECK_CONFIG)
    modules = tuple(args.module) if args.module else train.GRADCHECK_MODULES
    errors = train.run_gradcheck(cfg, modules, max_entries=args.max_entries)
    failures = []
    for name, err in errors.items():
        flag = "FAIL" if err > train.GRADCHECK_THRESHOLD else "ok"
        print(f"{name:<48} {err:.3e} {flag}")
        if err > train.GRADCHECK_THRESHOLD:
            failures.append(name)
    if failures:
        print(f"gradcheck failed for: {', '.join(failures)}", file=sys.stderr)
        return EXIT_GRADCHECK
    return 0


# analyze ---------------------------------------------------------------------------

def cmd_analyze(args):
    pred, gt = _read_grid(args.pred), _read_grid(args.gt)
    if pred.shape != gt.shape:
        raise ConfigError(f"prediction dims {pred.shape} differ from ground truth {gt.shape}")
    bins = args.bins
    if len(bins) == 1:
        bins = bins * len(args.axes)
    elif len(bins) == 3 and len(args.axes) != 3:
        bins = tuple(bins[AXES.index(a)] for a in args.axes)
    if len(bins) != len(args.axes):
        raise ConfigError("--bins needs one value per axis (or per dep,wid,hgt)")
    num_classes = args.num_classes
    # predictions under ignored ground truth are never counted
    keep = gt != IGNORE_LABEL
    top = max(int(pred[keep].max(initial=0)), int(gt[keep].max(initial=0)))
    if top >= num_classes:
        raise ConfigError(f"labels reach {top}; raise --num-classes above {num_classes}")
    out = Path(args.out)
    files = {}
    bin_reports, seg_reports = {}, {}
    for axis, n in zip(args.axes, bins):
        br = metrics.axis_bin_report(pred, gt, axis, n, num_classes)
        sr = metrics.segment_report(pred, gt, axis, num_classes)
        bin_reports[axis], seg_reports[axis] = br, sr
        files[f"bins_{axis}.csv"] = br.to_csv()
        files[f"segments_{axis}.csv"] = sr.to_table_csv()
        files[f"bins_{axis}.svg"] = svg.line_chart(
            {"Recall": br.series("recall"), "IoU": br.series("iou"), "mIoU": br.series("miou")},
            title=f"{AXIS_NAMES[axis]} bins", x_label=f"{AXIS_NAMES[axis]} bin",
            normalize=args.normalize)
    files["segments.csv"] = metrics.segment_table_csv(seg_reports)
    files["report.json"] = metrics.reports_json(bin_reports, seg_reports) + "\n"
    if args.logits:
        logits = formats.read_logit_grid(args.logits).astype(np.float64)
        cfg = _load_config(args.config).replace(
            target_dims=gt.shape, proposal_dims=gt.shape, num_classes=logits.shape[-1],
            pyramid=False, class_weighting="uniform")
        _, report = train.objective(cfg, gt, logits)
        files["loss.json"] = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text)
    sys.stdout.write(files["segments.csv"])
    return 0


# oracle ----------------------------------------------------------------------------

def cmd_oracle(args):
    if args.replay:
        t = oracles.replay(args.replay)
        print(f"{t.suite} seed={t.seed} trial={t.trial} deviation={t.deviation!r}")
        return 0
    if args.suite is None:
        raise ConfigError("--suite is required unless --replay is given")
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    tol = oracles.TOLERANCES[args.suite] if args.tolerance is None else args.tolerance
    results = oracles.run_suite(args.suite, args.trials, args.seed)
    w = oracles.worst(results)
    print(f"{args.suite}: trials={args.trials} max deviation={w.deviation!r} (trial {w.trial}) "
          f"tolerance={tol!r}")
    if w.deviation > tol:
        path = args.repro_out or f"oracle-{args.suite}-repro.json"
        oracles.dump_repro(w, path, tol)
        print(f"deviation exceeds tolerance; repro written to {path}", file=sys.stderr)
        return EXIT_ORACLE
    return 0


# parser ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scanssc", description="Axis-scan SSC toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("masks", help="dump an attention mask as ASCII (and PGM)")
    s.add_argument("--axis", required=True, choices=AXES)
    s.add_argument("--length", required=True, type=int)
    s.add_argument("--margin", type=float, default=None,
                   help=f"margin ratio (defaults {MARGIN_DEFAULTS})")
    s.add_argument("--flip", action="store_true")
    s.add_argument("--flip-mode", default="reflect", choices=masks.FLIP_MODES)
    s.add_argument("--width-mode", default="same_side", choices=masks.WIDTH_MODES)
    s.add_argument("--margin-mode", default="mutual", choices=masks.MARGIN_MODES)
    s.add_argument("--out", required=True)
    s.add_argument("--pgm", help="also write a binary PGM image here")
    s.set_defaults(func=cmd_masks)

    s = sub.add_parser("synth", help="write a synthetic label grid")
    s.add_argument("--preset", required=True, choices=synth.PRESETS)
    s.add_argument("--dims", required=True, type=_int_triple)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--num-classes", type=int, default=20)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("convert", help="convert between .sscg and .csv voxel listings")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("train-toy", help="fit the model to one scene")
    s.add_argument("--config")
    s.add_argument("--gt", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--steps", type=int, help="override the configured step count")
    s.add_argument("--ablation", choices=tuple(ABLATIONS), help="apply a component switch preset")
    s.set_defaults(func=cmd_train_toy)

    s = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    s.add_argument("--config")
    s.add_argument("--module", action="append", choices=train.GRADCHECK_MODULES)
    s.add_argument("--max-entries", type=int, default=4,
                   help="coordinates sampled per parameter in the model-level checks")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("analyze", help="per-axis bin and segment metrics")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--logits")
    s.add_argument("--config", help="loss weights used with --logits")
    s.add_argument("--axes", type=_axes, default=AXES)
    s.add_argument("--bins", type=_ints, default=(256, 256, 32))
    s.add_argument("--num-classes", type=int, default=20)
    s.add_argument("--normalize", action="store_true", help="scale each curve by its maximum")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("oracle", help="compare against brute-force oracles")
    s.add_argument("--suite", choices=oracles.SUITES)
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tolerance", type=float)
    s.add_argument("--repro-out")
    s.add_argument("--replay", help="rerun the trial stored in a repro file")
    s.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, formats.FormatError, OSError) as e:
        print(f"scanssc {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
