"""Command-line entry point: ``harmonic3d <subcommand> ...``.

Exit codes: 0 success, 1 the command ran but its success contract failed
(e.g. gradient-check mismatches, training divergence), 2 usage or I/O error.
Results go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from harmonic3d import analysis, config, detector, kitti
from harmonic3d.evaluation import Detection, FrameResult, EvaluationError, evaluate
from harmonic3d.geometry import Box3D, bev_iou, iou_3d

EXIT_OK = 0
EXIT_CONTRACT = 1
EXIT_USAGE = 2

log = logging.getLogger("harmonic3d")


class UsageError(Exception):
    """Bad arguments or unreadable/unwritable files."""


def _num(v: Optional[float]) -> str:
    return "" if v is None else repr(float(v))


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as e:
        raise UsageError(f"cannot write {path}: {e.strerror}") from None


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _run_config(args) -> config.RunConfig:
    overrides = dict(config.parse_override(s) for s in (args.set or []))
    return config.resolve(args.config, overrides)


# -- subcommands -------------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    cfg = _run_config(args)
    rep = analysis.gradcheck(args.n, tol_rel=args.tol, seed=args.seed, tol_abs=args.tol_abs, cfg=cfg.loss)
    print(f"samples per configuration: {2 * rep.n} (n={rep.n}, both direction labels)")
    for name, c in rep.per_config.items():
        print(f"  {name:<22} failures={c['failures']}  max_rel_err={c['max_rel_err']:.6g}")
    print(f"max relative error: {rep.max_rel_err:.6g}")
    print(f"max absolute error: {rep.max_abs_err:.6g}")
    print(f"failures: {rep.failures}")
    for w in rep.worst:
        print(f"  {w['kind']}/{w['form']} {w['coord']}[{w['index']}]: analytic={w['analytic']:.12g} "
              f"numeric={w['numeric']:.12g} rel={w['rel_err']:.3g}")
    if args.json:
        _write(Path(args.json), _dump_json(rep.to_dict()))
    print("PASS" if rep.ok else "FAIL")
    return EXIT_OK if rep.ok else EXIT_CONTRACT


def cmd_gradfield(args) -> int:
    cfg = _run_config(args)
    try:
        spec = analysis.GradFieldSpec(which_partial=args.partial, loss_kind=args.loss, resolution=args.resolution,
                                      dir_gt=args.dir_gt, component=args.component)
    except ValueError as e:
        raise UsageError(str(e)) from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        field_ = analysis.write_grad_field(spec, out, cfg.loss)
    except OSError as e:
        raise UsageError(f"cannot write {out}: {e.strerror}") from None
    print(f"wrote {len(field_)} points to {out}")
    return EXIT_OK


def cmd_synth_train(args) -> int:
    overrides = dict(config.parse_override(s) for s in (args.set or []))
    if args.loss:
        overrides["train.loss_kind"] = args.loss
    cfg = config.resolve(args.config, overrides)
    out_dir = Path(args.out_dir or cfg.output.dir)
    try:
        model, history = detector.train(cfg.train, cfg.scene, cfg.loss)
    except detector.TrainingDiverged as e:
        _write(out_dir / "history.json", _dump_json(e.history))
        print(f"error: training diverged at epoch {e.epoch}", file=sys.stderr)
        return EXIT_CONTRACT
    _write(out_dir / "history.json", _dump_json(history))
    _write(out_dir / "model.json", _dump_json(model.to_json()))
    _write(out_dir / "config.json", _dump_json(cfg.to_flat()))
    last = history[-1] if history else {}
    for k in ("ap_07", "ap_05", "aos_07", "pearson_r"):
        if k in last:
            v = last[k]
            print(f"{k}: {'undefined' if v is None else f'{v:.6g}'}")
    print(f"wrote history, model and config to {out_dir}")
    return EXIT_OK


def _parse_seeds(text: str) -> list[int]:
    """``N`` means seeds 0..N-1; ``a,b,c`` lists seeds; ``a-b`` is inclusive."""
    try:
        if "," in text:
            return [int(t) for t in text.split(",") if t.strip()]
        if "-" in text.strip("-"):
            lo, hi = text.split("-", 1)
            return list(range(int(lo), int(hi) + 1))
        n = int(text)
    except ValueError:
        raise UsageError(f"cannot parse seeds {text!r}") from None
    if n < 1:
        raise UsageError("seed count must be >= 1")
    return list(range(n))


def bench_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(detector.BENCH_FIELDS)
    for r in rows:
        w.writerow([r["seed"], r["loss_kind"]] + [_num(r[k]) for k in detector.BENCH_FIELDS[2:]])
    return buf.getvalue()


def cmd_synth_bench(args) -> int:
    cfg = _run_config(args)
    seeds = _parse_seeds(args.seeds)
    rows = detector.run_benchmark(cfg.train, cfg.scene, seeds, cfg.loss)
    out = Path(args.out or Path(cfg.output.dir) / "bench.csv")
    _write(out, bench_csv(rows))
    med = detector.bench_medians(rows)
    _write(out.with_suffix(".json"), _dump_json({"seeds": seeds, "medians": med}))
    print(f"{'loss_kind':<10} {'ap_07':>9} {'ap_05':>9} {'aos_07':>9} {'pearson_r':>10}")
    for kind, m in med.items():
        cells = ["undefined" if m[k] is None else f"{m[k]:.6g}" for k in ("ap_07", "ap_05", "aos_07", "pearson_r")]
        print(f"{kind:<10} {cells[0]:>9} {cells[1]:>9} {cells[2]:>9} {cells[3]:>10}")
    print(f"wrote {len(rows)} rows to {out}")
    return EXIT_OK


def _load_frames(gt_dir: Path, pred_dir: Path) -> list[FrameResult]:
    for d in (gt_dir, pred_dir):
        if not d.is_dir():
            raise UsageError(f"not a directory: {d}")
    frames = []
    for gt_path in sorted(gt_dir.glob("*.txt")):
        gts = [kitti.kitti_to_box3d(r) for r in _read_labels(gt_path) if not r.is_dont_care]
        pred_path = pred_dir / gt_path.name
        dets = []
        if pred_path.exists():
            for r in _read_labels(pred_path):
                if r.is_dont_care:
                    continue
                dets.append(Detection(kitti.kitti_to_box3d(r), 1.0 if r.score is None else r.score))
        frames.append(FrameResult(gts, dets))
    if not frames:
        raise UsageError(f"no label files (*.txt) in {gt_dir}")
    return frames


def _read_labels(path: Path):
    try:
        return kitti.read_label_path(path)
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None
    except kitti.KittiFormatError as e:
        raise UsageError(str(e)) from None


def cmd_evaluate(args) -> int:
    try:
        thresholds = [float(t) for t in args.thresholds.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"cannot parse thresholds {args.thresholds!r}") from None
    if not thresholds or any(not 0.0 <= t <= 1.0 for t in thresholds):
        raise UsageError("thresholds must be numbers in [0, 1]")
    frames = _load_frames(Path(args.gt_dir), Path(args.pred_dir))
    try:
        summ = evaluate(frames, thresholds, args.iou_kind)
    except EvaluationError as e:
        raise UsageError(str(e)) from None
    print(summ.format_table())
    if args.out:
        _write(Path(args.out), _dump_json(summ.to_dict()))
    return EXIT_OK


def _parse_box(text: str, flag: str) -> Box3D:
    try:
        vals = [float(t) for t in text.split(",")]
    except ValueError:
        raise UsageError(f"{flag}: expected 7 comma-separated numbers x,y,z,l,w,h,yaw, got {text!r}") from None
    if len(vals) != 7:
        raise UsageError(f"{flag}: expected 7 numbers x,y,z,l,w,h,yaw, got {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise UsageError(f"{flag}: values must be finite")
    try:
        return Box3D(*vals)
    except ValueError as e:
        raise UsageError(f"{flag}: {e}") from None


def cmd_iou(args) -> int:
    a = _parse_box(args.box_a, "--box-a")
    b = _parse_box(args.box_b, "--box-b")
    print(f"bev {bev_iou(a, b):.6f}")
    print(f"3d {iou_3d(a, b):.6f}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_config_flags(p):
    p.add_argument("--config", help="JSON file of section.field keys")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config key; VALUE is parsed as JSON (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="harmonic3d", description="Harmonic multi-task loss toolkit for 3D box detection.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gradcheck", help="compare analytic loss partials with finite differences")
    p.add_argument("--n", type=int, default=10000, help="samples per direction label")
    p.add_argument("--tol", type=float, default=1e-6, help="relative tolerance")
    p.add_argument("--tol-abs", type=float, default=1e-9, help="errors below this always pass")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", help="also write the report as JSON")
    _add_config_flags(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("gradfield", help="sample one loss partial on a 3-D grid and write CSV")
    p.add_argument("--partial", choices=analysis.PARTIALS, required=True)
    p.add_argument("--loss", choices=("baseline", "harmonic"), required=True)
    p.add_argument("--out", required=True, help="CSV path; a .json sidecar is written next to it")
    p.add_argument("--resolution", type=int, default=22)
    p.add_argument("--dir-gt", type=int, choices=(0, 1), default=1)
    p.add_argument("--component", type=int, default=0, help="residual component for the reg field")
    _add_config_flags(p)
    p.set_defaults(func=cmd_gradfield)

    p = sub.add_parser("synth-train", help="train the toy detector on synthetic scenes")
    p.add_argument("--loss", choices=("baseline", "harmonic"))
    p.add_argument("--out-dir", help="defaults to output.dir from the config")
    _add_config_flags(p)
    p.set_defaults(func=cmd_synth_train)

    p = sub.add_parser("synth-bench", help="baseline vs harmonic over several seeds")
    p.add_argument("--seeds", default="10", help="count N (seeds 0..N-1), list a,b,c or range a-b")
    p.add_argument("--out", help="CSV path (default <output.dir>/bench.csv)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_synth_bench)

    p = sub.add_parser("evaluate", help="evaluate KITTI-format predictions against labels")
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--thresholds", default="0.7,0.5")
    p.add_argument("--iou-kind", choices=("bev", "3d"), default="bev")
    p.add_argument("--out", help="write the summary as JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("iou", help="BEV and 3D IoU of two boxes")
    p.add_argument("--box-a", required=True, help="x,y,z,l,w,h,yaw")
    p.add_argument("--box-b", required=True, help="x,y,z,l,w,h,yaw")
    p.set_defaults(func=cmd_iou)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, config.ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
