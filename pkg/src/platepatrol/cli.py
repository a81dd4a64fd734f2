"""Command-line entry point: recognize, bench, patrol, synth, serve.

Exit codes: 0 success, 1 operational failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import AppConfig, ConfigError

log = logging.getLogger("platepatrol")


def _add_pipeline_flags(p, variant_append=False):
    p.add_argument("--backend", choices=("dual", "lmm"), default="dual",
                   help="dual: detector + OCR on the plate ROI; lmm: multimodal model on the full image")
    p.add_argument("--detector", choices=("oracle", "heuristic", "external"), default="heuristic",
                   help="plate detector for the dual backend (oracle reads <image>.box sidecars)")
    p.add_argument("--detector-url", help="endpoint for --detector external")
    p.add_argument("--ocr", choices=("baseline", "external"), default="baseline",
                   help="text reader for the dual backend")
    p.add_argument("--ocr-command", help="command for --ocr external (PNG on stdin, text on stdout)")
    p.add_argument("--ocr-url", help="HTTP endpoint for --ocr external")
    if variant_append:
        p.add_argument("--variant", choices=("original", "gray", "binary"), action="append",
                       help="ROI preprocessing variant; repeat for several rows (default: all three)")
    else:
        p.add_argument("--variant", choices=("original", "gray", "binary"), default="binary",
                       help="ROI preprocessing variant for the dual backend")
    p.add_argument("--config", type=Path, help="YAML application config (LMM endpoint, key env var, ...)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="platepatrol", description="Parking patrol plate recognition toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("recognize", help="read the plate in one image")
    p.add_argument("file", type=Path, help="PNG or JPEG image")
    _add_pipeline_flags(p)
    p.add_argument("--json", action="store_true", help="print the full result document")

    p = sub.add_parser("bench", help="accuracy/latency table over a filename-annotated folder")
    p.add_argument("--dataset", type=Path, required=True, help="folder of images named by their plate")
    _add_pipeline_flags(p, variant_append=True)
    p.add_argument("--repeats", type=int, default=None, help="passes over the dataset (default from config or 1)")
    p.add_argument("--out", type=Path, help="write the table here instead of stdout")
    p.add_argument("--format", choices=("markdown", "csv"), default=None, help="table format")
    p.add_argument("--parallel", action="store_true", help="score images concurrently; disables timing")
    p.add_argument("--log-lines", action="store_true", help="print one line per image to stderr")

    p = sub.add_parser("patrol", help="run one patrol pass over a simulated lot")
    p.add_argument("--scenario", type=Path, required=True, help="YAML scenario document")

    p = sub.add_parser("synth", help="render a synthetic plate image")
    p.add_argument("--plate", required=True, help="plate text, e.g. HPJ149")
    p.add_argument("--out", type=Path, required=True, help="output PNG path")
    p.add_argument("--margin", type=int, default=20, help="white border in pixels")
    p.add_argument("--cell-size", type=int, default=6, help="pixels per glyph cell")
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian noise sigma (gray levels)")
    p.add_argument("--rotation", type=float, default=0.0, help="rotation in degrees, |r| <= 10")
    p.add_argument("--blur", type=int, default=0, help="box blur radius in pixels")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("--box", action="store_true", help="also write the <out>.box annotation sidecar")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", type=Path, required=True, help="YAML application config")
    p.add_argument("--host", default="127.0.0.1", help="bind address")
    p.add_argument("--port", type=int, default=8080, help="bind port")
    return parser


def _pipeline(args, variant=None):
    from .recognizer import PipelineConfig

    if args.backend == "lmm":
        return PipelineConfig.lmm()
    return PipelineConfig("dual_pipeline", args.detector, args.ocr, variant or args.variant)


def _deps(args, cfg: AppConfig) -> dict:
    deps = {}
    if args.backend == "lmm":
        deps["lmm_client"] = cfg.make_lmm_client()
    if args.detector == "external":
        deps["detector_params"] = {"url": args.detector_url}
    if args.ocr == "external":
        cmd = args.ocr_command.split() if args.ocr_command else None
        deps["ocr_params"] = {"command": cmd, "url": args.ocr_url}
    return deps


def _config(args) -> AppConfig:
    return AppConfig.load(args.config) if getattr(args, "config", None) else AppConfig()


def cmd_recognize(args) -> int:
    from .recognizer import build_recognizer

    if not args.file.exists():
        print(f"error: no such file: {args.file}", file=sys.stderr)
        return 1
    cfg = _config(args)
    rec = build_recognizer(_pipeline(args), **_deps(args, cfg))
    result = rec.recognize(args.file)
    if args.json:
        print(json.dumps(result.to_dict(), indent=2))
    elif result.ok:
        print(f"{result.plate}\t{result.timing:.4f}s\tattempts={result.attempts}")
    else:
        print(f"error: {result.failure}: {result.detail}", file=sys.stderr)
    return 0 if result.ok else 1


def cmd_bench(args) -> int:
    from .evalbench import DatasetError, emit_table, load_dataset, run_bench
    from .recognizer import build_recognizer

    cfg = _config(args)
    try:
        items = load_dataset(args.dataset)
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.backend == "lmm":
        configs = [_pipeline(args)]
    else:
        configs = [_pipeline(args, v) for v in (args.variant or ("original", "gray", "binary"))]
    deps = _deps(args, cfg)
    repeats = args.repeats or cfg.bench.repeats
    report = run_bench(items, configs, repeats, factory=build_recognizer, parallel=args.parallel, **deps)
    if args.log_lines:
        for records in report.records.values():
            for r in records:
                print(r.log_line(), file=sys.stderr)
    table = emit_table(report.summaries, args.format or cfg.bench.format)
    if args.out:
        args.out.write_text(table)
    else:
        sys.stdout.write(table)
    for label, err in report.errors:
        print(f"error: row {label} aborted: {err}", file=sys.stderr)
    return 0 if report.ok else 1


def cmd_patrol(args) -> int:
    from .patrol import Scenario, run_scenario

    sc = Scenario.load(args.scenario)
    report = run_scenario(sc)
    print(json.dumps(report.to_dict(), indent=2, default=str))
    return 0 if not report.errors else 1


def cmd_synth(args) -> int:
    from .detection import write_sidecar
    from .imaging import save_image
    from .plate_synth import DegradeSpec, default_atlas, degrade, render_plate
    from .plates import normalize_plate

    plate = normalize_plate(args.plate)
    img, box = render_plate(plate, default_atlas(args.cell_size), args.margin)
    img = degrade(img, DegradeSpec(args.noise, args.rotation, args.blur, args.seed))
    save_image(img, args.out)
    if args.box:
        write_sidecar(args.out, box)
    print(f"{args.out}\t{img.width}x{img.height}\tbox={box.x},{box.y},{box.w},{box.h}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(AppConfig.load(args.config))
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


COMMANDS = {"recognize": cmd_recognize, "bench": cmd_bench, "patrol": cmd_patrol,
            "synth": cmd_synth, "serve": cmd_serve}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
