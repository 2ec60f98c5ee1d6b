"""Command-line entry point: ``pansharp-lab <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .classify import (
    classify_image,
    detail_only,
    format_binary_table,
    format_detail_table,
    two_step_classify,
)
from .fusion import FusionMethod, fuse_detailed
from .landcover import SampleError, read_samples_csv, select_samples
from .metrics import assess, format_quality_table
from .raster import (
    FALSE_COLOR,
    TRUE_COLOR,
    RasterImage,
    ResampleKernel,
    load_raster,
    render_composite,
    save_raster,
    upsample,
)
from .scene import RNG_ALGORITHM, SceneSpec, class_pixel_counts, make_ms, make_pan, synthesize_scene
from .svm import DEFAULT_C_GRID, DEFAULT_GAMMA_GRID

log = logging.getLogger("pansharp_lab")

METHOD_CHOICES = [m.value for m in FusionMethod]
KERNEL_CHOICES = [k.value for k in ResampleKernel]
# column groups of the classification report, PAN baseline first
BENCHMARK_IMAGES = ("PAN", "PCA", "GS", "IHS", "Wavelet", "UNB")


class CliError(Exception):
    def __init__(self, kind, message):
        super().__init__(message)
        self.kind = kind


def _write_manifest(out_path: Path, args, inputs: dict, parameters: dict, outputs: dict, extra=None):
    manifest = {
        "command": args.command,
        "argv": list(args._argv),
        "inputs": {k: str(v) for k, v in inputs.items()},
        "parameters": parameters,
        "tool": "pansharp-lab",
        "version": __version__,
        "outputs": {k: str(v) for k, v in outputs.items()},
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        manifest.update(extra)
    out_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def _parse_grid(text):
    if text is None:
        return None
    try:
        values = [float(_grid_value(v)) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not values:
        raise argparse.ArgumentTypeError("empty grid")
    return tuple(values)


def _grid_value(token: str) -> float:
    """Parse ``0.5``, ``8`` or ``2^-3`` style grid entries."""
    token = token.strip()
    if "^" in token:
        base, exp = token.split("^", 1)
        return float(base) ** float(exp)
    return float(token)


def _ensure_dir(path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


# -- simulate -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.spec:
        try:
            text = Path(args.spec).read_text()
        except OSError as exc:
            raise CliError("io", f"cannot read scene spec: {exc}") from None
        spec = SceneSpec.from_json(text)
    else:
        spec = SceneSpec()
    if args.seed is not None:
        spec.seed = args.seed
    spec.validate()
    out = _ensure_dir(args.out_dir)
    hr_ms, labels = synthesize_scene(spec)
    ms = make_ms(hr_ms, spec.ratio)
    pan = make_pan(hr_ms)
    samples = select_samples(labels, args.samples_per_class, margin=args.margin, seed=spec.seed)

    outputs = {
        "hr_ms": out / "hr_ms.bin",
        "ms": out / "ms.bin",
        "pan": out / "pan.bin",
        "labels": out / "labels.bin",
        "samples": out / "samples.csv",
    }
    save_raster(hr_ms, outputs["hr_ms"])
    save_raster(ms, outputs["ms"])
    save_raster(pan, outputs["pan"])
    save_raster(RasterImage(labels[None].astype(np.float64), spec.pixel_size_m), outputs["labels"])
    samples.to_csv(outputs["samples"])
    _write_manifest(
        out / "manifest.json",
        args,
        {"spec": args.spec or "<default>"},
        {"seed": spec.seed, "samples_per_class": args.samples_per_class, "margin": args.margin},
        outputs,
        {"scene_spec": spec.to_dict(), "rng": RNG_ALGORITHM, "class_pixels": class_pixel_counts(labels)},
    )
    print(f"wrote scene {spec.width}x{spec.height} (ratio {spec.ratio}, seed {spec.seed}) to {out}")
    return 0


# -- fuse ---------------------------------------------------------------------

def cmd_fuse(args) -> int:
    ms, pan = load_raster(args.ms), load_raster(args.pan)
    result = fuse_detailed(ms, pan, args.method, args.kernel, args.levels)
    out = Path(args.out)
    save_raster(result.image, out)
    params = {"method": result.method.value, "kernel": result.kernel.value, "ratio": result.ratio}
    if result.levels is not None:
        params["levels"] = result.levels
    extra = {}
    if result.weights is not None:
        extra["unb_weights"] = {"w": list(result.weights.w), "residual_rms": result.weights.residual_rms}
    outputs = {"fused": out}
    if args.composite:
        for name, triplet in (("true_color", TRUE_COLOR), ("false_color", FALSE_COLOR)):
            path = out.with_name(f"{out.stem}_{name}.ppm")
            render_composite(result.image, triplet, path)
            outputs[name] = path
    _write_manifest(out.with_name(out.stem + ".manifest.json"), args,
                    {"ms": args.ms, "pan": args.pan}, params, outputs, extra)
    print(f"{result.method.label}: wrote {result.image.width}x{result.image.height}x{result.image.bands} to {out}")
    return 0


# -- assess -------------------------------------------------------------------

def cmd_assess(args) -> int:
    ms = load_raster(args.ms)
    ref = upsample(ms, args.ratio, args.kernel)
    labels = args.labels.split(",") if args.labels else [Path(p).stem for p in args.fused]
    if len(labels) != len(args.fused):
        raise CliError("usage", f"{len(labels)} labels for {len(args.fused)} fused images")
    reports = []
    for path, label in zip(args.fused, labels):
        reports.append(assess(ref, load_raster(path), 1.0 / args.ratio, label))
    table = format_quality_table(reports)
    sys.stdout.write(table)
    if args.out_json:
        out = Path(args.out_json)
        payload = {"h_over_l": 1.0 / args.ratio, "reference": "upsampled MS", "kernel": args.kernel,
                   "reports": [r.to_dict() for r in reports]}
        out.write_text(json.dumps(payload, indent=2) + "\n")
        out.with_suffix(".txt").write_text(table)
        _write_manifest(out.with_name(out.stem + ".manifest.json"), args,
                        {"ms": args.ms, **{f"fused[{i}]": p for i, p in enumerate(args.fused)}},
                        {"ratio": args.ratio, "kernel": args.kernel}, {"report": out})
    return 0


# -- classify -----------------------------------------------------------------

def _grids(args):
    return (args.c_grid or DEFAULT_C_GRID, args.gamma_grid or DEFAULT_GAMMA_GRID)


def cmd_classify(args) -> int:
    image = load_raster(args.image)
    try:
        samples = read_samples_csv(args.samples, seed=args.seed)
        samples.check_bounds(image.width, image.height)
    except SampleError as exc:
        raise CliError("samples", str(exc)) from None
    out = _ensure_dir(args.out_dir)
    C_grid, gamma_grid = _grids(args)
    name = args.name or Path(args.image).stem
    outputs = {}
    results = {}
    if args.two_step:
        res = two_step_classify(image, samples, args.seed, C_grid, gamma_grid, args.folds)
        steps = {"binary": res.binary, "detail": res.detail}
    else:
        steps = {"detail": detail_only(image, samples, args.seed, C_grid, gamma_grid, args.folds)}
    for key, step in steps.items():
        results[key] = step.to_dict()
        text = (format_binary_table if key == "binary" else format_detail_table)({name: step.confusion})
        (out / f"{key}_confusion.txt").write_text(text)
        (out / f"{key}_confusion.json").write_text(json.dumps(step.confusion.to_dict(), indent=2) + "\n")
        (out / f"{key}_model.json").write_text(step.model.to_json() + "\n")
        outputs[f"{key}_confusion"] = out / f"{key}_confusion.txt"
        outputs[f"{key}_model"] = out / f"{key}_model.json"
        sys.stdout.write(text)
    if not args.no_label_map:
        label_map = classify_image(steps["detail"].model, image)
        save_raster(label_map, out / "label_map.bin")
        outputs["label_map"] = out / "label_map.bin"
    (out / "classification.json").write_text(json.dumps(results, indent=2) + "\n")
    _write_manifest(out / "manifest.json", args, {"image": args.image, "samples": args.samples},
                    {"two_step": args.two_step, "seed": args.seed, "folds": args.folds,
                     "C_grid": list(C_grid), "gamma_grid": list(gamma_grid)}, outputs)
    return 0


# -- benchmark ----------------------------------------------------------------

def _load_scene(scene_dir: Path):
    ms = load_raster(scene_dir / "ms.bin")
    pan = load_raster(scene_dir / "pan.bin")
    hr_path = scene_dir / "hr_ms.bin"
    hr = load_raster(hr_path) if hr_path.exists() else None
    return ms, pan, hr


def run_benchmark(ms, pan, samples, kernel="bicubic", seed=0, C_grid=DEFAULT_C_GRID,
                  gamma_grid=DEFAULT_GAMMA_GRID, folds=5, hr_ms=None, out_dir=None) -> dict:
    """Fuse with all five methods, assess each, and run the two-step protocol on PAN plus every fusion."""
    kernel = ResampleKernel.parse(kernel)
    ratio = pan.width // ms.width
    ref = upsample(ms, ratio, kernel)
    images = {"PAN": pan}
    quality, fusion_info, timings = {}, {}, {}
    for method in FusionMethod:
        t0 = time.perf_counter()
        res = fuse_detailed(ms, pan, method, kernel)
        timings[f"fuse_{method.value}"] = time.perf_counter() - t0
        images[method.label] = res.image
        report = assess(ref, res.image, 1.0 / ratio, method.label)
        if hr_ms is not None:
            report.extra["vs_truth"] = assess(hr_ms, res.image, 1.0 / ratio, method.label).to_dict()["aggregate"]
        quality[method.label] = report
        fusion_info[method.label] = {"levels": res.levels,
                                     "unb_weights": list(res.weights.w) if res.weights else None}
        if out_dir is not None:
            save_raster(res.image, out_dir / f"fused_{method.value}.bin")
            render_composite(res.image, TRUE_COLOR, out_dir / f"fused_{method.value}_true_color.ppm")
            render_composite(res.image, FALSE_COLOR, out_dir / f"fused_{method.value}_false_color.ppm")

    classification = {}
    for name in BENCHMARK_IMAGES:
        t0 = time.perf_counter()
        classification[name] = two_step_classify(images[name], samples, seed, C_grid, gamma_grid, folds)
        timings[f"classify_{name}"] = time.perf_counter() - t0
        log.info("%s: binary %.4f detail %.4f", name, classification[name].binary.confusion.accuracy,
                 classification[name].detail.confusion.accuracy)

    best_cc = max(quality, key=lambda k: quality[k].aggregate["cc"])
    pan_acc = classification["PAN"].binary.confusion.accuracy
    trends = {
        "highest_cc_method": best_cc,
        "wavelet_highest_cc": best_cc == "Wavelet",
        "fusions_beating_pan_binary": [n for n in BENCHMARK_IMAGES[1:]
                                       if classification[n].binary.confusion.accuracy > pan_acc],
    }
    trends["any_fusion_beats_pan"] = bool(trends["fusions_beating_pan_binary"])
    return {
        "ratio": ratio,
        "kernel": kernel.value,
        "quality": quality,
        "fusion": fusion_info,
        "classification": classification,
        "trends": trends,
        "timings_s": timings,
    }


def benchmark_text(result: dict) -> str:
    q = result["quality"]
    cls = result["classification"]
    parts = [
        "Quantitative assessment of fused images (reference: upsampled MS)\n",
        format_quality_table([q[m] for m in q]),
        "\nConfusion matrix and overall accuracy, impervious / non-impervious\n",
        format_binary_table({n: cls[n].binary.confusion for n in cls}),
        "\nConfusion matrix for detail classification\n",
        format_detail_table({n: cls[n].detail.confusion for n in ("UNB", "PAN") if n in cls}),
        "\nTrend checks\n",
    ]
    t = result["trends"]
    parts.append(f"  highest band-averaged CC: {t['highest_cc_method']}\n")
    parts.append(f"  fusions beating PAN on IS/NIS: {', '.join(t['fusions_beating_pan_binary']) or 'none'}\n")
    return "".join(parts)


def benchmark_json(result: dict) -> dict:
    return {
        "ratio": result["ratio"],
        "kernel": result["kernel"],
        "quality": {k: v.to_dict() for k, v in result["quality"].items()},
        "fusion": result["fusion"],
        "classification": {k: v.to_dict() for k, v in result["classification"].items()},
        "accuracy": {k: {"binary": v.binary.confusion.accuracy, "detail": v.detail.confusion.accuracy}
                     for k, v in result["classification"].items()},
        "trends": result["trends"],
        "timings_s": result["timings_s"],
    }


def cmd_benchmark(args) -> int:
    scene_dir = Path(args.scene_dir)
    out = _ensure_dir(args.out_dir)
    t0 = time.perf_counter()
    ms, pan, hr = _load_scene(scene_dir)
    try:
        samples = read_samples_csv(scene_dir / "samples.csv", seed=args.seed)
    except (OSError, SampleError) as exc:
        raise CliError("samples", str(exc)) from None
    C_grid, gamma_grid = _grids(args)
    result = run_benchmark(ms, pan, samples, args.kernel, args.seed, C_grid, gamma_grid, args.folds,
                           hr_ms=hr, out_dir=out)
    result["timings_s"]["total"] = time.perf_counter() - t0
    text = benchmark_text(result)
    (out / "report.txt").write_text(text)
    (out / "report.json").write_text(json.dumps(benchmark_json(result), indent=2) + "\n")
    _write_manifest(out / "manifest.json", args, {"scene_dir": scene_dir},
                    {"kernel": args.kernel, "seed": args.seed, "folds": args.folds,
                     "C_grid": list(C_grid), "gamma_grid": list(gamma_grid)},
                    {"report": out / "report.json", "text": out / "report.txt"})
    sys.stdout.write(text)
    return 0


# -- composite / rerun --------------------------------------------------------

def cmd_composite(args) -> int:
    image = load_raster(args.image)
    try:
        triplet = tuple(int(v) for v in args.bands.split(","))
    except ValueError:
        raise CliError("usage", f"--bands must be three comma-separated integers, got {args.bands!r}") from None
    render_composite(image, triplet, args.out)
    return 0


def cmd_rerun(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    argv = manifest.get("argv")
    if not argv:
        raise CliError("manifest", "manifest has no recorded argv")
    return main(argv)


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pansharp-lab", description=__doc__)
    p.add_argument("--version", action="version", version=f"pansharp-lab {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic scene (hr_ms, ms, pan, labels, samples)")
    s.add_argument("spec", nargs="?", help="scene spec JSON (defaults used when omitted)")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--seed", type=int, default=None, help="override the seed in the scene file")
    s.add_argument("--samples-per-class", type=int, default=500)
    s.add_argument("--margin", type=int, default=1, help="homogeneous neighbourhood radius for samples")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fuse", help="pansharpen an MS raster with a PAN raster")
    f.add_argument("ms")
    f.add_argument("pan")
    f.add_argument("--method", required=True, choices=METHOD_CHOICES)
    f.add_argument("--kernel", default="bicubic", choices=KERNEL_CHOICES)
    f.add_argument("--levels", type=int, default=None, help="wavelet levels (default log2 of the ratio)")
    f.add_argument("--out", required=True)
    f.add_argument("--composite", action="store_true", help="also write true/false colour PPMs")
    f.set_defaults(func=cmd_fuse)

    a = sub.add_parser("assess", help="quality metrics of fused images against the upsampled MS")
    a.add_argument("ms")
    a.add_argument("fused", nargs="+")
    a.add_argument("--ratio", type=int, default=4)
    a.add_argument("--kernel", default="bicubic", choices=KERNEL_CHOICES)
    a.add_argument("--labels", help="comma-separated row labels (default: file stems)")
    a.add_argument("--out-json")
    a.set_defaults(func=cmd_assess)

    c = sub.add_parser("classify", help="SVM classification of an image at labelled sample pixels")
    c.add_argument("image")
    c.add_argument("samples")
    c.add_argument("--two-step", action="store_true", help="IS/NIS step followed by six-class step")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--folds", type=int, default=5)
    c.add_argument("--c-grid", type=_parse_grid, default=None, help="e.g. 2^-5,2^-3,1")
    c.add_argument("--gamma-grid", type=_parse_grid, default=None)
    c.add_argument("--name", help="column label in the text tables (default: image stem)")
    c.add_argument("--no-label-map", action="store_true")
    c.add_argument("--out-dir", required=True)
    c.set_defaults(func=cmd_classify)

    b = sub.add_parser("benchmark", help="all fusions + PAN: quality table and two-step classification")
    b.add_argument("scene_dir")
    b.add_argument("--out-dir", required=True)
    b.add_argument("--kernel", default="bicubic", choices=KERNEL_CHOICES)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--folds", type=int, default=5)
    b.add_argument("--c-grid", type=_parse_grid, default=None)
    b.add_argument("--gamma-grid", type=_parse_grid, default=None)
    b.set_defaults(func=cmd_benchmark)

    k = sub.add_parser("composite", help="render a raster as an 8-bit PPM colour composite")
    k.add_argument("image")
    k.add_argument("--bands", default="2,1,0", help="band indices for R,G,B (default true colour)")
    k.add_argument("--out", required=True)
    k.set_defaults(func=cmd_composite)

    r = sub.add_parser("rerun", help="repeat a command recorded in a manifest")
    r.add_argument("manifest")
    r.set_defaults(func=cmd_rerun)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        kind, msg = exc.kind, str(exc)
    except (ValueError, OSError) as exc:
        kind, msg = type(exc).__name__, str(exc)
    sys.stderr.write(json.dumps({"error": kind, "message": msg}) + "\n")
    return 1


if __name__ == "__main__":
    sys.exit(main())
