"""Command-line interface.

Subcommands: ``masks`` (freeze a mask set), ``explain`` (compute a
saliency map), ``evaluate`` (insertion/deletion games for given maps),
``benchmark`` (dataset-level report), ``selftest`` (desk-scale
verification).  Exit codes: 0 success, 2 validation error, 3 transport
error, 4 internal invariant violation.

Every command writes a ``run.json`` provenance file (seed, full
configuration, artifact version) into the output directory; reruns with
identical inputs reproduce every output byte for byte.  The environment
variable ``SCB_ENDPOINT`` supplies the default remote scorer.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ContractViolationError,
    ProtocolError,
    ResourceError,
    TransportError,
    ValidationError,
)
from .images import load_image, scan_dataset
from .masks import (
    DEFAULT_COUNT,
    DEFAULT_GRID,
    DEFAULT_KEEP_PROB,
    MaskConfig,
    empirical_zero_rate,
    generate_mask_set,
    load_mask_set,
    save_mask_set,
)
from .metrics import (
    GameConfig,
    auc,
    deletion_curve,
    insertion_curve,
    run_benchmark,
    write_curve_csv,
)
from .render import export_curve_plot, render_heatmap
from .saliency import (
    config_digest,
    exact_necessity,
    load_external_map,
    rise_scores,
    save_map,
    shape_scores,
)
from .scorers import (
    SyntheticSpec,
    linear_logit_scorer,
    linear_softmax_scorer,
    region_mean_scorer,
    remote_scorer,
)

ENDPOINT_ENV = "SCB_ENDPOINT"


def _parse_hw(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from exc


def resolve_scorer(spec: str | None, timeout: float = 30.0):
    """Build a scorer from a CLI spec string.

    ``linear:FILE.npz`` (array ``weights`` (K, H, W), optional ``channels``),
    ``region:FILE.json`` ({height, width, channels?, regions: [[y0,x0,y1,x1]...]}),
    ``remote:URL`` or bare ``remote`` / omitted with SCB_ENDPOINT set.
    """
    if spec is None or spec == "remote":
        endpoint = os.environ.get(ENDPOINT_ENV)
        if not endpoint:
            raise ValidationError(
                f"no scorer given and {ENDPOINT_ENV} is not set; pass --scorer"
            )
        return remote_scorer(endpoint, timeout=timeout)
    if spec.startswith("remote:"):
        return remote_scorer(spec[len("remote:") :], timeout=timeout)
    if spec.startswith("linear:") or spec.startswith("logit:"):
        kind, path = spec.split(":", 1)
        with np.load(path) as archive:
            if "weights" not in archive:
                raise ValidationError(f"{path!r} has no 'weights' array")
            weights = archive["weights"]
            channels = int(archive["channels"]) if "channels" in archive else 1
        synth = SyntheticSpec(kind="linear_softmax", weights=weights, channels=channels)
        if kind == "logit":
            return linear_logit_scorer(synth)
        return linear_softmax_scorer(synth)
    if spec.startswith("region:"):
        path = spec[len("region:") :]
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        try:
            height, width = int(payload["height"]), int(payload["width"])
            regions = tuple(tuple(int(v) for v in r) for r in payload["regions"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad region spec {path!r}: {exc}") from exc
        synth = SyntheticSpec(
            kind="region_mean", regions=regions, channels=int(payload.get("channels", 1))
        )
        return region_mean_scorer(synth, height, width)
    raise ValidationError(f"unknown scorer spec {spec!r}")


def _mask_config_from(args, target: tuple[int, int]) -> MaskConfig:
    grid_h, grid_w = args.grid
    return MaskConfig(
        grid_h=grid_h,
        grid_w=grid_w,
        keep_prob=args.keep_prob,
        count=args.masks,
        target_h=target[0],
        target_w=target[1],
        seed=args.seed,
        upsample=not getattr(args, "no_upsample", False),
    )


def _game_config_from(args) -> GameConfig:
    return GameConfig(
        steps=args.steps,
        deletion_baseline=args.deletion_baseline.replace("-", "_"),
        insertion_start=args.insertion_start,
        blur_sigma=args.blur_sigma,
    )


def _write_provenance(out_dir: Path, command: str, args: argparse.Namespace) -> None:
    config = {
        k: v for k, v in sorted(vars(args).items()) if k != "func" and not callable(v)
    }
    payload = {
        "artifact_version": __version__,
        "command": command,
        "config": config,
    }
    (out_dir / "run.json").write_text(json.dumps(payload, indent=2, default=str) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_masks(args) -> int:
    out = _out_dir(args)
    config = _mask_config_from(args, args.size)
    mask_set = generate_mask_set(config)
    path = out / "masks.msk1"
    save_mask_set(mask_set, path)
    total = 0.0
    for start in range(0, len(mask_set), 256):
        vals = mask_set.values_batch(start, min(start + 256, len(mask_set)))
        total += float(vals.sum(dtype=np.float64))
    rate = total / (config.count * config.target_h * config.target_w)
    _write_provenance(out, "masks", args)
    print(
        f"wrote {path}: {config.count} masks at {config.target_h}x{config.target_w} "
        f"(grid {config.grid_h}x{config.grid_w}), empirical keep rate {rate:.4f}"
    )
    return 0


def cmd_explain(args) -> int:
    out = _out_dir(args)
    scorer = resolve_scorer(args.scorer)
    c, h, w = scorer.input_shape
    image = load_image(args.image, target=(h, w))
    if image.data.shape[0] == 1 and c == 3:
        image.data = np.repeat(image.data, 3, axis=0)
    if args.mask_file:
        mask_set = load_mask_set(args.mask_file)
    else:
        mask_set = generate_mask_set(_mask_config_from(args, (h, w)))
    class_id = args.class_id
    if class_id is None:
        class_id = int(np.argmax(scorer.score_one(image.data)))

    normalization = "analytic" if args.analytic_norm else "empirical"
    if args.method == "shape":
        smap = shape_scores(
            image.data, mask_set, scorer, class_id,
            normalization=normalization, workers=args.workers, image_id=image.image_id,
        )
    elif args.method == "rise":
        smap = rise_scores(
            image.data, mask_set, scorer, class_id,
            workers=args.workers, image_id=image.image_id,
        )
    else:
        raise ValidationError(f"cmd explain supports methods shape|rise, got {args.method!r}")

    map_path = out / f"{image.image_id}_{args.method}.smap"
    save_map(smap, map_path)
    if args.heatmap:
        render_heatmap(image, smap, out / f"{image.image_id}_{args.method}.png")
    _write_provenance(out, "explain", args)
    print(
        f"wrote {map_path}: method={args.method} class={class_id} "
        f"digest={smap.config_digest:016x} degenerate={smap.degenerate_pixels}"
    )
    return 0


def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    scorer = resolve_scorer(args.scorer)
    c, h, w = scorer.input_shape
    image = load_image(args.image, target=(h, w))
    if image.data.shape[0] == 1 and c == 3:
        image.data = np.repeat(image.data, 3, axis=0)
    class_id = args.class_id
    if class_id is None:
        class_id = int(np.argmax(scorer.score_one(image.data)))
    game = _game_config_from(args)

    curves, labels, results = [], [], []
    for map_path in args.map:
        label = Path(map_path).stem
        smap = load_external_map(map_path)
        ins = insertion_curve(image, smap, scorer, class_id, game)
        dele = deletion_curve(image, smap, scorer, class_id, game)
        write_curve_csv(ins, out / f"{label}.insertion.csv")
        write_curve_csv(dele, out / f"{label}.deletion.csv")
        curves.extend([ins, dele])
        labels.extend([f"{label} ins", f"{label} del"])
        results.append(
            {"label": label, "insertion_auc": auc(ins), "deletion_auc": auc(dele)}
        )
    export_curve_plot(curves, out / "curves.svg", labels=labels)
    payload = {"artifact_version": __version__, "class_id": class_id, "results": results}
    (out / "aucs.json").write_text(json.dumps(payload, indent=2) + "\n")
    _write_provenance(out, "evaluate", args)
    for row in results:
        print(
            f"{row['label']}: insertion {row['insertion_auc']:.4f} "
            f"deletion {row['deletion_auc']:.4f}"
        )
    return 0


def cmd_benchmark(args) -> int:
    out = _out_dir(args)
    scorer = resolve_scorer(args.scorer)
    _, h, w = scorer.input_shape
    dataset = scan_dataset(args.dataset)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    report = run_benchmark(
        dataset,
        methods,
        scorer,
        _mask_config_from(args, (h, w)),
        _game_config_from(args),
        reuse_masks=not args.fresh_masks,
        workers=args.workers,
        artifact_version=__version__,
    )
    (out / "report.json").write_text(report.to_json())
    (out / "report.txt").write_text(report.to_table())
    _write_provenance(out, "benchmark", args)
    print(report.to_table(), end="")
    if report.exclusions:
        print(f"excluded {len(report.exclusions)} (image, method) pairs; see report.json")
    return 0


def _selftest_checks(seed: int):
    from .metrics import ProbabilityCurve
    from .masks import enumerate_binary_grids, generate_grid, grid_probabilities, MaskSet

    def check_oracle_equivalence():
        spec = SyntheticSpec(kind="region_mean", regions=((0, 0, 2, 2), (1, 1, 3, 3)))
        scorer = region_mean_scorer(spec, 3, 3)
        gen = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
        image = gen.random((1, 3, 3), dtype=np.float32)
        grids = enumerate_binary_grids(3, 3)
        probs = grid_probabilities(grids, 0.1)
        config = MaskConfig(3, 3, 0.1, len(grids), 3, 3, seed, upsample=False)
        mask_set = MaskSet.from_arrays(grids.astype(np.float32), config)
        approx = shape_scores(image, mask_set, scorer, 0, weights=probs)
        exact = exact_necessity(image, config, scorer, 0)
        err = float(np.abs(approx.scores - exact.scores).max())
        assert err <= 1e-6, f"oracle deviation {err}"

    def check_linear_closed_form():
        gen = np.random.Generator(np.random.Philox(key=np.uint64(seed + 1)))
        weights = gen.random((2, 4, 4))
        image = gen.random((1, 4, 4), dtype=np.float32)
        spec = SyntheticSpec(kind="linear_softmax", weights=weights)
        scorer = linear_logit_scorer(spec)
        config = MaskConfig(4, 4, 0.1, 16, 4, 4, seed, upsample=False)
        exact = exact_necessity(image, config, scorer, 0)
        wi = weights[0] * image[0].astype(np.float64)
        expected = wi + 0.9 * (wi.sum() - wi)
        err = float(np.abs(exact.scores - expected).max())
        assert err <= 1e-9, f"closed-form deviation {err}"
        assert np.array_equal(
            np.argsort(-exact.scores.ravel(), kind="stable"),
            np.argsort(-wi.ravel(), kind="stable"),
        ), "ranking mismatch"

    def check_auc_algebra():
        flat = ProbabilityCurve([0.0, 0.5, 1.0], [0.625, 0.625, 0.625], "deletion", 0)
        assert auc(flat) == 0.625, f"constant AUC {auc(flat)}"
        bent = ProbabilityCurve([0.0, 0.5, 1.0], [1.0, 1.0, 0.0], "deletion", 0)
        assert auc(bent) == 0.75, f"hand trapezoid {auc(bent)}"
        gen = np.random.Generator(np.random.Philox(key=np.uint64(seed + 2)))
        for _ in range(1000):
            n = int(gen.integers(2, 30))
            fr = np.sort(gen.random(n - 2)) if n > 2 else np.empty(0)
            fr = np.unique(np.concatenate([[0.0], fr, [1.0]]))
            pr = gen.random(len(fr))
            value = auc(ProbabilityCurve(fr, pr, "insertion", 0))
            assert 0.0 <= value <= 1.0, f"AUC out of bounds: {value}"

    def check_mask_determinism():
        config = MaskConfig(7, 7, 0.1, 50, 28, 28, seed)
        a = generate_mask_set(config)
        b = generate_mask_set(config)
        for i in (0, 17, 49):
            assert np.array_equal(a[i].values, b[i].values), "mask regeneration differs"
            assert np.array_equal(generate_grid(config, i), a[i].source_grid)
        vals = a.values_batch(0, 50)
        assert vals.min() >= 0.0 and vals.max() <= 1.0, "mask values out of range"

    return [
        ("exhaustive-oracle equivalence", check_oracle_equivalence),
        ("linear closed form + ranking", check_linear_closed_form),
        ("AUC algebra", check_auc_algebra),
        ("mask determinism + range", check_mask_determinism),
    ]


def cmd_selftest(args) -> int:
    failures = 0
    for name, check in _selftest_checks(args.seed):
        try:
            check()
        except AssertionError as exc:
            failures += 1
            print(f"FAIL {name}: {exc}")
        else:
            print(f"PASS {name}")
    if failures:
        print(f"{failures} selftest check(s) failed")
        return 4
    print("all selftest checks passed")
    return 0


def _add_mask_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="64-bit root seed")
    p.add_argument("--masks", type=int, default=DEFAULT_COUNT, metavar="N",
                   help="number of masks")
    p.add_argument("--grid", type=_parse_hw, default=DEFAULT_GRID, metavar="HxW",
                   help="small binary grid size")
    p.add_argument("--keep-prob", type=float, default=DEFAULT_KEEP_PROB, metavar="P",
                   help="probability a grid cell stays visible")
    p.add_argument("--no-upsample", action="store_true",
                   help="use grids at image resolution directly (oracle mode)")


def _add_game_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--steps", type=int, default=224, metavar="K",
                   help="curve points beyond the start")
    p.add_argument("--deletion-baseline", choices=("black", "channel-mean"),
                   default="black")
    p.add_argument("--insertion-start", choices=("blur", "black"), default="blur")
    p.add_argument("--blur-sigma", type=float, default=5.0, metavar="S")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scbench",
        description="Black-box saliency generation and causal-metric evaluation bench",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("masks", help="generate and freeze a mask set (MSK1)")
    _add_mask_flags(p)
    p.add_argument("--size", type=_parse_hw, default=(224, 224), metavar="HxW",
                   help="target image resolution")
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=cmd_masks)

    p = sub.add_parser("explain", help="compute a saliency map (SMAP)")
    _add_mask_flags(p)
    p.add_argument("--image", required=True, metavar="PATH")
    p.add_argument("--scorer", metavar="SPEC",
                   help="linear:FILE.npz | region:FILE.json | remote:URL (default: $SCB_ENDPOINT)")
    p.add_argument("--method", choices=("shape", "rise"), default="shape")
    p.add_argument("--class-id", type=int, default=None,
                   help="class to explain (default: top-1)")
    p.add_argument("--mask-file", metavar="PATH", help="reuse a frozen MSK1 set")
    p.add_argument("--analytic-norm", action="store_true",
                   help="normalize by (1-keep_prob)*N instead of empirical sums")
    p.add_argument("--heatmap", action="store_true", help="also write an overlay PNG")
    p.add_argument("--workers", type=int, default=1, metavar="N")
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("evaluate", help="run both games for given saliency maps")
    _add_game_flags(p)
    p.add_argument("--image", required=True, metavar="PATH")
    p.add_argument("--scorer", metavar="SPEC")
    p.add_argument("--map", action="append", required=True, metavar="PATH",
                   help="SMAP file; repeatable")
    p.add_argument("--class-id", type=int, default=None)
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="dataset-level insertion/deletion report")
    _add_mask_flags(p)
    _add_game_flags(p)
    p.add_argument("--dataset", required=True, metavar="DIR")
    p.add_argument("--scorer", metavar="SPEC")
    p.add_argument("--methods", default="shape,rise",
                   help="comma-separated: shape, rise, external")
    p.add_argument("--fresh-masks", action="store_true",
                   help="regenerate masks per image under derived sub-seeds")
    p.add_argument("--workers", type=int, default=1, metavar="N")
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("selftest", help="desk-scale verification suite")
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ResourceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TransportError, ProtocolError) as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return 3
    except ContractViolationError as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
