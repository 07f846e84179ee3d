import argparse
import csv
import json
import logging
import os
import sys
from argparse import RawTextHelpFormatter
from collections import Counter
from typing import Any, Dict, List, Sequence

from voxcascade import VoxCascade
from voxcascade.config.settings import (ARCHITECTURES, DEFAULT_MEMORY_SIDES,
                                        LABEL_TRANSFORMS, LR_ONLY_OUTPUT_NAME,
                                        MANIFEST_NAME, MASK_SUFFIX,
                                        METRIC_COLUMNS, PHANTOM_NAME,
                                        SCALE_OUTPUT_NAME, SKETCH_OUTPUT_NAME)
from voxcascade.exceptions import (CheckpointMismatchError, GeometryError,
                                   VolumeFormatError)
from voxcascade.logic.volume import load_volume, save_volume, unique_hash

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3
VALIDATION_ERRORS = (VolumeFormatError, GeometryError, CheckpointMismatchError, FileNotFoundError, ValueError)


def _shape(text: str) -> List[int]:
    try:
        shape = [int(n) for n in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected z,y,x integers, got {text!r}")
    if len(shape) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated sides, got {text!r}")
    return shape


def _existing(path: str, flag: str) -> str:
    if path is None or not os.path.exists(path):
        raise FileNotFoundError(f"{flag}: no such file or directory: {path}")
    return path


def _load_config(path: str) -> Dict[str, Any]:
    """
    Load config from a JSON file
    """
    if not path:
        return {}
    with open(_existing(path, "--config")) as f:
        return json.load(f)


def _build(args, **overrides) -> VoxCascade:
    config = _load_config(args.config)
    config["seed"] = args.seed
    config["threads"] = args.threads
    for key, value in overrides.items():
        if value is not None:
            config[key] = value
    return VoxCascade(config)


def _write_json(description: Dict[str, Any], stream=None) -> None:
    stream = stream or sys.stdout
    json.dump(description, stream, indent=2, sort_keys=True)
    stream.write("\n")


def cmd_phantom(args) -> None:
    from voxcascade.logic.phantom import PhantomSpec, gen_phantom

    os.makedirs(args.out, exist_ok=True)
    domains = ("smooth", "noisy") if args.domain == "both" else (args.domain,)
    entries = []
    for seed in range(args.seed, args.seed + args.count):
        for domain in domains:
            spec = PhantomSpec(seed, args.side, args.blobs, domain, args.lesion_radius)
            volume, mask = gen_phantom(spec)
            stem = os.path.join(args.out, PHANTOM_NAME.format(seed=seed, domain=domain))
            save_volume(volume, stem + ".vol")
            save_volume(mask, stem + MASK_SUFFIX)
            entries.append({
                "seed": seed, "side": spec.side, "n_blobs": spec.n_blobs, "domain": domain,
                "lesion_radius": spec.lesion_radius,
                "volume": os.path.basename(stem + ".vol"), "mask": os.path.basename(stem + MASK_SUFFIX),
                "sha1": unique_hash(stem + ".vol"),
            })
    with open(os.path.join(args.out, MANIFEST_NAME), "w") as f:
        _write_json({"phantoms": entries}, f)
    logger.info("Wrote %d phantoms to %s", len(entries), args.out)


def cmd_sketch(args) -> None:
    vc = _build(args, lr_side=args.lr, patch_side=args.patch)
    volume = vc.read_volume(_existing(args.input, "--input"))
    mask = load_volume(_existing(args.mask, "--mask")) if args.mask else None
    os.makedirs(args.out, exist_ok=True)
    for scale, sketch in enumerate(vc.sketch(volume, mask, args.transform)):
        save_volume(sketch, os.path.join(args.out, SKETCH_OUTPUT_NAME.format(scale=scale)))


def cmd_plan(args) -> None:
    from voxcascade.logic.scale_plan import plan_to_json

    vc = _build(args, lr_side=args.lr, patch_side=args.patch, valid_margin=args.margin)
    _write_json(plan_to_json(vc.plan(args.shape), vc.valid_margin, with_jobs=args.jobs))


def cmd_train(args) -> None:
    config = _load_config(args.config)
    training = dict(config.get("training", {}))
    for key, value in (("epochs", args.epochs), ("lambda_l1", args.lambda_l1),
                       ("patches_per_volume", args.patches)):
        if value is not None:
            training[key] = value
    if args.no_edges:
        training["use_edges"] = False
    if args.no_prev_scale:
        training["use_prev_scale"] = False
    vc = _build(args, lr_side=args.lr, patch_side=args.patch, training=training)
    scales = None if args.scale is None else [args.scale]
    vc.train_directory(_existing(args.data, "--data"), args.out, scales, args.balance_labels)


def cmd_infer(args) -> None:
    vc = _build(args, valid_margin=args.margin)
    volume = vc.read_volume(_existing(args.input, "--input"))
    mask = load_volume(_existing(args.mask, "--mask")) if args.mask else None
    checkpoints = vc.load_checkpoints(_existing(args.checkpoints, "--checkpoints"))
    os.makedirs(args.out, exist_ok=True)
    if args.lr_only:
        save_volume(vc.translate_lr_only(volume, checkpoints, mask), os.path.join(args.out, LR_ONLY_OUTPUT_NAME))
        return
    if args.naive:
        outputs = vc.translate_patchwise(volume, checkpoints, mask)
    else:
        outputs = vc.translate(volume, checkpoints, mask, not args.no_edges, not args.no_prev_scale)
    for scale, output in enumerate(outputs):
        save_volume(output, os.path.join(args.out, SCALE_OUTPUT_NAME.format(scale=scale)))


def cmd_metrics(args) -> None:
    from voxcascade.logic.metrics import evaluate

    scores = evaluate(load_volume(_existing(args.a, "--a")), load_volume(_existing(args.b, "--b")))
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    writer.writerow([repr(scores[column]) for column in METRIC_COLUMNS])


def cmd_estimate_mem(args) -> None:
    from voxcascade.base_classes.base_architecture import get_architecture
    from voxcascade.logic.memory_model import (estimate_memory, fit_growth,
                                               reports_to_csv)

    arches = sorted(ARCHITECTURES) if args.arch == "all" else [args.arch]
    reports = []
    for arch in arches:
        for side in args.side:
            if args.arch == "all" and side < get_architecture(arch).minimum_side:
                logger.debug("Skipping %s at side %d", arch, side)
                continue
            reports.append(estimate_memory(arch, side))
    if args.out:
        with open(args.out, "w", newline="") as f:
            reports_to_csv(reports, f)
    else:
        reports_to_csv(reports, sys.stdout)
    if args.fit:
        # the cascade networks start at side 64 and may have too few sides to fit
        counts = Counter(report.arch for report in reports)
        fitted = [report for report in reports if counts[report.arch] >= 3]
        for arch, exponent in sorted(fit_growth(fitted).items()):
            logger.info("%s grows as side^%.3f", arch, exponent)


def cmd_plot_mem(args) -> None:
    from voxcascade.logic.memory_model import plot_memory, reports_from_csv

    with open(_existing(args.csv, "--csv"), newline="") as f:
        reports = reports_from_csv(f)
    plot_memory(reports, args.out)


def cmd_gradcheck(args) -> bool:
    from voxcascade.nn.gradcheck import failing, run_gradchecks

    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(("check", "seed", "relative_error"))
    failures = []
    for seed in range(args.seed, args.seed + args.seeds):
        errors = run_gradchecks(seed, networks=not args.no_networks)
        for name, error in errors.items():
            writer.writerow((name, seed, repr(error)))
        failures += [f"{name} (seed {seed})" for name in failing(errors, args.tolerance)]
    if failures:
        logger.error("Gradient checks above %g: %s", args.tolerance, ", ".join(failures))
    return not failures


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="Seed of every random draw.")
    common.add_argument("--threads", type=int, default=1, help="Worker parallelism; 1 is bit-reproducible.")
    common.add_argument("-c", "--config", help="Path to a JSON configuration file.")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Log debug messages.")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Log warnings and errors only.")

    ladder = argparse.ArgumentParser(add_help=False)
    ladder.add_argument("--lr", type=int, help="Side of the scale 0 volume.")
    ladder.add_argument("--patch", type=int, help="Side of the HR patches.")

    ablation = argparse.ArgumentParser(add_help=False)
    ablation.add_argument("--no-edges", action="store_true", help="Blank the sketch input of the HR generators.")
    ablation.add_argument("--no-prev-scale", action="store_true",
                          help="Blank the previous-scale input of the HR generators.")

    parser = argparse.ArgumentParser(
        prog="voxcascade",
        description="VoxCascade: multi-scale patch-based GAN generation of 3D volumes",
        formatter_class=RawTextHelpFormatter)
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True

    def command(name, help_text, *parents):
        return commands.add_parser(name, help=help_text, parents=[common, *parents],
                                   formatter_class=RawTextHelpFormatter)

    p = command("phantom", "Write procedural phantom volumes, masks and a manifest.")
    p.add_argument("--out", required=True, help="Output directory.")
    p.add_argument("--count", type=int, default=1, help="Number of seeds, starting at --seed.")
    p.add_argument("--side", type=int, default=64)
    p.add_argument("--blobs", type=int, default=4)
    p.add_argument("--domain", choices=("smooth", "noisy", "both"), default="both")
    p.add_argument("--lesion-radius", type=float, help="Radius of the lesion ball, in voxels.")
    p.set_defaults(run=cmd_phantom)

    p = command("sketch", "Write the sketch pyramid of a volume.", ladder)
    p.add_argument("--input", required=True, help="VOL1 volume.")
    p.add_argument("--mask", help="VOL1 label mask of the same shape.")
    p.add_argument("--transform", choices=LABEL_TRANSFORMS, default="identity")
    p.add_argument("--out", required=True, help="Output directory.")
    p.set_defaults(run=cmd_sketch)

    p = command("plan", "Print the scale plan of a shape as JSON.", ladder)
    p.add_argument("--shape", type=_shape, required=True, help="Original shape.\nUsage: --shape z,y,x")
    p.add_argument("--margin", type=int, help="Valid margin of the patches.")
    p.add_argument("--no-jobs", dest="jobs", action="store_false", help="Leave out the patch jobs.")
    p.set_defaults(run=cmd_plan)

    p = command("train", "Train the cascade on a directory of volumes.", ladder, ablation)
    p.add_argument("--data", required=True, help="Directory of training volumes (and <stem>.mask.vol masks).")
    p.add_argument("--out", required=True, help="Directory for checkpoints and loss logs.")
    p.add_argument("--scale", type=int, help="Train only this scale.")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lambda-l1", type=float, help="Weight of the L1 term of the generator loss.")
    p.add_argument("--patches", type=int, help="Patches per volume and epoch on the HR scales.")
    p.add_argument("--balance-labels", action="store_true",
                   help="Repeat labelled volumes with mirrored and rescaled labels.")
    p.set_defaults(run=cmd_train)

    p = command("infer", "Generate a volume from the sketch of another one.", ablation)
    p.add_argument("--input", required=True, help="VOL1 volume the sketch is taken from.")
    p.add_argument("--mask", help="VOL1 label mask of the same shape.")
    p.add_argument("--checkpoints", required=True, help="Directory holding scale0.ckpt, scale1.ckpt, ...")
    p.add_argument("--out", required=True, help="Output directory.")
    p.add_argument("--margin", type=int, help="Valid margin of the patches.")
    baseline = p.add_mutually_exclusive_group()
    baseline.add_argument("--lr-only", action="store_true", help="Upsample the scale 0 output instead.")
    baseline.add_argument("--naive", action="store_true",
                          help="Independent patches: no previous-scale input, no margin.")
    p.set_defaults(run=cmd_infer)

    p = command("metrics", "Print ssim, mae, mse and psnr of two volumes as CSV.")
    p.add_argument("--a", required=True, help="First VOL1 volume.")
    p.add_argument("--b", required=True, help="Second VOL1 volume.")
    p.set_defaults(run=cmd_metrics)

    p = command("estimate-mem", "Print the analytic training memory as CSV.")
    p.add_argument("--arch", choices=sorted(ARCHITECTURES) + ["all"], default="all")
    p.add_argument("--side", type=int, nargs="+", default=list(DEFAULT_MEMORY_SIDES))
    p.add_argument("--out", help="CSV file instead of stdout.")
    p.add_argument("--fit", action="store_true", help="Log the fitted growth exponent per architecture.")
    p.set_defaults(run=cmd_estimate_mem)

    p = command("plot-mem", "Draw a memory CSV as a log-scale SVG chart.")
    p.add_argument("--csv", required=True, help="CSV written by estimate-mem.")
    p.add_argument("--out", required=True, help="SVG file.")
    p.set_defaults(run=cmd_plot_mem)

    p = command("gradcheck", "Finite-difference check of every differentiable op and network.")
    p.add_argument("--seeds", type=int, default=1, help="Number of seeds, starting at --seed.")
    p.add_argument("--no-networks", action="store_true", help="Check the ops only.")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(run=cmd_gradcheck)
    return parser


def main(argv: Sequence[str] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        succeeded = args.run(args)
    except VALIDATION_ERRORS as err:
        logger.error("%s", err)
        return EXIT_VALIDATION
    except Exception as err:
        logger.exception("%s failed: %s", args.command, err)
        return EXIT_RUNTIME
    return EXIT_RUNTIME if succeeded is False else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
