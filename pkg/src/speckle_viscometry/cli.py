"""The ``speckle`` command line."""

import argparse
import json
import logging
import os
import sys

import speckle_viscometry.registry as registry
import speckle_viscometry.scenarios  # noqa: F401
from speckle_viscometry import (
    capturefx,
    classifier,
    experiment,
    framestore,
    pipeline,
    rheocal,
    specklesim,
    stabilizer,
)
from speckle_viscometry.errors import InvalidArgumentError, SpeckleError
from speckle_viscometry.models import (
    CalibrationModel,
    CaptureArtifactConfig,
    Channel,
    CropRegion,
    FrameSelection,
    ScenarioSpec,
    SimulationConfig,
)
from speckle_viscometry.utils import SpeckleMessage, load_model, setup_logging


def _read_text(path: str) -> str:
    """Read a UTF-8 file, mapping OS errors to invalid arguments."""
    try:
        with open(path, encoding="utf-8") as f:
            return f.read()
    except OSError as e:
        raise InvalidArgumentError(f"Cannot read {path}: {e}") from e


def _emit(document: str, out: str | None) -> None:
    """Write a JSON document to out, or to stdout when out is None."""
    if out is None:
        sys.stdout.write(document + "\n")
        return
    directory = os.path.dirname(os.path.abspath(out))
    os.makedirs(directory, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        f.write(document)


def _require_out(args: argparse.Namespace) -> str:
    """The --out value of commands that write a directory."""
    if not args.out:
        raise InvalidArgumentError(f"'{args.command}' needs --out")
    return args.out


def _scenario(args: argparse.Namespace) -> ScenarioSpec:
    """Resolve the scenario argument and apply --seed."""
    scenario = registry.get_scenario(args.scenario)
    if args.seed is not None:
        scenario = scenario.model_copy(update={"seed": args.seed})
    return scenario


def cmd_sim(args: argparse.Namespace) -> int:
    """Simulate a clean sequence from a flat JSON config."""
    config = load_model(SimulationConfig, _read_text(args.config))
    optics = config.optics()
    if args.seed is not None:
        optics = optics.model_copy(update={"seed": args.seed})
    seq = specklesim.simulate(config.liquid(), optics, args.threads)
    framestore.write_sequence(seq, _require_out(args))
    return 0


def cmd_distort(args: argparse.Namespace) -> int:
    """Apply capture artifacts to a sequence directory."""
    config = load_model(CaptureArtifactConfig, _read_text(args.config)) if args.config else CaptureArtifactConfig()
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})
    seq = framestore.read_sequence(args.in_dir, args.threads)
    log = capturefx.ArtifactLog()
    framestore.write_sequence(capturefx.distort(seq, config, log), args.out_dir)
    if args.log:
        _emit(
            json.dumps(
                {
                    "dark_frames": log.dark_frames,
                    "bar_frames": {str(k): list(v) for k, v in sorted(log.bar_frames.items())},
                    "skewed_frames": log.skewed_frames,
                },
                indent=2,
            ),
            args.log,
        )
    return 0


def cmd_preprocess(args: argparse.Namespace) -> int:
    """Keep one channel and trim the start/stop transients."""
    seq = framestore.preprocess(args.dir, args.leading, args.trailing, args.channel, args.threads)
    framestore.write_sequence(seq, _require_out(args))
    return 0


def cmd_stabilize(args: argparse.Namespace) -> int:
    """Select frames from a distorted capture."""
    seq = framestore.read_sequence(args.dir, args.threads)
    selection = stabilizer.stabilize(seq, args.threshold, args.n)
    _emit(selection.model_dump_json(indent=2), args.out)
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    """Correlation curve, V and tau_c of a sequence."""
    seq = framestore.read_sequence(args.dir, args.threads)
    selection = load_model(FrameSelection, _read_text(args.selection)) if args.selection else None
    region: CropRegion | str = args.crop
    if args.region:
        region = load_model(CropRegion, _read_text(args.region))
    curve = pipeline.analyze_sequence(seq, selection, region, args.tau)
    _emit(curve.model_dump_json(indent=2), args.out)
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    """Fit the cubic calibration to a CSV of (V, viscosity_cp) points."""
    model = rheocal.fit_calibration(rheocal.load_points_csv(args.points), args.liquid_class)
    _emit(model.model_dump_json(indent=2), args.out)
    if args.liquid_class:
        rheocal.save_calibration(model)
    return 0


def cmd_viscosity(args: argparse.Namespace) -> int:
    """Convert a viscosity coefficient to cP."""
    if args.model:
        model = load_model(CalibrationModel, _read_text(args.model))
    elif args.liquid_class:
        model = rheocal.load_calibration(args.liquid_class)
    else:
        raise InvalidArgumentError("viscosity needs --model or --liquid-class")
    _emit(rheocal.apply_calibration(model, args.v).model_dump_json(indent=2), args.out)
    return 0


def _dataset(args: argparse.Namespace, manifest: str) -> classifier.Dataset:
    """Featurize the sequences of a manifest."""
    entries = classifier.read_manifest_entries(manifest)
    root = args.root if args.root is not None else os.path.dirname(os.path.abspath(manifest))
    return classifier.build_dataset(entries, root, args.stabilize, args.n, args.threshold, args.crop, args.threads)


def cmd_classify_train(args: argparse.Namespace) -> int:
    """Train the one-vs-one SVM on a manifest."""
    model = classifier.train_svm(_dataset(args, args.manifest), C=args.C, gamma=args.gamma, threads=args.threads)
    if args.out:
        classifier.save_model(model, args.out)
    else:
        _emit(model.model_dump_json(), None)
    return 0


def _read_groups(path: str) -> dict[int, int]:
    """Read a class-to-group mapping from a JSON object of integer labels."""
    try:
        document = json.loads(_read_text(path))
        return {int(k): int(v) for k, v in document.items()}
    except (ValueError, TypeError, AttributeError) as e:
        raise InvalidArgumentError(f"Groups file {path} must map integer labels to integer groups: {e}") from e


def cmd_classify_eval(args: argparse.Namespace) -> int:
    """Evaluate a trained SVM on a manifest and write the confusion matrix."""
    model = classifier.load_svm(args.model)
    mapping = _read_groups(args.groups) if args.groups else None
    matrix = classifier.evaluate(model, _dataset(args, args.manifest), mapping)
    names = None if mapping else model.class_names
    frame = classifier.confusion_frame(matrix, names)
    logging.info(
        SpeckleMessage(stage="classify", target=args.manifest, message=f"Accuracy {matrix.accuracy:.4f}").to_json()
    )
    if args.out:
        frame.to_csv(args.out)
    else:
        sys.stdout.write(frame.to_csv())
    return 0


def cmd_corpus(args: argparse.Namespace) -> int:
    """Synthesize the corpus of a scenario."""
    experiment.gen_corpus(_scenario(args), _require_out(args), args.threads)
    return 0


def cmd_experiment(args: argparse.Namespace) -> int:
    """Run a scenario end to end."""
    report = experiment.run_experiment(_scenario(args), _require_out(args), args.threads)
    for c in report.criteria:
        sys.stdout.write(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}\n")
    return 0


def cmd_benchmark(args: argparse.Namespace) -> int:
    """Run a capture-setting sweep and print V per liquid per setting."""
    table = experiment.run_benchmark(_scenario(args), _require_out(args), args.threads)
    sys.stdout.write(table.to_csv(index=False))
    return 0


def cmd_scenarios(args: argparse.Namespace) -> int:
    """List the built-in scenarios or dump one as JSON."""
    if args.scenario:
        _emit(_scenario(args).model_dump_json(indent=2), args.out)
        return 0
    for name in sorted(registry.SCENARIO_REGISTRY):
        sys.stdout.write(f"{name}\n")
    return 0


def _add_dataset_options(parser: argparse.ArgumentParser) -> None:
    """Options shared by classify train and eval."""
    parser.add_argument("--manifest", required=True, help="JSON list of {dir, label}")
    parser.add_argument("--root", default=None, help="Base of relative dirs (default: the manifest's directory)")
    parser.add_argument("--stabilize", action="store_true", help="Select frames with the stabilizer")
    parser.add_argument("--n", type=int, default=stabilizer.N_SELECT, help="Frames per sequence")
    parser.add_argument("--threshold", type=float, default=stabilizer.DEFAULT_THRESHOLD)
    parser.add_argument("--crop", choices=["full", "auto"], default="full")


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with every subcommand."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Override the seed of the config or scenario")
    common.add_argument("--threads", type=int, default=None, help="Worker threads (default: SPECKLE_THREADS)")
    common.add_argument("--out", default=None, help="Output file or directory")

    parser = argparse.ArgumentParser(prog="speckle", description="Laser speckle viscometry toolkit")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("sim", parents=[common], help="Simulate a clean speckle sequence")
    p.add_argument("config", help="Simulation JSON")
    p.set_defaults(func=cmd_sim)

    p = commands.add_parser("distort", parents=[common], help="Apply flicker, rolling-shutter and lighting artifacts")
    p.add_argument("in_dir")
    p.add_argument("out_dir")
    p.add_argument("--config", default=None, help="Capture artifact JSON (default settings when absent)")
    p.add_argument("--log", default=None, help="Write the affected frames as JSON")
    p.set_defaults(func=cmd_distort)

    p = commands.add_parser("preprocess", parents=[common], help="Extract a channel and trim transients")
    p.add_argument("dir")
    p.add_argument("--leading", type=float, default=5.0, help="Seconds dropped at the start")
    p.add_argument("--trailing", type=float, default=5.0, help="Seconds dropped at the end")
    p.add_argument("--channel", choices=[c.value for c in Channel if c != Channel.rgb], default=Channel.blue.value)
    p.set_defaults(func=cmd_preprocess)

    p = commands.add_parser("stabilize", parents=[common], help="Select frames free of capture artifacts")
    p.add_argument("dir")
    p.add_argument("--threshold", type=float, default=stabilizer.DEFAULT_THRESHOLD)
    p.add_argument("--n", type=int, default=stabilizer.N_SELECT)
    p.set_defaults(func=cmd_stabilize)

    p = commands.add_parser("analyze", parents=[common], help="Correlation curve and viscosity coefficient")
    p.add_argument("dir")
    p.add_argument("--selection", default=None, help="selection.json from stabilize")
    p.add_argument("--crop", choices=["auto", "full"], default="auto")
    p.add_argument("--region", default=None, help="Explicit CropRegion JSON; overrides --crop")
    p.add_argument("--tau", type=int, default=1)
    p.set_defaults(func=cmd_analyze)

    p = commands.add_parser("calibrate", parents=[common], help="Fit V to viscosity")
    p.add_argument("--points", required=True, help="CSV with columns V,viscosity_cp")
    p.add_argument("--liquid-class", default=None, help="Also store the model under this class")
    p.set_defaults(func=cmd_calibrate)

    p = commands.add_parser("viscosity", parents=[common], help="Apply a calibration to a V value")
    p.add_argument("--model", default=None)
    p.add_argument("--liquid-class", default=None, help="Use the stored calibration of this class")
    p.add_argument("--v", type=float, required=True)
    p.set_defaults(func=cmd_viscosity)

    p = commands.add_parser("classify", help="Train or evaluate the SVM")
    actions = p.add_subparsers(dest="action", required=True)
    t = actions.add_parser("train", parents=[common])
    _add_dataset_options(t)
    t.add_argument("--C", type=float, default=classifier.DEFAULT_C)
    t.add_argument("--gamma", type=float, default=None)
    t.set_defaults(func=cmd_classify_train)
    e = actions.add_parser("eval", parents=[common])
    _add_dataset_options(e)
    e.add_argument("--model", required=True)
    e.add_argument("--groups", default=None, help="JSON object mapping label to group for a regrouped matrix")
    e.set_defaults(func=cmd_classify_eval)

    for name, func, text in (
        ("corpus", cmd_corpus, "Synthesize the corpus of a scenario"),
        ("experiment", cmd_experiment, "Run a scenario end to end"),
        ("benchmark", cmd_benchmark, "Run a capture-setting sweep"),
    ):
        p = commands.add_parser(name, parents=[common], help=text)
        p.add_argument("scenario", help="Built-in scenario name or ScenarioSpec JSON file")
        p.set_defaults(func=func)

    p = commands.add_parser("scenarios", parents=[common], help="List or dump built-in scenarios")
    p.add_argument("scenario", nargs="?", default=None)
    p.set_defaults(func=cmd_scenarios)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Entry point; returns the process exit code.

    0 on success, 2 for invalid input or unreadable sequences, 3 for
    analysis failures.
    """
    setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SpeckleError as e:
        logging.error(SpeckleMessage(stage=args.command, target=type(e).__name__, message=str(e)).to_json())
        return e.exit_code
    except (json.JSONDecodeError, OSError) as e:
        logging.error(SpeckleMessage(stage=args.command, target=type(e).__name__, message=str(e)).to_json())
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
