"""
Main entry point: synthetic data, training, tracking, evaluation, gradient checks
"""
import argparse
import dataclasses
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from experiments.config import MODEL_VARIANTS, SCENE_PRESETS, TRACKER_PRESETS, TRAIN_PRESETS, preset
from src.algorithms.gradcheck import run_gradient_checks
from src.algorithms.model import ModelConfig, load_model
from src.algorithms.tracker import PuTRTracker, TrackerConfig, track_sequence
from src.algorithms.training import TrainConfig, train
from src.eval.metrics import evaluate, histogram_frame, metrics_report, plot_gap_histogram
from src.problem.detection import frames_to_trajectories
from src.problem.mot_reader import (Sequence, attach_appearance, list_sequences, load_sequence, parse_mot,
                                    save_sequence, write_mot)
from src.synth.scene import NoiseConfig, SceneConfig, corrupt, generate
from src.utils import LOGGER, set_logging, set_threads
from src.utils.config import build_config, check_known_keys, coerce_values, read_config_file, write_config_file
from src.utils.errors import DataError, NumericError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

CONFIG_TYPES = (ModelConfig, TrackerConfig, TrainConfig, SceneConfig, NoiseConfig)
ALIASES = {'n_layers': ['--layers'], 'n_heads': ['--heads']}


class UsageParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def add_config_flags(parser, config_type, skip=('seed',)):
    """One flag per dataclass field (``d_model`` -> ``--d-model``); values are coerced later."""
    group = parser.add_argument_group(config_type.__name__)
    for field in dataclasses.fields(config_type):
        if field.name in skip:
            continue
        flags = [f"--{field.name.replace('_', '-')}"] + ALIASES.get(field.name, [])
        group.add_argument(*flags, dest=field.name, default=None, metavar=field.name.upper(),
                           help=f"default: {field.default if field.default is not dataclasses.MISSING else ''}")


def flag_values(args, config_type):
    values = {f.name: getattr(args, f.name, None) for f in dataclasses.fields(config_type)}
    values['seed'] = getattr(args, 'seed', None)
    return values


def load_configs(args, *config_types, presets=()):
    """defaults < presets < --config file < flags"""
    file_values = {}
    if args.config:
        file_values = read_config_file(args.config)
        check_known_keys(file_values, *CONFIG_TYPES)
    configs = []
    for config_type, preset_values in zip(config_types, presets):
        try:
            flags = coerce_values(config_type, flag_values(args, config_type))
        except DataError as e:
            raise ValueError(str(e)) from None
        configs.append(build_config(config_type, preset_values, file_values, flags))
    return configs


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='flat key = value file with config field names')
    common.add_argument('--seed', type=int, default=None, help='random seed (for reproducibility)')
    common.add_argument('--quiet', action='store_true', help='only log warnings and errors')

    parser = UsageParser(description='Frame-causal transformer association for multi-object tracking')
    sub = parser.add_subparsers(dest='command', required=True, parser_class=UsageParser)

    p = sub.add_parser('synth', parents=[common], help='generate synthetic sequences')
    p.add_argument('--out', required=True, help='output directory')
    p.add_argument('--sequences', type=int, default=1, help='number of scenes (seed increases per scene)')
    p.add_argument('--scene-preset', default=None, choices=[s['name'] for s in SCENE_PRESETS])
    add_config_flags(p, SceneConfig)
    add_config_flags(p, NoiseConfig)

    p = sub.add_parser('train', parents=[common], help='train a model on sequence directories')
    p.add_argument('--data', required=True, help='directory of sequences (or one sequence)')
    p.add_argument('--ckpt', required=True, help='output checkpoint')
    p.add_argument('--log', default=None, help='CSV training log (step, epoch, lr, loss)')
    p.add_argument('--variant', default=None, choices=[v['name'] for v in MODEL_VARIANTS])
    p.add_argument('--train-preset', default=None, choices=[t['name'] for t in TRAIN_PRESETS])
    add_config_flags(p, ModelConfig)
    add_config_flags(p, TrainConfig)

    p = sub.add_parser('track', parents=[common], help='track detections with a trained model')
    p.add_argument('--det', required=True, help='det.txt inside a sequence directory, a MOT file, or a directory of sequences')
    p.add_argument('--ckpt', required=True, help='model checkpoint')
    p.add_argument('--out', required=True, help='result file (or directory when --det is a directory)')
    p.add_argument('--appearance', default=None, help='appearance.npz for a bare detection file')
    p.add_argument('--width', type=float, default=None, help='frame width for a bare detection file')
    p.add_argument('--height', type=float, default=None, help='frame height for a bare detection file')
    p.add_argument('--workers', type=int, default=4, help='parallel sequences when --det is a directory')
    p.add_argument('--preset', default=None, choices=[t['name'] for t in TRACKER_PRESETS])
    add_config_flags(p, TrackerConfig)

    p = sub.add_parser('eval', parents=[common], help='compare a result file with ground truth')
    p.add_argument('--gt', required=True)
    p.add_argument('--pred', required=True)
    p.add_argument('--report', default=None, help='report path (default: <pred>.metrics.txt)')
    p.add_argument('--csv', default=None, help='gap histogram as CSV')
    p.add_argument('--plot', default=None, help='gap histogram figure (png)')
    p.add_argument('--iou', type=float, default=0.5)

    p = sub.add_parser('gradcheck', parents=[common], help='finite-difference check of the gradients')
    p.add_argument('--checks', type=int, default=3, help='number of random configurations')
    p.add_argument('--tol', type=float, default=1e-4)
    p.add_argument('--variant', default=None, choices=[v['name'] for v in MODEL_VARIANTS])
    add_config_flags(p, ModelConfig)
    return parser


def cmd_synth(args):
    scene_preset = preset(SCENE_PRESETS, args.scene_preset) if args.scene_preset else {}
    scene_cfg, noise_cfg = load_configs(args, SceneConfig, NoiseConfig, presets=(scene_preset, {}))
    out = Path(args.out)
    for k in range(args.sequences):
        cfg = dataclasses.replace(scene_cfg, seed=scene_cfg.seed + k)
        noise = dataclasses.replace(noise_cfg, seed=noise_cfg.seed + k)
        name = f"synth-{k + 1:03d}"
        scene = generate(cfg)
        det = corrupt(scene.frames, noise, cfg.width, cfg.height)
        target = out / name if args.sequences > 1 else out
        save_sequence(target, scene.to_sequence(det, name))
        write_config_file(target / 'synth.ini', cfg, noise)
        LOGGER.info(f"Scene {k + 1}/{args.sequences} - {len(scene.tids)} objects - written to {target}")
    return EXIT_OK


def cmd_train(args):
    variant = preset(MODEL_VARIANTS, args.variant) if args.variant else {}
    schedule = preset(TRAIN_PRESETS, args.train_preset) if args.train_preset else {}
    model_cfg, train_cfg = load_configs(args, ModelConfig, TrainConfig, presets=(variant, schedule))
    paths = list_sequences(args.data)
    if not paths:
        raise DataError(f"no sequence directories under {args.data}")
    sequences = [load_sequence(p) for p in paths]

    start_time = time.time()
    result = train(sequences, model_cfg, train_cfg, checkpoint_path=args.ckpt, log_path=args.log)
    elapsed = time.time() - start_time
    losses = ", ".join(f"{x:.4f}" for x in result.epoch_losses)
    print(f"Training completed in {elapsed:.2f} seconds")
    print(f"Epoch losses: {losses}")
    print(f"Checkpoint: {args.ckpt}")
    return EXIT_OK


def _bare_sequence(args):
    det_path = Path(args.det)
    seq_dir = det_path.parent.parent
    if det_path.name == 'det.txt' and (seq_dir / 'seqinfo.ini').exists():
        return load_sequence(seq_dir)
    if args.width is None or args.height is None:
        raise DataError(f"{det_path}: --width and --height are required outside a sequence directory")
    frames = parse_mot(det_path).frames
    if args.appearance:
        attach_appearance(frames, args.appearance, 'det')
    length = max(frames) if frames else 0
    return Sequence(det_path.stem, args.width, args.height, length, det=frames)


def track_one(model, tracker_cfg, sequence, out_path):
    tracker = PuTRTracker(model, tracker_cfg, frame_size=(sequence.width, sequence.height))
    last = max([sequence.length] + list(sequence.det)) if sequence.det or sequence.length else None
    start_time = time.time()
    trajectories = track_sequence(tracker, sequence.det, first_frame=1 if last else None, last_frame=last)
    elapsed = time.time() - start_time
    n_frames = last or 0
    fps = n_frames / elapsed if elapsed > 0 else float('inf')
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    Path(out_path).write_bytes(write_mot(trajectories))
    LOGGER.info(f"{sequence.name}: {len(trajectories)} trajectories written to {out_path}")
    print(f"{sequence.name}: tracking completed in {elapsed:.2f} seconds ({n_frames} frames, {fps:.1f} FPS)")
    return out_path


def cmd_track(args):
    tracker_preset = preset(TRACKER_PRESETS, args.preset) if args.preset else {}
    (tracker_cfg,) = load_configs(args, TrackerConfig, presets=(tracker_preset,))
    model = load_model(args.ckpt)

    det = Path(args.det)
    if not det.is_dir():
        track_one(model, tracker_cfg, _bare_sequence(args), args.out)
        return EXIT_OK

    paths = list_sequences(det)
    if not paths:
        raise DataError(f"no sequence directories under {det}")
    out = Path(args.out)
    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        jobs = [pool.submit(track_one, model, tracker_cfg, load_sequence(p), out / f"{p.name}.txt") for p in paths]
        for job in jobs:
            job.result()
    return EXIT_OK


def cmd_eval(args):
    gt = frames_to_trajectories(parse_mot(args.gt).frames)
    pred = frames_to_trajectories(parse_mot(args.pred).frames)
    result = evaluate(gt, pred, args.iou)
    text = metrics_report(result)
    report = Path(args.report) if args.report else Path(f"{args.pred}.metrics.txt")
    report.write_text(text)
    print(text, end='')
    if args.csv:
        histogram_frame(result['gap_histogram']).to_csv(args.csv, index=False)
    if args.plot:
        plot_gap_histogram(result['gap_histogram'], args.plot)
    return EXIT_OK


def cmd_gradcheck(args):
    variant = preset(MODEL_VARIANTS, args.variant) if args.variant else {}
    (model_cfg,) = load_configs(args, ModelConfig, presets=(variant,))
    first = args.seed if args.seed is not None else 0
    reports = run_gradient_checks(model_cfg, seeds=range(first, first + args.checks), tol=args.tol)
    for report in reports:
        print("\n".join(report.lines()))
    passed = all(r.passed for r in reports)
    print(f"Gradient check {'passed' if passed else 'FAILED'} "
          f"(max relative error {max(r.max_rel_error for r in reports):.3e}, tolerance {args.tol:g})")
    return EXIT_OK if passed else EXIT_NUMERIC


COMMANDS = {
    'synth': cmd_synth,
    'train': cmd_train,
    'track': cmd_track,
    'eval': cmd_eval,
    'gradcheck': cmd_gradcheck,
}


def dispatch(argv=None):
    """Run one subcommand and return the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    set_logging(not args.quiet)
    set_threads()
    try:
        return COMMANDS[args.command](args)
    except NumericError as e:
        LOGGER.error(f"Numeric failure: {e}")
        return EXIT_NUMERIC
    except (DataError, OSError) as e:
        LOGGER.error(f"Data error: {e}")
        return EXIT_DATA
    except (ValueError, KeyError) as e:
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(dispatch())


if __name__ == '__main__':
    main()
