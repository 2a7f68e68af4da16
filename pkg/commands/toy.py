import csv
import os

import numpy as np

from commands.common import default_out_dir
from errors import ConfigError
from model.modes import MODES
from rope.constructions import DIRECTIONS, SHIFTS, shift_attention_profile
from rope.rotary import DEFAULT_BASE, RopeConfig
from rope.scores import delta_kernel, delta_margin, max_off_peak
from training.run_manifest import utc_now, write_run_manifest
from training.toy_task import ToyTaskSpec, toy_task_train

KERNEL_DIMS = (16, 64, 256)
TOY_RESULTS = 'toy_results.csv'
MARKER_ROWS_SHOWN = 32


def register(subparsers):
    parser = subparsers.add_parser('toy', help='Shift-attention profiles and the NEXT/NEXTNEXT task')
    parser.add_argument('--dim', type=int, default=64, help='Head dimension of the analytic profiles')
    parser.add_argument('--window', type=int, default=32, help='Positions 1..window')
    parser.add_argument('--base', type=float, default=DEFAULT_BASE, help='Rotary base')
    parser.add_argument('--direction', choices=DIRECTIONS, default='forward',
                        help="'forward' peaks at m + s, 'backward' at m - s")
    parser.add_argument('--train', action='store_true', help='Also train toy models')
    parser.add_argument('--mode', dest='modes', nargs='+', choices=MODES, default=['crope_qk'],
                        help='Placement modes to train (with --train)')
    parser.add_argument('--steps', type=int, default=2000)
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--min-accuracy', type=float, default=0.95)
    parser.add_argument('--out', help='Output directory (default runs/toy)')
    parser.set_defaults(func=run)


def write_matrix(path: str, matrix: np.ndarray, row_name: str, row_labels, column_labels):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow([row_name] + [str(c) for c in column_labels])
        for label, row in zip(row_labels, matrix):
            writer.writerow([label] + [repr(float(v)) for v in row])


def profile_peaks_ok(profile: np.ndarray, s: int, direction: str) -> bool:
    """Every query whose target lies inside the window puts its maximum on it"""
    window = profile.shape[0]
    step = s if direction == 'forward' else -s
    for m in range(1, window + 1):
        target = m + step
        if 1 <= target <= window and int(np.argmax(profile[m - 1])) + 1 != target:
            return False
    return True


def write_profiles(args, out_dir: str) -> tuple:
    cfg = RopeConfig(args.dim, args.base)
    positions = list(range(1, args.window + 1))
    artifacts, ok = [], True

    print(f"\nShift profiles (D={args.dim}, window {args.window}, {args.direction})")
    for s in SHIFTS:
        profile = shift_attention_profile(cfg, s, args.window, args.direction)
        name = f'profile_s{s}.csv'
        write_matrix(os.path.join(out_dir, name), profile, 'query_pos', positions, positions)
        artifacts.append(name)
        peaks = profile_peaks_ok(profile, s, args.direction)
        ok = ok and peaks
        sample = positions[len(positions) // 2 - 1]
        print(f"  {'✓' if peaks else '✗'} s={s}: argmax at target for every row; "
              f"row {sample} peak weight {profile[sample - 1].max():.3f}")

    offsets = np.arange(-args.window, args.window + 1)
    kernels = np.stack([delta_kernel(RopeConfig(d, args.base), offsets) for d in KERNEL_DIMS], axis=1)
    write_matrix(os.path.join(out_dir, 'delta_kernel.csv'), kernels, 'offset', offsets.tolist(),
                 [f'D{d}' for d in KERNEL_DIMS])
    artifacts.append('delta_kernel.csv')

    print(f"\nDelta kernel (offsets -{args.window}..{args.window})")
    margins = []
    for d in KERNEL_DIMS:
        kernel_cfg = RopeConfig(d, args.base)
        margins.append(delta_margin(kernel_cfg, args.window))
        print(f"  D={d:<4} max off-peak {max_off_peak(kernel_cfg, args.window):.4f}  "
              f"margin {margins[-1]:.3f}")
    growing = all(a < b for a, b in zip(margins, margins[1:]))
    print(f"  {'✓' if growing else '✗'} peak margin grows with D")
    return artifacts, ok and growing


def train_toy_models(args, out_dir: str) -> tuple:
    spec = ToyTaskSpec(seed=args.seed)
    rows, artifacts, ok = [], [], True
    print(f"\nToy task ({spec.n_symbols} symbols, length {spec.seq_len}, {args.steps} steps)")
    for mode in args.modes:
        result = toy_task_train(mode, spec=spec, steps=args.steps, seed=args.seed, verbose=True)
        passed = result.accuracy >= args.min_accuracy
        ok = ok and passed
        print(f"  {'✓' if passed else '✗'} {mode:<14} accuracy {result.accuracy:.4f}  "
              f"attention on target {result.attention_hit_rate:.4f}")

        shown = min(MARKER_ROWS_SHOWN, len(result.heldout))
        name = f'marker_rows_{mode}.csv'
        labels = [f'{pos}+{shift}' for pos, shift in
                  zip(result.heldout.marker_positions[:shown], result.heldout.shifts[:shown])]
        write_matrix(os.path.join(out_dir, name), result.marker_rows[:shown], 'marker',
                     labels, range(spec.seq_len))
        artifacts.append(name)
        rows.append([mode, args.seed, args.steps, repr(result.accuracy),
                     repr(result.attention_hit_rate), repr(result.final_loss)])

    with open(os.path.join(out_dir, TOY_RESULTS), 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['mode', 'seed', 'steps', 'accuracy', 'attention_hit_rate', 'final_loss'])
        writer.writerows(rows)
    artifacts.append(TOY_RESULTS)
    return artifacts, ok


def run(args) -> int:
    started_at = utc_now()
    out_dir = args.out or default_out_dir('toy')
    os.makedirs(out_dir, exist_ok=True)
    if args.window < 2:
        raise ConfigError(f"--window must be at least 2, got {args.window}")

    print("=" * 60)
    print("SHIFT ATTENTION")
    print("=" * 60)
    artifacts, ok = write_profiles(args, out_dir)
    if args.train:
        trained, trained_ok = train_toy_models(args, out_dir)
        artifacts += trained
        ok = ok and trained_ok

    config = {key: value for key, value in vars(args).items() if key not in ('func', 'command')}
    write_run_manifest(out_dir, 'toy', 'complete', config=config, artifacts=artifacts,
                       started_at=started_at)
    print(f"\n{'✓' if ok else '✗'} Outputs in {out_dir}")
    return 0 if ok else 1
