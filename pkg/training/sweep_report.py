#!/usr/bin/env python3
"""
Summarize a desk sweep: every mode trained with several seeds.

Expects <root>/<mode>/seed<k>/ directories written by `app.py train`.

Usage:
    python -m training.sweep_report runs/desk
"""

import argparse
import csv
import math
import os
import sys
from typing import Dict, List

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import Config
from model.modes import MATCHED_PAIRS, MODES
from training.metrics import read_metrics_csv
from training.run_manifest import read_run_manifest
from training.schedule import ema_smooth, row_alpha

STABILITY_WINDOW = 200
EARLY_STEP = 100


def stability_violations(steps: List[int], losses: List[float], log_every: int,
                         warmup_steps: int, window: int = STABILITY_WINDOW) -> List[int]:
    """Steps t past warmup where the smoothed loss at t + window is not below the value at t"""
    smoothed = dict(zip(steps, ema_smooth(losses, row_alpha(Config.EMA_ALPHA, log_every))))
    return [t for t in steps
            if t >= warmup_steps and t + window in smoothed and not smoothed[t + window] < smoothed[t]]


def load_runs(root: str) -> Dict[str, Dict[int, dict]]:
    runs: Dict[str, Dict[int, dict]] = {}
    for mode in MODES:
        mode_dir = os.path.join(root, mode)
        if not os.path.isdir(mode_dir):
            continue
        for entry in sorted(os.listdir(mode_dir)):
            if not entry.startswith('seed'):
                continue
            run_dir = os.path.join(mode_dir, entry)
            manifest = read_run_manifest(run_dir)
            rows = read_metrics_csv(os.path.join(run_dir, Config.METRICS_NAME))
            runs.setdefault(mode, {})[int(entry[len('seed'):])] = {
                'manifest': manifest,
                'rows': rows,
            }
    return runs


def summarize(runs: Dict[str, Dict[int, dict]]) -> List[dict]:
    summary = []
    for mode, seeds in runs.items():
        for seed, run in sorted(seeds.items()):
            config = run['manifest']['config']
            steps = [r.step for r in run['rows']]
            losses = [r.train_loss for r in run['rows']]
            smoothed = dict(zip(steps, ema_smooth(losses, row_alpha(Config.EMA_ALPHA, config['log_every']))))
            violations = stability_violations(steps, losses, config['log_every'], config['warmup_steps'])
            early = smoothed.get(EARLY_STEP, math.nan)
            summary.append({
                'mode': mode,
                'seed': seed,
                'status': run['manifest']['status'],
                'final_val_loss': run['manifest'].get('final_val_loss', math.nan),
                'ema_early': early,
                'ema_final': smoothed[steps[-1]] if steps else math.nan,
                'stable': not violations,
                'first_violation': violations[0] if violations else '',
            })
    return summary


def ordering_wins(summary: List[dict]) -> Dict[str, int]:
    """Seeds in which each tied mode reaches a validation loss no worse than its matched dense model"""
    final = {(row['mode'], row['seed']): row['final_val_loss'] for row in summary}
    seeds = sorted({row['seed'] for row in summary})
    wins = {}
    for tied_mode, half_mode in MATCHED_PAIRS:
        wins[f'{tied_mode}<={half_mode}'] = sum(
            1 for seed in seeds
            if (tied_mode, seed) in final and (half_mode, seed) in final
            and final[(tied_mode, seed)] <= final[(half_mode, seed)])
    return wins


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description='Summarize a desk sweep')
    parser.add_argument('root', help='Sweep directory containing <mode>/seed<k>/ runs')
    parser.add_argument('--out', help='Summary CSV path (default <root>/sweep_summary.csv)')
    args = parser.parse_args(argv)

    print("=" * 60)
    print("DESK SWEEP REPORT")
    print("=" * 60)

    runs = load_runs(args.root)
    if not runs:
        print(f"✗ No runs found under {args.root}")
        return 2

    summary = summarize(runs)
    out_path = args.out or os.path.join(args.root, 'sweep_summary.csv')
    with open(out_path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=list(summary[0].keys()), lineterminator='\n')
        writer.writeheader()
        writer.writerows(summary)

    failures = 0
    for row in summary:
        learned = row['ema_final'] < row['ema_early']
        ok = row['status'] == 'complete' and row['stable'] and learned
        mark = '✓' if ok else '✗'
        print(f"{mark} {row['mode']:<14} seed {row['seed']}  val {row['final_val_loss']:.4f}  "
              f"ema {row['ema_early']:.4f} -> {row['ema_final']:.4f}")
        if not row['stable']:
            print(f"    smoothed loss stalled over the {STABILITY_WINDOW}-step window from step "
                  f"{row['first_violation']}")
        failures += not ok

    n_seeds = len({row['seed'] for row in summary})
    needed = math.ceil(2 * n_seeds / 3)
    print()
    for label, count in ordering_wins(summary).items():
        ok = count >= needed
        failures += not ok
        print(f"{'✓' if ok else '✗'} {label}: {count}/{n_seeds} seeds (need {needed})")

    print("\n" + "=" * 60)
    print(f"Summary written to {out_path}")
    if failures:
        print(f"⚠ {failures} check(s) failed")
        return 1
    print("✓ All sweep checks passed")
    return 0


if __name__ == '__main__':
    sys.exit(main())
