from commands.common import add_config_arguments, default_out_dir, existing, resolve_config
from config import Config
from errors import TrainingError
from training.run_manifest import utc_now, write_run_manifest
from training.trainer import train

ARTIFACTS = [Config.METRICS_NAME, Config.CHECKPOINT_NAME, Config.ABORT_CHECKPOINT_NAME]


def register(subparsers):
    parser = subparsers.add_parser('train', help='Train a byte-level language model')
    add_config_arguments(parser)
    parser.add_argument('--out', help='Run directory (default runs/train/<mode>-seed<seed>)')
    parser.add_argument('--quiet', action='store_true', help='Only print the final summary')
    parser.set_defaults(func=run)


def run(args) -> int:
    started_at = utc_now()
    cfg = resolve_config(args)
    out_dir = args.out or default_out_dir('train', cfg)

    print("=" * 60)
    print(f"TRAIN {cfg.model.mode} (seed {cfg.seed}) -> {out_dir}")
    print("=" * 60)

    try:
        result = train(cfg, out_dir, verbose=not args.quiet)
    except TrainingError as e:
        write_run_manifest(out_dir, 'train', 'failed', config=cfg.to_flat(),
                           artifacts=existing(out_dir, ARTIFACTS), started_at=started_at,
                           extra={'error': str(e), 'failed_step': e.step})
        raise
    except KeyboardInterrupt:
        write_run_manifest(out_dir, 'train', 'partial', config=cfg.to_flat(),
                           artifacts=existing(out_dir, ARTIFACTS), started_at=started_at,
                           extra={'error': 'interrupted'})
        raise

    write_run_manifest(out_dir, 'train', 'complete', config=cfg.to_flat(),
                       artifacts=existing(out_dir, ARTIFACTS), started_at=started_at,
                       extra={
                           'final_val_loss': result.final_val_loss,
                           'parameters': result.model.num_parameters(),
                           'timings_ms': result.timings_ms,
                       })
    print(f"✓ Metrics: {result.metrics_path}")
    print(f"✓ Checkpoint: {result.checkpoint_path}")
    return 0
