import csv
import math
import os

from commands.common import add_config_arguments, config_path, read_json, resolve_config
from config import Config
from errors import ConfigError
from model.checkpoint import load_checkpoint
from training.data import VOCAB_SIZE, load_corpus, make_batches
from training.run_manifest import utc_now, write_run_manifest
from training.trainer import evaluate

EVAL_CSV = 'eval.csv'


def register(subparsers):
    parser = subparsers.add_parser('eval', help='Validation loss of a saved checkpoint')
    parser.add_argument('--checkpoint', required=True, help='Checkpoint written by train')
    add_config_arguments(parser)
    parser.add_argument('--out', help='Output directory (default: next to the checkpoint)')
    parser.set_defaults(func=run)


def _run_config(args):
    """Data settings: explicit config, else the manifest of the run that wrote the checkpoint"""
    fallback = None
    manifest_path = os.path.join(os.path.dirname(os.path.abspath(args.checkpoint)),
                                 Config.MANIFEST_NAME)
    if config_path(args) is None and os.path.exists(manifest_path):
        fallback = read_json(manifest_path).get('config')
    return resolve_config(args, fallback=fallback)


def run(args) -> int:
    started_at = utc_now()
    cfg = _run_config(args)
    model = load_checkpoint(args.checkpoint, expected=cfg.resolved_model())
    if model.cfg.vocab_size < VOCAB_SIZE:
        raise ConfigError(f"checkpoint vocabulary {model.cfg.vocab_size} cannot embed byte data")

    _, val_batches = make_batches(load_corpus(cfg.data_path), cfg.seq_len, cfg.batch_size,
                                  cfg.split_fraction, cfg.seed)
    loss = evaluate(model, val_batches)
    perplexity = math.exp(loss)

    out_dir = args.out or os.path.dirname(os.path.abspath(args.checkpoint))
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, EVAL_CSV), 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['checkpoint', 'mode', 'val_tokens', 'loss', 'perplexity'])
        writer.writerow([os.path.basename(args.checkpoint), model.cfg.mode, val_batches.n_tokens,
                         repr(loss), repr(perplexity)])

    if args.out:
        write_run_manifest(out_dir, 'eval', 'complete', config=cfg.to_flat(),
                           artifacts=[EVAL_CSV], started_at=started_at,
                           extra={'checkpoint': os.path.abspath(args.checkpoint),
                                  'loss': loss, 'perplexity': perplexity})

    print("=" * 60)
    print(f"EVAL {model.cfg.mode}: {args.checkpoint}")
    print("=" * 60)
    print(f"val loss:   {loss!r}")
    print(f"perplexity: {perplexity!r}")
    return 0
