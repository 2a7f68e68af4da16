import csv
import os

from training.run_manifest import utc_now, write_run_manifest
from verification.registry import KNOWN_FAULTS, MODULES, clear_faults, inject_fault, run_checks

REPORT_FIELDS = ['module', 'name', 'passed', 'measured', 'allowed', 'seed', 'seconds', 'detail']


def register(subparsers):
    parser = subparsers.add_parser('verify', help='Run every registered invariant check')
    parser.add_argument('--filter', dest='modules', action='append', choices=MODULES,
                        help='Only run checks of this module (repeatable)')
    parser.add_argument('--inject-fault', dest='faults', action='append', default=[],
                        choices=KNOWN_FAULTS, help='Corrupt a structure on purpose (negative control)')
    parser.add_argument('--out', help='Directory for verify.csv and the run manifest')
    parser.set_defaults(func=run)


def write_report(results, path: str):
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=REPORT_FIELDS, lineterminator='\n')
        writer.writeheader()
        for r in results:
            writer.writerow({
                'module': r.module,
                'name': r.name,
                'passed': int(r.passed),
                'measured': '' if r.measured is None else repr(r.measured),
                'allowed': '' if r.allowed is None else repr(r.allowed),
                'seed': r.seed,
                'seconds': f'{r.seconds:.3f}',
                'detail': r.detail,
            })


def run(args) -> int:
    started_at = utc_now()
    clear_faults()
    for fault in args.faults:
        inject_fault(fault)

    print("=" * 60)
    print("INVARIANT VERIFICATION")
    if args.faults:
        print(f"⚠ Injected faults: {', '.join(args.faults)}")
    print("=" * 60)

    results = run_checks(args.modules)
    clear_faults()
    failed = [r for r in results if not r.passed]

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_report(results, os.path.join(args.out, 'verify.csv'))
        write_run_manifest(args.out, 'verify', 'complete',
                           config={'modules': args.modules or list(MODULES), 'faults': args.faults},
                           artifacts=['verify.csv'], started_at=started_at,
                           extra={'passed': len(results) - len(failed), 'total': len(results)})

    print("\n" + "=" * 60)
    print("SUMMARY")
    print("=" * 60)
    print(f"Passed: {len(results) - len(failed)}/{len(results)}")
    if failed:
        for r in failed:
            print(f"✗ {r.module}/{r.name}")
        return 1
    print("✓ All checks passed")
    return 0
