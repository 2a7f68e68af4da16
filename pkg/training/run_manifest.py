import json
import os
from datetime import datetime, timezone
from typing import Dict, List, Optional

from config import Config

STATUSES = ('complete', 'partial', 'failed')

NOTES = {
    'optimizer': 'AdamW substitutes for Muon; the full-size schedule values are reused at desk scale',
    'lm_ordering': 'desk-scale loss ordering is only a soft qualitative signal',
}


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec='seconds')


def write_run_manifest(out_dir: str, command: str, status: str, config: Dict,
                       artifacts: List[str], started_at: str,
                       extra: Optional[Dict] = None) -> str:
    """
    Describe a CLI run next to its artifacts

    Args:
        out_dir: Run directory
        command: Subcommand that produced the run
        status: 'complete', 'partial' or 'failed'
        config: Resolved configuration
        artifacts: File names written into out_dir
        started_at: ISO timestamp taken when the run began
        extra: Command-specific results (timings, losses, error text)

    Returns:
        Path of the manifest
    """
    if status not in STATUSES:
        raise ValueError(f"status must be one of {STATUSES}, got {status!r}")
    manifest = {
        'command': command,
        'status': status,
        'started_at': started_at,
        'finished_at': utc_now(),
        'code_version': Config.VERSION,
        'design_flags': Config.DESIGN_FLAGS,
        'notes': NOTES,
        'config': config,
        'artifacts': sorted(artifacts),
    }
    if extra:
        manifest.update(extra)

    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, Config.MANIFEST_NAME)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)
    return path


def read_run_manifest(out_dir: str) -> Dict:
    with open(os.path.join(out_dir, Config.MANIFEST_NAME), encoding='utf-8') as f:
        return json.load(f)
