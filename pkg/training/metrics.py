import csv
from dataclasses import dataclass
from typing import List, Optional

HEADER = ['step', 'lr', 'train_loss', 'val_loss', 'tokens_seen', 'wall_ms']


@dataclass
class MetricsRow:
    step: int
    lr: float
    train_loss: float
    val_loss: Optional[float]
    tokens_seen: int
    wall_ms: Optional[float] = None


def _fmt(value: Optional[float]) -> str:
    return '' if value is None else repr(float(value))


def _opt(text: str) -> Optional[float]:
    return None if text == '' else float(text)


def write_metrics_csv(rows: List[MetricsRow], path: str):
    previous = None
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(HEADER)
        for row in rows:
            if previous is not None and row.step <= previous:
                raise ValueError(f"metrics steps must increase: {row.step} after {previous}")
            previous = row.step
            writer.writerow([row.step, _fmt(row.lr), _fmt(row.train_loss), _fmt(row.val_loss),
                             row.tokens_seen, _fmt(row.wall_ms)])


def read_metrics_csv(path: str) -> List[MetricsRow]:
    with open(path, newline='') as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [
            MetricsRow(
                step=int(r['step']),
                lr=float(r['lr']),
                train_loss=float(r['train_loss']),
                val_loss=_opt(r['val_loss']),
                tokens_seen=int(r['tokens_seen']),
                wall_ms=_opt(r['wall_ms']),
            )
            for r in reader
        ]
