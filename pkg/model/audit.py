"""Parameter counts per placement mode, in closed form and by enumeration"""

import csv
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List

from errors import AuditError
from model.modes import MATCHED_PAIRS, MODES, ModelConfig
from model.transformer import Model

COMPONENTS = ('embedding', 'attention', 'ffn', 'norms')

EXPECTED_SAVINGS = {
    'none': Fraction(0),
    'crope_qk': Fraction(1, 4),
    'crope_qkv': Fraction(3, 8),
    'crope_all': Fraction(1, 2),
    'half_rope_qk': Fraction(1, 4),
    'half_rope_all': Fraction(1, 2),
}

CSV_FIELDS = ['mode', 'embedding', 'attention', 'ffn', 'norms', 'total', 'attention_savings_pct']


@dataclass
class ParamAudit:
    mode: str
    embedding: int
    attention: int
    ffn: int
    norms: int
    total: int
    attention_savings: Fraction

    @property
    def savings_percent(self) -> float:
        return float(self.attention_savings * 100)

    def as_row(self) -> dict:
        return {
            'mode': self.mode,
            'embedding': self.embedding,
            'attention': self.attention,
            'ffn': self.ffn,
            'norms': self.norms,
            'total': self.total,
            'attention_savings_pct': f'{self.savings_percent:g}',
        }


def _projection(in_dim: int, out_dim: int, tied: bool) -> int:
    return in_dim * out_dim // 2 if tied else in_dim * out_dim


def closed_form_counts(cfg: ModelConfig) -> Dict[str, int]:
    tie_q, tie_k, tie_v, tie_o = cfg.ties
    d, layers = cfg.d_model, cfg.n_layers
    attention = (_projection(d, cfg.qk_width, tie_q)
                 + _projection(d, cfg.qk_width, tie_k)
                 + _projection(d, cfg.v_width, tie_v)
                 + _projection(cfg.v_width, d, tie_o))
    return {
        'embedding': cfg.vocab_size * d,
        'attention': layers * attention,
        'ffn': layers * 3 * d * cfg.d_ff,
        # two RmsNorm gains and two per-head QK gains per layer, plus the final norm
        'norms': layers * (2 * d + 2 * cfg.n_heads) + d,
    }


def _component(name: str) -> str:
    if name.startswith('embed.'):
        return 'embedding'
    if '.attn.' in name and name.endswith('.blocks'):
        return 'attention'
    if '.ffn.' in name:
        return 'ffn'
    return 'norms'


def enumerate_counts(model: Model) -> Dict[str, int]:
    counts = dict.fromkeys(COMPONENTS, 0)
    for name, p in model.named_parameters():
        counts[_component(name)] += int(p.size)
    return counts


def param_audit(cfg: ModelConfig) -> ParamAudit:
    """
    Count parameters of one configuration

    Args:
        cfg: Model configuration; its mode selects the variant

    Returns:
        ParamAudit with savings relative to the dense model of the same width
    """
    cfg.validate()
    closed = closed_form_counts(cfg)
    enumerated = enumerate_counts(Model(cfg, initialize=False))
    for component in COMPONENTS:
        if closed[component] != enumerated[component]:
            raise AuditError(
                f"{cfg.mode}: {component} closed form {closed[component]} "
                f"!= enumerated {enumerated[component]}")

    dense_attention = closed_form_counts(cfg.with_mode('none'))['attention']
    return ParamAudit(
        mode=cfg.mode,
        total=sum(closed.values()),
        attention_savings=Fraction(dense_attention - closed['attention'], dense_attention),
        **closed,
    )


def audit_table(cfg: ModelConfig) -> List[ParamAudit]:
    """Audit every mode at the widths of cfg and assert the savings pattern"""
    rows = [param_audit(cfg.with_mode(mode)) for mode in MODES]
    by_mode = {row.mode: row for row in rows}

    for component in ('embedding', 'ffn', 'norms'):
        values = {getattr(row, component) for row in rows}
        if len(values) != 1:
            raise AuditError(f"{component} counts differ across modes: {sorted(values)}")

    for mode, expected in EXPECTED_SAVINGS.items():
        if by_mode[mode].attention_savings != expected:
            raise AuditError(
                f"{mode}: attention savings {by_mode[mode].attention_savings} != {expected}")

    for tied_mode, half_mode in MATCHED_PAIRS:
        if by_mode[tied_mode].total != by_mode[half_mode].total:
            raise AuditError(
                f"{tied_mode} total {by_mode[tied_mode].total} != "
                f"{half_mode} total {by_mode[half_mode].total}")
    return rows


def write_audit_csv(rows: List[ParamAudit], path: str):
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=CSV_FIELDS, lineterminator='\n')
        writer.writeheader()
        for row in rows:
            writer.writerow(row.as_row())


def read_audit_csv(path: str) -> List[dict]:
    with open(path, newline='') as f:
        return [
            {key: (value if key in ('mode', 'attention_savings_pct') else int(value))
             for key, value in row.items()}
            for row in csv.DictReader(f)
        ]


def format_audit_table(rows: List[ParamAudit]) -> str:
    header = f"{'mode':<15}{'embedding':>12}{'attention':>14}{'ffn':>14}{'norms':>10}{'total':>14}{'saving':>9}"
    lines = [header, '-' * len(header)]
    for row in rows:
        lines.append(
            f"{row.mode:<15}{row.embedding:>12,}{row.attention:>14,}{row.ffn:>14,}"
            f"{row.norms:>10,}{row.total:>14,}{row.savings_percent:>8g}%")
    return '\n'.join(lines)
