import json
import os
from typing import List, Optional

from config import Config
from errors import ConfigError
from training.train_config import TrainConfig, build_train_config, load_train_config, parse_overrides


def add_config_arguments(parser):
    """--config / --preset plus trailing key=value overrides"""
    source = parser.add_mutually_exclusive_group()
    source.add_argument('--config', help='Flat key = value config file')
    source.add_argument('--preset', choices=('desk', 'full', 'smoke'),
                        help='Shipped config under configs/')
    parser.add_argument('overrides', nargs='*', metavar='key=value',
                        help='Config overrides, e.g. mode=crope_all steps=10')


def config_path(args) -> Optional[str]:
    if getattr(args, 'preset', None):
        return Config.preset_path(args.preset)
    return getattr(args, 'config', None)


def resolve_config(args, fallback: Optional[dict] = None) -> TrainConfig:
    """
    TrainConfig from the command line

    Args:
        args: Parsed arguments carrying config / preset / overrides
        fallback: Flat config used when neither --config nor --preset is given

    Returns:
        Validated TrainConfig
    """
    path = config_path(args)
    if path is None and fallback is not None:
        values = {key: str(value) for key, value in fallback.items()}
        values.update(parse_overrides(args.overrides))
        return build_train_config(values).validate()
    return load_train_config(path, args.overrides)


def default_out_dir(command: str, cfg: Optional[TrainConfig] = None) -> str:
    if cfg is None:
        return os.path.join(Config.OUTPUT_DIR, command)
    return os.path.join(Config.OUTPUT_DIR, command, f'{cfg.model.mode}-seed{cfg.seed}')


def existing(out_dir: str, names: List[str]) -> List[str]:
    return [name for name in names if os.path.exists(os.path.join(out_dir, name))]


def read_json(path: str) -> dict:
    try:
        with open(path, encoding='utf-8') as f:
            return json.load(f)
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read {path}: {e}")
