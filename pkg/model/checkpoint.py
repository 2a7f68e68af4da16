"""
Checkpoint files.

Layout: a magic line, one line of JSON manifest, then the raw payload of
little-endian float32 values, row-major, tensors concatenated in manifest
order. Tied projections are stored as their free (a, b) blocks.
"""

import json
import os
from typing import Optional

import numpy as np

from errors import CheckpointError
from model.modes import ModelConfig
from model.transformer import Model

MAGIC = b'CROPE-CKPT 1\n'
STORED_DTYPE = np.dtype('<f4')
QK_NORM_PLACEMENT = 'before_rotation'

# Fields that do not change the shape or meaning of the stored tensors
_NON_ARCHITECTURAL = ('seed', 'dtype')


def save_checkpoint(model: Model, path: str, rng_state: Optional[dict] = None) -> str:
    """
    Write model parameters and configuration to path

    Args:
        model: Model to store
        path: Destination file
        rng_state: Random-stream state to record alongside the weights

    Returns:
        The path written
    """
    tensors, chunks, offset = [], [], 0
    for name, p in model.named_parameters():
        raw = np.ascontiguousarray(p.data, dtype=STORED_DTYPE).tobytes()
        tensors.append({
            'name': name,
            'shape': list(p.shape),
            'precision': 'float32',
            'offset': offset,
            'nbytes': len(raw),
        })
        chunks.append(raw)
        offset += len(raw)

    manifest = {
        'model_config': model.cfg.to_dict(),
        'rng_state': rng_state,
        'qk_norm_placement': QK_NORM_PLACEMENT,
        'tensors': tensors,
    }

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp_path = path + '.tmp'
    with open(tmp_path, 'wb') as f:
        f.write(MAGIC)
        f.write(json.dumps(manifest, sort_keys=True).encode('utf-8'))
        f.write(b'\n')
        for chunk in chunks:
            f.write(chunk)
    os.replace(tmp_path, path)
    return path


def _read(path: str):
    try:
        with open(path, 'rb') as f:
            blob = f.read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}")
    if not blob.startswith(MAGIC):
        raise CheckpointError(f"{path} is not a checkpoint (bad magic line)")
    end = blob.find(b'\n', len(MAGIC))
    if end < 0:
        raise CheckpointError(f"{path}: manifest line is not terminated")
    try:
        manifest = json.loads(blob[len(MAGIC):end].decode('utf-8'))
    except ValueError as e:
        raise CheckpointError(f"{path}: manifest is not valid JSON ({e})")
    return manifest, memoryview(blob)[end + 1:]


def read_manifest(path: str) -> dict:
    return _read(path)[0]


def check_compatible(stored: ModelConfig, expected: ModelConfig):
    """Raise CheckpointError when a checkpoint cannot serve the expected configuration"""
    if stored.mode != expected.mode:
        raise CheckpointError(
            f"mode mismatch: checkpoint holds a {stored.mode} model, configuration expects {expected.mode}")
    stored_values, expected_values = stored.to_dict(), expected.to_dict()
    differing = [key for key in stored_values
                 if key not in _NON_ARCHITECTURAL and stored_values[key] != expected_values[key]]
    if differing:
        details = ', '.join(f"{key}={stored_values[key]} (expected {expected_values[key]})"
                            for key in differing)
        raise CheckpointError(f"architecture mismatch: {details}")


def load_checkpoint(path: str, expected: Optional[ModelConfig] = None) -> Model:
    manifest, payload = _read(path)
    try:
        cfg = ModelConfig.from_dict(manifest['model_config'])
    except KeyError:
        raise CheckpointError(f"{path}: manifest has no model_config")
    if expected is not None:
        check_compatible(cfg, expected)

    model = Model(cfg, initialize=False)
    params = dict(model.named_parameters())
    entries = {entry['name']: entry for entry in manifest.get('tensors', [])}

    for name in params:
        if name not in entries:
            raise CheckpointError(f"checkpoint is missing tensor {name}")
    for name in entries:
        if name not in params:
            raise CheckpointError(f"checkpoint has unexpected tensor {name}")

    for name, p in params.items():
        entry = entries[name]
        shape = tuple(entry['shape'])
        if shape != p.shape:
            raise CheckpointError(f"tensor {name}: stored shape {shape}, model expects {p.shape}")
        count = int(np.prod(shape, dtype=np.int64))
        start, nbytes = int(entry['offset']), int(entry['nbytes'])
        if nbytes != count * STORED_DTYPE.itemsize:
            raise CheckpointError(f"tensor {name}: {nbytes} bytes recorded for {count} values")
        if start + nbytes > len(payload):
            raise CheckpointError(
                f"truncated payload: tensor {name} needs bytes {start}..{start + nbytes}, "
                f"file has {len(payload)}")
        values = np.frombuffer(payload[start:start + nbytes], dtype=STORED_DTYPE).reshape(shape)
        p.data = values.astype(p.dtype)

    model.checkpoint_manifest = manifest
    return model
