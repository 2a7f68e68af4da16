import os
from dotenv import load_dotenv

load_dotenv()


class Config:
    """Laboratory-wide configuration"""

    VERSION = '0.3.0'

    # Threads (the only value taken from the environment)
    NUM_THREADS = os.getenv('CROPE_NUM_THREADS')

    # Precision
    TRAIN_DTYPE = 'float32'
    VERIFY_DTYPE = 'float64'

    # Artifacts
    OUTPUT_DIR = 'runs'
    CHECKPOINT_NAME = 'final.ckpt'
    ABORT_CHECKPOINT_NAME = 'abort.ckpt'
    METRICS_NAME = 'metrics.csv'
    MANIFEST_NAME = 'run_manifest.json'

    # Presets
    CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'configs')

    # Reporting
    EMA_ALPHA = 0.05

    # Recorded in every run manifest
    DESIGN_FLAGS = {
        'qk_norm': 'per-head RMS (eps 1e-6), scalar gain per head, before rotation',
        'optimizer': 'adamw (beta1 0.9, beta2 0.95, eps 1e-8); substitute for Muon',
        'frequency_schedule': 'theta_t = base^(-2(t-1)/D), base 5000',
        'pair_layout': 'interleaved (v[2t], v[2t+1])',
        'complex_sign': 'block [[a, b], [-b, a]] is complex weight a - b i',
        'lr_schedule': 'linear warmup then cosine decay to lr_min',
        'weight_decay': 'decoupled, matrices only',
        'precision': 'float32 training, float64 verification',
        'biases': 'none',
    }

    @classmethod
    def apply_thread_cap(cls):
        """Export the thread cap for BLAS back ends; call before numpy is imported"""
        if cls.NUM_THREADS:
            for var in ('OMP_NUM_THREADS', 'OPENBLAS_NUM_THREADS', 'MKL_NUM_THREADS'):
                os.environ.setdefault(var, str(cls.NUM_THREADS))

    @classmethod
    def preset_path(cls, name: str) -> str:
        """Path of a shipped config preset ('desk', 'full', 'smoke')"""
        return os.path.join(cls.CONFIG_DIR, f'{name}.conf')
