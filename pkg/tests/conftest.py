import numpy as np
import pytest

from jepa_score import _fallback
from jepa_score.encoder import EncoderParams, EncoderSpec, init_params

try:
    from jepa_score import _kernels
except ImportError:  # extension not built
    _kernels = None

BACKENDS = [pytest.param(_fallback, id="python")]
if _kernels is not None:
    BACKENDS.append(pytest.param(_kernels, id="cython"))


@pytest.fixture(params=BACKENDS)
def kernels(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_tanh_net(seed, d, widths, k, activation="tanh", bias_scale=0.3):
    params = init_params(EncoderSpec(d, tuple(widths), k, activation), seed)
    r = np.random.default_rng(seed + 10_000)
    for b in params.biases:
        b += bias_scale * r.standard_normal(b.shape)
    return params


def linear_encoder(w, b=None):
    w = np.asarray(w, dtype=np.float64)
    k, d = w.shape
    return EncoderParams(EncoderSpec(d, (), k), [w.copy()], [np.zeros(k) if b is None else np.asarray(b, float)])


def random_orthogonal(n, rng):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def tiny_config_dict(dim=3, steps=5, seed=0, output_dir="."):
    return {
        "seed": seed,
        "output_dir": output_dir,
        "world": {"generator": {"random": {"n_components": 2}},
                  "transform": {"kind": "additive_gaussian", "sigma_T": 0.05}, "n_samples": 64},
        "encoder": {"input_dim": dim, "hidden_widths": [8], "embed_dim": 2, "activation": "tanh"},
        "train": {"batch_size": 32, "steps": steps, "learning_rate": 0.003, "seed": seed, "loss": {}},
        "score": {},
    }


CONFIG_DIR = __import__("pathlib").Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="session")
def correlation_cells():
    """The two trained grid cells (D=64 and D=128, n=4096) of the shipped config."""
    from jepa_score.config import ExperimentConfig
    from jepa_score.evaluation import cell_seed, run_correlation_cell

    cfg = ExperimentConfig.load(CONFIG_DIR / "correlation.json")
    return {d: run_correlation_cell(d, 4096, cfg, cell_seed(cfg.seed, i, 0), keep_model=True)
            for i, d in enumerate((64, 128))}
