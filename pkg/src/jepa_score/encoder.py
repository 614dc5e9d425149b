"""MLP encoder with exact input Jacobians and reverse-mode parameter gradients.

Hidden layers apply ``activation(W @ h + b)``; the last layer is affine only.
Everything is float64 and batched over leading sample axes.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from jepa_score.linalg import as_vector

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _tanh(x):
    return np.tanh(x)


def _dtanh(x):
    t = np.tanh(x)
    return 1.0 - t * t


def _softplus(x):
    return np.logaddexp(0.0, x)


def _dsoftplus(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _gelu(x):
    return x * ndtr(x)


def _dgelu(x):
    return ndtr(x) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


ACTIVATIONS = {
    "tanh": (_tanh, _dtanh),
    "softplus": (_softplus, _dsoftplus),
    "gelu": (_gelu, _dgelu),
}


@dataclass(frozen=True)
class EncoderSpec:
    input_dim: int
    hidden_widths: tuple = ()
    embed_dim: int = 1
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if int(self.input_dim) < 1:
            raise ValueError("input_dim must be positive")
        if int(self.embed_dim) < 1:
            raise ValueError("embed_dim must be positive")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError("hidden widths must be positive")
        if self.activation not in ACTIVATIONS:
            # ReLU is deliberately absent: its Jacobian is piecewise constant.
            raise ValueError(f"activation must be one of {sorted(ACTIVATIONS)}, got {self.activation!r}")

    @property
    def widths(self):
        return (self.input_dim, *self.hidden_widths, self.embed_dim)

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "hidden_widths": list(self.hidden_widths),
            "embed_dim": self.embed_dim,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            input_dim=int(d["input_dim"]),
            hidden_widths=tuple(d.get("hidden_widths", ())),
            embed_dim=int(d["embed_dim"]),
            activation=d.get("activation", "tanh"),
        )


@dataclass
class EncoderParams:
    """Weights ``(out, in)`` and biases ``(out,)`` per layer.

    Also used as the container for parameter gradients.
    """

    spec: EncoderSpec
    weights: list
    biases: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        widths = self.spec.widths
        if len(self.weights) != len(widths) - 1 or len(self.biases) != len(widths) - 1:
            raise ValueError("number of layers does not match EncoderSpec.widths")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (widths[i + 1], widths[i]) or b.shape != (widths[i + 1],):
                raise ValueError(
                    f"layer {i}: expected weight {(widths[i + 1], widths[i])} and bias {(widths[i + 1],)}, "
                    f"got {w.shape} and {b.shape}"
                )

    @property
    def n_layers(self):
        return len(self.weights)

    def copy(self):
        return EncoderParams(
            self.spec,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            dict(self.meta),
        )

    def zeros_like(self):
        return EncoderParams(
            self.spec, [np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases]
        )

    def arrays(self):
        """Flat list ``[W0, b0, W1, b1, ...]`` of the underlying arrays (not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def forward(self, x):
        return forward(self, x)

    def input_jacobian(self, x):
        return input_jacobian(self, x)

    def to_dict(self):
        return {
            "spec": self.spec.to_dict(),
            "layers": [{"weight": w.tolist(), "bias": b.tolist()} for w, b in zip(self.weights, self.biases)],
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, d):
        spec = EncoderSpec.from_dict(d["spec"])
        weights = [np.array(layer["weight"], dtype=np.float64).reshape(-1, w_in)
                   for layer, w_in in zip(d["layers"], spec.widths[:-1])]
        biases = [np.array(layer["bias"], dtype=np.float64) for layer in d["layers"]]
        for a in weights + biases:
            if not np.all(np.isfinite(a)):
                raise ValueError("checkpoint contains non-finite parameters")
        return cls(spec, weights, biases, dict(d.get("meta", {})))


def init_params(spec, seed):
    """Gaussian weights with std ``1/sqrt(fan_in)``, zero biases."""
    rng = np.random.default_rng(seed)
    widths = spec.widths
    weights, biases = [], []
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        weights.append(rng.standard_normal((n_out, n_in)) / np.sqrt(n_in))
        biases.append(np.zeros(n_out))
    return EncoderParams(spec, weights, biases, {"seed": int(seed)})


def _check_input(params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.spec.input_dim:
        raise ValueError(f"input has dim {x.shape[-1]}, encoder expects {params.spec.input_dim}")
    return x


def _forward_cache(params, x, rowwise=False):
    """Forward pass keeping layer inputs and hidden preactivations.

    With ``rowwise`` each row is multiplied on its own, so its rounding does
    not depend on how many rows share the call.
    """
    act, _ = ACTIVATIONS[params.spec.activation]
    inputs, preacts = [], []
    h = x
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = (h[:, None, :] @ w.T)[:, 0] + b if rowwise else h @ w.T + b
        if i == last:
            return z, inputs, preacts
        preacts.append(z)
        h = act(z)


def forward(params, x):
    """Embed ``x`` of shape ``(..., D)`` to ``(..., K)``."""
    x = _check_input(params, x)
    if x.ndim == 1:
        as_vector(x)
    return _forward_cache(params, x)[0]


def input_jacobian(params, x):
    """Exact ``df/dx``: ``(K, D)`` for one input, ``(N, K, D)`` for a batch.

    Accumulated from the output side, ``W_L diag(a'_{L-1}) W_{L-1} ... W_1``,
    which costs ``K`` rows per layer instead of ``D`` columns.
    """
    x = _check_input(params, x)
    single = x.ndim == 1
    xb = x[None] if single else x.reshape(-1, x.shape[-1])
    _, dact = ACTIVATIONS[params.spec.activation]
    _, _, preacts = _forward_cache(params, xb, rowwise=True)
    jac = np.broadcast_to(params.weights[-1], (xb.shape[0],) + params.weights[-1].shape)
    for i in range(params.n_layers - 2, -1, -1):
        jac = (jac * dact(preacts[i])[:, None, :]) @ params.weights[i]
    jac = np.ascontiguousarray(jac)
    if single:
        return jac[0]
    return jac.reshape(x.shape[:-1] + jac.shape[1:])


def param_gradients(params, x_batch, upstream_grads):
    """Reverse-mode gradients of ``sum_n <upstream_grads[n], f(x_batch[n])>``.

    Args:
        params: encoder parameters.
        x_batch: inputs, shape ``(N, D)``.
        upstream_grads: ``dL/df`` per sample, shape ``(N, K)``.

    Returns:
        EncoderParams holding the gradient of every weight and bias.
    """
    x = _check_input(params, np.atleast_2d(x_batch))
    g = np.asarray(upstream_grads, dtype=np.float64).reshape(x.shape[0], -1)
    if g.shape[1] != params.spec.embed_dim:
        raise ValueError(f"upstream grads have width {g.shape[1]}, expected {params.spec.embed_dim}")
    _, dact = ACTIVATIONS[params.spec.activation]
    _, inputs, preacts = _forward_cache(params, x)
    grads = params.zeros_like()
    delta = g
    for i in range(params.n_layers - 1, -1, -1):
        grads.weights[i] = delta.T @ inputs[i]
        grads.biases[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i]) * dact(preacts[i - 1])
    return grads


def save_checkpoint(params, path):
    from jepa_score._io import atomic_write_text

    atomic_write_text(path, json.dumps(params.to_dict(), indent=1) + "\n")


def load_checkpoint(path):
    with open(path) as fh:
        return EncoderParams.from_dict(json.load(fh))
