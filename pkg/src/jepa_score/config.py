"""Experiment configuration: one JSON file describes a whole run.

Layout::

    {
      "seed": 0,
      "output_dir": "runs/demo",
      "world": {
        "generator": {"random": {"dim": 64, "n_components": 5, "mean_range": 3.0,
                                 "scale_range": [0.5, 1.5]}},
        "transform": {"kind": "additive_gaussian", "sigma_T": 0.03},
        "n_samples": 4096
      },
      "encoder": {"input_dim": 64, "hidden_widths": [256, 256], "embed_dim": 16,
                  "activation": "tanh"},
      "train": {"batch_size": 512, "steps": 20000, "learning_rate": 0.001,
                "optimizer": "adam", "seed": 0,
                "loss": {"lambda_inv": 1.0, "lambda_var": 25.0, "lambda_cov": 25.0}},
      "score": {"eps": 1e-06, "mc_transform_samples": 1, "fd_step": 0.0001}
    }

``world.generator`` may instead be ``{"components": [...]}`` with explicit
weights, means and covariances.
"""

import copy
import dataclasses
import json

from jepa_score.encoder import EncoderSpec
from jepa_score.jepa import JepaLossConfig, TrainConfig
from jepa_score.score import ScoreConfig
from jepa_score.synthdata import GeneratorSpec, TransformSpec, default_mixture


class ConfigError(ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


DEFAULT_RANDOM_WORLD = {"n_components": 5, "mean_range": 3.0, "scale_range": [0.5, 1.5]}


def _build(cls, data, field):
    if not isinstance(data, dict):
        raise ConfigError(field, "expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{field}.{unknown[0]}", "unknown field")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(field, str(exc)) from exc


def _encoder_from(data, field="encoder"):
    if not isinstance(data, dict):
        raise ConfigError(field, "expected an object")
    for key in ("input_dim", "embed_dim"):
        if key not in data:
            raise ConfigError(f"{field}.{key}", "missing")
    unknown = sorted(set(data) - {"input_dim", "hidden_widths", "embed_dim", "activation"})
    if unknown:
        raise ConfigError(f"{field}.{unknown[0]}", "unknown field")
    try:
        return EncoderSpec.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(field, str(exc)) from exc


@dataclasses.dataclass
class ExperimentConfig:
    generator: dict
    transform: TransformSpec
    n_samples: int
    encoder: EncoderSpec
    train: TrainConfig
    loss: JepaLossConfig
    score: ScoreConfig
    output_dir: str = "."
    seed: int = 0

    def build_mixture(self):
        if "components" in self.generator:
            try:
                mix = GeneratorSpec.from_dict(self.generator)
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError("world.generator.components", str(exc)) from exc
        else:
            rnd = {**DEFAULT_RANDOM_WORLD, **self.generator.get("random", {})}
            dim = rnd.get("dim", self.encoder.input_dim)
            mix = default_mixture(
                dim, [self.seed, 0], rnd["n_components"], rnd["mean_range"], tuple(rnd["scale_range"])
            )
        if mix.dim != self.encoder.input_dim:
            raise ConfigError("encoder.input_dim", f"{self.encoder.input_dim} does not match world dim {mix.dim}")
        return mix

    def for_dim(self, dim, n_samples, seed):
        """Copy re-targeted to a random ``dim``-D world with its own seed."""
        gen = copy.deepcopy(self.generator)
        if "components" in gen:
            raise ConfigError("world.generator", "grid runs need a random world, not explicit components")
        gen.setdefault("random", {})["dim"] = dim
        enc = dataclasses.replace(self.encoder, input_dim=dim)
        return dataclasses.replace(
            self,
            generator=gen,
            encoder=enc,
            n_samples=n_samples,
            seed=seed,
            train=dataclasses.replace(self.train, seed=seed),
        )

    def to_dict(self):
        train = self.train.to_dict()
        train["loss"] = self.loss.to_dict()
        return {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "world": {"generator": self.generator, "transform": self.transform.to_dict(), "n_samples": self.n_samples},
            "encoder": self.encoder.to_dict(),
            "train": train,
            "score": self.score.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("<root>", "expected a JSON object")
        unknown = sorted(set(d) - {"seed", "output_dir", "world", "encoder", "train", "score"})
        if unknown:
            raise ConfigError(unknown[0], "unknown field")
        for key in ("world", "encoder"):
            if key not in d:
                raise ConfigError(key, "missing")
        world = d["world"]
        if not isinstance(world, dict):
            raise ConfigError("world", "expected an object")
        generator = world.get("generator", {"random": {}})
        if not isinstance(generator, dict) or not ({"components", "random"} & set(generator)):
            raise ConfigError("world.generator", "needs 'components' or 'random'")
        transform = _build(TransformSpec, world.get("transform", {}), "world.transform")
        n_samples = world.get("n_samples", 4096)
        if not isinstance(n_samples, int) or n_samples < 1:
            raise ConfigError("world.n_samples", "must be a positive integer")
        train = dict(d.get("train", {}))
        loss = _build(JepaLossConfig, train.pop("loss", {}), "train.loss")
        cfg = cls(
            generator=generator,
            transform=transform,
            n_samples=n_samples,
            encoder=_encoder_from(d["encoder"]),
            train=_build(TrainConfig, train, "train"),
            loss=loss,
            score=_build(ScoreConfig, d.get("score", {}), "score"),
            output_dir=d.get("output_dir", "."),
            seed=d.get("seed", 0),
        )
        if not isinstance(cfg.seed, int):
            raise ConfigError("seed", "must be an integer")
        return cfg

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("<json>", f"malformed JSON: {exc}") from exc
        return cls.from_dict(data)
