"""Run configuration: one JSON document covering data generation, the three
trainers, and sampling. Field names match the CLI flags and the manifest."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigurationError, UsageError

# Default product-rule weight by conditioning kind; silhouettes are the
# image-like modality, labels/attributes the language-like ones.
DEFAULT_ALPHA = {"silhouette": 0.75, "attributes": 0.5, "label": 0.5}


@dataclass
class DataConfig:
    resolution: int = 32
    tau: float = 0.2
    count: int = 200
    seed: int = 0


@dataclass
class VqvaeConfig:
    patch: int = 8
    codebook_size: int = 128
    embed_dim: int = 64
    beta: float = 0.25
    recon_loss: str = "mse"  # or "l1"
    groups: int = 8
    enc_widths: tuple = (32, 64, 64, 128)
    dec_widths: tuple = (128, 64, 32)
    lr: float = 2e-3
    epochs: int = 12
    batch: int = 8
    seed: int = 1


@dataclass
class PriorConfig:
    layers: int = 4
    heads: int = 4
    width: int = 128
    fourier_bands: int = 4
    order_mode: str = "random"  # or "raster"
    lr: float = 1e-3
    epochs: int = 120
    batch: int = 16
    seed: int = 2


@dataclass
class CondConfig:
    kind: str = "silhouette"  # label | attributes | silhouette
    alpha: float | None = None  # None -> DEFAULT_ALPHA[kind]
    trunk_width: int = 64
    lr: float = 1e-3
    epochs: int = 60
    batch: int = 16
    seed: int = 3

    def resolved_alpha(self) -> float:
        return DEFAULT_ALPHA[self.kind] if self.alpha is None else self.alpha


@dataclass
class SampleConfig:
    k: int = 10
    temperature: float = 1.0
    seed: int = 4


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    vqvae: VqvaeConfig = field(default_factory=VqvaeConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)
    cond: CondConfig = field(default_factory=CondConfig)
    sample: SampleConfig = field(default_factory=SampleConfig)

    def validate(self) -> None:
        if self.data.resolution % self.vqvae.patch != 0:
            raise ConfigurationError(
                f"data.resolution={self.data.resolution} not divisible by "
                f"vqvae.patch={self.vqvae.patch}"
            )
        if self.vqvae.patch & (self.vqvae.patch - 1):
            raise ConfigurationError(
                f"vqvae.patch must be a power of two, got {self.vqvae.patch}"
            )
        if len(self.vqvae.enc_widths) != self.vqvae.patch.bit_length():
            raise ConfigurationError(
                f"vqvae.enc_widths needs {self.vqvae.patch.bit_length()} entries "
                f"for patch={self.vqvae.patch}, got {len(self.vqvae.enc_widths)}"
            )
        if len(self.vqvae.dec_widths) != self.vqvae.patch.bit_length() - 1:
            raise ConfigurationError(
                f"vqvae.dec_widths needs {self.vqvae.patch.bit_length() - 1} "
                f"entries for patch={self.vqvae.patch}, got "
                f"{len(self.vqvae.dec_widths)}"
            )
        if self.prior.order_mode not in ("random", "raster"):
            raise ConfigurationError(
                f"prior.order_mode must be 'random' or 'raster', got "
                f"{self.prior.order_mode!r}"
            )
        if self.cond.kind not in DEFAULT_ALPHA:
            raise ConfigurationError(f"cond.kind {self.cond.kind!r} unknown")
        alpha = self.cond.resolved_alpha()
        if not 0.0 <= alpha <= 1.0:
            raise ConfigurationError(f"cond.alpha={alpha} outside [0, 1]")
        if self.sample.k < 1:
            raise ConfigurationError(f"sample.k must be >= 1, got {self.sample.k}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["vqvae"]["enc_widths"] = list(self.vqvae.enc_widths)
        d["vqvae"]["dec_widths"] = list(self.vqvae.dec_widths)
        return d

    def hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        ).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        cfg = cls()
        sections = {
            "data": cfg.data, "vqvae": cfg.vqvae, "prior": cfg.prior,
            "cond": cfg.cond, "sample": cfg.sample,
        }
        for section_name, values in d.items():
            if section_name not in sections:
                raise UsageError(f"unknown config section {section_name!r}")
            section = sections[section_name]
            for key, value in values.items():
                if not hasattr(section, key):
                    raise UsageError(
                        f"unknown config key {section_name}.{key!r}"
                    )
                if key in ("enc_widths", "dec_widths"):
                    value = tuple(value)
                setattr(section, key, value)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: Path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise UsageError(f"cannot read config {path}: {e}") from e
        return cls.from_dict(json.loads(text))

    def to_file(self, path: Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
