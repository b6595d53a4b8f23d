"""Training configuration and ``key = value`` parsing shared with the CLI."""

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError


@dataclass
class TrainConfig:
    alpha: float = 1.0
    beta: float = 1.0
    lr: float = 0.005
    epochs: int = 30
    dropout: float = 0.5
    batch_size: int = 1
    seed: int = 0
    d_emb: int = 300
    d_hidden: int = 250          # per direction; token states have 2 * d_hidden
    d_arc: int = 100
    d_rel: int = 100
    syngcn_layers: int = 1
    relgcn_layers: int = 3
    freeze_cdp: bool = False
    freeze_after: int = 0        # epochs trained before CDP parameters freeze
    disable_relgcn: bool = False
    val_fraction: float = 0.167
    reduction: str = "sum"
    exclude_dep_labels: tuple = ()
    embeddings: str = ""

    @property
    def d(self):
        return 2 * self.d_hidden

    def validate(self):
        if self.alpha < 0 or self.beta < 0 or (self.alpha == 0 and self.beta == 0):
            raise ConfigError("alpha and beta must be >= 0 and not both 0")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.epochs < 0 or self.freeze_after < 0:
            raise ConfigError("epochs and freeze_after must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if min(self.d_emb, self.d_hidden, self.d_arc, self.d_rel) < 1:
            raise ConfigError("dimensions must be >= 1")
        if self.syngcn_layers < 0 or self.relgcn_layers < 0:
            raise ConfigError("layer counts must be >= 0")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must lie in [0, 1)")
        if self.reduction not in ("sum", "mean"):
            raise ConfigError("reduction must be 'sum' or 'mean'")
        return self

    def to_dict(self):
        data = dataclasses.asdict(self)
        data["exclude_dep_labels"] = list(self.exclude_dep_labels)
        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data["exclude_dep_labels"] = tuple(data.get("exclude_dep_labels", ()))
        return cls(**data)


def _convert(field, raw):
    kind = field.type if isinstance(field.type, str) else field.type.__name__
    try:
        if kind == "bool":
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "tuple":
            return tuple(s.strip() for s in raw.split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"invalid value for {field.name}: {raw!r}") from None
    return raw.strip()


def apply_overrides(config, pairs):
    """Return a copy of the dataclass ``config`` with string ``pairs`` applied.

    Unknown keys raise :class:`ConfigError`.
    """
    fields = {f.name: f for f in dataclasses.fields(config)}
    updates = {}
    for key, raw in pairs.items():
        if key not in fields:
            raise ConfigError(f"unknown option {key!r}")
        updates[key] = _convert(fields[key], raw)
    return dataclasses.replace(config, **updates)


def read_config_file(path):
    """Parse ``key = value`` lines; blank lines and ``#`` comments are ignored."""
    pairs = {}
    with open(path, encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{number}: expected 'key = value'")
            key, value = line.split("=", 1)
            pairs[key.strip()] = value.strip()
    return pairs


def format_config(config):
    return "\n".join(f"{k} = {v}" for k, v in dataclasses.asdict(config).items())
