from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..channel import DEFAULT_SMOOTHING_WINDOW, LinkProfile, default_links
from ..errors import ConfigError, ContractError
from ..nerf import EncodingConfig, RenderConfig
from ..selector import RateMode


@dataclass(frozen=True)
class OptimizerSettings:
    learning_rate: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    rays_per_batch: int = 256

    def adam_kwargs(self) -> dict:
        return {"learning_rate": self.learning_rate, "beta1": self.beta1,
                "beta2": self.beta2, "epsilon": self.epsilon}


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a run. Defaults follow the 4-client testbed."""

    rounds: int = 400
    local_iters: int = 100
    n_clients: int = 4
    select_k: int = 2
    q: float = 0.0
    rate_mode: str = RateMode.MEASURED_RATE.value
    seed: int = 0
    image_size: int = 32
    views_per_client: int = 4
    n_test_views: int = 1
    hidden_widths: list = field(default_factory=lambda: [64, 64])
    render: RenderConfig = field(default_factory=RenderConfig)
    encoding: EncodingConfig = field(default_factory=EncodingConfig)
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    links: list = field(default_factory=default_links)
    dataset: str | None = None
    registry: str | None = None
    output_dir: str = "runs/default"
    render_every: int = 50
    smoothing_window: int = DEFAULT_SMOOTHING_WINDOW
    sim_iter_seconds: float = 0.0
    phase_timeout_s: float = 120.0
    save_round_params: bool = False
    # directory relative paths are resolved against; not serialized
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    def __post_init__(self):
        self.validate()

    def validate(self):
        positive = ["rounds", "local_iters", "n_clients", "select_k", "image_size",
                    "views_per_client", "render_every", "smoothing_window"]
        for name in positive:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.n_test_views < 0:
            raise ConfigError("n_test_views must be non-negative")
        if self.select_k > self.n_clients:
            raise ConfigError(f"select_k={self.select_k} exceeds n_clients={self.n_clients}")
        if self.q < 0:
            raise ConfigError("q must be non-negative")
        try:
            RateMode(self.rate_mode)
        except ValueError:
            raise ConfigError(f"unknown rate_mode {self.rate_mode!r}") from None
        if not 0 <= self.seed < 1 << 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.optimizer.rays_per_batch < 1 or self.optimizer.learning_rate < 0:
            raise ConfigError("optimizer needs rays_per_batch >= 1 and learning_rate >= 0")
        ids = sorted(p.device_id for p in self.links)
        if ids != list(range(1, self.n_clients + 1)):
            raise ConfigError(f"links must cover device ids 1..{self.n_clients}, got {ids}")

    @property
    def layer_widths(self) -> list[int]:
        return [self.encoding.dim, *self.hidden_widths, 4]

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            if f.name == "base_dir":
                continue
            value = getattr(self, f.name)
            if f.name == "links":
                value = [p.to_json() for p in value]
            elif f.name in ("render", "encoding", "optimizer"):
                value = asdict(value)
                if f.name == "render":
                    value["background_rgb"] = list(value["background_rgb"])
            elif f.name == "hidden_widths":
                value = list(value)
            d[f.name] = value
        return d

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | str = ".") -> "ExperimentConfig":
        known = {f.name for f in fields(cls)} - {"base_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(d)
        try:
            if "render" in kw:
                r = dict(kw["render"])
                if "background_rgb" in r:
                    r["background_rgb"] = tuple(r["background_rgb"])
                kw["render"] = RenderConfig(**r)
            if "encoding" in kw:
                kw["encoding"] = EncodingConfig(**kw["encoding"])
            if "optimizer" in kw:
                kw["optimizer"] = OptimizerSettings(**kw["optimizer"])
            n = kw.get("n_clients", 4)
            kw["links"] = ([LinkProfile.from_json(p) for p in kw["links"]]
                           if "links" in kw else default_links(n))
            return cls(**kw, base_dir=Path(base_dir))
        except ConfigError:
            raise
        except (ContractError, TypeError, KeyError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(raw, base_dir=path.parent)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")
