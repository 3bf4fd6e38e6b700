"""Experiment configuration: flat key=value files, profiles, overrides.

A config is a flat mapping of dotted keys to strings. Precedence, lowest
to highest: built-in defaults, the named profile bundle, keys from the
config file, then command-line overrides. Every key has a default, so an
empty config is a runnable `pathlike` experiment.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .data import ImbalanceSpec
from .maximizer import VARIANTS, GreedyConfig
from .metrics import MetricSpec
from .selftrain import PseudoLabelConfig
from .smi import KINDS
from .strategies import STRATEGIES
from .surrogate import SurrogateConfig


class ConfigError(ValueError):
    """Invalid configuration; commands exit with status 2 on this."""


DEFAULTS = {
    "data.source": "synthetic",
    "data.csv_path": "",
    "data.num_classes": "9",
    "data.rare_classes": "2,3,5,7",
    "data.rare_count": "25",
    "data.frequent_count": "500",
    "data.dims": "16",
    "data.cluster_spread": "1.0",
    "data.rare_offset": "1.5",
    "data.rare_spread": "0.3",
    "data.test_per_class": "20",
    "strategy": "flqmi",
    "budget.total": "90",
    "budget.rounds": "10",
    "greedy.variant": "auto",
    "greedy.epsilon": "0.01",
    "greedy.sample_seed": "0",
    "surrogate.learning_rate": "0.1",
    "surrogate.epochs": "300",
    "surrogate.l2": "0.0001",
    "ssl.enabled": "true",
    "ssl.threshold": "0.95",
    "ssl.max_iterations": "10",
    "seed": "0",
    "output_dir": "runs",
}

# Named bundles of non-default keys. `pathlike` mirrors a 9-class
# histopathology pool at 1/10 scale (4 rare classes of 25, 5 frequent of
# 500, pool imbalance ratio 20); `organlike` an 11-class abdominal CT
# pool (4 rare of 15, 7 frequent of 300, same ratio 20).
PROFILES = {
    "pathlike": {},
    "organlike": {
        "data.num_classes": "11",
        "data.rare_classes": "0,1,2,3",
        "data.rare_count": "15",
        "data.frequent_count": "300",
        "budget.total": "99",
    },
}


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None


def _parse_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None


def _parse_bool(key: str, raw: str) -> bool:
    low = raw.strip().lower()
    if low == "true":
        return True
    if low == "false":
        return False
    raise ConfigError(f"{key}: expected true or false, got {raw!r}")


def _parse_class_list(key: str, raw: str) -> tuple:
    ids = []
    for part in raw.split(","):
        part = part.strip()
        if part:
            ids.append(_parse_int(key, part))
    if len(set(ids)) != len(ids):
        raise ConfigError(f"{key}: duplicate class id in {raw!r}")
    return tuple(sorted(ids))


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment, fully resolved. See DEFAULTS for the key schema."""

    source: str = "synthetic"
    csv_path: str = ""
    num_classes: int = 9
    rare_classes: tuple = (2, 3, 5, 7)
    rare_count: int = 25
    frequent_count: int = 500
    dims: int = 16
    cluster_spread: float = 1.0
    rare_offset: float = 1.5
    rare_spread: float = 0.3
    test_per_class: int = 20
    strategy: str = "flqmi"
    total_budget: int = 90
    num_rounds: int = 10
    greedy: GreedyConfig = dataclasses.field(default_factory=GreedyConfig)
    surrogate: SurrogateConfig = dataclasses.field(
        default_factory=lambda: SurrogateConfig(learning_rate=0.1, epochs=300)
    )
    ssl_enabled: bool = True
    ssl: PseudoLabelConfig = dataclasses.field(default_factory=PseudoLabelConfig)
    seed: int = 0
    output_dir: str = "runs"

    def __post_init__(self):
        if self.source not in ("synthetic", "csv"):
            raise ConfigError(
                f"data.source must be synthetic or csv, got {self.source!r}"
            )
        if self.source == "csv" and not self.csv_path:
            raise ConfigError("data.csv_path is required when data.source is csv")
        if self.strategy not in STRATEGIES:
            raise ConfigError(
                f"strategy must be one of {', '.join(STRATEGIES)}, got {self.strategy!r}"
            )
        if self.num_rounds < 1:
            raise ConfigError("budget.rounds must be >= 1")
        if self.total_budget < self.num_rounds:
            raise ConfigError(
                "budget.total must be >= budget.rounds so every round labels"
                " at least one point"
            )
        if self.num_classes < 2:
            raise ConfigError("data.num_classes must be >= 2")
        if not self.rare_classes:
            raise ConfigError("data.rare_classes must not be empty")
        bad = [c for c in self.rare_classes if not 0 <= c < self.num_classes]
        if bad:
            raise ConfigError(
                f"data.rare_classes contains out-of-range ids {bad} for"
                f" {self.num_classes} classes"
            )
        if len(self.rare_classes) >= self.num_classes:
            raise ConfigError("at least one class must remain frequent")
        if self.source == "synthetic":
            if self.rare_count < 1 or self.frequent_count < 1:
                raise ConfigError("per-class counts must be >= 1")
            if self.rare_count >= self.frequent_count:
                raise ConfigError(
                    "data.rare_count must be smaller than data.frequent_count"
                )
            if self.dims < self.num_classes:
                raise ConfigError(
                    "data.dims must be >= data.num_classes so every class"
                    " gets its own cluster direction"
                )
            if self.cluster_spread <= 0:
                raise ConfigError("data.cluster_spread must be positive")
            if self.rare_offset <= 0:
                raise ConfigError("data.rare_offset must be positive")
            if self.rare_spread <= 0:
                raise ConfigError("data.rare_spread must be positive")
            if self.test_per_class < 1:
                raise ConfigError("data.test_per_class must be >= 1")

    @property
    def frequent_classes(self) -> tuple:
        return tuple(
            c for c in range(self.num_classes) if c not in self.rare_classes
        )

    @property
    def smi_kind(self):
        """The submodular mutual information kind, or None for baselines."""
        return self.strategy if self.strategy in KINDS else None

    def imbalance_spec(self) -> ImbalanceSpec:
        return ImbalanceSpec(
            rare_classes=frozenset(self.rare_classes),
            frequent_classes=frozenset(self.frequent_classes),
            rare_count=self.rare_count,
            frequent_count=self.frequent_count,
        )

    def metric_spec(self) -> MetricSpec:
        return MetricSpec(
            rare_classes=frozenset(self.rare_classes),
            frequent_classes=frozenset(self.frequent_classes),
        )

    def round_batches(self) -> list:
        """Per-round label counts: floor split, remainder in the last round."""
        base = self.total_budget // self.num_rounds
        batches = [base] * self.num_rounds
        batches[-1] += self.total_budget - base * self.num_rounds
        return batches

    def to_pairs(self) -> dict:
        """Flat dotted-key form of this config, every value a string."""
        return {
            "data.source": self.source,
            "data.csv_path": self.csv_path,
            "data.num_classes": str(self.num_classes),
            "data.rare_classes": ",".join(str(c) for c in self.rare_classes),
            "data.rare_count": str(self.rare_count),
            "data.frequent_count": str(self.frequent_count),
            "data.dims": str(self.dims),
            "data.cluster_spread": repr(self.cluster_spread),
            "data.rare_offset": repr(self.rare_offset),
            "data.rare_spread": repr(self.rare_spread),
            "data.test_per_class": str(self.test_per_class),
            "strategy": self.strategy,
            "budget.total": str(self.total_budget),
            "budget.rounds": str(self.num_rounds),
            "greedy.variant": self.greedy.variant,
            "greedy.epsilon": repr(self.greedy.epsilon),
            "greedy.sample_seed": str(self.greedy.sample_seed),
            "surrogate.learning_rate": repr(self.surrogate.learning_rate),
            "surrogate.epochs": str(self.surrogate.epochs),
            "surrogate.l2": repr(self.surrogate.l2),
            "ssl.enabled": "true" if self.ssl_enabled else "false",
            "ssl.threshold": repr(self.ssl.threshold),
            "ssl.max_iterations": str(self.ssl.max_iterations),
            "seed": str(self.seed),
            "output_dir": self.output_dir,
        }


def parse_config_text(text: str) -> dict:
    """Parse `key = value` lines into a dict of strings.

    Blank lines and lines starting with `#` are skipped. Raises on a
    line with no `=` or on a repeated key.
    """
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def resolve_config(
    file_pairs: dict = None, overrides: dict = None, profile: str = None
) -> ExperimentConfig:
    """Merge defaults, profile, file keys, and overrides into a config.

    The profile may come from the `profile` argument or from a `profile`
    key in either mapping (argument wins, then overrides, then file).
    Unknown keys are rejected.
    """
    file_pairs = dict(file_pairs or {})
    overrides = dict(overrides or {})
    file_name = file_pairs.pop("profile", None)
    override_name = overrides.pop("profile", None)
    name = profile or override_name or file_name
    if name is not None and name not in PROFILES:
        raise ConfigError(
            f"profile must be one of {', '.join(sorted(PROFILES))}, got {name!r}"
        )

    merged = dict(DEFAULTS)
    if name is not None:
        merged.update(PROFILES[name])
    for source_name, mapping in (("config file", file_pairs), ("override", overrides)):
        for key, value in mapping.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown {source_name} key {key!r}")
            merged[key] = value

    greedy_variant = merged["greedy.variant"]
    if greedy_variant not in VARIANTS:
        raise ConfigError(
            f"greedy.variant must be one of {', '.join(VARIANTS)},"
            f" got {greedy_variant!r}"
        )
    try:
        greedy = GreedyConfig(
            variant=greedy_variant,
            epsilon=_parse_float("greedy.epsilon", merged["greedy.epsilon"]),
            sample_seed=_parse_int("greedy.sample_seed", merged["greedy.sample_seed"]),
        )
        surrogate = SurrogateConfig(
            learning_rate=_parse_float(
                "surrogate.learning_rate", merged["surrogate.learning_rate"]
            ),
            epochs=_parse_int("surrogate.epochs", merged["surrogate.epochs"]),
            l2=_parse_float("surrogate.l2", merged["surrogate.l2"]),
        )
        ssl = PseudoLabelConfig(
            threshold=_parse_float("ssl.threshold", merged["ssl.threshold"]),
            max_iterations=_parse_int(
                "ssl.max_iterations", merged["ssl.max_iterations"]
            ),
        )
        return ExperimentConfig(
            source=merged["data.source"],
            csv_path=merged["data.csv_path"],
            num_classes=_parse_int("data.num_classes", merged["data.num_classes"]),
            rare_classes=_parse_class_list(
                "data.rare_classes", merged["data.rare_classes"]
            ),
            rare_count=_parse_int("data.rare_count", merged["data.rare_count"]),
            frequent_count=_parse_int(
                "data.frequent_count", merged["data.frequent_count"]
            ),
            dims=_parse_int("data.dims", merged["data.dims"]),
            cluster_spread=_parse_float(
                "data.cluster_spread", merged["data.cluster_spread"]
            ),
            rare_offset=_parse_float("data.rare_offset", merged["data.rare_offset"]),
            rare_spread=_parse_float("data.rare_spread", merged["data.rare_spread"]),
            test_per_class=_parse_int(
                "data.test_per_class", merged["data.test_per_class"]
            ),
            strategy=merged["strategy"],
            total_budget=_parse_int("budget.total", merged["budget.total"]),
            num_rounds=_parse_int("budget.rounds", merged["budget.rounds"]),
            greedy=greedy,
            surrogate=surrogate,
            ssl_enabled=_parse_bool("ssl.enabled", merged["ssl.enabled"]),
            ssl=ssl,
            seed=_parse_int("seed", merged["seed"]),
            output_dir=merged["output_dir"],
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, overrides: dict = None, profile: str = None) -> ExperimentConfig:
    """Read a config file and resolve it; see resolve_config."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return resolve_config(parse_config_text(text), overrides, profile)


def render_config(cfg: ExperimentConfig) -> str:
    """Config file text that resolves back to exactly cfg."""
    lines = [f"{key} = {value}" for key, value in cfg.to_pairs().items()]
    return "\n".join(lines) + "\n"
