"""
Run Configuration
One flat set of keys covering the model, the trainer and the synthetic
generator. Values come from defaults, then a `key=value` file, then
command-line overrides. The environment is never read.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

from pydantic import Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict

from errors import ConfigurationError, ParseError
from features.synthetic import SynthConfig
from minet.attention import InterestActivation, ItemScoring
from minet.model import AblationVariant, MiNetConfig, ModelKind
from training.trainer import TrainConfig

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


class RunConfig(BaseSettings):
    """Every configurable key with its default"""
    model_config = SettingsConfigDict(extra="forbid", validate_default=True, protected_namespaces=("settings_",))

    # model
    model_kind: ModelKind = ModelKind.MINET
    embedding_dim: int = Field(default=10, gt=0)
    transfer_rank: int = Field(default=10, gt=0)
    attention_hidden: int = Field(default=64, gt=0)
    fc_dims: List[int] = Field(default_factory=lambda: [256, 128], min_length=1)
    gamma: float = Field(default=0.5, ge=0)
    interest_activation: InterestActivation = InterestActivation.EXP
    ablation: AblationVariant = AblationVariant.FULL
    item_scoring: ItemScoring = ItemScoring.TARGET_AWARE
    full_rank_transfer: bool = False
    max_source_seq: int = Field(default=25, gt=0)
    max_target_seq: int = Field(default=5, gt=0)

    # training
    batch_source: int = Field(default=64, gt=0)
    batch_target: int = Field(default=32, gt=0)
    epochs: int = Field(default=20, gt=0)
    learning_rate: float = Field(default=0.05, gt=0)
    epsilon: float = Field(default=1e-8, gt=0)
    seed: int = 0
    early_stop_patience: int = Field(default=0, ge=0)
    refit_on_validation: bool = False
    evaluate_unweighted_source: bool = True
    n_seeds: int = Field(default=5, gt=0)

    # synthetic data
    n_users: int = Field(default=2000, gt=0)
    n_user_segments: int = Field(default=4, gt=0)
    n_source_categories: int = Field(default=8, gt=0)
    n_target_categories: int = Field(default=8, gt=0)
    news_per_category: int = Field(default=20, gt=0)
    ads_per_category: int = Field(default=10, gt=0)
    n_tags: int = Field(default=30, gt=0)
    max_tags_per_news: int = Field(default=3, gt=0)
    kappa: float = 0.8
    base_rate: float = Field(default=0.2, gt=0, lt=1)
    source_base_rate: float = Field(default=0.3, gt=0, lt=1)
    affinity_strength: float = Field(default=2.0, ge=0)
    short_term_bonus: float = Field(default=1.0, ge=0)
    dirichlet_alpha: float = Field(default=0.3, gt=0)
    mean_source_seq: float = Field(default=8.0, ge=0)
    mean_target_seq: float = Field(default=2.0, ge=0)
    source_instances_per_user: int = Field(default=4, ge=0)
    target_instances_per_user: int = Field(default=6, ge=3)

    # runtime
    log_level: str = "INFO"
    workers: int = Field(default=1, gt=0)
    records_file: Optional[str] = None

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls,
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        return (init_settings,)

    @field_validator("fc_dims", mode="before")
    def parse_fc_dims(cls, v):
        """Accept '256,128' as written in config files"""
        if isinstance(v, str):
            return [int(part) for part in v.split(",") if part.strip()]
        return v

    @field_validator("records_file", mode="before")
    def parse_records_file(cls, v):
        return None if v in ("", "none", "None") else v

    @field_validator("log_level")
    def validate_log_level(cls, v):
        level = v.upper()
        if level not in LOG_LEVELS:
            raise ValueError(f"log_level must be one of {LOG_LEVELS}")
        return level

    def _project(self, model):
        """Build one component config; cross-field checks there surface as ConfigurationError"""
        values = {name: getattr(self, name) for name in model.model_fields if name in type(self).model_fields}
        try:
            return model(**values)
        except ValidationError as e:
            raise ConfigurationError(f"invalid configuration: {describe_errors(e)}") from None

    def minet_config(self) -> MiNetConfig:
        return self._project(MiNetConfig)

    def train_config(self) -> TrainConfig:
        return self._project(TrainConfig)

    def synth_config(self) -> SynthConfig:
        return self._project(SynthConfig)

    def validate_projections(self) -> None:
        self.minet_config()
        self.train_config()
        self.synth_config()


def describe_errors(error: ValidationError) -> str:
    return "; ".join(f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in error.errors())


def parse_assignments(lines: Iterable[str], source: str = "<overrides>") -> Dict[str, str]:
    """
    Parse `key=value` lines; blank lines and '#' comments are skipped.

    Raises:
        ParseError: a line without '='
    """
    values: Dict[str, str] = {}
    for number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ParseError(f"expected key=value, got {raw.strip()!r}", number, source)
        values[key.strip()] = value.strip()
    return values


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        return parse_assignments(f, str(path))


def build_run_config(
    config_file: Optional[Union[str, Path]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """
    Merge defaults, an optional config file and overrides (highest precedence).

    Raises:
        ConfigurationError: unknown keys or invalid values, naming the keys
    """
    values: Dict[str, Any] = {}
    if config_file:
        values.update(read_config_file(config_file))
        logger.debug(f"Read {len(values)} keys from {config_file}")
    values.update(overrides or {})

    unknown = sorted(set(values) - set(RunConfig.model_fields))
    if unknown:
        raise ConfigurationError(f"unknown configuration key(s): {', '.join(unknown)}")
    try:
        config = RunConfig(**values)
    except ValidationError as e:
        raise ConfigurationError(f"invalid configuration: {describe_errors(e)}") from None
    config.validate_projections()
    return config
