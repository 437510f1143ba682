# config.py - Configuration settings
import json
import os
from dataclasses import dataclass, field, fields, asdict
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from utils.config_schema import ConfigSchemaManager, FieldSchema, FieldType, FieldValidation
from utils.error_handler import ConfigError

ARTIFACT_NAME = "panonav"
ARTIFACT_VERSION = "1.0.0"


@dataclass
class LoggingConfig:
    """Logging configuration settings"""
    level: str = "INFO"
    format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    file: str = ""
    max_size: int = 10 * 1024 * 1024  # 10MB
    backup_count: int = 5


@dataclass
class AppConfig:
    """Process-level settings read from the environment"""
    name: str = ARTIFACT_NAME
    version: str = ARTIFACT_VERSION
    output_dir: str = "runs"
    jobs: int = 1
    logging: LoggingConfig = None

    def __post_init__(self):
        if self.logging is None:
            self.logging = LoggingConfig()


class ConfigManager:
    """Configuration manager with environment variable and .env support"""

    def __init__(self, env_file: Optional[str] = None):
        load_dotenv(env_file)
        self.config = self._load_config()

    def _load_config(self) -> AppConfig:
        return AppConfig(
            output_dir=self._get_env('NAV_OUTPUT_DIR', 'runs'),
            jobs=self._get_int_env('NAV_JOBS', 1),
            logging=LoggingConfig(
                level=self._get_env('NAV_LOG_LEVEL', 'INFO'),
                format=self._get_env('NAV_LOG_FORMAT', '%(asctime)s - %(name)s - %(levelname)s - %(message)s'),
                file=self._get_env('NAV_LOG_FILE', ''),
                max_size=self._get_int_env('NAV_LOG_MAX_SIZE', 10 * 1024 * 1024),
                backup_count=self._get_int_env('NAV_LOG_BACKUP_COUNT', 5)
            )
        )

    def _get_env(self, key: str, default: str) -> str:
        return os.getenv(key, default)

    def _get_int_env(self, key: str, default: int) -> int:
        value = os.getenv(key)
        if not value:
            return default
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"Environment variable {key} must be an integer, got {value!r}", key)

    def validate(self) -> List[str]:
        """Validate configuration and return list of issues"""
        issues = []
        if self.config.jobs < 1:
            issues.append("ERROR: NAV_JOBS must be at least 1.")
        if self.config.logging.level.upper() not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            issues.append(f"WARNING: Unknown NAV_LOG_LEVEL {self.config.logging.level!r}, using INFO.")
        if self.config.output_dir and os.path.exists(self.config.output_dir) \
                and not os.path.isdir(self.config.output_dir):
            issues.append(f"ERROR: NAV_OUTPUT_DIR {self.config.output_dir!r} is not a directory.")
        return issues


# Run configuration --------------------------------------------------------

@dataclass
class EncoderSection:
    profile: str = "desk"
    cost_profile: str = "vit_b16"
    seed: int = 0


@dataclass
class PipelineSection:
    mode: str = "adaptive"  # adaptive | full | static


@dataclass
class SpatialSection:
    enabled: bool = True
    k: int = 4
    circular: bool = False


@dataclass
class ThresholdSection:
    enabled: bool = True
    T0: float = 1.0
    A: float = 9e-4
    round_decimals: int = 3
    full_compute_cutoff: float = 0.998
    static_exit_threshold: float = 0.998


@dataclass
class CacheSection:
    enabled: bool = True
    n_bits: int = 10
    # None picks 0.95 in scan mode and 0.85 otherwise
    similarity_threshold: Optional[float] = None
    max_pairs: Optional[int] = None
    metric: str = "cosine"


@dataclass
class AgentSection:
    stop_threshold: float = 0.99
    context_weight: float = 0.0


@dataclass
class SubgoalSection:
    mode: str = "graph"  # graph | scan
    clearance_deg: float = 8.0
    min_depth: float = 0.5
    max_sector_deg: float = 90.0
    epsilon: float = 0.05
    max_iters: int = 500


@dataclass
class CorruptionSection:
    kind: str = "none"
    severity: int = 3
    denoise_kernel: int = 0


@dataclass
class SuiteSection:
    episodes: int = 50
    seed: int = 0
    step_limit: int = 15
    success_radius: float = 3.0
    min_hops: int = 3
    max_hops: int = 8


@dataclass
class EnvSection:
    path: str = ""


@dataclass
class OutputSection:
    report_path: str = ""
    table_path: str = ""


SECTION_TYPES = {
    'encoder': EncoderSection,
    'pipeline': PipelineSection,
    'spatial': SpatialSection,
    'thresholds': ThresholdSection,
    'cache': CacheSection,
    'agent': AgentSection,
    'subgoal': SubgoalSection,
    'corruption': CorruptionSection,
    'suite': SuiteSection,
    'env': EnvSection,
    'output': OutputSection,
}

CORRUPTION_KINDS = ["none", "speckle", "low_light", "defocus", "motion_blur"]


def _schema(section: str, name: str, kind: FieldType, help_text: str = "", **rules) -> FieldSchema:
    return FieldSchema(field_name=name, section_name=section, field_type=kind,
                       validation=FieldValidation(**rules), help_text=help_text)


def build_run_schema() -> ConfigSchemaManager:
    manager = ConfigSchemaManager()
    entries = [
        _schema('encoder', 'profile', FieldType.CHOICE, "executed encoder profile", choices=["desk"]),
        _schema('encoder', 'cost_profile', FieldType.CHOICE, "profile the ledger costs views with",
                choices=["desk", "vit_b16"]),
        _schema('encoder', 'seed', FieldType.INT, min_value=0),
        _schema('pipeline', 'mode', FieldType.CHOICE, choices=["adaptive", "full", "static"]),
        _schema('spatial', 'enabled', FieldType.BOOL),
        _schema('spatial', 'k', FieldType.INT, min_value=0),
        _schema('spatial', 'circular', FieldType.BOOL),
        _schema('thresholds', 'enabled', FieldType.BOOL),
        _schema('thresholds', 'T0', FieldType.FLOAT, min_value=0.0, exclusive_min=True, max_value=1.0),
        _schema('thresholds', 'A', FieldType.FLOAT, min_value=0.0),
        _schema('thresholds', 'round_decimals', FieldType.INT, min_value=0, max_value=12),
        _schema('thresholds', 'full_compute_cutoff', FieldType.FLOAT, min_value=0.0,
                exclusive_min=True, max_value=1.0),
        _schema('thresholds', 'static_exit_threshold', FieldType.FLOAT, min_value=0.0, max_value=1.0),
        _schema('cache', 'enabled', FieldType.BOOL),
        _schema('cache', 'n_bits', FieldType.INT, min_value=1, max_value=64),
        _schema('cache', 'similarity_threshold', FieldType.FLOAT, "reuse cutoff; null resolves by subgoal.mode",
                min_value=-1.0, max_value=1.0, allow_none=True),
        _schema('cache', 'max_pairs', FieldType.INT, min_value=1, allow_none=True),
        _schema('cache', 'metric', FieldType.CHOICE, choices=["cosine", "ssim"]),
        _schema('agent', 'stop_threshold', FieldType.FLOAT, min_value=-1.0, max_value=2.0),
        _schema('agent', 'context_weight', FieldType.FLOAT, min_value=0.0),
        _schema('subgoal', 'mode', FieldType.CHOICE, choices=["graph", "scan"]),
        _schema('subgoal', 'clearance_deg', FieldType.FLOAT, min_value=0.0, max_value=360.0),
        _schema('subgoal', 'min_depth', FieldType.FLOAT, min_value=0.0, exclusive_min=True),
        _schema('subgoal', 'max_sector_deg', FieldType.FLOAT, min_value=1.0, max_value=360.0),
        _schema('subgoal', 'epsilon', FieldType.FLOAT, min_value=0.0, exclusive_min=True),
        _schema('subgoal', 'max_iters', FieldType.INT, min_value=1),
        _schema('corruption', 'kind', FieldType.CHOICE, choices=CORRUPTION_KINDS),
        _schema('corruption', 'severity', FieldType.INT, min_value=1, max_value=5),
        _schema('corruption', 'denoise_kernel', FieldType.INT, min_value=0),
        _schema('suite', 'episodes', FieldType.INT, min_value=1),
        _schema('suite', 'seed', FieldType.INT, min_value=0),
        _schema('suite', 'step_limit', FieldType.INT, min_value=1),
        _schema('suite', 'success_radius', FieldType.FLOAT, min_value=0.0),
        _schema('suite', 'min_hops', FieldType.INT, min_value=0),
        _schema('suite', 'max_hops', FieldType.INT, min_value=0),
        _schema('env', 'path', FieldType.STRING),
        _schema('output', 'report_path', FieldType.STRING),
        _schema('output', 'table_path', FieldType.STRING),
    ]
    for entry in entries:
        manager.add_schema(entry)
    return manager


run_schema = build_run_schema()


@dataclass
class RunConfig:
    """Resolved configuration of one benchmark run"""
    encoder: EncoderSection = field(default_factory=EncoderSection)
    pipeline: PipelineSection = field(default_factory=PipelineSection)
    spatial: SpatialSection = field(default_factory=SpatialSection)
    thresholds: ThresholdSection = field(default_factory=ThresholdSection)
    cache: CacheSection = field(default_factory=CacheSection)
    agent: AgentSection = field(default_factory=AgentSection)
    subgoal: SubgoalSection = field(default_factory=SubgoalSection)
    corruption: CorruptionSection = field(default_factory=CorruptionSection)
    suite: SuiteSection = field(default_factory=SuiteSection)
    env: EnvSection = field(default_factory=EnvSection)
    output: OutputSection = field(default_factory=OutputSection)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        """Build and validate a config; unknown sections or keys raise ConfigError"""
        if not isinstance(data, dict):
            raise ConfigError("Run configuration must be a JSON object")
        sections = {}
        for name, section_type in SECTION_TYPES.items():
            values = data.get(name, {})
            if not isinstance(values, dict):
                raise ConfigError(f"Section '{name}' must be an object", name)
            known = {f.name for f in fields(section_type)}
            for key in values:
                if key not in known:
                    raise ConfigError(f"Unknown configuration key: {name}.{key}", f"{name}.{key}")
            sections[name] = section_type(**values)
        for name in data:
            if name not in SECTION_TYPES:
                raise ConfigError(f"Unknown configuration section: {name}", name)
        config = cls(**sections)
        config.validate()
        return config

    def validate(self) -> None:
        """Check every field against the schema plus cross-field rules"""
        errors = run_schema.validate_document(self.to_dict())
        if not errors:
            if self.suite.min_hops > self.suite.max_hops:
                errors.append("Field 'suite.min_hops' must not exceed suite.max_hops")
            kernel = self.corruption.denoise_kernel
            if kernel and kernel % 2 == 0:
                errors.append("Field 'corruption.denoise_kernel' must be odd (or 0 to disable)")
        if errors:
            first = errors[0]
            field_name = first.split("'")[1] if "'" in first else None
            raise ConfigError("; ".join(errors), field_name)

    def to_dict(self) -> Dict[str, Any]:
        return {name: asdict(getattr(self, name)) for name in SECTION_TYPES}

    def with_overrides(self, overrides: Dict[str, Any]) -> "RunConfig":
        """Return a copy with `section.field` keys replaced"""
        data = self.to_dict()
        for dotted, value in overrides.items():
            if '.' not in dotted:
                raise ConfigError(f"Override key must be section.field, got {dotted!r}", dotted)
            section, key = dotted.split('.', 1)
            if section not in data:
                raise ConfigError(f"Unknown configuration section: {section}", dotted)
            if key not in data[section]:
                raise ConfigError(f"Unknown configuration key: {dotted}", dotted)
            data[section][key] = value
        return RunConfig.from_dict(data)


def parse_override(text: str) -> Dict[str, Any]:
    """Parse `section.field=value`; the value is read as JSON, else kept as a string"""
    if '=' not in text:
        raise ConfigError(f"Override must look like section.field=value, got {text!r}", text)
    key, raw = text.split('=', 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return {key.strip(): value}


def load_run_config(path: Optional[str] = None, overrides: Optional[List[str]] = None) -> RunConfig:
    """Load a JSON run config (or defaults) and apply command-line overrides"""
    data: Dict[str, Any] = {}
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"Config file not found: {path}", "config")
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid JSON: {e}", "config")
    config = RunConfig.from_dict(data)
    merged: Dict[str, Any] = {}
    for text in overrides or []:
        merged.update(parse_override(text))
    return config.with_overrides(merged) if merged else config


# Global configuration instance
config_manager = ConfigManager()
config = config_manager.config
