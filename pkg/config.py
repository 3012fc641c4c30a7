import os
import json
import logging
from typing import Dict, Any, Optional

from dotenv import load_dotenv

logger = logging.getLogger("fixedpoint.config")

ENV_PREFIX = "FIXEDPOINT_"


class Config:
    """Configuration management for the fixed point toolkit"""

    def __init__(self, config_file: str = "fixedpoint.json", env_file: str = ".env"):
        """
        Initialize configuration with default values, then the config file, then the environment

        Args:
            config_file: Path to the JSON configuration file
            env_file: Path to a dotenv file with FIXEDPOINT_* variables
        """
        self.config_file = config_file
        self.env_file = env_file
        self.load_error: Optional[str] = None

        # Default configuration values
        self.defaults = {
            # Solver Settings
            "tol": 1e-12,
            "max_iter": 1000,
            "horizon": 64,

            # Certificate Settings
            "seed": 0,
            "family_samples": 32,
            "random_samples": 32,
            "norm_mode": "spectral",
            "order_mode": "loewner",

            # Logging Settings
            "log_level": "INFO",
            "log_file": "logs/fixedpoint.log",
            "log_max_size": "10MB",

            # Output Settings
            "output_directory": "outputs",
            "scenario_directory": "scenarios",
            "report_format": "csv",
        }

        self.config = self.defaults.copy()
        self.load_config()
        self.load_environment()

    def load_config(self) -> None:
        """Load configuration from file if it exists"""
        if os.path.exists(self.config_file):
            try:
                with open(self.config_file, 'r') as f:
                    file_config = json.load(f)
                    self.config.update(file_config)
            except (json.JSONDecodeError, IOError, TypeError, ValueError) as e:
                self.load_error = f"Could not load config file {self.config_file}: {e}"
                logger.warning(f"{self.load_error}; using defaults")

    def load_environment(self) -> None:
        """Apply FIXEDPOINT_<KEY> environment overrides, reading the dotenv file first"""
        load_dotenv(self.env_file, override=False)
        for key, default in self.defaults.items():
            raw = os.environ.get(f"{ENV_PREFIX}{key.upper()}")
            if raw is None:
                continue
            try:
                self.config[key] = type(default)(raw)
            except ValueError:
                logger.warning(f"Ignoring {ENV_PREFIX}{key.upper()}={raw!r}: expected {type(default).__name__}")

    def get(self, key: str, default: Any = None) -> Any:
        """Get a configuration value"""
        return self.config.get(key, default)

    def update(self, updates: Dict[str, Any]) -> None:
        """Update multiple configuration values, skipping unset (None) ones"""
        self.config.update({key: value for key, value in updates.items() if value is not None})

    # Convenience properties for commonly used settings
    @property
    def tol(self) -> float:
        return float(self.config.get("tol", 1e-12))

    @property
    def max_iter(self) -> int:
        return int(self.config.get("max_iter", 1000))

    @property
    def horizon(self) -> int:
        return int(self.config.get("horizon", 64))

    @property
    def seed(self) -> int:
        return int(self.config.get("seed", 0))

    @property
    def family_samples(self) -> int:
        return int(self.config.get("family_samples", 32))

    @property
    def random_samples(self) -> int:
        return int(self.config.get("random_samples", 32))

    @property
    def norm_mode(self) -> str:
        return self.config.get("norm_mode", "spectral")

    @property
    def order_mode(self) -> str:
        return self.config.get("order_mode", "loewner")

    @property
    def log_level(self) -> str:
        return self.config.get("log_level", "INFO")

    @property
    def log_file(self) -> str:
        return self.config.get("log_file", "logs/fixedpoint.log")

    @property
    def log_max_size(self) -> str:
        return self.config.get("log_max_size", "10MB")

    @property
    def output_directory(self) -> str:
        return self.config.get("output_directory", "outputs")

    @property
    def scenario_directory(self) -> str:
        return self.config.get("scenario_directory", "scenarios")

    @property
    def report_format(self) -> str:
        return self.config.get("report_format", "csv")

    def __str__(self) -> str:
        """String representation of the configuration"""
        return json.dumps(self.config, indent=2)
