"""
statbench Configuration Management

Loads ambient settings (logging, default seed, default output directory)
from environment variables and an optional .env file at the repository root.
Experiment parameters are not configured here; they come from CLI flags.
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, List

# Seed used by every subcommand when neither --seed nor STATBENCH_SEED is given.
DEFAULT_SEED = 1982

logger = logging.getLogger("statbench.config")


def str_to_bool(value: str) -> bool:
    """Convert string to boolean."""
    return value.lower() in ('true', '1', 'yes', 'on', 'enabled')


class Config:
    """Application configuration loader and manager."""

    def __init__(self):
        """Initialize configuration by loading from environment."""
        self._load_env_file()
        self._load_settings()

    def _load_env_file(self):
        """Load .env file if it exists."""
        env_path = os.path.join(os.path.dirname(os.path.dirname(__file__)), '.env')
        if os.path.exists(env_path):
            try:
                with open(env_path, 'r') as f:
                    for line in f:
                        line = line.strip()
                        if line and not line.startswith('#') and '=' in line:
                            key, value = line.split('=', 1)
                            key = key.strip()
                            value = value.strip()
                            # Only set if not already in environment
                            if key not in os.environ:
                                os.environ[key] = value
            except OSError as e:
                logger.warning("Failed to load .env file: %s", e)

    def _load_settings(self):
        """Load all configuration settings from environment."""
        # Logging
        self.log_level = os.environ.get('STATBENCH_LOG_LEVEL', 'INFO').upper()
        self.log_file = os.environ.get('STATBENCH_LOG_FILE', '')
        self.log_max_size_mb = self._int('STATBENCH_LOG_MAX_SIZE_MB', 10)
        self.log_backup_count = self._int('STATBENCH_LOG_BACKUP_COUNT', 5)
        self.debug_mode = str_to_bool(os.environ.get('STATBENCH_DEBUG', 'false'))
        if self.debug_mode:
            self.log_level = 'DEBUG'

        # Runs
        self.default_seed = self._int('STATBENCH_SEED', DEFAULT_SEED)
        if self.default_seed < 0 or self.default_seed >= 2 ** 64:
            logger.warning("STATBENCH_SEED out of 64-bit range, using %d", DEFAULT_SEED)
            self.default_seed = DEFAULT_SEED
        self.out_dir = os.environ.get('STATBENCH_OUT_DIR', 'out')

    @staticmethod
    def _int(key: str, default: int) -> int:
        raw = os.environ.get(key, '')
        if not raw:
            return default
        try:
            return int(raw)
        except ValueError:
            logger.warning("Invalid %s value %r, using default %d", key, raw, default)
            return default

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value by key."""
        return getattr(self, key, default)

    def describe(self) -> List[str]:
        """Return the current configuration as printable lines."""
        return [
            f"Log Level: {self.log_level}",
            f"Log File: {self.log_file or 'None'}",
            f"Default Seed: {self.default_seed}",
            f"Output Directory: {self.out_dir}",
            f"Debug Mode: {self.debug_mode}",
        ]


# Global configuration instance
_config = None


def get_config() -> Config:
    """Get the global configuration instance."""
    global _config
    if _config is None:
        _config = Config()
    return _config


def reload_config() -> Config:
    """Reload configuration from environment."""
    global _config
    _config = Config()
    return _config


def load_json(path, default=None):
    p = Path(path)
    if not p.exists():
        return default
    try:
        with p.open('r', encoding='utf-8') as f:
            return json.load(f)
    except (OSError, ValueError):
        return default


def save_json(path, data):
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open('w', encoding='utf-8') as f:
        json.dump(data, f, indent=4, sort_keys=True)
        f.write('\n')
