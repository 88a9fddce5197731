import os
import json
import logging
from pathlib import Path
from typing import Dict, Any, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError

load_dotenv()

logger = logging.getLogger(__name__)

# environment variable -> option name
ENV_OVERRIDES = {
    'FWCOMP_TABLE_DIR': 'table_dir',
    'FWCOMP_UNIVERSE_BOUND': 'universe_bound',
}


class Settings(BaseModel):
    """Validated compiler options."""
    table_dir: Optional[str] = None
    universe_bound: int = Field(default=2 ** 20, gt=0)
    max_negation_atoms: int = Field(default=4096, gt=0)


class Config:
    _instance = None
    _config_file = Path.home() / '.fwcomp' / 'config.json'
    _options: Dict[str, Any] = Settings().model_dump()

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(Config, cls).__new__(cls)
            cls._instance._load_config()
        return cls._instance

    def _load_config(self):
        """Load configuration from file if it exists."""
        if self._config_file.exists():
            try:
                with open(self._config_file, 'r', encoding='utf-8') as f:
                    loaded = json.load(f)
                merged = {**self._options, **loaded.get('options', {})}
                self._options = Settings(**merged).model_dump()
            except (OSError, ValueError, ValidationError) as e:
                logger.warning(f"Error loading config {self._config_file}: {e}")

    def _save_config(self):
        """Save configuration to file."""
        try:
            self._config_file.parent.mkdir(parents=True, exist_ok=True)
            with open(self._config_file, 'w', encoding='utf-8') as f:
                json.dump({'options': self._options}, f, indent=4)
        except OSError as e:
            logger.warning(f"Error saving config: {e}")

    def set_option(self, name: str, value: Any, persist: bool = True) -> None:
        """Set a compiler option.

        Args:
            name: Option name (e.g., 'table_dir', 'universe_bound')
            value: New value, validated against Settings
            persist: Write the updated options to the config file

        Examples:
            config.set_option("universe_bound", 2 ** 16)
            config.set_option("table_dir", "/etc/fwcomp/tables", persist=False)
        """
        if name not in self._options:
            raise ValueError(f"Unknown option: {name}. Available: {', '.join(self._options.keys())}")
        updated = Settings(**{**self._options, name: value})
        self._options = updated.model_dump()
        if persist:
            self._save_config()

    def get_option(self, name: str) -> Any:
        """Get an option value, environment overrides first.

        Examples:
            bound = config.get_option("universe_bound")
        """
        if name not in self._options:
            raise ValueError(f"Unknown option: {name}. Available: {', '.join(self._options.keys())}")
        for env_name, option in ENV_OVERRIDES.items():
            if option == name and os.getenv(env_name):
                return Settings(**{**self._options, name: os.getenv(env_name)}).model_dump()[name]
        return self._options[name]

    def get_all_options(self) -> Dict[str, Any]:
        """Get all options with environment overrides applied."""
        return {name: self.get_option(name) for name in self._options}

    @property
    def table_dir(self) -> Optional[Path]:
        value = self.get_option('table_dir')
        return Path(value) if value else None

    @property
    def universe_bound(self) -> int:
        return self.get_option('universe_bound')

    @property
    def max_negation_atoms(self) -> int:
        return self.get_option('max_negation_atoms')


# Create a global config instance
config = Config()
