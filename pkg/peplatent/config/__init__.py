"""Configuration management using Pydantic Settings"""
from pydantic_settings import BaseSettings, SettingsConfigDict
from pathlib import Path


class Settings(BaseSettings):
    """Process settings loaded from environment variables (prefix PEPLATENT_)"""

    model_config = SettingsConfigDict(
        env_prefix="PEPLATENT_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Directories
    cache_dir: str = "~/.cache/peplatent"
    workspace_dir: str = "./runs"

    # Runtime
    log_level: str = "INFO"
    threads: int = 1

    # RCSB client
    rcsb_base_url: str = "https://www.rcsb.org/fasta/entry"
    http_timeout: float = 30.0

    @property
    def cache_path(self) -> Path:
        """Returns expanded cache directory path"""
        return Path(self.cache_dir).expanduser().resolve()

    @property
    def workspace_path(self) -> Path:
        """Returns expanded workspace directory path"""
        return Path(self.workspace_dir).expanduser().resolve()


# Global settings instance
settings = Settings()
