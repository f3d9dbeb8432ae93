try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.core.errors import ConfigError
from app.models.run_config import RunConfig


class Settings(BaseSettings):
    PROJECT_NAME: str = "soliton-lab"
    OUT_DIR: Path = Path("runs")
    LEDGER_URL: str = "sqlite:///runs/ledger.db"
    THREADS: int = 1
    LOG_LEVEL: str = "INFO"

    model_config = SettingsConfigDict(case_sensitive=True, env_file=".env", env_prefix="KGM_")


settings = Settings()


def load_run_config(path: Path | str) -> RunConfig:
    """Parse and validate a TOML run configuration."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(detail=f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(detail=f"malformed TOML in {path}: {exc}")
    return validate_run_config(raw)


def validate_run_config(raw: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        problems = [
            {"key": ".".join(str(p) for p in err["loc"]), "msg": err["msg"]}
            for err in exc.errors()
        ]
        raise ConfigError(detail={"invalid_config": problems})
