"""Module to manage default tolerances, budgets and seeds."""

from typing import Optional, Tuple, Type

from pydantic import Field
from pydantic_settings import (
    BaseSettings,
    EnvSettingsSource,
    InitSettingsSource,
    JsonConfigSettingsSource,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
)


class SnowprobeSettings(BaseSettings):
    """Defaults shared by the library entry points and the CLI."""

    model_config = SettingsConfigDict(env_prefix="SNOWPROBE_", extra="ignore")

    # Optional json file with settings. Will not be printed in repr string.
    config_file: Optional[str] = Field(default=None, repr=False)

    rel_tol: float = Field(
        default=1e-9, ge=0, description="Relative tolerance for axioms"
    )
    abs_tol: float = Field(
        default=1e-12, gt=0, description="Root tolerance for exponents"
    )
    between_tol: float = Field(
        default=1e-9, ge=0, description="Exact between-point tolerance"
    )
    report_between_tol: float = Field(
        default=1e-6,
        ge=0,
        description="Between-point tolerance used by the report pipeline",
    )
    pair_budget: int = Field(
        default=2000, ge=1, description="Pairs sampled for non-convexity"
    )
    chain_budget: int = Field(
        default=2000, ge=1, description="Random chains for L estimates"
    )
    center_budget: int = Field(
        default=64, ge=1, description="Ball centers for doubling estimates"
    )
    sample_count: int = Field(
        default=200, ge=0, description="Points drawn from a space spec"
    )
    seed: int = Field(default=0, description="Seed for every sampler")
    threads: int = Field(default=1, ge=1, description="Worker threads")
    max_redraws: int = Field(
        default=1000, ge=0, description="Redraws allowed for duplicates"
    )
    log_level: str = Field(default="INFO")

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: Type[BaseSettings],
        init_settings: InitSettingsSource,
        env_settings: EnvSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        """
        Method to pull settings from a json file or from the environment.
        Arguments are required and set by pydantic.

        Parameters
        ----------
        settings_cls : Type[BaseSettings]
          Top level class. Model fields can be pulled from this.
        init_settings : InitSettingsSource
          The settings in the init arguments.
        env_settings : EnvSettingsSource
          The settings pulled from environment variables.
        dotenv_settings : PydanticBaseSettingsSource
          Settings from .env files. Currently, not supported.
        file_secret_settings : PydanticBaseSettingsSource
          Settings from secret files such as used in Docker. Currently, not
          supported.

        Returns
        -------
        Tuple[PydanticBaseSettingsSource, ...]

        """
        config_file = init_settings.init_kwargs.get("config_file")

        # If user defines a config file, read settings from there
        if config_file is not None:
            return (
                init_settings,
                JsonConfigSettingsSource(settings_cls, json_file=config_file),
            )
        # Otherwise, create settings from init and env
        else:
            return (
                init_settings,
                env_settings,
            )
