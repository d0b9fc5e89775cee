"""
CLI Context for managing application dependencies.

Holds the settings, global flags and parameter overrides gathered by the app
callback, and builds the Operations facade lazily for the command that runs.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .operations import Operations, OpsConfig
from .settings import ParamOverrides, Settings, create_settings_from_env, load_param_overrides


@dataclass
class CLIContext:
    """
    Shared context for CLI commands.

    Global flags (``--seed``, ``--threads``) override the environment
    settings; ``--params`` points at the YAML overrides file.
    """
    settings: Settings
    seed: Optional[int] = None
    threads: Optional[int] = None
    params_path: Optional[Path] = None
    verbose: bool = False
    _ops: Optional[Operations] = None

    @classmethod
    def from_env(cls, **flags) -> CLIContext:
        """
        Create CLI context from environment variables plus global flags.

        Returns:
            CLIContext with settings loaded from environment
        """
        return cls(settings=create_settings_from_env(), **flags)

    @property
    def config(self) -> OpsConfig:
        return OpsConfig.from_settings(self.settings, seed=self.seed, threads=self.threads, verbose=self.verbose)

    @property
    def overrides(self) -> ParamOverrides:
        return load_param_overrides(self.params_path)

    @property
    def ops(self) -> Operations:
        """
        Get or create the Operations facade (lazy initialization).

        The overrides file is parsed on first access, inside the command's
        error boundary.
        """
        if self._ops is None:
            self._ops = Operations(self.config, self.overrides)
        return self._ops
