"""
Configuration settings for the sigma-2 numerical laboratory.

This module handles environment variables, numerical defaults and logging setup.
"""

import logging
from typing import Optional, Tuple

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Laboratory settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        populate_by_name=True,
        extra="ignore",
    )

    # Application
    app_name: str = Field(default="sigma2lab")
    app_version: str = Field(default="1.0.0")
    default_seed: int = Field(default=42, alias="SIGMA2_SEED")

    # Tolerances
    identity_rtol: float = Field(default=1e-12, alias="IDENTITY_RTOL")
    inequality_slack: float = Field(default=1e-10, alias="INEQUALITY_SLACK")
    cone_boundary_tol: float = Field(default=1e-14, alias="CONE_BOUNDARY_TOL")
    symmetry_rtol: float = Field(default=1e-12, alias="SYMMETRY_RTOL")

    # Cone sampling
    gamma2_box: Tuple[float, float] = Field(default=(-1.0, 3.0), alias="GAMMA2_BOX")
    f_sample_min: float = Field(default=0.1, alias="F_SAMPLE_MIN")
    f_sample_max: float = Field(default=10.0, alias="F_SAMPLE_MAX")

    # Grid
    grid_radius: float = Field(default=1.0, alias="GRID_RADIUS")

    # Newton solver
    solver_max_iter: int = Field(default=50, alias="SOLVER_MAX_ITER")
    solver_tol_scale: float = Field(default=1e-10, alias="SOLVER_TOL_SCALE")
    solver_backtrack: float = Field(default=0.5, alias="SOLVER_BACKTRACK")
    solver_step_floor: float = Field(default=1e-4, alias="SOLVER_STEP_FLOOR")
    direct_solve_limit: int = Field(default=200_000, alias="DIRECT_SOLVE_LIMIT")
    krylov_restart: int = Field(default=60, alias="KRYLOV_RESTART")
    krylov_rtol: float = Field(default=1e-12, alias="KRYLOV_RTOL")
    rotation_sweeps: int = Field(default=12, alias="ROTATION_SWEEPS")

    # Almost Jacobi inequality
    fp_difference_step: float = Field(default=1e-5, alias="FP_DIFFERENCE_STEP")

    # Doubling
    doubling_constant: float = Field(default=10.0, alias="DOUBLING_CONSTANT")

    # Potential theory
    wolff_cutoff_ratio: float = Field(default=1e-6, alias="WOLFF_CUTOFF_RATIO")
    wolff_steps: int = Field(default=100_000, alias="WOLFF_STEPS")
    seminorm_node_cap: int = Field(default=4096, alias="SEMINORM_NODE_CAP")
    seminorm_pair_samples: int = Field(default=20_000, alias="SEMINORM_PAIR_SAMPLES")
    oscillation_theta_cap: float = Field(default=0.99, alias="OSCILLATION_THETA_CAP")

    # Logging
    log_level: str = Field(default="INFO", alias="LOG_LEVEL")
    log_format: str = Field(
        default="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        alias="LOG_FORMAT"
    )
    log_file: Optional[str] = Field(default=None, alias="LOG_FILE")

    def setup_logging(self, level: Optional[str] = None) -> None:
        """Setup laboratory logging; records go to stderr so CSV on stdout stays clean."""
        handlers: list = [logging.StreamHandler()]
        if self.log_file:
            handlers.append(logging.FileHandler(self.log_file))

        logging.basicConfig(
            level=getattr(logging, (level or self.log_level).upper()),
            format=self.log_format,
            handlers=handlers,
            force=True,
        )
        logging.captureWarnings(True)

        # Set specific logger levels
        logging.getLogger("py.warnings").setLevel(logging.ERROR)


# Global settings instance
settings = Settings()


def get_settings() -> Settings:
    """Return the process-wide settings instance."""
    return settings


class ExitCodes:
    """Process exit codes and stable messages for every outcome kind."""

    OK = 0
    VIOLATION = 1
    USAGE = 2

    CONTRACT_VIOLATED = "A property contract was violated; see the summary line of the report."
    PARAMETER = "Invalid parameter."
    DOMAIN = "Input lies outside the domain of the operation."
    ADMISSIBILITY = "The grid function is not admissible (Hessian leaves the Gamma_2 cone)."
    NONCONVERGENCE = "The Newton iteration did not converge."
    LINEAR_ALGEBRA = "The Newton linear system could not be solved."
    CONFIGURATION = "The experiment configuration is inconsistent."
    UNSUPPORTED = "The requested dimension is not supported by this operation."
    GENERAL_FAILURE = "Unexpected failure."

    @classmethod
    def get_message(cls, error_kind: str) -> str:
        """Get the message for a specific error kind."""
        message_map = {
            "violation": cls.CONTRACT_VIOLATED,
            "parameter": cls.PARAMETER,
            "domain": cls.DOMAIN,
            "admissibility": cls.ADMISSIBILITY,
            "nonconvergence": cls.NONCONVERGENCE,
            "linear_algebra": cls.LINEAR_ALGEBRA,
            "configuration": cls.CONFIGURATION,
            "unsupported": cls.UNSUPPORTED,
        }
        return message_map.get(error_kind, cls.GENERAL_FAILURE)

    @classmethod
    def get_code(cls, error_kind: str) -> int:
        """Exit code for an error kind: usage errors are 2, everything else 1."""
        return cls.USAGE if error_kind == "usage" else cls.VIOLATION


# Global exit code table instance
exit_codes = ExitCodes()
