# Configuration management
from .settings import Settings, settings, get_settings, ExitCodes, exit_codes

__all__ = ["Settings", "settings", "get_settings", "ExitCodes", "exit_codes"]
