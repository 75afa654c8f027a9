"""Error taxonomy shared by the CLI (maps onto process exit codes)."""


class ConfigError(Exception):
    """Invalid or unschematic experiment configuration (exit code 2)."""


class DataError(Exception):
    """Missing, malformed or inconsistent data files (exit code 3)."""
