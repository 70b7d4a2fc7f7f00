class ChurnboostError(Exception):
    """Base class for pipeline errors."""


class ConfigError(ChurnboostError):
    """Invalid configuration. Carries every violation found, not just the first."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DataError(ChurnboostError):
    """Input data is missing, malformed, or inconsistent."""


class LeakageError(ChurnboostError):
    """A feature window reaches past the period anchor."""
