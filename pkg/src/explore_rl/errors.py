"""Exception types shared across the toolkit."""


class UsageError(ValueError):
    """A precondition of a public operation was violated."""


class InvalidMdpError(ValueError):
    """An MDP document or object failed validation."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class ConfigError(ValueError):
    """Experiment configuration is malformed; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
