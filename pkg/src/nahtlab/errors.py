"""Exception types shared across the package."""


class ConfigError(Exception):
    """Invalid configuration: bad shapes, unknown keys, incompatible specs."""


class NonFiniteGradient(RuntimeError):
    """An optimizer step saw a NaN/Inf gradient; the update was aborted."""

    def __init__(self, entry_name: str):
        super().__init__(f"non-finite gradient in parameter entry {entry_name!r}")
        self.entry_name = entry_name


class TrainingDiverged(RuntimeError):
    """A training loss went non-finite; carries a diagnostic payload."""

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
