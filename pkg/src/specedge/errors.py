"""Exception hierarchy shared by every layer."""


class DomainError(ValueError):
    """An argument is outside the operation's domain."""


class ProtocolError(RuntimeError):
    """A peer violated the draft/verify protocol (bad round id, corrupt batch...)."""


class DecodeError(ProtocolError):
    """A wire frame could not be decoded."""


class SessionError(RuntimeError):
    """The transport failed mid-session; ``partial`` holds tokens emitted so far."""

    def __init__(self, message, partial=()):
        super().__init__(message)
        self.partial = list(partial)


class ScenarioError(RuntimeError):
    """The simulated scenario cannot make progress (deadlock)."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class ConfigError(ValueError):
    """Invalid experiment configuration; ``problems`` lists (field, reason)."""

    def __init__(self, problems):
        self.problems = list(problems)
        text = "; ".join(f"{field}: {why}" for field, why in self.problems)
        super().__init__(f"invalid config: {text}")


class ExactnessError(AssertionError):
    """Token streams of modes that must agree diverged."""
