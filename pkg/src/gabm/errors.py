"""Exception types shared across the engine."""

from __future__ import annotations


class SimulationError(Exception):
    """Base class for every error raised by this package."""


class NoMatchingOption(SimulationError):
    """A choice answer matched zero options, or more than one."""


class NotANumber(SimulationError):
    """A numeric answer contained no parseable number token."""


class InvalidModelOutput(SimulationError):
    """The model kept producing unusable output after all retries."""


class BackendUnavailable(SimulationError):
    """A remote model backend could not be reached."""


class EpisodeAbort(SimulationError):
    """An episode stopped early; the message names the failing part."""


class ConfigError(SimulationError):
    """A runtime operation referenced something the scenario never declared."""


class ConfigIssue:
    """One validation problem, locating the offending config field."""

    __slots__ = ("kind", "path", "message")

    def __init__(self, kind: str, path: str, message: str):
        self.kind = kind
        self.path = path
        self.message = message

    def __str__(self) -> str:
        return f"{self.kind} at {self.path}: {self.message}"

    def __repr__(self) -> str:
        return f"ConfigIssue({self.kind!r}, {self.path!r}, {self.message!r})"

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, ConfigIssue)
            and (self.kind, self.path, self.message)
            == (other.kind, other.path, other.message)
        )


class ConfigValidationError(SimulationError):
    """Raised by config loading with the full list of problems found."""

    def __init__(self, issues: list[ConfigIssue]):
        self.issues = issues
        lines = "\n".join(f"  - {issue}" for issue in issues)
        super().__init__(f"invalid scenario config:\n{lines}")


class ReplayDivergence(SimulationError):
    """A replayed run stopped matching the recorded trace."""

    def __init__(self, step: int, detail: str):
        self.step = step
        self.detail = detail
        super().__init__(f"replay diverged at step {step}: {detail}")
