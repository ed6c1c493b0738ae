"""
Exceptions raised by reportkg.

Each exception carries the exit status the command line maps it to.
"""


class ReportKGError(Exception):
    """Base class for all errors raised by reportkg."""

    exit_status = 1


class UsageError(ReportKGError):
    """A required option is missing or options contradict each other."""

    exit_status = 1


class InputFormatError(ReportKGError, ValueError):
    """An input file is missing, unreadable or malformed."""

    exit_status = 2

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")


class IdMismatchError(InputFormatError):
    """Two corpora that must be aligned by id are not."""

    def __init__(self, missing, extra, what="generated corpus"):
        self.missing = sorted(missing)
        self.extra = sorted(extra)
        parts = []
        if self.missing:
            parts.append(f"missing ids {self.missing}")
        if self.extra:
            parts.append(f"extra ids {self.extra}")
        super().__init__(f"{what} is not aligned with the ground truth: " + "; ".join(parts))


class KnowledgeGraphValidationError(ReportKGError):
    """A knowledge graph file failed validation.

    `violations` holds every violation found, not just the first one.
    """

    exit_status = 3

    def __init__(self, violations, path=None):
        self.violations = list(violations)
        self.path = path
        lines = [str(v) for v in self.violations]
        source = f" in {path}" if path else ""
        super().__init__(
            f"{len(lines)} knowledge graph violation(s){source}:\n  " + "\n  ".join(lines)
        )
