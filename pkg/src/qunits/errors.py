"""Exception hierarchy shared by every module.

The CLI maps each subclass to one diagnostic class (parse, integrity,
not-found), so new errors should derive from one of these.
"""


class QunitsError(Exception):
    """Base class for all errors raised by the package."""


class ParseError(QunitsError):
    """Malformed input text (schema, data, definition, log or document files)."""


class IntegrityError(QunitsError):
    """Input parsed but violates a structural constraint."""


class NotFoundError(QunitsError):
    """A referenced value, file or artifact does not exist."""
