"""Keyword search over relational data through derived semantic units (qunits)."""

from qunits.errors import IntegrityError, NotFoundError, ParseError, QunitsError

__version__ = "0.1.0"
__all__ = ["IntegrityError", "NotFoundError", "ParseError", "QunitsError", "__version__"]
