"""Exception hierarchy shared by every subpackage."""


class TabSSLError(Exception):
    """Base class; carries a short machine-readable ``kind``."""

    kind = "error"

    def record(self) -> dict:
        return {"error": self.kind, "type": type(self).__name__, "message": str(self)}


class DimensionError(TabSSLError, ValueError):
    kind = "dimension"


class NumericError(TabSSLError, ArithmeticError):
    kind = "numeric"


class ContractError(TabSSLError, ValueError):
    kind = "contract"


class SplitError(TabSSLError, ValueError):
    kind = "split"


class SchemaError(TabSSLError, ValueError):
    kind = "schema"


class ConfigError(TabSSLError, ValueError):
    kind = "config"
