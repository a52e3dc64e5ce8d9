class OpsigError(Exception):
    """Base class for every error raised by this package."""


class ParseError(OpsigError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += source
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ValidationError(OpsigError):
    pass


class SchemaError(ValidationError):
    """Raised when an AIR document does not match the schema; ``path`` is the first offending location."""

    def __init__(self, message: str, path: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class TableMismatchError(OpsigError):
    pass


class StoreError(OpsigError):
    pass


class DuplicateRecordError(StoreError):
    def __init__(self, app_id: str, existing: dict):
        self.app_id = app_id
        self.existing = existing
        super().__init__(f"app {app_id} is already stored")
