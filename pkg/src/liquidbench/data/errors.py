class ParseError(ValueError):
    """Malformed input. ``where`` locates it (byte offset, line, field)."""

    def __init__(self, message: str, **where):
        self.where = where
        loc = ", ".join(f"{k}={v}" for k, v in where.items())
        super().__init__(f"{message} ({loc})" if loc else message)
