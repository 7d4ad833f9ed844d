"""Exception hierarchy. Every error raised by the library derives from DyadicError."""


class DyadicError(ValueError):
    kind = "error"


class DomainError(DyadicError):
    kind = "domain"


class InvalidMeasureError(DyadicError):
    kind = "invalid-measure"


class InvalidCoefficientError(DyadicError):
    kind = "invalid-coefficient"


class DepthError(DyadicError):
    kind = "depth"


class ShapeError(DyadicError):
    kind = "shape"


class IngestError(DyadicError):
    kind = "ingest"


class ConfigError(DyadicError):
    kind = "config"
