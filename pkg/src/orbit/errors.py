class ValidationError(ValueError):
    """An argument violates a documented precondition."""


class TransportError(RuntimeError):
    """An external model adapter failed to answer (crash, timeout, bad JSON)."""


class ProtocolError(TransportError):
    """An external model adapter answered, but not according to the wire protocol."""
