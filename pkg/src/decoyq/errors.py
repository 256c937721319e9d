"""Exception hierarchy. Every error carries the tag of the module that raised it."""


class DecoyqError(Exception):
    module = "decoyq"

    def __str__(self) -> str:
        return f"[{self.module}] {super().__str__()}"


class CircuitError(DecoyqError):
    module = "circuit-ir"


class QasmSyntaxError(CircuitError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class ValidationError(CircuitError):
    pass


class ObfuscationError(DecoyqError):
    module = "obfuscator"


class BitmapError(DecoyqError):
    module = "bitmap-codec"


class EnvelopeError(DecoyqError):
    module = "secure-envelope"


class UnknownSuiteError(EnvelopeError):
    pass


class MalformedEnvelopeError(EnvelopeError):
    pass


class WrongRecipientError(EnvelopeError):
    pass


class AuthFailureError(EnvelopeError):
    pass


class SignatureFailureError(EnvelopeError):
    pass


class EngineError(DecoyqError):
    module = "backend-sim"


class TamperedError(EngineError):
    pass


class DimensionMismatchError(EngineError):
    pass


class RecoveryError(DecoyqError):
    module = "client-recover"


class AnalysisError(DecoyqError):
    module = "analysis"
