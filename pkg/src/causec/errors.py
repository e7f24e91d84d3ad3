"""Exception hierarchy.

Every engine error carries a short machine-readable ``code`` that the CLI
prints as the prefix of its one-line diagnostic.
"""


class CausalityError(Exception):
    code = "E_ENGINE"


# network construction and evaluation

class NetworkError(CausalityError):
    code = "E_NETWORK"


class CycleDetected(NetworkError):
    code = "E_CYCLE"


class UndefinedVariable(NetworkError):
    code = "E_UNDEFINED"


class DuplicateDefinition(NetworkError):
    code = "E_DUPLICATE"


class PartialAssignment(NetworkError):
    code = "E_PARTIAL"


class NotEquivalent(NetworkError):
    code = "E_NOT_EQUIVALENT"


class FreshIdCollision(NetworkError):
    code = "E_COLLISION"


class ParseError(CausalityError):
    """Malformed network, polynomial, query or CSV text."""

    code = "E_PARSE"

    def __init__(self, message, position=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if position is not None:
            where.append(f"position {position}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.position = position
        self.line = line


# caps

class CapExceeded(CausalityError):
    code = "E_CAP"


class SizeExceeded(CapExceeded):
    pass


class SearchBudgetExceeded(CapExceeded):
    pass


class SpaceTooLarge(CapExceeded):
    pass


# potentials

class PartialPoint(CausalityError):
    code = "E_PARTIAL"


# cause checking

class NotPrimitive(CausalityError):
    code = "E_NOT_PRIMITIVE"


class NotReadOnce(CausalityError):
    code = "E_NOT_READ_ONCE"


# relational side

class SchemaMismatch(CausalityError):
    code = "E_SCHEMA"


class DuplicateTuple(CausalityError):
    code = "E_DUPLICATE"


class QuerySyntaxError(ParseError):
    pass


class UnsafeQuery(CausalityError):
    code = "E_UNSAFE"


class NotAnAnswer(CausalityError):
    code = "E_NOT_ANSWER"


class AlreadyAnswer(CausalityError):
    code = "E_ALREADY_ANSWER"


class PredicateUndefined(CausalityError):
    code = "E_PREDICATE"
