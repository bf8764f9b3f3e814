"""Exception hierarchy shared by every qrna module."""


class QrnaError(Exception):
    """Base class for all qrna errors."""


class ResourceLimit(QrnaError):
    pass


class AddressError(QrnaError):
    pass


class ImpossibleBranch(QrnaError):
    pass


class ShapeError(QrnaError):
    pass


class ParseError(QrnaError):
    """Malformed wire or file input.

    ``offset`` is the byte offset into the offending text (wire grammar);
    ``line`` is the 1-based line number (file grammars).
    """

    def __init__(self, message, offset=None, line=None, source=None):
        where = []
        if source is not None:
            where.append(str(source))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        text = f"{', '.join(where)}: {message}" if where else message
        super().__init__(text)
        self.offset = offset
        self.line = line
        self.source = source


class DoubleBind(QrnaError):
    pass


class UnknownAddress(QrnaError):
    pass


class SlotBusy(QrnaError):
    pass


class UnsupportedEncoding(QrnaError):
    pass


class GenerationFailed(QrnaError):
    pass


class PurificationFailed(QrnaError):
    pass


class MismatchedEndpoints(QrnaError):
    pass


class NoCommonNode(QrnaError):
    pass


class LoccViolation(QrnaError):
    """A multi-qubit gate was requested on qubits held at different nodes."""


class Unreachable(QrnaError):
    pass


class UnknownDestination(QrnaError):
    pass


class RecursionLimit(QrnaError):
    pass


class UnsupportedStrategy(QrnaError):
    pass


class NoEligibleMember(QrnaError):
    pass


class BudgetInfeasible(QrnaError):
    pass


class CycleDetected(QrnaError):
    pass
