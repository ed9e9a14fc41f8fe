"""Exception hierarchy shared by every module in the package."""


class CcmError(Exception):
    """Base class for all analysis errors raised by dbnccm."""


class ZeroVariance(CcmError):
    pass


class InvalidBand(CcmError):
    pass


class OutOfRange(CcmError):
    pass


class SeriesTooShort(CcmError):
    pass


class NotEnoughPoints(CcmError):
    pass


class NonFiniteInput(CcmError, ValueError):
    pass


class IndexOutOfRange(CcmError, IndexError):
    pass


class NonSquare(CcmError, ValueError):
    pass


class DegenerateNeighborhood(CcmError):
    pass


class ChannelMismatch(CcmError):
    pass


class LengthMismatch(CcmError, ValueError):
    pass


class MissingOnset(CcmError):
    pass


class InvalidSpec(CcmError, ValueError):
    pass


class Unstable(CcmError):
    pass


class DegenerateBaseline(CcmError):
    pass


class SingularDesign(CcmError):
    pass


class MalformedReport(CcmError):
    pass
