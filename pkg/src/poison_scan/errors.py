"""Exception hierarchy shared by every module."""


class PoisonScanError(Exception):
    """Base class for all errors raised by poison_scan."""


class BadMagic(PoisonScanError):
    pass


class TruncatedFile(PoisonScanError):
    pass


class NonFiniteValue(PoisonScanError):
    def __init__(self, row: int, col: int):
        super().__init__(f"non-finite value at row {row}, col {col}")
        self.row = row
        self.col = col


class ZeroDim(PoisonScanError):
    pass


class InvalidLabelValue(PoisonScanError):
    def __init__(self, index: int, value: int):
        super().__init__(f"label at index {index} is {value}, expected 0 or 1")
        self.index = index
        self.value = value


class ZeroRow(PoisonScanError):
    def __init__(self, index: int):
        super().__init__(f"row {index} has zero norm")
        self.index = index


class IoError(PoisonScanError, OSError):
    pass


class DimMismatch(PoisonScanError):
    pass


class CountMismatch(PoisonScanError):
    pass


class KTooLarge(PoisonScanError):
    pass


class KTooSmall(PoisonScanError):
    pass


class TooFewPoints(PoisonScanError):
    pass


class DatasetTooSmall(PoisonScanError):
    pass


class DegenerateLabels(PoisonScanError):
    pass


class EmptyScores(PoisonScanError):
    pass


class IndexOutOfRange(PoisonScanError):
    pass


class InvalidConfig(PoisonScanError):
    pass
