"""Exception hierarchy shared by the library and the command line front end."""


class MorphoscopeError(Exception):
    """Base class for all errors raised by morphoscope."""


class InvalidInput(MorphoscopeError, ValueError):
    pass


class NotPositiveDefinite(MorphoscopeError, ValueError):
    pass


class InsufficientData(MorphoscopeError, ValueError):
    pass


class TooLarge(MorphoscopeError, ValueError):
    def __init__(self, count, limit):
        super().__init__(f"{count} subsets to enumerate exceeds the limit of {limit}")
        self.count = count
        self.limit = limit


class DegenerateSplit(MorphoscopeError, ValueError):
    pass


class FormatError(MorphoscopeError, ValueError):
    pass


class ConsistencyError(MorphoscopeError, ValueError):
    pass


class DataError(MorphoscopeError, ValueError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class UnknownAttribute(MorphoscopeError, KeyError):
    def __init__(self, attribute):
        super().__init__(attribute)
        self.attribute = attribute

    def __str__(self):
        return f"attribute {self.attribute!r} not present in the dataset"


class InvalidTag(MorphoscopeError, ValueError):
    pass


class InvalidSpec(MorphoscopeError, ValueError):
    pass
