"""Exception hierarchy shared by all modules.

Each class carries an ``exit_code`` used by the command-line front end:
1 for mismatches, 2 for input errors, 3 for resource caps.
"""


class MotivicError(Exception):
    exit_code = 2


# exact arithmetic
class PoleError(MotivicError):
    pass


class NotExpandable(MotivicError):
    pass


class ConductorCap(MotivicError):
    exit_code = 3


# local fields / characters
class PrecisionLoss(MotivicError):
    pass


class UnboundLambda(MotivicError):
    pass


class OrdOfMultipleOfChar(MotivicError):
    pass


class DepthMismatch(MotivicError):
    pass


class MissingCharacter(MotivicError):
    pass


class HypothesisViolated(MotivicError):
    pass


# presburger
class BoxTooLarge(MotivicError):
    exit_code = 3


class FormulaSyntaxError(MotivicError):
    def __init__(self, msg, text=None, pos=None):
        self.text = text
        self.pos = pos
        if text is not None and pos is not None:
            line = text.count("\n", 0, pos) + 1
            col = pos - (text.rfind("\n", 0, pos) + 1) + 1
            msg = f"{msg} at line {line}, column {col}"
        super().__init__(msg)


# summation / integration
class NotIntegrable(MotivicError):
    exit_code = 1

    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class NotRepresentable(MotivicError):
    """A closed form would need a denominator outside the admissible ring."""


class NotPrepared(MotivicError):
    pass


class UnsupportedMap(MotivicError):
    pass


class UnsupportedClass(MotivicError):
    pass


class UnsupportedOrder(MotivicError):
    pass


class DomainMismatch(MotivicError):
    pass


class VariableCollision(MotivicError):
    pass


class EnumerationCap(MotivicError):
    exit_code = 3


class FubiniMismatch(MotivicError):
    exit_code = 1


# oracle
class WindowInsufficient(MotivicError):
    exit_code = 3

    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


class Mismatch(MotivicError):
    exit_code = 1

    def __init__(self, msg, symbolic=None, oracle=None, spec=None):
        super().__init__(msg)
        self.symbolic = symbolic
        self.oracle = oracle
        self.spec = spec


class DepthTooLarge(MotivicError):
    pass
