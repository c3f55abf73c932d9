# envguard/errors.py
"""
Exception hierarchy. Every error raised on purpose by envguard derives from
EnvguardError so the CLI can map it to an exit code in one place.
"""

from __future__ import annotations
from typing import Any, List, Optional


class EnvguardError(Exception):
    """Base class for all envguard errors."""

    #: errors caused by bad user input (exit code 4)
    input_error: bool = False


# -----------------------------
# kernel
# -----------------------------
class UnboundVariable(EnvguardError):
    def __init__(self, name: str):
        super().__init__(f"unbound variable: {name}")
        self.name = name


class DivisionByZero(EnvguardError):
    def __init__(self, subterm: Any):
        super().__init__(f"division by zero in: {subterm}")
        self.subterm = subterm


class QuantifierPresent(EnvguardError):
    def __init__(self, formula: Any):
        super().__init__(f"quantified formula cannot be evaluated directly: {formula}")
        self.formula = formula


class ParseError(EnvguardError):
    input_error = True

    def __init__(self, line: int, col: int, expected: str, found: Optional[str] = None):
        where = f"{line}:{col}"
        msg = f"parse error at {where}: expected {expected}"
        if found is not None:
            msg += f", found {found!r}"
        super().__init__(msg)
        self.line = line
        self.col = col
        self.expected = expected
        self.found = found


# -----------------------------
# model files / hybrid programs
# -----------------------------
class UnresolvedName(EnvguardError):
    input_error = True

    def __init__(self, name: str, kind: str = "name"):
        super().__init__(f"unresolved {kind}: {name}")
        self.name = name
        self.kind = kind


class MonitorSynthesisError(EnvguardError):
    pass


# -----------------------------
# obligations
# -----------------------------
class MissingParameter(EnvguardError):
    input_error = True

    def __init__(self, names: List[str]):
        super().__init__("symbols neither quantified nor given a value: " + ", ".join(sorted(names)))
        self.names = sorted(names)


class SignatureMismatch(EnvguardError):
    input_error = True


class TemplateMismatch(EnvguardError):
    input_error = True


class HiddenStateVariable(EnvguardError):
    input_error = True

    def __init__(self, names: List[str]):
        super().__init__("cannot hide state variables: " + ", ".join(sorted(names)))
        self.names = sorted(names)


# -----------------------------
# solver
# -----------------------------
class NonlinearAtom(EnvguardError):
    def __init__(self, subterm: Any):
        super().__init__(f"nonlinear atom: {subterm}")
        self.subterm = subterm


class ResourceLimit(EnvguardError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


# -----------------------------
# networks
# -----------------------------
class FormatError(EnvguardError):
    input_error = True

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DimensionMismatch(EnvguardError):
    input_error = True


# -----------------------------
# fixed point
# -----------------------------
class DenominatorMayVanish(EnvguardError):
    pass


class UnsupportedOp(EnvguardError):
    pass


class RangeOverflow(EnvguardError):
    def __init__(self, ident: str, detail: str = ""):
        super().__init__(f"value range of {ident} exceeds its format {detail}".rstrip())
        self.ident = ident


class Infeasible(EnvguardError):
    pass


class SimOverflow(EnvguardError):
    def __init__(self, ident: str, value: int):
        super().__init__(f"overflow at {ident}: integer {value} does not fit")
        self.ident = ident
        self.value = value


# -----------------------------
# pipeline
# -----------------------------
class MismatchedExpectation(EnvguardError):
    def __init__(self, mismatches: List[str]):
        super().__init__("expectations not met:\n  " + "\n  ".join(mismatches))
        self.mismatches = list(mismatches)


class StageError(EnvguardError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
        self.input_error = getattr(cause, "input_error", False)
