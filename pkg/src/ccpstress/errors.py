"""Exception hierarchy."""


class CCPStressError(Exception):
    """Base class for all package errors."""


class DomainError(CCPStressError, ValueError):
    """Input outside the domain of a formula (e.g. knocked-out barrier option)."""


class MertonNoConvergence(CCPStressError):
    pass


class MertonNoSolution(CCPStressError):
    """No (assets, asset_vol) pair above the barrier reproduces the observation."""


class UnreachableDensityError(CCPStressError, ValueError):
    pass


class LiquidityExhaustionError(CCPStressError):
    """Fire-sale volume reached the total interbank volume; devaluation undefined."""

    def __init__(self, message, round_index=None, realization=None):
        super().__init__(message)
        self.round_index = round_index
        self.realization = realization

    def __reduce__(self):
        return (type(self), (str(self), self.round_index, self.realization))


class SingularEquityError(CCPStressError, ValueError):
    pass


class SchemaError(CCPStressError, ValueError):
    """Input file failed validation. ``problems`` lists (row, field, message)."""

    def __init__(self, message, problems=None):
        super().__init__(message)
        self.problems = list(problems or [])

    def __reduce__(self):
        return (type(self), (self.args[0], self.problems))

    def __str__(self):
        base = super().__str__()
        if not self.problems:
            return base
        lines = [base] + [f"  row {r}: {f}: {m}" for r, f, m in self.problems[:20]]
        if len(self.problems) > 20:
            lines.append(f"  ... {len(self.problems) - 20} more")
        return "\n".join(lines)
