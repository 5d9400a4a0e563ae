"""Shared exception types."""


class ValidationError(ValueError):
    """Input violates a documented schema or contract invariant."""


class OutputParseError(ValueError):
    """Evaluator output text does not match the canonical grammar.

    ``rule`` names the first violated grammar rule, e.g. "missing field: source".
    """

    def __init__(self, rule: str):
        super().__init__(rule)
        self.rule = rule
