"""Exception types shared across the simulator."""


class InvalidInputError(ValueError):
    """Input violates an operation's precondition (empty data, bad token id, ...)."""


class ShapeError(ValueError):
    """Parameter vectors with mismatched dimensions were combined."""


class NumericFailure(RuntimeError):
    """Parameters became non-finite during a run."""

    def __init__(self, round_index: int, detail: str = "non-finite parameters"):
        self.round_index = round_index
        super().__init__(f"numeric failure in round {round_index}: {detail}")


class ConfigError(ValueError):
    """An experiment spec failed to parse or validate.

    ``field`` holds the dotted path of the offending entry.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")
