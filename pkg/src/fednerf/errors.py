"""Exception hierarchy shared by every subsystem."""


class FedNerfError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ContractError(FedNerfError, ValueError):
    """A caller violated an operation's precondition (shape, range, size)."""

    exit_code = 2


class ConfigError(FedNerfError, ValueError):
    exit_code = 2


class ProtocolError(FedNerfError):
    """A wire frame could not be decoded, or a peer broke the session rules."""

    exit_code = 3

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class TrainingDivergenceError(FedNerfError):
    exit_code = 4

    def __init__(self, loss: float, iteration: int, round_index: int | None = None):
        self.loss = loss
        self.iteration = iteration
        self.round_index = round_index
        where = f"round {round_index}, " if round_index is not None else ""
        super().__init__(f"non-finite loss {loss!r} at {where}iteration {iteration}")
