"""Exception types shared across the protocol stack."""


class ProtocolError(Exception):
    """Base class for all protocol-level failures."""


class MalformedProgram(ProtocolError):
    """Program bytes or program evaluation are structurally invalid."""


class StepBudgetExceeded(ProtocolError):
    """Program evaluation ran past its instruction budget."""


class IntegrityFailure(ProtocolError):
    """Authenticated decryption failed: tampered bytes or wrong key."""


class MalformedPk(ProtocolError):
    """Token public key does not decode to a valid subspace."""


class TagDecodeFailure(ProtocolError):
    """Receiver tag does not authenticate under the sender's pad key."""


class XInSubspaceAbort(ProtocolError):
    """Decoded offset landed inside the subspace; the sender aborts."""


class UnknownHandle(ProtocolError):
    """Registry lookup on an id that was never issued or was destroyed."""


class AlreadyConsumed(ProtocolError):
    """Measurement requested on a token state that was already consumed."""


class AlreadyEvaluated(ProtocolError):
    """One-time receiver state was used before."""


class ChainBroken(ProtocolError):
    """RAM chain is dead; no further rounds can ever be evaluated."""


class ConfigError(ProtocolError):
    """Experiment configuration is out of range."""


class FrameError(ProtocolError):
    """Transport frame is oversized or truncated."""
