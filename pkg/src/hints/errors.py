"""Exception hierarchy shared across the package."""


class HintsError(Exception):
    """Base class for every error raised by this package."""

    #: short machine-readable reason, used by the API and the CLI
    reason = "error"


class MalformedName(HintsError, ValueError):
    reason = "malformed-name"


class BadDate(HintsError, ValueError):
    reason = "bad-date"


class AuthError(HintsError):
    reason = "unauthorized"


class UnknownAccount(HintsError):
    reason = "unknown-account"


class TransportDown(HintsError):
    reason = "transport-down"


class UnknownChallenge(HintsError):
    reason = "unknown-challenge"


class StaleChallenge(HintsError):
    reason = "stale-challenge"


class ClockRegression(HintsError):
    reason = "clock-regression"


class CooldownViolation(HintsError):
    reason = "cooldown-violation"


class AlreadyHeld(HintsError):
    reason = "already-held"


class NotHeld(HintsError):
    reason = "not-held"


class UnknownProvider(HintsError):
    reason = "unknown-provider"


class ScriptError(HintsError):
    reason = "script-error"


class DecodeError(HintsError, ValueError):
    reason = "decode-error"


class MissingKey(HintsError):
    reason = "missing-key"


class SignerUnknown(HintsError):
    reason = "signer-unknown"


class BadSignature(HintsError):
    reason = "bad-signature"


class StaleNonce(HintsError):
    reason = "stale-nonce"


class ForkedChain(HintsError):
    reason = "forked-chain"


class BrokenChain(HintsError):
    reason = "broken-chain"


class NotAnchored(HintsError):
    reason = "not-anchored"


class AnchorViolation(HintsError):
    reason = "anchor-violation"


class ChainError(HintsError):
    reason = "chain"


class CorruptJournal(HintsError):
    reason = "corrupt-journal"

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class Rejected(HintsError):
    """A certificate or proof failed a check; ``reason`` names the check."""

    def __init__(self, reason, detail=""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail


class ConfigError(HintsError):
    reason = "config"
