"""Exception hierarchy shared by every model layer."""


class ModelError(Exception):
    """Base class for all model errors."""


class UnknownParty(ModelError, KeyError):
    pass


class MalformedAction(ModelError, ValueError):
    pass


class MissingConsent(ModelError):
    """A party has no cached consent and nobody can be asked.

    This is the "ask" outcome surfacing without a responder. Callers must
    treat it as a denial, never as an implicit allow.
    """

    def __init__(self, party_id: str, action_class: str):
        super().__init__(f"no consent from {party_id!r} for {action_class!r}")
        self.party_id = party_id
        self.action_class = action_class


class ConsentMissing(ModelError):
    """A scope was requested for an action that was not allowed."""


class ScopeViolation(ModelError):
    pass


class DuplicatePackageName(ModelError):
    pass


class UnknownPackage(ModelError, KeyError):
    pass


# permissions


class UnknownPermission(ModelError, KeyError):
    pass


class NotRequestable(ModelError):
    pass


class BackgroundRequest(ModelError):
    pass


class NotUserRevocable(ModelError):
    pass


class RegistrySyntaxError(ModelError, ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


# sandbox


class RangeExhausted(ModelError):
    pass


class SharedUidKeyMismatch(ModelError):
    pass


class ProfileExists(ModelError):
    pass


# verified boot


class MalformedImage(ModelError, ValueError):
    pass


class IndexOutOfRange(ModelError, IndexError):
    pass


class MalformedLineage(ModelError, ValueError):
    pass


class KeystoreUnavailable(ModelError):
    pass


class FrpAccessDenied(ModelError):
    pass


# authentication and keys


class NotEnrolled(ModelError):
    pass


class TierLockout(ModelError):
    def __init__(self, reason: str = "fallback-required", detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail


class UnknownKey(ModelError, KeyError):
    pass


class KeyMaterialUnavailable(ModelError):
    """Raw key bytes never leave the secure environment."""


class BadSignature(ModelError):
    pass
