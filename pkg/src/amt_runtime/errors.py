"""Exception hierarchy and the wire-level error codes used by remote results."""

from __future__ import annotations


class AmtError(Exception):
    """Base class for all runtime errors."""

    code = 1


class InvalidArgumentError(AmtError):
    code = 2


class NotFoundError(AmtError):
    """GID or symbolic name is unknown."""

    code = 3


class AlreadyExistsError(AmtError):
    """Duplicate name or action registration."""

    code = 4


class WrongLocalityError(AmtError):
    """Operation requires the object to live on the calling locality."""

    code = 5


class BusyError(AmtError):
    """Object is already migrating."""

    code = 6


class SignatureMismatchError(AmtError):
    """Arguments do not match the registered action signature."""

    code = 7


class UnknownActionError(AmtError):
    code = 8


class TransportError(AmtError):
    """Connection to a peer locality was lost or never established."""

    code = 9


class RuntimeShutdownError(AmtError):
    """Submission rejected because the runtime is shutting down."""

    code = 10


class DecodeError(AmtError):
    """Malformed wire frame or value encoding; names the offending field."""

    code = 11

    def __init__(self, field: str, detail: str = ""):
        self.field = field
        msg = f"decode error in {field}" + (f": {detail}" if detail else "")
        super().__init__(msg)


class RemoteError(AmtError):
    """An action handler failed on a remote locality."""

    code = 12


class FutureAlreadySetError(AmtError):
    """Second completion attempt on a single-assignment future."""

    code = 13


class BootError(AmtError):
    """Runtime failed to start (bad config, port in use, unreachable peer)."""

    code = 14


class ChannelClosedError(AmtError):
    code = 15


class UnsupportedError(AmtError):
    """Operation not supported for this object (e.g. reset of a gauge)."""

    code = 16


_CODE_TO_CLASS = {
    cls.code: cls
    for cls in (
        AmtError,
        InvalidArgumentError,
        NotFoundError,
        AlreadyExistsError,
        WrongLocalityError,
        BusyError,
        SignatureMismatchError,
        UnknownActionError,
        TransportError,
        RuntimeShutdownError,
        DecodeError,
        RemoteError,
        FutureAlreadySetError,
        BootError,
        ChannelClosedError,
        UnsupportedError,
    )
}


def error_to_wire(exc: BaseException) -> tuple[int, str]:
    """Map an exception to a (code, message) pair for a result parcel."""
    code = getattr(exc, "code", RemoteError.code)
    if not isinstance(exc, AmtError):
        code = RemoteError.code
    return code, f"{type(exc).__name__}: {exc}"


def error_from_wire(code: int, message: str) -> AmtError:
    cls = _CODE_TO_CLASS.get(code, RemoteError)
    if cls is DecodeError:
        return DecodeError("remote", message)
    return cls(message)
