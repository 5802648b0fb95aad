"""SANS-I/O state machine contract.

A machine never touches a socket or a store. It is advanced with ``recv`` and
asks for work through ``poll_transmit``:

- ``Send(body)``: write one frame body to the peer.
- ``StoreRequest``: call the named store operation and feed the outcome back
  with ``recv(StoreReply(...))``.

``poll_result`` is ``PENDING`` until the machine terminates, then a ``Ready``
carrying either the value or the error. Protocol failures never escape ``recv``;
they terminate the machine. Calling ``recv`` on a terminated machine raises
``MachineTerminated``.

Concrete machines write their flow as a generator that yields ``Send``,
``StoreRequest`` or ``RECEIVE`` and returns the success value.
"""

import logging
from collections import deque
from dataclasses import dataclass
from typing import Any, Deque, Generator, List, Optional, Tuple, Union

from pqtoken.providers import ProviderError
from pqtoken.state import StoreError
from pqtoken.wire import ErrorCode, WireError

logger = logging.getLogger(__name__)


# ─────────────────────────────────────────────
# ERRORS
# ─────────────────────────────────────────────

class ProtocolError(RuntimeError):
    pass


class MachineTerminated(ProtocolError):
    pass


class UnexpectedMessage(ProtocolError):
    pass


class BadSignature(ProtocolError):
    pass


class HashMismatch(ProtocolError):
    pass


class TransportError(ProtocolError):
    pass


def _code_name(code: int) -> str:
    try:
        return ErrorCode(code).name
    except ValueError:
        return f"code {code}"


class ServerRejected(ProtocolError):
    """The server answered with an authenticated ERROR reply."""

    def __init__(self, code: int, correct_time: int = 0):
        super().__init__(f"server rejected request: {_code_name(code)}")
        self.code = code
        self.correct_time = correct_time


class TimeResync(ServerRejected):
    pass


class CycleRequired(ServerRejected):
    pass


class RequestRejected(ProtocolError):
    """Server side: the request was answered with an ERROR reply."""

    def __init__(self, code: int, correct_time: int = 0):
        super().__init__(f"request rejected: {_code_name(code)}")
        self.code = code
        self.correct_time = correct_time


# ─────────────────────────────────────────────
# EVENTS
# ─────────────────────────────────────────────

class _Pending:
    def __repr__(self):
        return "PENDING"

    def __bool__(self):
        return False


PENDING = _Pending()


@dataclass(frozen=True)
class Ready:
    value: Any = None
    error: Optional[BaseException] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def unwrap(self):
        if self.error is not None:
            raise self.error
        return self.value


@dataclass(frozen=True)
class Send:
    body: bytes

    def __repr__(self):
        return f"Send({len(self.body)} bytes)"


@dataclass(frozen=True)
class StoreRequest:
    operation: str
    args: Tuple = ()

    def run(self, store):
        return getattr(store, self.operation)(*self.args)


@dataclass(frozen=True)
class StoreReply:
    value: Any = None
    error: Optional[BaseException] = None


RECEIVE = object()

Transmit = Union[Send, StoreRequest]
Flow = Generator[Any, Any, Any]

_TERMINAL_ERRORS = (ProtocolError, WireError, ProviderError, StoreError)


def service(request: StoreRequest, store) -> StoreReply:
    """Run a store request, turning store failures into a reply."""
    try:
        return StoreReply(value=request.run(store))
    except StoreError as e:
        return StoreReply(error=e)


# ─────────────────────────────────────────────
# BASE MACHINE
# ─────────────────────────────────────────────

class StateMachine:
    def __init__(self):
        self._outbox: Deque[Transmit] = deque()
        self._result: Union[_Pending, Ready] = PENDING
        self._awaiting: Optional[type] = None
        self._flow: Optional[Flow] = None

    def _start(self):
        self._flow = self._run()
        self._resume()

    def _run(self) -> Flow:
        raise NotImplementedError

    # ───────── public API ─────────

    def recv(self, event: Union[bytes, StoreReply]):
        if self._result is not PENDING:
            raise MachineTerminated(f"{type(self).__name__} has already terminated")
        if isinstance(event, (bytearray, memoryview)):
            event = bytes(event)
        if self._awaiting is None or not isinstance(event, self._awaiting):
            expected = self._awaiting.__name__ if self._awaiting else "nothing"
            self._fail(UnexpectedMessage(f"{type(self).__name__} expected {expected}, got {type(event).__name__}"))
            return
        self._awaiting = None
        if isinstance(event, StoreReply):
            self._resume(event.value, event.error)
        else:
            self._resume(event)

    def poll_transmit(self) -> Optional[Transmit]:
        return self._outbox.popleft() if self._outbox else None

    def poll_result(self) -> Union[_Pending, Ready]:
        return self._result

    def abort(self, error: BaseException):
        """Terminate from outside, e.g. when the connection dies."""
        if self._result is PENDING:
            self._outbox.clear()
            self._fail(error)

    @property
    def terminated(self) -> bool:
        return self._result is not PENDING

    @property
    def awaiting_peer(self) -> bool:
        return self._awaiting is bytes

    # ───────── internals ─────────

    def _resume(self, value=None, error: Optional[BaseException] = None):
        try:
            item = self._flow.throw(error) if error is not None else self._flow.send(value)
            while True:
                if isinstance(item, Send):
                    self._outbox.append(item)
                    item = self._flow.send(None)
                elif isinstance(item, StoreRequest):
                    self._outbox.append(item)
                    self._awaiting = StoreReply
                    return
                elif item is RECEIVE:
                    self._awaiting = bytes
                    return
                else:
                    raise TypeError(f"machine yielded {item!r}")
        except StopIteration as stop:
            self._result = Ready(value=stop.value)
        except _TERMINAL_ERRORS as e:
            self._result = Ready(error=e)

    def _fail(self, error: BaseException):
        self._awaiting = None
        if self._flow is not None:
            self._flow.close()
        self._result = Ready(error=error)


# ─────────────────────────────────────────────
# LOCAL DRIVING
# ─────────────────────────────────────────────

def run_with_store(machine: StateMachine, store) -> Tuple[Ready, List[bytes]]:
    """Service store requests until the machine needs the peer or finishes.

    Returns the current result (possibly PENDING) and every body the machine
    wanted sent.
    """
    sent = []
    while True:
        item = machine.poll_transmit()
        if item is None:
            break
        if isinstance(item, Send):
            sent.append(item.body)
        else:
            machine.recv(service(item, store))
    return machine.poll_result(), sent
