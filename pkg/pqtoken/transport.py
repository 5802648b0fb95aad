"""TCP transport: frame channels, the driver loop and the threaded listener.

The driver owns all I/O. It hands whole frames to a machine's ``recv``,
services everything the machine queues in ``poll_transmit`` (socket writes and
store calls) and returns once ``poll_result`` is Ready.
"""

import logging
import socket
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Tuple

from pqtoken.protocol.machine import Ready, Send, StateMachine, TransportError, service
from pqtoken.protocol.server import ServerContext, open_request
from pqtoken.wire import DEFAULT_MAX_FRAME_SIZE, FrameTooLarge, LengthPrefixedFramer, WireError

logger = logging.getLogger(__name__)

RECV_CHUNK = 64 * 1024


class SocketChannel:
    """Whole frames over one TCP connection."""

    def __init__(self, sock: socket.socket, max_frame_size: int = DEFAULT_MAX_FRAME_SIZE,
                 idle_timeout: Optional[float] = None):
        self.sock = sock
        self.sock.settimeout(idle_timeout)
        self._framer = LengthPrefixedFramer(max_frame_size)
        self._frames: List[bytes] = []

    @classmethod
    def connect(cls, address: Tuple[str, int], max_frame_size: int = DEFAULT_MAX_FRAME_SIZE,
                timeout: Optional[float] = 30.0) -> "SocketChannel":
        try:
            sock = socket.create_connection(address, timeout=timeout)
        except OSError as e:
            raise TransportError(f"cannot connect to {address[0]}:{address[1]}: {e}") from e
        return cls(sock, max_frame_size, timeout)

    def send(self, body: bytes):
        try:
            self.sock.sendall(self._framer.encode(body))
        except OSError as e:
            raise TransportError(f"send failed: {e}") from e

    def receive(self) -> bytes:
        while not self._frames:
            try:
                data = self.sock.recv(RECV_CHUNK)
            except socket.timeout:
                raise TransportError("idle timeout") from None
            except OSError as e:
                raise TransportError(f"receive failed: {e}") from e
            if not data:
                raise TransportError("connection closed by peer")
            self._frames.extend(self._framer.feed(data))
        return self._frames.pop(0)

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


def drive(machine: StateMachine, channel, store=None) -> Ready:
    """Run ``machine`` to completion over ``channel``."""
    while True:
        item = machine.poll_transmit()
        while item is not None:
            if isinstance(item, Send):
                try:
                    channel.send(item.body)
                except TransportError as e:
                    machine.abort(e)
                    return machine.poll_result()
            elif store is None:
                machine.abort(TransportError("machine asked for a store on a client connection"))
                return machine.poll_result()
            else:
                machine.recv(service(item, store))
            item = machine.poll_transmit()

        result = machine.poll_result()
        if isinstance(result, Ready):
            return result
        try:
            body = channel.receive()
        except (TransportError, WireError) as e:
            machine.abort(e if isinstance(e, TransportError) else TransportError(str(e)))
            return machine.poll_result()
        machine.recv(body)


def run_over_tcp(machine: StateMachine, address: Tuple[str, int], max_frame_size: int = DEFAULT_MAX_FRAME_SIZE,
                 timeout: Optional[float] = 30.0) -> Ready:
    """Client side: one connection, one action."""
    try:
        channel = SocketChannel.connect(address, max_frame_size, timeout)
    except TransportError as e:
        machine.abort(e)
        return machine.poll_result()
    try:
        return drive(machine, channel)
    finally:
        channel.close()


# ─────────────────────────────────────────────
# LISTENER
# ─────────────────────────────────────────────

class ProtocolServer:
    """Accept loop plus a bounded worker pool, one driver per connection."""

    def __init__(self, ctx: ServerContext, store, address: Tuple[str, int] = ("127.0.0.1", 7474),
                 max_frame_size: int = DEFAULT_MAX_FRAME_SIZE, max_connections: int = 64,
                 idle_timeout: float = 30.0, keep_alive: bool = False, purge_interval: float = 600.0,
                 on_result: Optional[Callable[[StateMachine, Ready], None]] = None):
        self.ctx = ctx
        self.store = store
        self.address = address
        self.max_frame_size = max_frame_size
        self.max_connections = max_connections
        self.idle_timeout = idle_timeout
        self.keep_alive = keep_alive
        self.purge_interval = purge_interval
        self.on_result = on_result
        self._sock: Optional[socket.socket] = None
        self._slots = threading.BoundedSemaphore(max_connections)
        self._executor = ThreadPoolExecutor(max_workers=max_connections, thread_name_prefix="pqtoken-conn")
        self._stop = threading.Event()
        self._threads: List[threading.Thread] = []

    @classmethod
    def from_config(cls, config, ctx: ServerContext, store, **kwargs) -> "ProtocolServer":
        return cls(ctx, store, config.listen_address, max_frame_size=config.max_frame_size,
                   max_connections=config.max_connections, idle_timeout=config.idle_timeout,
                   keep_alive=config.keep_alive, purge_interval=config.purge_interval, **kwargs)

    def bind(self) -> Tuple[str, int]:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind(self.address)
        except OSError as e:
            sock.close()
            raise TransportError(f"cannot bind {self.address[0]}:{self.address[1]}: {e}") from e
        sock.listen(self.max_connections)
        sock.settimeout(0.5)
        self._sock = sock
        self.address = sock.getsockname()[:2]
        logger.info(f"Listening on {self.address[0]}:{self.address[1]}")
        return self.address

    def start(self) -> Tuple[str, int]:
        """Bind and serve from background threads; returns the bound address."""
        address = self.bind()
        for target, name in ((self._accept_loop, "pqtoken-accept"), (self._purge_loop, "pqtoken-purge")):
            t = threading.Thread(target=target, name=name, daemon=True)
            t.start()
            self._threads.append(t)
        return address

    def serve_forever(self):
        self.start()
        try:
            while not self._stop.wait(1.0):
                pass
        except KeyboardInterrupt:
            logger.info("Interrupted, shutting down")
        finally:
            self.shutdown()

    def shutdown(self):
        self._stop.set()
        for t in self._threads:
            t.join(timeout=2)
        if self._sock is not None:
            self._sock.close()
        self._executor.shutdown(wait=True)

    def _accept_loop(self):
        while not self._stop.is_set():
            try:
                conn, addr = self._sock.accept()
            except socket.timeout:
                continue
            except OSError as e:
                if not self._stop.is_set():
                    logger.error(f"Accept failed: {e}")
                break
            if not self._slots.acquire(blocking=False):
                logger.warning(f"Connection limit reached, refusing {addr[0]}:{addr[1]}")
                conn.close()
                continue
            logger.debug(f"Accepted connection from {addr[0]}:{addr[1]}")
            self._executor.submit(self._handle, conn, addr)

    def _handle(self, conn: socket.socket, addr):
        channel = SocketChannel(conn, self.max_frame_size, self.idle_timeout)
        try:
            while not self._stop.is_set():
                try:
                    body = channel.receive()
                except FrameTooLarge as e:
                    logger.warning(f"Closing {addr[0]}:{addr[1]}: {e}")
                    break
                except TransportError as e:
                    logger.debug(f"Connection {addr[0]}:{addr[1]} ended: {e}")
                    break
                machine = open_request(body, self.ctx)
                result = drive(machine, channel, self.store)
                if self.on_result is not None:
                    self.on_result(machine, result)
                if not self.keep_alive:
                    break
        except Exception:
            logger.exception(f"Unexpected error serving {addr[0]}:{addr[1]}")
        finally:
            channel.close()
            self._slots.release()
            logger.debug(f"Closed connection from {addr[0]}:{addr[1]}")

    def _purge_loop(self):
        while not self._stop.wait(self.purge_interval):
            try:
                removed = self.store.purge_expired(self.ctx.clock())
                if removed:
                    logger.info(f"Purged {removed} expired token hashes")
            except Exception:
                logger.exception("Expired-token sweep failed")


def listen(config, ctx: ServerContext, store) -> ProtocolServer:
    """Serve until interrupted."""
    server = ProtocolServer.from_config(config, ctx, store)
    server.serve_forever()
    return server
