import hashlib
import json
import logging
import os
import struct
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Set

try:
    import redis
except ImportError:
    redis = None

logger = logging.getLogger(__name__)


class StoreError(RuntimeError):
    pass


class UnknownClient(StoreError):
    pass


# ─────────────────────────────────────────────
# RECORDS
# ─────────────────────────────────────────────

@dataclass(frozen=True)
class AdminRecord:
    admin_uuid: bytes
    public_key: bytes


@dataclass(frozen=True)
class ClientRecord:
    uuid: bytes
    public_key: bytes
    key_installed_at: float
    expected_time: int = 0
    key_epoch: int = 0


@dataclass(frozen=True)
class TokenRecord:
    token_hash: bytes
    uuid: bytes
    perms: bytes
    issued_at: float
    expires_at: float


class InsertResult(str, Enum):
    OK = "ok"
    DUPLICATE_ID = "duplicate_id"
    DUPLICATE_KEY = "duplicate_key"
    DUPLICATE = "duplicate"


class RotateResult(str, Enum):
    OK = "ok"
    DUPLICATE_KEY = "duplicate_key"
    STALE_KEY = "stale_key"


class TokenStatus(str, Enum):
    LIVE = "live"
    EXPIRED = "expired"
    ABSENT = "absent"


@dataclass(frozen=True)
class TimeAdvance:
    """ok: value is the new counter. Otherwise value is the stored counter."""
    ok: bool
    value: int
    stale_epoch: bool = False


@dataclass(frozen=True)
class TokenLookup:
    status: TokenStatus
    record: Optional[TokenRecord] = None


def key_id(public_key: bytes) -> str:
    return hashlib.sha3_256(public_key).hexdigest()


# ─────────────────────────────────────────────
# CLOCKS
# ─────────────────────────────────────────────

def system_clock() -> float:
    return time.time()


class ManualClock:
    """Injectable wall clock for tests and the adversary harness."""

    def __init__(self, start: float = 0.0):
        self.now = float(start)

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> float:
        self.now += seconds
        return self.now


# ─────────────────────────────────────────────
# ABSTRACT BASE
# ─────────────────────────────────────────────

class ServerStore(ABC):
    """Admins, clients, the key ledger, token hashes and permission codes.

    Every mutating operation is atomic. ``compare_and_advance_time`` and the
    insert operations are linearizable per key.
    """

    @abstractmethod
    def add_admin(self, record: AdminRecord) -> InsertResult:
        pass

    @abstractmethod
    def get_admin(self, admin_uuid: bytes) -> Optional[AdminRecord]:
        pass

    @abstractmethod
    def insert_client(self, record: ClientRecord) -> InsertResult:
        pass

    @abstractmethod
    def get_client(self, uuid: bytes) -> Optional[ClientRecord]:
        pass

    @abstractmethod
    def compare_and_advance_time(self, uuid: bytes, observed: int, key_epoch: Optional[int] = None) -> TimeAdvance:
        pass

    @abstractmethod
    def rotate_key(self, uuid: bytes, new_key: bytes, installed_at: float,
                   expected_old: Optional[bytes] = None) -> RotateResult:
        pass

    @abstractmethod
    def key_seen(self, public_key: bytes) -> bool:
        pass

    @abstractmethod
    def insert_token(self, record: TokenRecord) -> InsertResult:
        pass

    @abstractmethod
    def lookup_token(self, token_hash: bytes, now: float) -> TokenLookup:
        pass

    @abstractmethod
    def set_perm_code(self, code: bytes, scope: str):
        pass

    @abstractmethod
    def lookup_perm_code(self, code: bytes) -> Optional[str]:
        pass

    @abstractmethod
    def purge_expired(self, now: float) -> int:
        pass

    @abstractmethod
    def snapshot(self) -> Dict[str, Any]:
        """JSON-compatible dump of the whole state, bytes hex-encoded."""

    def close(self):
        pass


# ─────────────────────────────────────────────
# IN-MEMORY IMPLEMENTATION
# ─────────────────────────────────────────────

class MemoryStore(ServerStore):
    def __init__(self):
        self._lock = threading.RLock()
        self._admins: Dict[bytes, AdminRecord] = {}
        self._clients: Dict[bytes, ClientRecord] = {}
        self._keys: Set[str] = set()
        self._tokens: Dict[bytes, TokenRecord] = {}
        self._perm_codes: Dict[bytes, str] = {}

    # ───────── admins / clients ─────────

    def add_admin(self, record: AdminRecord) -> InsertResult:
        with self._lock:
            if record.admin_uuid in self._admins or record.admin_uuid in self._clients:
                return InsertResult.DUPLICATE_ID
            if key_id(record.public_key) in self._keys:
                return InsertResult.DUPLICATE_KEY
            self._commit({"op": "add_admin", "admin_uuid": record.admin_uuid.hex(),
                          "public_key": record.public_key.hex()})
            return InsertResult.OK

    def get_admin(self, admin_uuid: bytes) -> Optional[AdminRecord]:
        with self._lock:
            return self._admins.get(admin_uuid)

    def insert_client(self, record: ClientRecord) -> InsertResult:
        with self._lock:
            if record.uuid in self._clients or record.uuid in self._admins:
                return InsertResult.DUPLICATE_ID
            if key_id(record.public_key) in self._keys:
                return InsertResult.DUPLICATE_KEY
            self._commit({"op": "insert_client", "uuid": record.uuid.hex(),
                          "public_key": record.public_key.hex(), "installed_at": record.key_installed_at})
            return InsertResult.OK

    def get_client(self, uuid: bytes) -> Optional[ClientRecord]:
        with self._lock:
            return self._clients.get(uuid)

    def compare_and_advance_time(self, uuid: bytes, observed: int, key_epoch: Optional[int] = None) -> TimeAdvance:
        with self._lock:
            record = self._clients.get(uuid)
            if record is None:
                raise UnknownClient(f"unknown client {uuid.hex()}")
            if key_epoch is not None and record.key_epoch != key_epoch:
                return TimeAdvance(ok=False, value=record.expected_time, stale_epoch=True)
            if record.expected_time != observed:
                return TimeAdvance(ok=False, value=record.expected_time)
            self._commit({"op": "advance_time", "uuid": uuid.hex(), "value": observed + 1})
            return TimeAdvance(ok=True, value=observed + 1)

    def rotate_key(self, uuid: bytes, new_key: bytes, installed_at: float,
                   expected_old: Optional[bytes] = None) -> RotateResult:
        with self._lock:
            record = self._clients.get(uuid)
            if record is None:
                raise UnknownClient(f"unknown client {uuid.hex()}")
            if expected_old is not None and record.public_key != expected_old:
                return RotateResult.STALE_KEY
            if key_id(new_key) in self._keys:
                return RotateResult.DUPLICATE_KEY
            self._commit({"op": "rotate_key", "uuid": uuid.hex(), "public_key": new_key.hex(),
                          "installed_at": installed_at, "key_epoch": record.key_epoch + 1})
            return RotateResult.OK

    def key_seen(self, public_key: bytes) -> bool:
        with self._lock:
            return key_id(public_key) in self._keys

    # ───────── tokens ─────────

    def insert_token(self, record: TokenRecord) -> InsertResult:
        with self._lock:
            if record.token_hash in self._tokens:
                return InsertResult.DUPLICATE
            self._commit({"op": "insert_token", "token_hash": record.token_hash.hex(), "uuid": record.uuid.hex(),
                          "perms": record.perms.hex(), "issued_at": record.issued_at,
                          "expires_at": record.expires_at})
            return InsertResult.OK

    def lookup_token(self, token_hash: bytes, now: float) -> TokenLookup:
        with self._lock:
            record = self._tokens.get(token_hash)
        if record is None:
            return TokenLookup(TokenStatus.ABSENT)
        if now >= record.expires_at:
            return TokenLookup(TokenStatus.EXPIRED, record)
        return TokenLookup(TokenStatus.LIVE, record)

    def purge_expired(self, now: float) -> int:
        with self._lock:
            expired = sum(1 for r in self._tokens.values() if r.expires_at <= now)
            if expired:
                self._commit({"op": "purge", "now": now})
            return expired

    # ───────── permission codes ─────────

    def set_perm_code(self, code: bytes, scope: str):
        if len(code) != 15:
            raise StoreError("permission codes are 15 bytes")
        with self._lock:
            self._commit({"op": "set_perm_code", "code": code.hex(), "scope": scope})

    def lookup_perm_code(self, code: bytes) -> Optional[str]:
        with self._lock:
            return self._perm_codes.get(code)

    # ───────── state application ─────────

    def _commit(self, entry: Dict[str, Any]):
        self._apply(entry)

    def _apply(self, entry: Dict[str, Any]):
        op = entry["op"]
        if op == "add_admin":
            uuid = bytes.fromhex(entry["admin_uuid"])
            key = bytes.fromhex(entry["public_key"])
            self._admins[uuid] = AdminRecord(uuid, key)
            self._keys.add(key_id(key))
        elif op == "insert_client":
            uuid = bytes.fromhex(entry["uuid"])
            key = bytes.fromhex(entry["public_key"])
            self._clients[uuid] = ClientRecord(uuid, key, entry["installed_at"])
            self._keys.add(key_id(key))
        elif op == "advance_time":
            uuid = bytes.fromhex(entry["uuid"])
            old = self._clients[uuid]
            self._clients[uuid] = ClientRecord(uuid, old.public_key, old.key_installed_at,
                                               entry["value"], old.key_epoch)
        elif op == "rotate_key":
            uuid = bytes.fromhex(entry["uuid"])
            key = bytes.fromhex(entry["public_key"])
            self._clients[uuid] = ClientRecord(uuid, key, entry["installed_at"], 0, entry["key_epoch"])
            self._keys.add(key_id(key))
        elif op == "insert_token":
            digest = bytes.fromhex(entry["token_hash"])
            self._tokens[digest] = TokenRecord(digest, bytes.fromhex(entry["uuid"]), bytes.fromhex(entry["perms"]),
                                               entry["issued_at"], entry["expires_at"])
        elif op == "purge":
            for digest in [d for d, r in self._tokens.items() if r.expires_at <= entry["now"]]:
                del self._tokens[digest]
        elif op == "set_perm_code":
            self._perm_codes[bytes.fromhex(entry["code"])] = entry["scope"]
        else:
            raise StoreError(f"unknown store operation {op!r}")

    # ───────── snapshots ─────────

    def snapshot(self) -> Dict[str, Any]:
        with self._lock:
            return {
                "admins": {u.hex(): r.public_key.hex() for u, r in self._admins.items()},
                "clients": {
                    u.hex(): {
                        "public_key": r.public_key.hex(),
                        "installed_at": r.key_installed_at,
                        "expected_time": r.expected_time,
                        "key_epoch": r.key_epoch,
                    }
                    for u, r in self._clients.items()
                },
                "keys": sorted(self._keys),
                "tokens": {
                    d.hex(): {
                        "uuid": r.uuid.hex(),
                        "perms": r.perms.hex(),
                        "issued_at": r.issued_at,
                        "expires_at": r.expires_at,
                    }
                    for d, r in self._tokens.items()
                },
                "perm_codes": {c.hex(): s for c, s in self._perm_codes.items()},
            }

    def _restore(self, doc: Dict[str, Any]):
        self._admins = {
            bytes.fromhex(u): AdminRecord(bytes.fromhex(u), bytes.fromhex(k)) for u, k in doc.get("admins", {}).items()
        }
        self._clients = {
            bytes.fromhex(u): ClientRecord(bytes.fromhex(u), bytes.fromhex(c["public_key"]), c["installed_at"],
                                           c["expected_time"], c["key_epoch"])
            for u, c in doc.get("clients", {}).items()
        }
        self._keys = set(doc.get("keys", []))
        self._tokens = {
            bytes.fromhex(d): TokenRecord(bytes.fromhex(d), bytes.fromhex(t["uuid"]), bytes.fromhex(t["perms"]),
                                          t["issued_at"], t["expires_at"])
            for d, t in doc.get("tokens", {}).items()
        }
        self._perm_codes = {bytes.fromhex(c): s for c, s in doc.get("perm_codes", {}).items()}

    def clone(self) -> "MemoryStore":
        """Independent copy, used to fork harness runs."""
        other = MemoryStore()
        with self._lock:
            other._restore(self.snapshot())
        return other


# ─────────────────────────────────────────────
# APPEND-ONLY LOG FILE (LOCAL / SINGLE NODE)
# ─────────────────────────────────────────────

LOG_MAGIC = b"PQTS"
LOG_VERSION = 1
_LOG_HEADER = struct.Struct(">4sH")
_ENTRY_LENGTH = struct.Struct(">I")


class LogFileStore(MemoryStore):
    """In-memory state made durable by an operation log.

    Every mutation is appended to ``path`` before it is applied. Every
    ``compact_every`` entries the whole state is written to ``<path>.snap``
    and the log restarts from its header. All logged operations set absolute
    values, so replaying a log over a newer snapshot is harmless.
    """

    def __init__(self, path: str, compact_every: int = 1000, fsync: bool = True):
        super().__init__()
        self.path = path
        self.snapshot_path = f"{path}.snap"
        self.compact_every = compact_every
        self.fsync = fsync
        self._entries_since_snapshot = 0
        self._load()
        self._log = open(self.path, "ab")
        if self._log.tell() == 0:
            self._log.write(_LOG_HEADER.pack(LOG_MAGIC, LOG_VERSION))
            self._flush()
        logger.info(f"Using log file {path} for server state")

    def _load(self):
        if os.path.exists(self.snapshot_path):
            try:
                with open(self.snapshot_path, "r") as f:
                    doc = json.load(f)
                self._restore(doc)
            except Exception as e:
                raise StoreError(f"unreadable snapshot {self.snapshot_path}: {e}") from e
        if not os.path.exists(self.path):
            return
        with open(self.path, "rb") as f:
            data = f.read()
        if not data:
            return
        if len(data) < _LOG_HEADER.size:
            raise StoreError(f"truncated log header in {self.path}")
        magic, version = _LOG_HEADER.unpack_from(data)
        if magic != LOG_MAGIC or version != LOG_VERSION:
            raise StoreError(f"{self.path} is not a version {LOG_VERSION} store log")
        offset = _LOG_HEADER.size
        replayed = 0
        while offset < len(data):
            if offset + _ENTRY_LENGTH.size > len(data):
                break
            (length,) = _ENTRY_LENGTH.unpack_from(data, offset)
            end = offset + _ENTRY_LENGTH.size + length
            if end > len(data):
                break
            self._apply(json.loads(data[offset + _ENTRY_LENGTH.size:end].decode("utf-8")))
            offset = end
            replayed += 1
        if offset < len(data):
            logger.warning(f"Dropping torn entry at byte {offset} of {self.path}")
            with open(self.path, "r+b") as f:
                f.truncate(offset)
        self._entries_since_snapshot = replayed
        logger.debug(f"Replayed {replayed} log entries from {self.path}")

    def _flush(self):
        self._log.flush()
        if self.fsync:
            os.fsync(self._log.fileno())

    def _commit(self, entry: Dict[str, Any]):
        payload = json.dumps(entry, separators=(",", ":")).encode("utf-8")
        self._log.write(_ENTRY_LENGTH.pack(len(payload)) + payload)
        self._flush()
        self._apply(entry)
        self._entries_since_snapshot += 1
        if self.compact_every and self._entries_since_snapshot >= self.compact_every:
            self.compact()

    def compact(self):
        with self._lock:
            tmp = f"{self.snapshot_path}.tmp"
            with open(tmp, "w") as f:
                json.dump(self.snapshot(), f)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, self.snapshot_path)
            self._log.close()
            self._log = open(self.path, "wb")
            self._log.write(_LOG_HEADER.pack(LOG_MAGIC, LOG_VERSION))
            self._flush()
            self._log.close()
            self._log = open(self.path, "ab")
            self._entries_since_snapshot = 0
            logger.info(f"Compacted store log {self.path}")

    def close(self):
        with self._lock:
            if not self._log.closed:
                self._log.close()


# ─────────────────────────────────────────────
# REDIS IMPLEMENTATION (PRODUCTION)
# ─────────────────────────────────────────────

_INSERT_CLIENT = """
if redis.call('EXISTS', KEYS[1]) == 1 or redis.call('EXISTS', KEYS[3]) == 1 then return 'duplicate_id' end
if redis.call('SISMEMBER', KEYS[2], ARGV[2]) == 1 then return 'duplicate_key' end
redis.call('SADD', KEYS[2], ARGV[2])
redis.call('HSET', KEYS[1], 'public_key', ARGV[1], 'installed_at', ARGV[3], 'expected_time', '0', 'key_epoch', '0')
return 'ok'
"""

_ADD_ADMIN = """
if redis.call('EXISTS', KEYS[1]) == 1 or redis.call('EXISTS', KEYS[3]) == 1 then return 'duplicate_id' end
if redis.call('SISMEMBER', KEYS[2], ARGV[2]) == 1 then return 'duplicate_key' end
redis.call('SADD', KEYS[2], ARGV[2])
redis.call('SET', KEYS[1], ARGV[1])
return 'ok'
"""

_ADVANCE_TIME = """
if redis.call('EXISTS', KEYS[1]) == 0 then return {'unknown', ''} end
local current = redis.call('HGET', KEYS[1], 'expected_time')
if ARGV[2] ~= '' and redis.call('HGET', KEYS[1], 'key_epoch') ~= ARGV[2] then return {'stale', current} end
if current ~= ARGV[1] then return {'mismatch', current} end
redis.call('HSET', KEYS[1], 'expected_time', ARGV[3])
return {'ok', ARGV[3]}
"""

_ROTATE_KEY = """
if redis.call('EXISTS', KEYS[1]) == 0 then return 'unknown' end
if ARGV[4] ~= '' and redis.call('HGET', KEYS[1], 'public_key') ~= ARGV[4] then return 'stale_key' end
if redis.call('SISMEMBER', KEYS[2], ARGV[2]) == 1 then return 'duplicate_key' end
redis.call('SADD', KEYS[2], ARGV[2])
local epoch = tonumber(redis.call('HGET', KEYS[1], 'key_epoch')) + 1
redis.call('HSET', KEYS[1], 'public_key', ARGV[1], 'installed_at', ARGV[3], 'expected_time', '0',
           'key_epoch', tostring(epoch))
return 'ok'
"""

_INSERT_TOKEN = """
if redis.call('EXISTS', KEYS[1]) == 1 then return 0 end
redis.call('HSET', KEYS[1], 'uuid', ARGV[1], 'perms', ARGV[2], 'issued_at', ARGV[3], 'expires_at', ARGV[4])
redis.call('ZADD', KEYS[2], ARGV[4], ARGV[5])
return 1
"""


class RedisStore(ServerStore):
    """Shared store for several server processes; atomicity comes from Lua scripts."""

    def __init__(self, url: str, prefix: str = "pqtoken"):
        if redis is None:
            raise ImportError("Redis module not installed")
        self.r = redis.from_url(url, decode_responses=True)
        self.r.ping()
        self.prefix = prefix
        self._insert_client = self.r.register_script(_INSERT_CLIENT)
        self._add_admin = self.r.register_script(_ADD_ADMIN)
        self._advance_time = self.r.register_script(_ADVANCE_TIME)
        self._rotate_key = self.r.register_script(_ROTATE_KEY)
        self._insert_token = self.r.register_script(_INSERT_TOKEN)
        logger.info("Connected to Redis for server state")

    def _k(self, kind: str, ident: bytes = b"") -> str:
        return f"{self.prefix}:{kind}:{ident.hex()}" if ident else f"{self.prefix}:{kind}"

    def add_admin(self, record: AdminRecord) -> InsertResult:
        result = self._add_admin(
            keys=[self._k("admin", record.admin_uuid), self._k("keys"), self._k("client", record.admin_uuid)],
            args=[record.public_key.hex(), key_id(record.public_key)],
        )
        return InsertResult(result)

    def get_admin(self, admin_uuid: bytes) -> Optional[AdminRecord]:
        value = self.r.get(self._k("admin", admin_uuid))
        return AdminRecord(admin_uuid, bytes.fromhex(value)) if value else None

    def insert_client(self, record: ClientRecord) -> InsertResult:
        result = self._insert_client(
            keys=[self._k("client", record.uuid), self._k("keys"), self._k("admin", record.uuid)],
            args=[record.public_key.hex(), key_id(record.public_key), repr(float(record.key_installed_at))],
        )
        return InsertResult(result)

    def get_client(self, uuid: bytes) -> Optional[ClientRecord]:
        fields = self.r.hgetall(self._k("client", uuid))
        if not fields:
            return None
        return ClientRecord(uuid, bytes.fromhex(fields["public_key"]), float(fields["installed_at"]),
                            int(fields["expected_time"]), int(fields["key_epoch"]))

    def compare_and_advance_time(self, uuid: bytes, observed: int, key_epoch: Optional[int] = None) -> TimeAdvance:
        status, value = self._advance_time(
            keys=[self._k("client", uuid)],
            args=[str(observed), "" if key_epoch is None else str(key_epoch), str(observed + 1)],
        )
        if status == "unknown":
            raise UnknownClient(f"unknown client {uuid.hex()}")
        return TimeAdvance(ok=status == "ok", value=int(value), stale_epoch=status == "stale")

    def rotate_key(self, uuid: bytes, new_key: bytes, installed_at: float,
                   expected_old: Optional[bytes] = None) -> RotateResult:
        result = self._rotate_key(
            keys=[self._k("client", uuid), self._k("keys")],
            args=[new_key.hex(), key_id(new_key), repr(float(installed_at)),
                  "" if expected_old is None else expected_old.hex()],
        )
        if result == "unknown":
            raise UnknownClient(f"unknown client {uuid.hex()}")
        return RotateResult(result)

    def key_seen(self, public_key: bytes) -> bool:
        return bool(self.r.sismember(self._k("keys"), key_id(public_key)))

    def insert_token(self, record: TokenRecord) -> InsertResult:
        inserted = self._insert_token(
            keys=[self._k("token", record.token_hash), self._k("token_expiry")],
            args=[record.uuid.hex(), record.perms.hex(), repr(float(record.issued_at)),
                  repr(float(record.expires_at)), record.token_hash.hex()],
        )
        return InsertResult.OK if int(inserted) else InsertResult.DUPLICATE

    def lookup_token(self, token_hash: bytes, now: float) -> TokenLookup:
        fields = self.r.hgetall(self._k("token", token_hash))
        if not fields:
            return TokenLookup(TokenStatus.ABSENT)
        record = TokenRecord(token_hash, bytes.fromhex(fields["uuid"]), bytes.fromhex(fields["perms"]),
                             float(fields["issued_at"]), float(fields["expires_at"]))
        status = TokenStatus.EXPIRED if now >= record.expires_at else TokenStatus.LIVE
        return TokenLookup(status, record)

    def purge_expired(self, now: float) -> int:
        expired = self.r.zrangebyscore(self._k("token_expiry"), "-inf", now)
        if not expired:
            return 0
        pipe = self.r.pipeline()
        for digest in expired:
            pipe.delete(self._k("token", bytes.fromhex(digest)))
        pipe.zrem(self._k("token_expiry"), *expired)
        pipe.execute()
        return len(expired)

    def set_perm_code(self, code: bytes, scope: str):
        if len(code) != 15:
            raise StoreError("permission codes are 15 bytes")
        self.r.set(self._k("perm", code), scope)

    def lookup_perm_code(self, code: bytes) -> Optional[str]:
        return self.r.get(self._k("perm", code))

    def snapshot(self) -> Dict[str, Any]:
        def ident(key: str) -> str:
            return key.rsplit(":", 1)[1]

        out = {"admins": {}, "clients": {}, "keys": sorted(self.r.smembers(self._k("keys"))),
               "tokens": {}, "perm_codes": {}}
        for k in self.r.scan_iter(match=f"{self.prefix}:admin:*"):
            out["admins"][ident(k)] = self.r.get(k)
        for k in self.r.scan_iter(match=f"{self.prefix}:client:*"):
            fields = self.r.hgetall(k)
            out["clients"][ident(k)] = {
                "public_key": fields["public_key"],
                "installed_at": float(fields["installed_at"]),
                "expected_time": int(fields["expected_time"]),
                "key_epoch": int(fields["key_epoch"]),
            }
        for k in self.r.scan_iter(match=f"{self.prefix}:token:*"):
            fields = self.r.hgetall(k)
            out["tokens"][ident(k)] = {
                "uuid": fields["uuid"],
                "perms": fields["perms"],
                "issued_at": float(fields["issued_at"]),
                "expires_at": float(fields["expires_at"]),
            }
        for k in self.r.scan_iter(match=f"{self.prefix}:perm:*"):
            out["perm_codes"][ident(k)] = self.r.get(k)
        return out

    def close(self):
        self.r.close()


# ─────────────────────────────────────────────
# FACTORY
# ─────────────────────────────────────────────

def get_store(config) -> ServerStore:
    if config.redis_url:
        try:
            return RedisStore(config.redis_url)
        except Exception as e:
            logger.warning(f"Redis failed, falling back to {'file' if config.store_path else 'memory'}: {e}")
    if config.store_path:
        return LogFileStore(config.store_path, compact_every=config.compact_every)
    logger.info("Using in-memory server state (nothing survives a restart)")
    return MemoryStore()
