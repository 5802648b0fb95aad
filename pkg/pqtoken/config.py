import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

from pqtoken.suite import SuiteId, UnknownSuite, get_suite
from pqtoken.wire import U64_MAX

ENV_PREFIX = "PQTOKEN_"


class ConfigError(RuntimeError):
    pass


def get_env_safe(key: str, default: Optional[str] = None, environ: Optional[Mapping[str, str]] = None) -> Optional[str]:
    """Get environment variable and strip whitespace/carriage returns."""
    env = os.environ if environ is None else environ
    val = env.get(key, default)
    if val is not None:
        return val.strip().replace("\r", "")
    return val


def parse_env_file(path: str) -> Dict[str, str]:
    """Read a flat key=value file (``#`` comments, optional quotes)."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    out = {}
    for number, raw in enumerate(p.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{number}: expected key=value")
        key, val = line.split("=", 1)
        key = key.strip().lower()
        val = val.strip().strip('"').strip("'")
        if key:
            out[key] = val
    return out


_DURATION_UNITS = {"s": 1, "m": 60, "h": 3600, "d": 86400}


def parse_duration(value: str) -> float:
    """'90d', '1h', '30s', '10m' or plain seconds; must be positive."""
    text = str(value).strip().lower()
    unit = 1
    if text and text[-1] in _DURATION_UNITS:
        unit = _DURATION_UNITS[text[-1]]
        text = text[:-1]
    try:
        seconds = float(text) * unit
    except ValueError:
        raise ConfigError(f"invalid duration: {value!r}") from None
    if seconds <= 0:
        raise ConfigError(f"duration must be positive: {value!r}")
    return seconds


def _positive_int(value: str) -> int:
    try:
        number = int(str(value).strip(), 0)
    except ValueError:
        raise ConfigError(f"invalid integer: {value!r}") from None
    if number <= 0:
        raise ConfigError(f"value must be positive: {value!r}")
    return number


def _bool(value: str) -> bool:
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"invalid boolean: {value!r}")


def _suite(value: str) -> str:
    try:
        return get_suite(value).level.value
    except UnknownSuite as e:
        raise ConfigError(str(e)) from None


def _provider(value: str) -> str:
    name = str(value).strip().lower()
    if name not in ("liboqs", "symbolic"):
        raise ConfigError(f"unknown provider {value!r} (liboqs or symbolic)")
    return name


def _listen(value: str) -> str:
    host, sep, port = str(value).strip().rpartition(":")
    if not sep or not host:
        raise ConfigError(f"listen address must be host:port, got {value!r}")
    if not port.isdigit() or int(port) > 65535:
        raise ConfigError(f"invalid port in {value!r}")
    return f"{host}:{int(port)}"


def _max_protocol_time(value: str) -> int:
    number = _positive_int(value)
    if number > U64_MAX:
        raise ConfigError("max_protocol_time must fit an unsigned 64-bit integer")
    return number


@dataclass(frozen=True)
class Config:
    suite: str = "L1"
    provider: str = "liboqs"
    listen: str = "127.0.0.1:7474"
    store_path: str = ""
    redis_url: str = ""
    server_key_path: str = "server.key"
    key_lifetime: float = 90 * 86400.0
    token_ttl: float = 3600.0
    max_frame_size: int = 64 * 1024
    max_connections: int = 64
    idle_timeout: float = 30.0
    max_protocol_time: int = U64_MAX
    keep_alive: bool = False
    compact_every: int = 1000
    purge_interval: float = 600.0

    @property
    def suite_id(self) -> SuiteId:
        return get_suite(self.suite)

    @property
    def listen_address(self) -> Tuple[str, int]:
        host, _, port = self.listen.rpartition(":")
        return host, int(port)

    def server_policy(self):
        from pqtoken.protocol.server import ServerPolicy
        return ServerPolicy(key_lifetime=self.key_lifetime, token_ttl=self.token_ttl,
                            max_protocol_time=self.max_protocol_time)


_PARSERS = {
    "suite": _suite,
    "provider": _provider,
    "listen": _listen,
    "store_path": str,
    "redis_url": str,
    "server_key_path": str,
    "key_lifetime": parse_duration,
    "token_ttl": parse_duration,
    "max_frame_size": _positive_int,
    "max_connections": _positive_int,
    "idle_timeout": parse_duration,
    "max_protocol_time": _max_protocol_time,
    "keep_alive": _bool,
    "compact_every": _positive_int,
    "purge_interval": parse_duration,
}

KEYS = tuple(f.name for f in fields(Config))


def parse_overrides(pairs) -> Dict[str, str]:
    """``["key=value", ...]`` from repeated ``--set`` flags."""
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, val = pair.split("=", 1)
        out[key.strip().lower()] = val.strip()
    return out


def load_config(path: Optional[str] = None, overrides: Optional[Mapping[str, str]] = None,
                environ: Optional[Mapping[str, str]] = None) -> Config:
    """defaults < config file < PQTOKEN_<KEY> environment < overrides."""
    raw: Dict[str, str] = {}
    if path:
        raw.update(parse_env_file(path))
    for key in KEYS:
        val = get_env_safe(ENV_PREFIX + key.upper(), environ=environ)
        if val is not None:
            raw[key] = val
    raw.update(overrides or {})

    values = {}
    for key, val in raw.items():
        if key not in _PARSERS:
            raise ConfigError(f"unknown config key: {key}")
        values[key] = _PARSERS[key](val)
    return Config(**values)
