"""Wire contract shared by the controller emulator (server side) and the
twin client / proxy (client side): resource paths, JSON message codecs,
and HTTP digest authentication (MD5, qop=auth).

Joint angles travel in degrees on the wire; quaternions are w-first.
"""

from __future__ import annotations

import hashlib
import json
import re
import secrets
import threading
import time
from dataclasses import dataclass, field

# -- resource paths (fixed emulator dialect) --------------------------------

PATH_JOINTTARGET = "/rw/motionsystem/mechunits/ROB_1/jointtarget"
PATH_ROBTARGET = "/rw/motionsystem/mechunits/ROB_1/robtarget"
PATH_IOSIGNALS = "/rw/iosystem/signals"
PATH_SPYLOG = "/rw/rapid/spylog"
PATH_EXECUTION = "/rw/rapid/execution"
PATH_SYMBOL_JTARGET = "/rw/rapid/symbol/data/T_ROB1/module/jtarget"

DEFAULT_USERNAME = "Default User"
DEFAULT_PASSWORD = "robotics"
DEFAULT_REALM = "controller"

MANDATORY_SIGNALS = ("DO_3", "DO_4", "DO_5", "DO_GRIP", "DI_IR", "DO_CONVEYOR")


class ProtocolError(ValueError):
    """Malformed payload; `field` names the offending JSON field."""

    def __init__(self, field_name: str, message: str | None = None):
        super().__init__(message or f"bad or missing field: {field_name}")
        self.field = field_name


def _require(obj: dict, key: str):
    if not isinstance(obj, dict) or key not in obj:
        raise ProtocolError(key)
    return obj[key]


def _loads(data: bytes | str) -> dict:
    try:
        obj = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ProtocolError("<json>", f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ProtocolError("<json>", "payload must be a JSON object")
    return obj


def _dumps(obj: dict) -> bytes:
    # stable field order keeps payloads byte-comparable in tests
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


# -- message types -----------------------------------------------------------

@dataclass(frozen=True)
class JointTargetMsg:
    joints: tuple[float, ...]  # degrees
    seq: int
    timestamp_ms: int

    def encode(self) -> bytes:
        return _dumps({"joints": list(self.joints), "seq": self.seq,
                       "timestamp_ms": self.timestamp_ms})

    @classmethod
    def decode(cls, data: bytes | str) -> "JointTargetMsg":
        obj = _loads(data)
        joints = _require(obj, "joints")
        if not isinstance(joints, list) or len(joints) != 6:
            raise ProtocolError("joints", "joints must be a list of 6 numbers")
        return cls(joints=tuple(float(j) for j in joints),
                   seq=int(_require(obj, "seq")),
                   timestamp_ms=int(_require(obj, "timestamp_ms")))


@dataclass(frozen=True)
class RobTargetMsg:
    pos: tuple[float, float, float]  # mm
    orient: tuple[float, float, float, float]  # w-first unit quaternion
    seq: int
    timestamp_ms: int

    def __post_init__(self):
        n = sum(c * c for c in self.orient) ** 0.5
        if abs(n - 1.0) > 1e-6:
            raise ProtocolError("orient", f"quaternion norm {n} not unit")

    def encode(self) -> bytes:
        x, y, z = self.pos
        q1, q2, q3, q4 = self.orient
        return _dumps({"pos": {"x": x, "y": y, "z": z},
                       "orient": {"q1": q1, "q2": q2, "q3": q3, "q4": q4},
                       "seq": self.seq, "timestamp_ms": self.timestamp_ms})

    @classmethod
    def decode(cls, data: bytes | str) -> "RobTargetMsg":
        obj = _loads(data)
        pos = _require(obj, "pos")
        orient = _require(obj, "orient")
        try:
            p = (float(pos["x"]), float(pos["y"]), float(pos["z"]))
        except (KeyError, TypeError) as exc:
            raise ProtocolError("pos") from exc
        try:
            o = (float(orient["q1"]), float(orient["q2"]),
                 float(orient["q3"]), float(orient["q4"]))
        except (KeyError, TypeError) as exc:
            raise ProtocolError("orient") from exc
        return cls(pos=p, orient=o, seq=int(_require(obj, "seq")),
                   timestamp_ms=int(_require(obj, "timestamp_ms")))


@dataclass(frozen=True)
class IoSignal:
    name: str
    kind: str  # "DI" | "DO"
    value: int  # 0 | 1


@dataclass(frozen=True)
class IoSnapshotMsg:
    signals: tuple[IoSignal, ...]
    seq: int
    timestamp_ms: int

    def __post_init__(self):
        names = [s.name for s in self.signals]
        if len(set(names)) != len(names):
            raise ProtocolError("signals", "duplicate signal names")

    def encode(self) -> bytes:
        return _dumps({
            "signals": [{"name": s.name, "kind": s.kind, "value": s.value}
                        for s in self.signals],
            "seq": self.seq, "timestamp_ms": self.timestamp_ms})

    @classmethod
    def decode(cls, data: bytes | str) -> "IoSnapshotMsg":
        obj = _loads(data)
        raw = _require(obj, "signals")
        if not isinstance(raw, list):
            raise ProtocolError("signals")
        sigs = []
        for s in raw:
            name = _require(s, "name")
            kind = _require(s, "kind")
            value = _require(s, "value")
            if kind not in ("DI", "DO"):
                raise ProtocolError("kind", f"unknown signal kind {kind!r}")
            if value not in (0, 1):
                raise ProtocolError("value", "signal value must be 0 or 1")
            sigs.append(IoSignal(name=str(name), kind=kind, value=int(value)))
        return cls(signals=tuple(sigs), seq=int(_require(obj, "seq")),
                   timestamp_ms=int(_require(obj, "timestamp_ms")))

    def as_dict(self) -> dict[str, int]:
        return {s.name: s.value for s in self.signals}


@dataclass(frozen=True)
class SpyLogEvent:
    seq: int
    timestamp_ms: int
    level: str  # "info" | "warn"
    text: str


@dataclass(frozen=True)
class SpyLogMsg:
    events: tuple[SpyLogEvent, ...]
    next_since: int

    def __post_init__(self):
        seqs = [e.seq for e in self.events]
        if seqs != sorted(seqs):
            raise ProtocolError("events", "events must be ordered by seq")

    def encode(self) -> bytes:
        return _dumps({
            "events": [{"seq": e.seq, "timestamp_ms": e.timestamp_ms,
                        "level": e.level, "text": e.text} for e in self.events],
            "next_since": self.next_since})

    @classmethod
    def decode(cls, data: bytes | str) -> "SpyLogMsg":
        obj = _loads(data)
        raw = _require(obj, "events")
        if not isinstance(raw, list):
            raise ProtocolError("events")
        events = []
        for e in raw:
            level = _require(e, "level")
            if level not in ("info", "warn", "error"):
                raise ProtocolError("level", f"unknown level {level!r}")
            events.append(SpyLogEvent(seq=int(_require(e, "seq")),
                                      timestamp_ms=int(_require(e, "timestamp_ms")),
                                      level=level, text=str(_require(e, "text"))))
        return cls(events=tuple(events), next_since=int(_require(obj, "next_since")))


# -- digest authentication ---------------------------------------------------

@dataclass
class DigestCredentials:
    username: str = DEFAULT_USERNAME
    password: str = DEFAULT_PASSWORD
    realm: str = DEFAULT_REALM
    nonce_lifetime_s: float = 300.0


def _h(*parts: str) -> str:
    return hashlib.md5(":".join(parts).encode()).hexdigest()


def digest_response(username: str, password: str, realm: str, method: str,
                    uri: str, nonce: str, nc: str, cnonce: str,
                    qop: str = "auth") -> str:
    """The RFC 2617 response hash for MD5 with qop=auth."""
    ha1 = _h(username, realm, password)
    ha2 = _h(method, uri)
    return _h(ha1, nonce, nc, cnonce, qop, ha2)


_AUTH_PARAM_RE = re.compile(r'(\w+)=(?:"([^"]*)"|([^\s,]+))')


def parse_auth_params(header: str) -> dict[str, str]:
    """Parse the comma-separated params of a Digest header value. Tolerates
    arbitrary garbage (returns whatever key=value pairs it can find).
    """
    return {m.group(1): m.group(2) if m.group(2) is not None else m.group(3)
            for m in _AUTH_PARAM_RE.finditer(header)}


class NonceTable:
    """Server-side nonce issue/expiry tracking. Thread-safe."""

    def __init__(self, lifetime_s: float = 300.0, clock=time.monotonic):
        self._lifetime = lifetime_s
        self._clock = clock
        self._lock = threading.Lock()
        self._issued: dict[str, float] = {}

    def issue(self) -> str:
        nonce = secrets.token_hex(16)
        with self._lock:
            self._issued[nonce] = self._clock()
            # keep the table from growing without bound
            if len(self._issued) > 4096:
                cutoff = self._clock() - self._lifetime
                self._issued = {n: t for n, t in self._issued.items() if t >= cutoff}
        return nonce

    def is_fresh(self, nonce: str) -> bool:
        with self._lock:
            issued_at = self._issued.get(nonce)
        if issued_at is None:
            return False
        return self._clock() - issued_at <= self._lifetime

    def expire(self, nonce: str):
        with self._lock:
            self._issued.pop(nonce, None)


class DigestAuthenticator:
    """Server side of the digest flow: issue challenges and verify
    Authorization headers against a single credential set.
    """

    def __init__(self, creds: DigestCredentials, clock=time.monotonic):
        self.creds = creds
        self.nonces = NonceTable(creds.nonce_lifetime_s, clock=clock)

    def challenge(self, stale: bool = False) -> str:
        """WWW-Authenticate header value carrying a fresh nonce."""
        nonce = self.nonces.issue()
        value = (f'Digest realm="{self.creds.realm}", qop="auth", '
                 f'nonce="{nonce}", algorithm=MD5')
        if stale:
            value += ", stale=true"
        return value

    def verify(self, method: str, uri: str, authorization: str | None) -> tuple[bool, bool]:
        """Check an Authorization header. Returns (ok, stale). A stale
        nonce with an otherwise-correct signature reports stale=True so the
        client retries once with a new nonce.
        """
        if not authorization or not authorization.strip().lower().startswith("digest"):
            return False, False
        params = parse_auth_params(authorization)
        needed = ("username", "realm", "nonce", "uri", "response", "cnonce", "nc")
        if any(k not in params for k in needed):
            return False, False
        if params.get("qop", "auth") != "auth":
            return False, False
        if params["username"] != self.creds.username or params["realm"] != self.creds.realm:
            return False, False
        # some clients sign the path without the query string; accept either
        if params["uri"] not in (uri, uri.split("?", 1)[0]):
            return False, False
        expected = digest_response(
            self.creds.username, self.creds.password, self.creds.realm,
            method, params["uri"], params["nonce"], params["nc"], params["cnonce"])
        if expected != params["response"]:
            return False, False
        if not self.nonces.is_fresh(params["nonce"]):
            return False, True
        return True, False


class DigestClientSession:
    """Client side: parse a challenge once, then sign requests, bumping the
    nonce count per request. Deterministic when a cnonce is supplied.
    """

    def __init__(self, creds: DigestCredentials):
        self.creds = creds
        self._realm: str | None = None
        self._nonce: str | None = None
        self._nc = 0
        self._lock = threading.Lock()

    @property
    def has_challenge(self) -> bool:
        return self._nonce is not None

    def accept_challenge(self, www_authenticate: str):
        if not www_authenticate.strip().lower().startswith("digest"):
            raise ProtocolError("WWW-Authenticate", "not a Digest challenge")
        params = parse_auth_params(www_authenticate)
        qop = params.get("qop", "auth")
        if "auth" not in [q.strip() for q in qop.split(",")]:
            raise ProtocolError("qop", f"unsupported qop {qop!r}")
        if "nonce" not in params:
            raise ProtocolError("nonce")
        with self._lock:
            self._realm = params.get("realm", self.creds.realm)
            self._nonce = params["nonce"]
            self._nc = 0

    def sign(self, method: str, uri: str, cnonce: str | None = None) -> str:
        """Authorization header for one request against the held nonce."""
        with self._lock:
            if self._nonce is None:
                raise ProtocolError("nonce", "no challenge accepted yet")
            self._nc += 1
            nc = f"{self._nc:08x}"
            nonce, realm = self._nonce, self._realm or self.creds.realm
        cnonce = cnonce or secrets.token_hex(8)
        response = digest_response(self.creds.username, self.creds.password,
                                   realm, method, uri, nonce, nc, cnonce)
        return (f'Digest username="{self.creds.username}", realm="{realm}", '
                f'nonce="{nonce}", uri="{uri}", qop=auth, nc={nc}, '
                f'cnonce="{cnonce}", response="{response}", algorithm=MD5')
