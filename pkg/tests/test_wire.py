import hashlib
import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rwstwin import wire


# -- codec round-trips ---------------------------------------------------------

finite_floats = st.floats(allow_nan=False, allow_infinity=False,
                          min_value=-1e6, max_value=1e6)


def unit_quats():
    def normalize(raw):
        n = math.sqrt(sum(c * c for c in raw))
        return tuple(c / n for c in raw)
    return st.tuples(*(st.floats(min_value=-1, max_value=1).filter(
        lambda v: abs(v) > 1e-3) for _ in range(4))).map(normalize)


class TestJointTargetCodec:
    def test_round_trip_home(self):
        msg = wire.JointTargetMsg(joints=(0, 0, 0, 0, 0, 0), seq=1,
                                  timestamp_ms=1700000000000)
        encoded = msg.encode()
        obj = json.loads(encoded)
        assert obj["joints"] == [0, 0, 0, 0, 0, 0]
        assert obj["seq"] == 1
        assert wire.JointTargetMsg.decode(encoded) == msg

    def test_missing_joints_field(self):
        with pytest.raises(wire.ProtocolError) as ei:
            wire.JointTargetMsg.decode(b'{"seq":1,"timestamp_ms":0}')
        assert ei.value.field == "joints"

    @given(joints=st.tuples(*(finite_floats for _ in range(6))),
           seq=st.integers(min_value=0, max_value=2**53),
           ts=st.integers(min_value=0, max_value=2**53))
    @settings(max_examples=200)
    def test_round_trip_property(self, joints, seq, ts):
        msg = wire.JointTargetMsg(joints=joints, seq=seq, timestamp_ms=ts)
        assert wire.JointTargetMsg.decode(msg.encode()) == msg


class TestRobTargetCodec:
    @given(pos=st.tuples(finite_floats, finite_floats, finite_floats),
           quat=unit_quats(), seq=st.integers(min_value=0, max_value=2**53))
    @settings(max_examples=200)
    def test_round_trip_property(self, pos, quat, seq):
        msg = wire.RobTargetMsg(pos=pos, orient=quat, seq=seq, timestamp_ms=0)
        assert wire.RobTargetMsg.decode(msg.encode()) == msg

    def test_non_unit_quaternion_rejected(self):
        with pytest.raises(wire.ProtocolError):
            wire.RobTargetMsg(pos=(0, 0, 0), orient=(1, 1, 0, 0), seq=0,
                              timestamp_ms=0)


names = st.text(alphabet="ABCDEFGH_0123456789", min_size=1, max_size=12)


class TestIoSnapshotCodec:
    def test_do3_round_trip(self):
        msg = wire.IoSnapshotMsg(
            signals=(wire.IoSignal("DO_3", "DO", 1),
                     wire.IoSignal("DI_IR", "DI", 0)),
            seq=5, timestamp_ms=12)
        decoded = wire.IoSnapshotMsg.decode(msg.encode())
        assert decoded.as_dict()["DO_3"] == 1

    def test_duplicate_names_rejected(self):
        with pytest.raises(wire.ProtocolError):
            wire.IoSnapshotMsg(signals=(wire.IoSignal("DO_3", "DO", 1),
                                        wire.IoSignal("DO_3", "DO", 0)),
                               seq=0, timestamp_ms=0)

    def test_bad_value_rejected(self):
        payload = json.dumps({"signals": [{"name": "DO_3", "kind": "DO",
                                           "value": 2}],
                              "seq": 0, "timestamp_ms": 0})
        with pytest.raises(wire.ProtocolError):
            wire.IoSnapshotMsg.decode(payload)

    @given(sigs=st.lists(
        st.tuples(names, st.sampled_from(["DI", "DO"]),
                  st.sampled_from([0, 1])),
        min_size=0, max_size=10, unique_by=lambda s: s[0]),
        seq=st.integers(min_value=0, max_value=2**53))
    @settings(max_examples=200)
    def test_round_trip_property(self, sigs, seq):
        msg = wire.IoSnapshotMsg(
            signals=tuple(wire.IoSignal(*s) for s in sigs),
            seq=seq, timestamp_ms=0)
        assert wire.IoSnapshotMsg.decode(msg.encode()) == msg


class TestSpyLogCodec:
    @given(texts=st.lists(st.text(max_size=40), max_size=8),
           start=st.integers(min_value=0, max_value=1000))
    @settings(max_examples=100)
    def test_round_trip_property(self, texts, start):
        events = tuple(
            wire.SpyLogEvent(seq=start + i, timestamp_ms=i, level="info", text=t)
            for i, t in enumerate(texts))
        msg = wire.SpyLogMsg(events=events,
                             next_since=start + len(texts))
        assert wire.SpyLogMsg.decode(msg.encode()) == msg

    def test_out_of_order_rejected(self):
        events = (wire.SpyLogEvent(5, 0, "info", "a"),
                  wire.SpyLogEvent(3, 0, "info", "b"))
        with pytest.raises(wire.ProtocolError):
            wire.SpyLogMsg(events=events, next_since=5)

    def test_seq_monotonicity_preserved(self):
        events = tuple(wire.SpyLogEvent(i, 0, "info", "x") for i in (1, 4, 9))
        msg = wire.SpyLogMsg.decode(
            wire.SpyLogMsg(events=events, next_since=9).encode())
        seqs = [e.seq for e in msg.events]
        assert seqs == sorted(seqs)


# -- digest auth ---------------------------------------------------------------

def oracle_digest(username, password, realm, method, uri, nonce, nc, cnonce):
    """Independent spelling of the RFC 2617 MD5/qop=auth computation."""
    def md5hex(s):
        return hashlib.md5(s.encode()).hexdigest()
    a1 = md5hex(f"{username}:{realm}:{password}")
    a2 = md5hex(f"{method}:{uri}")
    return md5hex(f"{a1}:{nonce}:{nc}:{cnonce}:auth:{a2}")


@pytest.fixture
def creds():
    return wire.DigestCredentials(username="Default User", password="robotics",
                                  realm="controller", nonce_lifetime_s=60)


@pytest.fixture
def server(creds):
    return wire.DigestAuthenticator(creds)


class TestDigestFlow:
    def test_challenge_shape(self, server):
        challenge = server.challenge()
        params = wire.parse_auth_params(challenge)
        assert challenge.startswith("Digest ")
        assert params["realm"] == "controller"
        assert params["qop"] == "auth"
        assert len(params["nonce"]) == 32

    def test_sign_then_verify(self, server, creds):
        client = wire.DigestClientSession(creds)
        client.accept_challenge(server.challenge())
        header = client.sign("GET", "/rw/iosystem/signals")
        ok, stale = server.verify("GET", "/rw/iosystem/signals", header)
        assert ok and not stale

    def test_response_hash_matches_rfc_oracle(self, server, creds):
        client = wire.DigestClientSession(creds)
        client.accept_challenge(server.challenge())
        header = client.sign("GET", "/x/y", cnonce="deadbeef01234567")
        params = wire.parse_auth_params(header)
        expected = oracle_digest(creds.username, creds.password, creds.realm,
                                 "GET", "/x/y", params["nonce"], params["nc"],
                                 "deadbeef01234567")
        assert params["response"] == expected

    def test_wrong_password_fails(self, server, creds):
        bad = wire.DigestCredentials(username=creds.username, password="nope",
                                     realm=creds.realm)
        client = wire.DigestClientSession(bad)
        client.accept_challenge(server.challenge())
        ok, stale = server.verify("GET", "/a", client.sign("GET", "/a"))
        assert not ok and not stale

    def test_wrong_realm_fails(self, server, creds):
        client = wire.DigestClientSession(creds)
        client.accept_challenge(server.challenge())
        header = client.sign("GET", "/a").replace('realm="controller"',
                                                  'realm="other"')
        ok, _ = server.verify("GET", "/a", header)
        assert not ok

    def test_stale_nonce_flagged(self, creds):
        clock = [0.0]
        server = wire.DigestAuthenticator(creds, clock=lambda: clock[0])
        client = wire.DigestClientSession(creds)
        client.accept_challenge(server.challenge())
        clock[0] = creds.nonce_lifetime_s + 1
        ok, stale = server.verify("GET", "/a", client.sign("GET", "/a"))
        assert not ok and stale

    def test_nonce_reuse_with_incrementing_nc_allowed(self, server, creds):
        client = wire.DigestClientSession(creds)
        client.accept_challenge(server.challenge())
        for _ in range(5):
            ok, _ = server.verify("GET", "/a", client.sign("GET", "/a"))
            assert ok

    def test_missing_header_fails(self, server):
        assert server.verify("GET", "/a", None) == (False, False)
        assert server.verify("GET", "/a", "Basic dXNlcjpwdw==") == (False, False)

    def test_unsupported_qop_rejected_by_client(self, creds):
        client = wire.DigestClientSession(creds)
        with pytest.raises(wire.ProtocolError):
            client.accept_challenge('Digest realm="r", qop="auth-int", nonce="n"')

    @given(garbage=st.text(max_size=200))
    @settings(max_examples=200)
    def test_fuzzed_headers_never_crash(self, garbage):
        server = wire.DigestAuthenticator(wire.DigestCredentials())
        ok, stale = server.verify("GET", "/a", garbage)
        assert ok is False or ok is True  # no exception is the property

    @given(garbage=st.text(max_size=200))
    @settings(max_examples=100)
    def test_fuzzed_digest_prefixed_headers_never_crash(self, garbage):
        server = wire.DigestAuthenticator(wire.DigestCredentials())
        ok, _ = server.verify("GET", "/a", "Digest " + garbage)
        assert not ok
