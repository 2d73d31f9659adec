import pytest
from hypothesis import given, settings, strategies as st

from torqueflow.protocol import (
    MsgType,
    ProtocolError,
    WrenchMessage,
    decode,
    encode,
    validate_message,
)


def test_encode_set_target_golden_bytes():
    msg = WrenchMessage(MsgType.SET_TARGET, seq=1, target_cnm=300)
    assert encode(msg) == b'{"t":"SET_TARGET","seq":1,"target_cnm":300}\n'


def test_encode_ping_golden_bytes():
    assert encode(WrenchMessage(MsgType.PING, seq=0)) == b'{"t":"PING","seq":0}\n'


def test_encode_key_order_is_fixed():
    msg = WrenchMessage(MsgType.TELEMETRY, seq=7, applied_cnm=120, ts_ms=99)
    assert encode(msg) == b'{"t":"TELEMETRY","seq":7,"applied_cnm":120,"ts_ms":99}\n'


def test_decode_set_target():
    msg, rest = decode(b'{"t":"SET_TARGET","seq":2,"target_cnm":300}\n')
    assert msg == WrenchMessage(MsgType.SET_TARGET, seq=2, target_cnm=300)
    assert rest == b""


def test_decode_rejects_out_of_range_target():
    with pytest.raises(ProtocolError, match="target_cnm out of range"):
        decode(b'{"t":"SET_TARGET","seq":2,"target_cnm":1200}\n')
    with pytest.raises(ProtocolError, match="target_cnm out of range"):
        decode(b'{"t":"SET_TARGET","seq":2,"target_cnm":99}\n')


def test_encode_refuses_out_of_range_target():
    with pytest.raises(ProtocolError):
        encode(WrenchMessage(MsgType.SET_TARGET, seq=1, target_cnm=1200))


def test_truncated_frame_leaves_stream_untouched():
    buf = b'{"t":"PING","seq":1}'
    msg, rest = decode(buf)
    assert msg is None
    assert rest == buf


def test_decode_consumes_exactly_one_frame():
    buf = encode(WrenchMessage(MsgType.PING, 1)) + encode(WrenchMessage(MsgType.PONG, 2, ref=1))
    m1, rest = decode(buf)
    assert m1.msg_type == MsgType.PING
    m2, rest = decode(rest)
    assert m2.msg_type == MsgType.PONG and m2.ref == 1
    assert rest == b""


def test_unknown_msg_type_rejected():
    with pytest.raises(ProtocolError, match="unknown msg_type"):
        decode(b'{"t":"EXPLODE","seq":1}\n')


def test_unknown_keys_rejected():
    with pytest.raises(ProtocolError, match="unknown frame keys"):
        decode(b'{"t":"PING","seq":1,"x":5}\n')


def test_missing_required_field_rejected():
    with pytest.raises(ProtocolError, match="requires"):
        decode(b'{"t":"ACK","seq":1}\n')
    with pytest.raises(ProtocolError, match="requires"):
        decode(b'{"t":"TELEMETRY","seq":1,"applied_cnm":10}\n')


def test_field_not_allowed_for_type_rejected():
    with pytest.raises(ProtocolError, match="does not carry"):
        encode(WrenchMessage(MsgType.PING, 1, target_cnm=300))


def test_bool_is_not_an_integer():
    with pytest.raises(ProtocolError):
        decode(b'{"t":"PING","seq":true}\n')


def test_malformed_json_reports_offset():
    with pytest.raises(ProtocolError) as exc:
        decode(b'{"t":"PING",~\n')
    assert exc.value.offset > 0


def test_seq_range_checked():
    with pytest.raises(ProtocolError):
        validate_message(WrenchMessage(MsgType.PING, seq=2**32))
    with pytest.raises(ProtocolError):
        validate_message(WrenchMessage(MsgType.PING, seq=-1))


# -- property tests -------------------------------------------------------

_SEQ = st.integers(0, 2**32 - 1)
_TS = st.integers(0, 2**40)
_TORQUE = st.integers(100, 1000)
_CNM = st.integers(0, 2000)
_OPT_TS = st.one_of(st.none(), _TS)


def valid_messages() -> st.SearchStrategy[WrenchMessage]:
    return st.one_of(
        st.builds(lambda s, t, ts: WrenchMessage(MsgType.SET_TARGET, s, target_cnm=t, ts_ms=ts),
                  _SEQ, _TORQUE, _OPT_TS),
        st.builds(lambda s, r, ts: WrenchMessage(MsgType.ACK, s, ref=r, ts_ms=ts),
                  _SEQ, _SEQ, _OPT_TS),
        st.builds(lambda s, r, ts: WrenchMessage(MsgType.NACK, s, ref=r, ts_ms=ts),
                  _SEQ, _SEQ, _OPT_TS),
        st.builds(lambda s, a, ts: WrenchMessage(MsgType.TELEMETRY, s, applied_cnm=a, ts_ms=ts),
                  _SEQ, _CNM, _TS),
        st.builds(lambda s, p, ts: WrenchMessage(MsgType.TARGET_REACHED, s, peak_cnm=p, ts_ms=ts),
                  _SEQ, _CNM, _TS),
        st.builds(lambda s, ts: WrenchMessage(MsgType.PING, s, ts_ms=ts), _SEQ, _OPT_TS),
        st.builds(lambda s, r, ts: WrenchMessage(MsgType.PONG, s, ref=r, ts_ms=ts),
                  _SEQ, st.one_of(st.none(), _SEQ), _OPT_TS),
    )


@given(valid_messages())
@settings(max_examples=300)
def test_roundtrip_property(msg):
    decoded, rest = decode(encode(msg))
    assert decoded == msg
    assert rest == b""


@given(st.binary(max_size=120))
@settings(max_examples=400)
def test_codec_totality_no_silent_acceptance(data):
    """Any byte sequence either yields a validated message, waits for more
    bytes, or raises ProtocolError."""
    buf = data + b"\n"
    try:
        msg, _rest = decode(buf)
    except ProtocolError:
        return
    if msg is not None:
        validate_message(msg)


@given(st.lists(valid_messages(), min_size=1, max_size=10),
       st.integers(1, 50))
def test_streaming_reassembly(msgs, chunk):
    stream = b"".join(encode(m) for m in msgs)
    buf = b""
    out = []
    for i in range(0, len(stream), chunk):
        buf += stream[i:i + chunk]
        while True:
            msg, buf = decode(buf)
            if msg is None:
                break
            out.append(msg)
    assert out == msgs
