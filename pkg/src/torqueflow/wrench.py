"""Simulated connected torque wrench: linear torque ramp with jitter,
peak-hold, LED bar, reach alert, and the transports that carry its protocol.

The device is a black box behind the wire format. The controller talks to it
through a WrenchLink; in-process links still run every message through
encode/decode so the codec is exercised on every simulated session.
"""

from __future__ import annotations

import socket
import threading
import time
from dataclasses import dataclass
from enum import Enum
from random import Random
from typing import NamedTuple

from .protocol import (
    DEFAULT_WRENCH_PORT,
    MsgType,
    ProtocolError,
    WrenchMessage,
    decode,
    encode,
)

LED_SEGMENTS = 10

# Torque falls back to zero at a multiple of the ramp rate once effort stops.
RELEASE_DECAY_FACTOR = 3.0


@dataclass(frozen=True)
class RampConfig:
    ramp_rate: float = 600.0        # cNm/s while the operator applies effort
    noise_frac: float = 0.05        # multiplicative jitter on the ramp rate
    overshoot_max_frac: float = 0.04  # peak may exceed target by up to this fraction
    telemetry_period: int = 50      # ms between TELEMETRY frames

    def __post_init__(self):
        if self.ramp_rate < 0 or self.noise_frac < 0 or self.overshoot_max_frac < 0:
            raise ValueError("ramp parameters must be non-negative")
        if self.telemetry_period < 1:
            raise ValueError("telemetry_period must be >= 1 ms")


class WrenchMode(str, Enum):
    IDLE = "IDLE"            # no target programmed yet
    ARMED = "ARMED"          # target set, no effort
    TIGHTENING = "TIGHTENING"
    REACHED = "REACHED"


class LedState(NamedTuple):
    lit_segments: int
    red: bool


def led_state(applied_cnm: int, target_cnm: int, reached: bool) -> LedState:
    """LED bar: segments fill with applied/target, the bar turns red on reach."""
    if target_cnm < 0:
        raise ValueError("target_cnm must be >= 0")
    if target_cnm == 0:
        return LedState(0, reached)
    lit = min(applied_cnm, target_cnm) * LED_SEGMENTS // target_cnm
    return LedState(int(lit), reached)


@dataclass
class WrenchState:
    mode: WrenchMode = WrenchMode.IDLE
    target_cnm: int = 0
    applied_cnm: int = 0
    peak_cnm: int = 0   # max applied during the current episode; held after release

    @property
    def led(self) -> LedState:
        return led_state(self.applied_cnm, self.target_cnm, self.mode == WrenchMode.REACHED)


class SimulatedWrench:
    """Device-side state machine.

    One "episode" runs from an effort press to the following release (a fresh
    SET_TARGET also closes it). TARGET_REACHED is emitted at most once per
    episode, exactly when the applied torque first reaches the programmed
    target; the peak is retained until the next episode starts.
    """

    def __init__(self, cfg: RampConfig | None = None, rng: Random | None = None):
        self.cfg = cfg or RampConfig()
        self.rng = rng or Random(0)
        self.state = WrenchState()
        self._applied = 0.0          # exact ramp value; state holds the rounded int
        self._t_ms = 0.0
        self._since_telemetry = 0.0
        self._seq = 0
        self._last_inbound_seq = 0
        self._prev_effort = False
        self._reach_sent = False     # within the current episode

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _now_ms(self) -> int:
        return int(self._t_ms)

    # -- inbound protocol ----------------------------------------------------

    def handle_message(self, msg: WrenchMessage) -> list[WrenchMessage]:
        self._last_inbound_seq = msg.seq
        if msg.msg_type == MsgType.SET_TARGET:
            st = self.state
            st.target_cnm = msg.target_cnm
            st.applied_cnm = 0
            st.peak_cnm = 0
            st.mode = WrenchMode.ARMED
            self._applied = 0.0
            self._reach_sent = False
            return [WrenchMessage(MsgType.ACK, self._next_seq(), ref=msg.seq,
                                  ts_ms=self._now_ms())]
        if msg.msg_type == MsgType.PING:
            return [WrenchMessage(MsgType.PONG, self._next_seq(), ref=msg.seq,
                                  ts_ms=self._now_ms())]
        # Telemetry-direction messages arriving at the device are a protocol
        # violation by the peer.
        return [WrenchMessage(MsgType.NACK, self._next_seq(), ref=msg.seq,
                              ts_ms=self._now_ms())]

    def protocol_error_reply(self) -> WrenchMessage:
        """NACK for a frame that failed to decode (no seq to reference)."""
        return WrenchMessage(MsgType.NACK, self._next_seq(),
                             ref=self._last_inbound_seq, ts_ms=self._now_ms())

    # -- physics -------------------------------------------------------------

    def step(self, operator_effort: bool, dt: float) -> list[WrenchMessage]:
        """Advance device time by dt seconds with the given hand effort."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        out: list[WrenchMessage] = []
        st = self.state
        press_edge = operator_effort and not self._prev_effort
        self._prev_effort = operator_effort
        self._t_ms += dt * 1000.0

        if press_edge and st.mode == WrenchMode.IDLE:
            out.append(WrenchMessage(MsgType.NACK, self._next_seq(),
                                     ref=self._last_inbound_seq, ts_ms=self._now_ms()))

        if press_edge and st.mode == WrenchMode.REACHED:
            # Re-pull on an already-reached target: new episode, same target.
            st.mode = WrenchMode.ARMED
            st.peak_cnm = 0
            self._applied = 0.0
            self._reach_sent = False

        if operator_effort and st.mode in (WrenchMode.ARMED, WrenchMode.TIGHTENING):
            st.mode = WrenchMode.TIGHTENING
            rate = self.cfg.ramp_rate
            if self.cfg.noise_frac > 0.0:
                rate *= 1.0 + self.rng.uniform(-self.cfg.noise_frac, self.cfg.noise_frac)
            self._applied += rate * dt
            if self._applied >= st.target_cnm:
                overshoot = 0.0
                if self.cfg.overshoot_max_frac > 0.0:
                    overshoot = self.rng.uniform(0.0, self.cfg.overshoot_max_frac)
                self._applied = st.target_cnm * (1.0 + overshoot)
                st.mode = WrenchMode.REACHED
            st.applied_cnm = int(self._applied)
            st.peak_cnm = max(st.peak_cnm, st.applied_cnm)
            if st.mode == WrenchMode.REACHED and not self._reach_sent:
                self._reach_sent = True
                out.append(WrenchMessage(MsgType.TARGET_REACHED, self._next_seq(),
                                         peak_cnm=st.peak_cnm, ts_ms=self._now_ms()))
        elif not operator_effort and self._applied > 0.0:
            self._applied = max(0.0, self._applied - RELEASE_DECAY_FACTOR
                                * self.cfg.ramp_rate * dt)
            st.applied_cnm = int(self._applied)
            if st.mode == WrenchMode.TIGHTENING:
                st.mode = WrenchMode.ARMED  # episode over, short of target

        if st.mode != WrenchMode.IDLE:
            self._since_telemetry += dt * 1000.0
            if self._since_telemetry >= self.cfg.telemetry_period:
                self._since_telemetry = 0.0
                out.append(WrenchMessage(MsgType.TELEMETRY, self._next_seq(),
                                         applied_cnm=st.applied_cnm, ts_ms=self._now_ms()))
        return out


class LinkDown(ConnectionError):
    """The wrench connection is no longer usable."""


class WrenchLink:
    """Controller-side face of a wrench connection."""

    def send(self, msg: WrenchMessage) -> None:
        raise NotImplementedError

    def poll(self) -> list[WrenchMessage]:
        raise NotImplementedError

    @property
    def alive(self) -> bool:
        raise NotImplementedError

    def close(self) -> None:
        pass


class LoopbackLink(WrenchLink):
    """In-process link to a SimulatedWrench.

    Both directions still pass through encode/decode so every simulated
    session exercises the wire format without touching the network.
    """

    def __init__(self, device: SimulatedWrench):
        self.device = device
        self._inbox: list[WrenchMessage] = []
        self._alive = True

    def _through_wire(self, msg: WrenchMessage) -> WrenchMessage:
        decoded, rest = decode(encode(msg))
        assert decoded is not None and rest == b""
        return decoded

    def send(self, msg: WrenchMessage) -> None:
        if not self._alive:
            raise LinkDown("loopback link closed")
        for reply in self.device.handle_message(self._through_wire(msg)):
            self._inbox.append(self._through_wire(reply))

    def deliver(self, msgs: list[WrenchMessage]) -> None:
        """Queue device-originated messages (telemetry etc.) for the controller."""
        for msg in msgs:
            self._inbox.append(self._through_wire(msg))

    def poll(self) -> list[WrenchMessage]:
        out, self._inbox = self._inbox, []
        return out

    @property
    def alive(self) -> bool:
        return self._alive

    def close(self) -> None:
        self._alive = False


class FlakyLink(LoopbackLink):
    """Loopback variant that goes dead on command; used to test aborts."""

    def kill(self) -> None:
        self._alive = False

    def send(self, msg: WrenchMessage) -> None:
        if not self._alive:
            raise LinkDown("link lost")
        super().send(msg)

    def poll(self) -> list[WrenchMessage]:
        if not self._alive:
            return []
        return super().poll()


class TcpWrenchLink(WrenchLink):
    """Protocol client over a real TCP socket (used by serve mode)."""

    def __init__(self, host: str, port: int, timeout: float = 5.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._sock.settimeout(0.05)
        self._buf = b""
        self._alive = True
        self._lock = threading.Lock()

    def send(self, msg: WrenchMessage) -> None:
        with self._lock:
            if not self._alive:
                raise LinkDown("wrench TCP link closed")
            try:
                self._sock.sendall(encode(msg))
            except OSError as e:
                self._alive = False
                raise LinkDown(f"wrench TCP send failed: {e}") from e

    def poll(self) -> list[WrenchMessage]:
        msgs: list[WrenchMessage] = []
        try:
            while True:
                chunk = self._sock.recv(4096)
                if not chunk:
                    self._alive = False
                    break
                self._buf += chunk
        except socket.timeout:
            pass
        except OSError:
            self._alive = False
        while True:
            msg, self._buf = decode(self._buf)
            if msg is None:
                break
            msgs.append(msg)
        return msgs

    @property
    def alive(self) -> bool:
        return self._alive

    def close(self) -> None:
        self._alive = False
        try:
            self._sock.close()
        except OSError:
            pass


class WrenchDeviceServer:
    """Hosts a SimulatedWrench behind a TCP endpoint.

    One controller connection at a time. The device is stepped on a real-time
    loop; operator effort arrives out of band through set_effort() -- it is
    the simulated hand on the simulated tool, not protocol traffic.
    """

    TICK_S = 0.02

    def __init__(self, cfg: RampConfig | None = None, rng: Random | None = None,
                 host: str = "127.0.0.1", port: int = DEFAULT_WRENCH_PORT):
        self.device = SimulatedWrench(cfg, rng)
        self._listener = socket.create_server((host, port))
        self._listener.settimeout(0.2)
        self.host, self.port = self._listener.getsockname()[:2]
        self._effort = False
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name="wrench-device", daemon=True)

    def start(self) -> "WrenchDeviceServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        self._thread.join(timeout=2.0)
        self._listener.close()

    def set_effort(self, effort: bool) -> None:
        with self._lock:
            self._effort = effort

    @property
    def state(self) -> WrenchState:
        with self._lock:
            st = self.state_unlocked()
        return st

    def state_unlocked(self) -> WrenchState:
        s = self.device.state
        return WrenchState(s.mode, s.target_cnm, s.applied_cnm, s.peak_cnm)

    def _run(self) -> None:
        conn: socket.socket | None = None
        buf = b""
        last = time.monotonic()
        while not self._stop.is_set():
            if conn is None:
                try:
                    conn, _ = self._listener.accept()
                    conn.settimeout(0.0)
                    buf = b""
                except socket.timeout:
                    last = time.monotonic()
                    continue
            now = time.monotonic()
            dt = max(now - last, 1e-4)
            last = now
            outbound: list[WrenchMessage] = []
            try:
                try:
                    while True:
                        chunk = conn.recv(4096)
                        if not chunk:
                            raise ConnectionResetError
                        buf += chunk
                except (BlockingIOError, socket.timeout):
                    pass
                while True:
                    try:
                        msg, buf = decode(buf)
                    except ProtocolError:
                        # Refuse the bad frame but keep the stream alive.
                        nl = buf.find(b"\n")
                        buf = buf[nl + 1:] if nl >= 0 else b""
                        with self._lock:
                            outbound.append(self.device.protocol_error_reply())
                        continue
                    if msg is None:
                        break
                    with self._lock:
                        outbound.extend(self.device.handle_message(msg))
                with self._lock:
                    outbound.extend(self.device.step(self._effort, dt))
                for msg in outbound:
                    conn.sendall(encode(msg))
            except (ConnectionResetError, BrokenPipeError, OSError):
                conn.close()
                conn = None
                continue
            time.sleep(self.TICK_S)
        if conn is not None:
            conn.close()
