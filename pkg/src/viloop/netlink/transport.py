"""Sockets for the wire protocols: UDP pose stream, TCP detector RPC.

The pose stream is datagram-based and loss-tolerant: the receiver keeps only
the newest sequence number and silently drops stale or malformed datagrams
(counted). The detector RPC runs over a length-prefixed TCP stream, one
request in flight per connection; a timeout is reported as an empty result
(a missed fix), a parse failure as a ProtocolError.
"""

from __future__ import annotations

import io
import logging
import socket
import struct
import threading

import numpy as np

from viloop.geometry import StateVector
from viloop.netlink.codec import (
    PIXEL_FORMAT_PNG,
    PIXEL_FORMAT_RGB8,
    DetectRequest,
    PoseStreamMessage,
    ProtocolError,
    decode_detect_request,
    decode_detect_response,
    decode_pose_stream,
    encode_detect_request,
    encode_detect_response,
    encode_pose_stream,
)
from viloop.posepipe.detector import KeypointObservation
from viloop.splat.raster import Frame

log = logging.getLogger(__name__)

_LEN_PREFIX = struct.Struct("<I")
MAX_RPC_BODY = 64 * 1024 * 1024


class PoseStreamSender:
    """Emits truth-pose datagrams at whatever cadence the caller drives."""

    def __init__(self, endpoint: tuple[str, int]):
        self.endpoint = endpoint
        self.sequence = 0
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)

    def send_state(self, state: StateVector, frame_id: int = 0) -> PoseStreamMessage:
        msg = PoseStreamMessage(self.sequence,
                                int(round(state.timestamp * 1e6)),
                                frame_id, state.pose)
        self._sock.sendto(encode_pose_stream(msg), self.endpoint)
        self.sequence += 1
        return msg

    def close(self):
        self._sock.close()


class PoseStreamReceiver:
    """Latest-wins datagram receiver; stale and malformed input is counted."""

    def __init__(self, bind: tuple[str, int] = ("127.0.0.1", 0)):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind(bind)
        self.port = self._sock.getsockname()[1]
        self.last_sequence: int | None = None
        self.dropped_stale = 0
        self.dropped_malformed = 0

    def recv(self, timeout: float = 0.1) -> PoseStreamMessage | None:
        self._sock.settimeout(timeout)
        try:
            data, _ = self._sock.recvfrom(4096)
        except socket.timeout:
            return None
        return self.accept(data)

    def accept(self, data: bytes) -> PoseStreamMessage | None:
        """Protocol logic shared by the socket path and in-process tests."""
        try:
            msg = decode_pose_stream(data)
        except ProtocolError as exc:
            self.dropped_malformed += 1
            log.debug("pose datagram rejected: %s", exc)
            return None
        if self.last_sequence is not None and msg.sequence <= self.last_sequence:
            self.dropped_stale += 1
            return None
        self.last_sequence = msg.sequence
        return msg

    def close(self):
        self._sock.close()


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed mid-message")
        buf += chunk
    return bytes(buf)


def _send_framed(sock: socket.socket, body: bytes) -> None:
    sock.sendall(_LEN_PREFIX.pack(len(body)) + body)


def _recv_framed(sock: socket.socket) -> bytes:
    (length,) = _LEN_PREFIX.unpack(_recv_exact(sock, 4))
    if length > MAX_RPC_BODY:
        raise ProtocolError(f"framed body of {length} bytes exceeds limit")
    return _recv_exact(sock, length)


def frame_to_request(frame: Frame, sequence: int,
                     pixel_format: int = PIXEL_FORMAT_RGB8) -> DetectRequest:
    if pixel_format == PIXEL_FORMAT_RGB8:
        payload = frame.pixels.tobytes()
    elif pixel_format == PIXEL_FORMAT_PNG:
        buf = io.BytesIO()
        frame.save_png(buf)
        payload = buf.getvalue()
    else:
        raise ProtocolError(f"unknown pixel format {pixel_format}")
    return DetectRequest(sequence, int(round(frame.timestamp * 1e6)),
                         frame.width, frame.height, pixel_format, payload)


def request_to_frame(req: DetectRequest) -> Frame:
    if req.pixel_format == PIXEL_FORMAT_RGB8:
        pixels = np.frombuffer(req.payload, dtype=np.uint8).reshape(
            req.height, req.width, 3).copy()
    else:
        from PIL import Image
        pixels = np.asarray(Image.open(io.BytesIO(req.payload)).convert("RGB"))
        if pixels.shape != (req.height, req.width, 3):
            raise ProtocolError("decoded image does not match header dimensions")
    return Frame(req.width, req.height, pixels, req.timestamp_us / 1e6)


def detect_rpc_call(endpoint: tuple[str, int], frame: Frame,
                    timeout: float = 0.5, pixel_format: int = PIXEL_FORMAT_RGB8,
                    sequence: int = 0) -> list[KeypointObservation]:
    """One-shot RPC: connect, send the frame, parse the observations.

    Timeout or refused connection yields an empty result (missed fix).
    """
    req = frame_to_request(frame, sequence, pixel_format)
    try:
        with socket.create_connection(endpoint, timeout=timeout) as sock:
            sock.settimeout(timeout)
            _send_framed(sock, encode_detect_request(req))
            body = _recv_framed(sock)
    except (socket.timeout, ConnectionError, OSError) as exc:
        log.warning("detector rpc to %s failed: %s", endpoint, exc)
        return []
    try:
        _, observations = decode_detect_response(body, expect_sequence=sequence)
    except ProtocolError:
        log.error("malformed detector response (%d bytes): %s",
                  len(body), body[:64].hex())
        raise
    return observations


class DetectorServer:
    """Serves a detect callable over the RPC protocol on a background thread."""

    def __init__(self, handler, bind: tuple[str, int] = ("127.0.0.1", 0)):
        self.handler = handler
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind(bind)
        self._sock.listen(4)
        self.port = self._sock.getsockname()[1]
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self.requests_served = 0

    def start(self) -> "DetectorServer":
        self._thread.start()
        return self

    def _serve(self):
        self._sock.settimeout(0.1)
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            with conn:
                try:
                    conn.settimeout(2.0)
                    body = _recv_framed(conn)
                    req = decode_detect_request(body)
                    frame = request_to_frame(req)
                    obs = self.handler(frame)
                    _send_framed(conn, encode_detect_response(req.sequence, obs))
                    self.requests_served += 1
                except (ProtocolError, ConnectionError, OSError) as exc:
                    log.debug("detector server dropped a connection: %s", exc)

    def close(self):
        self._stop.set()
        self._sock.close()
        if self._thread.is_alive():
            self._thread.join(timeout=2.0)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.close()
