import math
import struct
import time

import numpy as np
import pytest

from viloop.geometry import Pose, Rotation, StateVector
from viloop.netlink.codec import (
    PIXEL_FORMAT_PNG,
    PIXEL_FORMAT_RGB8,
    POSE_MESSAGE_SIZE,
    REQUEST_HEADER_SIZE,
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
from viloop.netlink.replay import MessageLogWriter, replay_log
from viloop.netlink.transport import (
    DetectorServer,
    PoseStreamReceiver,
    PoseStreamSender,
    detect_rpc_call,
    frame_to_request,
    request_to_frame,
)
from viloop.posepipe.detector import KeypointObservation
from viloop.splat.raster import Frame


def golden_pose_bytes():
    """Assemble the expected wire bytes field-by-field, independent of the
    encoder under test."""
    out = b"VPS1"
    out += struct.pack("<I", 7)                    # sequence
    out += struct.pack("<Q", 1_250_000)            # timestamp_us
    out += struct.pack("<I", 3)                    # frame_id
    out += struct.pack("<3d", 1.5, -2.25, 0.125)   # position
    out += struct.pack("<4d", 1.0, 0.0, 0.0, 0.0)  # quaternion wxyz
    return out


class TestPoseStreamCodec:
    def test_message_size(self):
        assert POSE_MESSAGE_SIZE == 76  # 4-byte magic + 72-byte payload

    def test_golden_vector(self):
        msg = PoseStreamMessage(7, 1_250_000, 3,
                                Pose(np.array([1.5, -2.25, 0.125])))
        assert encode_pose_stream(msg) == golden_pose_bytes()

    def test_decode_encode_identity(self):
        raw = golden_pose_bytes()
        assert encode_pose_stream(decode_pose_stream(raw)) == raw

    def test_identity_pose_quaternion(self):
        msg = PoseStreamMessage(0, 0, 0, Pose.identity())
        raw = encode_pose_stream(msg)
        qw, qx, qy, qz = struct.unpack_from("<4d", raw, 44)
        assert (qw, qx, qy, qz) == (1.0, 0.0, 0.0, 0.0)

    def test_roundtrip_random(self):
        rng = np.random.default_rng(0)
        for i in range(50):
            pose = Pose(rng.uniform(-20, 20, 3), Rotation.exp(rng.normal(0, 1, 3)))
            msg = PoseStreamMessage(i, int(rng.integers(0, 2 ** 48)), i, pose)
            back = decode_pose_stream(encode_pose_stream(msg))
            assert back.sequence == msg.sequence
            assert back.timestamp_us == msg.timestamp_us
            assert np.allclose(back.pose.position, pose.position)
            assert back.pose.rotation.allclose(pose.rotation, atol=1e-12)

    def test_bad_magic_rejected(self):
        raw = bytearray(golden_pose_bytes())
        raw[:4] = b"XXXX"
        with pytest.raises(ProtocolError, match="magic"):
            decode_pose_stream(bytes(raw))

    def test_bad_length_rejected(self):
        with pytest.raises(ProtocolError, match="bytes"):
            decode_pose_stream(golden_pose_bytes()[:-1])

    def test_unnormalized_quaternion_rejected(self):
        raw = bytearray(golden_pose_bytes())
        struct.pack_into("<4d", raw, 44, 2.0, 0.0, 0.0, 0.0)
        with pytest.raises(ProtocolError, match="norm"):
            decode_pose_stream(bytes(raw))

    def test_slightly_off_norm_renormalized(self):
        raw = bytearray(golden_pose_bytes())
        struct.pack_into("<4d", raw, 44, 1.005, 0.0, 0.0, 0.0)
        msg = decode_pose_stream(bytes(raw))
        assert np.linalg.norm(msg.pose.rotation.quat) == pytest.approx(1.0)


class TestDetectCodec:
    def test_header_size(self):
        assert REQUEST_HEADER_SIZE == 72

    def test_full_frame_request_size(self):
        frame = Frame(640, 640, np.zeros((640, 640, 3), dtype=np.uint8))
        raw = encode_detect_request(frame_to_request(frame, 5))
        assert len(raw) == 72 + 1_228_800

    def test_request_roundtrip(self):
        rng = np.random.default_rng(1)
        pixels = rng.integers(0, 256, (48, 64, 3), dtype=np.uint8)
        frame = Frame(64, 48, pixels, timestamp=2.5)
        req = frame_to_request(frame, 9)
        back = decode_detect_request(encode_detect_request(req))
        assert back.sequence == 9
        assert back.timestamp_us == 2_500_000
        assert (back.width, back.height) == (64, 48)
        restored = request_to_frame(back)
        assert np.array_equal(restored.pixels, pixels)

    def test_png_request_roundtrip(self):
        pixels = np.zeros((32, 32, 3), dtype=np.uint8)
        pixels[8:24, 8:24] = (200, 40, 90)
        frame = Frame(32, 32, pixels)
        req = frame_to_request(frame, 1, pixel_format=PIXEL_FORMAT_PNG)
        assert len(req.payload) < pixels.nbytes  # actually compressed
        restored = request_to_frame(decode_detect_request(encode_detect_request(req)))
        assert np.array_equal(restored.pixels, pixels)

    def test_payload_length_mismatch_rejected(self):
        frame = Frame(8, 8, np.zeros((8, 8, 3), dtype=np.uint8))
        raw = bytearray(encode_detect_request(frame_to_request(frame, 0)))
        with pytest.raises(ProtocolError):
            decode_detect_request(bytes(raw[:-10]))

    def test_response_roundtrip(self):
        rng = np.random.default_rng(3)
        obs = [
            KeypointObservation(2, 0.95, rng.uniform(0, 640, (8, 2)),
                                np.array([1, 1, 0, 1, 1, 1, 0, 1], dtype=bool)),
            KeypointObservation(5, 0.5, rng.uniform(0, 640, (3, 2)),
                                np.ones(3, dtype=bool)),
        ]
        raw = encode_detect_response(77, obs)
        seq, back = decode_detect_response(raw, expect_sequence=77)
        assert seq == 77
        assert len(back) == 2
        for a, b in zip(obs, back):
            assert a.class_id == b.class_id
            assert b.confidence == pytest.approx(a.confidence, abs=1e-6)
            assert np.allclose(a.keypoints, b.keypoints, atol=1e-4)
            assert np.array_equal(a.visibility, b.visibility)

    def test_sequence_echo_checked(self):
        raw = encode_detect_response(12, [])
        with pytest.raises(ProtocolError, match="echo"):
            decode_detect_response(raw, expect_sequence=13)

    def test_truncated_response_rejected(self):
        obs = [KeypointObservation(0, 1.0, np.zeros((4, 2)), np.ones(4, dtype=bool))]
        raw = encode_detect_response(0, obs)
        for cut in (3, 8, 12, len(raw) - 1):
            with pytest.raises(ProtocolError):
                decode_detect_response(raw[:cut])

    def test_trailing_bytes_rejected(self):
        raw = encode_detect_response(0, []) + b"\x00"
        with pytest.raises(ProtocolError, match="trailing"):
            decode_detect_response(raw)


class TestFuzz:
    def test_random_bytes_never_crash(self):
        # module-scale fuzz; the acceptance suite runs the million-case pass
        rng = np.random.default_rng(4)
        golden = golden_pose_bytes()
        rejected = 0
        for _ in range(20_000):
            n = int(rng.integers(0, 120))
            blob = rng.integers(0, 256, n, dtype=np.uint8).tobytes()
            if rng.uniform() < 0.5:
                # mutated golden message: still must never crash
                cut = int(rng.integers(0, len(golden) + 1))
                blob = golden[:cut] + blob
            try:
                decode_pose_stream(blob)
            except ProtocolError:
                rejected += 1
        assert rejected > 0

    def test_mutated_responses_never_crash(self):
        rng = np.random.default_rng(5)
        obs = [KeypointObservation(1, 0.9, rng.uniform(0, 640, (8, 2)),
                                   np.ones(8, dtype=bool))]
        base = bytearray(encode_detect_response(3, obs))
        for _ in range(20_000):
            blob = bytearray(base)
            for _ in range(int(rng.integers(1, 6))):
                blob[int(rng.integers(0, len(blob)))] = int(rng.integers(0, 256))
            cut = int(rng.integers(1, len(blob) + 1))
            try:
                decode_detect_response(bytes(blob[:cut]))
            except ProtocolError:
                pass


class TestPoseStreamSockets:
    def test_udp_roundtrip_and_stale_drop(self):
        rx = PoseStreamReceiver()
        tx = PoseStreamSender(("127.0.0.1", rx.port))
        try:
            state = StateVector(Pose(np.array([1.0, 2.0, 3.0])), np.zeros(3),
                                np.zeros(3), 0.5)
            tx.send_state(state, frame_id=4)
            msg = rx.recv(timeout=2.0)
            assert msg is not None
            assert msg.frame_id == 4
            assert np.allclose(msg.pose.position, [1, 2, 3])

            # a datagram with an older sequence must be dropped
            stale = PoseStreamMessage(0, 0, 0, Pose.identity())
            assert rx.accept(encode_pose_stream(stale)) is None
            assert rx.dropped_stale == 1
        finally:
            tx.close()
            rx.close()

    def test_malformed_datagram_counted(self):
        rx = PoseStreamReceiver()
        try:
            assert rx.accept(b"garbage") is None
            assert rx.dropped_malformed == 1
        finally:
            rx.close()


class TestDetectorRpc:
    def test_loopback_echo(self):
        canned = [KeypointObservation(3, 0.92, np.array([[1.0, 2.0], [3.0, 4.0],
                                                         [5.0, 6.0], [7.0, 8.0]]),
                                      np.ones(4, dtype=bool))]
        with DetectorServer(lambda frame: canned) as server:
            frame = Frame(16, 16, np.zeros((16, 16, 3), dtype=np.uint8),
                          timestamp=1.0)
            obs = detect_rpc_call(("127.0.0.1", server.port), frame, timeout=2.0)
        assert len(obs) == 1
        assert obs[0].class_id == 3
        assert np.allclose(obs[0].keypoints, canned[0].keypoints)

    def test_endpoint_down_returns_empty(self):
        frame = Frame(8, 8, np.zeros((8, 8, 3), dtype=np.uint8))
        t0 = time.perf_counter()
        obs = detect_rpc_call(("127.0.0.1", 1), frame, timeout=0.5)
        assert obs == []
        assert time.perf_counter() - t0 < 2.0

    def test_full_frame_under_100ms_on_loopback(self):
        with DetectorServer(lambda frame: []) as server:
            frame = Frame(640, 640, np.zeros((640, 640, 3), dtype=np.uint8))
            detect_rpc_call(("127.0.0.1", server.port), frame, timeout=2.0)  # warm
            t0 = perf = time.perf_counter()
            detect_rpc_call(("127.0.0.1", server.port), frame, timeout=2.0)
            assert time.perf_counter() - t0 < 0.1

    def test_malformed_response_raises(self):
        import socket as socketlib
        import struct as structlib
        import threading

        srv = socketlib.socket(socketlib.AF_INET, socketlib.SOCK_STREAM)
        srv.bind(("127.0.0.1", 0))
        srv.listen(1)
        port = srv.getsockname()[1]

        def bad_server():
            conn, _ = srv.accept()
            with conn:
                body = b"JUNKJUNK"
                conn.recv(65536)
                conn.sendall(structlib.pack("<I", len(body)) + body)

        thread = threading.Thread(target=bad_server, daemon=True)
        thread.start()
        frame = Frame(8, 8, np.zeros((8, 8, 3), dtype=np.uint8))
        try:
            with pytest.raises(ProtocolError):
                detect_rpc_call(("127.0.0.1", port), frame, timeout=2.0)
        finally:
            srv.close()


class TestReplayLog:
    def test_record_then_replay_identical(self, tmp_path):
        rng = np.random.default_rng(6)
        path = tmp_path / "stream.vlog"
        messages = []
        with MessageLogWriter(path) as w:
            for i in range(100):
                pose = Pose(rng.uniform(-5, 5, 3), Rotation.exp(rng.normal(0, 1, 3)))
                raw = encode_pose_stream(PoseStreamMessage(i, i * 5000, i, pose))
                messages.append((i * 5000, raw))
                w.write(i * 5000, raw)
        stream = replay_log(path)
        assert stream.corrupt_skipped == 0
        assert list(stream) == messages

    def test_empty_log(self, tmp_path):
        path = tmp_path / "empty.vlog"
        with MessageLogWriter(path):
            pass
        stream = replay_log(path)
        assert list(stream) == []

    def test_corrupt_record_skipped(self, tmp_path):
        path = tmp_path / "bad.vlog"
        with MessageLogWriter(path) as w:
            w.write(1000, b"first")
            w.write(2000, b"second")
            w.write(3000, b"third")
        data = bytearray(path.read_bytes())
        # clobber the second record's sync marker
        offset = 8 + 14 + 5
        data[offset] = 0x00
        data[offset + 1] = 0x00
        path.write_bytes(bytes(data))
        stream = replay_log(path)
        assert stream.corrupt_skipped >= 1
        payloads = [p for _, p in stream]
        assert b"first" in payloads
        assert b"third" in payloads

    def test_timed_replay_preserves_gaps(self, tmp_path):
        path = tmp_path / "timed.vlog"
        gaps_us = [0, 20_000, 40_000, 10_000]
        t = 0
        with MessageLogWriter(path) as w:
            for i, gap in enumerate(gaps_us):
                t += gap
                w.write(t, bytes([i]))
        slept = []
        list(replay_log(path).timed(sleep=slept.append))
        assert np.allclose(slept, [0.020, 0.040, 0.010], rtol=1e-9)
