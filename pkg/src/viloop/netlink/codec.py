"""Binary wire formats: truth-pose datagrams and the detector RPC.

All integers and floats are little-endian. Layouts:

PoseStreamMessage (76 bytes = 4-byte magic + 72-byte payload):
    magic "VPS1" | sequence u32 | timestamp_us u64 | frame_id u32 |
    position 3xf64 | quaternion (w,x,y,z) 4xf64

DetectRequest (fixed 72-byte header + payload):
    magic "VDR1" | version u16 | flags u16 | sequence u32 | timestamp_us u64 |
    width u16 | height u16 | pixel_format u8 (0 raw RGB8, 1 PNG) | pad u8[3] |
    payload_length u32 | reserved u8[40] | payload

DetectResponse:
    magic "VDA1" | sequence u32 | object_count u8, then per object:
    class u8 | confidence f32 | keypoint_count u8 | keypoints 2xf32 each |
    visibility bitmask u8[ceil(K/8)]

Decoders never read past declared lengths; anything malformed raises
ProtocolError (callers decide whether that drops a datagram or kills a
connection).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from viloop.geometry import Pose, Rotation
from viloop.posepipe.detector import KeypointObservation

POSE_MAGIC = b"VPS1"
REQUEST_MAGIC = b"VDR1"
RESPONSE_MAGIC = b"VDA1"
PROTOCOL_VERSION = 1

_POSE_STRUCT = struct.Struct("<4sIQI3d4d")
_REQUEST_HEAD = struct.Struct("<4sHHIQHHB3xI40s")
POSE_MESSAGE_SIZE = _POSE_STRUCT.size          # 76
REQUEST_HEADER_SIZE = _REQUEST_HEAD.size       # 72

PIXEL_FORMAT_RGB8 = 0
PIXEL_FORMAT_PNG = 1


class ProtocolError(ValueError):
    """Malformed or inconsistent wire data."""


@dataclass(frozen=True)
class PoseStreamMessage:
    sequence: int
    timestamp_us: int
    frame_id: int
    pose: Pose


def encode_pose_stream(msg: PoseStreamMessage) -> bytes:
    p = msg.pose.position
    q = msg.pose.rotation.quat
    return _POSE_STRUCT.pack(POSE_MAGIC, msg.sequence & 0xFFFFFFFF,
                             msg.timestamp_us, msg.frame_id & 0xFFFFFFFF,
                             p[0], p[1], p[2], q[0], q[1], q[2], q[3])


def decode_pose_stream(data: bytes) -> PoseStreamMessage:
    if len(data) != POSE_MESSAGE_SIZE:
        raise ProtocolError(f"pose message must be {POSE_MESSAGE_SIZE} bytes, "
                            f"got {len(data)}")
    magic, seq, ts, frame_id, px, py, pz, qw, qx, qy, qz = _POSE_STRUCT.unpack(data)
    if magic != POSE_MAGIC:
        raise ProtocolError(f"bad pose magic {magic!r}")
    vals = (px, py, pz, qw, qx, qy, qz)
    if not all(math.isfinite(v) for v in vals):
        raise ProtocolError("non-finite pose fields")
    norm = math.sqrt(qw * qw + qx * qx + qy * qy + qz * qz)
    if not 0.99 <= norm <= 1.01:
        raise ProtocolError(f"quaternion norm {norm:.4f} outside [0.99, 1.01]")
    pose = Pose(np.array([px, py, pz]), Rotation.from_quat([qw, qx, qy, qz]))
    return PoseStreamMessage(seq, ts, frame_id, pose)


@dataclass(frozen=True)
class DetectRequest:
    sequence: int
    timestamp_us: int
    width: int
    height: int
    pixel_format: int
    payload: bytes


def encode_detect_request(req: DetectRequest) -> bytes:
    head = _REQUEST_HEAD.pack(REQUEST_MAGIC, PROTOCOL_VERSION, 0,
                              req.sequence & 0xFFFFFFFF, req.timestamp_us,
                              req.width, req.height, req.pixel_format,
                              len(req.payload), b"\x00" * 40)
    return head + req.payload


def decode_detect_request(data: bytes) -> DetectRequest:
    if len(data) < REQUEST_HEADER_SIZE:
        raise ProtocolError("detect request shorter than its header")
    magic, version, _flags, seq, ts, width, height, fmt, plen, _rsvd = \
        _REQUEST_HEAD.unpack_from(data)
    if magic != REQUEST_MAGIC:
        raise ProtocolError(f"bad request magic {magic!r}")
    if version != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported request version {version}")
    if fmt not in (PIXEL_FORMAT_RGB8, PIXEL_FORMAT_PNG):
        raise ProtocolError(f"unknown pixel format {fmt}")
    if len(data) != REQUEST_HEADER_SIZE + plen:
        raise ProtocolError("request payload length mismatch")
    payload = data[REQUEST_HEADER_SIZE:]
    if fmt == PIXEL_FORMAT_RGB8 and plen != width * height * 3:
        raise ProtocolError("raw payload size does not match dimensions")
    return DetectRequest(seq, ts, width, height, fmt, payload)


def encode_detect_response(sequence: int,
                           observations: list[KeypointObservation]) -> bytes:
    if len(observations) > 255:
        raise ProtocolError("too many objects for a u8 count")
    out = bytearray(RESPONSE_MAGIC)
    out += struct.pack("<IB", sequence & 0xFFFFFFFF, len(observations))
    for obs in observations:
        k = len(obs.keypoints)
        if k > 255:
            raise ProtocolError("too many keypoints for a u8 count")
        out += struct.pack("<BfB", obs.class_id & 0xFF,
                           float(obs.confidence), k)
        out += np.asarray(obs.keypoints, dtype="<f4").tobytes()
        out += np.packbits(obs.visibility, bitorder="little").tobytes()
    return bytes(out)


def decode_detect_response(data: bytes, expect_sequence: int | None = None
                           ) -> tuple[int, list[KeypointObservation]]:
    if len(data) < 9:
        raise ProtocolError("detect response shorter than its header")
    if data[:4] != RESPONSE_MAGIC:
        raise ProtocolError(f"bad response magic {data[:4]!r}")
    seq, count = struct.unpack_from("<IB", data, 4)
    if expect_sequence is not None and seq != expect_sequence:
        raise ProtocolError(f"sequence echo {seq} != request {expect_sequence}")
    offset = 9
    observations = []
    for _ in range(count):
        if offset + 6 > len(data):
            raise ProtocolError("truncated object header")
        class_id, confidence, k = struct.unpack_from("<BfB", data, offset)
        offset += 6
        kp_bytes = 8 * k
        vis_bytes = (k + 7) // 8
        if offset + kp_bytes + vis_bytes > len(data):
            raise ProtocolError("truncated keypoint block")
        kps = np.frombuffer(data, dtype="<f4", count=2 * k,
                            offset=offset).reshape(k, 2).astype(float)
        offset += kp_bytes
        bits = np.frombuffer(data, dtype=np.uint8, count=vis_bytes, offset=offset)
        offset += vis_bytes
        vis = np.unpackbits(bits, bitorder="little")[:k].astype(bool)
        if not np.all(np.isfinite(kps)) or not math.isfinite(confidence):
            raise ProtocolError("non-finite response fields")
        observations.append(KeypointObservation(int(class_id), float(confidence),
                                                kps, vis))
    if offset != len(data):
        raise ProtocolError(f"{len(data) - offset} trailing bytes in response")
    return seq, observations
