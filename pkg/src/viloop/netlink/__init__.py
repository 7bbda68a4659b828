"""Wire protocols: pose stream datagrams, detector RPC, message-log replay."""

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
from viloop.netlink.replay import MessageLogWriter, ReplayStream, replay_log
from viloop.netlink.transport import (
    DetectorServer,
    PoseStreamReceiver,
    PoseStreamSender,
    detect_rpc_call,
    frame_to_request,
    request_to_frame,
)

__all__ = [
    "DetectRequest",
    "DetectorServer",
    "MessageLogWriter",
    "PIXEL_FORMAT_PNG",
    "PIXEL_FORMAT_RGB8",
    "POSE_MESSAGE_SIZE",
    "PoseStreamMessage",
    "PoseStreamReceiver",
    "PoseStreamSender",
    "ProtocolError",
    "REQUEST_HEADER_SIZE",
    "ReplayStream",
    "decode_detect_request",
    "decode_detect_response",
    "decode_pose_stream",
    "detect_rpc_call",
    "encode_detect_request",
    "encode_detect_response",
    "encode_pose_stream",
    "frame_to_request",
    "replay_log",
    "request_to_frame",
]
