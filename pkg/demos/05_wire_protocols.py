"""The wire protocols on loopback sockets: pose stream, detector RPC, replay.

A UDP sender streams truth poses to a latest-wins receiver; a detector server
answers frame RPCs with canned keypoints; every datagram is recorded to a log
and replayed byte-identically.
"""

import tempfile
from pathlib import Path

import numpy as np

from viloop.geometry import Pose, Rotation, StateVector
from viloop.netlink import (
    DetectorServer,
    MessageLogWriter,
    PoseStreamReceiver,
    PoseStreamSender,
    detect_rpc_call,
    encode_pose_stream,
    replay_log,
)
from viloop.posepipe.detector import KeypointObservation
from viloop.splat.raster import Frame

# -- pose stream over UDP ----------------------------------------------------
rx = PoseStreamReceiver()
tx = PoseStreamSender(("127.0.0.1", rx.port))
log_path = Path(tempfile.mkdtemp()) / "pose.vlog"
rng = np.random.default_rng(3)
received = 0
with MessageLogWriter(log_path) as log:
    for k in range(200):
        state = StateVector(
            Pose(np.array([0.01 * k, 0.0, 2.0]), Rotation.exp([0, 0, 0.002 * k])),
            np.zeros(3), np.zeros(3), k * 0.005)
        msg = tx.send_state(state, frame_id=k)
        log.write(msg.timestamp_us, encode_pose_stream(msg))
        if rx.recv(timeout=0.5) is not None:
            received += 1
print(f"pose stream: {received}/200 datagrams received "
      f"(stale dropped: {rx.dropped_stale}, malformed: {rx.dropped_malformed})")
tx.close()
rx.close()

# -- detector RPC over TCP ----------------------------------------------------
canned = [KeypointObservation(2, 0.93, np.array(
    [[100.0, 200.0], [150.0, 210.0], [120.0, 260.0], [170.0, 250.0]]),
    np.ones(4, dtype=bool))]
with DetectorServer(lambda frame: canned) as server:
    frame = Frame(640, 640, np.zeros((640, 640, 3), dtype=np.uint8), timestamp=1.0)
    obs = detect_rpc_call(("127.0.0.1", server.port), frame, timeout=2.0)
print(f"detector rpc: sent a 640x640 frame, got {len(obs)} observation(s), "
      f"class {obs[0].class_id} at confidence {obs[0].confidence:.2f}")

# -- record / replay ----------------------------------------------------------
stream = replay_log(log_path)
print(f"replay: {len(stream.records)} records, {stream.corrupt_skipped} corrupt; "
      f"gaps preserved in timed mode (try stream.timed())")
