"""Vehicle-to-edge wire protocol: framing, payload codecs, server, client.

Frame layout (all integers big-endian):

    magic "EODF" | version 0x01 | kind (1 byte) | body length (u32) | body

Request body:

    frame_id u64 | encoding u8 (0 RAW, 1 MASKED) | width u32 | height u32
    | channels u8 | payload

A RAW payload is the row-major sample bytes.  A MASKED payload is the
mask run-length encoding -- LEB128 varint run lengths alternating
zero-run / one-run, starting with a zero-run that may be 0, summing to
exactly width*height -- followed by the retained samples in row-major
order.

Response body:

    frame_id u64 | count u32 | count * (class_id u8 | confidence u16
    fixed-point /65535 | left f32 | top f32 | right f32 | bottom f32)
"""

from __future__ import annotations

import logging
import socket
import socketserver
import struct
import time
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Callable, Sequence

import numpy as np

from .detector import (
    CLASS_IDS,
    CLASS_NAMES,
    BoundingBox,
    Detection,
    OracleParams,
    load_kitti_labels,
    oracle_detect,
    replay_detect,
)
from .imageio import Image, Mask
from .saliency import MaskedImage

log = logging.getLogger(__name__)

__all__ = [
    "DetectionResponse",
    "ENCODING_MASKED",
    "ENCODING_RAW",
    "FRAME_HEADER_SIZE",
    "KIND_REQUEST",
    "KIND_RESPONSE",
    "OffloadConnectionError",
    "OffloadRequest",
    "OffloadServer",
    "OffloadTimeoutError",
    "ProtocolError",
    "REQUEST_HEADER_SIZE",
    "build_server",
    "decode_masked_payload",
    "decode_request",
    "decode_response",
    "decode_varint",
    "encode_mask_runs",
    "encode_masked_payload",
    "encode_request",
    "encode_response",
    "encode_varint",
    "frame_message",
    "make_oracle_detector",
    "make_replay_detector",
    "masked_payload_size",
    "offload",
    "parse_message",
    "read_frame",
    "request_from_image",
    "request_from_masked",
    "request_to_masked",
    "request_wire_size",
]

MAGIC = b"EODF"
VERSION = 0x01
KIND_REQUEST = 0x01
KIND_RESPONSE = 0x02
ENCODING_RAW = 0x00
ENCODING_MASKED = 0x01

FRAME_HEADER_SIZE = 10  # magic 4 + version 1 + kind 1 + length 4
REQUEST_HEADER_SIZE = 18  # frame_id 8 + encoding 1 + width 4 + height 4 + channels 1
RESPONSE_HEADER_SIZE = 12  # frame_id 8 + count 4
DETECTION_RECORD_SIZE = 19  # class 1 + confidence 2 + 4 * f32

_U64_MAX = 2**64 - 1
_U32_MAX = 2**32 - 1


class ProtocolError(Exception):
    """Malformed or inconsistent wire data."""


class OffloadConnectionError(Exception):
    """The server could not be reached or the connection broke."""


class OffloadTimeoutError(Exception):
    """The server did not answer within the deadline."""


@dataclass(frozen=True)
class OffloadRequest:
    frame_id: int
    encoding: int
    width: int
    height: int
    channels: int
    payload: bytes

    def __post_init__(self):
        if not 0 <= self.frame_id <= _U64_MAX:
            raise ValueError(f"frame_id out of u64 range: {self.frame_id}")
        if self.encoding not in (ENCODING_RAW, ENCODING_MASKED):
            raise ValueError(f"unknown encoding {self.encoding}")
        if self.width < 1 or self.height < 1 or self.channels not in (1, 3):
            raise ValueError("bad request geometry")


@dataclass(frozen=True)
class DetectionResponse:
    frame_id: int
    detections: tuple[Detection, ...]


# --------------------------------------------------------------------------
# Varints and mask RLE
# --------------------------------------------------------------------------


def encode_varint(value: int) -> bytes:
    """LEB128 unsigned: 7 payload bits per byte, high bit = continuation."""
    if value < 0:
        raise ValueError("varints are unsigned")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def decode_varint(data: bytes, offset: int) -> tuple[int, int]:
    """Return (value, next_offset); raises ProtocolError on truncation."""
    value = 0
    shift = 0
    pos = offset
    while True:
        if pos >= len(data):
            raise ProtocolError(f"truncated varint at byte {offset}")
        byte = data[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, pos
        shift += 7
        if shift > 63:
            raise ProtocolError(f"varint wider than 64 bits at byte {offset}")


def _varint_size(value: int) -> int:
    size = 1
    while value >= 0x80:
        value >>= 7
        size += 1
    return size


def encode_mask_runs(bits: np.ndarray) -> list[int]:
    """Row-major run lengths, alternating zero-run first (possibly 0)."""
    flat = bits.reshape(-1)
    runs: list[int] = []
    # Boundaries where the value changes.
    changes = np.flatnonzero(np.diff(flat)) + 1
    edges = np.concatenate(([0], changes, [flat.size]))
    if flat[0] == 1:
        runs.append(0)
    for a, b in zip(edges[:-1], edges[1:]):
        runs.append(int(b - a))
    return runs


def encode_masked_payload(masked: MaskedImage) -> bytes:
    """Mask RLE followed by the retained samples in row-major order."""
    bits = masked.mask.bits
    runs = encode_mask_runs(bits)
    rle = b"".join(encode_varint(r) for r in runs)
    pixels = masked.image.pixels
    retained = pixels[bits.astype(bool)]
    return rle + retained.tobytes()


def decode_masked_payload(data: bytes, width: int, height: int, channels: int) -> MaskedImage:
    """Rebuild the zero-filled raster and mask from a MASKED payload."""
    total = width * height
    bits = np.zeros(total, dtype=np.uint8)
    covered = 0
    offset = 0
    ones_value = 0  # current run covers zeros (0) or ones (1)
    first = True
    while covered < total:
        run, offset = decode_varint(data, offset)
        if run == 0 and not first:
            raise ProtocolError(f"zero-length run at byte {offset}")
        if covered + run > total:
            raise ProtocolError(
                f"run lengths overshoot: {covered + run} > {total} pixels"
            )
        if ones_value:
            bits[covered : covered + run] = 1
        covered += run
        ones_value ^= 1
        first = False
    ones = int(bits.sum())
    need = ones * channels
    have = len(data) - offset
    if have < need:
        raise ProtocolError(f"truncated samples: need {need} bytes, have {have}")
    if have > need:
        raise ProtocolError(f"trailing bytes after samples: {have - need} extra")
    samples = np.frombuffer(data, dtype=np.uint8, count=need, offset=offset)
    raster = np.zeros((total, channels), dtype=np.uint8)
    raster[bits.astype(bool)] = samples.reshape(ones, channels)
    mask = Mask(bits.reshape(height, width))
    image = Image(raster.reshape(height, width, channels))
    return MaskedImage(image, mask, (total - ones) / total)


# --------------------------------------------------------------------------
# Message bodies
# --------------------------------------------------------------------------

_REQ_HEADER = struct.Struct(">QBIIB")
_RESP_HEADER = struct.Struct(">QI")
_DET_RECORD = struct.Struct(">BHffff")


def encode_request(request: OffloadRequest) -> bytes:
    header = _REQ_HEADER.pack(
        request.frame_id, request.encoding, request.width, request.height, request.channels
    )
    return header + request.payload


def decode_request(body: bytes) -> OffloadRequest:
    if len(body) < REQUEST_HEADER_SIZE:
        raise ProtocolError(f"request body too short: {len(body)} bytes")
    frame_id, encoding, width, height, channels = _REQ_HEADER.unpack_from(body)
    payload = body[REQUEST_HEADER_SIZE:]
    if encoding == ENCODING_RAW:
        need = width * height * channels
        if len(payload) != need:
            raise ProtocolError(f"RAW payload must be {need} bytes, got {len(payload)}")
    elif encoding == ENCODING_MASKED:
        if not payload:
            raise ProtocolError("empty MASKED payload")
    else:
        raise ProtocolError(f"unknown encoding byte {encoding}")
    try:
        return OffloadRequest(frame_id, encoding, width, height, channels, payload)
    except ValueError as exc:
        raise ProtocolError(str(exc))


def encode_response(response: DetectionResponse) -> bytes:
    parts = [_RESP_HEADER.pack(response.frame_id, len(response.detections))]
    for det in response.detections:
        class_id = CLASS_IDS.get(det.class_name, CLASS_IDS["other"])
        q = round(det.confidence * 65535)
        box = det.box
        parts.append(_DET_RECORD.pack(class_id, q, box.left, box.top, box.right, box.bottom))
    return b"".join(parts)


def decode_response(body: bytes) -> DetectionResponse:
    if len(body) < RESPONSE_HEADER_SIZE:
        raise ProtocolError(f"response body too short: {len(body)} bytes")
    frame_id, count = _RESP_HEADER.unpack_from(body)
    need = RESPONSE_HEADER_SIZE + count * DETECTION_RECORD_SIZE
    if len(body) != need:
        raise ProtocolError(f"response body must be {need} bytes for {count} detections, "
                            f"got {len(body)}")
    detections = []
    for k in range(count):
        off = RESPONSE_HEADER_SIZE + k * DETECTION_RECORD_SIZE
        class_id, q, left, top, right, bottom = _DET_RECORD.unpack_from(body, off)
        name = CLASS_NAMES.get(class_id)
        if name is None:
            raise ProtocolError(f"unknown class id {class_id}")
        try:
            detections.append(Detection(name, BoundingBox(left, top, right, bottom), q / 65535))
        except ValueError as exc:
            raise ProtocolError(str(exc))
    return DetectionResponse(frame_id, tuple(detections))


# --------------------------------------------------------------------------
# Framing
# --------------------------------------------------------------------------

_FRAME_HEADER = struct.Struct(">4sBBI")


def frame_message(kind: int, body: bytes) -> bytes:
    if kind not in (KIND_REQUEST, KIND_RESPONSE):
        raise ValueError(f"unknown frame kind {kind}")
    if len(body) > _U32_MAX:
        raise ValueError("body too large for a u32 length")
    return _FRAME_HEADER.pack(MAGIC, VERSION, kind, len(body)) + body


def parse_message(data: bytes) -> tuple[int, bytes]:
    """Split one complete frame into (kind, body)."""
    if len(data) < FRAME_HEADER_SIZE:
        raise ProtocolError(f"frame shorter than its {FRAME_HEADER_SIZE}-byte header")
    magic, version, kind, length = _FRAME_HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    if kind not in (KIND_REQUEST, KIND_RESPONSE):
        raise ProtocolError(f"unknown frame kind {kind}")
    if len(data) != FRAME_HEADER_SIZE + length:
        raise ProtocolError(
            f"frame length mismatch: header says {length}, have {len(data) - FRAME_HEADER_SIZE}"
        )
    return kind, data[FRAME_HEADER_SIZE:]


def _read_exact(stream: BinaryIO, n: int) -> bytes | None:
    """Read exactly n bytes; None on clean EOF at a frame boundary."""
    chunks = bytearray()
    while len(chunks) < n:
        piece = stream.read(n - len(chunks))
        if not piece:
            if not chunks:
                return None
            raise ProtocolError(f"stream ended mid-frame ({len(chunks)}/{n} bytes)")
        chunks.extend(piece)
    return bytes(chunks)


def read_frame(stream: BinaryIO) -> tuple[int, bytes] | None:
    """Read one frame from a blocking stream; None on clean EOF."""
    header = _read_exact(stream, FRAME_HEADER_SIZE)
    if header is None:
        return None
    magic, version, kind, length = _FRAME_HEADER.unpack(header)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    if kind not in (KIND_REQUEST, KIND_RESPONSE):
        raise ProtocolError(f"unknown frame kind {kind}")
    body = _read_exact(stream, length) if length else b""
    if body is None:
        raise ProtocolError("stream ended before frame body")
    return kind, body


# --------------------------------------------------------------------------
# Request construction / interpretation
# --------------------------------------------------------------------------


def request_from_image(frame_id: int, image: Image) -> OffloadRequest:
    """RAW request carrying the full raster."""
    return OffloadRequest(
        frame_id, ENCODING_RAW, image.width, image.height, image.channels,
        image.pixels.tobytes(),
    )


def request_from_masked(frame_id: int, masked: MaskedImage) -> OffloadRequest:
    """MASKED request carrying the RLE mask plus retained samples."""
    image = masked.image
    return OffloadRequest(
        frame_id, ENCODING_MASKED, image.width, image.height, image.channels,
        encode_masked_payload(masked),
    )


def request_to_masked(request: OffloadRequest) -> MaskedImage:
    """Interpret any request as a MaskedImage (RAW means an all-ones mask)."""
    if request.encoding == ENCODING_RAW:
        pixels = np.frombuffer(request.payload, dtype=np.uint8).reshape(
            request.height, request.width, request.channels
        )
        mask = Mask(np.ones((request.height, request.width), dtype=np.uint8))
        return MaskedImage(Image(pixels.copy()), mask, 0.0)
    return decode_masked_payload(
        request.payload, request.width, request.height, request.channels
    )


# --------------------------------------------------------------------------
# Analytic wire sizes (used by the simulator)
# --------------------------------------------------------------------------


def _model_runs(zeros: int, ones: int, layout: str) -> list[int]:
    """Run-length list of a synthetic mask with the given population split.

    ``contiguous`` models one solid discarded block at the top of the frame
    (the typical shape of a saliency mask); ``alternating`` models strict
    alternation with the surplus of the majority value in one final run,
    which maximizes the run count and therefore the RLE byte cost.

    Runs follow the wire convention: zero-run first (possibly 0), then
    alternating one-run / zero-run.
    """
    if zeros == 0:
        return [0, ones]
    if ones == 0:
        return [zeros]
    if layout == "contiguous":
        return [zeros, ones]
    if layout == "alternating":
        if zeros < ones:
            # 1 0 1 0 ... 0 1...1 — every zero isolated, ones at both ends.
            return [0, 1] + [1, 1] * (zeros - 1) + [1, ones - zeros]
        if zeros > ones:
            # 0...0 1 0 1 0 ... 1 0 — every one isolated, zeros at both ends.
            return [zeros - ones, 1] + [1, 1] * (ones - 1) + [1]
        # Equal counts: strict alternation starting with a one.
        return [0] + [1] * (2 * zeros)
    raise ValueError(f"unknown mask layout {layout!r}")


def masked_payload_size(
    width: int, height: int, channels: int, discard_ratio: float,
    layout: str = "contiguous",
) -> int:
    """Byte count encode_masked_payload would produce for a modeled mask."""
    total = width * height
    zeros = round(discard_ratio * total)
    ones = total - zeros
    runs = _model_runs(zeros, ones, layout)
    return sum(_varint_size(r) for r in runs) + ones * channels


def request_wire_size(
    width: int, height: int, channels: int, encoding: int,
    discard_ratio: float = 0.0, layout: str = "contiguous",
) -> int:
    """Full on-wire frame size of a request, headers included."""
    if encoding == ENCODING_RAW:
        payload = width * height * channels
    elif encoding == ENCODING_MASKED:
        payload = masked_payload_size(width, height, channels, discard_ratio, layout)
    else:
        raise ValueError(f"unknown encoding {encoding}")
    return FRAME_HEADER_SIZE + REQUEST_HEADER_SIZE + payload


# --------------------------------------------------------------------------
# Server
# --------------------------------------------------------------------------

DetectorFn = Callable[[OffloadRequest], Sequence[Detection]]


def _frame_label_file(root: Path, frame_id: int) -> Path | None:
    """Locate ``<frame_id>.txt``, accepting the 6-digit zero-padded KITTI name."""
    plain = root / f"{frame_id}.txt"
    if plain.exists():
        return plain
    padded = root / f"{int(frame_id):06d}.txt"
    if padded.exists():
        return padded
    return None


def make_oracle_detector(labels_root: str | Path,
                         params: OracleParams = OracleParams()) -> DetectorFn:
    """Detector that scores the decoded mask against stored ground truths."""
    root = Path(labels_root)

    def detect(request: OffloadRequest) -> Sequence[Detection]:
        masked = request_to_masked(request)
        log.info("frame %d: decoded %s request, discard_ratio %.4f",
                 request.frame_id,
                 "MASKED" if request.encoding == ENCODING_MASKED else "RAW",
                 masked.discard_ratio)
        path = _frame_label_file(root, request.frame_id)
        if path is None:
            log.warning("no label file for frame %d under %s", request.frame_id, root)
            return []
        return oracle_detect(masked, load_kitti_labels(path), params)

    return detect


def make_replay_detector(replay_root: str | Path) -> DetectorFn:
    """Detector that replays precomputed results keyed by frame_id."""
    root = Path(replay_root)

    def detect(request: OffloadRequest) -> Sequence[Detection]:
        return replay_detect(request.frame_id, root)

    return detect


class _OffloadHandler(socketserver.StreamRequestHandler):
    def handle(self):
        peer = self.client_address
        while True:
            try:
                frame = read_frame(self.rfile)
            except ProtocolError as exc:
                log.warning("closing %s: %s", peer, exc)
                return
            if frame is None:
                return
            kind, body = frame
            if kind != KIND_REQUEST:
                log.warning("closing %s: expected a request frame, got kind %d", peer, kind)
                return
            try:
                request = decode_request(body)
                detections = tuple(self.server.detector(request))
            except ProtocolError as exc:
                log.warning("closing %s: bad request: %s", peer, exc)
                return
            response = DetectionResponse(request.frame_id, detections)
            self.wfile.write(frame_message(KIND_RESPONSE, encode_response(response)))
            self.wfile.flush()


class OffloadServer(socketserver.ThreadingTCPServer):
    """TCP server answering offload requests; one thread per connection."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], detector: DetectorFn):
        super().__init__(address, _OffloadHandler)
        self.detector = detector


def build_server(host: str, port: int, detector: DetectorFn) -> OffloadServer:
    """Bind the reference server; caller drives serve_forever()/shutdown()."""
    return OffloadServer((host, port), detector)


def serve(host: str, port: int, detector: DetectorFn) -> None:
    """Run the reference server until interrupted (blocking)."""
    with build_server(host, port, detector) as server:
        bound = server.server_address
        log.info("listening on %s:%d", bound[0], bound[1])
        server.serve_forever()


# --------------------------------------------------------------------------
# Client
# --------------------------------------------------------------------------


def offload(
    host: str, port: int, request: OffloadRequest, timeout: float = 10.0
) -> tuple[DetectionResponse, float]:
    """Send one request and wait for its response; returns (response, RTT seconds)."""
    start = time.perf_counter()
    try:
        with socket.create_connection((host, port), timeout=timeout) as sock:
            sock.settimeout(timeout)
            sock.sendall(frame_message(KIND_REQUEST, encode_request(request)))
            with sock.makefile("rb") as stream:
                frame = read_frame(stream)
    except (TimeoutError, socket.timeout) as exc:
        raise OffloadTimeoutError(f"no response within {timeout} s") from exc
    except OSError as exc:
        raise OffloadConnectionError(f"cannot reach {host}:{port}: {exc}") from exc
    rtt = time.perf_counter() - start
    if frame is None:
        raise ProtocolError("server closed the connection without responding")
    kind, body = frame
    if kind != KIND_RESPONSE:
        raise ProtocolError(f"expected a response frame, got kind {kind}")
    response = decode_response(body)
    if response.frame_id != request.frame_id:
        raise ProtocolError(
            f"response frame_id {response.frame_id} does not echo request {request.frame_id}"
        )
    return response, rtt
