"""Binary checkpoints of SystemState.

Record layout, all little-endian:

    magic     4s   b"CAVS"
    version   u32
    n_atoms   u32
    index     u64  trajectory index
    steps     u64  integration steps taken
    t         f64
    x         f64[n_atoms]
    p         f64[n_atoms]
    rng_len   u32
    rng       JSON of the bit generator state, rng_len bytes

A snapshot stream is several records written back to back.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np

from .models import CheckpointError, SystemState

logger = logging.getLogger(__name__)

MAGIC = b"CAVS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIQQd")
_BLOB_LEN = struct.Struct("<I")


def _encode_value(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return {"__ndarray__": value.tolist(), "dtype": str(value.dtype)}
    if isinstance(value, dict):
        return {key: _encode_value(item) for key, item in value.items()}
    if isinstance(value, np.integer):
        return int(value)
    return value


def _decode_value(value: Any) -> Any:
    if isinstance(value, dict):
        if "__ndarray__" in value:
            return np.array(value["__ndarray__"], dtype=value["dtype"])
        return {key: _decode_value(item) for key, item in value.items()}
    return value


def rng_state_blob(rng: np.random.Generator) -> bytes:
    """Serialize the full bit generator state to JSON bytes."""
    state = _encode_value(rng.bit_generator.state)
    return json.dumps(state, sort_keys=True).encode("utf-8")


def rng_from_blob(blob: bytes) -> np.random.Generator:
    """Rebuild a Generator that continues the serialized stream."""
    try:
        state: Dict[str, Any] = _decode_value(json.loads(blob.decode("utf-8")))
        bit_generator = getattr(np.random, state["bit_generator"])()
        bit_generator.state = state
    except (ValueError, KeyError, TypeError, AttributeError) as e:
        raise CheckpointError(f"corrupted RNG state: {e}") from e
    return np.random.Generator(bit_generator)


def encode_state(state: SystemState) -> bytes:
    """
    Encode one state as a checkpoint record.

    Args:
        state: State to serialize

    Returns:
        Record bytes
    """
    blob = rng_state_blob(state.rng)
    header = _HEADER.pack(
        MAGIC, FORMAT_VERSION, state.n_atoms, state.index, state.steps, float(state.t)
    )
    return b"".join(
        [
            header,
            np.ascontiguousarray(state.x, dtype="<f8").tobytes(),
            np.ascontiguousarray(state.p, dtype="<f8").tobytes(),
            _BLOB_LEN.pack(len(blob)),
            blob,
        ]
    )


def _take(data: bytes, offset: int, size: int, what: str) -> Tuple[bytes, int]:
    end = offset + size
    if end > len(data):
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data[offset:end], end


def decode_state(data: bytes, offset: int = 0) -> Tuple[SystemState, int]:
    """
    Decode the record starting at ``offset``.

    Args:
        data: Checkpoint bytes
        offset: Start of the record

    Returns:
        (state, offset just past the record)

    Raises:
        CheckpointError: Bad magic, unsupported version or truncation
    """
    raw, offset = _take(data, offset, _HEADER.size, "header")
    magic, version, n_atoms, index, steps, t = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})"
        )

    raw_x, offset = _take(data, offset, 8 * n_atoms, "positions")
    raw_p, offset = _take(data, offset, 8 * n_atoms, "momenta")
    raw_len, offset = _take(data, offset, _BLOB_LEN.size, "RNG state length")
    (blob_len,) = _BLOB_LEN.unpack(raw_len)
    blob, offset = _take(data, offset, blob_len, "RNG state")

    state = SystemState(
        x=np.frombuffer(raw_x, dtype="<f8").astype(np.float64),
        p=np.frombuffer(raw_p, dtype="<f8").astype(np.float64),
        rng=rng_from_blob(blob),
        t=t,
        steps=steps,
        index=index,
    )
    return state, offset


def save_checkpoint(state: SystemState, path: Union[str, Path]) -> None:
    """Write a single-record checkpoint file."""
    Path(path).write_bytes(encode_state(state))
    logger.debug(f"Checkpoint of trajectory {state.index} at step {state.steps} -> {path}")


def load_checkpoint(path: Union[str, Path]) -> SystemState:
    """
    Load a single-record checkpoint file.

    Args:
        path: Checkpoint file

    Returns:
        The stored state, RNG positioned where it was saved
    """
    data = Path(path).read_bytes()
    state, offset = decode_state(data)
    if offset != len(data):
        raise CheckpointError(f"{len(data) - offset} trailing bytes after checkpoint record")
    return state


def write_checkpoints(states: List[SystemState], path: Union[str, Path]) -> None:
    """Write several records back to back (a snapshot stream)."""
    Path(path).write_bytes(b"".join(encode_state(state) for state in states))


def read_checkpoints(path: Union[str, Path]) -> List[SystemState]:
    """
    Read every record of a snapshot stream.

    Args:
        path: Stream file

    Returns:
        States in file order; an empty file gives an empty list
    """
    data = Path(path).read_bytes()
    states = []
    offset = 0
    while offset < len(data):
        state, offset = decode_state(data, offset)
        states.append(state)
    return states
