"""
Checkpoint file format.

Layout: 8-byte magic, little-endian uint64 manifest length, UTF-8 JSON
manifest, then one blob of little-endian float32 values. Each manifest
entry names a tensor, its kind (param / m / v), shape, byte offset into the
blob and byte length. Entries tile the blob with no gaps or overlaps.
"""

import json
import struct
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from core.exceptions import CheckpointCorruptionError, CheckpointVersionError
from core.logging.logger import get_logger
from models.config import ModelConfig
from models.parameters import ParamGroup, Parameters
from training.config import TrainConfig
from training.optimizer import AdamWState
from training.state import TrainState

logger = get_logger(__name__)

MAGIC = b"KEAPCKPT"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sQ")
_BLOB_DTYPE = np.dtype("<f4")

Entry = Dict[str, Any]


def write_tensor_file(
    path: Path,
    tensors: List[Tuple[str, str, np.ndarray, Optional[str]]],
    meta: Dict[str, Any],
) -> None:
    """
    Write (name, kind, array, group) records plus metadata.

    Args:
        path: destination file
        tensors: records in blob order
        meta: extra manifest fields (configs, step, RNG state)
    """
    entries: List[Entry] = []
    chunks: List[bytes] = []
    offset = 0
    for name, kind, array, group in tensors:
        raw = np.ascontiguousarray(array, dtype=_BLOB_DTYPE).tobytes()
        entry: Entry = {
            "name": name,
            "kind": kind,
            "shape": list(array.shape),
            "offset": offset,
            "length": len(raw),
        }
        if group is not None:
            entry["group"] = group
        entries.append(entry)
        chunks.append(raw)
        offset += len(raw)

    manifest = {"format_version": FORMAT_VERSION, **meta, "entries": entries, "blob_length": offset}
    encoded = json.dumps(manifest, sort_keys=True).encode("utf-8")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, len(encoded)))
        fh.write(encoded)
        for chunk in chunks:
            fh.write(chunk)
    tmp.replace(path)


def _check_cover(entries: List[Entry], blob_length: int) -> None:
    cursor = 0
    for entry in sorted(entries, key=lambda e: e["offset"]):
        expected = int(np.prod(entry["shape"], dtype=np.int64)) * _BLOB_DTYPE.itemsize
        if entry["offset"] != cursor or entry["length"] != expected:
            raise CheckpointCorruptionError(
                f"entry {entry['name']!r} ({entry['kind']}) does not tile the blob "
                f"at offset {cursor}"
            )
        cursor += entry["length"]
    if cursor != blob_length:
        raise CheckpointCorruptionError(
            f"entries cover {cursor} bytes but manifest declares {blob_length}"
        )


def read_tensor_file(path: Path) -> Tuple[Dict[str, Any], List[Tuple[Entry, np.ndarray]]]:
    """Parse and validate a tensor file; returns (manifest, [(entry, array)])"""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CheckpointCorruptionError(f"{path}: file too short for a checkpoint header")
    magic, manifest_len = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointCorruptionError(f"{path}: not a checkpoint file")
    start = _HEADER.size + manifest_len
    if len(raw) < start:
        raise CheckpointCorruptionError(f"{path}: manifest truncated")
    try:
        manifest = json.loads(raw[_HEADER.size : start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointCorruptionError(f"{path}: unreadable manifest ({e})") from e

    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: unsupported format version {version!r} (expected {FORMAT_VERSION})"
        )

    blob = raw[start:]
    blob_length = manifest.get("blob_length")
    if blob_length != len(blob):
        raise CheckpointCorruptionError(
            f"{path}: blob holds {len(blob)} bytes but manifest declares {blob_length}"
        )
    entries = manifest.get("entries", [])
    _check_cover(entries, blob_length)

    records = []
    for entry in entries:
        chunk = blob[entry["offset"] : entry["offset"] + entry["length"]]
        array = np.frombuffer(chunk, dtype=_BLOB_DTYPE).astype(np.float32)
        records.append((entry, array.reshape(entry["shape"])))
    return manifest, records


def save_checkpoint(state: TrainState, path: Path) -> Path:
    """Persist parameters, moments, step and RNG state"""
    records: List[Tuple[str, str, np.ndarray, Optional[str]]] = []
    for name, tensor in state.params.items():
        records.append((name, "param", tensor.data, state.params.group_of(name).value))
    for name in state.optimizer.m:
        records.append((name, "m", state.optimizer.m[name], None))
        records.append((name, "v", state.optimizer.v[name], None))

    write_tensor_file(
        path,
        records,
        {
            "model_config": state.model_config.model_dump(mode="json"),
            "train_config": state.train_config.model_dump(mode="json"),
            "step": state.step,
            "optimizer_step": state.optimizer.step,
            "rng_state": state.rng_state,
        },
    )
    logger.info("checkpoint_saved", path=str(path), step=state.step, tensors=len(records))
    return Path(path)


def load_checkpoint(path: Path, expected: Optional[ModelConfig] = None) -> TrainState:
    """
    Restore a TrainState written by ``save_checkpoint``.

    Args:
        path: checkpoint file
        expected: if given, the checkpoint's model config must equal it

    Raises:
        CheckpointCorruptionError: manifest and blob disagree
        CheckpointVersionError: unknown format or mismatched model config
    """
    manifest, records = read_tensor_file(path)
    if "model_config" not in manifest or "train_config" not in manifest:
        raise CheckpointVersionError(f"{path}: tensor file carries no training state")

    model_config = ModelConfig.model_validate(manifest["model_config"])
    if expected is not None and model_config != expected:
        raise CheckpointVersionError(f"{path}: model config differs from the run configuration")
    train_config = TrainConfig.model_validate(manifest["train_config"])

    params = Parameters()
    moments: Dict[str, Dict[str, np.ndarray]] = {"m": {}, "v": {}}
    for entry, array in records:
        if entry["kind"] == "param":
            params.add(entry["name"], array, ParamGroup(entry["group"]))
        elif entry["kind"] in moments:
            moments[entry["kind"]][entry["name"]] = array.copy()
        else:
            raise CheckpointCorruptionError(f"{path}: unknown entry kind {entry['kind']!r}")

    learnable = set(params.learnable())
    if set(moments["m"]) != learnable or set(moments["v"]) != learnable:
        raise CheckpointCorruptionError(f"{path}: optimizer moments do not match learnable tensors")

    state = TrainState(
        step=int(manifest["step"]),
        params=params,
        optimizer=AdamWState(moments["m"], moments["v"], int(manifest["optimizer_step"])),
        rng=np.random.Generator(np.random.PCG64()),
        model_config=model_config,
        train_config=train_config,
    )
    state.restore_rng(manifest["rng_state"])
    logger.info("checkpoint_loaded", path=str(path), step=state.step)
    return state


def save_knowledge_embeddings(params: Parameters, path: Path) -> Path:
    """Write only the frozen knowledge-encoder tensors"""
    records = [
        (name, "param", params[name].data, ParamGroup.KNOWLEDGE.value)
        for name in params.names(ParamGroup.KNOWLEDGE)
    ]
    write_tensor_file(path, records, {})
    return Path(path)


def load_knowledge_embeddings(path: Path, params: Parameters) -> List[str]:
    """
    Replace frozen knowledge tensors with externally computed values.

    Only entries whose names exist in the knowledge group are used; shapes
    must match exactly.

    Returns:
        names of replaced tensors
    """
    _, records = read_tensor_file(path)
    targets = set(params.names(ParamGroup.KNOWLEDGE))
    replaced = []
    for entry, array in records:
        name = entry["name"]
        if entry["kind"] != "param" or name not in targets:
            continue
        tensor = params[name]
        if array.shape != tensor.shape:
            raise CheckpointVersionError(
                f"{path}: {name} has shape {list(array.shape)}, model expects {list(tensor.shape)}"
            )
        tensor.data = np.ascontiguousarray(array, dtype=np.float32)
        replaced.append(name)
    if not replaced:
        raise CheckpointVersionError(f"{path}: no knowledge-encoder tensors match the model")
    logger.info("knowledge_embeddings_loaded", path=str(path), tensors=len(replaced))
    return replaced
