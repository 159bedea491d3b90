"""Persistence for models, schemes, and datasets, plus fixture generation.

Model container (.qemodel), single file:

    bytes 0..7    magic b"QEMODEL\\x01"
    bytes 8..15   u64 little-endian manifest length
    manifest      canonical JSON (sorted keys, no whitespace)
    blob          contiguous little-endian float64 weight payload

The manifest lists layer kind/name/shape/hyperparameters and byte offsets
into the blob. Round trips are bit-exact: quantized models keep float64
payloads, the grid constraint lives in the scheme sidecar.
"""
from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContainerFormatError, DatasetFormatError, ModelValidationError, TruncatedBlobError
from .netgraph import LayerSpec, Model, forward
from .quantizer import QuantScheme
from .tensor_ops import Tensor

__all__ = [
    "MAGIC",
    "DatasetHandle",
    "save_model",
    "load_model",
    "save_schemes",
    "load_schemes",
    "load_idx_images",
    "load_idx_labels",
    "load_idx",
    "load_csv",
    "save_csv_dataset",
    "make_dataset",
    "make_teacher_fixture",
]

MAGIC = b"QEMODEL\x01"

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


# ---------------------------------------------------------------------------
# model container


def _manifest_for(model: Model) -> tuple[dict, bytes]:
    layers = []
    blob = bytearray()
    for layer in model.layers:
        entry: dict = {"kind": layer.kind, "name": layer.name}
        for field in ("stride", "padding", "kernel"):
            value = getattr(layer, field)
            if value is not None:
                entry[field] = value
        for tensor, key in ((layer.weights, "weights"), (layer.bias, "bias")):
            if tensor is not None:
                payload = tensor.data.astype("<f8").tobytes()
                entry[key] = {
                    "shape": list(tensor.shape),
                    "offset": len(blob),
                    "count": tensor.size,
                }
                blob.extend(payload)
        layers.append(entry)
    manifest = {
        "format": "qemodel",
        "version": 1,
        "input_shape": list(model.input_shape),
        "layers": layers,
    }
    return manifest, bytes(blob)


def save_model(model: Model, path) -> None:
    manifest, blob = _manifest_for(model)
    body = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(body)))
        fh.write(body)
        fh.write(blob)


def _read_segment(blob: bytes, entry: dict, layer_name: str, key: str) -> Tensor:
    seg = entry[key]
    shape = tuple(int(d) for d in seg["shape"])
    count = int(seg["count"])
    offset = int(seg["offset"])
    expected = 1
    for d in shape:
        expected *= d
    if expected != count:
        raise ModelValidationError(
            f"layer '{layer_name}': manifest shape {shape} does not match payload count {count}"
        )
    end = offset + count * 8
    if offset < 0 or end > len(blob):
        raise TruncatedBlobError(
            f"layer '{layer_name}': {key} segment [{offset}, {end}) exceeds blob of {len(blob)} bytes"
        )
    arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
    return Tensor(arr)


def load_model(path) -> Model:
    """Load and validate a .qemodel container (shape-propagated on build)."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise ContainerFormatError(f"{path}: not a qemodel container (bad magic)")
    (body_len,) = struct.unpack_from("<Q", raw, len(MAGIC))
    header_end = len(MAGIC) + 8
    if header_end + body_len > len(raw):
        raise ContainerFormatError(f"{path}: manifest extends past end of file")
    try:
        manifest = json.loads(raw[header_end : header_end + body_len])
    except json.JSONDecodeError as exc:
        raise ContainerFormatError(f"{path}: manifest is not valid JSON: {exc}") from exc
    if manifest.get("format") != "qemodel":
        raise ContainerFormatError(f"{path}: manifest missing qemodel format tag")
    blob = raw[header_end + body_len :]
    layers = []
    try:
        entries = manifest["layers"]
        input_shape = tuple(manifest["input_shape"])
        for entry in entries:
            name = entry["name"]
            weights = _read_segment(blob, entry, name, "weights") if "weights" in entry else None
            bias = _read_segment(blob, entry, name, "bias") if "bias" in entry else None
            layers.append(
                LayerSpec(
                    kind=entry["kind"],
                    name=name,
                    weights=weights,
                    bias=bias,
                    stride=entry.get("stride"),
                    padding=entry.get("padding"),
                    kernel=entry.get("kernel"),
                )
            )
    except KeyError as exc:
        raise ContainerFormatError(f"{path}: manifest is missing required key {exc}") from exc
    return Model(tuple(layers), input_shape)


# ---------------------------------------------------------------------------
# scheme sidecar


def save_schemes(schemes: dict[str, QuantScheme], path) -> None:
    doc = {"layers": {name: s.to_dict() for name, s in schemes.items()}}
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def load_schemes(path) -> dict[str, QuantScheme]:
    doc = json.loads(Path(path).read_text())
    return {name: QuantScheme.from_dict(d) for name, d in doc["layers"].items()}


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class DatasetHandle:
    """Inputs, integer labels, and a content digest for provenance."""

    inputs: Tensor
    labels: np.ndarray
    id: str

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        if labels.ndim != 1 or labels.shape[0] != self.inputs.shape[0]:
            raise DatasetFormatError(
                f"labels length {labels.shape} inconsistent with inputs {self.inputs.shape}"
            )
        if labels.size and labels.min() < 0:
            raise DatasetFormatError("labels must be nonnegative integers")

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1


def _digest(inputs: np.ndarray, labels: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(str(inputs.shape).encode())
    h.update(inputs.astype("<f8").tobytes())
    h.update(labels.astype("<i8").tobytes())
    return h.hexdigest()


def make_dataset(inputs: Tensor, labels) -> DatasetHandle:
    labels = np.asarray(labels, dtype=np.int64)
    return DatasetHandle(inputs, labels, _digest(inputs.data, labels))


def _read_be32(fh, path) -> int:
    data = fh.read(4)
    if len(data) != 4:
        raise DatasetFormatError(f"{path}: truncated IDX header")
    return struct.unpack(">i", data)[0]


def load_idx_images(path) -> Tensor:
    """IDX ubyte image file -> [N, 1, H, W] tensor scaled to [0, 1]."""
    with open(path, "rb") as fh:
        magic = _read_be32(fh, path)
        if magic != IDX_IMAGE_MAGIC:
            raise DatasetFormatError(f"{path}: bad IDX image magic 0x{magic:08x}")
        n = _read_be32(fh, path)
        h = _read_be32(fh, path)
        w = _read_be32(fh, path)
        payload = fh.read(n * h * w)
        if len(payload) != n * h * w:
            raise DatasetFormatError(f"{path}: IDX payload truncated")
        pixels = np.frombuffer(payload, dtype=np.uint8).reshape(n, 1, h, w)
    return Tensor(pixels.astype(np.float64) / 255.0)


def load_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = _read_be32(fh, path)
        if magic != IDX_LABEL_MAGIC:
            raise DatasetFormatError(f"{path}: bad IDX label magic 0x{magic:08x}")
        n = _read_be32(fh, path)
        payload = fh.read(n)
        if len(payload) != n:
            raise DatasetFormatError(f"{path}: IDX payload truncated")
        return np.frombuffer(payload, dtype=np.uint8).astype(np.int64)


def load_idx(images_path, labels_path) -> DatasetHandle:
    inputs = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    return make_dataset(inputs, labels)


def load_csv(path, feature_columns: list[str] | None = None, label_column: str = "label") -> DatasetHandle:
    """CSV with a header -> N x F inputs plus integer labels.

    With feature_columns unset, every non-label column is a feature, in
    header order. Ragged rows and non-numeric cells raise with the
    offending line number.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty CSV") from None
        if label_column not in header:
            raise DatasetFormatError(f"{path}: no '{label_column}' column in header {header}")
        if feature_columns is None:
            feature_columns = [c for c in header if c != label_column]
        missing = [c for c in feature_columns if c not in header]
        if missing:
            raise DatasetFormatError(f"{path}: header is missing columns {missing}")
        feat_idx = [header.index(c) for c in feature_columns]
        label_idx = header.index(label_column)
        rows = []
        labels = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DatasetFormatError(
                    f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}"
                )
            try:
                rows.append([float(row[i]) for i in feat_idx])
                labels.append(int(float(row[label_idx])))
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: non-numeric cell ({exc})") from exc
    if not rows:
        raise DatasetFormatError(f"{path}: CSV has a header but no data rows")
    return make_dataset(Tensor(np.array(rows)), np.array(labels, dtype=np.int64))


def save_csv_dataset(data: DatasetHandle, path) -> None:
    """Write N x F inputs plus labels as f0..f{F-1},label with full precision."""
    inputs = data.inputs.data
    if inputs.ndim != 2:
        raise DatasetFormatError(f"CSV export needs N x F inputs, got {inputs.shape}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(inputs.shape[1])] + ["label"])
        for row, label in zip(inputs, data.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


# ---------------------------------------------------------------------------
# teacher fixtures


def make_teacher_fixture(
    input_dim: int,
    widths: list[int],
    n_samples: int,
    seed: int,
) -> tuple[Model, DatasetHandle]:
    """Random MLP plus inputs labelled by the model's own argmax.

    The float model scores 100% agreement on its own labels by
    construction, so quantization-induced degradation is directly
    measurable as agreement loss. Deterministic in the seed.
    """
    if input_dim < 1 or not widths or any(w < 1 for w in widths):
        raise ModelValidationError(f"bad architecture: input_dim={input_dim}, widths={widths}")
    if widths[-1] < 2:
        raise ModelValidationError("final width must be >= 2 for an argmax label")
    rng = np.random.Generator(np.random.PCG64(seed))
    layers = []
    fan_in = input_dim
    for i, width in enumerate(widths):
        w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, width))
        b = rng.normal(0.0, 0.05, size=width)
        layers.append(LayerSpec("dense", f"dense{i}", weights=Tensor(w), bias=Tensor(b)))
        if i < len(widths) - 1:
            layers.append(LayerSpec("relu", f"relu{i}"))
        fan_in = width
    model = Model(tuple(layers), (input_dim,))
    inputs = Tensor(rng.standard_normal((n_samples, input_dim)))
    labels = np.argmax(forward(model, inputs).data, axis=1)
    return model, make_dataset(inputs, labels)
