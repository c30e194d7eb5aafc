"""Named parameter store with quantum/classical partitions and checkpoint I/O."""
from __future__ import annotations

import hashlib
import json
import struct
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

QUANTUM = "quantum"
CLASSICAL = "classical"
PARTITIONS = (QUANTUM, CLASSICAL)

CKPT_MAGIC = b"QSARCKPT1\n"


@dataclass
class Param:
    name: str
    value: np.ndarray
    partition: str


class ParamRegistry:
    def __init__(self):
        self._params: "OrderedDict[str, Param]" = OrderedDict()

    def add(self, name: str, value, partition: str) -> np.ndarray:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        if partition not in PARTITIONS:
            raise ValueError(f"unknown partition {partition!r}")
        arr = np.array(value, dtype=np.float64)
        self._params[name] = Param(name, arr, partition)
        return arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self._params[name].value

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Param]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def partition_of(self, name: str) -> str:
        return self._params[name].partition

    def values(self) -> dict[str, np.ndarray]:
        return {p.name: p.value for p in self}

    def count(self, partition: Optional[str] = None) -> int:
        return sum(p.value.size for p in self if partition in (None, p.partition))

    def census(self) -> tuple[int, int]:
        return self.count(QUANTUM), self.count(CLASSICAL)

    def count_prefix(self, prefix: str, partition: Optional[str] = None) -> int:
        return sum(p.value.size for p in self
                   if _under(p.name, prefix) and partition in (None, p.partition))

    def set_value(self, name: str, value) -> None:
        p = self._params[name]
        value = np.asarray(value, dtype=np.float64)
        if value.shape != p.value.shape:
            raise ValueError(f"{name}: shape {value.shape} != {p.value.shape}")
        p.value[...] = value

    def copy(self) -> "ParamRegistry":
        out = ParamRegistry()
        for p in self:
            out.add(p.name, p.value.copy(), p.partition)
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([p.value.ravel() for p in self]) if len(self) else np.zeros(0)

    def digest(self) -> str:
        h = hashlib.sha256()
        for p in self:
            h.update(p.name.encode())
            h.update(np.ascontiguousarray(p.value, dtype="<f8").tobytes())
        return h.hexdigest()


def _under(name: str, prefix: str) -> bool:
    return name == prefix or name.startswith(prefix + ".")


# ---------------------------------------------------------------------------
# checkpoint: magic, u64 header length, JSON manifest, raw <f8 payload
# ---------------------------------------------------------------------------

def save_checkpoint(path, entries: list[tuple[str, np.ndarray, str]], meta: Optional[dict] = None) -> None:
    """Write (name, array, partition) entries; ``partition`` may also be 'state'."""
    manifest = []
    chunks = []
    offset = 0
    for name, arr, part in entries:
        a = np.ascontiguousarray(arr, dtype="<f8")
        manifest.append({"name": name, "shape": list(a.shape), "partition": part, "offset": offset})
        chunks.append(a.tobytes())
        offset += a.size
    header = json.dumps({"entries": manifest, "meta": meta or {}}, sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for c in chunks:
            f.write(c)


def load_checkpoint(path) -> tuple[list[tuple[str, np.ndarray, str]], dict]:
    data = Path(path).read_bytes()
    if not data.startswith(CKPT_MAGIC):
        raise ValueError(f"{path}: not a checkpoint file")
    pos = len(CKPT_MAGIC)
    (hlen,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    header = json.loads(data[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    payload = np.frombuffer(data, dtype="<f8", offset=pos)
    entries = []
    for e in header["entries"]:
        n = int(np.prod(e["shape"], dtype=np.int64))
        arr = payload[e["offset"]:e["offset"] + n].reshape(e["shape"]).astype(np.float64)
        entries.append((e["name"], arr, e["partition"]))
    return entries, header["meta"]


def registry_entries(reg: ParamRegistry) -> list[tuple[str, np.ndarray, str]]:
    return [(p.name, p.value, p.partition) for p in reg]
