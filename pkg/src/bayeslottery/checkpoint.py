"""Binary ticket checkpoints (``.bltk``).

Layout, all integers little-endian::

    magic       4 bytes  b"BLTK"
    version     u16      1
    flags       u16      bit 0: Bayesian model
    seed        u64      seed the ticket trains with
    eval_seed   u64      seed of the evaluation noise stream
    level       u32
    lineage     str
    score       str
    config      text     full experiment config (key = value lines)
    n_entries   u32
    entries     n_entries times:
        name    str
        kind    u8       0 linear, 1 conv2d, 2 bias, 3 scale, 4 shift
        flags   u8       bit 0 rho present, bit 1 mask present, bit 2 initial values present
        ndim    u8, then ndim x u32 dims
        mu      float32[prod(dims)]       (the parameter itself for kinds 2-4)
        rho     float32[...]              if bit 0
        mu0     float32[...]              if bit 2
        rho0    float32[...]              if bits 0 and 2
        mask    ceil(prod(dims) / 8) bytes if bit 1; bit i of the flat mask is
                (byte[i // 8] >> (i % 8)) & 1

``str`` is a u16 byte length followed by UTF-8; ``text`` uses a u32 length.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"BLTK"
VERSION = 1
KINDS = ("linear", "conv2d", "bias", "scale", "shift")


class CheckpointError(ValueError):
    pass


@dataclass
class Entry:
    name: str
    kind: str
    mu: np.ndarray
    rho: np.ndarray | None = None
    mu0: np.ndarray | None = None
    rho0: np.ndarray | None = None
    mask: np.ndarray | None = None


@dataclass
class Checkpoint:
    entries: list[Entry] = field(default_factory=list)
    bayesian: bool = True
    seed: int = 0
    eval_seed: int = 0
    level: int = 0
    lineage: str = "imp"
    score: str = "snr"
    config: str = ""

    def entry(self, name: str) -> Entry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    @property
    def masks(self) -> dict[str, np.ndarray]:
        return {e.name: e.mask for e in self.entries if e.mask is not None}

    def state(self, initial: bool = False) -> dict[str, np.ndarray]:
        """Model state dict of the stored (or initial) parameters."""
        out = {}
        for e in self.entries:
            mu = e.mu0 if initial else e.mu
            rho = e.rho0 if initial else e.rho
            if initial and mu is None:
                raise CheckpointError(f"{e.name}: no initial values stored")
            if e.kind in ("linear", "conv2d"):
                out[f"{e.name}.mu"] = mu
                if rho is not None:
                    out[f"{e.name}.rho"] = rho
            else:
                out[e.name] = mu
        return out


def _w_str(buf, s: str, wide: bool = False) -> None:
    b = s.encode("utf-8")
    buf.write(struct.pack("<I" if wide else "<H", len(b)))
    buf.write(b)


def _r_exact(buf, n: int) -> bytes:
    b = buf.read(n)
    if len(b) != n:
        raise CheckpointError(f"truncated checkpoint at byte {buf.tell()}")
    return b


def _r_str(buf, wide: bool = False) -> str:
    fmt = "<I" if wide else "<H"
    (n,) = struct.unpack(fmt, _r_exact(buf, struct.calcsize(fmt)))
    return _r_exact(buf, n).decode("utf-8")


def _r(buf, fmt: str):
    return struct.unpack(fmt, _r_exact(buf, struct.calcsize(fmt)))


def _w_arr(buf, a: np.ndarray) -> None:
    buf.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def _r_arr(buf, shape) -> np.ndarray:
    n = int(np.prod(shape))
    return np.frombuffer(_r_exact(buf, 4 * n), dtype="<f4").astype(np.float32).reshape(shape)


def dumps(ckpt: Checkpoint) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HHQQI", VERSION, int(ckpt.bayesian), ckpt.seed, ckpt.eval_seed,
                          ckpt.level))
    _w_str(buf, ckpt.lineage)
    _w_str(buf, ckpt.score)
    _w_str(buf, ckpt.config, wide=True)
    buf.write(struct.pack("<I", len(ckpt.entries)))
    for e in ckpt.entries:
        _w_str(buf, e.name)
        has_init = e.mu0 is not None
        flags = (e.rho is not None) | (e.mask is not None) << 1 | has_init << 2
        shape = e.mu.shape
        buf.write(struct.pack(f"<BBB{len(shape)}I", KINDS.index(e.kind), flags, len(shape),
                              *shape))
        _w_arr(buf, e.mu)
        if e.rho is not None:
            _w_arr(buf, e.rho)
        if has_init:
            _w_arr(buf, e.mu0)
            if e.rho is not None:
                _w_arr(buf, e.rho0)
        if e.mask is not None:
            if e.mask.shape != shape:
                raise CheckpointError(f"{e.name}: mask shape {e.mask.shape} != {shape}")
            buf.write(np.packbits(e.mask.reshape(-1).astype(bool), bitorder="little").tobytes())
    return buf.getvalue()


def loads(data: bytes) -> Checkpoint:
    buf = io.BytesIO(data)
    if _r_exact(buf, 4) != MAGIC:
        raise CheckpointError("not a BLTK checkpoint (bad magic)")
    version, flags, seed, eval_seed, level = _r(buf, "<HHQQI")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    ckpt = Checkpoint(bayesian=bool(flags & 1), seed=seed, eval_seed=eval_seed, level=level,
                      lineage=_r_str(buf), score=_r_str(buf), config=_r_str(buf, wide=True))
    (n,) = _r(buf, "<I")
    for _ in range(n):
        name = _r_str(buf)
        kind, eflags, ndim = _r(buf, "<BBB")
        if kind >= len(KINDS):
            raise CheckpointError(f"{name}: unknown kind code {kind}")
        shape = _r(buf, f"<{ndim}I")
        e = Entry(name, KINDS[kind], _r_arr(buf, shape))
        if eflags & 1:
            e.rho = _r_arr(buf, shape)
        if eflags & 4:
            e.mu0 = _r_arr(buf, shape)
            if eflags & 1:
                e.rho0 = _r_arr(buf, shape)
        if eflags & 2:
            size = int(np.prod(shape))
            bits = np.frombuffer(_r_exact(buf, (size + 7) // 8), dtype=np.uint8)
            e.mask = np.unpackbits(bits, count=size, bitorder="little").astype(bool).reshape(shape)
        ckpt.entries.append(e)
    if buf.read(1):
        raise CheckpointError("trailing bytes after last entry")
    return ckpt


def save(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(dumps(ckpt))


def load(path) -> Checkpoint:
    return loads(Path(path).read_bytes())


def from_ticket(ticket, eval_seed: int = 0, config_text: str = "") -> Checkpoint:
    """Checkpoint holding a ticket's mask, initial and (if trained) best parameters."""
    from .models import build

    model = build(ticket.config, 0)
    current = ticket.trained_state or ticket.init_state
    init = ticket.init_state
    masks = ticket.mask.masks
    entries = []
    for name, layer in model.layers.items():
        bayes = layer.weight.bayesian
        entries.append(Entry(
            name, layer.spec.kind, current[f"{name}.mu"],
            rho=current[f"{name}.rho"] if bayes else None,
            mu0=init[f"{name}.mu"], rho0=init[f"{name}.rho"] if bayes else None,
            mask=masks.get(name)))
        if layer.bias is not None:
            key = f"{name}.bias"
            entries.append(Entry(key, "bias", current[key], mu0=init[key]))
    for name in model.norms:
        for part in ("scale", "shift"):
            key = f"{name}.{part}"
            entries.append(Entry(key, part, current[key], mu0=init[key]))
    return Checkpoint(entries, bayesian=ticket.config.bayesian, seed=ticket.seed,
                      eval_seed=eval_seed, level=ticket.level, lineage=ticket.lineage,
                      score=ticket.score, config=config_text)


def to_ticket(ckpt: Checkpoint, model_config):
    """Rebuild the ticket; ``trained_state`` is the stored parameter set."""
    from .pruning import PruneMask
    from .tickets import Ticket

    init = ckpt.state(initial=True)
    trained = ckpt.state()
    mask = PruneMask({k: v.copy() for k, v in ckpt.masks.items()}, ckpt.level, ckpt.lineage)
    same = all(np.array_equal(init[k], trained[k]) for k in init)
    return Ticket(mask, init, model_config, ckpt.level, ckpt.score, ckpt.lineage, ckpt.seed,
                  trained_state=None if same else trained)
