"""File IO: JSON models with located diagnostics, presets, lifted codes, families, packets and CSV."""

from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, TextIO, Tuple, Type, TypeVar, Union
import csv
import json
import logging
import struct
import sys

import numpy as np
from pydantic import BaseModel, ValidationError

from pbnc import config
from pbnc.errors import InputError
from pbnc.models.models import BatchEquation, DistFamily, LiftedCode, PacketBlock, Protomatrix
from pbnc.schemas.network import FamilyHeader
from pbnc.schemas.protomatrix import LiftedCodeFile, ProtomatrixFile
from pbnc.schemas.settings import BatchFile, BatchRecord
from pbnc.services.network_service import family_from_distributions, family_rows

logger = logging.getLogger(__name__)

ModelT = TypeVar("ModelT", bound=BaseModel)
PathLike = Union[str, Path]

PACKET_HEADER = struct.Struct("<3I")


# ---------------------------------------------------------------------------
# JSON and pydantic models
# ---------------------------------------------------------------------------

def _read_text(path: PathLike) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise InputError(f"Cannot read {path}: {e.strerror}")


def load_json(path: PathLike):
    text = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"{path}:{e.lineno}:{e.colno}: invalid JSON ({e.msg})")


def parse_model(data, model: Type[ModelT], source: str = "<input>") -> ModelT:
    try:
        return model.model_validate(data)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()
        )
        raise InputError(f"{source}: {problems}")


def load_model(path: PathLike, model: Type[ModelT]) -> ModelT:
    return parse_model(load_json(path), model, str(path))


def save_model(path: PathLike, model: BaseModel):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(model.model_dump_json(indent=2))
        tmp.replace(path)
    except OSError as e:
        logger.error(f"Error writing {path}: {str(e)}")
        raise InputError(f"Cannot write {path}: {e.strerror}")
    finally:
        if tmp.exists():
            tmp.unlink()


@contextmanager
def open_output(path: Optional[PathLike], binary: bool = False) -> Iterator[TextIO]:
    """Yield a handle on ``path``, or on stdout when no path is given."""
    if path is None:
        yield sys.stdout.buffer if binary else sys.stdout
        return
    try:
        handle = open(path, "wb" if binary else "w", **({} if binary else {"newline": ""}))
    except OSError as e:
        raise InputError(f"Cannot write {path}: {e.strerror}")
    try:
        yield handle
    finally:
        handle.close()


def write_csv(path: Optional[PathLike], header: Sequence[str], rows: Sequence[Sequence]):
    with open_output(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_json(path: Optional[PathLike], payload):
    with open_output(path) as handle:
        handle.write(json.dumps(payload, indent=2, default=_json_default))
        handle.write("\n")


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def sidecar_path(path: PathLike) -> Path:
    return Path(str(path) + ".config.json")


# ---------------------------------------------------------------------------
# Protomatrices and presets
# ---------------------------------------------------------------------------

def list_presets() -> List[str]:
    return sorted(p.stem for p in Path(config.PRESET_DIR).glob("*.json"))


def preset_path(name: str) -> Path:
    path = Path(config.PRESET_DIR) / f"{name}.json"
    if not path.exists():
        raise InputError(f"Unknown preset '{name}'; available: {', '.join(list_presets())}")
    return path


def load_protomatrix_file(path: Optional[PathLike] = None, preset: Optional[str] = None) -> ProtomatrixFile:
    if (path is None) == (preset is None):
        raise InputError("Give exactly one of a protomatrix file or a preset name")
    return load_model(preset_path(preset) if preset else path, ProtomatrixFile)


def to_protomatrix(data: ProtomatrixFile) -> Tuple[Protomatrix, np.ndarray]:
    B1 = np.asarray(data.B1, dtype=np.int64).reshape(data.n_c1, data.n_v)
    B2 = np.asarray(data.B2, dtype=np.int64).reshape(data.n_c2, data.n_v)
    return Protomatrix(B1, B2, n_core=data.n_core), np.asarray(data.delta, dtype=float)


def protomatrix_file(
    protomatrix: Protomatrix, delta: Sequence[float], M: int, m: int, **extra
) -> ProtomatrixFile:
    return ProtomatrixFile(
        m=m, M=M, n_v=protomatrix.n_v, n_c1=protomatrix.n_c1, n_c2=protomatrix.n_c2,
        B1=protomatrix.B1.tolist(), B2=protomatrix.B2.tolist(),
        delta=[float(d) for d in delta], n_core=protomatrix.n_core, **extra,
    )


# ---------------------------------------------------------------------------
# Lifted codes
# ---------------------------------------------------------------------------

def lifted_code_file(code: LiftedCode) -> LiftedCodeFile:
    proto = code.protomatrix
    T1 = [
        (r, int(c), int(label))
        for r, (cols, labels) in enumerate(zip(code.check_rows, code.check_labels))
        for c, label in zip(cols, labels)
    ]
    return LiftedCodeFile(
        m=code.m, M=code.M, n_v=proto.n_v, n_c1=proto.n_c1, n_c2=proto.n_c2,
        B1=proto.B1.tolist(), B2=proto.B2.tolist(), delta=[float(d) for d in code.delta],
        n_core=proto.n_core, Z1=code.Z1, Z2=code.Z2,
        T1=T1, T2=[row.tolist() for row in code.batch_rows], T2_types=code.batch_types.tolist(),
    )


def to_lifted_code(data: LiftedCodeFile) -> LiftedCode:
    proto, delta = to_protomatrix(data)
    n_checks = data.n_c1 * data.Z1 * data.Z2
    cols: List[List[int]] = [[] for _ in range(n_checks)]
    labels: List[List[int]] = [[] for _ in range(n_checks)]
    for row, col, label in sorted(data.T1):
        if row >= n_checks:
            raise InputError(f"T1 row {row} outside 0..{n_checks - 1}")
        cols[row].append(col)
        labels[row].append(label)
    return LiftedCode(
        protomatrix=proto, delta=delta, Z1=data.Z1, Z2=data.Z2, M=data.M, m=data.m,
        check_rows=tuple(np.asarray(c, dtype=np.int64) for c in cols),
        check_labels=tuple(np.asarray(lbl, dtype=np.int64) for lbl in labels),
        batch_rows=tuple(np.asarray(r, dtype=np.int64) for r in data.T2),
        batch_types=np.asarray(data.T2_types, dtype=np.int64),
    )


def save_lifted_code(path: PathLike, code: LiftedCode):
    save_model(path, lifted_code_file(code))


def load_lifted_code(path: PathLike) -> LiftedCode:
    return to_lifted_code(load_model(path, LiftedCodeFile))


# ---------------------------------------------------------------------------
# Rank-distribution families
# ---------------------------------------------------------------------------

def export_family(family: DistFamily, handle: TextIO):
    """Header comment with the family parameters, then one ``eps... h_0..h_M capacity`` row per member."""
    header = FamilyHeader(
        M=family.M, q=family.q, E=family.E, delta1=family.delta1, delta2=family.delta2,
        homogeneous=family.homogeneous,
    )
    handle.write(f"# {header.model_dump_json()}\n")
    for eps, h, cap in family_rows(family):
        values = [f"{e:.6g}" for e in eps] + [f"{p:.17g}" for p in h] + [f"{cap:.17g}"]
        handle.write(" ".join(values) + "\n")


def import_family(path: PathLike) -> DistFamily:
    lines = _read_text(path).splitlines()
    if not lines or not lines[0].startswith("#"):
        raise InputError(f"{path}:1: family files start with a '# {{header}}' line")
    try:
        header = parse_model(json.loads(lines[0][1:]), FamilyHeader, f"{path}:1")
    except json.JSONDecodeError as e:
        raise InputError(f"{path}:1:{e.colno + 1}: invalid family header ({e.msg})")
    width = header.E + header.M + 2
    eps, dists = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            values = [float(v) for v in line.split()]
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric entry")
        if len(values) != width:
            raise InputError(f"{path}:{lineno}: expected {width} values, found {len(values)}")
        eps.append(values[: header.E])
        dists.append(values[header.E: header.E + header.M + 1])
    if not dists:
        raise InputError(f"{path}: family has no members")
    try:
        return family_from_distributions(
            dists, eps, header.M, header.q, header.delta1, header.delta2, header.E, header.homogeneous
        )
    except InputError as e:
        raise InputError(f"{path}: {e.detail}")


# ---------------------------------------------------------------------------
# Packets and batches
# ---------------------------------------------------------------------------

def write_packets(path: Optional[PathLike], block: PacketBlock):
    with open_output(path, binary=True) as handle:
        handle.write(PACKET_HEADER.pack(block.T, block.count, block.m))
        handle.write(block.payload.astype(np.uint8).tobytes(order="C"))


def read_packets(path: PathLike) -> PacketBlock:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise InputError(f"Cannot read {path}: {e.strerror}")
    if len(raw) < PACKET_HEADER.size:
        raise InputError(f"{path}: truncated packet header")
    T, count, m = PACKET_HEADER.unpack_from(raw)
    body = raw[PACKET_HEADER.size:]
    if len(body) != T * count:
        raise InputError(f"{path}: expected {T * count} symbols, found {len(body)}")
    if not 1 <= m <= 8:
        raise InputError(f"{path}: field degree {m} outside 1..8")
    payload = np.frombuffer(body, dtype=np.uint8).reshape(T, count).astype(np.int64)
    return PacketBlock(payload, m)


def batch_file(batches: Sequence[BatchEquation], M: int, T: int, K: int, m: int, precode_seed: int = 0) -> BatchFile:
    return BatchFile(
        m=m, M=M, T=T, K=K, precode_seed=precode_seed,
        batches=[
            BatchRecord(index_set=b.index_set.tolist(), G=b.G.tolist(), H=b.H.tolist(), Y=b.Y.tolist())
            for b in batches
        ],
    )


def to_batches(data: BatchFile) -> List[BatchEquation]:
    batches = []
    for k, record in enumerate(data.batches):
        G = np.asarray(record.G, dtype=np.int64).reshape(len(record.index_set), data.M)
        H = np.eye(data.M, dtype=np.int64) if record.H is None else np.asarray(record.H, dtype=np.int64).reshape(data.M, -1)
        Y = np.asarray(record.Y, dtype=np.int64).reshape(data.T, H.shape[1])
        if any(not 0 <= v < data.K for v in record.index_set):
            raise InputError(f"batch {k}: index set references a VN outside 0..{data.K - 1}")
        batches.append(BatchEquation(np.asarray(record.index_set, dtype=np.int64), G, H, Y))
    return batches
