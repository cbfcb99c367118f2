"""DEX (Dalvik executable) identifier-pool parser.

Extracts the reference tables of a .dex payload: string pool, type
descriptors, prototypes, field/method references and class definitions
with their declared members.  Instruction streams are never decoded; the
id pools alone determine which members a payload can touch, which keeps
extraction stable across toolchain and opcode changes.

All multi-byte values are little-endian, offsets are absolute from byte 0,
variable-length counts use ULEB128 and string data is MUTF-8 (null byte
encoded as C0 80, supplementary characters as 3-byte surrogate halves).
"""

from __future__ import annotations

import struct
from collections import namedtuple
from dataclasses import dataclass, field

SUPPORTED_VERSIONS = (b"035", b"036", b"037", b"038", b"039")
NO_INDEX = 0xFFFFFFFF
ENDIAN_CONSTANT = 0x12345678

HEADER_SIZE = 0x70

# u4 fields following magic + checksum + signature, in file order.
_HEADER_WORDS = (
    "file_size", "header_size", "endian_tag", "link_size", "link_off",
    "map_off",
    "string_ids_size", "string_ids_off",
    "type_ids_size", "type_ids_off",
    "proto_ids_size", "proto_ids_off",
    "field_ids_size", "field_ids_off",
    "method_ids_size", "method_ids_off",
    "class_defs_size", "class_defs_off",
    "data_size", "data_off",
)


class DexError(Exception):
    """Base error for unusable DEX payloads."""


class BadMagic(DexError):
    pass


class UnsupportedVersion(DexError):
    pass


class OutOfBoundsOffset(DexError):
    pass


class MalformedMutf8(DexError):
    pass


# kind is "method" or "field"; descriptor is the field type descriptor or
# the method proto "(params)return" in DEX descriptor syntax.
MemberRef = namedtuple("MemberRef", "owner_class name descriptor kind")


@dataclass
class DexClass:
    superclass: str | None
    interfaces: tuple
    members: set = field(default_factory=set)


@dataclass
class DexPool:
    version: int
    strings: list
    types: list
    referenced_members: set
    defined_classes: dict


def type_path(descriptor: str) -> str:
    """L-type descriptors become slash paths; primitives and arrays pass through."""
    if descriptor.startswith("L") and descriptor.endswith(";"):
        return descriptor[1:-1]
    return descriptor


class _Reader:
    """Bounds-checked little-endian accessor over the payload."""

    def __init__(self, data: bytes):
        self.data = data

    def _check(self, off, n):
        if off < 0 or off + n > len(self.data):
            raise OutOfBoundsOffset("read of %d bytes at offset %d exceeds payload size %d"
                                    % (n, off, len(self.data)))

    def u2(self, off):
        self._check(off, 2)
        return struct.unpack_from("<H", self.data, off)[0]

    def u4(self, off):
        self._check(off, 4)
        return struct.unpack_from("<I", self.data, off)[0]

    def uleb128(self, off):
        result = 0
        shift = 0
        while True:
            self._check(off, 1)
            b = self.data[off]
            off += 1
            result |= (b & 0x7F) << shift
            if not b & 0x80:
                return result, off
            shift += 7
            if shift > 35:
                raise OutOfBoundsOffset("unterminated ULEB128 at offset %d" % off)


def _decode_mutf8(reader, off):
    """Decode a null-terminated MUTF-8 run into a Python string.

    Byte-level damage (bad continuation bytes, 4-byte forms, truncation) is
    a hard MalformedMutf8; unpaired surrogate code units are preserved
    as-is since obfuscators emit them in real payloads.
    """
    data = reader.data
    units = []
    while True:
        reader._check(off, 1)
        b = data[off]
        off += 1
        if b == 0:
            break
        if b < 0x80:
            units.append(b)
            continue
        if b >> 5 == 0b110:
            count = 1
        elif b >> 4 == 0b1110:
            count = 2
        else:
            raise MalformedMutf8("invalid MUTF-8 lead byte 0x%02x at offset %d" % (b, off - 1))
        reader._check(off, count)
        value = b & (0x1F if count == 1 else 0x0F)
        for _ in range(count):
            c = data[off]
            off += 1
            if c & 0xC0 != 0x80:
                raise MalformedMutf8("invalid MUTF-8 continuation byte 0x%02x at offset %d"
                                     % (c, off - 1))
            value = (value << 6) | (c & 0x3F)
        units.append(value)

    chars = []
    i = 0
    while i < len(units):
        u = units[i]
        if 0xD800 <= u <= 0xDBFF and i + 1 < len(units) and 0xDC00 <= units[i + 1] <= 0xDFFF:
            chars.append(chr(0x10000 + ((u - 0xD800) << 10) + (units[i + 1] - 0xDC00)))
            i += 2
        else:
            chars.append(chr(u))
            i += 1
    return "".join(chars), off


def _parse_type_list(reader, off):
    if off == 0:
        return ()
    size = reader.u4(off)
    return tuple(reader.u2(off + 4 + 2 * i) for i in range(size))


def parse_dex(payload: bytes) -> DexPool:
    """Parse one .dex payload into its identifier pools.

    Raises BadMagic / UnsupportedVersion for foreign or unknown payloads,
    OutOfBoundsOffset for truncation or wild offsets, MalformedMutf8 for
    damaged string data.  No silent repair.
    """
    if len(payload) < 8 or payload[:4] != b"dex\n" or payload[7] != 0:
        raise BadMagic("payload does not start with a DEX magic")
    version = payload[4:7]
    if version not in SUPPORTED_VERSIONS:
        raise UnsupportedVersion("DEX version %r not supported" % version.decode("ascii", "replace"))
    if len(payload) < HEADER_SIZE:
        raise OutOfBoundsOffset("payload shorter than the %d-byte header" % HEADER_SIZE)

    reader = _Reader(payload)
    words = struct.unpack_from("<20I", payload, 0x20)
    header = dict(zip(_HEADER_WORDS, words))
    if header["endian_tag"] != ENDIAN_CONSTANT:
        raise UnsupportedVersion("reverse-endian payload (endian_tag 0x%08x)" % header["endian_tag"])

    strings = []
    for i in range(header["string_ids_size"]):
        data_off = reader.u4(header["string_ids_off"] + 4 * i)
        _, pos = reader.uleb128(data_off)  # utf16_size, informational
        text, _ = _decode_mutf8(reader, pos)
        strings.append(text)

    def string_at(idx):
        if idx >= len(strings):
            raise OutOfBoundsOffset("string index %d out of range (%d strings)" % (idx, len(strings)))
        return strings[idx]

    type_descs = []
    for i in range(header["type_ids_size"]):
        type_descs.append(string_at(reader.u4(header["type_ids_off"] + 4 * i)))

    def desc_at(idx):
        if idx >= len(type_descs):
            raise OutOfBoundsOffset("type index %d out of range (%d types)" % (idx, len(type_descs)))
        return type_descs[idx]

    proto_descs = []
    for i in range(header["proto_ids_size"]):
        base = header["proto_ids_off"] + 12 * i
        return_idx = reader.u4(base + 4)
        params_off = reader.u4(base + 8)
        params = _parse_type_list(reader, params_off)
        proto_descs.append("(%s)%s" % ("".join(desc_at(t) for t in params), desc_at(return_idx)))

    field_refs = []
    for i in range(header["field_ids_size"]):
        base = header["field_ids_off"] + 8 * i
        class_idx = reader.u2(base)
        type_idx = reader.u2(base + 2)
        name_idx = reader.u4(base + 4)
        field_refs.append(MemberRef(type_path(desc_at(class_idx)), string_at(name_idx),
                                    desc_at(type_idx), "field"))

    method_refs = []
    for i in range(header["method_ids_size"]):
        base = header["method_ids_off"] + 8 * i
        class_idx = reader.u2(base)
        proto_idx = reader.u2(base + 2)
        name_idx = reader.u4(base + 4)
        if proto_idx >= len(proto_descs):
            raise OutOfBoundsOffset("proto index %d out of range (%d protos)"
                                    % (proto_idx, len(proto_descs)))
        method_refs.append(MemberRef(type_path(desc_at(class_idx)), string_at(name_idx),
                                     proto_descs[proto_idx], "method"))

    defined_classes = {}
    for i in range(header["class_defs_size"]):
        base = header["class_defs_off"] + 32 * i
        class_idx = reader.u4(base)
        # base + 4 is access_flags, not needed here
        superclass_idx = reader.u4(base + 8)
        interfaces_off = reader.u4(base + 12)
        class_data_off = reader.u4(base + 24)

        name = type_path(desc_at(class_idx))
        superclass = None if superclass_idx == NO_INDEX else type_path(desc_at(superclass_idx))
        interfaces = tuple(type_path(desc_at(t)) for t in _parse_type_list(reader, interfaces_off))
        cls = DexClass(superclass, interfaces)

        if class_data_off != 0:
            off = class_data_off
            static_n, off = reader.uleb128(off)
            instance_n, off = reader.uleb128(off)
            direct_n, off = reader.uleb128(off)
            virtual_n, off = reader.uleb128(off)
            # encoded fields and methods carry delta-coded pool indices,
            # reset at each list boundary.
            for count, refs in ((static_n, field_refs), (instance_n, field_refs)):
                idx = 0
                for _ in range(count):
                    diff, off = reader.uleb128(off)
                    _, off = reader.uleb128(off)  # access_flags
                    idx += diff
                    if idx >= len(refs):
                        raise OutOfBoundsOffset("encoded field index %d out of range" % idx)
                    cls.members.add(refs[idx])
            for count in (direct_n, virtual_n):
                idx = 0
                for _ in range(count):
                    diff, off = reader.uleb128(off)
                    _, off = reader.uleb128(off)  # access_flags
                    _, off = reader.uleb128(off)  # code_off
                    idx += diff
                    if idx >= len(method_refs):
                        raise OutOfBoundsOffset("encoded method index %d out of range" % idx)
                    cls.members.add(method_refs[idx])
        defined_classes[name] = cls

    return DexPool(
        version=int(version.decode("ascii")),
        strings=strings,
        types=[type_path(d) for d in type_descs],
        referenced_members=set(field_refs) | set(method_refs),
        defined_classes=defined_classes,
    )


def defined_members(pool: DexPool):
    """Union of every member declared by a class definition in the pool."""
    out = set()
    for cls in pool.defined_classes.values():
        out |= cls.members
    return out


def used_not_defined(pool: DexPool):
    """Members the payload references but does not itself define.

    This is the app's external API footprint: the id pools list every
    member any instruction could touch, and subtracting locally defined
    members leaves platform and library surface only.
    """
    return set(pool.referenced_members) - defined_members(pool)


def merge_pools(pools) -> DexPool:
    """Union several per-dex pools into one (multi-dex apps).

    Commutative and associative: string/type unions are re-sorted and
    classes defined in several payloads merge member sets, so payload
    order never changes the result.
    """
    pools = list(pools)
    if not pools:
        return DexPool(0, [], [], set(), {})
    strings = set()
    types = set()
    referenced = set()
    classes = {}
    for pool in pools:
        strings.update(pool.strings)
        types.update(pool.types)
        referenced.update(pool.referenced_members)
        for name, cls in pool.defined_classes.items():
            seen = classes.get(name)
            if seen is None:
                classes[name] = DexClass(cls.superclass, tuple(cls.interfaces), set(cls.members))
                continue
            seen.members |= cls.members
            supers = sorted(s for s in (seen.superclass, cls.superclass) if s is not None)
            seen.superclass = supers[0] if supers else None
            seen.interfaces = tuple(sorted(set(seen.interfaces) | set(cls.interfaces)))
    return DexPool(
        version=max(p.version for p in pools),
        strings=sorted(strings),
        types=sorted(types),
        referenced_members=referenced,
        defined_classes=classes,
    )
