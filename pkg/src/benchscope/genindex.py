"""Framework index generation from a platform stub jar.

A stub jar (android.jar shipped with each platform level) contains one
class file per public framework class.  Only the constant pool, the
this/super/interface references and the member name+descriptor pairs are
read; attributes and code are skipped wholesale.  The result is a
FrameworkIndex ready for the canonicalizer, serialized through the index
text format.
"""

from __future__ import annotations

import struct
import zipfile

from .hierarchy import FrameworkClass, FrameworkIndex

_MAGIC = 0xCAFEBABE

# constant pool entry payload sizes by tag, Utf8 (1) handled separately;
# Long/Double (5, 6) also occupy a second pool slot
_CP_SIZES = {3: 4, 4: 4, 5: 8, 6: 8, 7: 2, 8: 2, 9: 4, 10: 4, 11: 4,
             12: 4, 15: 3, 16: 2, 17: 4, 18: 4, 19: 2, 20: 2}


class ClassFileError(Exception):
    pass


def parse_class(data: bytes):
    """(this_name, super_name | None, interfaces, methods, fields) of one
    class file; member entries are (name, descriptor) pairs."""
    if len(data) < 10 or struct.unpack_from(">I", data, 0)[0] != _MAGIC:
        raise ClassFileError("not a class file (bad magic)")
    pool_count = struct.unpack_from(">H", data, 8)[0]
    off = 10
    utf8 = {}
    class_name_idx = {}
    index = 1
    try:
        while index < pool_count:
            tag = data[off]
            off += 1
            if tag == 1:
                length = struct.unpack_from(">H", data, off)[0]
                off += 2
                utf8[index] = data[off:off + length].decode("utf-8", "surrogatepass")
                off += length
            elif tag in _CP_SIZES:
                if tag == 7:
                    class_name_idx[index] = struct.unpack_from(">H", data, off)[0]
                off += _CP_SIZES[tag]
            else:
                raise ClassFileError("unknown constant pool tag %d" % tag)
            index += 2 if tag in (5, 6) else 1

        _access, this_idx, super_idx, iface_count = struct.unpack_from(">4H", data, off)
        off += 8
        interfaces = []
        for _ in range(iface_count):
            idx = struct.unpack_from(">H", data, off)[0]
            off += 2
            interfaces.append(utf8[class_name_idx[idx]])

        def members():
            nonlocal off
            count = struct.unpack_from(">H", data, off)[0]
            off += 2
            out = []
            for _ in range(count):
                _macc, name_idx, desc_idx, attr_count = struct.unpack_from(">4H", data, off)
                off += 8
                for _ in range(attr_count):
                    attr_len = struct.unpack_from(">I", data, off + 2)[0]
                    off += 6 + attr_len
                out.append((utf8[name_idx], utf8[desc_idx]))
            return out

        fields = members()
        methods = members()
        this_name = utf8[class_name_idx[this_idx]]
        super_name = utf8[class_name_idx[super_idx]] if super_idx else None
        return this_name, super_name, tuple(interfaces), methods, fields
    except (KeyError, IndexError, struct.error) as exc:
        raise ClassFileError("truncated or inconsistent class file: %s" % exc)


def build_index_from_jar(jar_path, prefixes=None) -> FrameworkIndex:
    """Index every class in the jar, optionally restricted to path prefixes."""
    classes = {}
    try:
        archive = zipfile.ZipFile(jar_path)
    except (OSError, zipfile.BadZipFile) as exc:
        raise ClassFileError("cannot open jar %s: %s" % (jar_path, exc))
    with archive:
        for name in sorted(archive.namelist()):
            if not name.endswith(".class") or name.endswith("module-info.class"):
                continue
            this_name, super_name, interfaces, methods, fields = \
                parse_class(archive.read(name))
            if prefixes and not any(
                    this_name == p or this_name.startswith(p.rstrip("/") + "/")
                    for p in prefixes):
                continue  # segment-exact so android never swallows androidx
            cls = FrameworkClass(super_name, interfaces)
            cls.methods.update(methods)
            cls.fields.update(fields)
            classes[this_name] = cls

    external = set()
    for cls in classes.values():
        for parent in ([cls.superclass] if cls.superclass else []) + list(cls.interfaces):
            if parent not in classes:
                external.add(parent)
    return FrameworkIndex(classes, external)
