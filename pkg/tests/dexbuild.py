"""Minimal DEX writer for fixture construction.

Deliberately independent of the package under test: every layout rule
here (table ordering, ULEB128, MUTF-8, delta-coded class data, map list)
is written against the published format, so the writer and the parser
only agree if both implement the format correctly.  Builders declare
their expected reference/definition sets, which the fixture generator
freezes as golden listings.
"""

from __future__ import annotations

import hashlib
import struct
import zlib

ACC_PUBLIC = 0x1
ACC_STATIC = 0x8
ACC_FINAL = 0x10
ACC_NATIVE = 0x100
ACC_ABSTRACT = 0x400

_PRIMITIVES = "VZBSCIJFD"

MAP_HEADER = 0x0000
MAP_STRING_ID = 0x0001
MAP_TYPE_ID = 0x0002
MAP_PROTO_ID = 0x0003
MAP_FIELD_ID = 0x0004
MAP_METHOD_ID = 0x0005
MAP_CLASS_DEF = 0x0006
MAP_MAP_LIST = 0x1000
MAP_TYPE_LIST = 0x1001
MAP_CLASS_DATA = 0x2000
MAP_STRING_DATA = 0x2002


def shorty_char(desc):
    return desc if desc in _PRIMITIVES else "L"


def encode_mutf8(text):
    out = bytearray()

    def put(unit):
        if unit == 0:
            out.extend(b"\xc0\x80")
        elif unit < 0x80:
            out.append(unit)
        elif unit < 0x800:
            out.extend((0xC0 | unit >> 6, 0x80 | unit & 0x3F))
        else:
            out.extend((0xE0 | unit >> 12, 0x80 | (unit >> 6) & 0x3F, 0x80 | unit & 0x3F))

    for ch in text:
        cp = ord(ch)
        if cp >= 0x10000:
            cp -= 0x10000
            put(0xD800 | cp >> 10)
            put(0xDC00 | cp & 0x3FF)
        else:
            put(cp)
    return bytes(out)


def uleb(value):
    out = bytearray()
    while True:
        b = value & 0x7F
        value >>= 7
        if value:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def utf16_key(text):
    # surrogatepass: obfuscated payloads carry lone surrogates legally
    data = text.encode("utf-16-le", "surrogatepass")
    return struct.unpack("<%dH" % (len(data) // 2), data)


def utf16_units(text):
    return len(text.encode("utf-16-le", "surrogatepass")) // 2


def type_path(desc):
    return desc[1:-1] if desc.startswith("L") and desc.endswith(";") else desc


def method_descriptor(params, ret):
    return "(%s)%s" % ("".join(params), ret)


class DexBuilder:
    def __init__(self, version=b"035"):
        self.version = version
        self.field_pool = set()   # (owner_desc, name, type_desc)
        self.method_pool = set()  # (owner_desc, name, params tuple, ret_desc)
        self.classes = {}         # desc -> spec dict
        self.extra_strings = set()

    # --- building blocks -------------------------------------------------

    def ref_field(self, owner, name, type_desc):
        self.field_pool.add((owner, name, type_desc))

    def ref_method(self, owner, name, params, ret):
        self.method_pool.add((owner, name, tuple(params), ret))

    def define_class(self, desc, superclass="Ljava/lang/Object;", interfaces=()):
        self.classes[desc] = {
            "super": superclass,
            "interfaces": tuple(interfaces),
            "static_fields": [],
            "instance_fields": [],
            "direct_methods": [],
            "virtual_methods": [],
        }

    def define_field(self, class_desc, name, type_desc, static=False,
                     flags=ACC_PUBLIC):
        spec = self.classes[class_desc]
        bucket = "static_fields" if static else "instance_fields"
        spec[bucket].append((name, type_desc, flags | (ACC_STATIC if static else 0)))
        self.ref_field(class_desc, name, type_desc)

    def define_method(self, class_desc, name, params, ret, direct=False,
                      flags=ACC_PUBLIC | ACC_NATIVE):
        spec = self.classes[class_desc]
        bucket = "direct_methods" if direct else "virtual_methods"
        spec[bucket].append((name, tuple(params), ret, flags))
        self.ref_method(class_desc, name, params, ret)

    # --- declared expectations (frozen into golden listings) -------------

    def expected_referenced(self):
        """(kind, owner_path, name, descriptor) for every id-pool entry."""
        out = set()
        for owner, name, type_desc in self.field_pool:
            out.add(("field", type_path(owner), name, type_desc))
        for owner, name, params, ret in self.method_pool:
            out.add(("method", type_path(owner), name, method_descriptor(params, ret)))
        return out

    def expected_defined(self):
        out = set()
        for desc, spec in self.classes.items():
            owner = type_path(desc)
            for name, type_desc, _flags in spec["static_fields"] + spec["instance_fields"]:
                out.add(("field", owner, name, type_desc))
            for name, params, ret, _flags in spec["direct_methods"] + spec["virtual_methods"]:
                out.add(("method", owner, name, method_descriptor(params, ret)))
        return out

    def expected_used_not_defined(self):
        return self.expected_referenced() - self.expected_defined()

    # --- assembly ---------------------------------------------------------

    def build(self):
        type_descs = set()
        strings = set(self.extra_strings)
        for owner, name, type_desc in self.field_pool:
            type_descs.update((owner, type_desc))
            strings.add(name)
        protos = set()
        for owner, name, params, ret in self.method_pool:
            type_descs.add(owner)
            type_descs.update(params)
            type_descs.add(ret)
            strings.add(name)
            protos.add((tuple(params), ret))
        for desc, spec in self.classes.items():
            type_descs.add(desc)
            if spec["super"] is not None:
                type_descs.add(spec["super"])
            type_descs.update(spec["interfaces"])
        shorties = {shorty_char(ret) + "".join(shorty_char(p) for p in params)
                    for params, ret in protos}
        strings |= shorties
        strings |= type_descs

        str_list = sorted(strings, key=utf16_key)
        str_idx = {s: i for i, s in enumerate(str_list)}
        type_list_sorted = sorted(type_descs, key=lambda d: str_idx[d])
        type_idx = {d: i for i, d in enumerate(type_list_sorted)}
        proto_list = sorted(protos, key=lambda pr: (type_idx[pr[1]],
                                                    tuple(type_idx[p] for p in pr[0])))
        proto_idx = {pr: i for i, pr in enumerate(proto_list)}
        field_list = sorted(self.field_pool,
                            key=lambda f: (type_idx[f[0]], str_idx[f[1]], type_idx[f[2]]))
        field_idx = {f: i for i, f in enumerate(field_list)}
        method_list = sorted(self.method_pool,
                             key=lambda m: (type_idx[m[0]], str_idx[m[1]],
                                            proto_idx[(m[2], m[3])]))
        method_idx = {m: i for i, m in enumerate(method_list)}
        class_order = self._topo_order()

        # fixed-size tables first, then the data section
        off = 0x70
        string_ids_off = off if str_list else 0
        off += 4 * len(str_list)
        type_ids_off = off if type_list_sorted else 0
        off += 4 * len(type_list_sorted)
        proto_ids_off = off if proto_list else 0
        off += 12 * len(proto_list)
        field_ids_off = off if field_list else 0
        off += 8 * len(field_list)
        method_ids_off = off if method_list else 0
        off += 8 * len(method_list)
        class_defs_off = off if class_order else 0
        off += 32 * len(class_order)
        data_off = off

        data = bytearray()
        map_items = []

        def data_pos():
            return data_off + len(data)

        def align4():
            while data_pos() % 4:
                data.append(0)

        # type lists: proto parameter lists and class interface lists
        type_list_offs = {}
        needed_lists = {pr[0] for pr in proto_list if pr[0]}
        needed_lists |= {spec["interfaces"] for spec in self.classes.values()
                         if spec["interfaces"]}
        for entry in sorted(needed_lists, key=lambda t: tuple(type_idx[d] for d in t)):
            align4()
            type_list_offs[entry] = data_pos()
            data.extend(struct.pack("<I", len(entry)))
            for d in entry:
                data.extend(struct.pack("<H", type_idx[d]))
        if needed_lists:
            first = min(type_list_offs.values())
            map_items.append((MAP_TYPE_LIST, len(needed_lists), first))

        # class data
        class_data_offs = {}
        for desc in class_order:
            spec = self.classes[desc]
            if not any(spec[k] for k in ("static_fields", "instance_fields",
                                         "direct_methods", "virtual_methods")):
                class_data_offs[desc] = 0
                continue
            class_data_offs[desc] = data_pos()
            blob = bytearray()
            blob += uleb(len(spec["static_fields"]))
            blob += uleb(len(spec["instance_fields"]))
            blob += uleb(len(spec["direct_methods"]))
            blob += uleb(len(spec["virtual_methods"]))
            for bucket in ("static_fields", "instance_fields"):
                prev = 0
                entries = sorted((field_idx[(desc, name, tdesc)], flags)
                                 for name, tdesc, flags in spec[bucket])
                for idx, flags in entries:
                    blob += uleb(idx - prev) + uleb(flags)
                    prev = idx
            for bucket in ("direct_methods", "virtual_methods"):
                prev = 0
                entries = sorted((method_idx[(desc, name, params, ret)], flags)
                                 for name, params, ret, flags in spec[bucket])
                for idx, flags in entries:
                    blob += uleb(idx - prev) + uleb(flags) + uleb(0)  # no code item
                    prev = idx
            data.extend(blob)
        defined = [d for d in class_order if class_data_offs[d]]
        if defined:
            map_items.append((MAP_CLASS_DATA, len(defined),
                              min(class_data_offs[d] for d in defined)))

        # string data
        string_data_offs = []
        for text in str_list:
            string_data_offs.append(data_pos())
            data.extend(uleb(utf16_units(text)))
            data.extend(encode_mutf8(text))
            data.append(0)
        if str_list:
            map_items.append((MAP_STRING_DATA, len(str_list), string_data_offs[0]))

        # map list
        align4()
        map_off = data_pos()
        head = [(MAP_HEADER, 1, 0)]
        if str_list:
            head.append((MAP_STRING_ID, len(str_list), string_ids_off))
        if type_list_sorted:
            head.append((MAP_TYPE_ID, len(type_list_sorted), type_ids_off))
        if proto_list:
            head.append((MAP_PROTO_ID, len(proto_list), proto_ids_off))
        if field_list:
            head.append((MAP_FIELD_ID, len(field_list), field_ids_off))
        if method_list:
            head.append((MAP_METHOD_ID, len(method_list), method_ids_off))
        if class_order:
            head.append((MAP_CLASS_DEF, len(class_order), class_defs_off))
        items = sorted(head + map_items + [(MAP_MAP_LIST, 1, map_off)],
                       key=lambda item: item[2])
        data.extend(struct.pack("<I", len(items)))
        for mtype, count, item_off in items:
            data.extend(struct.pack("<HHII", mtype, 0, count, item_off))

        file_size = data_off + len(data)
        out = bytearray(file_size)
        out[0:8] = b"dex\n" + self.version + b"\x00"
        struct.pack_into(
            "<20I", out, 0x20,
            file_size, 0x70, 0x12345678, 0, 0, map_off,
            len(str_list), string_ids_off,
            len(type_list_sorted), type_ids_off,
            len(proto_list), proto_ids_off,
            len(field_list), field_ids_off,
            len(method_list), method_ids_off,
            len(class_order), class_defs_off,
            len(data), data_off)

        pos = string_ids_off
        for sd_off in string_data_offs:
            struct.pack_into("<I", out, pos, sd_off)
            pos += 4
        pos = type_ids_off
        for d in type_list_sorted:
            struct.pack_into("<I", out, pos, str_idx[d])
            pos += 4
        pos = proto_ids_off
        for params, ret in proto_list:
            shorty = shorty_char(ret) + "".join(shorty_char(p) for p in params)
            struct.pack_into("<III", out, pos, str_idx[shorty], type_idx[ret],
                             type_list_offs.get(params, 0) if params else 0)
            pos += 12
        pos = field_ids_off
        for owner, name, tdesc in field_list:
            struct.pack_into("<HHI", out, pos, type_idx[owner], type_idx[tdesc],
                             str_idx[name])
            pos += 8
        pos = method_ids_off
        for owner, name, params, ret in method_list:
            struct.pack_into("<HHI", out, pos, type_idx[owner],
                             proto_idx[(params, ret)], str_idx[name])
            pos += 8
        pos = class_defs_off
        NO_INDEX = 0xFFFFFFFF
        for desc in class_order:
            spec = self.classes[desc]
            super_idx = (type_idx[spec["super"]] if spec["super"] is not None
                         else NO_INDEX)
            ifaces_off = (type_list_offs[spec["interfaces"]]
                          if spec["interfaces"] else 0)
            struct.pack_into("<8I", out, pos, type_idx[desc], ACC_PUBLIC, super_idx,
                             ifaces_off, NO_INDEX, 0, class_data_offs[desc], 0)
            pos += 32

        out[data_off:file_size] = data
        digest = hashlib.sha1(out[32:]).digest()
        out[12:32] = digest
        struct.pack_into("<I", out, 8, zlib.adler32(bytes(out[12:])) & 0xFFFFFFFF)
        return bytes(out)

    def _topo_order(self):
        remaining = dict(self.classes)
        order = []
        while remaining:
            ready = sorted(
                desc for desc, spec in remaining.items()
                if (spec["super"] not in remaining)
                and not any(i in remaining for i in spec["interfaces"]))
            if not ready:  # cycle: fall back to name order, parser won't mind
                ready = sorted(remaining)
            for desc in ready:
                order.append(desc)
                del remaining[desc]
        return order
