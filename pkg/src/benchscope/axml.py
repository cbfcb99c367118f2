"""Binary AndroidManifest.xml (AXML) parser.

APK manifests ship in the resource-table binary XML encoding, not text.
The file is a sequence of length-prefixed chunks: one string pool, an
optional attribute resource-id map, then namespace/element events in
document order.  This module rebuilds the element tree with typed
attribute values, extracts the declared SDK levels and turns element and
attribute names into manifest API tokens.

Every chunk starts with u2 type, u2 header_size, u4 chunk_size
(little-endian); chunk_size spans the whole chunk including its header.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from xml.etree import ElementTree
from xml.sax.saxutils import escape, quoteattr

from .apiref import ApiRef, KIND_MANIFEST_ATTRIBUTE, KIND_MANIFEST_ELEMENT

CHUNK_XML = 0x0003
CHUNK_STRING_POOL = 0x0001
CHUNK_RESOURCE_MAP = 0x0180
CHUNK_START_NAMESPACE = 0x0100
CHUNK_END_NAMESPACE = 0x0101
CHUNK_START_ELEMENT = 0x0102
CHUNK_END_ELEMENT = 0x0103
CHUNK_CDATA = 0x0104

UTF8_FLAG = 1 << 8

TYPE_NULL = 0x00
TYPE_REFERENCE = 0x01
TYPE_ATTRIBUTE = 0x02
TYPE_STRING = 0x03
TYPE_FLOAT = 0x04
TYPE_INT_DEC = 0x10
TYPE_INT_HEX = 0x11
TYPE_INT_BOOLEAN = 0x12

ANDROID_NS = "http://schemas.android.com/apk/res/android"

# Fallback names for well-known attribute resource ids; only consulted when
# an obfuscated pool maps an attribute name to the empty string.
_KNOWN_ATTR_IDS = {
    0x01010000: "theme",
    0x01010001: "label",
    0x01010002: "icon",
    0x01010003: "name",
    0x01010006: "permission",
    0x0101000F: "debuggable",
    0x01010010: "exported",
    0x0101020C: "minSdkVersion",
    0x0101021B: "versionCode",
    0x0101021C: "versionName",
    0x01010270: "targetSdkVersion",
    0x01010271: "maxSdkVersion",
}


class AxmlError(Exception):
    """Base error for unusable binary XML payloads."""


class NotBinaryXml(AxmlError):
    pass


class TruncatedChunk(AxmlError):
    pass


class DanglingEndTag(AxmlError):
    pass


@dataclass(frozen=True)
class Reference:
    """A resource reference attribute value (@0x7f......)."""
    resid: int


@dataclass
class ManifestElement:
    name: str
    attributes: dict = field(default_factory=dict)  # qualified name -> typed value
    children: list = field(default_factory=list)
    ns_uri: str | None = None

    def attr(self, local_name):
        """Value of the attribute with the given local name, any namespace."""
        for qname, value in self.attributes.items():
            if qname.rsplit(":", 1)[-1] == local_name:
                return value
        return None

    def find(self, name):
        for child in self.children:
            if child.name == name:
                return child
        return None


@dataclass
class ManifestTree:
    root: ManifestElement
    strings: list
    resource_map: list
    namespaces: list  # (prefix, uri) in declaration order

    def walk(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


@dataclass(frozen=True)
class SdkLevels:
    min_level: int
    target_level: int


def _parse_string_pool(data, chunk_off, header_size, chunk_size):
    count, style_count, flags, strings_start, _styles_start = struct.unpack_from(
        "<5I", data, chunk_off + 8)
    offsets = struct.unpack_from("<%dI" % count, data, chunk_off + header_size)
    base = chunk_off + strings_start
    pool = []
    for off in offsets:
        pos = base + off
        if pos >= chunk_off + chunk_size:
            raise TruncatedChunk("string offset %d outside pool chunk" % off)
        try:
            if flags & UTF8_FLAG:
                pool.append(_read_utf8(data, pos))
            else:
                pool.append(_read_utf16(data, pos))
        except (struct.error, UnicodeDecodeError, IndexError) as exc:
            raise TruncatedChunk("damaged string data at offset %d: %s" % (pos, exc))
    return pool


def _read_utf16(data, pos):
    # u2 length in UTF-16 units; high bit flags a second u2 extending to 31 bits
    n = struct.unpack_from("<H", data, pos)[0]
    pos += 2
    if n & 0x8000:
        n = ((n & 0x7FFF) << 16) | struct.unpack_from("<H", data, pos)[0]
        pos += 2
    end = pos + 2 * n
    if end > len(data):
        raise TruncatedChunk("UTF-16 string runs past end of pool")
    return data[pos:end].decode("utf-16-le", "surrogatepass")


def _read_utf8(data, pos):
    # two lengths (UTF-16 units, then bytes), each u1 with high-bit extension
    def length(pos):
        n = data[pos]
        pos += 1
        if n & 0x80:
            n = ((n & 0x7F) << 8) | data[pos]
            pos += 1
        return n, pos

    _, pos = length(pos)
    nbytes, pos = length(pos)
    end = pos + nbytes
    if end > len(data):
        raise TruncatedChunk("UTF-8 string runs past end of pool")
    return data[pos:end].decode("utf-8")


def _decode_attr_value(dtype, data_word, raw_idx, pool):
    if dtype == TYPE_STRING:
        idx = raw_idx if raw_idx != 0xFFFFFFFF else data_word
        if idx < len(pool):
            return pool[idx]
        raise TruncatedChunk("string attribute index %d outside pool" % idx)
    if dtype in (TYPE_INT_DEC, TYPE_INT_HEX):
        return data_word
    if dtype == TYPE_INT_BOOLEAN:
        return data_word != 0
    if dtype in (TYPE_REFERENCE, TYPE_ATTRIBUTE):
        return Reference(data_word)
    if dtype == TYPE_FLOAT:
        return struct.unpack("<f", struct.pack("<I", data_word))[0]
    if dtype == TYPE_NULL:
        return ""
    return data_word  # dimensions, fractions, colors: keep the raw word


def parse_manifest(payload: bytes) -> ManifestTree:
    """Parse a binary manifest payload into its full element tree.

    Raises NotBinaryXml when the payload is not the binary XML container
    (e.g. someone zipped a plain-text manifest), TruncatedChunk when a
    chunk or string runs past its declared bounds, DanglingEndTag when
    element events do not nest.
    """
    if len(payload) < 8:
        raise NotBinaryXml("payload too short for a chunk header")
    ftype, fheader, fsize = struct.unpack_from("<HHI", payload, 0)
    if ftype != CHUNK_XML:
        raise NotBinaryXml("first chunk type 0x%04x is not a binary XML document" % ftype)
    if fsize > len(payload) or fheader < 8:
        raise TruncatedChunk("document chunk declares %d bytes, payload has %d"
                             % (fsize, len(payload)))

    pool = []
    resource_map = []
    namespaces = []
    uri_prefix = {}
    root = None
    stack = []

    off = fheader
    while off + 8 <= fsize:
        ctype, cheader, csize = struct.unpack_from("<HHI", payload, off)
        if csize < 8 or off + csize > fsize:
            raise TruncatedChunk("chunk 0x%04x at offset %d declares %d bytes"
                                 % (ctype, off, csize))

        if ctype == CHUNK_STRING_POOL:
            pool = _parse_string_pool(payload, off, cheader, csize)
        elif ctype == CHUNK_RESOURCE_MAP:
            n = (csize - cheader) // 4
            resource_map = list(struct.unpack_from("<%dI" % n, payload, off + cheader))
        elif ctype == CHUNK_START_NAMESPACE:
            prefix_idx, uri_idx = struct.unpack_from("<II", payload, off + 16)
            prefix = pool[prefix_idx] if prefix_idx < len(pool) else ""
            uri = pool[uri_idx] if uri_idx < len(pool) else ""
            namespaces.append((prefix, uri))
            uri_prefix.setdefault(uri, prefix)
        elif ctype == CHUNK_END_NAMESPACE:
            pass
        elif ctype == CHUNK_START_ELEMENT:
            element = _parse_element(payload, off, cheader, pool, resource_map)
            if stack:
                stack[-1].children.append(element)
            elif root is None:
                root = element
            else:
                raise DanglingEndTag("second root element %r" % element.name)
            stack.append(element)
        elif ctype == CHUNK_END_ELEMENT:
            name_idx = struct.unpack_from("<I", payload, off + 20)[0]
            name = pool[name_idx] if name_idx < len(pool) else ""
            if not stack:
                raise DanglingEndTag("end tag %r with no open element" % name)
            if stack[-1].name != name:
                raise DanglingEndTag("end tag %r closes open element %r"
                                     % (name, stack[-1].name))
            stack.pop()
        # CDATA and unknown chunk types carry no tree structure: skip.
        off += csize

    if stack:
        raise DanglingEndTag("document ends with %d unclosed element(s)" % len(stack))
    if root is None:
        raise TruncatedChunk("document ends before any element chunk")
    return ManifestTree(root, pool, resource_map, namespaces)


def _parse_element(payload, off, cheader, pool, resource_map):
    ns_idx, name_idx, attr_start, _attr_size, attr_count, _id_idx, _class_idx, _style_idx = \
        struct.unpack_from("<IIHHHHHH", payload, off + 16)
    name = pool[name_idx] if name_idx < len(pool) else ""
    ns_uri = pool[ns_idx] if ns_idx != 0xFFFFFFFF and ns_idx < len(pool) else None
    element = ManifestElement(name, ns_uri=ns_uri)

    base = off + 16 + attr_start
    for i in range(attr_count):
        a = base + 20 * i
        # layout: u4 ns, u4 name, u4 raw_value, u2 size, u1 res0, u1 dataType, u4 data
        ans, aname, raw = struct.unpack_from("<III", payload, a)
        dtype = payload[a + 15]
        data_word = struct.unpack_from("<I", payload, a + 16)[0]

        local = pool[aname] if aname < len(pool) else ""
        if not local and aname < len(resource_map):
            local = _KNOWN_ATTR_IDS.get(resource_map[aname], "")
        value = _decode_attr_value(dtype, data_word, raw, pool)
        if ans != 0xFFFFFFFF and ans < len(pool):
            uri = pool[ans]
            prefix = "android" if uri == ANDROID_NS else None
            qname = "%s:%s" % (prefix or "ns0", local)
        else:
            qname = local
        element.attributes[qname] = value
    return element


def sdk_levels(tree: ManifestTree) -> SdkLevels:
    """Declared SDK level range, defaults applied and clamped to [1, 40].

    A missing uses-sdk element or attribute falls back to level 1 for min
    and to min for target, matching installer behavior.
    """
    min_level, target_level = 1, None
    uses_sdk = tree.root.find("uses-sdk")
    if uses_sdk is not None:
        min_level = _coerce_level(uses_sdk.attr("minSdkVersion"), 1)
        target_level = _coerce_level(uses_sdk.attr("targetSdkVersion"), None)
    if target_level is None:
        target_level = min_level
    min_level = max(1, min(min_level, 40))
    target_level = max(min_level, min(target_level, 40))
    return SdkLevels(min_level, target_level)


def _coerce_level(value, default):
    if isinstance(value, bool) or value is None or isinstance(value, Reference):
        return default
    if isinstance(value, int):
        return value
    try:
        return int(str(value), 0)
    except ValueError:
        return default  # codename previews carry letters; treat as undeclared


def manifest_api_tokens(tree: ManifestTree):
    """Manifest surface as ApiRefs: one per element name, one per
    (element, attribute local name) pair."""
    tokens = set()
    for element in tree.walk():
        if not element.name:
            continue
        tokens.add(ApiRef(KIND_MANIFEST_ELEMENT, element.name))
        for qname in element.attributes:
            local = qname.rsplit(":", 1)[-1]
            if local:
                tokens.add(ApiRef(KIND_MANIFEST_ATTRIBUTE, element.name, local))
    return tokens


def _value_text(value):
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, Reference):
        return "@0x%08x" % value.resid
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_xml(tree: ManifestTree) -> str:
    """Deterministic textual rendering of the tree.

    Attribute and namespace order follow the document; the Android
    namespace always renders with the android: prefix.
    """
    nsmap = {}
    for prefix, uri in tree.namespaces:
        nsmap.setdefault(uri, prefix)
    nsmap[ANDROID_NS] = "android"

    lines = ['<?xml version="1.0" encoding="utf-8"?>']

    def render(element, depth):
        indent = "  " * depth
        parts = [element.name]
        if depth == 0:
            for uri, prefix in sorted(nsmap.items(), key=lambda kv: kv[1]):
                parts.append('xmlns:%s=%s' % (prefix, quoteattr(uri)))
        for qname, value in element.attributes.items():
            parts.append("%s=%s" % (qname, quoteattr(_value_text(value))))
        open_tag = " ".join(parts)
        if element.children:
            lines.append("%s<%s>" % (indent, open_tag))
            for child in element.children:
                render(child, depth + 1)
            lines.append("%s</%s>" % (indent, element.name))
        else:
            lines.append("%s<%s/>" % (indent, open_tag))

    render(tree.root, 0)
    return "\n".join(lines) + "\n"


def from_xml(text: str) -> ManifestTree:
    """Parse the textual rendering back into a tree (values stay strings)."""
    etree_root = ElementTree.fromstring(text)
    namespaces = []

    def local_tag(tag):
        if tag.startswith("{"):
            uri, _, local = tag[1:].partition("}")
            return local, uri
        return tag, None

    def convert(node):
        name, uri = local_tag(node.tag)
        element = ManifestElement(name, ns_uri=uri)
        for key, value in node.attrib.items():
            aname, auri = local_tag(key)
            if auri == ANDROID_NS:
                element.attributes["android:%s" % aname] = value
            elif auri:
                element.attributes["ns0:%s" % aname] = value
            else:
                element.attributes[aname] = value
        for child in node:
            element.children.append(convert(child))
        return element

    root = convert(etree_root)
    uris = set()
    for node in ElementTree.ElementTree(etree_root).iter():
        _, uri = local_tag(node.tag)
        if uri:
            uris.add(uri)
        for key in node.attrib:
            _, auri = local_tag(key)
            if auri:
                uris.add(auri)
    for uri in sorted(uris):
        namespaces.append(("android" if uri == ANDROID_NS else "ns0", uri))
    return ManifestTree(root, [], [], namespaces)
