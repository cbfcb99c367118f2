"""Canonical API reference records shared across the toolchain.

An ApiRef names one observable element of the platform surface an app
depends on: a framework method or field, or a manifest element or
attribute token.  Refs serialize to a stable one-line form used by every
on-disk store:

    kind|class|member|descriptor

member and descriptor are empty for manifest tokens.  class holds the
slash-separated class path for members and the element name for manifest
tokens.
"""

from __future__ import annotations

from dataclasses import dataclass

KIND_METHOD = "method"
KIND_FIELD = "field"
KIND_MANIFEST_ELEMENT = "manifest-element"
KIND_MANIFEST_ATTRIBUTE = "manifest-attribute"

KINDS = (KIND_METHOD, KIND_FIELD, KIND_MANIFEST_ELEMENT, KIND_MANIFEST_ATTRIBUTE)


@dataclass(frozen=True, order=True)
class ApiRef:
    kind: str
    class_path: str
    member: str = ""
    descriptor: str = ""

    def serialize(self) -> str:
        return "|".join((self.kind, self.class_path, self.member, self.descriptor))


def parse_ref(line: str) -> ApiRef:
    """Inverse of ApiRef.serialize.  Raises ValueError on malformed lines."""
    parts = line.rstrip("\n").split("|")
    if len(parts) != 4:
        raise ValueError("expected 4 |-separated fields, got %d: %r" % (len(parts), line))
    kind, class_path, member, descriptor = parts
    if kind not in KINDS:
        raise ValueError("unknown ref kind %r" % kind)
    if not class_path:
        raise ValueError("empty class field in %r" % line)
    return ApiRef(kind, class_path, member, descriptor)
