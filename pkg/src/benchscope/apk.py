"""APK container access.

An APK is a ZIP archive; the only entries that matter here are the binary
manifest and the DEX payloads at the archive root (classes.dex,
classes2.dex, ...).  Resources, assets and native libraries are never
extracted.

ZIP64 archives, data-descriptor entries and duplicate entry names are all
legal in the wild; duplicates resolve last-wins, matching installer
behavior.  Reading is delegated to the standard zipfile machinery, which
implements exactly those container rules; this module owns entry
selection, ordering and error classification.
"""

from __future__ import annotations

import hashlib
import re
import zipfile
import zlib
from dataclasses import dataclass

MANIFEST_NAME = "AndroidManifest.xml"
_DEX_NAME = re.compile(r"classes(\d*)\.dex")


class ApkError(Exception):
    """Base error for unusable APK containers."""


class NotZip(ApkError):
    pass


class MissingManifest(ApkError):
    pass


class MissingDex(ApkError):
    pass


class CorruptEntry(ApkError):
    pass


@dataclass
class ApkEntries:
    app_id: str
    dex_payloads: list  # classes.dex first, then classes2.dex .. classesN.dex
    manifest_payload: bytes
    total_uncompressed_bytes: int
    source_digest: str  # sha256 of the container bytes, cache key material


def _dex_order(name):
    suffix = _DEX_NAME.fullmatch(name).group(1)
    return (int(suffix) if suffix else 1, name)


def open_apk(path, app_id=None) -> ApkEntries:
    """Read the manifest and every root-level DEX payload out of an APK.

    app_id defaults to the file name without its extension.  Raises NotZip
    for containers without a ZIP end record, MissingManifest / MissingDex
    when required entries are absent, CorruptEntry when a payload fails its
    CRC or does not decompress.
    """
    if app_id is None:
        app_id = re.sub(r"\.apk$", "", str(path).rsplit("/", 1)[-1], flags=re.IGNORECASE)

    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)

    try:
        archive = zipfile.ZipFile(path)
    except zipfile.BadZipFile as exc:
        raise NotZip("%s: %s" % (path, exc))

    with archive:
        # the name map is built from the central directory in file order,
        # so a repeated name already resolves to its last occurrence
        names = set(archive.namelist())
        dex_names = sorted((n for n in names if _DEX_NAME.fullmatch(n)), key=_dex_order)
        if MANIFEST_NAME not in names:
            raise MissingManifest("%s has no root %s entry" % (path, MANIFEST_NAME))
        if not dex_names:
            raise MissingDex("%s has no root classes.dex entry" % path)

        def read(name):
            try:
                return archive.read(name)
            except (zipfile.BadZipFile, zlib.error, EOFError) as exc:
                raise CorruptEntry("%s entry %s: %s" % (path, name, exc))

        manifest = read(MANIFEST_NAME)
        payloads = [read(n) for n in dex_names]
        total = sum(info.file_size for info in archive.infolist())

    return ApkEntries(
        app_id=app_id,
        dex_payloads=payloads,
        manifest_payload=manifest,
        total_uncompressed_bytes=total,
        source_digest=digest.hexdigest(),
    )
