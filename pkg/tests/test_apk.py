"""Container-level tests against the committed fixture APKs."""

import hashlib
import os
import zipfile

import pytest

from benchscope import apk

HERE = os.path.dirname(os.path.abspath(__file__))
FIXTURES = os.path.join(HERE, "fixtures")


def apk_path(name):
    return os.path.join(FIXTURES, "apks", name)


def test_minimal_apk_entries():
    entries = apk.open_apk(apk_path("minimal.apk"))
    assert entries.app_id == "minimal"
    assert len(entries.dex_payloads) == 1
    assert entries.dex_payloads[0][:4] == b"dex\n"
    assert entries.manifest_payload[:2] == b"\x03\x00"
    assert entries.total_uncompressed_bytes > 0


def test_app_id_override():
    entries = apk.open_apk(apk_path("minimal.apk"), app_id="custom-id")
    assert entries.app_id == "custom-id"


def test_app_id_strips_extension_case_insensitively(tmp_path):
    src = apk_path("minimal.apk")
    dst = tmp_path / "Sample.APK"
    dst.write_bytes(open(src, "rb").read())
    assert apk.open_apk(str(dst)).app_id == "Sample"


def test_source_digest_is_container_sha256():
    path = apk_path("minimal.apk")
    entries = apk.open_apk(path)
    with open(path, "rb") as handle:
        expected = hashlib.sha256(handle.read()).hexdigest()
    assert entries.source_digest == expected


def test_multidex_payload_order():
    path = apk_path("multidex.apk")
    entries = apk.open_apk(path)
    assert len(entries.dex_payloads) == 3
    # zipfile is the ordering oracle: payloads must be the root dex
    # entries in classes.dex, classes2.dex, classes3.dex order
    with zipfile.ZipFile(path) as archive:
        expected = [archive.read(n)
                    for n in ("classes.dex", "classes2.dex", "classes3.dex")]
    assert entries.dex_payloads == expected


def test_non_root_dex_and_resources_ignored():
    # every fixture carries assets/classes.dex and res/ junk entries
    entries = apk.open_apk(apk_path("minimal.apk"))
    assert all(p[:4] == b"dex\n" for p in entries.dex_payloads)


def test_duplicate_entries_resolve_last_wins():
    # legacy.apk stores stale AndroidManifest.xml and classes.dex entries
    # before the real ones; installers keep the later occurrence
    entries = apk.open_apk(apk_path("legacy.apk"))
    assert entries.manifest_payload != b"stale manifest bytes"
    assert entries.manifest_payload[:2] == b"\x03\x00"
    assert entries.dex_payloads[0] != b"stale dex bytes"
    assert entries.dex_payloads[0][:4] == b"dex\n"


def test_not_zip():
    with pytest.raises(apk.NotZip):
        apk.open_apk(apk_path(os.path.join("bad", "broken.bin")))


def test_missing_dex():
    with pytest.raises(apk.MissingDex):
        apk.open_apk(apk_path(os.path.join("bad", "nodex.apk")))


def test_missing_manifest():
    with pytest.raises(apk.MissingManifest):
        apk.open_apk(apk_path(os.path.join("bad", "nomanifest.apk")))


def test_corrupt_entry():
    with pytest.raises(apk.CorruptEntry):
        apk.open_apk(apk_path(os.path.join("bad", "corrupt.apk")))


def test_errors_share_base_class():
    for exc in (apk.NotZip, apk.MissingManifest, apk.MissingDex, apk.CorruptEntry):
        assert issubclass(exc, apk.ApkError)
