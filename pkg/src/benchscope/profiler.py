"""App API profiling and corpus aggregation.

An app's API profile is the set of platform surface elements it depends
on: manifest tokens, members it references but does not define, and
framework callbacks it implements.  Member refs are canonicalized to
their topmost declaring framework class, then filtered:

  * members whose name is a single code point are dropped (obfuscator
    output carries no API identity),
  * members are kept only under the platform prefixes android, java, org
    and com/android (segment-exact, so androidx does not ride along),
  * manifest tokens are exempt from both filters.

Corpus aggregation counts each app at most once per ref and keys the
per-level breakdown by target SDK level.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

from . import axml, dex, hierarchy
from .apiref import ApiRef, parse_ref
from .apk import ApkEntries

RETAINED_ROOTS = ("android", "java", "org")
RETAINED_PAIR = ("com", "android")


class ProfileError(Exception):
    """Base error for profiling and aggregation."""


class DuplicateAppId(ProfileError):
    def __init__(self, app_ids):
        super().__init__("app ids present on both sides: %s" % ", ".join(sorted(app_ids)))
        self.app_ids = frozenset(app_ids)


@dataclass(frozen=True)
class AppProfile:
    app_id: str
    min_level: int
    target_level: int
    apis: frozenset
    source_hash: str


@dataclass
class CorpusStore:
    corpus_size: int = 0
    usage: dict = field(default_factory=dict)         # ApiRef -> app count
    level_counts: dict = field(default_factory=dict)  # target level -> app count
    skipped_out_of_range: int = 0
    duplicate_ids: int = 0
    app_ids: set = field(default_factory=set)


def is_obfuscated(name: str) -> bool:
    """Single code point member names carry no API identity."""
    return len(name) == 1


def has_retained_prefix(class_path: str) -> bool:
    """Platform prefix test, segment-exact: android/... yes, androidx/... no."""
    segments = class_path.split("/")
    if segments[0] in RETAINED_ROOTS:
        return True
    return tuple(segments[:2]) == RETAINED_PAIR


def profile_apk(entries: ApkEntries, index: hierarchy.FrameworkIndex) -> AppProfile:
    """Extract one app's API profile from its container payloads.

    Deterministic: the same payload bytes and index always hash to the
    same profile.  Dex payload order never matters because the pools are
    unioned before the used-not-defined subtraction.
    """
    tree = axml.parse_manifest(entries.manifest_payload)
    levels = axml.sdk_levels(tree)
    refs = set(axml.manifest_api_tokens(tree))

    pool = dex.merge_pools(dex.parse_dex(p) for p in entries.dex_payloads)
    members = {hierarchy.canonical_declaring_class(index, m)
               for m in dex.used_not_defined(pool)}
    members |= hierarchy.framework_callbacks(index, pool.defined_classes)

    for member in members:
        if is_obfuscated(member.name):
            continue
        if not has_retained_prefix(member.owner_class):
            continue
        refs.add(ApiRef(member.kind, member.owner_class, member.name, member.descriptor))

    digest = hashlib.sha256()
    digest.update(struct.pack("<I", len(entries.manifest_payload)))
    digest.update(entries.manifest_payload)
    for payload in entries.dex_payloads:
        digest.update(struct.pack("<I", len(payload)))
        digest.update(payload)

    return AppProfile(
        app_id=entries.app_id,
        min_level=levels.min_level,
        target_level=levels.target_level,
        apis=frozenset(refs),
        source_hash=digest.hexdigest(),
    )


def merge_corpus(profiles, level_range) -> CorpusStore:
    """Aggregate profiles into a usage store.

    Apps whose target level falls outside level_range are skipped and
    counted; a repeated app_id is skipped and counted as a duplicate.
    Each surviving app contributes exactly one count per distinct ref.
    """
    lo, hi = level_range
    store = CorpusStore()
    for profile in profiles:
        if not lo <= profile.target_level <= hi:
            store.skipped_out_of_range += 1
            continue
        if profile.app_id in store.app_ids:
            store.duplicate_ids += 1
            continue
        store.app_ids.add(profile.app_id)
        store.corpus_size += 1
        store.level_counts[profile.target_level] = \
            store.level_counts.get(profile.target_level, 0) + 1
        for ref in profile.apis:
            store.usage[ref] = store.usage.get(ref, 0) + 1
    return store


def combine_stores(left: CorpusStore, right: CorpusStore) -> CorpusStore:
    """Merge two shard stores; commutative and associative.

    Shards must cover disjoint app sets: a store only has per-ref counts,
    so a cross-shard duplicate cannot be subtracted back out and raises
    DuplicateAppId instead.
    """
    overlap = left.app_ids & right.app_ids
    if overlap:
        raise DuplicateAppId(overlap)
    merged = CorpusStore(
        corpus_size=left.corpus_size + right.corpus_size,
        skipped_out_of_range=left.skipped_out_of_range + right.skipped_out_of_range,
        duplicate_ids=left.duplicate_ids + right.duplicate_ids,
        app_ids=left.app_ids | right.app_ids,
    )
    for source in (left, right):
        for ref, count in source.usage.items():
            merged.usage[ref] = merged.usage.get(ref, 0) + count
        for level, count in source.level_counts.items():
            merged.level_counts[level] = merged.level_counts.get(level, 0) + count
    return merged


def profile_to_json(profile: AppProfile) -> str:
    record = {
        "app_id": profile.app_id,
        "min_level": profile.min_level,
        "target_level": profile.target_level,
        "source_hash": profile.source_hash,
        "apis": sorted(ref.serialize() for ref in profile.apis),
    }
    return json.dumps(record, sort_keys=True, ensure_ascii=False)


def profile_from_json(line: str) -> AppProfile:
    record = json.loads(line)
    return AppProfile(
        app_id=record["app_id"],
        min_level=int(record["min_level"]),
        target_level=int(record["target_level"]),
        apis=frozenset(parse_ref(s) for s in record["apis"]),
        source_hash=record["source_hash"],
    )


def write_profiles(profiles, path):
    """Profile store: one JSON record per line, ordered by app_id."""
    ordered = sorted(profiles, key=lambda p: p.app_id)
    with open(path, "w", encoding="utf-8") as handle:
        for profile in ordered:
            handle.write(profile_to_json(profile))
            handle.write("\n")


def read_profiles(path):
    out = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                out.append(profile_from_json(line))
    return out


def write_corpus(store: CorpusStore, path):
    """Corpus store: header lines with the aggregate counters, then a
    sorted ref<TAB>count table."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("#corpus_size\t%d\n" % store.corpus_size)
        for level in sorted(store.level_counts):
            handle.write("#level\t%d\t%d\n" % (level, store.level_counts[level]))
        handle.write("#skipped_out_of_range\t%d\n" % store.skipped_out_of_range)
        handle.write("#duplicate_ids\t%d\n" % store.duplicate_ids)
        for ref in sorted(store.usage, key=lambda r: r.serialize()):
            handle.write("%s\t%d\n" % (ref.serialize(), store.usage[ref]))


def read_corpus(path) -> CorpusStore:
    store = CorpusStore()
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                fields = line[1:].split("\t")
                if fields[0] == "corpus_size":
                    store.corpus_size = int(fields[1])
                elif fields[0] == "level":
                    store.level_counts[int(fields[1])] = int(fields[2])
                elif fields[0] == "skipped_out_of_range":
                    store.skipped_out_of_range = int(fields[1])
                elif fields[0] == "duplicate_ids":
                    store.duplicate_ids = int(fields[1])
                continue
            ref_text, count = line.split("\t")
            store.usage[parse_ref(ref_text)] = int(count)
    return store
