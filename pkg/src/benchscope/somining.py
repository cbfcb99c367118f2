"""Stack Exchange data-dump mining.

Classifies APIs by developer attention: an API is relevant when at least
one Android-tagged discussion mentions it, security-related when such a
discussion also carries a security tag.  A discussion unit is a question
together with its answers; tags come from the question.  Only units whose
last activity falls on or after the cutoff count, so dead threads about
long-removed APIs do not inflate relevance.

Dump rows are <row .../> elements with XML-escaped attributes; Tags uses
the angle-bracket form <tag1><tag2>.  Mentions match whole tokens: the
simple class name and the member name must both occur, token boundary
being any character outside [A-Za-z0-9_$], case-sensitive.
"""

from __future__ import annotations

import html
import re
from dataclasses import dataclass, field
from datetime import datetime
from xml.etree import ElementTree

from .apiref import ApiRef, parse_ref, KIND_METHOD, KIND_FIELD

DEFAULT_CUTOFF = datetime(2015, 1, 1)
ANDROID_TAG = "android"
BASE_SECURITY_TAGS = frozenset({"security"})

_TOKEN_RE = re.compile(r"[A-Za-z0-9_$]+")
_TAG_RE = re.compile(r"<([^<>]+)>")
_WORD_SAFE_RE = re.compile(r"[A-Za-z0-9_$]+\Z")


class MiningError(Exception):
    """Base error for unusable dump files."""


class ParseError(MiningError):
    def __init__(self, where, message):
        super().__init__("%s: %s" % (where, message))
        self.where = where


@dataclass(frozen=True)
class DiscussionUnit:
    question_id: int
    tags: frozenset
    text: str
    created: datetime
    last_activity: datetime


@dataclass
class PostIndex:
    android_count: dict = field(default_factory=dict)   # ApiRef -> unit count
    security_count: dict = field(default_factory=dict)
    total_android: int = 0
    total_security: int = 0

    def merge(self, other):
        """Add disjoint shards (split by question id ranges); associative."""
        merged = PostIndex(dict(self.android_count), dict(self.security_count),
                           self.total_android + other.total_android,
                           self.total_security + other.total_security)
        for ref, count in other.android_count.items():
            merged.android_count[ref] = merged.android_count.get(ref, 0) + count
        for ref, count in other.security_count.items():
            merged.security_count[ref] = merged.security_count.get(ref, 0) + count
        return merged


@dataclass
class MineStats:
    questions: int = 0
    answers: int = 0
    orphan_answers: int = 0
    untagged_questions: int = 0


def parse_dump_date(text: str) -> datetime:
    return datetime.fromisoformat(text.rstrip("Z"))


def load_security_tags(path) -> frozenset:
    """TagName values from a Tags.xml dump, lowercased, plus the plain
    security tag itself."""
    tags = set(BASE_SECURITY_TAGS)
    for row_no, attrs in _iter_rows(path):
        name = attrs.get("TagName")
        if name is None:
            raise ParseError("row %d" % row_no, "tag row without TagName")
        tags.add(name.lower())
    return frozenset(tags)


def _iter_rows(path):
    row_no = 0
    try:
        for _, elem in ElementTree.iterparse(path, events=("end",)):
            if elem.tag == "row":
                row_no += 1
                yield row_no, dict(elem.attrib)
            elem.clear()
    except ElementTree.ParseError as exc:
        raise ParseError("row %d" % (row_no + 1), "malformed XML: %s" % exc)


def iter_discussion_units(posts_path, comments_path=None, votes_path=None,
                          include_answers=True):
    """Assemble discussion units from a Posts.xml dump.

    Returns (units sorted by question id, MineStats).  Row order in the
    dump never matters: answers are buffered and joined by ParentId, and
    answer text concatenates in answer-id order.  Orphan answers are
    counted and dropped.  Optional Comments.xml / Votes.xml push a unit's
    last activity forward via their CreationDate.
    """
    stats = MineStats()
    questions = {}
    answers = {}

    for row_no, attrs in _iter_rows(posts_path):
        where = "row %d" % row_no
        if "Id" not in attrs:
            raise ParseError(where, "post row without Id")
        try:
            post_id = int(attrs["Id"])
        except ValueError:
            raise ParseError(where, "post Id %r is not an integer" % attrs["Id"])
        post_type = attrs.get("PostTypeId")
        if post_type not in ("1", "2"):
            continue  # wiki and moderator rows carry no discussion
        created = _row_date(attrs, "CreationDate", where)
        activity = _row_date(attrs, "LastActivityDate", where, default=created)

        if post_type == "1":
            stats.questions += 1
            tag_text = attrs.get("Tags", "")
            tags = frozenset(t.lower() for t in _TAG_RE.findall(tag_text))
            if not tags:
                stats.untagged_questions += 1
                continue
            questions[post_id] = {
                "tags": tags,
                "title": html.unescape(attrs.get("Title", "")),
                "body": html.unescape(attrs.get("Body", "")),
                "created": created,
                "activity": activity,
            }
        elif post_type == "2":
            stats.answers += 1
            try:
                parent = int(attrs["ParentId"])
            except (KeyError, ValueError):
                raise ParseError(where, "answer row without integer ParentId")
            answers.setdefault(parent, []).append(
                (post_id, html.unescape(attrs.get("Body", "")), activity))

    extra_activity = {}
    for aux in (comments_path, votes_path):
        if aux is None:
            continue
        for row_no, attrs in _iter_rows(aux):
            try:
                post_id = int(attrs["PostId"])
                when = parse_dump_date(attrs["CreationDate"])
            except (KeyError, ValueError):
                continue  # activity refinement only; unusable rows change nothing
            seen = extra_activity.get(post_id)
            if seen is None or when > seen:
                extra_activity[post_id] = when

    units = []
    for question_id in sorted(questions):
        q = questions[question_id]
        parts = [q["title"], q["body"]]
        last = q["activity"]
        last = max(last, extra_activity.get(question_id, last))
        for answer_id, body, activity in sorted(answers.get(question_id, [])):
            if include_answers:
                parts.append(body)
            last = max(last, activity, extra_activity.get(answer_id, activity))
        units.append(DiscussionUnit(
            question_id=question_id,
            tags=q["tags"],
            text="\n".join(parts),
            created=q["created"],
            last_activity=last,
        ))

    for parent in answers:
        if parent not in questions:
            stats.orphan_answers += len(answers[parent])
    return units, stats


def _row_date(attrs, key, where, default=None):
    value = attrs.get(key)
    if value is None:
        if default is not None:
            return default
        raise ParseError(where, "post row without %s" % key)
    try:
        return parse_dump_date(value)
    except ValueError:
        raise ParseError(where, "bad %s value %r" % (key, value))


def activity_ok(unit: DiscussionUnit, cutoff: datetime = DEFAULT_CUTOFF) -> bool:
    """Inclusive cutoff: activity at exactly the cutoff instant counts."""
    return unit.last_activity >= cutoff


def _needles(api: ApiRef):
    if api.kind in (KIND_METHOD, KIND_FIELD):
        return (api.class_path.rsplit("/", 1)[-1], api.member)
    if api.member:
        return (api.class_path, api.member)
    return (api.class_path,)


def _needle_pattern(needle):
    return re.compile(r"(?<![A-Za-z0-9_$])%s(?![A-Za-z0-9_$])" % re.escape(needle))


def api_discussed(unit: DiscussionUnit, api: ApiRef) -> bool:
    """True when every name the ref is known by occurs in the unit text as
    a whole token (simple class name and member name for members, element
    and attribute names for manifest tokens)."""
    tokens = None
    for needle in _needles(api):
        if _WORD_SAFE_RE.fullmatch(needle):
            if tokens is None:
                tokens = set(_TOKEN_RE.findall(unit.text))
            if needle not in tokens:
                return False
        elif not _needle_pattern(needle).search(unit.text):
            # names outside the token alphabet (<init>, intent-filter)
            # match as boundary-guarded phrases
            return False
    return True


def build_post_index(posts_path, apis, security_tags=BASE_SECURITY_TAGS,
                     cutoff: datetime = DEFAULT_CUTOFF, include_answers=True,
                     comments_path=None, votes_path=None):
    """Single pass over a dump producing per-API discussion counts.

    Counts each unit at most once per API.  Returns (PostIndex, MineStats).
    security_count can never exceed android_count: a security unit is an
    android unit whose tags intersect the security tag set.
    """
    units, stats = iter_discussion_units(posts_path, comments_path, votes_path,
                                         include_answers)
    plans = []
    for api in apis:
        needles = _needles(api)
        safe = [n for n in needles if _WORD_SAFE_RE.fullmatch(n)]
        phrases = [_needle_pattern(n) for n in needles if not _WORD_SAFE_RE.fullmatch(n)]
        plans.append((api, frozenset(safe), phrases))

    index = PostIndex()
    for unit in units:
        if ANDROID_TAG not in unit.tags or not activity_ok(unit, cutoff):
            continue
        index.total_android += 1
        is_security = bool(unit.tags & security_tags)
        if is_security:
            index.total_security += 1
        tokens = frozenset(_TOKEN_RE.findall(unit.text))
        for api, safe, phrases in plans:
            if not safe <= tokens:
                continue
            if any(not p.search(unit.text) for p in phrases):
                continue
            index.android_count[api] = index.android_count.get(api, 0) + 1
            if is_security:
                index.security_count[api] = index.security_count.get(api, 0) + 1
    return index, stats


def write_post_index(index: PostIndex, path):
    """Sorted ref<TAB>android<TAB>security table with a totals header."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("#totals\t%d\t%d\n" % (index.total_android, index.total_security))
        for ref in sorted(index.android_count, key=lambda r: r.serialize()):
            handle.write("%s\t%d\t%d\n" % (ref.serialize(), index.android_count[ref],
                                           index.security_count.get(ref, 0)))


def read_post_index(path) -> PostIndex:
    index = PostIndex()
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#totals"):
                _, android, security = line.split("\t")
                index.total_android = int(android)
                index.total_security = int(security)
                continue
            ref_text, android, security = line.split("\t")
            ref = parse_ref(ref_text)
            index.android_count[ref] = int(android)
            if int(security):
                index.security_count[ref] = int(security)
    return index
