"""Representativeness analytics over profiles, corpora and post indexes.

Suites and the real-world corpus reduce to API sets; everything here is
set algebra plus order statistics:

  * tiers narrow a suite's API set step by step: total -> considered
    (baseline removed) -> filtered (orthogonal prefixes removed) ->
    relevant (discussed in an Android post) -> security (discussed in a
    security post); each tier is a subset of the previous one,
  * pairwise comparisons partition two suites' filtered sets,
  * five-number summaries describe discussion-count distributions,
  * gap analysis finds security-discussed APIs the corpus uses but no
    suite covers, grouped by package prefix.
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass, field

from .apiref import ApiRef
from .profiler import CorpusStore
from .somining import PostIndex


class AnalyticsError(Exception):
    pass


class EmptyCorpus(AnalyticsError):
    pass


@dataclass
class TierReport:
    suite: str
    total: frozenset
    considered: frozenset
    filtered: frozenset
    relevant: frozenset
    security: frozenset


@dataclass
class ComparisonReport:
    suite_a: str
    suite_b: str
    common: frozenset
    only_a: frozenset
    only_b: frozenset


FiveNumber = namedtuple("FiveNumber", "minimum q1 median q3 maximum")


@dataclass
class GapReport:
    gap_apis: frozenset                    # corpus-only refs, UI prefixes removed
    security_posts: dict = field(default_factory=dict)  # security-discussed gap ref -> posts
    groups: dict = field(default_factory=dict)   # prefix -> [(ref, security posts)] ranked, top k
    prefix_sizes: dict = field(default_factory=dict)    # prefix -> full group size
    known_prefixes: frozenset = frozenset()      # prefix also appears in some suite
    unknown_prefixes: frozenset = frozenset()


def package_prefix(class_path: str) -> str:
    """Path up to the second separator: android/app/Activity -> android/app.
    Single-segment paths are their own prefix."""
    first = class_path.find("/")
    if first == -1:
        return class_path
    second = class_path.find("/", first + 1)
    if second == -1:
        return class_path
    return class_path[:second]


def tier_apis(suite: str, total, baseline, orthogonal_prefixes, post_index: PostIndex) -> TierReport:
    """Narrow a suite's API set through the four filters.

    baseline is the API set of a minimal do-nothing app: scaffolding every
    app drags in, not something a benchmark chooses to exercise.
    orthogonal_prefixes name platform areas out of scope for the security
    comparison (graphics, widgets, ...).
    """
    total = frozenset(total)
    considered = total - frozenset(baseline)
    orthogonal = frozenset(orthogonal_prefixes)
    filtered = frozenset(ref for ref in considered
                         if package_prefix(ref.class_path) not in orthogonal)
    relevant = frozenset(ref for ref in filtered
                         if post_index.android_count.get(ref, 0) >= 1)
    security = frozenset(ref for ref in relevant
                         if post_index.security_count.get(ref, 0) >= 1)
    return TierReport(suite, total, considered, filtered, relevant, security)


def usage_percentage(store: CorpusStore, ref: ApiRef) -> float:
    """Share of corpus apps whose profile contains ref, 0..100."""
    if store.corpus_size <= 0:
        raise EmptyCorpus("usage percentage needs a non-empty corpus")
    return 100.0 * store.usage.get(ref, 0) / store.corpus_size


def heavily_used(store: CorpusStore, refs, threshold: float = 60.0):
    """Refs used by more than threshold percent of corpus apps."""
    return frozenset(r for r in refs if usage_percentage(store, r) > threshold)


def five_number(values) -> FiveNumber:
    """Min, quartiles by linear interpolation over order statistics
    (position (n-1)*q), max.  Raises ValueError on empty input."""
    ordered = sorted(values)
    if not ordered:
        raise ValueError("five_number needs at least one value")

    def at(q):
        pos = (len(ordered) - 1) * q
        lo = int(pos)
        hi = min(lo + 1, len(ordered) - 1)
        frac = pos - lo
        return ordered[lo] + (ordered[hi] - ordered[lo]) * frac

    return FiveNumber(ordered[0], at(0.25), at(0.5), at(0.75), ordered[-1])


def compare_suites(suite_a: str, apis_a, suite_b: str, apis_b) -> ComparisonReport:
    """Partition two suites' API sets: common + only_a + only_b, with
    |common| + |only_a| = |apis_a| and symmetrically for b."""
    a, b = frozenset(apis_a), frozenset(apis_b)
    return ComparisonReport(suite_a, suite_b, a & b, a - b, b - a)


def gap_analysis(store: CorpusStore, suite_union, ui_prefixes,
                 post_index: PostIndex, top_k: int = 10) -> GapReport:
    """Security-discussed APIs real apps use but no suite exercises.

    The gap is the corpus API set minus every suite API and minus UI
    prefixes (view plumbing shows up in every app and would drown the
    signal).  Security-discussed gap refs are grouped by package prefix;
    each group is ranked by security post count, descending, ties broken
    by ref order, truncated to top_k.  A prefix is known when some suite
    already touches it, unknown when no suite does.
    """
    suite_union = frozenset(suite_union)
    ui = frozenset(ui_prefixes)
    gap = frozenset(ref for ref in store.usage
                    if ref not in suite_union
                    and package_prefix(ref.class_path) not in ui)

    security_posts = {}
    groups = {}
    for ref in gap:
        posts = post_index.security_count.get(ref, 0)
        if posts >= 1:
            security_posts[ref] = posts
            groups.setdefault(package_prefix(ref.class_path), []).append((ref, posts))
    prefix_sizes = {prefix: len(members) for prefix, members in groups.items()}
    for prefix, members in groups.items():
        members.sort(key=lambda pair: (-pair[1], pair[0]))
        del members[top_k:]

    suite_prefixes = {package_prefix(ref.class_path) for ref in suite_union}
    known = frozenset(p for p in groups if p in suite_prefixes)
    return GapReport(
        gap_apis=gap,
        security_posts=security_posts,
        groups=dict(sorted(groups.items())),
        prefix_sizes=prefix_sizes,
        known_prefixes=known,
        unknown_prefixes=frozenset(groups) - known,
    )
