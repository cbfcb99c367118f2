"""Command line interface.

Subcommands cover the whole pipeline: fetch a corpus, profile APKs,
mine a Stack Exchange dump, then analyze / compare / gap over the stored
results.  Exit codes: 0 success, 2 usage errors (argparse), 3 input
errors (missing or unreadable inputs, rejected credentials, empty
results).  Per-app failures inside a batch never abort the run; they land
in a sidecar error report.

The AndroZoo API key is read from the ANDROZOO_API_KEY environment
variable only; there is no flag for it, so it cannot leak into shell
history or process listings.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime

from . import analytics, apk, axml, dex, fetch, genindex, hierarchy, profiler, somining
from .apiref import parse_ref


class CliInputError(Exception):
    """Bad inputs discovered after flag parsing; exits with code 3."""


@dataclass
class RunConfig:
    """Validated file layout for the analysis commands."""
    corpus_paths: list
    suite_paths: dict           # name -> profile store path
    post_index_path: str
    baseline_path: str | None
    orthogonal_path: str | None
    ui_prefixes_path: str | None
    level_range: tuple
    top_k: int
    out_dir: str
    workers: int = 1
    cache_dir: str | None = None

    def validate(self):
        if self.workers < 1:
            raise CliInputError("--workers must be at least 1")
        lo, hi = self.level_range
        if lo > hi:
            raise CliInputError("--levels range %d:%d is empty" % (lo, hi))
        for path in [*self.corpus_paths, self.post_index_path,
                     *self.suite_paths.values(), self.baseline_path,
                     self.orthogonal_path, self.ui_prefixes_path]:
            if path is not None and not os.path.exists(path):
                raise CliInputError("input does not exist: %s" % path)


def _parse_levels(text):
    try:
        lo, hi = text.split(":")
        return int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError("expected LO:HI, e.g. 23:27")


def _parse_suite(text):
    name, sep, path = text.partition("=")
    if not sep or not name or not path:
        raise argparse.ArgumentTypeError("expected NAME=PROFILE_STORE")
    return name, path


def _parse_cutoff(text):
    try:
        return somining.parse_dump_date(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected an ISO date, e.g. 2015-01-01")


def _read_prefix_file(path):
    out = set()
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line and not line.startswith("#"):
                out.add(line)
    return out


def _read_api_set(path):
    """Refs from either a serialized-ref-per-line file or a profile store."""
    refs = set()
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("{"):
                refs |= profiler.profile_from_json(line).apis
            else:
                refs.add(parse_ref(line))
    return refs


def _suite_api_sets(suite_paths):
    suites = {}
    for name, path in suite_paths.items():
        apis = set()
        for profile in profiler.read_profiles(path):
            apis |= profile.apis
        suites[name] = frozenset(apis)
    return suites


def _load_corpus(paths, level_range):
    profiles = []
    for path in paths:
        profiles.extend(profiler.read_profiles(path))
    return profiler.merge_corpus(profiles, level_range)


# --- profile ---------------------------------------------------------------

_WORKER_INDEX = None
_WORKER_INDEX_PATH = None


def _profile_worker(task):
    """Profile one APK in a pool worker; loads the index once per process."""
    path, app_id, index_path = task
    global _WORKER_INDEX, _WORKER_INDEX_PATH
    if _WORKER_INDEX is None or _WORKER_INDEX_PATH != index_path:
        _WORKER_INDEX = hierarchy.load_index(index_path)
        _WORKER_INDEX_PATH = index_path
    try:
        entries = apk.open_apk(path, app_id)
        profile = profiler.profile_apk(entries, _WORKER_INDEX)
        return path, profile, entries.source_digest, None
    except (apk.ApkError, dex.DexError, axml.AxmlError, profiler.ProfileError) as exc:
        return path, None, None, (type(exc).__name__, str(exc))


def _collect_apk_paths(inputs):
    paths = []
    for item in inputs:
        if os.path.isdir(item):
            for name in sorted(os.listdir(item)):
                if name.lower().endswith(".apk"):
                    paths.append(os.path.join(item, name))
        else:
            paths.append(item)
    return paths


def _index_digest(path):
    with open(path, "rb") as handle:
        return hashlib.sha256(handle.read()).hexdigest()


def _cache_lookup(cache_dir, apk_path, index_digest):
    if cache_dir is None:
        return None, None
    digest = hashlib.sha256()
    with open(apk_path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    key = digest.hexdigest()
    cache_path = os.path.join(cache_dir, "%s.json" % key)
    if os.path.exists(cache_path):
        with open(cache_path, "r", encoding="utf-8") as handle:
            record = json.load(handle)
        if record.get("index_digest") == index_digest:
            return cache_path, profiler.profile_from_json(json.dumps(record["profile"]))
    return cache_path, None


def cmd_profile(args):
    apk_paths = _collect_apk_paths(args.apks)
    if not apk_paths:
        raise CliInputError("no APK inputs found")
    if not os.path.exists(args.framework_index):
        raise CliInputError("framework index does not exist: %s" % args.framework_index)
    index_digest = _index_digest(args.framework_index)
    if args.cache:
        os.makedirs(args.cache, exist_ok=True)
    os.makedirs(args.out, exist_ok=True)

    started = time.monotonic()
    profiles = []
    errors = []
    cache_hits = 0
    pending = []  # (path, app_id, cache_path)
    for path in apk_paths:
        try:
            cache_path, cached = _cache_lookup(args.cache, path, index_digest)
        except OSError as exc:
            errors.append((path, "OSError", str(exc)))
            continue
        if cached is not None:
            profiles.append(cached)
            cache_hits += 1
        else:
            pending.append((path, None, cache_path))

    tasks = [(path, app_id, args.framework_index) for path, app_id, _ in pending]
    if args.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            outcomes = list(pool.map(_profile_worker, tasks))
    else:
        outcomes = [_profile_worker(task) for task in tasks]

    for (path, _, cache_path), (_, profile, _, error) in zip(pending, outcomes):
        if error is not None:
            errors.append((path, error[0], error[1]))
            continue
        profiles.append(profile)
        if cache_path is not None:
            record = {"index_digest": index_digest,
                      "profile": json.loads(profiler.profile_to_json(profile))}
            with open(cache_path, "w", encoding="utf-8") as handle:
                json.dump(record, handle, sort_keys=True, ensure_ascii=False)

    profiler.write_profiles(profiles, os.path.join(args.out, "profiles.ndjson"))
    with open(os.path.join(args.out, "profile-errors.csv"), "w", encoding="utf-8") as handle:
        handle.write("path,error,message\n")
        for path, kind, message in sorted(errors):
            handle.write("%s,%s,%s\n" % (path, kind, message.replace(",", ";")))

    if args.timing:
        print("profiled=%d cache_hits=%d errors=%d elapsed=%.2fs"
              % (len(profiles) - cache_hits, cache_hits, len(errors),
                 time.monotonic() - started))
    print("profiles=%d errors=%d -> %s" % (len(profiles), len(errors), args.out))
    return 0 if profiles else 3


# --- fetch -----------------------------------------------------------------

def cmd_fetch(args):
    api_key = os.environ.get(fetch.API_KEY_ENV, "")
    shas = fetch.read_sha_list(args.sha_list)
    try:
        result = fetch.fetch_apks(shas, args.endpoint, args.dest, api_key,
                                  rate=args.rate, retries=args.retries,
                                  backoff=args.backoff)
    except fetch.AuthFailure as exc:
        raise CliInputError(str(exc))
    print("fetched=%d skipped=%d failed=%d" % (result.fetched, result.skipped,
                                               result.failed))
    if result.failures:
        report = os.path.join(args.dest, "fetch-failures.csv")
        with open(report, "w", encoding="utf-8") as handle:
            handle.write("sha256,reason\n")
            for sha, reason in result.failures:
                handle.write("%s,%s\n" % (sha, reason.replace(",", ";")))
        return 3
    return 0


# --- mine ------------------------------------------------------------------

def cmd_mine(args):
    apis = set()
    for path in args.apis or []:
        apis |= _read_api_set(path)
    for path in args.profiles or []:
        for profile in profiler.read_profiles(path):
            apis |= profile.apis
    for path in args.corpus or []:
        apis |= set(profiler.read_corpus(path).usage)
    if not apis:
        raise CliInputError("no APIs to mine; pass --apis, --profiles or --corpus")

    if args.security_tags:
        tags = somining.load_security_tags(args.security_tags)
    else:
        tags = somining.BASE_SECURITY_TAGS
    index, stats = somining.build_post_index(
        args.posts, sorted(apis, key=lambda r: r.serialize()), tags,
        cutoff=args.cutoff, include_answers=not args.question_only,
        comments_path=args.comments, votes_path=args.votes)
    somining.write_post_index(index, args.out)
    print("android_units=%d security_units=%d questions=%d answers=%d "
          "orphans=%d -> %s" % (index.total_android, index.total_security,
                                stats.questions, stats.answers,
                                stats.orphan_answers, args.out))
    return 0


# --- analyze / compare / gap ------------------------------------------------

def _tier_inputs(args, need_post_index=True):
    config = RunConfig(
        corpus_paths=list(getattr(args, "corpus", []) or []),
        suite_paths=dict(args.suite),
        post_index_path=getattr(args, "post_index", None),
        baseline_path=getattr(args, "baseline", None),
        orthogonal_path=getattr(args, "orthogonal", None),
        ui_prefixes_path=getattr(args, "ui_prefixes", None),
        level_range=getattr(args, "levels", (1, 40)),
        top_k=getattr(args, "top_k", 10),
        out_dir=getattr(args, "out", None) or ".",
        workers=getattr(args, "workers", 1),
    )
    if need_post_index and config.post_index_path is None:
        raise CliInputError("--post-index is required")
    config.validate()
    return config


def _load_tier_parts(config):
    suites = _suite_api_sets(config.suite_paths)
    baseline = _read_api_set(config.baseline_path) if config.baseline_path else set()
    orthogonal = (_read_prefix_file(config.orthogonal_path)
                  if config.orthogonal_path else set())
    return suites, baseline, orthogonal


def cmd_analyze(args):
    from . import report  # matplotlib init is slow; keep other commands light
    config = _tier_inputs(args)
    if not config.corpus_paths:
        raise CliInputError("--corpus is required")
    if not config.ui_prefixes_path:
        raise CliInputError("--ui-prefixes is required")
    suites, baseline, orthogonal = _load_tier_parts(config)
    post_index = somining.read_post_index(config.post_index_path)
    store = _load_corpus(config.corpus_paths, config.level_range)
    if store.corpus_size == 0:
        raise CliInputError("corpus is empty after the level filter")

    tiers = [analytics.tier_apis(name, suites[name], baseline, orthogonal, post_index)
             for name in sorted(suites)]
    comparisons = []
    names = sorted(suites)
    tier_by_name = {t.suite: t for t in tiers}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            comparisons.append(analytics.compare_suites(
                a, tier_by_name[a].filtered, b, tier_by_name[b].filtered))
    suite_union = frozenset().union(*(suites[name] for name in names))
    ui_prefixes = _read_prefix_file(config.ui_prefixes_path)
    gap = analytics.gap_analysis(store, suite_union, ui_prefixes, post_index,
                                 config.top_k)
    written = report.write_bundle(config.out_dir, store, post_index, tiers,
                                  comparisons, gap, threshold=args.threshold,
                                  figures=not args.no_figures)
    print("corpus_size=%d suites=%d files=%d -> %s"
          % (store.corpus_size, len(suites), len(written), config.out_dir))
    return 0


def cmd_compare(args):
    config = _tier_inputs(args, need_post_index=False)
    suites, baseline, orthogonal = _load_tier_parts(config)
    filtered = {}
    for name, apis in suites.items():
        considered = apis - frozenset(baseline)
        filtered[name] = frozenset(
            ref for ref in considered
            if analytics.package_prefix(ref.class_path) not in orthogonal)
    lines = ["suite_a,suite_b,common,only_a,only_b"]
    names = sorted(filtered)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            cmp_ = analytics.compare_suites(a, filtered[a], b, filtered[b])
            lines.append("%s,%s,%d,%d,%d" % (a, b, len(cmp_.common),
                                             len(cmp_.only_a), len(cmp_.only_b)))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_gap(args):
    from . import report
    config = _tier_inputs(args)
    if not config.corpus_paths:
        raise CliInputError("--corpus is required")
    if not config.ui_prefixes_path:
        raise CliInputError("--ui-prefixes is required")
    suites = _suite_api_sets(config.suite_paths)
    post_index = somining.read_post_index(config.post_index_path)
    store = _load_corpus(config.corpus_paths, config.level_range)
    if store.corpus_size == 0:
        raise CliInputError("corpus is empty after the level filter")
    suite_union = frozenset().union(*suites.values()) if suites else frozenset()
    ui_prefixes = _read_prefix_file(config.ui_prefixes_path)
    gap = analytics.gap_analysis(store, suite_union, ui_prefixes, post_index,
                                 config.top_k)
    os.makedirs(config.out_dir, exist_ok=True)
    report.write_gap_csvs(config.out_dir, gap, post_index)
    if not args.no_figures:
        report.write_gap_figure(config.out_dir, gap)
    print("gap_apis=%d security_discussed=%d prefixes=%d -> %s"
          % (len(gap.gap_apis), len(gap.security_posts), len(gap.groups),
             config.out_dir))
    return 0


def cmd_gen_index(args):
    index = genindex.build_index_from_jar(args.jar, prefixes=args.prefix or None)
    text = hierarchy.serialize_index(index)
    with open(args.out, "w", encoding="utf-8") as handle:
        handle.write(text)
    print("classes=%d -> %s" % (len(index.classes), args.out))
    return 0


# --- parser ----------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="benchscope",
        description="Measure how well Android benchmark suites cover the APIs "
                    "real-world apps use and developers discuss.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="extract API profiles from APKs")
    p.add_argument("apks", nargs="+", help="APK files or directories")
    p.add_argument("--framework-index", required=True)
    p.add_argument("--out", required=True, help="output directory for the store")
    p.add_argument("--cache", help="profile cache directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timing", action="store_true",
                   help="print parse/cache-hit counters")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("fetch", help="download corpus APKs (resumable)")
    p.add_argument("--sha-list", required=True)
    p.add_argument("--endpoint", required=True)
    p.add_argument("--dest", required=True)
    p.add_argument("--rate", type=float, default=None,
                   help="max requests per second")
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--backoff", type=float, default=0.5)
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("mine", help="build a post index from a Stack Exchange dump")
    p.add_argument("--posts", required=True, help="Posts.xml path")
    p.add_argument("--security-tags", help="Security-site Tags.xml path")
    p.add_argument("--apis", action="append", help="ref-per-line file (repeatable)")
    p.add_argument("--profiles", action="append", help="profile store (repeatable)")
    p.add_argument("--corpus", action="append", help="corpus store (repeatable)")
    p.add_argument("--cutoff", type=_parse_cutoff, default=somining.DEFAULT_CUTOFF,
                   help="last-activity cutoff, inclusive (default 2015-01-01)")
    p.add_argument("--question-only", action="store_true",
                   help="ignore answer bodies when matching")
    p.add_argument("--comments", help="Comments.xml, refines last activity")
    p.add_argument("--votes", help="Votes.xml, refines last activity")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mine)

    def add_analysis_flags(p, with_post_index=True):
        p.add_argument("--suite", type=_parse_suite, action="append", required=True,
                       metavar="NAME=STORE")
        p.add_argument("--baseline", help="refs of a minimal do-nothing app")
        p.add_argument("--orthogonal", help="orthogonal package prefixes, one per line")
        if with_post_index:
            p.add_argument("--corpus", action="append", required=True,
                           help="corpus profile store (repeatable)")
            p.add_argument("--post-index", required=True)
            p.add_argument("--ui-prefixes", required=True,
                           help="UI package prefixes excluded from the gap")
            p.add_argument("--levels", type=_parse_levels, default=(1, 40),
                           metavar="LO:HI", help="target SDK filter (default 1:40)")
            p.add_argument("--top-k", type=int, default=10)
            p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("analyze", help="full report bundle over stored results")
    add_analysis_flags(p)
    p.add_argument("--threshold", type=float, default=60.0,
                   help="heavy-usage percent threshold")
    p.add_argument("--out", required=True, help="report bundle directory")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare", help="pairwise suite comparison")
    add_analysis_flags(p, with_post_index=False)
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gap", help="corpus APIs no suite covers")
    add_analysis_flags(p)
    p.add_argument("--out", required=True, help="gap report directory")
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("gen-index", help="build a framework index from a stub jar")
    p.add_argument("--jar", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--prefix", action="append",
                   help="keep only classes under this path prefix (repeatable)")
    p.set_defaults(func=cmd_gen_index)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliInputError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 3
    except (OSError, ValueError, apk.ApkError, dex.DexError, axml.AxmlError,
            hierarchy.FrameworkIndexError, profiler.ProfileError,
            somining.MiningError, analytics.AnalyticsError,
            genindex.ClassFileError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
