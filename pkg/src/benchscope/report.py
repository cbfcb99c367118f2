"""Report bundle emission.

Renders analysis results as a directory of delimited files plus rendered
figures.  Every writer is deterministic: rows come from sorted inputs,
floats use a fixed format, figures carry pinned metadata, so running the
same analysis twice yields byte-identical bundles.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from . import analytics

PCT = "%.4f"
NUM = "%.2f"
_FIG_META = {"Software": "benchscope"}


def _writer(handle):
    return csv.writer(handle, lineterminator="\n")


def _open(outdir, *parts):
    path = os.path.join(outdir, *parts)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    return open(path, "w", encoding="utf-8", newline="")


def write_tiers_csv(outdir, tiers, store, threshold=60.0):
    """One row per suite with the five tier sizes plus how many relevant
    APIs more than threshold percent of corpus apps use."""
    with _open(outdir, "tiers.csv") as handle:
        out = _writer(handle)
        out.writerow(["suite", "total", "considered", "filtered", "relevant",
                      "security", "relevant_over_%d_pct" % int(threshold)])
        for tier in sorted(tiers, key=lambda t: t.suite):
            heavy = analytics.heavily_used(store, tier.relevant, threshold)
            out.writerow([tier.suite, len(tier.total), len(tier.considered),
                          len(tier.filtered), len(tier.relevant),
                          len(tier.security), len(heavy)])


def write_tier_members(outdir, tiers):
    """Per-suite listing of every filtered ref and the tiers it reaches."""
    for tier in tiers:
        with _open(outdir, "tiers", "%s.csv" % tier.suite) as handle:
            out = _writer(handle)
            out.writerow(["api", "relevant", "security"])
            for ref in sorted(tier.filtered, key=lambda r: r.serialize()):
                out.writerow([ref.serialize(),
                              int(ref in tier.relevant), int(ref in tier.security)])


def _usage_rows(tier, store, post_index):
    rows = []
    for ref in tier.relevant:
        usage_pct = analytics.usage_percentage(store, ref)
        android = post_index.android_count.get(ref, 0)
        android_pct = (100.0 * android / post_index.total_android
                       if post_index.total_android else 0.0)
        security = post_index.security_count.get(ref, 0)
        rows.append((ref, usage_pct, android, android_pct, security))
    rows.sort(key=lambda row: (-row[1], row[0]))
    return rows


def write_usage_csv(outdir, tier, store, post_index):
    """Relevant refs ranked by corpus usage, with discussion counts."""
    rows = _usage_rows(tier, store, post_index)
    with _open(outdir, "usage", "%s.csv" % tier.suite) as handle:
        out = _writer(handle)
        out.writerow(["api", "usage_count", "usage_percent",
                      "android_posts", "android_post_percent", "security_posts"])
        for ref, usage_pct, android, android_pct, security in rows:
            out.writerow([ref.serialize(), store.usage.get(ref, 0), PCT % usage_pct,
                          android, PCT % android_pct, security])
    with _open(outdir, "plotdata", "%s.csv" % tier.suite) as handle:
        out = _writer(handle)
        out.writerow(["api", "usage_percent", "android_post_percent"])
        for ref, usage_pct, _, android_pct, _ in rows:
            out.writerow([ref.serialize(), PCT % usage_pct, PCT % android_pct])
    return rows


def write_usage_figure(outdir, suite, rows):
    """Two series over refs ranked by usage: share of apps using each ref
    and share of Android posts discussing it."""
    if not rows:
        return None
    path = os.path.join(outdir, "figures", "%s.png" % suite)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    ranks = range(1, len(rows) + 1)
    fig, ax = plt.subplots(figsize=(7.0, 3.5))
    ax.plot(ranks, [r[1] for r in rows], lw=1.2, color="#1f77b4",
            label="% of apps using the API")
    ax.plot(ranks, [r[3] for r in rows], lw=1.2, color="#2ca02c",
            label="% of Android posts discussing the API")
    ax.set_xlabel("relevant APIs, ranked by real-world usage")
    ax.set_ylabel("percent")
    ax.set_title(suite)
    ax.legend(loc="upper right", fontsize=8)
    ax.set_xlim(1, max(2, len(rows)))
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_FIG_META)
    plt.close(fig)
    return path


def write_comparisons_csv(outdir, comparisons):
    with _open(outdir, "comparisons.csv") as handle:
        out = _writer(handle)
        out.writerow(["suite_a", "suite_b", "common", "only_a", "only_b"])
        for cmp_ in sorted(comparisons, key=lambda c: (c.suite_a, c.suite_b)):
            out.writerow([cmp_.suite_a, cmp_.suite_b, len(cmp_.common),
                          len(cmp_.only_a), len(cmp_.only_b)])


def _fivenum_cells(summary, scale=1.0, fmt=NUM):
    return [fmt % (v * scale) for v in summary]


def write_fivenum_csv(outdir, tiers, post_index):
    """Distribution of discussion counts per suite and tier, absolute and
    as a share of all counted posts."""
    with _open(outdir, "fivenum.csv") as handle:
        out = _writer(handle)
        out.writerow(["suite", "tier", "basis", "min", "q1", "median", "q3", "max"])
        for tier in sorted(tiers, key=lambda t: t.suite):
            for tier_name, refs, counts, total in (
                    ("relevant", tier.relevant, post_index.android_count,
                     post_index.total_android),
                    ("security", tier.security, post_index.security_count,
                     post_index.total_security)):
                values = [counts.get(ref, 0) for ref in refs]
                if not values:
                    out.writerow([tier.suite, tier_name, "posts", "", "", "", "", ""])
                    out.writerow([tier.suite, tier_name, "percent", "", "", "", "", ""])
                    continue
                summary = analytics.five_number(values)
                out.writerow([tier.suite, tier_name, "posts"] + _fivenum_cells(summary))
                scale = 100.0 / total if total else 0.0
                out.writerow([tier.suite, tier_name, "percent"]
                             + _fivenum_cells(summary, scale, PCT))


def write_gap_csvs(outdir, gap, post_index):
    with _open(outdir, "gap_summary.csv") as handle:
        out = _writer(handle)
        out.writerow(["gap_apis", "security_discussed", "known_prefixes",
                      "unknown_prefixes"])
        out.writerow([len(gap.gap_apis), len(gap.security_posts),
                      len(gap.known_prefixes), len(gap.unknown_prefixes)])

    with _open(outdir, "gap_fivenum.csv") as handle:
        out = _writer(handle)
        out.writerow(["basis", "min", "q1", "median", "q3", "max"])
        if gap.security_posts:
            summary = analytics.five_number(list(gap.security_posts.values()))
            out.writerow(["posts"] + _fivenum_cells(summary))
            scale = (100.0 / post_index.total_security
                     if post_index.total_security else 0.0)
            out.writerow(["percent"] + _fivenum_cells(summary, scale, PCT))

    with _open(outdir, "gap_prefixes.csv") as handle:
        out = _writer(handle)
        out.writerow(["prefix", "status", "api_count"])
        ranked = sorted(gap.prefix_sizes.items(), key=lambda kv: (-kv[1], kv[0]))
        for prefix, size in ranked:
            status = "known" if prefix in gap.known_prefixes else "unknown"
            out.writerow([prefix, status, size])

    with _open(outdir, "gap_top.csv") as handle:
        out = _writer(handle)
        out.writerow(["prefix", "rank", "api", "security_posts"])
        for prefix in sorted(gap.groups):
            for rank, (ref, posts) in enumerate(gap.groups[prefix], 1):
                out.writerow([prefix, rank, ref.serialize(), posts])


def write_gap_figure(outdir, gap, limit=10):
    """Largest gap prefixes by security-discussed API count."""
    ranked = sorted(gap.prefix_sizes.items(), key=lambda kv: (-kv[1], kv[0]))[:limit]
    if not ranked:
        return None
    path = os.path.join(outdir, "figures", "gap_prefixes.png")
    os.makedirs(os.path.dirname(path), exist_ok=True)
    labels = [prefix for prefix, _ in ranked][::-1]
    sizes = [size for _, size in ranked][::-1]
    colors = ["#1f77b4" if prefix in gap.known_prefixes else "#d62728"
              for prefix in labels]
    fig, ax = plt.subplots(figsize=(7.0, 0.42 * len(ranked) + 1.2))
    ax.barh(range(len(ranked)), sizes, color=colors)
    ax.set_yticks(range(len(ranked)))
    ax.set_yticklabels(labels, fontsize=8)
    ax.set_xlabel("security-discussed gap APIs")
    ax.set_title("uncovered package prefixes (blue: suite-known, red: unknown)",
                 fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_FIG_META)
    plt.close(fig)
    return path


def write_bundle(outdir, store, post_index, tiers, comparisons, gap,
                 threshold=60.0, figures=True):
    """Emit the whole bundle; returns the list of files written."""
    os.makedirs(outdir, exist_ok=True)
    write_tiers_csv(outdir, tiers, store, threshold)
    write_tier_members(outdir, tiers)
    write_comparisons_csv(outdir, comparisons)
    write_fivenum_csv(outdir, tiers, post_index)
    for tier in sorted(tiers, key=lambda t: t.suite):
        rows = write_usage_csv(outdir, tier, store, post_index)
        if figures:
            write_usage_figure(outdir, tier.suite, rows)
    write_gap_csvs(outdir, gap, post_index)
    if figures:
        write_gap_figure(outdir, gap)
    written = []
    for root, _dirs, files in os.walk(outdir):
        for name in files:
            written.append(os.path.relpath(os.path.join(root, name), outdir))
    return sorted(written)
