"""Data-dump mining tests.

The committed posts dump was planted so every count below can be checked
by hand: each API name occurs in a known set of questions and answers,
with activity dates chosen around the cutoff.
"""

import os
from datetime import datetime

import pytest

from benchscope import somining
from benchscope.apiref import ApiRef

HERE = os.path.dirname(os.path.abspath(__file__))
DUMPS = os.path.join(HERE, "fixtures", "dumps")
POSTS = os.path.join(DUMPS, "posts_synthetic.xml")
TAGS = os.path.join(DUMPS, "security_tags.xml")
COMMENTS = os.path.join(DUMPS, "comments_synthetic.xml")
VOTES = os.path.join(DUMPS, "votes_synthetic.xml")

LOADURL = ApiRef("method", "android/webkit/WebView", "loadUrl", "(Ljava/lang/String;)V")
GETDEVICEID = ApiRef("method", "android/telephony/TelephonyManager",
                     "getDeviceId", "()Ljava/lang/String;")
GETSUBSCRIBERID = ApiRef("method", "android/telephony/TelephonyManager",
                         "getSubscriberId", "()Ljava/lang/String;")
GETINSTANCE = ApiRef("method", "java/security/MessageDigest", "getInstance",
                     "(Ljava/lang/String;)Ljava/security/MessageDigest;")
SENDTEXT = ApiRef("method", "android/telephony/SmsManager", "sendTextMessage",
                  "(Ljava/lang/String;Ljava/lang/String;Ljava/lang/String;"
                  "Landroid/app/PendingIntent;Landroid/app/PendingIntent;)V")
ONCREATE = ApiRef("method", "android/app/Activity", "onCreate", "(Landroid/os/Bundle;)V")
SETTEXT = ApiRef("method", "android/widget/TextView", "setText",
                 "(Ljava/lang/CharSequence;)V")
PUTSTRING = ApiRef("method", "android/content/SharedPreferences$Editor", "putString",
                   "(Ljava/lang/String;Ljava/lang/String;)"
                   "Landroid/content/SharedPreferences$Editor;")
INTENT_FILTER = ApiRef("manifest-element", "intent-filter")
USES_PERMISSION_NAME = ApiRef("manifest-attribute", "uses-permission", "name")

ALL_APIS = [LOADURL, GETDEVICEID, GETSUBSCRIBERID, GETINSTANCE, SENDTEXT,
            ONCREATE, SETTEXT, PUTSTRING, INTENT_FILTER, USES_PERMISSION_NAME]


def mine(**kwargs):
    tags = somining.load_security_tags(TAGS)
    return somining.build_post_index(POSTS, ALL_APIS, tags, **kwargs)


@pytest.fixture(scope="module")
def default_index():
    index, _ = mine()
    return index


# --- unit assembly ------------------------------------------------------------

def test_dump_statistics():
    _, stats = mine()
    assert stats.questions == 55
    assert stats.answers == 144
    assert stats.orphan_answers == 2
    assert stats.untagged_questions == 1


def test_unit_totals(default_index):
    # 45 android-tagged questions, 3 of them dead before the cutoff
    assert default_index.total_android == 42
    # ssl, privacy, encryption and plain security tags
    assert default_index.total_security == 4


def test_security_never_exceeds_android(default_index):
    for ref, count in default_index.security_count.items():
        assert count <= default_index.android_count[ref]


# --- hand-computed per-API counts ------------------------------------------------

def test_loadurl_counts(default_index):
    # question 101 (plain) and 118 (security); 105 is stale, 107 is not
    # android, 109/110/111 fail the token or pairing rules
    assert default_index.android_count[LOADURL] == 2
    assert default_index.security_count[LOADURL] == 1


def test_cutoff_boundary_is_inclusive(default_index):
    # question 104's last activity is exactly 2015-01-01T00:00:00
    assert default_index.android_count[GETDEVICEID] == 1
    assert default_index.security_count[GETDEVICEID] == 1


def test_day_before_cutoff_is_excluded(default_index):
    # question 117 died 2014-11-15, question 105 at 2014-12-31T23:59:59
    assert GETSUBSCRIBERID not in default_index.android_count


def test_answer_text_counts(default_index):
    # MessageDigest getInstance appears in an answer to 106 and in 108
    assert default_index.android_count[GETINSTANCE] == 2
    assert default_index.security_count[GETINSTANCE] == 1


def test_answer_date_revives_a_unit(default_index):
    # question 106 went quiet in 2014 but a 2015 answer keeps it alive
    assert default_index.android_count[SENDTEXT] == 1


def test_manifest_needle_counts(default_index):
    # <intent-filter> in 102, prose mention in 118 (security)
    assert default_index.android_count[INTENT_FILTER] == 2
    assert default_index.security_count[INTENT_FILTER] == 1
    assert default_index.android_count[USES_PERMISSION_NAME] == 1


def test_simple_name_pair_counts(default_index):
    assert default_index.android_count[ONCREATE] == 1
    assert default_index.android_count[SETTEXT] == 2


def test_nested_class_simple_name_is_strict(default_index):
    # prose writes "SharedPreferences Editor", never the jvm name
    # SharedPreferences$Editor, so the member pairing fails
    assert PUTSTRING not in default_index.android_count


# --- option variants ------------------------------------------------------------

def test_question_only_drops_answer_text():
    index, _ = mine(include_answers=False)
    # 106's getInstance mention lives in an answer body
    assert index.android_count[GETINSTANCE] == 1
    # the unit itself stays alive through the answer's date
    assert index.android_count[SENDTEXT] == 1
    assert index.total_android == 42


def test_comments_revive_stale_units():
    index, _ = mine(comments_path=COMMENTS)
    # a 2016 comment on question 105 pushes it past the cutoff
    assert index.total_android == 43
    assert index.android_count[LOADURL] == 3
    assert index.security_count[LOADURL] == 1


def test_votes_revive_stale_units():
    index, _ = mine(votes_path=VOTES)
    # a 2015 vote on question 117; the 2014 vote on 119 changes nothing
    assert index.total_android == 43
    assert index.android_count[GETSUBSCRIBERID] == 1
    assert GETSUBSCRIBERID not in index.security_count


def test_comments_and_votes_together():
    index, _ = mine(comments_path=COMMENTS, votes_path=VOTES)
    assert index.total_android == 44
    assert index.total_security == 4


def test_custom_cutoff():
    index, _ = mine(cutoff=datetime(2017, 1, 1))
    assert index.total_android < 42
    assert GETDEVICEID not in index.android_count


# --- matching rules in isolation ---------------------------------------------------

def unit(text, tags=("android",)):
    return somining.DiscussionUnit(
        question_id=1, tags=frozenset(tags), text=text,
        created=datetime(2016, 1, 1), last_activity=datetime(2016, 1, 2))


def test_both_needles_required():
    assert somining.api_discussed(unit("WebView loadUrl"), LOADURL)
    assert not somining.api_discussed(unit("loadUrl alone"), LOADURL)
    assert not somining.api_discussed(unit("WebView alone"), LOADURL)


def test_token_boundaries():
    assert not somining.api_discussed(unit("WebViewClient loadUrl"), LOADURL)
    assert not somining.api_discussed(unit("WebView preloadUrlCache"), LOADURL)
    assert somining.api_discussed(unit("my WebView.loadUrl() call"), LOADURL)


def test_case_sensitivity():
    assert not somining.api_discussed(unit("webview loadurl"), LOADURL)


def test_non_token_needles_are_boundary_guarded():
    init = ApiRef("method", "android/content/Intent", "<init>",
                  "(Ljava/lang/String;)V")
    assert somining.api_discussed(unit("call Intent <init> directly"), init)
    assert not somining.api_discussed(unit("Intent reinitialized"), init)
    assert somining.api_discussed(unit("an <intent-filter> element"), INTENT_FILTER)
    assert not somining.api_discussed(unit("my intent-filters are broken"), INTENT_FILTER)


def test_activity_ok_boundary():
    cutoff = somining.DEFAULT_CUTOFF
    alive = unit("x")
    assert somining.activity_ok(alive, cutoff)
    exactly = somining.DiscussionUnit(1, frozenset(["android"]), "x",
                                      datetime(2014, 1, 1), datetime(2015, 1, 1))
    assert somining.activity_ok(exactly, cutoff)
    stale = somining.DiscussionUnit(1, frozenset(["android"]), "x",
                                    datetime(2014, 1, 1),
                                    datetime(2014, 12, 31, 23, 59, 59))
    assert not somining.activity_ok(stale, cutoff)


# --- dump parsing ---------------------------------------------------------------

def write_dump(tmp_path, body, name="posts.xml"):
    path = tmp_path / name
    path.write_text('<?xml version="1.0" encoding="utf-8"?>\n<posts>\n%s\n</posts>\n' % body,
                    encoding="utf-8")
    return str(path)


def test_row_order_never_matters(tmp_path):
    question = ('<row Id="10" PostTypeId="1" Tags="&lt;android&gt;" Title="t" '
                'Body="WebView loadUrl" CreationDate="2016-01-01T00:00:00.000" '
                'LastActivityDate="2016-01-02T00:00:00.000" />')
    answer = ('<row Id="11" PostTypeId="2" ParentId="10" Body="more loadUrl" '
              'CreationDate="2016-01-01T12:00:00.000" />')
    first = write_dump(tmp_path, question + "\n" + answer, "a.xml")
    second = write_dump(tmp_path, answer + "\n" + question, "b.xml")
    index_a, _ = somining.build_post_index(first, [LOADURL])
    index_b, _ = somining.build_post_index(second, [LOADURL])
    assert index_a == index_b


def test_malformed_xml(tmp_path):
    path = tmp_path / "broken.xml"
    path.write_text("<posts><row Id='1'", encoding="utf-8")
    with pytest.raises(somining.ParseError):
        somining.build_post_index(str(path), [LOADURL])


def test_row_without_id(tmp_path):
    path = write_dump(tmp_path, '<row PostTypeId="1" Tags="&lt;android&gt;" '
                                'Body="x" CreationDate="2016-01-01T00:00:00.000" />')
    with pytest.raises(somining.ParseError):
        somining.build_post_index(path, [LOADURL])


def test_row_with_bad_date(tmp_path):
    path = write_dump(tmp_path, '<row Id="1" PostTypeId="1" Tags="&lt;android&gt;" '
                                'Body="x" CreationDate="not-a-date" />')
    with pytest.raises(somining.ParseError):
        somining.build_post_index(path, [LOADURL])


def test_answer_without_parent_id(tmp_path):
    path = write_dump(tmp_path, '<row Id="2" PostTypeId="2" Body="x" '
                                'CreationDate="2016-01-01T00:00:00.000" />')
    with pytest.raises(somining.ParseError):
        somining.build_post_index(path, [LOADURL])


def test_trailing_z_dates_parse(tmp_path):
    path = write_dump(tmp_path, '<row Id="1" PostTypeId="1" Tags="&lt;android&gt;" '
                                'Body="WebView loadUrl" '
                                'CreationDate="2016-01-01T00:00:00.000Z" />')
    index, _ = somining.build_post_index(path, [LOADURL])
    assert index.android_count[LOADURL] == 1


def test_load_security_tags():
    tags = somining.load_security_tags(TAGS)
    assert "security" in tags            # implied even if absent from the dump
    assert "ssl" in tags and "privacy" in tags and "encryption" in tags
    assert "android" not in tags


# --- index plumbing ---------------------------------------------------------------

def test_post_index_merge_is_associative():
    def make(counts, sec, total_a, total_s):
        return somining.PostIndex(dict(counts), dict(sec), total_a, total_s)

    a = make({LOADURL: 2}, {LOADURL: 1}, 10, 2)
    b = make({LOADURL: 1, ONCREATE: 4}, {}, 7, 0)
    c = make({ONCREATE: 1}, {ONCREATE: 1}, 3, 1)
    left = a.merge(b).merge(c)
    right = a.merge(b.merge(c))
    assert left == right
    assert left.android_count == {LOADURL: 3, ONCREATE: 5}
    assert left.total_android == 20 and left.total_security == 3


def test_post_index_round_trip(tmp_path, default_index):
    path = tmp_path / "index.tsv"
    somining.write_post_index(default_index, path)
    again = somining.read_post_index(path)
    assert again.android_count == default_index.android_count
    assert again.security_count == default_index.security_count
    assert again.total_android == default_index.total_android
    assert again.total_security == default_index.total_security
