import pytest
from hypothesis import given
from hypothesis import strategies as st

from opsig.apitable import (
    ApiTable,
    load_api_filter,
    load_api_table,
    load_permission_map,
    lookup,
    parse_id,
    render_id,
)
from opsig.errors import ParseError


def test_table_i_entries(table):
    assert lookup(table, "android/content/Intent;-><init>") == 0x30291
    assert lookup(table, "android/content/Intent;->toUri") == 0x30292
    assert lookup(table, "android/app/PendingIntent;->getBroadcast") == 0xF3E91
    assert lookup(table, "android/telephony/SmsManager;->getDefault") == 0x39D53
    assert lookup(table, "android/accounts/Account;-><init>") == 0x00001


def test_single_lines():
    assert load_api_table("android/content/Intent;-><init>\t30291").lookup(
        "android/content/Intent;-><init>") == 0x30291
    assert load_api_table("android/app/PendingIntent;->getBroadcast\tF3E91").lookup(
        "android/app/PendingIntent;->getBroadcast") == 0xF3E91


def test_empty_document():
    t = load_api_table("")
    assert len(t) == 0
    assert t.lookup("android/content/Intent;-><init>") is None


def test_miss_and_case_sensitivity(table):
    assert lookup(table, "com/example/Local;->helper") is None
    assert not any(k.lower() == "android/content/intent;-><init>" and k != "android/content/Intent;-><init>"
                   for k in table.entries)
    assert lookup(table, "Android/content/Intent;-><init>") is None


def test_duplicate_method_rejected():
    with pytest.raises(ParseError) as exc:
        load_api_table("a/B;->c\t00001\na/B;->c\t00002\n")
    assert exc.value.line == 2


def test_duplicate_id_rejected():
    with pytest.raises(ParseError) as exc:
        load_api_table("a/B;->c\t00001\na/B;->d\t1\n")
    assert exc.value.line == 2
    assert "duplicate id" in str(exc.value)


@pytest.mark.parametrize("bad", ["zz", "0x30291", "100000", ""])
def test_bad_ids(bad):
    with pytest.raises(ParseError):
        load_api_table(f"a/B;->c\t{bad}\n")


def test_render_width():
    assert render_id(0x30291) == "30291"
    assert render_id(1) == "00001"
    assert render_id(0xF3E91) == "f3e91"
    with pytest.raises(ValueError):
        render_id(16**5)


@given(st.integers(min_value=0, max_value=16**5 - 1))
def test_render_parse_identity(value):
    assert parse_id(render_id(value)) == value
    assert len(render_id(value)) == 5


@given(st.dictionaries(st.from_regex(r"[a-z]{1,6}/[A-Z][a-z]{0,5};->[a-z]{1,6}", fullmatch=True),
                       st.integers(min_value=0, max_value=16**5 - 1), max_size=40)
       .filter(lambda d: len(set(d.values())) == len(d)))
def test_table_is_bijection(entries):
    doc = "".join(f"{k}\t{render_id(v)}\n" for k, v in entries.items())
    t = load_api_table(doc)
    inv = t.inverse()
    assert len(inv) == len(t) == len(entries)
    for k, v in entries.items():
        assert inv[v] == k
    assert load_api_table(t.dumps()).entries == t.entries


def test_permission_map():
    pm = load_permission_map(
        "android/telephony/gsm/SmsManager;->sendTextMessage\tSEND_SMS\n"
        "android/content/ContentResolver;->query\tREAD_SMS,READ_CONTACTS\n"
    )
    assert pm.permissions("android/telephony/gsm/SmsManager;->sendTextMessage") == {"SEND_SMS"}
    assert pm.permissions("android/content/ContentResolver;->query") == {"READ_SMS", "READ_CONTACTS"}
    assert pm.permissions("com/example/Nope;->x") == frozenset()


def test_permission_map_malformed():
    with pytest.raises(ParseError) as exc:
        load_permission_map("a/B;->c\tX\nno-tab-here\n")
    assert exc.value.line == 2


def test_bundled_permission_keys_use_table_form(table, pmap):
    for key in pmap.entries:
        if key in table:
            assert table.lookup(key) is not None


def test_filter_file():
    assert load_api_filter("# c\nandroid/util/Log;->d\n\n") == {"android/util/Log;->d"}


def test_table_fingerprint_changes_with_content():
    a = ApiTable({"a/B;->c": 1})
    b = ApiTable({"a/B;->c": 2})
    assert a.fingerprint() != b.fingerprint()
    assert a.fingerprint() == ApiTable({"a/B;->c": 1}).fingerprint()
