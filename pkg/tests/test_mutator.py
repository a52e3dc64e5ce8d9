import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opsig.callgraph import compute_reachability
from opsig.ingest import parse_air_json, dump_air
from opsig.ir import validate
from opsig.mutator import KINDS, MutationSpec, mutate, mutate_chain, variant_suite
from opsig.synth import build_app, make_class, random_app


def test_unknown_kind():
    with pytest.raises(ValueError):
        MutationSpec("encrypt_strings")


@pytest.mark.parametrize("kind", KINDS)
def test_each_kind_preserves_lev1(kind, table, signer, rng):
    for _ in range(10):
        app = random_app(rng, table)
        out = mutate(app, MutationSpec(kind, rng.randrange(1000)), table)
        validate(out)
        assert out.app_id != app.app_id
        assert signer.sign(out).lev1 == signer.sign(app).lev1
        assert parse_air_json(dump_air(out), table) == out


def test_reorder_single_class_still_changes_id(table, signer):
    app = build_app([make_class("p/K", {"a": ["android/util/Log;->d"]})], table, ["p/K;->a()V"])
    out = mutate(app, MutationSpec("reorder_classes", 1), table)
    assert out.app_id != app.app_id
    assert signer.sign(out).lev1 == signer.sign(app).lev1


def test_dead_insertion_without_entries_falls_back(table, signer):
    app = build_app([make_class("p/K", {"a": ["android/util/Log;->d"]})], table, [])
    out = mutate(app, MutationSpec("insert_dead_class", 1), table)
    assert len(out.classes) == 1 and out.app_id != app.app_id
    assert signer.sign(out).lev1 == signer.sign(app).lev1


def test_dead_code_is_non_vacuous(table, rng):
    app = random_app(rng, table)
    out = mutate(app, MutationSpec("insert_dead_class", 5), table)
    (dead,) = [c for c in out.classes if c.name not in {k.name for k in app.classes}]
    assert any(cs.kind == "api" for m in dead.methods for cs in m.instructions)
    assert dead.name not in compute_reachability(out).live_classes


def test_rename_changes_names_not_api_targets(table, rng):
    app = random_app(rng, table)
    out = mutate(app, MutationSpec("rename_identifiers", 2), table)
    assert not {c.name for c in out.classes} & {c.name for c in app.classes}
    api_before = [[cs.target for cs in m.instructions if cs.kind == "api"] for _, m in app.iter_methods()]
    api_after = [[cs.target for cs in m.instructions if cs.kind == "api"] for _, m in out.iter_methods()]
    assert api_before == api_after


def test_suite(table, signer, rng):
    app = random_app(rng, table)
    suite = variant_suite(app, 4, table)
    assert len(suite) == 7
    assert len({a.app_id for a in suite} | {app.app_id}) == 8
    assert {signer.sign(a).lev1 for a in suite} == {signer.sign(app).lev1}
    assert [a.app_id for a in variant_suite(app, 4, table)] == [a.app_id for a in suite]
    second = variant_suite(suite[6], 5, table)
    assert {signer.sign(a).lev1 for a in second} == {signer.sign(app).lev1}


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32),
       kinds=st.lists(st.sampled_from(KINDS), min_size=1, max_size=5))
def test_random_chains_preserve_lev1(table, signer, seed, kinds):
    app = random_app(random.Random(seed), table)
    out = mutate_chain(app, [MutationSpec(k, seed + i) for i, k in enumerate(kinds)], table)
    assert out.app_id != app.app_id
    assert signer.sign(out).lev1 == signer.sign(app).lev1
