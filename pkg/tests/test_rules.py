import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relpat.kg import KnowledgeGraph
from relpat.rules import (THRESHOLDS, Atom, ConfigError, MiningConfig, Rule, RuleError, canonicalize_to_chain,
                          filter_rules, format_rule, head_coverage, mine_rules, parse_rule, pca_confidence,
                          read_rules, rule_metrics, rule_support, std_confidence, threshold_preset, write_rules)

from conftest import random_kg
from oracles import body_pairs, brute_metrics, brute_mine, fact_set


@pytest.fixture
def married():
    return KnowledgeGraph.from_labeled([("a", "married", "b"), ("b", "married", "a"), ("c", "married", "d")])


def test_symmetric_rule_metrics(married):
    R = married.n_relations
    rule = Rule.from_chain(0, [0 + R])
    assert rule_support(rule, married) == 2
    assert head_coverage(rule, married) == pytest.approx(2 / 3, abs=0)
    assert std_confidence(rule, married) == pytest.approx(2 / 3, abs=0)
    assert pca_confidence(rule, married) == 1.0
    mined = mine_rules(married, min_pca=0.8, min_hc=0.5)
    assert [(s.rule.head, s.rule.chain) for s in mined] == [(0, (R,))]
    assert mined[0].metrics.support == 2


def test_body_never_fires(married):
    kg = KnowledgeGraph.from_labeled([("a", "p", "b"), ("c", "q", "d")])
    m = rule_metrics(Rule.from_chain(0, [1, 1]), kg)
    assert (m.support, m.std_confidence, m.pca_confidence) == (0, 0.0, 0.0)


def test_self_rule_is_tautology(married):
    m = rule_metrics(Rule.from_chain(0, [0]), married)
    assert m.std_confidence == m.pca_confidence == m.head_coverage == 1.0
    assert all(s.rule.chain != (s.rule.head,) for s in mine_rules(married))


def test_config_errors(married):
    for bad in (0, 4):
        with pytest.raises(ConfigError):
            mine_rules(married, max_body_len=bad)
    with pytest.raises(ConfigError):
        threshold_preset("theta9")


def test_threshold_presets():
    assert THRESHOLDS == {"theta1": (0.9, 0.5), "theta2": (0.8, 0.5), "theta3": (0.6, 0.3),
                          "theta4": (0.4, 0.1), "theta5": (0.2, 0.1)}
    assert threshold_preset("θ2") == threshold_preset("2") == (0.8, 0.5)


def test_canonicalize_examples():
    R = 5
    rule = Rule(0, (Atom(1, "X", "H"), Atom(2, "X", "T")))
    assert canonicalize_to_chain(rule, R).chain == (1 + R, 2)
    rule = Rule(0, (Atom(1, "H", "X"), Atom(2, "T", "X")))
    assert canonicalize_to_chain(rule, R).chain == (1, 2 + R)
    chain = Rule.from_chain(0, [3, 4])
    assert canonicalize_to_chain(chain, R) == chain
    with pytest.raises(RuleError):
        canonicalize_to_chain(Rule(0, (Atom(1, "H", "X"), Atom(2, "Y", "T"))), R)
    with pytest.raises(RuleError):
        canonicalize_to_chain(Rule(0, (Atom(1, "H", "X"), Atom(2, "X", "H"), Atom(3, "X", "T"))), R)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), perm=st.permutations([0, 1, 2]), flips=st.lists(st.booleans(), min_size=3,
                                                                                     max_size=3))
def test_canonicalize_preserves_groundings(seed, perm, flips):
    kg = random_kg(np.random.default_rng(seed), 8, 3, 40)
    R = kg.n_relations
    rels = np.random.default_rng(seed + 1).integers(0, R, 3)
    vs = ["H", "X1", "X2", "T"]
    atoms = []
    for i in range(3):
        a, b = vs[i], vs[i + 1]
        atoms.append(Atom(int(rels[i]), b, a) if flips[i] else Atom(int(rels[i]), a, b))
    rule = Rule(0, tuple(atoms[i] for i in perm))
    chain = canonicalize_to_chain(rule, R).chain
    expected = tuple(int(r) + R if f else int(r) for r, f in zip(rels, flips))
    assert chain == expected
    facts = fact_set(kg.train, R)
    # direct nested-loop grounding of the original atom layout
    direct = set()
    for x in [(h, x1, x2, t) for h in range(kg.n_entities) for x1 in range(kg.n_entities)
              for x2 in range(kg.n_entities) for t in range(kg.n_entities) if len({h, x1, x2, t}) == 4]:
        env = dict(zip(vs, x))
        if all((env[a.subject], a.relation, env[a.object]) in facts for a in atoms):
            direct.add((x[0], x[3]))
    assert direct == body_pairs(chain, facts, kg.n_entities)


@pytest.mark.parametrize("injective", [True, False])
@pytest.mark.parametrize("seed", range(4))
def test_miner_matches_oracle(seed, injective):
    kg = random_kg(np.random.default_rng(seed), 9, 3, 60)
    expected = brute_mine(kg.train, kg.n_entities, kg.n_relations, 3, 0.0, 0.0, 1, injective)
    got = mine_rules(kg, max_body_len=3, injective=injective)
    assert len(got) == len({(s.rule.head, s.rule.chain) for s in got})
    by_key = {(s.rule.head, s.rule.chain): s.metrics for s in got}
    assert set(by_key) == set(expected)
    for key, m in expected.items():
        g = by_key[key]
        assert (g.support, g.head_coverage, g.std_confidence, g.pca_confidence) == (
            m["support"], m["hc"], m["std"], m["pca"])


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), a=st.floats(0, 1), b=st.floats(0, 1), s=st.integers(1, 4))
def test_mining_monotone_in_thresholds(seed, a, b, s):
    kg = random_kg(np.random.default_rng(seed), 10, 3, 50)
    lo = mine_rules(kg, max_body_len=2, min_pca=min(a, b), min_hc=min(a, b) / 2, min_support=1)
    hi = mine_rules(kg, max_body_len=2, min_pca=max(a, b), min_hc=max(a, b) / 2, min_support=s)
    keys_lo = {(r.rule.head, r.rule.chain) for r in lo}
    assert {(r.rule.head, r.rule.chain) for r in hi} <= keys_lo
    assert hi == filter_rules(lo, max(a, b), max(a, b) / 2, s)
    for r in lo:
        m = r.metrics
        assert 0 <= m.std_confidence <= m.pca_confidence <= 1
        assert 0 < m.head_coverage <= 1


def test_output_order(toy):
    rules = mine_rules(toy, max_body_len=2)
    keys = [(s.rule.head, -s.metrics.pca_confidence) for s in rules]
    assert keys == sorted(keys)


def test_workers_give_same_rules(toy):
    assert mine_rules(toy, max_body_len=3, workers=3) == mine_rules(toy, max_body_len=3)


def test_rule_file_roundtrip(tmp_path, toy):
    rules = mine_rules(toy, max_body_len=3, min_pca=0.5)
    write_rules(tmp_path / "rules.txt", rules, toy)
    back = read_rules(tmp_path / "rules.txt", toy)
    assert back == rules
    line = (tmp_path / "rules.txt").read_text().splitlines()[0]
    assert " <= " in line and len(line.split("\t")) == 6


def test_parse_rule_formats(toy):
    R = toy.n_relations
    married, parent, child = (toy.relations[x] for x in ("married_to", "parent_of", "child_of"))
    assert parse_rule("married_to <= married_to^-1(H,T)", toy).chain == (married + R,)
    rule = parse_rule("parent_of <= child_of(X,H), married_to(X,T)", toy)
    assert rule.chain == (child + R, married)
    assert format_rule(Rule.from_chain(parent, [child + R]), toy) == "parent_of <= child_of^-1(H,T)"
    with pytest.raises(RuleError):
        parse_rule("parent_of <= nope(H,T)", toy)


def test_toy_patterns_present(toy):
    pca, hc = threshold_preset("theta2")
    got = {(toy.relation_label(s.rule.head), tuple(toy.relation_label(b) for b in s.rule.chain))
           for s in mine_rules(toy, max_body_len=2, min_pca=pca, min_hc=hc)}
    assert ("married_to", ("married_to^-1",)) in got
    assert ("parent_of", ("child_of^-1",)) in got
    assert ("lives_in", ("resides_in",)) in got
    assert ("nationality", ("born_in", "city_in")) in got


def test_brute_metrics_agree_on_toy(toy):
    R = toy.n_relations
    g = MiningConfig()
    for s in mine_rules(toy, max_body_len=2, min_pca=0.8)[:20]:
        m = brute_metrics(s.rule.head, s.rule.chain, toy.train, toy.n_entities, R)
        assert m["support"] == s.metrics.support and m["pca"] == s.metrics.pca_confidence
    assert g.confidence_mode == "mean"


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 10**12), max_size=300, unique=True),
       st.lists(st.integers(0, 10**12), max_size=300))
def test_key_table_matches_dict(keys, queries):
    from relpat.rules import _KeyTable
    keys = np.array(keys, dtype=np.int64)
    start = np.arange(len(keys), dtype=np.int64) * 3
    table = _KeyTable(keys, start, start + 1)
    probe = np.array(queries + keys[::2].tolist(), dtype=np.int64)
    hit, lo, cnt = table.find(probe)
    expect = {int(k): int(s) for k, s in zip(keys, start)}
    want = [i for i, k in enumerate(probe.tolist()) if k in expect]
    assert hit.tolist() == want
    assert lo.tolist() == [expect[int(probe[i])] for i in want]
    assert (cnt == lo + 1).all()
