"""Mine Horn rules on the bundled toy graph and sort its relations into patterns.

Run:  python3 demos/01_mine_and_classify.py
"""
from relpat import MiningConfig, classify_relations, classify_triples, frequency_buckets, load_toy, mine_rules
from relpat.patterns import pattern_matrix
from relpat.rules import format_rule, threshold_preset

kg = load_toy()
print(kg)

# theta2 keeps rules with PCA >= 0.8 and head coverage >= 0.5
min_pca, min_hc = threshold_preset("theta2")
rules = mine_rules(kg, MiningConfig(max_body_len=3, min_pca=min_pca, min_hc=min_hc))
print(f"\n{len(rules)} rules")
for sr in rules[:10]:
    m = sr.metrics
    print(f"  {format_rule(sr.rule, kg):60s} supp={m.support:3d} pca={m.pca_confidence:.2f} hc={m.head_coverage:.2f}")

assignment = classify_relations(rules, kg.n_relations)
print("\nrelations per pattern")
for p, n in assignment.counts().items():
    names = [kg.relations.label(r) for r in assignment.relations(p)]
    print(f"  {p.short:6s} {n}  {names}")

# share of relations of the row pattern that also show the column pattern
matrix = pattern_matrix(assignment)
print("\noverlap " + " ".join(f"{p.short:>6s}" for p in matrix.patterns))
for p, row in zip(matrix.patterns, matrix.values):
    print(f"{p.short:7s} " + " ".join(f"{v:6.2f}" for v in row))

# test triples grouped by the patterns of their relation, then by how often
# their entities appear in training
test = kg.test
for p, arr in classify_triples(test, assignment).items():
    buckets = frequency_buckets(arr, kg, [0, 5, 10])
    sizes = {th: len(b) for th, b in buckets.items()}
    print(f"  {p.short:6s} test triples={len(arr):3d} by head+tail frequency {sizes}")
