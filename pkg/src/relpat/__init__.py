"""Rule-based relational pattern analysis and score adaptation for knowledge graph embeddings."""
from .kg import KGError, KnowledgeGraph, Vocabulary, load_toy
from .rules import MiningConfig, Rule, ScoredRule, mine_rules, read_rules, threshold_preset, write_rules
from .patterns import PatternType, classify_relations, classify_triples, frequency_buckets, pattern_matrix
from .models import TrainConfig, train
from .evaluation import KGEScorer, evaluate, evaluate_per_pattern
from .spa import SpaConfig, SpaModel, build_rulesets

__version__ = "0.1.0"
