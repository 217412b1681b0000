"""Indirect feature-poisoning attacks and robustness evaluation for graph
convolutional node classifiers."""

from .attack import (AttackConfig, AttackResult, attack_loss, attack_success_check,
                     hinge, infection_penalty, poison_probe, targeted_hinge,
                     targeted_margin, untargeted_margin)
from .backend import KERNELS
from .data import DATASET_STATS, Splits, load_dataset, load_splits, make_splits, save_splits
from .gcn import (ARCH_HIDDEN, GcnModel, TrainConfig, TrainReport, feature_gradient,
                  forward_logits, loss_and_grads, predict, train)
from .graph import (AttributedGraph, NeighborhoodTree, NormalizedAdjacency,
                    build_neighborhood_tree, hop_distances, hop_neighbors, normalize)
from .harness import (ExperimentRecord, SuccessCurve, TrialSpec, infection_count,
                      rank_candidates, recall_at_k, run_trials, sample_trials,
                      spearman_rcc, success_curve, success_rate)
from .incremental import BaseActivations, PerturbationEngine
from .selection import (EfficiencyTable, distinct_efficiency_candidates,
                        poisoning_efficiency, select_poison_node, select_top_k)
from .synth import synthetic_citation_graph, write_dataset_files
from .weights import load_weights, save_weights

__version__ = "0.1.0"
