"""Deterministic IoT swarm simulation, SRAM-trace attestation protocol, and
graph-network anomaly detection."""

from .attest import (AttestationParams, DecisionFlags, PadOverflowError,
                     attest, attest_batch, compute_default_traces,
                     compute_thresholds, cosine_similarity, load_params,
                     pad_length_for, preprocess, save_params)
from .corpus import (DataSectionTrace, STALE, TraceCorpus, generate_corpus,
                     load_corpus, save_corpus, step_firmware)
from .gnn import (GraphModel, backward, count_parameters, gat_forward,
                  gcn_forward, gt_forward, init_model, model_forward, mse)
from .harness import (ConfusionCounts, Metrics, SuiteConfig, attack_s1_drop,
                      attack_s2_perturb, attack_s3_replay, metrics,
                      run_suite, run_training_phase)
from .protocol import (AttesterNode, SwarmGateway, SwarmResponse,
                       TransportPolicy, collect_rounds, run_round,
                       setup_protocol)
from .scenarios import ScenarioSpec, catalog, scenario, swarm_label
from .swarm import (FirmwareSpec, NodeRole, SwarmGraph, Variant, build_swarm,
                    load_swarm_config)
from .training import AdamState, TrainConfig, TrainResult, adam_step, train

__version__ = "0.1.0"
