"""End-to-end experiment runner: train through the protocol, evaluate every
catalog scenario and the three simulated attacks, and emit reports.

Attack conventions:

* S1 (dropped responses): slots are marked missing and the verifier falls
  back to the stored default traces; every decision keeps label 0.
* S2 (trace perturbation): a chosen number of bytes in every node's trace is
  replaced with fresh random values; every decision is labeled 1.
* S3 (trace replay): each node's trace sequence is permuted independently so
  cross-node couplings break while per-node marginals survive; every decision
  is labeled 1 (an uncoupled node is then only detectable at its false-alarm
  rate, which the report makes visible).
"""

from __future__ import annotations

import json
import sys
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import scenarios as catalogs
from .attest import (AttestationParams, attest_batch, compute_default_traces,
                     compute_thresholds, pad_length_for, preprocess)
from .corpus import DataSectionTrace, TraceCorpus, generate_corpus
from .protocol import LOSSLESS, SwarmResponse, collect_rounds
from .scenarios import ScenarioSpec
from .swarm import SwarmGraph, build_swarm
from .training import TrainConfig, train

DEFAULT_SF = 0.999
S2_SWEEP = (1, 2, 3, 4, 6, 8, 10, 15, 20, 30, 40)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class Metrics:
    accuracy: Optional[float]
    detection_rate: Optional[float]   # TP / (TP + FN), absent without positives
    attestation_rate: Optional[float]  # TN / (TN + FP), absent without negatives
    counts: ConfusionCounts


def metrics(flags, labels) -> Metrics:
    """Confusion counts and rates; zero-denominator rates are None, not 0."""
    flags = np.asarray(flags)
    try:
        labels = np.broadcast_to(np.asarray(labels), flags.shape)
    except ValueError:
        raise ValueError(
            f"labels shape {np.asarray(labels).shape} misaligned with "
            f"flags shape {flags.shape}") from None
    tp = int(np.sum((flags == 1) & (labels == 1)))
    tn = int(np.sum((flags == 0) & (labels == 0)))
    fp = int(np.sum((flags == 1) & (labels == 0)))
    fn = int(np.sum((flags == 0) & (labels == 1)))
    counts = ConfusionCounts(tp, tn, fp, fn)
    acc = (tp + tn) / counts.total if counts.total else None
    dr = tp / (tp + fn) if (tp + fn) else None
    ar = tn / (tn + fp) if (tn + fp) else None
    return Metrics(acc, dr, ar, counts)


# --------------------------------------------------------------------------
# simulated attacks
# --------------------------------------------------------------------------


def attack_s1_drop(response: SwarmResponse, count: int, seed: int) -> SwarmResponse:
    """Mark ``count`` uniformly chosen slots missing."""
    n = response.n
    if not 1 <= count < n:
        raise ValueError(f"drop count must be in [1, {n - 1}], got {count}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0x51))))
    drop = rng.choice(n, size=count, replace=False)
    slots = [None if j in drop else slot for j, slot in enumerate(response.slots)]
    return SwarmResponse(response.round_id, slots)


def attack_s2_perturb(trace: DataSectionTrace, n_bytes: int, seed: int) -> DataSectionTrace:
    """Replace ``n_bytes`` distinct positions with random bytes that differ."""
    d = trace.d
    if not 1 <= n_bytes <= d:
        raise ValueError(f"n_bytes must be in [1, {d}], got {n_bytes}")
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence((seed, 0x52, trace.node_id, trace.tick))))
    positions = rng.choice(d, size=n_bytes, replace=False)
    data = trace.data.copy()
    for pos in positions:
        delta = rng.integers(1, 256)
        data[pos] = (int(data[pos]) + delta) % 256
    return DataSectionTrace(trace.node_id, trace.tick, data)


def attack_s3_replay(corpus: TraceCorpus, seed: int) -> TraceCorpus:
    """Independently permute each node's trace sequence along the time axis."""
    if corpus.m < 2:
        raise ValueError(f"temporal shuffle needs m >= 2, got {corpus.m}")
    rows = []
    perms = []
    for j in range(corpus.n):
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence((seed, 0x53, j))))
        perms.append(rng.permutation(corpus.m))
    for t in range(corpus.m):
        rows.append(tuple(
            DataSectionTrace(j, t, corpus.traces[perms[j][t]][j].data)
            for j in range(corpus.n)))
    return TraceCorpus(corpus.swarm_id, corpus.scenario, corpus.m, corpus.seed,
                       tuple(rows))


# --------------------------------------------------------------------------
# training phase and scenario evaluation
# --------------------------------------------------------------------------


def corpus_design_matrix(corpus: TraceCorpus, L: int) -> np.ndarray:
    """Preprocess a whole corpus into an (m, n, L) design matrix."""
    X = np.zeros((corpus.m, corpus.n, L))
    for t, row in enumerate(corpus.traces):
        for j, trace in enumerate(row):
            if trace.d > L:
                from .attest import PadOverflowError
                raise PadOverflowError(
                    f"tick {t} node {j}: trace length {trace.d} exceeds L={L}")
            X[t, j, :trace.d] = trace.data / 255.0
    return X


def run_training_phase(swarm: SwarmGraph, m: int, seed: int, arch: str,
                       config: Optional[TrainConfig] = None,
                       scale_factor: float = DEFAULT_SF,
                       pad_override: Optional[int] = None) -> AttestationParams:
    """Collect m clean protocol rounds, fit the model, derive DT and T_def."""
    corpus = generate_corpus(swarm, catalogs.scenario(swarm.swarm_id, "D1"), m, seed)
    responses = collect_rounds(swarm, corpus, seed, LOSSLESS)
    missing = [r.round_id for r in responses if r.missing()]
    if missing:
        raise RuntimeError(
            f"training collection lost responses in rounds {missing[:5]}; "
            "the transport should be lossless during training")
    max_d = max(t.d for row in corpus.traces for t in row)
    L = pad_override if pad_override is not None else pad_length_for(max_d)
    if L < max_d:
        raise ValueError(f"pad override {L} below longest training trace {max_d}")
    X = np.stack([preprocess(r, None, L) for r in responses])
    adjacency = swarm.adjacency
    result = train(X, adjacency, arch, seed, config)
    thresholds = compute_thresholds(X, result.model, adjacency, scale_factor)
    defaults = compute_default_traces(X)
    params = AttestationParams(swarm.swarm_id, result.model, thresholds,
                               defaults, L, scale_factor)
    params.validate()
    return params


@dataclass(frozen=True)
class ScenarioResult:
    scenario_id: str
    labels: tuple[int, ...]
    node_rates: tuple[float, ...]  # AR for label-0 nodes, DR for label-1 nodes
    accuracy: float


def evaluate_design_matrix(X: np.ndarray, params: AttestationParams,
                           swarm: SwarmGraph, labels: Sequence[int],
                           scenario_id: str) -> ScenarioResult:
    decisions = attest_batch(X, params, swarm.adjacency)
    labels_arr = np.asarray(labels)
    rates = []
    for j in range(swarm.n):
        hit = decisions.flags[:, j].mean()
        rates.append(float(hit if labels_arr[j] == 1 else 1.0 - hit))
    accuracy = float((decisions.flags == labels_arr[None, :]).mean())
    return ScenarioResult(scenario_id, tuple(int(v) for v in labels_arr),
                          tuple(rates), accuracy)


def evaluate_scenario(params: AttestationParams, swarm: SwarmGraph,
                      scenario: ScenarioSpec, m: int, seed: int) -> ScenarioResult:
    corpus = generate_corpus(swarm, scenario, m, seed)
    X = corpus_design_matrix(corpus, params.pad_length)
    return evaluate_design_matrix(X, params, swarm, scenario.label,
                                  scenario.scenario_id)


def evaluate_s1(params: AttestationParams, swarm: SwarmGraph, corpus: TraceCorpus,
                rounds: int, seed: int, drops: int = 1) -> float:
    """Attestation accuracy over single-drop rounds built from a clean corpus."""
    X = corpus_design_matrix(corpus, params.pad_length)
    reps = int(np.ceil(rounds / corpus.m))
    Xr = np.concatenate([X] * reps)[:rounds]
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0x51))))
    for t in range(rounds):
        for j in rng.choice(swarm.n, size=drops, replace=False):
            Xr[t, j] = params.default_traces[j]
    decisions = attest_batch(Xr, params, swarm.adjacency)
    return float((decisions.flags == 0).mean())


def evaluate_s2(params: AttestationParams, swarm: SwarmGraph, corpus: TraceCorpus,
                seed: int, sweep: Sequence[int] = S2_SWEEP) -> list[tuple[int, float]]:
    """Detection rate as a function of perturbed byte count."""
    curve = []
    for n_bytes in sweep:
        X = np.zeros((corpus.m, corpus.n, params.pad_length))
        for t, row in enumerate(corpus.traces):
            for j, trace in enumerate(row):
                hit = attack_s2_perturb(trace, min(n_bytes, trace.d), seed)
                X[t, j, :hit.d] = hit.data / 255.0
        decisions = attest_batch(X, params, swarm.adjacency)
        curve.append((int(n_bytes), float(decisions.flags.mean())))
    return curve


def evaluate_s3(params: AttestationParams, swarm: SwarmGraph, corpus: TraceCorpus,
                seed: int) -> float:
    """Detection rate on the temporally shuffled corpus (all nodes labeled 1)."""
    shuffled = attack_s3_replay(corpus, seed)
    X = corpus_design_matrix(shuffled, params.pad_length)
    decisions = attest_batch(X, params, swarm.adjacency)
    return float(decisions.flags.mean())


# --------------------------------------------------------------------------
# full suite
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SuiteConfig:
    swarm_id: str = "swarm1"
    archs: tuple[str, ...] = ("gcn", "gat", "gt")
    repeats: int = 20
    base_seed: int = 1
    train_m: int = 500
    eval_m: int = 400
    s1_rounds: int = 500
    s2_sweep: tuple[int, ...] = S2_SWEEP
    train: TrainConfig = field(default_factory=TrainConfig)
    scale_factor: float = DEFAULT_SF
    with_attacks: bool = True

    def seeds(self) -> list[int]:
        return [self.base_seed + 1000 * r for r in range(self.repeats)]


def run_suite(config: SuiteConfig, log=sys.stderr) -> dict:
    """Train/evaluate every (arch, repeat) cell and average the rates."""
    if not config.archs:
        raise ValueError("suite needs at least one architecture")
    swarm = build_swarm(config.swarm_id)
    catalog = catalogs.catalog(config.swarm_id)
    started = time.time()

    scenario_cells: dict[str, dict[str, list[ScenarioResult]]] = {
        arch: {sid: [] for sid in catalog} for arch in config.archs}
    attack_cells: dict[str, dict[str, list]] = {
        arch: {"s1": [], "s2": [], "s3": []} for arch in config.archs}

    for arch in config.archs:
        for rep, seed in enumerate(config.seeds()):
            print(f"[suite] {config.swarm_id} arch={arch} repeat={rep} seed={seed}",
                  file=log, flush=True)
            params = run_training_phase(swarm, config.train_m, seed, arch,
                                        config.train, config.scale_factor)
            eval_seed = seed + 17
            for sid, scenario in catalog.items():
                scenario_cells[arch][sid].append(
                    evaluate_scenario(params, swarm, scenario, config.eval_m, eval_seed))
            if config.with_attacks:
                dev = generate_corpus(swarm, catalog["D2"],
                                      max(config.eval_m, config.s1_rounds), eval_seed)
                attack_cells[arch]["s1"].append(
                    evaluate_s1(params, swarm, dev, config.s1_rounds, eval_seed))
                attack_cells[arch]["s2"].append(
                    evaluate_s2(params, swarm, dev, eval_seed, config.s2_sweep))
                attack_cells[arch]["s3"].append(
                    evaluate_s3(params, swarm, dev, eval_seed))

    report = {
        "swarm": config.swarm_id,
        "n": swarm.n,
        "archs": list(config.archs),
        "repeats": config.repeats,
        "seeds": config.seeds(),
        "train_m": config.train_m,
        "eval_m": config.eval_m,
        "scale_factor": config.scale_factor,
        "hyperparameters": {
            "epochs": config.train.epochs,
            "batch_size": config.train.batch_size,
            "lr": config.train.lr,
            "weight_decay": config.train.weight_decay,
            "noise_k": config.train.noise_k,
            "hidden": config.train.hidden,
            "latent": config.train.latent,
        },
        "scenarios": {},
        "attacks": {},
    }
    for arch in config.archs:
        arch_rows = {}
        for sid in catalog:
            cell = scenario_cells[arch][sid]
            rates = np.mean([r.node_rates for r in cell], axis=0)
            arch_rows[sid] = {
                "labels": list(catalog[sid].label),
                "node_rates": [round(float(v), 6) for v in rates],
                "accuracy": round(float(np.mean([r.accuracy for r in cell])), 6),
            }
        report["scenarios"][arch] = arch_rows
        if config.with_attacks:
            s2_mat = np.array([[dr for _, dr in curve]
                               for curve in attack_cells[arch]["s2"]])
            report["attacks"][arch] = {
                "s1": {"rounds": config.s1_rounds, "drops": 1,
                       "accuracy": round(float(np.mean(attack_cells[arch]["s1"])), 6)},
                "s2": {"sweep": [[int(b), round(float(v), 6)]
                                 for b, v in zip(config.s2_sweep, s2_mat.mean(axis=0))]},
                "s3": {"detection_rate": round(float(np.mean(attack_cells[arch]["s3"])), 6)},
            }
    print(f"[suite] finished in {time.time() - started:.1f}s", file=log, flush=True)
    return report


def report_csv_rows(report: dict) -> list[str]:
    """Flatten a suite report into CSV lines (one row per scenario*node*arch)."""
    rows = ["swarm,arch,scenario,node,label,metric,rate"]
    for arch, table in report["scenarios"].items():
        for sid, cell in table.items():
            for j, (label, rate) in enumerate(zip(cell["labels"], cell["node_rates"])):
                metric = "DR" if label == 1 else "AR"
                rows.append(f"{report['swarm']},{arch},{sid},{j},{label},{metric},{rate:.6f}")
    for arch, attacks in report.get("attacks", {}).items():
        rows.append(f"{report['swarm']},{arch},S1,all,0,ACC,{attacks['s1']['accuracy']:.6f}")
        for n_bytes, rate in attacks["s2"]["sweep"]:
            rows.append(f"{report['swarm']},{arch},S2[{n_bytes}],all,1,DR,{rate:.6f}")
        rows.append(f"{report['swarm']},{arch},S3,all,1,DR,{attacks['s3']['detection_rate']:.6f}")
    return rows


def write_report(report: dict, csv_path=None, json_path=None,
                 plot_dir=None) -> None:
    if json_path:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if csv_path:
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(report_csv_rows(report)) + "\n")
    if plot_dir:
        _write_plot_files(report, plot_dir)


def _write_plot_files(report: dict, plot_dir) -> None:
    """Columnar files for bar/line plots (scenario rates and S2 sweeps)."""
    import os

    os.makedirs(plot_dir, exist_ok=True)
    for arch, table in report["scenarios"].items():
        path = os.path.join(plot_dir, f"rates_{report['swarm']}_{arch}.dat")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# scenario node rate\n")
            for sid, cell in table.items():
                for j, rate in enumerate(cell["node_rates"]):
                    fh.write(f"{sid} {j} {rate:.6f}\n")
    for arch, attacks in report.get("attacks", {}).items():
        path = os.path.join(plot_dir, f"s2_{report['swarm']}_{arch}.dat")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# perturbed_bytes detection_rate\n")
            for n_bytes, rate in attacks["s2"]["sweep"]:
                fh.write(f"{n_bytes} {rate:.6f}\n")
