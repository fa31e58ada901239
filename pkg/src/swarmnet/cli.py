"""Command-line entry point.

Subcommands: gen, train, attest, attack, suite, protocol-demo.  Machine
output (files, decision lines, transcripts) goes to stdout/paths; progress
and warnings go to stderr.  Every output byte is determined by --seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
import yaml

from . import scenarios as catalogs
from .attest import attest, load_params, save_params
from .corpus import generate_corpus, load_corpus, save_corpus
from .harness import (DEFAULT_SF, S2_SWEEP, SuiteConfig, evaluate_s1,
                      evaluate_s2, evaluate_s3, evaluate_scenario,
                      run_suite, run_training_phase, write_report)
from .protocol import (LOSSLESS, MsgType, PolicyRule, TransportPolicy,
                       run_round, setup_protocol)
from .scenarios import UnknownScenarioError
from .swarm import SwarmConfigError, build_swarm, load_swarm_config
from .training import TrainConfig

# Reference hyperparameter set: sf=0.999, noise k=0.4, lr=0.01, latent=32,
# weight decay 5e-4.  These are already the defaults; --reference-defaults
# resets any of them that were overridden by other flags.
REFERENCE_DEFAULTS = dict(sf=DEFAULT_SF, k=0.4, lr=0.01, latent=32,
                          weight_decay=0.0005)


def _out_dir(args) -> str:
    base = args.out_dir or os.environ.get("SWARMNET_OUT", ".")
    os.makedirs(base, exist_ok=True)
    return base


def _load_swarm(args):
    if args.swarm_config:
        return load_swarm_config(args.swarm_config)
    return build_swarm(args.swarm)


def _train_config(args) -> TrainConfig:
    if getattr(args, "reference_defaults", False):
        args.k = REFERENCE_DEFAULTS["k"]
        args.lr = REFERENCE_DEFAULTS["lr"]
        args.latent = REFERENCE_DEFAULTS["latent"]
        args.weight_decay = REFERENCE_DEFAULTS["weight_decay"]
        args.sf = REFERENCE_DEFAULTS["sf"]
    return TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                       lr=args.lr, weight_decay=args.weight_decay,
                       noise_k=args.k, hidden=args.hidden, latent=args.latent)


def cmd_gen(args) -> int:
    swarm = _load_swarm(args)
    out = _out_dir(args)
    sids = args.scenario or sorted(catalogs.catalog(swarm.swarm_id))
    for sid in sids:
        scenario = catalogs.scenario(swarm.swarm_id, sid)
        corpus = generate_corpus(swarm, scenario, args.m, args.seed)
        path = os.path.join(out, f"{swarm.swarm_id}_{sid}_m{args.m}_s{args.seed}.corpus")
        save_corpus(corpus, path)
        print(path)
    return 0


def cmd_train(args) -> int:
    swarm = _load_swarm(args)
    config = _train_config(args)
    if args.epochs == 0:
        print("warning: --epochs 0 stores an untrained model", file=sys.stderr)
    params = run_training_phase(swarm, args.m, args.seed, args.arch, config,
                                scale_factor=args.sf, pad_override=args.pad_length)
    out = _out_dir(args)
    path = args.params or os.path.join(
        out, f"{swarm.swarm_id}_{args.arch}_m{args.m}_s{args.seed}.swnp")
    save_params(params, path)
    print(path)
    return 0


def cmd_attest(args) -> int:
    swarm = _load_swarm(args)
    params = load_params(args.params, expected_swarm_id=swarm.swarm_id)
    if args.corpus:
        corpus = load_corpus(args.corpus)
    else:
        scenario = catalogs.scenario(swarm.swarm_id, args.scenario)
        corpus = generate_corpus(swarm, scenario, max(1, args.rounds), args.seed)
    adjacency = swarm.adjacency
    from .protocol import SwarmResponse

    rounds = min(args.rounds, corpus.m)
    anomalies = 0
    for t in range(rounds):
        slots = [corpus.tick(t)[j].data.tobytes() for j in range(swarm.n)]
        decision = attest(SwarmResponse(t, list(slots)), params, adjacency)
        flags = " ".join(f"N{j}:{int(f)}" for j, f in enumerate(decision.flags))
        scores = " ".join(f"{s:.6f}" for s in decision.scores)
        print(f"round {t} flags [{flags}] scores [{scores}]")
        anomalies += int(decision.flags.sum())
    print(f"total anomalous decisions: {anomalies}/{rounds * swarm.n}")
    return 0


def cmd_attack(args) -> int:
    swarm = _load_swarm(args)
    params = load_params(args.params, expected_swarm_id=swarm.swarm_id)
    scenario = catalogs.scenario(swarm.swarm_id, args.scenario)
    corpus = generate_corpus(swarm, scenario, args.m, args.seed)
    if args.kind == "s1":
        acc = evaluate_s1(params, swarm, corpus, args.rounds, args.seed,
                          drops=args.drops)
        print(f"s1 drops={args.drops} rounds={args.rounds} accuracy {acc:.6f}")
    elif args.kind == "s2":
        sweep = _parse_sweep(args.bytes) if args.bytes else S2_SWEEP
        print("perturbed_bytes,detection_rate")
        for n_bytes, rate in evaluate_s2(params, swarm, corpus, args.seed, sweep):
            print(f"{n_bytes},{rate:.6f}")
    elif args.kind == "s3":
        rate = evaluate_s3(params, swarm, corpus, args.seed)
        print(f"s3 detection_rate {rate:.6f}")
    else:
        raise ValueError(f"unknown attack {args.kind!r}")
    return 0


def _parse_sweep(text: str) -> tuple[int, ...]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(tok) for tok in text.split(","))


def cmd_suite(args) -> int:
    if not args.archs:
        raise ValueError("suite needs at least one architecture (--archs)")
    config = SuiteConfig(
        swarm_id=args.swarm,
        archs=tuple(args.archs.split(",")),
        repeats=args.repeats,
        base_seed=args.seed,
        train_m=args.m,
        eval_m=args.eval_m,
        s1_rounds=args.s1_rounds,
        train=_train_config(args),
        scale_factor=args.sf,
        with_attacks=not args.no_attacks,
    )
    report = run_suite(config)
    out = _out_dir(args)
    stem = os.path.join(out, f"suite_{args.swarm}_s{args.seed}")
    write_report(report, csv_path=stem + ".csv", json_path=stem + ".json",
                 plot_dir=(stem + "_plots") if args.plots else None)
    print(stem + ".csv")
    print(stem + ".json")
    return 0


_INJECTIONS = {
    "none": [],
    "replay-req": [PolicyRule("replay", MsgType.REQ, node_id=1)],
    "replay-resp": [PolicyRule("replay", MsgType.RESP, node_id=1)],
    "tamper-resp": [PolicyRule("flip", MsgType.RESP, node_id=1, param=13)],
    "drop-update": [PolicyRule("drop", MsgType.UPDATE, node_id=1, round_index=0)],
    "drop-resp": [PolicyRule("drop", MsgType.RESP, node_id=1, round_index=0)],
}


def cmd_protocol_demo(args) -> int:
    swarm = _load_swarm(args)
    scenario = catalogs.scenario(swarm.swarm_id, "D1")
    rounds = args.rounds
    corpus = generate_corpus(swarm, scenario, rounds, args.seed)
    gateway, nodes = setup_protocol(swarm.numeric_id, list(range(swarm.n)), args.seed)
    policy = TransportPolicy(list(_INJECTIONS[args.inject]))

    print(f"# protocol demo: swarm={swarm.swarm_id} inject={args.inject} "
          f"rounds={rounds} seed={args.seed}")
    for t in range(rounds):
        traces = {j: corpus.tick(t)[j].data.tobytes() for j in range(swarm.n)}
        resync_before = set(gateway.needs_resync)
        rejected_before = {j: len(nodes[j].rejections) for j in nodes}
        gw_rejected_before = len(gateway.rejections)
        response = run_round(gateway, nodes, traces, policy, round_index=t)
        print(f"round {t}:")
        for j in sorted(nodes):
            state = "resync" if j in resync_before else "request"
            slot = "missing" if response.slots[j] is None else f"{len(response.slots[j])}B trace"
            nonce_sync = nodes[j].state.nonce == gateway.mirrors[j].nonce
            print(f"  N{j}: {state} -> {slot}; nonce mirrors "
                  f"{'in sync' if nonce_sync else 'DIVERGED'}")
            fresh = nodes[j].rejections[rejected_before[j]:]
            for reason in fresh:
                print(f"  N{j}: rejected adversarial message ({reason})")
        for reason in gateway.rejections[gw_rejected_before:]:
            print(f"  gateway: rejected adversarial message ({reason})")
        if gateway.needs_resync:
            print(f"  gateway: scheduling resync for nodes {sorted(gateway.needs_resync)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmnet",
        description="SRAM-trace swarm attestation sandbox: corpora, protocol, "
                    "detector training, attacks, and evaluation suites.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=False):
        p.add_argument("--swarm", default="swarm1", help="preset name (swarm1|swarm2)")
        p.add_argument("--swarm-config", help="YAML swarm description (overrides --swarm)")
        p.add_argument("--seed", type=int, default=1)
        p.add_argument("--out-dir", help="output directory (default $SWARMNET_OUT or .)")

    def train_flags(p):
        p.add_argument("--arch", choices=("gcn", "gat", "gt"), default="gt")
        p.add_argument("--epochs", type=int, default=200)
        p.add_argument("--batch-size", type=int, default=32)
        p.add_argument("--lr", type=float, default=0.01)
        p.add_argument("--weight-decay", type=float, default=0.0005)
        p.add_argument("--k", type=float, default=0.4, help="noise factor")
        p.add_argument("--sf", type=float, default=DEFAULT_SF, help="threshold scale factor")
        p.add_argument("--hidden", type=int, default=64)
        p.add_argument("--latent", type=int, default=32)
        p.add_argument("--reference-defaults", action="store_true",
                       help="pin sf/k/lr/latent/weight-decay to the reference set")

    p = sub.add_parser("gen", help="write trace corpora")
    common(p)
    p.add_argument("--scenario", action="append",
                   help="scenario id (repeatable; default: whole catalog)")
    p.add_argument("--m", type=int, default=400)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="run the training phase, write a .swnp params file")
    common(p)
    train_flags(p)
    p.add_argument("--m", type=int, default=500)
    p.add_argument("--pad-length", type=int, help="override the computed pad length L")
    p.add_argument("--params", help="output params path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attest", help="attest rounds from a corpus or scenario")
    common(p)
    p.add_argument("--params", required=True)
    p.add_argument("--corpus", help="corpus file (default: generate from --scenario)")
    p.add_argument("--scenario", default="D2")
    p.add_argument("--rounds", type=int, default=4)
    p.set_defaults(func=cmd_attest)

    p = sub.add_parser("attack", help="run a simulated attack sweep")
    common(p)
    p.add_argument("kind", choices=("s1", "s2", "s3"))
    p.add_argument("--params", required=True)
    p.add_argument("--scenario", default="D2")
    p.add_argument("--m", type=int, default=400)
    p.add_argument("--rounds", type=int, default=500, help="s1 rounds")
    p.add_argument("--drops", type=int, default=1, help="s1 dropped slots per round")
    p.add_argument("--bytes", help="s2 sweep, e.g. 1..40 or 1,5,10")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("suite", help="full train/evaluate suite with CSV+JSON report")
    common(p)
    train_flags(p)
    p.add_argument("--archs", default="gcn,gat,gt")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--m", type=int, default=500)
    p.add_argument("--eval-m", type=int, default=400)
    p.add_argument("--s1-rounds", type=int, default=500)
    p.add_argument("--no-attacks", action="store_true")
    p.add_argument("--plots", action="store_true", help="also write columnar plot files")
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("protocol-demo", help="print an annotated protocol transcript")
    common(p)
    p.add_argument("--inject", choices=sorted(_INJECTIONS), default="none")
    p.add_argument("--rounds", type=int, default=2)
    p.set_defaults(func=cmd_protocol_demo)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SwarmConfigError, UnknownScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
