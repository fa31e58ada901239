#!/usr/bin/env python3
"""Quick detection-quality probe across scenarios and attacks.

Trains one model per requested swarm/arch at reduced scale and prints the
rates the acceptance bands care about.  For tuning, not for reports.
"""

import argparse
import sys
import time

sys.path.insert(0, "src")

import numpy as np

from swarmnet import build_swarm, scenario
from swarmnet.harness import (evaluate_s1, evaluate_s2, evaluate_s3,
                              evaluate_scenario, run_training_phase)
from swarmnet.scenarios import catalog
from swarmnet.corpus import generate_corpus
from swarmnet.training import TrainConfig


def probe(swarm_id, arch, m, epochs, seed, eval_m):
    swarm = build_swarm(swarm_id)
    config = TrainConfig(epochs=epochs)
    t0 = time.time()
    params = run_training_phase(swarm, m, seed, arch, config)
    train_s = time.time() - t0
    print(f"== {swarm_id} {arch} m={m} epochs={epochs} seed={seed} "
          f"(train {train_s:.1f}s, L={params.pad_length}) ==")
    print("   DT:", " ".join(f"{v:.5f}" for v in params.thresholds))
    rows = []
    for sid, sc in catalog(swarm_id).items():
        res = evaluate_scenario(params, swarm, sc, eval_m, seed + 17)
        rows.append((sid, res))
    for sid, res in rows:
        cells = " ".join(f"{'DR' if l else 'AR'}{j}={r:.3f}"
                         for j, (l, r) in enumerate(zip(res.labels, res.node_rates)))
        print(f"   {sid::<9} acc={res.accuracy:.4f} {cells}")
    dev = generate_corpus(swarm, catalog(swarm_id)["D2"], max(eval_m, 500), seed + 17)
    s1 = evaluate_s1(params, swarm, dev, 500, seed + 17)
    print(f"   S1 accuracy: {s1:.4f}")
    s2 = evaluate_s2(params, swarm, dev, seed + 17, (1, 2, 4, 6, 10, 20, 40))
    print("   S2:", " ".join(f"{b}:{r:.3f}" for b, r in s2))
    s3 = evaluate_s3(params, swarm, dev, seed + 17)
    print(f"   S3 DR: {s3:.4f}")
    return params


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--swarm", default="swarm1")
    ap.add_argument("--arch", default="gt")
    ap.add_argument("--m", type=int, default=200)
    ap.add_argument("--epochs", type=int, default=80)
    ap.add_argument("--eval-m", type=int, default=200)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    probe(args.swarm, args.arch, args.m, args.epochs, args.seed, args.eval_m)
