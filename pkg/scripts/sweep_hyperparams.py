#!/usr/bin/env python3
"""Scripted loop over hidden dimension and layer count.

Runs the synthetic classification task for each (hidden_dim, layers) pair
and prints one result row per configuration.
"""

import argparse
import json

from polyrep import TrainConfig, train
from polyrep.datasets import synthetic_dataset
from polyrep.training import evaluate_classification


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=200)
    ap.add_argument("--hidden-dims", type=int, nargs="+", default=[16, 32, 64])
    ap.add_argument("--layers", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--epochs", type=int, default=80)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    records = synthetic_dataset(args.count, seed=args.seed)
    for hidden in args.hidden_dims:
        for layers in args.layers:
            cfg = TrainConfig(
                hidden_dim=hidden, layers=layers, max_epochs=args.epochs, seed=args.seed
            )
            result = train(cfg, records)
            metrics = evaluate_classification(
                result.checkpoint.params, result.test_records
            )
            print(
                json.dumps(
                    {
                        "hidden_dim": hidden,
                        "layers": layers,
                        "epochs_run": len(result.log),
                        "test_accuracy": metrics.accuracy,
                        "test_auc": metrics.auc,
                    }
                )
            )


if __name__ == "__main__":
    main()
