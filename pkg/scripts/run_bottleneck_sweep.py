#!/usr/bin/env python3
"""Classification accuracy versus bottleneck width after pre-training.

For each bottleneck size and each reconstruction loss (plain mse, and
the smoothed variant at a fixed sigma), pre-trains an autoencoder on
unlabeled glyph images, fine-tunes encoder + softmax head on a labeled
subset, and reports test accuracy averaged over seeds. One row per
(width, loss) cell.
"""

import argparse

import numpy as np

from pse.autoenc import (
    TrainConfig,
    ae_init,
    ae_train,
    eval_accuracy,
    finetune_classify,
    head_init,
)
from pse.datasets import gen_class_dataset


def run_cell(h, loss_kind, seed, data, args):
    pretrain, labeled, test = data
    d = pretrain.shape[1] * pretrain.shape[2]
    cfg = TrainConfig(
        loss_kind=loss_kind,
        sigma=args.sigma,
        epochs=args.pretrain_epochs,
        learning_rate=args.pretrain_lr,
        seed=seed,
    )
    model = ae_train(ae_init(d, h, seed), pretrain, cfg)[0]
    head = head_init(h, 10, seed + 1)
    model, head, _ = finetune_classify(
        model, head, labeled, args.finetune_epochs, args.finetune_lr, seed
    )
    return eval_accuracy(model, head, test)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--widths", type=int, nargs="+", default=[16, 32, 64, 128])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--sigma", type=float, default=0.5)
    ap.add_argument("--n-pretrain", type=int, default=500)
    ap.add_argument("--n-labeled", type=int, default=100)
    ap.add_argument("--n-test", type=int, default=200)
    ap.add_argument("--pretrain-epochs", type=int, default=40)
    ap.add_argument("--pretrain-lr", type=float, default=0.1)
    ap.add_argument("--finetune-epochs", type=int, default=40)
    ap.add_argument("--finetune-lr", type=float, default=0.2)
    ap.add_argument("--data-seed", type=int, default=100)
    args = ap.parse_args()

    pretrain, _ = gen_class_dataset(args.n_pretrain, args.data_seed)
    lab_imgs, lab_labels = gen_class_dataset(args.n_labeled, args.data_seed + 1)
    test_imgs, test_labels = gen_class_dataset(args.n_test, args.data_seed + 2)
    data = (
        pretrain,
        list(zip(lab_imgs, lab_labels)),
        list(zip(test_imgs, test_labels)),
    )

    header = f"{'width':>6} {'loss':<5} {'mean acc':>9} {'per seed':<30}"
    print(header)
    print("-" * len(header))
    for h in args.widths:
        for loss_kind in ("mse", "pse"):
            accs = [run_cell(h, loss_kind, s, data, args) for s in args.seeds]
            per_seed = " ".join(f"{a:.3f}" for a in accs)
            print(f"{h:>6d} {loss_kind:<5} {np.mean(accs):>9.3f} {per_seed:<30}")


if __name__ == "__main__":
    main()
