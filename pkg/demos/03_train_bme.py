"""
Training a teNN network on BME
==============================

BME is a small synthetic three-class problem (Begin, Middle, End) where
the class is given by the position of a bump. We train one cell per class,
report train and test accuracy, inspect the learned sparsity and compare
with the nearest-neighbour baselines.

Run from the repository root with the data files in ``data/``. A few hundred
epochs take a couple of minutes on one core; the default meta-parameters
use 2000.
"""

import os
import sys

import numpy as np

from tenn.baselines import loo_tune_nu, one_nn_classify
from tenn.data import load_dataset
from tenn.network import predict, sparsity_report
from tenn.training import TrainConfig, train

DATA = os.path.join(os.path.dirname(__file__), "..", "data")
EPOCHS = int(sys.argv[1]) if len(sys.argv) > 1 else 300

train_set = load_dataset(os.path.join(DATA, "BME_TRAIN.tsv"))
test_set = load_dataset(os.path.join(DATA, "BME_TEST.tsv"))
print(f"{len(train_set)} training and {len(test_set)} test series of length {train_set.max_length}")

# %%
# Training. The callback prints progress every 50 epochs.


def progress(epoch, report):
    if epoch % 50 == 0:
        print(f"epoch {epoch:4d}  loss {report.loss[-1]:8.3f}  train acc {report.train_accuracy[-1]:.3f}")


lm, ml, report = train(train_set, TrainConfig(max_epoch=EPOCHS), callback=progress)


def accuracy(net):
    return np.mean([predict(net, s) == s.label for s in test_set.items])


print(f"teNN-lm (epoch {report.best_by_train_error}) test accuracy {accuracy(lm):.4f}")
print(f"teNN-ml (epoch {report.best_by_loss}) test accuracy {accuracy(ml):.4f}")

# %%
# Sparsity: the share of near-zero entries in Ac and At per cell.
rep = sparsity_report(lm)
for k, cell in enumerate(lm.cells):
    print(f"cell {k} ({cell.label}): Ac {rep.ac_percent[k]:.1f}%  At {rep.at_percent[k]:.1f}%")

# %%
# Baselines.
print("1NN-DTW  accuracy", one_nn_classify(train_set, test_set, "dtw").accuracy)
nu = loo_tune_nu(train_set)
print(f"1NN-KDTW accuracy (nu = {nu:g})", one_nn_classify(train_set, test_set, "kdtw", nu=nu).accuracy)
