"""
Generating benchmark datasets
=============================

Every generator returns a ``Dataset`` with a stratified train/test split and
a config dict holding all parameters, including the seed.
"""

import tempfile

import numpy as np

from qmlbench.datagen import (gen_bars_and_stripes, gen_hidden_manifold, gen_linearly_separable,
                              gen_two_curves, read_dataset, write_dataset)

ds = gen_linearly_separable(d=4, N=300, seed=0)
print(ds.config)
print("train/test sizes:", ds.X_train.shape, ds.X_test.shape)
print("class counts:", np.unique(ds.labels, return_counts=True))

# every point keeps a margin from the hyperplane sum(x) = 0
print("smallest |sum x| / d:", np.min(np.abs(ds.inputs.sum(axis=1))) / 4)

# bars are constant along columns, stripes along rows
bs = gen_bars_and_stripes(width=4, N=8, noise_std=0.0, seed=1)
for img, label in zip(bs.inputs[:2], bs.labels[:2]):
    print(label, "\n", img.reshape(4, 4))

hm = gen_hidden_manifold(d=6, m=2, seed=0)
tc = gen_two_curves(d=6, degree=3, seed=0)
print("hidden manifold inputs:", hm.inputs.shape, "two curves inputs:", tc.inputs.shape)

# datasets round-trip through CSV + JSON
with tempfile.TemporaryDirectory() as tmp:
    paths = write_dataset(ds, tmp)
    back = read_dataset(paths["train"])
    print("round trip equal:", np.array_equal(back.X_train, ds.X_train))
