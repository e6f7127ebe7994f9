"""
From packets to unit-norm window tensors
========================================

Each packet becomes 42 raw cells; 16 are kept.  String cells are tokenized,
windows are padded to a common length and scaled to unit Frobenius norm.
"""

import numpy as np

from coaplab import features, traffic, windows
from coaplab.pipeline import prepare_dataset

cfg = traffic.desk_scale_config(duration=1210.0)
packets, _ = traffic.run_scenario(cfg)
labeled = windows.label_dataset(packets, cfg.malicious_ips)

row = features.extract_features(packets[0])
for name, cell in zip(features.DEFAULT_SCHEMA.names, row):
    if cell is not None:
        print(f"{name:20s} {cell}")

print("\nselected columns:", [n for n, keep in zip(features.DEFAULT_SCHEMA.names, features.default_mask()) if keep])

# tokenization in miniature
vocab = features.TokenVocabulary([features.Kind.CATEGORICAL, features.Kind.NUMERIC])
print(features.tokenize([["DF", 1.0], ["MF", 2.0], ["DF", None]], vocab))

data = prepare_dataset(labeled, seed=0)
print("\ntrain tensor", data.train.sequences.shape, "test tensor", data.test.sequences.shape)
norms = np.linalg.norm(data.train.sequences.reshape(len(data.train), -1), axis=1)
print("window norms:", norms.min(), norms.max())
