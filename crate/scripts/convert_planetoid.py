#!/usr/bin/env python3
"""Convert the Planetoid citation files (ind.<name>.{x,y,tx,ty,allx,ally,graph,test.index})
into the dataset directory layout read by graph-arma.

    python3 scripts/convert_planetoid.py path/to/planetoid/data cora data/cora

Standard split: the first 20 per class labelled vertices for training, the
next 500 for validation, the listed 1000 test vertices for testing. Citeseer
test ids with no features are kept as isolated, unlabelled zero rows.
"""

import pickle
import struct
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def load(raw: Path, name: str, part: str):
    with open(raw / f"ind.{name}.{part}", "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def main(raw: Path, name: str, out: Path) -> None:
    x, y, tx, ty, allx, ally, graph = (load(raw, name, p) for p in ["x", "y", "tx", "ty", "allx", "ally", "graph"])
    test_idx = [int(l) for l in (raw / f"ind.{name}.test.index").read_text().split()]
    lo, hi = min(test_idx), max(test_idx)

    # Pad the test block so every index in [lo, hi] has a row.
    full_tx = sp.lil_matrix((hi - lo + 1, tx.shape[1]))
    full_ty = np.zeros((hi - lo + 1, ty.shape[1]))
    sorted_idx = sorted(test_idx)
    full_tx[np.array(sorted_idx) - lo, :] = tx
    full_ty[np.array(sorted_idx) - lo, :] = ty

    features = sp.vstack([allx, full_tx]).tolil()
    labels_1h = np.vstack([ally, full_ty])
    # The test rows are stored sorted; put them at their listed ids.
    features[test_idx, :] = features[sorted_idx, :]
    labels_1h[test_idx, :] = labels_1h[sorted_idx, :]
    features = np.asarray(features.todense(), dtype=np.float64)
    n = features.shape[0]
    labels = np.where(labels_1h.sum(1) > 0, labels_1h.argmax(1), -1)

    out.mkdir(parents=True, exist_ok=True)
    (out / "splits").mkdir(exist_ok=True)
    with open(out / "features.bin", "wb") as fh:
        fh.write(b"DFSG" + struct.pack("<III", n, features.shape[1], 0))
        fh.write(features.astype("<f8").tobytes())
    with open(out / "labels.txt", "w") as fh:
        fh.writelines(f"{v}\t{c}\n" for v, c in enumerate(labels))

    edges = set()
    for i, nbrs in graph.items():
        for j in nbrs:
            if i != j and i < n and j < n:
                edges.add((min(i, j), max(i, j)))
    with open(out / "edges.tsv", "w") as fh:
        fh.writelines(f"{i}\t{j}\n" for i, j in sorted(edges))

    train = range(len(y))
    val = range(len(y), min(len(y) + 500, lo))
    for fname, ids in [("train.ids", train), ("val.ids", val), ("test.ids", test_idx)]:
        (out / "splits" / fname).write_text("".join(f"{i}\n" for i in ids))
    print(f"{name}: {n} vertices, {len(edges)} undirected edges, {features.shape[1]} features, "
          f"{labels.max() + 1} classes, {len(train)}/{len(val)}/{len(test_idx)} split")


if __name__ == "__main__":
    if len(sys.argv) != 4:
        sys.exit(__doc__)
    main(Path(sys.argv[1]), sys.argv[2], Path(sys.argv[3]))
