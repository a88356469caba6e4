"""Convert the 5,000-image MNIST sample shipped inside the mlxtend wheel to IDX.

    python scripts/make_mnist_subset.py mlxtend-0.24.0-py3-none-any.whl data/mnist

The source may be the wheel itself or the extracted ``mnist_5k.csv.gz``
(784 pixel columns then the label).  Rows are shuffled with a fixed seed
because the source is sorted by label.
"""

import argparse
import gzip
import io
import os
import zipfile

import numpy as np

from kdlnet.data import write_idx

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_source(path):
    if path.endswith(".whl"):
        with zipfile.ZipFile(path) as z:
            raw = z.read(MEMBER)
    else:
        with open(path, "rb") as fh:
            raw = fh.read()
    return np.loadtxt(io.BytesIO(gzip.decompress(raw)), delimiter=",")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source")
    ap.add_argument("out_dir")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    table = read_source(args.source)
    perm = np.random.default_rng(args.seed).permutation(table.shape[0])
    table = table[perm]
    images = table[:, :-1].reshape(-1, 28, 28).astype(np.uint8)
    labels = table[:, -1].astype(np.uint8)
    os.makedirs(args.out_dir, exist_ok=True)
    img = os.path.join(args.out_dir, "images-idx3-ubyte")
    lab = os.path.join(args.out_dir, "labels-idx1-ubyte")
    write_idx(img, lab, images, labels)
    for p in (img, lab):
        with open(p, "rb") as src, open(p + ".gz", "wb") as dst:
            dst.write(gzip.compress(src.read(), mtime=0))
        os.remove(p)
    print(f"wrote {len(labels)} images to {args.out_dir}")


if __name__ == "__main__":
    main()
