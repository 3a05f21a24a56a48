"""Convert a CSV MNIST subset (784 pixel columns then the label) to IDX files.

Writes train-/t10k- images and labels into the output directory with a
stratified, shuffled split.
"""

import argparse
import gzip
import random
import struct
from pathlib import Path


def write_idx(path, dims, payload):
    with open(path, "wb") as f:
        f.write(bytes([0, 0, 8, len(dims)]))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(bytes(payload))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("csv", type=Path)
    ap.add_argument("out", type=Path)
    ap.add_argument("--test-per-class", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    opener = gzip.open if args.csv.suffix == ".gz" else open
    rows = []
    with opener(args.csv, "rt") as f:
        for line in f:
            vals = [int(float(v)) for v in line.strip().split(",")]
            if len(vals) != 785:
                continue
            rows.append((vals[:784], vals[784]))

    rng = random.Random(args.seed)
    by_class = {}
    for img, lab in rows:
        by_class.setdefault(lab, []).append(img)
    train, test = [], []
    for lab in sorted(by_class):
        imgs = by_class[lab]
        rng.shuffle(imgs)
        test += [(i, lab) for i in imgs[: args.test_per_class]]
        train += [(i, lab) for i in imgs[args.test_per_class :]]
    rng.shuffle(train)
    rng.shuffle(test)

    args.out.mkdir(parents=True, exist_ok=True)
    for name, split in (("train", train), ("t10k", test)):
        write_idx(args.out / f"{name}-images-idx3-ubyte", [len(split), 28, 28], [p for img, _ in split for p in img])
        write_idx(args.out / f"{name}-labels-idx1-ubyte", [len(split)], [lab for _, lab in split])
        print(f"{name}: {len(split)} images")


if __name__ == "__main__":
    main()
