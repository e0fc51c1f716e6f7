#!/usr/bin/env python3
"""Regenerate the gzipped MNIST CSV fixtures under data/fixtures/.

Reads the original IDX files (train-images-idx3-ubyte, train-labels-idx1-ubyte,
t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte) and writes the first 10k train /
2k test images as label,p0..p783 CSV rows, gzipped.

The IDX files are the standard MNIST distribution; one offline-friendly source
is the `mnist-data` npm package (`npm pack mnist-data`), which bundles all four
files under package/data/.

Usage: make_mnist_fixtures.py <idx_dir> [out_dir]
"""

import gzip
import struct
import sys
from pathlib import Path


def read_idx_images(path):
    with open(path, "rb") as f:
        magic, n, rows, cols = struct.unpack(">IIII", f.read(16))
        assert magic == 2051, f"bad image magic {magic}"
        return n, rows * cols, f.read(n * rows * cols)


def read_idx_labels(path):
    with open(path, "rb") as f:
        magic, n = struct.unpack(">II", f.read(8))
        assert magic == 2049, f"bad label magic {magic}"
        return list(f.read(n))


def write_csv_gz(out_path, images, labels, dim, count):
    with gzip.open(out_path, "wt", newline="\n", compresslevel=9) as f:
        f.write("label," + ",".join(f"p{i}" for i in range(dim)) + "\n")
        for i in range(count):
            row = images[i * dim : (i + 1) * dim]
            f.write(str(labels[i]) + "," + ",".join(map(str, row)) + "\n")
    print(f"wrote {out_path} ({count} rows)")


def main():
    idx_dir = Path(sys.argv[1])
    out_dir = Path(sys.argv[2]) if len(sys.argv) > 2 else Path("data/fixtures")
    out_dir.mkdir(parents=True, exist_ok=True)

    n, dim, images = read_idx_images(idx_dir / "train-images-idx3-ubyte")
    labels = read_idx_labels(idx_dir / "train-labels-idx1-ubyte")
    assert n >= 10000
    write_csv_gz(out_dir / "mnist_train_10k.csv.gz", images, labels, dim, 10000)

    n, dim, images = read_idx_images(idx_dir / "t10k-images-idx3-ubyte")
    labels = read_idx_labels(idx_dir / "t10k-labels-idx1-ubyte")
    assert n >= 2000
    write_csv_gz(out_dir / "mnist_test_2k.csv.gz", images, labels, dim, 2000)


if __name__ == "__main__":
    main()
