#!/usr/bin/env python3
"""Regenerate the bundled digit fixtures under data/.

  mnist5k-images.idx3-ubyte / mnist5k-labels.idx1-ubyte
      5,000 MNIST training digits (500 per class) taken from the
      mnist_5k.csv.gz file shipped inside the mlxtend wheel, re-encoded
      in the original IDX layout.
  digits.csv
      The 1,797 8x8 scikit-learn digits as a header-free CSV
      (label, 64 features scaled to [0,1]). Used as a small USPS-style set.
"""
import argparse
import gzip
import pathlib
import struct
import subprocess
import sys
import tempfile
import zipfile

MLXTEND = "mlxtend==0.24.0"


def fetch_mnist_rows(wheel_dir):
    wheels = list(pathlib.Path(wheel_dir).glob("mlxtend-*.whl"))
    if not wheels:
        subprocess.check_call([sys.executable, "-m", "pip", "download", "--no-deps",
                               "-q", MLXTEND, "-d", str(wheel_dir)])
        wheels = list(pathlib.Path(wheel_dir).glob("mlxtend-*.whl"))
    with zipfile.ZipFile(wheels[0]) as z:
        raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz")).decode()
    rows = []
    for line in raw.splitlines():
        vals = [int(float(v)) for v in line.split(",")]
        rows.append((vals[-1], vals[:-1]))
    return rows


def write_idx(out, rows):
    n = len(rows)
    with open(out / "mnist5k-images.idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 2051, n, 28, 28))
        for _, px in rows:
            f.write(bytes(px))
    with open(out / "mnist5k-labels.idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 2049, n))
        f.write(bytes(label for label, _ in rows))


def write_digits(out):
    from sklearn.datasets import load_digits
    d = load_digits()
    with open(out / "digits.csv", "w") as f:
        for x, y in zip(d.data, d.target):
            f.write(",".join([str(int(y))] + ["%g" % (float(v) / 16.0) for v in x]) + "\n")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    ap.add_argument("--wheel-dir", default=None)
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        write_idx(out, fetch_mnist_rows(args.wheel_dir or tmp))
    write_digits(out)


if __name__ == "__main__":
    main()
