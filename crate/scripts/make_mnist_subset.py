#!/usr/bin/env python3
"""Write a 5000-image MNIST subset as gzip-compressed IDX files.

The images come from the `mnist_5k.csv.gz` table shipped inside the mlxtend
wheel (500 training-split images per digit, raw 0-255 pixels). The first 400
images of each digit become the training file, the remaining 100 the test file.

    python3 scripts/make_mnist_subset.py [out_dir]

Requires only `pip download` access to PyPI.
"""
import gzip
import io
import os
import struct
import subprocess
import sys
import tempfile
import zipfile

PER_CLASS_TRAIN = 400


def fetch_table():
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q",
             "-d", tmp, "mlxtend==0.24.0"],
            check=True,
        )
        wheel = next(f for f in os.listdir(tmp) if f.endswith(".whl"))
        with zipfile.ZipFile(os.path.join(tmp, wheel)) as z:
            raw = z.read("mlxtend/data/data/mnist_5k.csv.gz")
    rows = gzip.decompress(raw).decode().splitlines()
    out = []
    for line in rows:
        vals = [int(float(v)) for v in line.split(",")]
        out.append((bytes(vals[:-1]), vals[-1]))
    return out


def write_gz(path, payload):
    buf = io.BytesIO()
    with gzip.GzipFile(fileobj=buf, mode="wb", mtime=0) as g:
        g.write(payload)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def images_blob(items):
    head = struct.pack(">IIII", 0x00000803, len(items), 28, 28)
    return head + b"".join(px for px, _ in items)


def labels_blob(items):
    head = struct.pack(">II", 0x00000801, len(items))
    return head + bytes(lbl for _, lbl in items)


def main():
    out_dir = sys.argv[1] if len(sys.argv) > 1 else "data/mnist"
    os.makedirs(out_dir, exist_ok=True)
    table = fetch_table()
    train, test = [], []
    seen = {}
    for px, lbl in table:
        n = seen.get(lbl, 0)
        (train if n < PER_CLASS_TRAIN else test).append((px, lbl))
        seen[lbl] = n + 1
    write_gz(os.path.join(out_dir, "train-images-idx3-ubyte.gz"), images_blob(train))
    write_gz(os.path.join(out_dir, "train-labels-idx1-ubyte.gz"), labels_blob(train))
    write_gz(os.path.join(out_dir, "t10k-images-idx3-ubyte.gz"), images_blob(test))
    write_gz(os.path.join(out_dir, "t10k-labels-idx1-ubyte.gz"), labels_blob(test))
    print(f"wrote {len(train)} train / {len(test)} test images to {out_dir}")


if __name__ == "__main__":
    main()
