#!/usr/bin/env python3
"""Build the desk-scale MNIST subset shipped in data/mnist_desk.tar.gz.

Source: the `mnist` npm package (MIT, J. Cazala), which bundles 10000 MNIST
digits as JSON arrays of 784 pixel intensities rounded to 3 decimals.

    npm pack mnist && tar xzf mnist-1.1.0.tgz
    python3 tools/build_mnist_subset.py package/src/digits data/mnist_desk.tar.gz

The 10000 digits are pooled, permuted with a fixed seed, and split 5000/5000
into train and test IDX files (pixels re-quantized to bytes).
"""
import io
import json
import struct
import sys
import tarfile

import numpy as np


def idx_images(images):
    header = struct.pack(">IIII", 0x00000803, len(images), 28, 28)
    return header + images.astype(np.uint8).tobytes()


def idx_labels(labels):
    header = struct.pack(">II", 0x00000801, len(labels))
    return header + labels.astype(np.uint8).tobytes()


def main(digits_dir, out_path):
    images, labels = [], []
    for digit in range(10):
        with open(f"{digits_dir}/{digit}.json") as fh:
            flat = np.asarray(json.load(fh)["data"], dtype=np.float64)
        rows = flat.reshape(-1, 784)
        images.append(np.rint(rows * 255.0).clip(0, 255))
        labels.append(np.full(len(rows), digit))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    order = np.random.default_rng(20171204).permutation(len(labels))
    images, labels = images[order], labels[order]

    members = {
        "train-images-idx3-ubyte": idx_images(images[:5000]),
        "train-labels-idx1-ubyte": idx_labels(labels[:5000]),
        "t10k-images-idx3-ubyte": idx_images(images[5000:10000]),
        "t10k-labels-idx1-ubyte": idx_labels(labels[5000:10000]),
    }
    with tarfile.open(out_path, "w:gz") as tar:
        for name, payload in members.items():
            info = tarfile.TarInfo(f"mnist_desk/{name}")
            info.size = len(payload)
            info.mtime = 0
            tar.addfile(info, io.BytesIO(payload))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
