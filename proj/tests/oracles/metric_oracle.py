"""Reference SSIM (scikit-image) and LPIPS (numpy) values for the metric tests.

Test images are closed-form so the C++ side can rebuild them:
  a[c, y, x] = 0.5 + 0.4 sin(0.31 x + 0.17 y + 0.9 c)
  b[c, y, x] = 0.5 + 0.35 cos(0.23 x - 0.29 y + 0.4 c) + 0.05 sin(1.7 x y / 40)
  d[c, y, x] = 0.9 a + 0.05 + 0.03 sin(2.1 x + c)
on a 3 x 36 x 44 grid, unit range, rounded to float32.

Run: python3 tests/oracles/metric_oracle.py data/lpips_test_backbone.bin
"""
import struct
import sys

import numpy as np
from skimage.metrics import structural_similarity

C, H, W = 3, 36, 44


def images():
    c, y, x = np.meshgrid(np.arange(C), np.arange(H), np.arange(W), indexing="ij")
    c, y, x = c.astype(np.float64), y.astype(np.float64), x.astype(np.float64)
    a = 0.5 + 0.4 * np.sin(0.31 * x + 0.17 * y + 0.9 * c)
    b = 0.5 + 0.35 * np.cos(0.23 * x - 0.29 * y + 0.4 * c) + 0.05 * np.sin(1.7 * x * y / 40)
    a = a.astype(np.float32).astype(np.float64)
    d = 0.9 * a + 0.05 + 0.03 * np.sin(2.1 * x + c)
    f32 = lambda v: v.astype(np.float32).astype(np.float64)
    return a, f32(b), f32(d)


def ssim(a, b):
    return structural_similarity(a, b, channel_axis=0, data_range=1.0, gaussian_weights=True,
                                 sigma=1.5, use_sample_covariance=False)


def load_backbone(path):
    raw = open(path, "rb").read()
    assert raw[:8] == b"S2ELPIP1"
    (n,) = struct.unpack_from("<I", raw, 8)
    off = 12
    shapes = []
    for _ in range(n):
        shapes.append(struct.unpack_from("<4I", raw, off))
        off += 16
    floats = np.frombuffer(raw[off:], dtype="<f4").astype(np.float64)
    layers, pos = [], 0
    for cin, cout, k, s in shapes:
        w = floats[pos:pos + cout * cin * k * k].reshape(cout, cin, k, k)
        pos += w.size
        bias = floats[pos:pos + cout]
        pos += cout
        layers.append((w, bias, k, s))
    assert pos == floats.size
    return layers


def conv(x, w, bias, k, s):
    p = k // 2
    cin, h, wd = x.shape
    xp = np.zeros((cin, h + 2 * p, wd + 2 * p))
    xp[:, p:p + h, p:p + wd] = x
    oh = (h + 2 * p - k) // s + 1
    ow = (wd + 2 * p - k) // s + 1
    out = np.zeros((w.shape[0], oh, ow))
    for ky in range(k):
        for kx in range(k):
            patch = xp[:, ky:ky + s * (oh - 1) + 1:s, kx:kx + s * (ow - 1) + 1:s]
            out += np.einsum("oc,chw->ohw", w[:, :, ky, kx], patch)
    return out + bias[:, None, None]


def features(layers, img):
    h = 2.0 * img - 1.0
    feats = []
    for w, bias, k, s in layers:
        h = np.maximum(conv(h, w, bias, k, s), 0.0)
        feats.append(h)
    return feats


def lpips(layers, a, b):
    fa, fb = features(layers, a), features(layers, b)
    total = 0.0
    for x, y in zip(fa, fb):
        nx = x / (np.sqrt((x * x).sum(axis=0, keepdims=True)) + 1e-10)
        ny = y / (np.sqrt((y * y).sum(axis=0, keepdims=True)) + 1e-10)
        total += (((nx - ny) ** 2).sum(axis=0) / (2 * len(fa))).mean()
    return total


def main():
    layers = load_backbone(sys.argv[1])
    a, b, d = images()
    print(f"ssim(a, b)      = {ssim(a, b):.15f}")
    # Shift both by the same translation: valid windows move with the content.
    print(f"ssim(a[:, 3:, 5:], b[:, 3:, 5:]) = {ssim(a[:, 3:, 5:], b[:, 3:, 5:]):.15f}")
    print(f"ssim(a, d)      = {ssim(a, d):.15f}")
    print(f"lpips(a, d)     = {lpips(layers, a, d):.15f}")
    print(f"lpips(a, b)     = {lpips(layers, a, b):.15f}")


if __name__ == "__main__":
    main()
