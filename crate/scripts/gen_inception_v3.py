#!/usr/bin/env python3
"""Writes an InceptionV3-shaped model (94 convolutions, 299x299 input, 16-bit).

Layer shapes follow the Keras InceptionV3 topology. The 1xn / nx1
factorized kernels are modeled as square 3x3 kernels with padding 1;
the planner only handles square kernels and this keeps every spatial
size unchanged.
"""
import json
import sys

layers = []


def conv(name, n, hw, m, k, s=1, pad="same"):
    p = (k - 1) // 2 if pad == "same" else 0
    r = (hw + 2 * p - k) // s + 1
    layers.append(dict(name=name, n=n, h=hw, l=hw, m=m, k=k, s=s, p=p, r=r, c=r, elem_bytes=2))
    return r


def asym(name, n, hw, m):
    return conv(name, n, hw, m, 3)


hw = conv("conv1", 3, 299, 32, 3, s=2, pad="valid")
hw = conv("conv2", 32, hw, 32, 3, pad="valid")
hw = conv("conv3", 32, hw, 64, 3)
hw = (hw - 3) // 2 + 1
hw = conv("conv4", 64, hw, 80, 1, pad="valid")
hw = conv("conv5", 80, hw, 192, 3, pad="valid")
hw = (hw - 3) // 2 + 1

ch = 192
for i, pool in enumerate([32, 64, 64]):
    b = f"mixed{i}"
    conv(f"{b}_1x1", ch, hw, 64, 1)
    conv(f"{b}_5x5a", ch, hw, 48, 1)
    conv(f"{b}_5x5b", 48, hw, 64, 5)
    conv(f"{b}_dbl_a", ch, hw, 64, 1)
    conv(f"{b}_dbl_b", 64, hw, 96, 3)
    conv(f"{b}_dbl_c", 96, hw, 96, 3)
    conv(f"{b}_pool", ch, hw, pool, 1)
    ch = 64 + 64 + 96 + pool

conv("mixed3_3x3", ch, hw, 384, 3, s=2, pad="valid")
conv("mixed3_dbl_a", ch, hw, 64, 1)
conv("mixed3_dbl_b", 64, hw, 96, 3)
hw = conv("mixed3_dbl_c", 96, hw, 96, 3, s=2, pad="valid")
ch = 384 + 96 + ch

for i, mid in zip(range(4, 8), [128, 160, 160, 192]):
    b = f"mixed{i}"
    conv(f"{b}_1x1", ch, hw, 192, 1)
    conv(f"{b}_7x7a", ch, hw, mid, 1)
    asym(f"{b}_7x7b", mid, hw, mid)
    asym(f"{b}_7x7c", mid, hw, 192)
    conv(f"{b}_dbl_a", ch, hw, mid, 1)
    asym(f"{b}_dbl_b", mid, hw, mid)
    asym(f"{b}_dbl_c", mid, hw, mid)
    asym(f"{b}_dbl_d", mid, hw, mid)
    asym(f"{b}_dbl_e", mid, hw, 192)
    conv(f"{b}_pool", ch, hw, 192, 1)
    ch = 768

conv("mixed8_3x3a", ch, hw, 192, 1)
conv("mixed8_3x3b", 192, hw, 320, 3, s=2, pad="valid")
conv("mixed8_7x7a", ch, hw, 192, 1)
asym("mixed8_7x7b", 192, hw, 192)
asym("mixed8_7x7c", 192, hw, 192)
hw = conv("mixed8_7x7d", 192, hw, 192, 3, s=2, pad="valid")
ch = 320 + 192 + ch

for i in (9, 10):
    b = f"mixed{i}"
    conv(f"{b}_1x1", ch, hw, 320, 1)
    conv(f"{b}_3x3a", ch, hw, 384, 1)
    asym(f"{b}_3x3b", 384, hw, 384)
    asym(f"{b}_3x3c", 384, hw, 384)
    conv(f"{b}_dbl_a", ch, hw, 448, 1)
    conv(f"{b}_dbl_b", 448, hw, 384, 3)
    asym(f"{b}_dbl_c", 384, hw, 384)
    asym(f"{b}_dbl_d", 384, hw, 384)
    conv(f"{b}_pool", ch, hw, 192, 1)
    ch = 320 + 768 + 768 + 192

assert len(layers) == 94, len(layers)
json.dump({"name": "inception_v3", "layers": layers}, sys.stdout, indent=1)
sys.stdout.write("\n")
