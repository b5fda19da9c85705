"""Reference forward values for the NN layers, computed with PyTorch.

Inputs and weights follow closed-form patterns so the C++ test rebuilds
them without data files:
    x[i] = cos(0.23 i),  w[i] = 0.5 sin(0.37 i + 0.1),  b[i] = 0.1 i - 0.05
Prints sum(y) and sum(y * cos(0.11 i)) per case.
"""
import math
import torch
import torch.nn.functional as F

torch.set_default_dtype(torch.float64)


def pattern(n, f):
    return torch.tensor([f(i) for i in range(n)])


def xs(*shape):
    return pattern(math.prod(shape), lambda i: math.cos(0.23 * i)).reshape(shape)


def ws(*shape):
    return pattern(math.prod(shape), lambda i: 0.5 * math.sin(0.37 * i + 0.1)).reshape(shape)


def bs(n):
    return pattern(n, lambda i: 0.1 * i - 0.05)


def report(name, y):
    flat = y.flatten()
    probe = pattern(flat.numel(), lambda i: math.cos(0.11 * i))
    print(f"{name} {tuple(y.shape)} {flat.sum().item():.15e} {(flat * probe).sum().item():.15e}")


x = xs(2, 3, 9, 8)
report("conv_k3_s2_p1", F.conv2d(x, ws(4, 3, 3, 3), bs(4), stride=2, padding=1))
report("conv_k4_s1_p2", F.conv2d(x, ws(5, 3, 4, 4), bs(5), stride=1, padding=2))
report("conv_k7_refl3", F.conv2d(F.pad(x, (3, 3, 3, 3), mode="reflect"), ws(2, 3, 7, 7), bs(2)))
report("convT_k3_s2_p1_op1",
       F.conv_transpose2d(x, ws(3, 4, 3, 3), bs(4), stride=2, padding=1, output_padding=1))
report("instance_norm", F.instance_norm(x, eps=1e-5))
report("avgpool_refl1_k3_s2", F.avg_pool2d(F.pad(x, (1, 1, 1, 1), mode="reflect"), 3, 2))
