"""Independent oracles used to freeze expected values in the C++ tests.

Run with `python3 tests/oracles/frozen_values.py`; nothing here is imported by
the build. Each block prints the numbers copied into the corresponding test.
"""
import itertools
import numpy as np
from scipy import special, optimize


def rrc(beta, span, sps):
    n = np.arange(-span * sps // 2, span * sps // 2 + 1)
    t = n / sps
    h = np.zeros(len(t))
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            h[i] = 1 - beta + 4 * beta / np.pi
        elif abs(abs(ti) - 1 / (4 * beta)) < 1e-12:
            h[i] = beta / np.sqrt(2) * ((1 + 2 / np.pi) * np.sin(np.pi / (4 * beta))
                                        + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta)))
        else:
            h[i] = (np.sin(np.pi * ti * (1 - beta)) + 4 * beta * ti * np.cos(np.pi * ti * (1 + beta))) / (
                np.pi * ti * (1 - (4 * beta * ti) ** 2))
    return h / np.linalg.norm(h)


def qam(m):
    k = int(np.sqrt(m))
    lv = np.arange(-(k - 1), k, 2)
    pts = np.array([complex(a, b) for a in lv for b in lv])
    return pts / np.sqrt(np.mean(np.abs(pts) ** 2))


def mb_priors(pts, lam):
    p = np.exp(-lam * np.abs(pts) ** 2)
    return p / p.sum()


def entropy(p):
    p = p[p > 0]
    return -np.sum(p * np.log2(p))


print("== rrc cascade worst ISI")
for beta, span, sps in [(0.1, 16, 2), (0.25, 16, 2), (0.5, 8, 4)]:
    h = rrc(beta, span, sps)
    c = np.convolve(h, h[::-1])
    mid = len(c) // 2
    isi = [abs(c[mid + k * sps]) for k in range(-(mid // sps), mid // sps + 1) if k != 0]
    print(beta, span, sps, "center", c[mid], "max isi", max(isi))

print("== theory_ber_2pam")
for e in [0.0, 9.59]:
    print(e, 0.5 * special.erfc(np.sqrt(10 ** (e / 10))))

print("== pcs lambda (base points = unit-energy uniform 64-QAM)")
pts = qam(64)
for target in [4.6, 5.5]:
    lam = optimize.brentq(lambda l: entropy(mb_priors(pts, l)) - target, 0, 50, xtol=1e-15)
    p = mb_priors(pts, lam)
    scale = np.sqrt(np.sum(p * np.abs(pts) ** 2))
    q = pts / scale
    print(target, "lambda", repr(lam), "H", entropy(p),
          "cma R", np.sum(p * np.abs(q) ** 4) / np.sum(p * np.abs(q) ** 2))

print("== cma radius uniform 16-QAM")
q16 = qam(16)
print(np.mean(np.abs(q16) ** 4) / np.mean(np.abs(q16) ** 2))

print("== cd cascade residual ISI, cd_fir(b) * cd_fir(-b), no window")


def cd_taps(b, n, sps):
    # all-pass response on a DFT grid of >= 8 n bins, truncated around the center
    N = 1 << int(np.ceil(np.log2(8 * n)))
    w = 2 * np.pi * np.fft.fftfreq(N) * sps
    h = np.fft.fftshift(np.fft.ifft(np.exp(-0.5j * b * w ** 2)))
    return h[N // 2 - n // 2:N // 2 + n // 2 + 1]


for sps in (1, 2):
    for b in (0.3, 0.75, 2.0):
        n0 = int(np.ceil(4 * np.pi * abs(b) * sps * sps))
        n0 += n0 % 2 == 0
        for n in (n0, 4 * n0 + 1):
            c = np.convolve(cd_taps(b, n, sps), cd_taps(-b, n, sps))
            mid = len(c) // 2
            print(sps, b, n, repr((np.sum(abs(c) ** 2) - abs(c[mid]) ** 2) / abs(c[mid]) ** 2))
