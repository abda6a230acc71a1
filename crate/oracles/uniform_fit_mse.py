"""Independent recomputation of the 16-segment uniform fit of
log2(1 + 2^-d) at T=12, F=6, d_max=12, and its mean squared error on the
integer grid, using mpmath at 50 digits for the target curve."""
import mpmath as mp

mp.mp.dps = 50
T, F, DMAX, N = 12, 6, 12, 16
S = 2 ** F
MAG_MAX = 2 ** (T - 1) - 1
DOM = DMAX * S
KMIN, KMAX = -(F + 2), 1


def target(d):
    v = mp.log(1 + mp.power(2, -mp.mpf(d) / S), 2) * S
    return min(max(v, -MAG_MAX), MAG_MAX)


def shr_even(v, s):
    q = v >> s
    rem = v - (q << s)
    half = 1 << (s - 1)
    return q + 1 if rem > half or (rem == half and q & 1) else q


def fit(start, end):
    count = min((end - start) * 4 + 1, 4097)
    pts = [start + mp.mpf(end - start) * j / (count - 1) for j in range(count)]
    ts = [target(d) for d in pts]
    cands = [(0, 0)] + [(s, k) for k in range(KMIN, KMAX + 1) for s in (-1, 1)]
    best = None
    for s, k in cands:
        a = s * mp.power(2, k)
        res = sum(t - a * d for d, t in zip(pts, ts)) / count
        off = int(mp.nint(res))  # mpmath nint rounds half to even
        off = max(-MAG_MAX, min(MAG_MAX, off))
        mse = sum((t - max(a * d + off, 0)) ** 2 for d, t in zip(pts, ts)) / count
        key = (mse, abs(k) if s else 0, s != 0)
        if best is None or key < best[0]:
            best = (key, (s, k, off))
    return best[1]


bins = [(i * (DOM + 1)) // N for i in range(N)]
segs = []
for i, b in enumerate(bins):
    end = bins[i + 1] - 1 if i + 1 < N else DOM
    segs.append((b,) + fit(b, end))


def evaluate(d):
    seg = [s for s in segs if s[0] <= d][-1]
    _, s, k, off = seg
    if s == 0:
        v = off
    else:
        m = d << k if k >= 0 else shr_even(d, -k)
        v = s * m + off
    return max(v, 0)


err = sum(((target(d) - evaluate(d)) / S) ** 2 for d in range(DOM + 1)) / (DOM + 1)
print("segments", segs)
print("mse_plus_log2 %.17e" % float(err))
print("log2(3)*64 =", mp.log(3, 2) * 64)
print("2^(101/64) =", mp.power(2, mp.mpf(101) / 64))
