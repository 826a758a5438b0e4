"""Deterministic synthetic 64-fracture network on (0,700)x(0,600).

Long fractures cross each other, some start on the left or right boundary,
branches end exactly on an existing fracture, and a few end just short of
one. Every other pair keeps a separation so the mesh can resolve it.
"""
import csv
import math
import random

W, H = 700.0, 600.0
SEP = 0.8          # smallest gap between unconnected fractures
NEAR = (1.0, 2.5)  # gap range of the deliberate near misses
MIN_ANGLE = math.radians(12)

rng = random.Random(20180925)


def dist_point_seg(p, a, b):
    dx, dy = b[0] - a[0], b[1] - a[1]
    t = max(0.0, min(1.0, ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / (dx * dx + dy * dy)))
    return math.hypot(p[0] - a[0] - t * dx, p[1] - a[1] - t * dy)


def intersect(a, b, c, d):
    r = (b[0] - a[0], b[1] - a[1])
    s = (d[0] - c[0], d[1] - c[1])
    den = r[0] * s[1] - r[1] * s[0]
    if abs(den) < 1e-12:
        return None
    qp = (c[0] - a[0], c[1] - a[1])
    t = (qp[0] * s[1] - qp[1] * s[0]) / den
    u = (qp[0] * r[1] - qp[1] * r[0]) / den
    if -1e-12 <= t <= 1 + 1e-12 and -1e-12 <= u <= 1 + 1e-12:
        return t, u
    return None


def angle(a, b, c, d):
    u = math.atan2(b[1] - a[1], b[0] - a[0])
    v = math.atan2(d[1] - c[1], d[0] - c[0])
    x = abs(u - v) % math.pi
    return min(x, math.pi - x)


def compatible(seg, segs, touching=()):
    a, b = seg
    for k, (c, d) in enumerate(segs):
        hit = intersect(a, b, c, d)
        if hit is not None:
            if angle(a, b, c, d) < MIN_ANGLE:
                return False
            t, u = hit
            # crossings away from the ends of either fracture, unless intended
            if k not in touching and (min(t, 1 - t) * math.dist(a, b) < SEP or min(u, 1 - u) * math.dist(c, d) < SEP):
                return False
            continue
        gap = min(dist_point_seg(a, c, d), dist_point_seg(b, c, d), dist_point_seg(c, a, b), dist_point_seg(d, a, b))
        if gap < SEP:
            return False
    return True


def inside(p, margin=5.0):
    return margin <= p[0] <= W - margin and margin <= p[1] <= H - margin


def random_long():
    while True:
        cx, cy = rng.uniform(40, W - 40), rng.uniform(40, H - 40)
        th = rng.uniform(0, math.pi)
        half = rng.uniform(60, 200)
        a = (cx - half * math.cos(th), cy - half * math.sin(th))
        b = (cx + half * math.cos(th), cy + half * math.sin(th))
        if inside(a) and inside(b):
            return a, b


def from_boundary(x0):
    while True:
        y = rng.uniform(60, H - 60)
        th = rng.uniform(-0.9, 0.9)
        length = rng.uniform(120, 260)
        sgn = 1 if x0 == 0.0 else -1
        b = (x0 + sgn * length * math.cos(th), y + length * math.sin(th))
        if inside(b):
            return (x0, y), b


segs = []


def add(make, tries=20000):
    for _ in range(tries):
        seg, touching = make()
        if compatible(seg, segs, touching):
            segs.append(seg)
            return True
    raise SystemExit("could not place fracture %d" % len(segs))


for x0 in (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, W, W, W, W, W, W):
    add(lambda: (from_boundary(x0), ()))
for _ in range(30):
    add(lambda: (random_long(), ()))


def branch(near_miss):
    k = rng.randrange(len(segs))
    a, b = segs[k]
    t = rng.uniform(0.2, 0.8)
    p = (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))
    th = math.atan2(b[1] - a[1], b[0] - a[0]) + rng.choice((-1, 1)) * rng.uniform(0.6, math.pi - 0.6)
    length = rng.uniform(40, 140)
    if near_miss:
        gap = rng.uniform(*NEAR)
        # step off the host line along the branch direction so the gap is normal-ish
        n = (-(b[1] - a[1]), b[0] - a[0])
        nn = math.hypot(*n)
        side = math.copysign(1.0, math.cos(th) * n[0] + math.sin(th) * n[1])
        p = (p[0] + side * gap * n[0] / nn, p[1] + side * gap * n[1] / nn)
    q = (p[0] + length * math.cos(th), p[1] + length * math.sin(th))
    if not inside(q):
        return ((p, p), ())
    return ((p, q), (k,) if not near_miss else ())


def make_branch(near_miss):
    while True:
        seg, touching = branch(near_miss)
        if seg[0] != seg[1]:
            return seg, touching


for _ in range(14):
    add(lambda: make_branch(False))


def near_ok():
    seg, _ = make_branch(True)
    return seg, ()


# near misses are checked with a smaller separation
SEP_SAVED = SEP
for _ in range(8):
    SEP = NEAR[0] * 0.9
    add(near_ok)
    SEP = SEP_SAVED

assert len(segs) == 64, len(segs)
with open("benchmark4_fractures.csv", "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["START_X", "START_Y", "END_X", "END_Y"])
    for (a, b) in segs:
        w.writerow(["%.10f" % a[0], "%.10f" % a[1], "%.10f" % b[0], "%.10f" % b[1]])
