"""Score functions of the supported embedding families.

Every family works on flat parameter rows so that tables stay plain 2-D
arrays:

============  =====================  ===========================
family        entity row             relation row
============  =====================  ===========================
TransE        d reals                d reals
DistMult      d reals                d reals
ComplEx       [re | im] (2d)         [re | im] (2d)
RotatE        [re | im] (2d)         d phases
HAKE          [modulus | phase]      [modulus | phase]
PairRE        d reals                [r_head | r_tail] (2d)
DualE         8 blocks of d          8 blocks of d
============  =====================  ===========================

``score`` and ``grad`` broadcast over leading axes.  Higher scores mean
more plausible triples; distance families return negated distances.
"""
from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi
RECIPROCAL_EPS = 1e-12
_NORM_EPS = 1e-30


def _safe_reciprocal(x):
    sign = np.where(x < 0, -1.0, 1.0)
    return sign / np.maximum(np.abs(x), RECIPROCAL_EPS)


def _wrap(phase):
    out = np.mod(phase, TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative inputs
    return np.where(out >= TWO_PI, 0.0, out).astype(phase.dtype, copy=False)


class Family:
    name = ""
    entity_blocks = 1
    relation_blocks = 1
    entity_phase_blocks: tuple = ()
    relation_phase_blocks: tuple = ()
    extras: dict = {}

    def entity_width(self, d):
        return self.entity_blocks * d

    def relation_width(self, d):
        return self.relation_blocks * d

    def init(self, n_entities, n_relations, d, rng, dtype=np.float32):
        bound = 6.0 / np.sqrt(d)
        ent = rng.uniform(-bound, bound, size=(n_entities, self.entity_width(d)))
        rel = rng.uniform(-bound, bound, size=(n_relations, self.relation_width(d)))
        for b in self.entity_phase_blocks:
            ent[:, b * d:(b + 1) * d] = rng.uniform(0.0, TWO_PI, size=(n_entities, d))
        for b in self.relation_phase_blocks:
            rel[:, b * d:(b + 1) * d] = rng.uniform(0.0, TWO_PI, size=(n_relations, d))
        return ent.astype(dtype), rel.astype(dtype), dict(self.extras)

    def wrap(self, ent, rel, d):
        """Map phase columns back into [0, 2pi) in place."""
        for b in self.entity_phase_blocks:
            ent[:, b * d:(b + 1) * d] = _wrap(ent[:, b * d:(b + 1) * d])
        for b in self.relation_phase_blocks:
            rel[:, b * d:(b + 1) * d] = _wrap(rel[:, b * d:(b + 1) * d])

    def score(self, h, r, t, extras):
        raise NotImplementedError

    def grad(self, h, r, t, extras):
        """Return ``(score, d/dh, d/dr, d/dt, {extra: d/dextra})``."""
        raise NotImplementedError

    def invert(self, r):
        raise NotImplementedError

    def compose(self, rels):
        """Single relation row equivalent to applying ``rels`` in order."""
        raise NotImplementedError

    def identity(self, d, dtype=np.float64):
        raise NotImplementedError


def _halves(x, k=2):
    d = x.shape[-1] // k
    return [x[..., i * d:(i + 1) * d] for i in range(k)]


class TransE(Family):
    name = "TransE"

    def score(self, h, r, t, extras):
        return -np.abs(h + r - t).sum(-1)

    def grad(self, h, r, t, extras):
        u = h + r - t
        g = -np.sign(u)
        return -np.abs(u).sum(-1), g, g, -g, {}

    def invert(self, r):
        return -r

    def compose(self, rels):
        out = rels[0]
        for r in rels[1:]:
            out = out + r
        return out

    def identity(self, d, dtype=np.float64):
        return np.zeros(d, dtype)


class DistMult(Family):
    name = "DistMult"

    def score(self, h, r, t, extras):
        return (h * r * t).sum(-1)

    def grad(self, h, r, t, extras):
        return (h * r * t).sum(-1), r * t, h * t, h * r, {}

    def invert(self, r):
        return _safe_reciprocal(r)

    def compose(self, rels):
        out = rels[0]
        for r in rels[1:]:
            out = out * r
        return out

    def identity(self, d, dtype=np.float64):
        return np.ones(d, dtype)


class ComplEx(Family):
    name = "ComplEx"
    entity_blocks = 2
    relation_blocks = 2

    def score(self, h, r, t, extras):
        a, b = _halves(h)
        c, d = _halves(r)
        e, f = _halves(t)
        return ((a * c - b * d) * e + (a * d + b * c) * f).sum(-1)

    def grad(self, h, r, t, extras):
        a, b = _halves(h)
        c, d = _halves(r)
        e, f = _halves(t)
        re, im = a * c - b * d, a * d + b * c
        s = (re * e + im * f).sum(-1)
        gh = np.concatenate([c * e + d * f, -d * e + c * f], -1)
        gr = np.concatenate([a * e + b * f, -b * e + a * f], -1)
        gt = np.concatenate([re, im], -1)
        return s, gh, gr, gt, {}

    def invert(self, r):
        c, d = _halves(r)
        n2 = np.maximum(c * c + d * d, RECIPROCAL_EPS ** 2)
        return np.concatenate([c / n2, -d / n2], -1)

    def compose(self, rels):
        out = rels[0]
        for r in rels[1:]:
            a, b = _halves(out)
            c, d = _halves(r)
            out = np.concatenate([a * c - b * d, a * d + b * c], -1)
        return out

    def identity(self, d, dtype=np.float64):
        return np.concatenate([np.ones(d, dtype), np.zeros(d, dtype)])


class RotatE(Family):
    """Rotation in complex space; the distance is the Euclidean norm of
    ``h o r - t`` over all complex coordinates."""

    name = "RotatE"
    entity_blocks = 2
    relation_blocks = 1
    relation_phase_blocks = (0,)

    def _diff(self, h, r, t):
        a, b = _halves(h)
        e, f = _halves(t)
        cos, sin = np.cos(r), np.sin(r)
        return a * cos - b * sin - e, a * sin + b * cos - f, a, b, cos, sin

    def score(self, h, r, t, extras):
        x, y, *_ = self._diff(h, r, t)
        return -np.sqrt((x * x + y * y).sum(-1))

    def grad(self, h, r, t, extras):
        x, y, a, b, cos, sin = self._diff(h, r, t)
        n = np.sqrt((x * x + y * y).sum(-1))
        inv = (1.0 / np.maximum(n, _NORM_EPS))[..., None]
        gx, gy = -x * inv, -y * inv
        gh = np.concatenate([gx * cos + gy * sin, -gx * sin + gy * cos], -1)
        gr = gx * (-a * sin - b * cos) + gy * (a * cos - b * sin)
        gt = np.concatenate([-gx, -gy], -1)
        return -n, gh, gr, gt, {}

    def invert(self, r):
        return _wrap(-r)

    def compose(self, rels):
        out = rels[0]
        for r in rels[1:]:
            out = _wrap(out + r)
        return out

    def identity(self, d, dtype=np.float64):
        return np.zeros(d, dtype)


class HAKE(Family):
    """Modulus part scaled elementwise, phase part translated; ``lambda``
    weighs the phase distance and is a learned scalar.

    The formal inverse negates the modulus row and conjugates (negates) the
    phase row."""

    name = "HAKE"
    entity_blocks = 2
    relation_blocks = 2
    entity_phase_blocks = (1,)
    relation_phase_blocks = (1,)
    extras = {"hake_lambda": 1.0}

    def score(self, h, r, t, extras):
        hm, hp = _halves(h)
        rm, rp = _halves(r)
        tm, tp = _halves(t)
        lam = extras["hake_lambda"]
        u = hm * rm - tm
        return -np.sqrt((u * u).sum(-1)) - lam * np.abs(np.sin((hp + rp - tp) / 2)).sum(-1)

    def grad(self, h, r, t, extras):
        hm, hp = _halves(h)
        rm, rp = _halves(r)
        tm, tp = _halves(t)
        lam = extras["hake_lambda"]
        u = hm * rm - tm
        n = np.sqrt((u * u).sum(-1))
        inv = (1.0 / np.maximum(n, _NORM_EPS))[..., None]
        v = (hp + rp - tp) / 2
        sv = np.sin(v)
        phase = np.abs(sv).sum(-1)
        gv = -lam * np.sign(sv) * np.cos(v)
        gu = -u * inv
        gh = np.concatenate([gu * rm, gv / 2], -1)
        gr = np.concatenate([gu * hm, gv / 2], -1)
        gt = np.concatenate([-gu, -gv / 2], -1)
        return -n - lam * phase, gh, gr, gt, {"hake_lambda": -phase}

    def invert(self, r):
        rm, rp = _halves(r)
        return np.concatenate([-rm, _wrap(-rp)], -1)

    def compose(self, rels):
        out = rels[0]
        for r in rels[1:]:
            am, ap = _halves(out)
            bm, bp = _halves(r)
            out = np.concatenate([am * bm, _wrap(ap + bp)], -1)
        return out

    def identity(self, d, dtype=np.float64):
        return np.concatenate([np.ones(d, dtype), np.zeros(d, dtype)])


class PairRE(Family):
    name = "PairRE"
    relation_blocks = 2

    def score(self, h, r, t, extras):
        rh, rt = _halves(r)
        return -np.abs(h * rh - t * rt).sum(-1)

    def grad(self, h, r, t, extras):
        rh, rt = _halves(r)
        u = h * rh - t * rt
        g = -np.sign(u)
        gr = np.concatenate([g * h, -g * t], -1)
        return -np.abs(u).sum(-1), g * rh, gr, -g * rt, {}

    def invert(self, r):
        return _safe_reciprocal(r)

    def compose(self, rels):
        out = rels[0]
        for r in rels[1:]:
            out = out * r
        return out

    def identity(self, d, dtype=np.float64):
        return np.ones(2 * d, dtype)


# dual quaternions ---------------------------------------------------------------

def _hamilton(a, b):
    a0, a1, a2, a3 = a
    b0, b1, b2, b3 = b
    return (a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0)


def _conj(a):
    return (a[0], -a[1], -a[2], -a[3])


def _add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def _dot4(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]


def _dq_split(x):
    parts = _halves(x, 8)
    return tuple(parts[:4]), tuple(parts[4:])


def _dq_join(q, p):
    return np.concatenate(list(q) + list(p), -1)


def _dq_mul(a, b):
    (a0, a1), (b0, b1) = a, b
    return _hamilton(a0, b0), _add(_hamilton(a0, b1), _hamilton(a1, b0))


def _dq_normalize(q, p):
    """Unit dual quaternion: real part unit-norm, dual part orthogonal to it."""
    n2 = np.maximum(_dot4(q, q), _NORM_EPS)
    n = np.sqrt(n2)
    c = _dot4(q, p)
    qn = tuple(x / n for x in q)
    pn = tuple((y - c / n2 * x) / n for x, y in zip(q, p))
    return qn, pn


class DualE(Family):
    """Dual-quaternion family: head multiplied by the unit-normalised
    relation, then an inner product over all eight components with the tail."""

    name = "DualE"
    entity_blocks = 8
    relation_blocks = 8

    def score(self, h, r, t, extras):
        hq = _dq_split(h)
        w = _dq_normalize(*_dq_split(r))
        c0, c1 = _dq_mul(hq, w)
        t0, t1 = _dq_split(t)
        return (_dot4(c0, t0) + _dot4(c1, t1)).sum(-1)

    def grad(self, h, r, t, extras):
        a0, a1 = _dq_split(h)
        q, p = _dq_split(r)
        b0, b1 = _dq_normalize(q, p)
        c0, c1 = _dq_split(t)
        o0, o1 = _dq_mul((a0, a1), (b0, b1))
        s = (_dot4(o0, c0) + _dot4(o1, c1)).sum(-1)
        ga0 = _add(_hamilton(c0, _conj(b0)), _hamilton(c1, _conj(b1)))
        ga1 = _hamilton(c1, _conj(b0))
        gb0 = _add(_hamilton(_conj(a0), c0), _hamilton(_conj(a1), c1))
        gb1 = _hamilton(_conj(a0), c1)
        gq, gp = self._normalize_backward(q, p, gb0, gb1)
        return s, _dq_join(ga0, ga1), _dq_join(gq, gp), _dq_join(o0, o1), {}

    @staticmethod
    def _normalize_backward(q, p, gqn, gpn):
        n2 = np.maximum(_dot4(q, q), _NORM_EPS)
        n = np.sqrt(n2)
        n3 = n2 * n
        c = _dot4(q, p)
        qn = tuple(x / n for x in q)
        proj = _dot4(qn, gqn)
        gq = [(g - x * proj) / n for g, x in zip(gqn, qn)]
        pu = _dot4(p, gpn)
        qu = _dot4(q, gpn)
        for i in range(4):
            gq[i] = gq[i] + (-pu * q[i] - p[i] * qu - c * gpn[i]) / n3 + 3.0 * c * qu * q[i] / (n3 * n2)
        gp = tuple(g / n - x * qu / n3 for g, x in zip(gpn, q))
        return tuple(gq), gp

    def invert(self, r):
        q, p = _dq_split(r)
        return _dq_join(_conj(q), _conj(p))

    def compose(self, rels):
        out = _dq_split(rels[0])
        if len(rels) == 1:
            return rels[0]
        out = _dq_normalize(*out)
        for r in rels[1:]:
            out = _dq_mul(out, _dq_normalize(*_dq_split(r)))
        return _dq_join(*out)

    def identity(self, d, dtype=np.float64):
        row = np.zeros(8 * d, dtype)
        row[:d] = 1.0
        return row


FAMILIES = {cls.name: cls() for cls in (TransE, RotatE, HAKE, DistMult, ComplEx, DualE, PairRE)}


def get_family(name) -> Family:
    if isinstance(name, Family):
        return name
    for key, fam in FAMILIES.items():
        if key.lower() == str(name).lower():
            return fam
    raise ValueError(f"unknown model family {name!r}; choose from {sorted(FAMILIES)}")
