"""Generation layouts and random-annex overlap statistics.

Packets are indexed 0..N-1.  Three constructions are provided: contiguous
disjoint blocks, the random annex code (each base block gets ``l`` extra
packets drawn without replacement from outside it) and head-to-toe overlap
(each block borrows the first ``l`` packets of the next block, end-around).

The closed-form statistics below are expectations over the random-annex
ensemble, not properties of one realised layout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import gammaln

KINDS = ("disjoint", "random_annex", "head_to_toe")


class LayoutError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GenerationLayout:
    N: int
    members: tuple[tuple[int, ...], ...]
    rho: tuple[float, ...]
    kind: str = "disjoint"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise LayoutError(f"unknown layout kind {self.kind!r}")
        if len(self.rho) != len(self.members) or abs(sum(self.rho) - 1.0) > 1e-9:
            raise LayoutError("rho must be a probability vector over the generations")
        seen = set()
        for j, mem in enumerate(self.members):
            if not mem:
                raise LayoutError(f"generation {j} is empty")
            if len(set(mem)) != len(mem):
                raise LayoutError(f"generation {j} has duplicate members")
            if list(mem) != sorted(mem):
                raise LayoutError(f"generation {j} members are not sorted")
            seen.update(mem)
        if seen != set(range(self.N)):
            raise LayoutError("generations do not cover packets 0..N-1 exactly")

    @property
    def n(self) -> int:
        return len(self.members)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(m) for m in self.members)

    def packet_generations(self) -> list[list[int]]:
        """For each packet, the generations it participates in."""
        out: list[list[int]] = [[] for _ in range(self.N)]
        for j, mem in enumerate(self.members):
            for p in mem:
                out[p].append(j)
        return out

    def __eq__(self, other):
        return (
            isinstance(other, GenerationLayout)
            and (self.N, self.members, self.kind) == (other.N, other.members, other.kind)
            and np.allclose(self.rho, other.rho)
        )

    # plain-text fixture format:
    #   # kind=<kind> N=<N>
    #   <index> <member> <member> ...
    def dumps(self) -> str:
        lines = [f"# kind={self.kind} N={self.N}"]
        lines += [f"{j} " + " ".join(map(str, mem)) for j, mem in enumerate(self.members)]
        return "\n".join(lines) + "\n"

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "GenerationLayout":
        kind, N = "disjoint", None
        rows = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    key, _, val = tok.partition("=")
                    if key == "kind":
                        kind = val
                    elif key == "N":
                        N = int(val)
                continue
            idx, *mem = (int(t) for t in line.split())
            if idx != len(rows):
                raise LayoutError(f"generation index {idx} out of order")
            rows.append(tuple(mem))
        if N is None:
            N = 1 + max(max(r) for r in rows)
        return cls(N, tuple(rows), uniform_rho(len(rows)), kind)

    @classmethod
    def load(cls, path) -> "GenerationLayout":
        return cls.loads(Path(path).read_text())


@dataclass(frozen=True)
class AnnexParams:
    h: int
    l: int

    @property
    def g(self) -> int:
        return self.h + self.l

    def n(self, N: int) -> int:
        return -(-N // self.h)


def uniform_rho(n: int) -> tuple[float, ...]:
    return (1.0 / n,) * n


def _base_blocks(N: int, h: int) -> list[list[int]]:
    return [list(range(s, min(s + h, N))) for s in range(0, N, h)]


def build_disjoint(N: int, g: int) -> GenerationLayout:
    if N < 1 or g < 1:
        raise LayoutError("need N >= 1 and g >= 1")
    if g > N:
        raise LayoutError(f"generation size {g} exceeds N={N}")
    blocks = _base_blocks(N, g)
    return GenerationLayout(N, tuple(tuple(b) for b in blocks), uniform_rho(len(blocks)), "disjoint")


def build_random_annex(params: AnnexParams, N: int, seed) -> GenerationLayout:
    """Base blocks of ``h`` packets, each extended by ``l`` packets drawn
    uniformly without replacement from the packets outside the block."""
    h, l = params.h, params.l
    if h < 1 or h > N:
        raise LayoutError("need 1 <= h <= N")
    if l < 0 or l > N - h:
        raise LayoutError(f"annex size {l} exceeds N-h={N - h}")
    if l == 0:
        return build_disjoint(N, h)
    rng = np.random.default_rng(seed)
    members = []
    for base in _base_blocks(N, h):
        outside = np.concatenate([np.arange(0, base[0]), np.arange(base[-1] + 1, N)])
        # partial Fisher-Yates: the first l positions are a uniform l-subset
        for i in range(l):
            j = i + int(rng.integers(len(outside) - i))
            outside[i], outside[j] = outside[j], outside[i]
        members.append(tuple(sorted(base + outside[:l].tolist())))
    return GenerationLayout(N, tuple(members), uniform_rho(len(members)), "random_annex")


def build_head_to_toe(N: int, h: int, l: int) -> GenerationLayout:
    """Block ``i`` is extended by the first ``l`` packets of block ``i+1`` (end-around).

    When ``h`` does not divide ``N`` the last block is shorter and a block
    followed by it borrows at most its length.
    """
    if h < 1 or h > N:
        raise LayoutError("need 1 <= h <= N")
    if l < 0 or l > h:
        raise LayoutError(f"head-to-toe overlap {l} exceeds base size {h}")
    blocks = _base_blocks(N, h)
    n = len(blocks)
    if l == 0 or n == 1:
        return build_disjoint(N, h)
    members = []
    for i, base in enumerate(blocks):
        nxt = blocks[(i + 1) % n][:l]
        members.append(tuple(sorted(set(base) | set(nxt))))
    return GenerationLayout(N, tuple(members), uniform_rho(n), "head_to_toe")


def build_layout(scheme: str, N: int, h: int, l: int = 0, seed=None) -> GenerationLayout:
    if scheme == "disjoint":
        return build_disjoint(N, h + l)
    if scheme in ("annex", "random_annex"):
        return build_random_annex(AnnexParams(h, l), N, seed)
    if scheme == "head_to_toe":
        return build_head_to_toe(N, h, l)
    raise LayoutError(f"unknown scheme {scheme!r}")


# ---------------------------------------------------------------------------
# random-annex ensemble statistics


def _n_of(N, h):
    return -(-N // h)


def annex_pi(N: int, h: int, l: int) -> float:
    """Probability that a given packet outside ``B_r`` lands in annex ``R_r``."""
    if N <= h:
        raise LayoutError("need N > h")
    return l / (N - h)


def participation_stats(N: int, h: int, l: int) -> tuple[float, float]:
    """Mean and variance of the number of generations a packet belongs to (1 + Binom(n-1, pi))."""
    n = _n_of(N, h)
    pi = annex_pi(N, h, l)
    return 1.0 + (n - 1) * pi, (n - 1) * pi * (1.0 - pi)


def exclusive_shared_counts(N: int, h: int, l: int) -> tuple[float, float]:
    """Expected per-generation counts of packets in no other generation / in at least one other."""
    n = _n_of(N, h)
    keep = (1.0 - annex_pi(N, h, l)) ** (n - 1)
    return h * keep, l + h * (1.0 - keep)


def _log_multinomial(total, parts):
    return gammaln(total + 1) - sum(gammaln(p + 1) for p in parts)


def overlap_probability(N: int, h: int, l: int) -> float:
    """Probability that two given generations share at least one packet."""
    if N < 2 * h:
        raise LayoutError("need N >= 2h")
    if l == 0:
        return 0.0
    rest = N - 2 * h - 2 * l
    if rest < 0:
        return 1.0
    log_ratio = _log_multinomial(N - 2 * h, (l, l, rest)) - 2 * _log_multinomial(N - h, (l, N - h - l))
    return float(-math.expm1(log_ratio))


def omega(s: int, N: int, h: int, l: int) -> float:
    """Expected overlap between the union of ``s`` generations and one further generation."""
    n = _n_of(N, h)
    if not 0 <= s <= n - 1:
        raise LayoutError(f"s={s} outside [0, {n - 1}]")
    pi = annex_pi(N, h, l) if N > h else 0.0
    keep = (1.0 - pi) ** s
    return (h + l) * (1.0 - keep) + s * h * pi * keep


def omega_limit(beta: float, h: int, alpha: float) -> float:
    """n -> inf limit of omega with l/h -> alpha and s/n -> beta."""
    e = math.exp(-alpha * beta)
    return h * ((1.0 + alpha) * (1.0 - e) + alpha * beta * e)


def packet_overhead_bits(n: int, g: int, q: int) -> int:
    """Header bits: generation index plus ``g`` coding coefficients."""
    if n < 1 or g < 1:
        raise LayoutError("need n >= 1 and g >= 1")
    return (n - 1).bit_length() + g * (q - 1).bit_length()


def overlap_census(layout: GenerationLayout) -> tuple[np.ndarray, np.ndarray]:
    """Per-generation counts of exclusive packets and packets shared with another generation."""
    mult = np.zeros(layout.N, dtype=int)
    for mem in layout.members:
        mult[list(mem)] += 1
    excl = np.array([int((mult[list(m)] == 1).sum()) for m in layout.members])
    return excl, np.array(layout.sizes) - excl


def union_overlap(layout: GenerationLayout, first: Sequence[int], other: int) -> int:
    """|(union of generations ``first``) & G_other| for one realised layout."""
    union = set()
    for j in first:
        union.update(layout.members[j])
    return len(union & set(layout.members[other]))
