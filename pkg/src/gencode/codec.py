"""Rateless generation-based encoder, erasure channel and fixpoint decoder.

Each coded packet carries a generation index and a uniform random coding
vector over that generation's members (the all-zero vector is not excluded).
The decoder keeps one reduced-echelon matrix per generation.  Whenever a
generation's rank reaches its number of unresolved members it is solved, its
packets are marked resolved and every overlapping generation drops those
columns, which may in turn make it solvable.

Two modes are supported: ``rank_only`` tracks coefficients alone (enough for
latency statistics) and ``payload`` also carries ``d``-symbol payloads so the
decoded data can be compared with the source.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .gf import FieldSpec
from .layout import GenerationLayout

MODES = ("rank_only", "payload")
SAFETY_CAP = 1_000_000
_BLOCK = 1024


class DecodeError(AssertionError):
    """The decoder reached an inconsistent linear system."""


class SafetyCapExceeded(RuntimeError):
    pass


@dataclass
class CodedPacket:
    gen_index: int
    coeffs: np.ndarray  # uint8, length g_j
    payload: np.ndarray | None = None  # uint8, length d


@dataclass
class Progress:
    innovative: bool
    decoded: list[int]
    complete: bool


@dataclass
class TrialRecord:
    latency: int
    received: int
    per_generation_counts: np.ndarray


def channel_pass(eps: float, rng: np.random.Generator) -> bool:
    """One BEC transmission: True when the packet is delivered."""
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"erasure probability must lie in [0, 1), got {eps}")
    return bool(rng.random() >= eps)


def _sample_generations(layout: GenerationLayout, rng, size):
    rho = np.asarray(layout.rho)
    if np.allclose(rho, rho[0]):
        return rng.integers(0, layout.n, size=size)
    return rng.choice(layout.n, size=size, p=rho)


def _encode_payload(field: FieldSpec, coeffs, src):
    # sum_i e_i * p_i over GF(2^k): table lookup then xor-reduce
    prod = field.mul_table[coeffs[:, None], src]
    return np.bitwise_xor.reduce(prod, axis=0)


def encode_next(layout: GenerationLayout, field: FieldSpec, rng: np.random.Generator, source=None) -> CodedPacket:
    """Draw a generation according to ``layout.rho`` and a uniform coding vector for it.

    ``source`` is an ``(N, d)`` uint8 array; when given the payload is computed.
    """
    j = int(_sample_generations(layout, rng, None))
    mem = layout.members[j]
    coeffs = field.random_vector(rng, len(mem))
    payload = None
    if source is not None:
        payload = _encode_payload(field, coeffs, np.asarray(source, dtype=np.uint8)[list(mem)])
    return CodedPacket(j, coeffs, payload)


class DecoderState:
    """Incremental decoder for one layout.  Single owner; not thread safe."""

    def __init__(self, layout: GenerationLayout, field: FieldSpec, d: int = 0):
        self.layout = layout
        self.field = field
        self.d = d
        self._mul = np.ascontiguousarray(field.mul_table)
        self._inv = np.ascontiguousarray(field.inv_table)
        self.members = [np.array(m, dtype=np.int64) for m in layout.members]
        self.gens_of = layout.packet_generations()
        self.resolved_mask = np.zeros(layout.N, dtype=np.bool_)
        self.values = np.zeros((layout.N, d), dtype=np.uint8)
        self.mats = [np.zeros((len(m), len(m) + d), dtype=np.uint8) for m in self.members]
        self.pivots = [np.zeros(len(m), dtype=np.int64) for m in self.members]
        self.rank = np.zeros(layout.n, dtype=np.int64)
        self.unresolved = np.array(layout.sizes, dtype=np.int64)
        self.done = np.zeros(layout.n, dtype=np.bool_)
        self.worklist: deque[int] = deque()
        self.packets_seen = 0
        self.n_resolved = 0
        # hook for order-independence tests: called on the worklist before each pop
        self.reorder = None

    @property
    def resolved(self) -> set[int]:
        return set(np.flatnonzero(self.resolved_mask).tolist())

    @property
    def complete(self) -> bool:
        return self.n_resolved == self.layout.N

    def stored_rows(self, j: int) -> np.ndarray:
        return self.mats[j][: self.rank[j]]

    def ingest(self, pkt: CodedPacket) -> Progress:
        self.packets_seen += 1
        j = pkt.gen_index
        if self.done[j]:
            return Progress(False, [], self.complete)
        g = len(self.members[j])
        row = np.empty(g + self.d, dtype=np.uint8)
        row[:g] = pkt.coeffs
        if self.d:
            row[g:] = pkt.payload
        _kernels.substitute_known(row, self.members[j], self.resolved_mask, self.values, g, self._mul)
        r = _kernels.reduce_insert(self.mats[j], self.rank[j], self.pivots[j], row, g, self._mul, self._inv)
        if r == _kernels.INCONSISTENT:
            raise DecodeError(f"inconsistent equation in generation {j}")
        if r == self.rank[j]:
            return Progress(False, [], self.complete)
        self.rank[j] = r
        decoded = []
        if r == self.unresolved[j]:
            self.worklist.append(j)
            decoded = self._fixpoint()
        return Progress(True, decoded, self.complete)

    def _fixpoint(self) -> list[int]:
        decoded = []
        while self.worklist:
            if self.reorder is not None:
                self.reorder(self.worklist)
            j = self.worklist.popleft()
            if self.done[j] or self.rank[j] != self.unresolved[j]:
                continue
            newly = self._solve(j)
            decoded.append(j)
            affected = set()
            for p in newly:
                for k in self.gens_of[p]:
                    self.unresolved[k] -= 1
                    if not self.done[k]:
                        affected.add(k)
            for k in sorted(affected):
                g = len(self.members[k])
                r = _kernels.drop_resolved(
                    self.mats[k], self.rank[k], self.pivots[k], self.members[k],
                    self.resolved_mask, self.values, g, self._mul, self._inv,
                )
                if r == _kernels.INCONSISTENT:
                    raise DecodeError(f"inconsistent system in generation {k}")
                self.rank[k] = r
                if r == self.unresolved[k]:
                    self.worklist.append(k)
        return decoded

    def _solve(self, j: int) -> list[int]:
        # in RREF with rank == #unresolved every stored row is a unit vector
        g = len(self.members[j])
        mat, piv = self.mats[j], self.pivots[j]
        newly = []
        for r in range(self.rank[j]):
            p = int(self.members[j][piv[r]])
            if not self.resolved_mask[p]:
                self.resolved_mask[p] = True
                if self.d:
                    self.values[p] = mat[r, g:]
                newly.append(p)
        self.n_resolved += len(newly)
        self.done[j] = True
        self.rank[j] = 0  # no unknowns left in a solved generation
        return newly


def decoder_ingest(state: DecoderState, pkt: CodedPacket) -> Progress:
    return state.ingest(pkt)


def trial_rng(seed, trial_index: int) -> np.random.Generator:
    """Independent stream for one trial, derived from (master seed, trial index)."""
    return np.random.default_rng([int(seed), int(trial_index)])


def run_trial(
    layout: GenerationLayout,
    q: int,
    eps: float = 0.0,
    mode: str = "rank_only",
    seed=0,
    trial_index: int = 0,
    d: int = 16,
    source=None,
    cap: int = SAFETY_CAP,
    return_state: bool = False,
):
    """Transmit coded packets until every source packet is decoded.

    In payload mode ``source`` defaults to random data drawn from the trial
    stream; the decoded values are then available via ``return_state``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"erasure probability must lie in [0, 1), got {eps}")
    field = FieldSpec.from_q(q)
    rng = trial_rng(seed, trial_index)
    payload = mode == "payload"
    if payload:
        if source is None:
            source = field.random_vector(rng, (layout.N, d))
        source = np.asarray(source, dtype=np.uint8)
        d = source.shape[1]
    state = DecoderState(layout, field, d if payload else 0)
    sizes = np.array(layout.sizes)
    gmax = int(sizes.max())
    counts = np.zeros(layout.n, dtype=np.int64)
    sent = 0
    while sent < cap:
        gens = _sample_generations(layout, rng, _BLOCK)
        coeffs = field.random_vector(rng, (_BLOCK, gmax))
        delivered = rng.random(_BLOCK) >= eps if eps > 0 else np.ones(_BLOCK, dtype=bool)
        for t in range(_BLOCK):
            sent += 1
            if not delivered[t]:
                continue
            j = int(gens[t])
            counts[j] += 1
            if state.done[j]:
                state.packets_seen += 1
                continue
            e = coeffs[t, : sizes[j]]
            pl = _encode_payload(field, e, source[layout.members[j], :]) if payload else None
            if state.ingest(CodedPacket(j, e, pl)).complete:
                rec = TrialRecord(sent, int(state.packets_seen), counts)
                return (rec, state) if return_state else rec
            if sent >= cap:
                break
    raise SafetyCapExceeded(
        f"no decoding success after {cap} transmissions "
        f"(resolved {state.n_resolved}/{layout.N}, N={layout.N}, n={layout.n}, q={q}, eps={eps})"
    )


def simulate_latencies(layout, q, eps=0.0, trials=1000, seed=0, mode="rank_only") -> np.ndarray:
    """Latencies of ``trials`` independent runs of :func:`run_trial`."""
    return np.array([run_trial(layout, q, eps, mode, seed, i).latency for i in range(trials)], dtype=np.int64)


def fast_disjoint_latencies(sizes, q, eps=0.0, trials=1000, seed=0, rho=None) -> np.ndarray:
    """Latency samples for disjoint generations without building matrices.

    For disjoint generations the decoder finishes exactly when every
    generation has collected a spanning set, and the number of coded packets
    a size-g generation needs has the law of the rank process (a new uniform
    vector is innovative with probability 1 - q^(rank-g)).  Sampling that law
    directly gives the same latency distribution as :func:`run_trial` at a
    fraction of the cost, which matters for 10^5-trial failure curves.
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    n = len(sizes)
    rho = np.full(n, 1.0 / n) if rho is None else np.asarray(rho, dtype=float)
    cdf = np.cumsum(rho)
    cdf[-1] = 1.0
    uniform = bool(np.all(rho == rho[0]))
    return _kernels.disjoint_latencies(
        sizes, cdf, int(q), float(eps), int(trials), int(seed) & 0xFFFFFFFF, uniform
    )


def rank_tail_mc(g: int, q: int, s: int, trials: int, seed=0) -> float:
    """Fraction of trials in which ``s`` uniform vectors of GF(q)^g fail to span."""
    if s < g:
        raise ValueError("need s >= g")
    return float(rank_tail_curve(g, q, s, trials, seed)[s])


def rank_tail_curve(g: int, q: int, s_max: int, trials: int, seed=0) -> np.ndarray:
    """Empirical Prob[rank < g] after s vectors for s = 0..s_max (one pass per trial)."""
    field = FieldSpec.from_q(q)
    counts = _kernels.rank_prefix_counts(
        int(g), int(q), int(s_max), int(trials), int(seed) & 0xFFFFFFFF,
        np.ascontiguousarray(field.mul_table), np.ascontiguousarray(field.inv_table),
    )
    out = counts / float(trials)
    out[0] = 1.0
    return out
