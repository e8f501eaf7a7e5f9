"""Arithmetic over GF(2^k) for k in {1, 2, 4, 8}.

Elements are plain integers in polynomial basis.  A :class:`FieldSpec` owns
the exp/log tables plus a full multiplication table, which the codec uses for
vectorised row operations on ``uint8`` arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

REDUCTION_POLYS = {1: 0b11, 2: 0x7, 4: 0x13, 8: 0x11B}


class FieldError(ValueError):
    """Raised for invalid field parameters or mixed-field operands."""


def _poly_deg(p: int) -> int:
    return p.bit_length() - 1


def _poly_mod(a: int, b: int) -> int:
    db = _poly_deg(b)
    while a and _poly_deg(a) >= db:
        a ^= b << (_poly_deg(a) - db)
    return a


def is_irreducible(poly: int) -> bool:
    """Trial division by every GF(2) polynomial of degree 1..deg/2."""
    k = _poly_deg(poly)
    if k < 1:
        return False
    for d in range(1, k // 2 + 1):
        for div in range(1 << d, 1 << (d + 1)):
            if _poly_mod(poly, div) == 0:
                return False
    return True


def clmul_mod(a: int, b: int, poly: int) -> int:
    """Carry-less multiply-and-reduce; slow reference used to build tables."""
    k = _poly_deg(poly)
    r = 0
    while b:
        if b & 1:
            r ^= a
        b >>= 1
        a <<= 1
        if a >> k & 1:
            a ^= poly
    return r


@dataclass(frozen=True, eq=False)
class FieldSpec:
    """GF(2^k) context.  Immutable once built."""

    k: int
    reduction_poly: int = 0
    q: int = field(init=False)
    exp: np.ndarray = field(init=False, repr=False)
    log: np.ndarray = field(init=False, repr=False)
    mul_table: np.ndarray = field(init=False, repr=False)
    inv_table: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.k not in REDUCTION_POLYS:
            raise FieldError(f"unsupported extension degree k={self.k}; use 1, 2, 4 or 8")
        poly = self.reduction_poly or REDUCTION_POLYS[self.k]
        if _poly_deg(poly) != self.k or not is_irreducible(poly):
            raise FieldError(f"0x{poly:X} is not an irreducible polynomial of degree {self.k}")
        q = 1 << self.k
        object.__setattr__(self, "reduction_poly", poly)
        object.__setattr__(self, "q", q)

        # smallest primitive element; x itself is not primitive modulo 0x11B
        for gen in range(2 if q > 2 else 1, q):
            exp = [1]
            for _ in range(q - 2):
                exp.append(clmul_mod(exp[-1], gen, poly))
            if len(set(exp)) == q - 1:
                break
        exp_arr = np.array(exp + exp, dtype=np.int64)  # doubled to skip a modulo
        log_arr = np.zeros(q, dtype=np.int64)
        log_arr[exp_arr[: q - 1]] = np.arange(q - 1)

        a = np.arange(q)
        mul = np.zeros((q, q), dtype=np.uint8)
        nz = a[1:]
        mul[1:, 1:] = exp_arr[log_arr[nz][:, None] + log_arr[nz][None, :]]
        inv = np.zeros(q, dtype=np.uint8)
        inv[1:] = exp_arr[(q - 1 - log_arr[nz]) % (q - 1)]
        for arr in (exp_arr, log_arr, mul, inv):
            arr.setflags(write=False)
        object.__setattr__(self, "exp", exp_arr)
        object.__setattr__(self, "log", log_arr)
        object.__setattr__(self, "mul_table", mul)
        object.__setattr__(self, "inv_table", inv)

    @classmethod
    def from_q(cls, q: int) -> "FieldSpec":
        k = q.bit_length() - 1
        if q < 2 or 1 << k != q:
            raise FieldError(f"field size {q} is not a power of two")
        return _field_cache(k)

    def __eq__(self, other):
        return isinstance(other, FieldSpec) and (self.k, self.reduction_poly) == (
            other.k,
            other.reduction_poly,
        )

    def __hash__(self):
        return hash((self.k, self.reduction_poly))

    def __call__(self, value: int) -> "FieldElem":
        return FieldElem(self, value)

    # raw-integer helpers
    def add(self, a: int, b: int) -> int:
        return a ^ b

    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        return int(self.exp[self.log[a] + self.log[b]])

    def inv(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("zero has no multiplicative inverse")
        return int(self.inv_table[a])

    def random_vector(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.integers(0, self.q, size=size, dtype=np.uint8)


_FIELDS: dict[int, FieldSpec] = {}


def _field_cache(k: int) -> FieldSpec:
    if k not in _FIELDS:
        _FIELDS[k] = FieldSpec(k)
    return _FIELDS[k]


@dataclass(frozen=True)
class FieldElem:
    field: FieldSpec
    value: int

    def __post_init__(self):
        if not 0 <= self.value < self.field.q:
            raise FieldError(f"{self.value} is not an element of GF({self.field.q})")

    def _check(self, other: "FieldElem"):
        if not isinstance(other, FieldElem) or other.field != self.field:
            raise FieldError("operands belong to different fields")

    def __add__(self, other):
        return fe_add(self, other)

    __sub__ = __add__

    def __mul__(self, other):
        return fe_mul(self, other)

    def __truediv__(self, other):
        return fe_mul(self, fe_inv(other))

    def inverse(self):
        return fe_inv(self)

    def __int__(self):
        return self.value


def fe_add(a: FieldElem, b: FieldElem) -> FieldElem:
    a._check(b)
    return FieldElem(a.field, a.value ^ b.value)


def fe_mul(a: FieldElem, b: FieldElem) -> FieldElem:
    a._check(b)
    return FieldElem(a.field, a.field.mul(a.value, b.value))


def fe_inv(a: FieldElem) -> FieldElem:
    return FieldElem(a.field, a.field.inv(a.value))
