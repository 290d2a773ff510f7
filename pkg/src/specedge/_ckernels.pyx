# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; mirrors ``_kernels_py`` exactly."""

from libc.stdint cimport uint64_t

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix(uint64_t z) nogil:
    z = z + GOLDEN
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t _prf(uint64_t key, uint64_t tag, uint64_t h) nogil:
    return _mix(_mix(h ^ key) ^ tag)


cdef inline uint64_t _pick(uint64_t key, uint64_t h, uint64_t vocab,
                           uint64_t coin_tag, uint64_t alt_tag,
                           uint64_t final_tag, double prob) nogil:
    cdef uint64_t final = _prf(key, final_tag, h) % vocab
    if prob >= 1.0 or <double>(_prf(key, coin_tag, h) >> 11) * INV53 < prob:
        return final
    return (final + 1 + _prf(key, alt_tag, h) % (vocab - 1)) % vocab


def mix(uint64_t z):
    return _mix(z)


def fold(uint64_t h, tokens):
    cdef uint64_t t
    for t in tokens:
        h = _mix(h ^ t)
    return h


def prf(uint64_t key, uint64_t tag, uint64_t h):
    return _prf(key, tag, h)


def unit(uint64_t x):
    return <double>(x >> 11) * INV53


def pick(uint64_t key, uint64_t h, uint64_t vocab, uint64_t coin_tag,
         uint64_t alt_tag, uint64_t final_tag, double prob):
    return _pick(key, h, vocab, coin_tag, alt_tag, final_tag, prob)


def greedy_draft(uint64_t key, uint64_t h, uint64_t vocab, uint64_t coin_tag,
                 uint64_t alt_tag, uint64_t final_tag, double prob, int gamma):
    cdef list out = []
    cdef uint64_t t
    cdef int i
    for i in range(gamma):
        t = _pick(key, h, vocab, coin_tag, alt_tag, final_tag, prob)
        out.append(t)
        h = _mix(h ^ t)
    return out


def greedy_scan(uint64_t key, uint64_t h, uint64_t vocab, uint64_t coin_tag,
                uint64_t alt_tag, uint64_t final_tag, double prob, draft):
    cdef list out = []
    cdef uint64_t t, d
    cdef Py_ssize_t n = 0
    for d in draft:
        t = _pick(key, h, vocab, coin_tag, alt_tag, final_tag, prob)
        out.append(t)
        if t != d:
            return n, out
        n += 1
        h = _mix(h ^ d)
    out.append(_pick(key, h, vocab, coin_tag, alt_tag, final_tag, prob))
    return n, out


def greedy_rollout(uint64_t key, uint64_t h, uint64_t vocab,
                   uint64_t final_tag, Py_ssize_t n):
    cdef list out = []
    cdef uint64_t t
    cdef Py_ssize_t i
    for i in range(n):
        t = _prf(key, final_tag, h) % vocab
        out.append(t)
        h = _mix(h ^ t)
    return out
