"""Pure-Python hot kernels (fallback for the compiled ``_ckernels`` module).

Both modules expose the same functions and must agree bit for bit. The PRF is
SplitMix64's output function folded over token ids:

    prefix_hash(tokens) = fold(h -> mix(h ^ t), tokens, start=0)
    prf(key, tag, h)    = mix(mix(h ^ key) ^ tag),   key = mix(seed)

Tags are ``(kind << 32) | index`` so draws for different purposes never share
a stream.
"""

MASK = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
_INV53 = 1.0 / 9007199254740992.0


def mix(z):
    z = (z + GOLDEN) & MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def fold(h, tokens):
    for t in tokens:
        z = ((h ^ t) + GOLDEN) & MASK
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        h = z ^ (z >> 31)
    return h


def prf(key, tag, h):
    return mix(mix(h ^ key) ^ tag)


def unit(x):
    return (x >> 11) * _INV53


def pick(key, h, vocab, coin_tag, alt_tag, final_tag, prob):
    """Argmax token at context hash ``h`` for a model agreeing w.p. ``prob``."""
    final = prf(key, final_tag, h) % vocab
    if prob >= 1.0 or ((prf(key, coin_tag, h) >> 11) * _INV53) < prob:
        return final
    return (final + 1 + prf(key, alt_tag, h) % (vocab - 1)) % vocab


def greedy_draft(key, h, vocab, coin_tag, alt_tag, final_tag, prob, gamma):
    out = []
    for _ in range(gamma):
        t = pick(key, h, vocab, coin_tag, alt_tag, final_tag, prob)
        out.append(t)
        h = fold(h, (t,))
    return out


def greedy_scan(key, h, vocab, coin_tag, alt_tag, final_tag, prob, draft):
    """Left-to-right greedy check; returns (accepted, output tokens)."""
    out = []
    for d in draft:
        t = pick(key, h, vocab, coin_tag, alt_tag, final_tag, prob)
        out.append(t)
        if t != d:
            return len(out) - 1, out
        h = fold(h, (d,))
    out.append(pick(key, h, vocab, coin_tag, alt_tag, final_tag, prob))
    return len(draft), out


def greedy_rollout(key, h, vocab, final_tag, n):
    """n tokens of plain greedy decoding at the final exit."""
    out = []
    for _ in range(n):
        t = prf(key, final_tag, h) % vocab
        out.append(t)
        h = fold(h, (t,))
    return out
