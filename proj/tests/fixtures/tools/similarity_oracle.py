#!/usr/bin/env python3
"""Reference cosine / normalised Levenshtein over assembly token streams.

Usage: similarity_oracle.py a.s b.s
Prints "cosine=<x> levenshtein=<y>" with six decimals.
"""

import math
import re
import sys
from collections import Counter

OBJDUMP_LINE = re.compile(r"^\s*[0-9a-fA-F]+:\t")


def tokens(text):
    out = []
    for line in text.splitlines():
        if OBJDUMP_LINE.match(line):
            fields = line.split("\t")
            if len(fields) < 3:
                continue
            line = "\t".join(fields[2:])
        line = re.split(r"#|;|//", line, maxsplit=1)[0].strip()
        while True:
            m = re.match(r"^(\S+:)(\s+|$)", line)
            if not m:
                break
            line = line[m.end():]
        if line.endswith(":") and "<" in line:
            continue
        if not line or line.startswith("."):
            continue
        out.extend(t for t in re.split(r"[ \t,]+", line) if t)
    return out


def cosine(a, b):
    ca, cb = Counter(a), Counter(b)
    dot = sum(ca[k] * cb[k] for k in ca)
    return dot / (math.sqrt(sum(v * v for v in ca.values())) * math.sqrt(sum(v * v for v in cb.values())))


def levenshtein(a, b):
    d = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        d[i][0] = i
    for j in range(len(b) + 1):
        d[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1]))
    return 1 - d[len(a)][len(b)] / max(len(a), len(b))


if __name__ == "__main__":
    a = tokens(open(sys.argv[1]).read())
    b = tokens(open(sys.argv[2]).read())
    print("cosine=%.6f levenshtein=%.6f tokens=%d,%d" % (cosine(a, b), levenshtein(a, b), len(a), len(b)))
