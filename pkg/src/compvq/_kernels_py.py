"""Pure numpy implementations of the compiled kernels.

Arithmetic is ordered exactly as in ``_kernels.pyx`` so that the two
backends agree bit for bit.
"""

import numpy as np


def greedy_encode(xc, cross, cnorm, codes, m, h, start, nthreads=1):
    n = xc.shape[0]
    if n == 0 or start >= m:
        return
    for i in range(start, m):
        acc = xc[:, i * h:(i + 1) * h].copy()
        for p in range(i):
            acc -= cross[p * h + codes[:, p].astype(np.intp), i * h:(i + 1) * h]
        val = cnorm[i * h:(i + 1) * h] - 2.0 * acc
        codes[:, i] = np.argmin(val, axis=1)


def _beam_row(xcj, xnorm, cross, cnorm, m, h, b):
    cur_codes = np.full((1, m), -1, dtype=np.int16)
    cur_scores = np.array([xnorm])
    for _ in range(m):
        child_codes = []
        child_scores = []
        for pc, ps in zip(cur_codes, cur_scores):
            used = np.flatnonzero(pc >= 0)
            for i in np.flatnonzero(pc < 0):
                acc = xcj[i * h:(i + 1) * h].copy()
                for p in used:
                    acc -= cross[p * h + pc[p], i * h:(i + 1) * h]
                child_scores.append(ps + (cnorm[i * h:(i + 1) * h] - 2.0 * acc))
                block = np.repeat(pc[None, :], h, axis=0)
                block[:, i] = np.arange(h)
                child_codes.append(block)
        codes = np.concatenate(child_codes)
        scores = np.concatenate(child_scores)
        order = np.lexsort(tuple(codes[:, p] for p in range(m - 1, -1, -1)) + (scores,))
        keep = []
        seen = set()
        for r in order:
            key = codes[r].tobytes()
            if key in seen:
                continue
            seen.add(key)
            keep.append(r)
            if len(keep) == b:
                break
        cur_codes = codes[keep]
        cur_scores = scores[keep]
    return cur_codes[0], cur_scores[0]


def beam_encode(xc, xnorm, cross, cnorm, codes, scores, m, h, b, nthreads=1):
    for j in range(xc.shape[0]):
        code, score = _beam_row(xc[j], xnorm[j], cross, cnorm, m, h, b)
        codes[j] = code
        scores[j] = score


def adc_scan(tables, codes, norms=None):
    n, m = codes.shape
    out = np.zeros(n, dtype=np.float64)
    for i in range(m):
        out += tables[i][codes[:, i]]
    if norms is not None:
        out += norms
    return out
