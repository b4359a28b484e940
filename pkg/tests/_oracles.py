"""Reference computations that share no code with the package."""
import numpy as np


def numeric_grad(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of the scalar function f() w.r.t. array x (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + eps
        fp = f()
        x[idx] = old - eps
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * eps)
    return g


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-3) -> float:
    """max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def check_grads(loss_fn, params: dict, eps: float = 1e-5, floor: float = 1e-3) -> dict:
    """Relative error per parameter; ``loss_fn`` builds a fresh scalar Tensor each call."""
    for p in params.values():
        p.grad = None
    loss_fn().backward()
    out = {}
    for name, p in params.items():
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        numeric = numeric_grad(lambda: float(loss_fn().data), p.data, eps)
        out[name] = rel_error(analytic, numeric, floor)
    return out


def naive_matmul(a, b):
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def brute_candidates(probs, conf=None, constrained=True):
    """Every candidate (score, s, o, p) written out by hand; no ranking helpers."""
    m, n, _ = probs.shape
    cands = []
    for s in range(n):
        for o in range(n):
            if s == o:
                continue
            w = 1.0 if conf is None else conf[s] * conf[o]
            if constrained:
                # the pair's most probable predicate, first one on ties
                best = 1
                for p in range(2, m):
                    if probs[p, s, o] > probs[best, s, o]:
                        best = p
                cands.append((probs[best, s, o] * w, s, o, best))
            else:
                cands.extend((probs[p, s, o] * w, s, o, p) for p in range(1, m))
    return cands


def brute_recall(probs, gt, k, conf=None, constrained=True, pred_labels=None, gt_labels=None):
    """Exhaustive recall: rank by (-score, s, o, p), intersect the top-K set with GT."""
    if not gt:
        return 1.0
    cands = sorted(brute_candidates(probs, conf, constrained), key=lambda c: (-c[0], c[1], c[2], c[3]))
    top = {(s, o, p) for _, s, o, p in cands[:k]}
    hit = 0
    for s, o, p in gt:
        if (s, o, p) not in top:
            continue
        if pred_labels is not None and (pred_labels[s] != gt_labels[s] or pred_labels[o] != gt_labels[o]):
            continue
        hit += 1
    return hit / len(gt)
