"""Skip-gram with negative sampling over a walk corpus.

Walks play the role of sentences and vertex indices the role of words.
Every (center, context) pair within ``w`` positions is trained against
``negatives`` noise vertices drawn from the corpus unigram distribution
raised to the 3/4 power. The learning rate decays linearly from
``initial_learning_rate`` to 1e-4 of it over all pairs of all epochs.

The training kernel runs in float32 with word2vec's tabulated sigmoid
(saturating beyond |x| = 6); ``sgns_pair_loss`` is the exact float64
reference objective.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numba as nb
import numpy as np

from ._rng import derive, uniform
from .walker import WalkCorpus

log = logging.getLogger(__name__)

_MAGIC = b"HRECEMB\x00"
_VERSION = 1
_HEADER = struct.Struct("<8sIQQ16s")

MAX_EXP = 6.0
_TABLE_SIZE = 1000
_MIN_LR_FRACTION = 1e-4
_PAD = 16


class EmbeddingError(ValueError):
    pass


class EmbeddingFormatError(EmbeddingError):
    """Malformed or truncated embedding file."""


class FingerprintMismatch(EmbeddingError):
    pass


@dataclass(frozen=True)
class EmbeddingConfig:
    s: int = 50
    w: int = 5
    negatives: int = 5
    epochs: int = 5
    initial_learning_rate: float = 0.025
    seed: int = 0
    subsample: float | None = None
    workers: int = 1

    def __post_init__(self):
        if self.s < 1:
            raise EmbeddingError(f"dimension s must be >= 1, got {self.s}")
        if self.w < 1:
            raise EmbeddingError(f"window w must be >= 1, got {self.w}")
        if self.negatives < 1:
            raise EmbeddingError(f"negatives must be >= 1, got {self.negatives}")
        if self.epochs < 1:
            raise EmbeddingError(f"epochs must be >= 1, got {self.epochs}")
        if not self.initial_learning_rate > 0:
            raise EmbeddingError("initial_learning_rate must be positive")
        if self.workers < 1:
            raise EmbeddingError("workers must be >= 1")


@dataclass
class EmbeddingTable:
    vectors: np.ndarray
    fingerprint: str = ""
    context: np.ndarray | None = None
    loss_history: list[float] = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, int]:
        return self.vectors.shape

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def __getitem__(self, index) -> np.ndarray:
        return self.vectors[index]


# ---------------------------------------------------------------------------
# reference objective
# ---------------------------------------------------------------------------


def log_sigmoid(x):
    """``log(1 / (1 + exp(-x)))`` without overflow."""
    x = np.asarray(x, dtype=np.float64)
    return -np.logaddexp(0.0, -x)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(log_sigmoid(x))


def sgns_pair_loss(center_vec, context_vec, negative_vecs=()):
    """Negative-sampling loss of one (center, context) pair and its gradients.

    ``loss = -log s(u.v) - sum_k log s(-u.n_k)``

    Returns ``(loss, grad_center, grad_context, grad_negatives)`` where
    ``grad_negatives`` has one row per negative.
    """
    u = np.asarray(center_vec, dtype=np.float64)
    v = np.asarray(context_vec, dtype=np.float64)
    negs = np.asarray(negative_vecs, dtype=np.float64).reshape(-1, u.shape[0])
    pos = u @ v
    neg = negs @ u
    loss = float(-log_sigmoid(pos) - log_sigmoid(-neg).sum())
    # d/dx -log s(x) = s(x) - 1 ; d/dx -log s(-x) = s(x)
    g_pos = sigmoid(pos) - 1.0
    g_neg = sigmoid(neg)
    grad_u = g_pos * v + g_neg @ negs
    grad_v = g_pos * u
    grad_negs = np.outer(g_neg, u)
    return loss, grad_u, grad_v, grad_negs


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------


def _tables():
    """Sigmoid and the two per-label losses tabulated on [-MAX_EXP, MAX_EXP]."""
    x = (np.arange(_TABLE_SIZE + 1) / _TABLE_SIZE * 2.0 - 1.0) * MAX_EXP
    return sigmoid(x), -log_sigmoid(x), -log_sigmoid(-x)


def alias_table(weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vose alias table: returns ``(prob, alias)`` for O(1) weighted draws."""
    w = np.asarray(weights, dtype=np.float64)
    n = len(w)
    scaled = w * n / w.sum()
    prob = np.zeros(n)
    alias = np.arange(n, dtype=np.int64)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        lo, hi = small.pop(), large.pop()
        prob[lo] = scaled[lo]
        alias[lo] = hi
        scaled[hi] = scaled[hi] + scaled[lo] - 1.0
        (small if scaled[hi] < 1.0 else large).append(hi)
    for i in large + small:
        prob[i] = 1.0
    return prob, alias


def _aligned_zeros(rows: int, cols: int) -> np.ndarray:
    """float32 matrix whose rows start on 64-byte boundaries."""
    buf = np.zeros(rows * cols + 16, dtype=np.float32)
    offset = (-buf.ctypes.data % 64) // 4
    return buf[offset:offset + rows * cols].reshape(rows, cols)


@nb.njit(cache=True, fastmath=True, error_model="numpy")
def _sgd_pair(syn0, syn1, c, targets, n_t, lr, sig, loss_pos, loss_neg, grad, neu):
    """Simultaneous SGD step for center ``c`` against ``targets[:n_t]``.

    ``targets[0]`` is the observed context, the rest are negatives. All
    scores are taken before any row moves. Returns the tabulated loss.
    """
    s = syn0.shape[1]
    loss = 0.0
    for d in range(n_t):
        t = targets[d]
        dot = np.float32(0.0)
        for q in range(s):
            dot += syn0[c, q] * syn1[t, q]
        idx = np.int64((float(dot) + MAX_EXP) * (_TABLE_SIZE / (2.0 * MAX_EXP)))
        idx = min(max(idx, 0), _TABLE_SIZE)
        if d == 0:
            grad[d] = np.float32((1.0 - sig[idx]) * lr)
            loss += loss_pos[idx]
        else:
            grad[d] = np.float32(-sig[idx] * lr)
            loss += loss_neg[idx]
    for q in range(s):
        neu[q] = 0.0
    for d in range(n_t):
        t = targets[d]
        g = grad[d]
        for q in range(s):
            neu[q] += g * syn1[t, q]
        for q in range(s):
            syn1[t, q] += g * syn0[c, q]
    for q in range(s):
        syn0[c, q] += neu[q]
    return loss


def _epoch_impl(tokens, ptr, pair_offset, total_pairs, epoch, w, n_neg, lr0, seed,
                prob, alias, sig, loss_pos, loss_neg, syn0, syn1, walk_loss):
    n_walks = ptr.shape[0] - 1
    n_vocab = prob.shape[0]
    epoch_start = epoch * pair_offset[n_walks]
    for a in nb.prange(n_walks):
        state = np.empty(1, dtype=np.uint64)
        state[0] = derive(seed, epoch, a)
        targets = np.zeros(n_neg + 1, dtype=np.int64)
        grad = np.zeros(n_neg + 1, dtype=np.float32)
        neu = np.zeros(syn0.shape[1], dtype=np.float32)
        lo = ptr[a]
        hi = ptr[a + 1]
        done = pair_offset[a]
        loss = 0.0
        for i in range(lo, hi):
            c = tokens[i]
            # learning rate is refreshed once per center position
            frac = (epoch_start + done) / total_pairs
            lr = lr0 * max(_MIN_LR_FRACTION, 1.0 - (1.0 - _MIN_LR_FRACTION) * frac)
            for j in range(max(lo, i - w), min(hi, i + w + 1)):
                if j == i:
                    continue
                o = tokens[j]
                targets[0] = o
                n_t = 1
                for d in range(n_neg):
                    x = uniform(state) * n_vocab
                    k = min(np.int64(x), n_vocab - 1)
                    t = k if (x - k) < prob[k] else alias[k]
                    # a draw equal to the observed context is dropped
                    if t != o:
                        targets[n_t] = t
                        n_t += 1
                loss += _sgd_pair(syn0, syn1, c, targets, n_t, lr, sig, loss_pos, loss_neg, grad, neu)
                done += 1
        walk_loss[a] = loss


_epoch_serial = nb.njit(cache=True, fastmath=True, error_model="numpy")(_epoch_impl)
_epoch_parallel = nb.njit(parallel=True, fastmath=True, error_model="numpy")(_epoch_impl)


def _pairs_per_walk(lengths: np.ndarray, w: int) -> np.ndarray:
    out = np.zeros(len(lengths), dtype=np.int64)
    for n in np.unique(lengths):
        i = np.arange(n)
        out[lengths == n] = int((np.minimum(w, i) + np.minimum(w, n - 1 - i)).sum())
    return out


def _ragged(corpus: WalkCorpus | Sequence[Sequence[int]]):
    walks = corpus.walks if isinstance(corpus, WalkCorpus) else corpus
    if isinstance(walks, np.ndarray) and walks.ndim == 2:
        tokens = np.ascontiguousarray(walks, dtype=np.int64).ravel()
        ptr = np.arange(walks.shape[0] + 1, dtype=np.int64) * walks.shape[1]
        return tokens, ptr
    lengths = [len(x) for x in walks]
    ptr = np.zeros(len(lengths) + 1, dtype=np.int64)
    np.cumsum(lengths, out=ptr[1:])
    tokens = np.array([t for x in walks for t in x], dtype=np.int64)
    return tokens, ptr


def _subsample(tokens, ptr, threshold, rng):
    freq = np.bincount(tokens) / len(tokens)
    f = freq[tokens]
    keep_p = np.minimum(1.0, (np.sqrt(f / threshold) + 1.0) * threshold / f)
    keep = rng.random(len(tokens)) < keep_p
    new_ptr = np.zeros_like(ptr)
    np.cumsum([keep[ptr[i]:ptr[i + 1]].sum() for i in range(len(ptr) - 1)], out=new_ptr[1:])
    return tokens[keep], new_ptr


def train_skipgram(corpus: WalkCorpus | Sequence[Sequence[int]], config: EmbeddingConfig = EmbeddingConfig(),
                   n_vertices: int | None = None) -> EmbeddingTable:
    """Train input/context vectors; ``loss_history`` holds the mean pair loss per epoch.

    With ``config.workers == 1`` the result is bit-for-bit reproducible.
    More workers update the shared matrices without locks (Hogwild), which
    trades determinism for throughput.
    """
    tokens, ptr = _ragged(corpus)
    if len(tokens) == 0:
        raise EmbeddingError("empty walk corpus")
    if tokens.min() < 0:
        raise EmbeddingError("negative vertex index in corpus")
    if n_vertices is None:
        n_vertices = int(tokens.max()) + 1
    if tokens.max() >= n_vertices:
        raise EmbeddingError(f"corpus references vertex {tokens.max()} but only {n_vertices} exist")
    rng = np.random.default_rng(config.seed)
    if config.subsample:
        tokens, ptr = _subsample(tokens, ptr, config.subsample, rng)

    s = config.s
    # rows padded to a multiple of 16 floats; the padding stays exactly zero
    padded = -(-s // _PAD) * _PAD
    syn0 = _aligned_zeros(n_vertices, padded)
    syn0[:, :s] = (rng.random((n_vertices, s)) - 0.5) / s
    syn1 = _aligned_zeros(n_vertices, padded)
    counts = np.bincount(tokens, minlength=n_vertices).astype(np.float64)
    prob, alias = alias_table(counts ** 0.75)
    sig, loss_pos, loss_neg = _tables()

    per_walk = _pairs_per_walk(np.diff(ptr), config.w)
    pair_offset = np.zeros(len(per_walk) + 1, dtype=np.int64)
    np.cumsum(per_walk, out=pair_offset[1:])
    pairs_per_epoch = int(pair_offset[-1])
    if pairs_per_epoch == 0:
        raise EmbeddingError("corpus has no (center, context) pairs; walks need length >= 2")
    total = float(pairs_per_epoch * config.epochs)

    kernel = _epoch_serial
    if config.workers > 1:
        nb.set_num_threads(min(config.workers, nb.config.NUMBA_NUM_THREADS))
        kernel = _epoch_parallel
    walk_loss = np.zeros(len(ptr) - 1)
    history = []
    seed = np.uint64(config.seed & 0xFFFFFFFFFFFFFFFF)
    for epoch in range(config.epochs):
        kernel(tokens, ptr, pair_offset, total, epoch, config.w, config.negatives,
               config.initial_learning_rate, seed, prob, alias, sig, loss_pos, loss_neg, syn0, syn1, walk_loss)
        history.append(float(walk_loss.sum() / pairs_per_epoch))
        log.debug("epoch %d: mean pair loss %.5f", epoch + 1, history[-1])

    vectors = syn0[:, :s].astype(np.float64)
    if not np.isfinite(vectors).all():
        raise EmbeddingError("training diverged (non-finite vectors)")
    fingerprint = corpus.fingerprint if isinstance(corpus, WalkCorpus) else ""
    return EmbeddingTable(vectors, fingerprint, syn1[:, :s].astype(np.float64), history)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def _fp_bytes(fingerprint: str) -> bytes:
    raw = fingerprint.encode("ascii")
    if len(raw) > 16:
        raise EmbeddingError("fingerprint longer than 16 characters")
    return raw.ljust(16, b"\x00")


def save_embeddings(table: EmbeddingTable, path) -> None:
    """Binary layout: magic, version, rows, dim, fingerprint, row-major float64."""
    vectors = np.ascontiguousarray(table.vectors, dtype="<f8")
    n, s = vectors.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, n, s, _fp_bytes(table.fingerprint)))
        fh.write(vectors.tobytes())


def load_embeddings(path, expected_fingerprint: str | None = None) -> EmbeddingTable:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise EmbeddingFormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, n, s, fp = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise EmbeddingFormatError(f"{path}: unsupported version {version}")
    body = len(data) - _HEADER.size
    if body != n * s * 8:
        raise EmbeddingFormatError(f"{path}: header declares {n}x{s} float64 values "
                                   f"({n * s * 8} bytes) but body holds {body} bytes")
    fingerprint = fp.rstrip(b"\x00").decode("ascii")
    _check_fingerprint(path, fingerprint, expected_fingerprint)
    vectors = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(n, s).astype(np.float64)
    return EmbeddingTable(vectors, fingerprint)


def _check_fingerprint(path, found: str, expected: str | None) -> None:
    if expected is not None and found != expected:
        raise FingerprintMismatch(f"{path}: embeddings were trained on graph {found!r}, not {expected!r}")


def save_embeddings_text(table: EmbeddingTable, path, labels: Sequence[str] | None = None) -> None:
    """Text export: ``rows dim fingerprint`` header, then ``label v1 ... vs`` per row."""
    n, s = table.vectors.shape
    labels = labels if labels is not None else [str(i) for i in range(n)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{n} {s} {table.fingerprint}\n")
        for label, row in zip(labels, table.vectors):
            fh.write(label + " " + " ".join(repr(float(x)) for x in row) + "\n")


def load_embeddings_text(path, expected_fingerprint: str | None = None) -> tuple[EmbeddingTable, list[str]]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) not in (2, 3):
            raise EmbeddingFormatError(f"{path}: bad header")
        n, s = int(header[0]), int(header[1])
        fingerprint = header[2] if len(header) == 3 else ""
        labels, rows = [], []
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if len(parts) - 1 != s:
                raise EmbeddingFormatError(f"{path}:{lineno}: expected {s} values, found {len(parts) - 1}")
            labels.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if len(rows) != n:
        raise EmbeddingFormatError(f"{path}: header declares {n} rows, found {len(rows)}")
    _check_fingerprint(path, fingerprint, expected_fingerprint)
    return EmbeddingTable(np.array(rows, dtype=np.float64).reshape(n, s), fingerprint), labels
