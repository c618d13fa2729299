"""Pilot design on orthogonal Hadamard subspaces.

Each cluster of devices gets a dedicated block of columns of a complex
Hadamard basis. Pilots are unit-norm sparse combinations of the block
columns, picked greedily to spread them out inside the block subspace.
Blocks are mutually orthogonal by construction, which is what lets the
receiver separate clusters exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.linalg import hadamard

from .seeding import as_rng

# Phase alphabets tried in order when building candidate weight vectors.
# Order 1 is the plain binary alphabet {0, 1}; order 2 adds signs; higher
# orders add complex roots of unity. Escalation stops at the first order
# with enough phase-distinct candidates.
# Weight alphabets are the q-th roots of unity (plus zero), with q doubling
# from binary {0, 1} upward until the canonical candidate count covers the
# request. Orders past this cap buy almost no extra pairwise separation.
_MAX_PHASE_ORDER = 256


def hadamard_basis(length: int) -> np.ndarray:
    """Complex Sylvester-Hadamard basis of a given power-of-two size.

    Entries are (1+1j) or (-1-1j); columns are mutually orthogonal with
    squared norm 2 * length.
    """
    if length < 1 or (length & (length - 1)) != 0:
        raise ValueError(f"pilot length must be a positive power of two, got {length}")
    return (1.0 + 1.0j) * hadamard(length).astype(np.complex128)


@dataclass(frozen=True)
class BasisMatrix:
    """A Hadamard basis with a contiguous column partition into cluster blocks."""

    entries: np.ndarray
    kappa: tuple[int, ...]
    partition: tuple[tuple[int, int], ...]

    @property
    def length(self) -> int:
        return self.entries.shape[0]

    @property
    def num_clusters(self) -> int:
        return len(self.kappa)

    def block(self, cluster: int) -> np.ndarray:
        start, stop = self.partition[cluster]
        return self.entries[:, start:stop]


def partition_basis(basis: np.ndarray, kappa: tuple[int, ...] | list[int]) -> BasisMatrix:
    """Split basis columns into contiguous per-cluster blocks of sizes kappa."""
    basis = np.asarray(basis, dtype=np.complex128)
    if basis.ndim != 2 or basis.shape[0] != basis.shape[1]:
        raise ValueError(f"basis must be square, got shape {basis.shape}")
    kappa = tuple(int(k) for k in kappa)
    if not kappa:
        raise ValueError("kappa must contain at least one block size")
    if any(k < 1 for k in kappa):
        raise ValueError(f"every block size must be >= 1, got {kappa}")
    if sum(kappa) > basis.shape[1]:
        raise ValueError(
            f"block sizes sum to {sum(kappa)} but the basis has only "
            f"{basis.shape[1]} columns"
        )
    edges = np.concatenate([[0], np.cumsum(kappa)])
    partition = tuple((int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]))
    return BasisMatrix(entries=basis, kappa=kappa, partition=partition)


def _phase_alphabet(order: int) -> np.ndarray:
    if order == 1:
        return np.array([1.0 + 0.0j])
    return np.exp(2j * np.pi * np.arange(order) / order)


def _num_candidates(kappa: int, cardinality: int, order: int) -> int:
    # Candidates are canonical: first nonzero weight pinned to 1 so that no
    # two candidates differ only by a global phase (such pairs would have
    # coherence 1 and poison the selection pool).
    return comb(kappa, cardinality) * order ** (cardinality - 1)


def _enumerate_candidates(kappa: int, cardinality: int, order: int) -> np.ndarray:
    phases = _phase_alphabet(order)
    out = []
    for support in itertools.combinations(range(kappa), cardinality):
        for tail in itertools.product(range(order), repeat=cardinality - 1):
            z = np.zeros(kappa, dtype=np.complex128)
            z[support[0]] = 1.0
            for pos, ph in zip(support[1:], tail):
                z[pos] = phases[ph]
            out.append(z)
    return np.array(out)


def _sample_candidates(
    kappa: int, cardinality: int, order: int, count: int, rng: np.random.Generator
) -> np.ndarray:
    # Rejection sampling of distinct canonical candidates; used when the
    # candidate space is too large to enumerate.
    phases = _phase_alphabet(order)
    seen: set[tuple] = set()
    out = []
    attempts = 0
    limit = 200 * count
    while len(out) < count and attempts < limit:
        attempts += 1
        support = tuple(sorted(rng.choice(kappa, size=cardinality, replace=False).tolist()))
        tail = tuple(int(t) for t in rng.integers(0, order, size=cardinality - 1))
        key = (support, tail)
        if key in seen:
            continue
        seen.add(key)
        z = np.zeros(kappa, dtype=np.complex128)
        z[support[0]] = 1.0
        for pos, ph in zip(support[1:], tail):
            z[pos] = phases[ph]
        out.append(z)
    return np.array(out)


def candidate_weights(
    kappa: int,
    cardinality: int,
    pool_size: int,
    rng: np.random.Generator,
    min_candidates: int,
) -> tuple[np.ndarray, int]:
    """Build a pool of distinct sparse weight vectors of fixed cardinality.

    Starts from the binary alphabet {0, 1} and widens to signed and then
    complex unit-modulus weights whenever the current alphabet cannot
    provide `min_candidates` phase-distinct vectors.

    Returns (weights, order) where weights has shape (pool, kappa).
    """
    if not 1 <= cardinality <= kappa:
        raise ValueError(
            f"weight cardinality must lie in [1, {kappa}], got {cardinality}"
        )
    order = 1
    total = _num_candidates(kappa, cardinality, order)
    while total < min_candidates and cardinality > 1 and order < _MAX_PHASE_ORDER:
        order *= 2
        total = _num_candidates(kappa, cardinality, order)
    if total < min_candidates:
        raise ValueError(
            f"cannot build {min_candidates} distinct weight vectors: kappa={kappa}, "
            f"cardinality={cardinality} admits only {total} candidates even with an "
            f"order-{order} phase alphabet"
        )
    want = max(pool_size, min_candidates)
    if total <= max(want, 100_000):
        pool = _enumerate_candidates(kappa, cardinality, order)
        if total > want:
            idx = rng.choice(total, size=want, replace=False)
            pool = pool[np.sort(idx)]
    else:
        pool = _sample_candidates(kappa, cardinality, order, want, rng)
        if pool.shape[0] < min_candidates:
            raise ValueError(
                f"candidate sampling exhausted after producing {pool.shape[0]} of "
                f"{min_candidates} required weight vectors"
            )
    return pool, order


def _chordal_distance_to(columns: np.ndarray, picked: np.ndarray) -> np.ndarray:
    # columns are unit norm, so |inner| <= 1 up to roundoff.
    overlap = np.abs(columns.conj().T @ picked)
    return np.sqrt(np.clip(1.0 - overlap**2, 0.0, None))


def generate_cluster_pilots(
    block: np.ndarray,
    num_pilots: int,
    cardinality: int | None = None,
    pool_size: int | None = None,
    seed: int | np.random.Generator = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Unit-norm pilots for one cluster from its basis block.

    A pool of sparse weight vectors is drawn, mapped through the block and
    normalized, then pilots are selected greedily: start from a random pool
    member and repeatedly add the candidate maximizing the minimum chordal
    distance sqrt(1 - |<s_i, s_j>|^2) to everything already selected.

    Args:
        block: (L, kappa) basis columns reserved for the cluster.
        num_pilots: number of devices in the cluster.
        cardinality: nonzeros per weight vector; defaults to ceil(kappa / 2).
        pool_size: candidate pool size; defaults to 20 * num_pilots.
        seed: int seed or Generator.

    Returns:
        (pilots, weights): (L, num_pilots) complex pilots with unit columns
        and the (num_pilots, kappa) weight vectors that generated them.
    """
    block = np.asarray(block, dtype=np.complex128)
    if block.ndim != 2:
        raise ValueError(f"block must be 2-D, got shape {block.shape}")
    length, kappa = block.shape
    if num_pilots < 1:
        raise ValueError(f"num_pilots must be >= 1, got {num_pilots}")
    if cardinality is None:
        cardinality = (kappa + 1) // 2
    if pool_size is None:
        pool_size = 20 * num_pilots
    rng = as_rng(seed)

    weights, _ = candidate_weights(kappa, cardinality, pool_size, rng, num_pilots)
    columns = block @ weights.T
    norms = np.linalg.norm(columns, axis=0)
    if np.any(norms == 0):
        raise ValueError("candidate weight vector maps to the zero column")
    columns = columns / norms

    pool = columns.shape[1]
    first = int(rng.integers(pool))
    selected = [first]
    min_dist = _chordal_distance_to(columns, columns[:, first])
    min_dist[first] = -np.inf
    while len(selected) < num_pilots:
        nxt = int(np.argmax(min_dist))
        selected.append(nxt)
        dist = _chordal_distance_to(columns, columns[:, nxt])
        np.minimum(min_dist, dist, out=min_dist)
        min_dist[nxt] = -np.inf

    idx = np.array(selected)
    return columns[:, idx], weights[idx]


def mutual_coherence(pilots: np.ndarray) -> float:
    """Largest normalized inner product between distinct columns."""
    pilots = np.asarray(pilots, dtype=np.complex128)
    if pilots.ndim != 2 or pilots.shape[1] < 1:
        raise ValueError(f"pilots must be a nonempty 2-D array, got shape {pilots.shape}")
    norms = np.linalg.norm(pilots, axis=0)
    if np.any(norms == 0):
        raise ValueError("pilot matrix contains a zero column")
    if pilots.shape[1] == 1:
        return 0.0
    gram = np.abs(pilots.conj().T @ pilots) / np.outer(norms, norms)
    np.fill_diagonal(gram, 0.0)
    return float(gram.max())


def min_pairwise_distance(pilots: np.ndarray) -> float:
    """Smallest chordal distance between distinct unit-normalized columns."""
    mu = mutual_coherence(pilots)
    return float(np.sqrt(max(0.0, 1.0 - mu**2)))


@dataclass(frozen=True)
class PilotBank:
    """All pilots of a network, grouped contiguously by cluster.

    Column j of `pilots` belongs to cluster `cluster_of[j]`; devices are
    ordered so that clusters occupy contiguous column ranges.
    """

    pilots: np.ndarray
    cluster_of: np.ndarray
    kappa: tuple[int, ...]
    cluster_sizes: tuple[int, ...]
    cardinality: tuple[int, ...]
    seed: int
    weights: tuple[np.ndarray, ...] | None = None

    @property
    def length(self) -> int:
        return self.pilots.shape[0]

    @property
    def num_devices(self) -> int:
        return self.pilots.shape[1]

    @property
    def num_clusters(self) -> int:
        return len(self.cluster_sizes)

    def cluster_slice(self, cluster: int) -> slice:
        edges = np.concatenate([[0], np.cumsum(self.cluster_sizes)])
        return slice(int(edges[cluster]), int(edges[cluster + 1]))

    def cluster_pilots(self, cluster: int) -> np.ndarray:
        return self.pilots[:, self.cluster_slice(cluster)]


def split_evenly(total: int, parts: int) -> tuple[int, ...]:
    """Split an integer into `parts` nearly equal pieces (remainder first)."""
    if parts < 1:
        raise ValueError(f"parts must be >= 1, got {parts}")
    if total < parts:
        raise ValueError(f"cannot split {total} into {parts} nonempty parts")
    base, rem = divmod(total, parts)
    return tuple(base + (1 if g < rem else 0) for g in range(parts))


def build_pilot_bank(
    length: int,
    cluster_sizes: tuple[int, ...] | list[int],
    kappa: tuple[int, ...] | list[int] | None = None,
    cardinality: tuple[int, ...] | list[int] | int | None = None,
    pool_factor: int = 20,
    pool_size: int | None = None,
    seed: int = 0,
) -> PilotBank:
    """Construct pilots for every cluster of a network.

    kappa defaults to an even split of the basis columns over clusters.
    Each cluster draws a candidate pool of pool_factor * N_g weight vectors
    (pool_size overrides with an absolute count). Each cluster is generated
    from its own derived seed, so the bank is a pure function of the
    arguments.
    """
    if pool_factor < 1:
        raise ValueError(f"pool_factor must be >= 1, got {pool_factor}")
    cluster_sizes = tuple(int(n) for n in cluster_sizes)
    if any(n < 1 for n in cluster_sizes):
        raise ValueError(f"cluster sizes must be positive, got {cluster_sizes}")
    num_clusters = len(cluster_sizes)
    if kappa is None:
        kappa = split_evenly(length, num_clusters)
    kappa = tuple(int(k) for k in kappa)
    if len(kappa) != num_clusters:
        raise ValueError(
            f"kappa has {len(kappa)} entries but there are {num_clusters} clusters"
        )
    if cardinality is None:
        cards = tuple((k + 1) // 2 for k in kappa)
    elif isinstance(cardinality, int):
        cards = (cardinality,) * num_clusters
    else:
        cards = tuple(int(s) for s in cardinality)
        if len(cards) != num_clusters:
            raise ValueError(
                f"cardinality has {len(cards)} entries but there are "
                f"{num_clusters} clusters"
            )

    basis = partition_basis(hadamard_basis(length), kappa)
    blocks = []
    weight_sets = []
    for g, n_g in enumerate(cluster_sizes):
        rng = as_rng(np.random.SeedSequence([int(seed), g]))
        pool = pool_size if pool_size is not None else pool_factor * n_g
        cols, w = generate_cluster_pilots(
            basis.block(g), n_g, cardinality=cards[g], pool_size=pool, seed=rng
        )
        blocks.append(cols)
        weight_sets.append(w)

    pilots = np.concatenate(blocks, axis=1)
    cluster_of = np.repeat(np.arange(num_clusters), cluster_sizes)
    return PilotBank(
        pilots=pilots,
        cluster_of=cluster_of,
        kappa=kappa,
        cluster_sizes=cluster_sizes,
        cardinality=cards,
        seed=int(seed),
        weights=tuple(weight_sets),
    )


def save_pilot_bank(bank: PilotBank, path) -> None:
    """Write a bank as CSV: header comments plus interleaved re/im rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# pilot bank v1\n")
        fh.write(f"# L={bank.length}\n")
        fh.write(f"# G={bank.num_clusters}\n")
        fh.write(f"# kappa={','.join(str(k) for k in bank.kappa)}\n")
        fh.write(f"# N_g={','.join(str(n) for n in bank.cluster_sizes)}\n")
        fh.write(f"# s={','.join(str(s) for s in bank.cardinality)}\n")
        fh.write(f"# seed={bank.seed}\n")
        for row in bank.pilots:
            parts = []
            for v in row:
                parts.append(repr(float(v.real)))
                parts.append(repr(float(v.imag)))
            fh.write(",".join(parts) + "\n")


def load_pilot_bank(path) -> PilotBank:
    """Inverse of save_pilot_bank. Weight vectors are not persisted."""
    header: dict[str, str] = {}
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if "=" in body:
                    key, value = body.split("=", 1)
                    header[key.strip()] = value.strip()
                continue
            vals = np.array([float(v) for v in line.split(",")])
            rows.append(vals[0::2] + 1j * vals[1::2])
    for key in ("L", "G", "kappa", "N_g", "s", "seed"):
        if key not in header:
            raise ValueError(f"pilot bank file is missing header field {key!r}")
    pilots = np.array(rows, dtype=np.complex128)
    length = int(header["L"])
    if pilots.shape[0] != length:
        raise ValueError(
            f"pilot bank file declares L={length} but contains {pilots.shape[0]} rows"
        )
    kappa = tuple(int(k) for k in header["kappa"].split(","))
    sizes = tuple(int(n) for n in header["N_g"].split(","))
    cards = tuple(int(s) for s in header["s"].split(","))
    if pilots.shape[1] != sum(sizes):
        raise ValueError(
            f"pilot bank file declares {sum(sizes)} devices but contains "
            f"{pilots.shape[1]} columns"
        )
    return PilotBank(
        pilots=pilots,
        cluster_of=np.repeat(np.arange(len(sizes)), sizes),
        kappa=kappa,
        cluster_sizes=sizes,
        cardinality=cards,
        seed=int(header["seed"]),
        weights=None,
    )
