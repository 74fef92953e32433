"""Hand-rolled reference evaluators and instance generators for the tests.

Everything here takes a deliberately different route from the package code:
predicates follow their defining grammar or recursion directly, relations
come from bounded path enumeration, and the covering preorder is decided
both by exhaustive closure and by an order-theoretic criterion.  Sizes are
expected to be tiny.
"""

from __future__ import annotations

import itertools
import random
from collections import Counter

from nredcheck.model import (
    Action,
    ActionKind,
    AtomicFusion,
    CommutativityRelation,
    ThreadTemplate,
    acquire,
    block_symbol,
    plain,
    release,
    substitute_blocks,
)

# -- predicates ----------------------------------------------------------------


def lock_feasible_ref(tr) -> bool:
    """Per lock, the projection must be complete same-thread acquire/release
    rounds with at most one trailing acquire (checked against the pattern
    itself, not a holder map)."""
    locks = {a.lock for a, _ in tr if a.lock}
    for m in locks:
        proj = [(a, t) for a, t in tr if a.lock == m]
        k = 0
        while k + 1 < len(proj):
            (a1, t1), (a2, t2) = proj[k], proj[k + 1]
            if a1.kind is ActionKind.ACQUIRE and a2.kind is ActionKind.RELEASE and t1 == t2:
                k += 2
            else:
                break
        rest = proj[k:]
        if rest and not (len(rest) == 1 and rest[0][0].kind is ActionKind.ACQUIRE):
            return False
    return True


def barrier_feasible_ref(tr) -> bool:
    """Direct recursion on the phase grammar: a feasible trace is blocks of
    running-thread steps and complete rendezvous rounds, followed by a trace
    feasible for a strictly smaller running set; the empty set accepts only
    the empty trace."""
    tr = tuple(tr)
    threads = frozenset(t for _, t in tr)

    def prefix_splits(rest: tuple, team: frozenset) -> set[int]:
        # positions i such that rest[:i] parses as ((steps by team)* + round)*
        reach = {0}
        frontier = [0]
        while frontier:
            pos = frontier.pop()
            if pos >= len(rest):
                continue
            a, t = rest[pos]
            if a.kind is not ActionKind.SYNC_POINT and t in team and pos + 1 not in reach:
                reach.add(pos + 1)
                frontier.append(pos + 1)
            end = pos + len(team)
            if team and end <= len(rest):
                chunk = rest[pos:end]
                if all(a2.kind is ActionKind.SYNC_POINT for a2, _ in chunk) and {
                    t2 for _, t2 in chunk
                } == set(team):
                    if end not in reach:
                        reach.add(end)
                        frontier.append(end)
        return reach

    seen: dict[tuple, bool] = {}

    def feasible(rest: tuple, team: frozenset) -> bool:
        key = (rest, team)
        if key in seen:
            return seen[key]
        if not team:
            out = not rest
        else:
            out = False
            for i in prefix_splits(rest, team):
                tail = rest[i:]
                for k in range(len(team)):
                    for sub in itertools.combinations(sorted(team), k):
                        if feasible(tail, frozenset(sub)):
                            out = True
                            break
                    if out:
                        break
                if out:
                    break
        seen[key] = out
        return out

    return feasible(tr, threads)


# -- covering preorder ----------------------------------------------------------


def cover_closure(src, rel: CommutativityRelation, cap: int = 200_000) -> set:
    """The full set of traces reachable from src by allowed swaps."""
    out = {tuple(src)}
    frontier = [tuple(src)]
    while frontier:
        tr = frontier.pop()
        for k in range(len(tr) - 1):
            (a, ta), (b, tb) = tr[k], tr[k + 1]
            if ta != tb and rel.commutes(a, b):
                nxt = tr[:k] + ((b, tb), (a, ta)) + tr[k + 2 :]
                if nxt not in out:
                    if len(out) >= cap:
                        raise RuntimeError("closure too large for the reference")
                    out.add(nxt)
                    frontier.append(nxt)
    return out


def covers_ref(src, dst, rel: CommutativityRelation) -> bool:
    return tuple(dst) in cover_closure(src, rel)


def covers_inversion(src, dst, rel: CommutativityRelation) -> bool:
    """Order-theoretic criterion: same per-thread sequences, and every pair
    of occurrences whose relative order flips must be a commuting
    cross-thread pair (flipping is one-shot, so this is exact)."""
    src, dst = tuple(src), tuple(dst)
    if len(src) != len(dst) or Counter(src) != Counter(dst):
        return False
    threads = {t for _, t in src} | {t for _, t in dst}
    for t in threads:
        if [a for a, tt in src if tt == t] != [a for a, tt in dst if tt == t]:
            return False
    # identify occurrences as (thread, per-thread occurrence number)
    def occurrences(tr):
        counts: Counter = Counter()
        out = []
        for a, t in tr:
            out.append((t, counts[t], a))
            counts[t] += 1
        return out

    src_occ = occurrences(src)
    dst_pos = {(t, k): idx for idx, (t, k, _) in enumerate(occurrences(dst))}
    for p in range(len(src_occ)):
        tp, kp, ap = src_occ[p]
        for q in range(p + 1, len(src_occ)):
            tq, kq, aq = src_occ[q]
            if dst_pos[(tq, kq)] < dst_pos[(tp, kp)]:
                if tp == tq or not rel.commutes(ap, aq):
                    return False
    return True


# -- relations by bounded path enumeration ---------------------------------------


def traces_up_to(t: ThreadTemplate, max_len: int) -> list[tuple[Action, ...]]:
    return sorted(t.traces(max_len), key=lambda w: (len(w), [a.sort_key() for a in w]))


def program_order_ref(t: ThreadTemplate, max_len: int | None = None) -> frozenset:
    cap = max_len if max_len is not None else 3 * len(t.locations) + 2
    pairs = set()
    for w in t.traces(cap):
        for p in range(len(w)):
            for q in range(p, len(w)):
                if not w[p].is_sync and not w[q].is_sync:
                    pairs.add((w[p], w[q]))
    return frozenset(pairs)


def at_relation_ref(f: AtomicFusion, max_len: int | None = None) -> frozenset:
    pairs = set()
    for _, body in f.blocks:
        cap = max_len if max_len is not None else 3 * len(body.locations) + 4
        for w in body.traces(cap):
            for p in range(len(w)):
                for q in range(p + 1, len(w)):
                    pairs.add((w[q], w[p]))
    return frozenset(pairs)


def compose(r1, r2) -> frozenset:
    by_left = {}
    for x, y in r2:
        by_left.setdefault(x, set()).add(y)
    out = set()
    for x, y in r1:
        for z in by_left.get(y, ()):
            out.add((x, z))
    return frozenset(out)


def escape_relation_ref(
    t: ThreadTemplate, f: AtomicFusion, rel: CommutativityRelation
) -> frozenset:
    """Explicit relational composition of the escape chain definition."""
    actions = sorted(t.plain_alphabet, key=Action.sort_key)
    conflicts = frozenset(
        (x, y) for x in actions for y in actions if not rel.commutes(x, y)
    )
    order = program_order_ref(t) | at_relation_ref(f)
    step = compose(order, conflicts)
    closure = frozenset(step)
    while True:
        grown = closure | compose(closure, step)
        if grown == closure:
            break
        closure = grown
    return compose(conflicts, closure)


def fusion_sound_ref(
    t: ThreadTemplate, f: AtomicFusion, rel: CommutativityRelation
) -> bool:
    """The characterization, brute force: unsound exactly when some block
    trace has two positions linked by the escape relation."""
    escape = escape_relation_ref(t, f, rel)
    for _, body in f.blocks:
        for w in body.traces(2 * len(body.locations) + 4):
            for p in range(len(w)):
                for q in range(p + 1, len(w)):
                    if (w[p], w[q]) in escape:
                        return False
    return True


def phase_order_ref(instrumented: ThreadTemplate, max_len: int | None = None) -> frozenset:
    cap = max_len if max_len is not None else 4 * len(instrumented.locations) + 6
    best_min: dict[Action, int] = {}
    best_max: dict[Action, int] = {}
    for w in instrumented.traces(cap):
        count = 0
        for a in w:
            if a.kind is ActionKind.SYNC_POINT:
                count += 1
                continue
            if a not in best_min or count < best_min[a]:
                best_min[a] = count
            if a not in best_max or count > best_max[a]:
                best_max[a] = count
    return frozenset(
        (a, b)
        for a in best_min
        for b in best_max
        if best_min[a] < best_max[b]
    )


# -- random instances -------------------------------------------------------------


def random_fusion_instance(rng: random.Random):
    """A random trivially-synchronized instance: original template with at
    most 6 locations and 5 actions, up to 2 atomic blocks, up to 2 rendezvous
    insertion points, and a commutativity relation of density 0.3-0.9.

    Returns (original, fusion, insertion_locations, relation).
    """
    counter = itertools.count()

    def fresh_plain() -> Action:
        return plain(f"p{next(counter)}")

    n_blocks = rng.choice([0, 1, 1, 2])
    body_sizes = [rng.randint(1, 2) for _ in range(n_blocks)]
    while sum(body_sizes) > 4:
        body_sizes[body_sizes.index(2)] = 1
    rem = 5 - sum(body_sizes)  # plain-action budget left for the outer part
    syms = [block_symbol(f"B{k + 1}") for k in range(n_blocks)]

    spine_len = rng.randint(1, min(3, n_blocks + rem))
    n_plains = rng.randint(max(0, spine_len - n_blocks), rem)
    labels: list[Action] = list(syms) + [fresh_plain() for _ in range(n_plains)]
    rng.shuffle(labels)
    # block symbols must sit on real edges; all labels get placed
    outer_locs = [f"o{k}" for k in range(spine_len + 1)]
    edges = []
    for k in range(spine_len):
        edges.append((outer_locs[k], labels[k], outer_locs[k + 1]))
    # at most one backward edge keeps the trace language small enough for
    # the path-enumeration references
    allow_back = rng.random() < 0.5
    for lab in labels[spine_len:]:
        ui = rng.randrange(len(outer_locs) - 1)
        if allow_back:
            vi = rng.randrange(len(outer_locs))
            if vi <= ui:
                allow_back = False
        else:
            vi = rng.randrange(ui + 1, len(outer_locs))
        edges.append((outer_locs[ui], lab, outer_locs[vi]))
    outer = ThreadTemplate.make(edges, outer_locs[0], outer_locs[-1])

    blocks = {}
    for sym, size in zip(syms, body_sizes):
        prefix = sym.name.lower()
        if size == 2 and rng.random() < 0.3:
            # one forward edge plus a back edge: the body language is a loop
            blocks[sym] = ThreadTemplate.make(
                [
                    (f"{prefix}u0", fresh_plain(), f"{prefix}u1"),
                    (f"{prefix}u1", fresh_plain(), f"{prefix}u0"),
                ],
                f"{prefix}u0",
                f"{prefix}u1",
            )
        else:
            body_edges = [
                (f"{prefix}u{k}", fresh_plain(), f"{prefix}u{k + 1}")
                for k in range(size)
            ]
            blocks[sym] = ThreadTemplate.make(body_edges, f"{prefix}u0", f"{prefix}u{size}")
    fusion = AtomicFusion.make(outer, blocks)
    original = substitute_blocks(fusion)

    sync_locs: list[str] = []
    if rng.random() < 0.6:
        candidates = [l for l in sorted(outer.locations) if outer.successors.get(l)]
        rng.shuffle(candidates)
        sync_locs = candidates[: rng.choice([1, 1, 2])]

    density = rng.uniform(0.3, 0.9)
    alphabet = sorted(original.plain_alphabet, key=Action.sort_key)
    pairs = [(x, y) for x in alphabet for y in alphabet if rng.random() < density]
    relation = CommutativityRelation(alphabet, pairs=pairs)
    return original, fusion, sync_locs, relation


def random_lock_template(
    rng: random.Random, max_locs: int = 6, visible_start: bool = False
) -> ThreadTemplate:
    """A small valid template mixing plain and lock edges (possibly loops).

    With `visible_start`, every edge out of the initial location is plain, so
    any thread that moves at all shows up in the plain projection (which the
    rendezvous-gadget contract needs: a thread whose whole history is lock
    operations vanishes from the interleaving, and dropping it entirely
    covers the run).
    """
    n = rng.randint(2, max_locs)
    locs = [f"q{k}" for k in range(n)]
    lock_pool = ["ma", "mb"]
    edges = []
    plain_idx = 0

    def fresh_plain() -> Action:
        nonlocal plain_idx
        plain_idx += 1
        return plain(f"z{plain_idx}")

    def any_label(src: str) -> Action:
        if visible_start and src == locs[0]:
            return fresh_plain()
        roll = rng.random()
        if roll < 0.4:
            return fresh_plain()
        if roll < 0.7:
            return acquire(rng.choice(lock_pool))
        return release(rng.choice(lock_pool))

    for k in range(n - 1):
        edges.append((locs[k], any_label(locs[k]), locs[k + 1]))
    for _ in range(rng.randint(0, 2)):
        u = rng.choice(locs[:-1])
        v = rng.choice(locs)
        edges.append((u, any_label(u), v))
    return ThreadTemplate.make(edges, locs[0], locs[-1])
