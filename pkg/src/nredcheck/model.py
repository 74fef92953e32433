"""Core domain objects: thread templates, programs, commutativity, reduction specs.

A thread template is a finite control-flow graph whose edges carry actions.
A parameterized program runs an unbounded number of identical copies of one
template, coordinated (or not) by a synchronization discipline.  Reductions
are specified syntactically, by fusing a sub-graph into an atomic block
and/or by inserting global rendezvous points, and everything here is the
structural layer: representation plus validation.

All values are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Mapping, NamedTuple, Optional


SYNC_POINT_NAME = "•"  # the unique rendezvous symbol, rendered as a bullet


class ActionKind(Enum):
    PLAIN = "plain"
    ACQUIRE = "acquire"
    RELEASE = "release"
    SYNC_POINT = "syncpoint"
    BLOCK = "block"


@dataclass(frozen=True)
class Action:
    """An abstract program action, identified by name.

    Lock operations are structured (kind + lock name) so the lock semantics
    never has to parse names.  Block symbols stand for whole atomic blocks.
    """

    name: str
    kind: ActionKind = ActionKind.PLAIN
    lock: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("action name must be non-empty")
        if self.kind in (ActionKind.ACQUIRE, ActionKind.RELEASE):
            if not self.lock:
                raise ValueError(f"{self.kind.value} action needs a lock name")
        elif self.lock is not None:
            raise ValueError(f"{self.kind.value} action must not carry a lock")
        if self.kind is ActionKind.SYNC_POINT and self.name != SYNC_POINT_NAME:
            raise ValueError("the rendezvous symbol is unique")

    @property
    def is_sync(self) -> bool:
        """True for synchronization actions (lock ops and the rendezvous)."""
        return self.kind in (ActionKind.ACQUIRE, ActionKind.RELEASE, ActionKind.SYNC_POINT)

    def sort_key(self) -> tuple:
        return (self.kind.value, self.name, self.lock or "")

    def __lt__(self, other: "Action") -> bool:
        if not isinstance(other, Action):
            return NotImplemented
        return self.sort_key() < other.sort_key()

    def __str__(self) -> str:
        return self.name

    def __repr__(self) -> str:
        if self.kind is ActionKind.PLAIN:
            return f"Action({self.name!r})"
        return f"Action({self.name!r}, {self.kind.value})"


def plain(name: str) -> Action:
    return Action(name, ActionKind.PLAIN)


def block_symbol(name: str) -> Action:
    return Action(name, ActionKind.BLOCK)


def acquire(lock: str) -> Action:
    return Action(f"acq({lock})", ActionKind.ACQUIRE, lock)


def release(lock: str) -> Action:
    return Action(f"rel({lock})", ActionKind.RELEASE, lock)


SYNC = Action(SYNC_POINT_NAME, ActionKind.SYNC_POINT)


class Edge(NamedTuple):
    src: str
    action: Action
    dst: str


class ModelError(Exception):
    """Base class for structural errors raised by this package."""


class BlockSymbolMissing(ModelError):
    """A declared block symbol labels no edge of the outer template."""


class UnknownLocation(ModelError):
    """A referenced location is not part of the template."""


class InconsistentInputs(ModelError):
    """Jointly supplied structures do not fit together."""


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    subject: tuple = ()

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    entries: tuple[Violation, ...] = ()
    warnings: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.entries

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(str(v) for v in self.entries)

    def raise_if_invalid(self) -> None:
        if not self.ok:
            raise ValidationError(self)


class ValidationError(ModelError):
    def __init__(self, report: ValidationReport):
        super().__init__(str(report))
        self.report = report


class _ReportBuilder:
    def __init__(self) -> None:
        self.entries: list[Violation] = []
        self.warnings: list[Violation] = []

    def add(self, code: str, message: str, subject: tuple = ()) -> None:
        self.entries.append(Violation(code, message, subject))

    def warn(self, code: str, message: str, subject: tuple = ()) -> None:
        self.warnings.append(Violation(code, message, subject))

    def build(self) -> ValidationReport:
        return ValidationReport(tuple(self.entries), tuple(self.warnings))


@dataclass(frozen=True)
class ThreadTemplate:
    """Finite control-flow graph with one initial and one exit location."""

    locations: frozenset[str]
    edges: tuple[Edge, ...]
    init: str
    exit: str

    @staticmethod
    def make(
        edges: Iterable[tuple[str, Action, str]],
        init: str,
        exit: str,
        extra_locations: Iterable[str] = (),
    ) -> "ThreadTemplate":
        """Build a template, inferring the location set from the edges."""
        es = []
        seen = set()
        locs = {init, exit, *extra_locations}
        for src, action, dst in edges:
            e = Edge(src, action, dst)
            if e not in seen:
                seen.add(e)
                es.append(e)
            locs.add(src)
            locs.add(dst)
        return ThreadTemplate(frozenset(locs), tuple(es), init, exit)

    # -- derived views (cached lazily; safe on a frozen dataclass) ---------

    @property
    def alphabet(self) -> frozenset[Action]:
        cached = self.__dict__.get("_alphabet")
        if cached is None:
            cached = frozenset(e.action for e in self.edges)
            self.__dict__["_alphabet"] = cached
        return cached

    @property
    def plain_alphabet(self) -> frozenset[Action]:
        """Plain and block-symbol actions (everything but synchronization)."""
        cached = self.__dict__.get("_plain_alphabet")
        if cached is None:
            cached = frozenset(a for a in self.alphabet if not a.is_sync)
            self.__dict__["_plain_alphabet"] = cached
        return cached

    @property
    def successors(self) -> Mapping[str, tuple[Edge, ...]]:
        cached = self.__dict__.get("_successors")
        if cached is None:
            adj: dict[str, list[Edge]] = {loc: [] for loc in self.locations}
            for e in self.edges:
                adj.setdefault(e.src, []).append(e)
            cached = {k: tuple(v) for k, v in adj.items()}
            self.__dict__["_successors"] = cached
        return cached

    @property
    def predecessors(self) -> Mapping[str, tuple[Edge, ...]]:
        cached = self.__dict__.get("_predecessors")
        if cached is None:
            adj: dict[str, list[Edge]] = {loc: [] for loc in self.locations}
            for e in self.edges:
                adj.setdefault(e.dst, []).append(e)
            cached = {k: tuple(v) for k, v in adj.items()}
            self.__dict__["_predecessors"] = cached
        return cached

    def edges_labeled(self, action: Action) -> tuple[Edge, ...]:
        index = self.__dict__.get("_by_action")
        if index is None:
            index = {}
            for e in self.edges:
                index.setdefault(e.action, []).append(e)
            index = {k: tuple(v) for k, v in index.items()}
            self.__dict__["_by_action"] = index
        return index.get(action, ())

    def the_edge(self, action: Action) -> Edge:
        """The unique edge labeled by a plain or block action."""
        es = self.edges_labeled(action)
        if not es:
            raise KeyError(f"no edge labeled {action}")
        if len(es) > 1:
            raise InconsistentInputs(f"action {action} labels {len(es)} edges")
        return es[0]

    @property
    def has_sync_actions(self) -> bool:
        return any(a.is_sync for a in self.alphabet)

    @property
    def has_sync_points(self) -> bool:
        return any(a.kind is ActionKind.SYNC_POINT for a in self.alphabet)

    def reachable_from(self, starts: Iterable[str]) -> frozenset[str]:
        seen = set(starts)
        stack = list(seen)
        succ = self.successors
        while stack:
            loc = stack.pop()
            for e in succ.get(loc, ()):
                if e.dst not in seen:
                    seen.add(e.dst)
                    stack.append(e.dst)
        return frozenset(seen)

    def co_reachable_to(self, targets: Iterable[str]) -> frozenset[str]:
        seen = set(targets)
        stack = list(seen)
        pred = self.predecessors
        while stack:
            loc = stack.pop()
            for e in pred.get(loc, ()):
                if e.src not in seen:
                    seen.add(e.src)
                    stack.append(e.src)
        return frozenset(seen)

    def traces(self, max_len: int) -> Iterator[tuple[Action, ...]]:
        """All words labeling init-to-exit paths of length at most max_len.

        Exhaustive (loops unrolled up to the bound); intended for small
        templates and test oracles only.
        """
        succ = self.successors
        seen_words = set()
        stack: list[tuple[str, tuple[Action, ...]]] = [(self.init, ())]
        while stack:
            loc, word = stack.pop()
            if loc == self.exit and word and word not in seen_words:
                seen_words.add(word)
                yield word
            if len(word) >= max_len:
                continue
            for e in succ.get(loc, ()):
                stack.append((e.dst, word + (e.action,)))

    def rename(self, loc_map: Mapping[str, str]) -> "ThreadTemplate":
        def m(loc: str) -> str:
            return loc_map.get(loc, loc)

        return ThreadTemplate.make(
            [(m(e.src), e.action, m(e.dst)) for e in self.edges],
            m(self.init),
            m(self.exit),
            extra_locations=[m(l) for l in self.locations],
        )


def validate_template(t: ThreadTemplate) -> ValidationReport:
    """Check every structural template invariant; violations are report entries.

    An empty report means all downstream operations are defined on `t`.
    """
    rb = _ReportBuilder()
    if t.init == t.exit:
        rb.add("init-equals-exit", "init equals exit", (t.init,))
    if t.init not in t.locations:
        rb.add("unknown-init", f"init location {t.init!r} not declared", (t.init,))
    if t.exit not in t.locations:
        rb.add("unknown-exit", f"exit location {t.exit!r} not declared", (t.exit,))
    for e in t.edges:
        for loc in (e.src, e.dst):
            if loc not in t.locations:
                rb.add("unknown-location", f"edge {e} uses undeclared location {loc!r}", (loc,))

    reachable = t.reachable_from([t.init])
    for loc in sorted(t.locations - reachable):
        rb.add("unreachable", f"{loc!r} unreachable from init", (loc,))
    co_reachable = t.co_reachable_to([t.exit])
    for loc in sorted(t.locations - co_reachable):
        rb.add("not-co-reachable", f"exit unreachable from {loc!r}", (loc,))

    counts: dict[Action, int] = {}
    for e in t.edges:
        counts[e.action] = counts.get(e.action, 0) + 1
    for a in sorted(counts, key=Action.sort_key):
        if counts[a] > 1 and not a.is_sync:
            rb.add("duplicate-label", f"action {a} labels {counts[a]} edges", (a.name,))
    return rb.build()


class SyncKind(Enum):
    TRIVIAL = "trivial"
    LOCKS = "locks"
    LOCKS_AND_SYNC_POINTS = "locks_and_syncpoints"


@dataclass(frozen=True)
class ParameterizedProgram:
    """A thread template together with its synchronization discipline."""

    template: ThreadTemplate
    sync_kind: SyncKind = SyncKind.TRIVIAL

    def validate(self) -> ValidationReport:
        rb = _ReportBuilder()
        for v in validate_template(self.template).entries:
            rb.entries.append(v)
        if self.sync_kind is SyncKind.TRIVIAL and self.template.has_sync_actions:
            bad = sorted(a.name for a in self.template.alphabet if a.is_sync)
            rb.add("sync-in-trivial", f"trivial program uses synchronization actions {bad}")
        if self.sync_kind is SyncKind.LOCKS and self.template.has_sync_points:
            rb.add("syncpoint-in-lock-program", "lock program contains rendezvous edges")
        return rb.build()


def infer_sync_kind(t: ThreadTemplate) -> SyncKind:
    has_locks = any(a.kind in (ActionKind.ACQUIRE, ActionKind.RELEASE) for a in t.alphabet)
    if t.has_sync_points:
        return SyncKind.LOCKS_AND_SYNC_POINTS
    return SyncKind.LOCKS if has_locks else SyncKind.TRIVIAL


class CommutativityRelation:
    """A (semi-)commutativity relation: ordered pairs of actions that may swap.

    `(a, b)` in the relation means an adjacent `a b` by two different threads
    may be reordered to `b a`.  No symmetry is required.  The relation is
    declared over an alphabet of plain/block actions; pairs with an endpoint
    outside the alphabet never commute.

    Internally, whichever of the relation and its complement ("conflicts") is
    sparser is stored; `pairs` materializes the positive side on demand.
    """

    __slots__ = ("alphabet", "_conflicts", "_pairs")

    def __init__(
        self,
        alphabet: Iterable[Action],
        *,
        conflicts: Optional[Iterable[tuple[Action, Action]]] = None,
        pairs: Optional[Iterable[tuple[Action, Action]]] = None,
    ):
        if (conflicts is None) == (pairs is None):
            raise ValueError("give exactly one of conflicts= or pairs=")
        self.alphabet: frozenset[Action] = frozenset(alphabet)
        for a in self.alphabet:
            if a.is_sync:
                raise ValueError(f"synchronization action {a} cannot be in the alphabet")
        side = conflicts if conflicts is not None else pairs
        declared = frozenset((x, y) for x, y in side)  # type: ignore[union-attr]
        for x, y in declared:
            if x not in self.alphabet or y not in self.alphabet:
                raise ValueError(f"pair ({x}, {y}) mentions an undeclared action")
        if conflicts is not None:
            self._conflicts: Optional[frozenset] = declared
            self._pairs: Optional[frozenset] = None
        else:
            self._conflicts = None
            self._pairs = declared

    @staticmethod
    def from_conflicts(alphabet: Iterable[Action], conflicts: Iterable[tuple[Action, Action]]) -> "CommutativityRelation":
        return CommutativityRelation(alphabet, conflicts=conflicts)

    @staticmethod
    def from_pairs(alphabet: Iterable[Action], pairs: Iterable[tuple[Action, Action]]) -> "CommutativityRelation":
        return CommutativityRelation(alphabet, pairs=pairs)

    @staticmethod
    def full(alphabet: Iterable[Action]) -> "CommutativityRelation":
        return CommutativityRelation(alphabet, conflicts=())

    @staticmethod
    def empty(alphabet: Iterable[Action]) -> "CommutativityRelation":
        return CommutativityRelation(alphabet, pairs=())

    def commutes(self, a: Action, b: Action) -> bool:
        if a not in self.alphabet or b not in self.alphabet:
            return False
        if self._conflicts is not None:
            return (a, b) not in self._conflicts
        return (a, b) in self._pairs  # type: ignore[operator]

    def in_conflict(self, a: Action, b: Action) -> bool:
        return not self.commutes(a, b)

    @property
    def pairs(self) -> frozenset[tuple[Action, Action]]:
        """The positive relation, materialized (quadratic in the alphabet)."""
        if self._pairs is not None:
            return self._pairs
        out = frozenset(
            (a, b)
            for a in self.alphabet
            for b in self.alphabet
            if (a, b) not in self._conflicts  # type: ignore[operator]
        )
        return out

    @property
    def explicit_conflicts(self) -> frozenset[tuple[Action, Action]]:
        """Non-commuting pairs within the declared alphabet."""
        if self._conflicts is not None:
            return self._conflicts
        return frozenset(
            (a, b)
            for a in self.alphabet
            for b in self.alphabet
            if (a, b) not in self._pairs  # type: ignore[operator]
        )

    def conflicts_over(self, universe: Iterable[Action]) -> Iterator[tuple[Action, Action]]:
        """All non-commuting ordered pairs over `universe`.

        Actions outside the declared alphabet conflict with everything.
        """
        uni = sorted(set(universe), key=Action.sort_key)
        absent = [a for a in uni if a not in self.alphabet]
        present = [a for a in uni if a in self.alphabet]
        uni_set = set(uni)
        for x, y in sorted(self.explicit_conflicts, key=lambda p: (p[0].sort_key(), p[1].sort_key())):
            if x in uni_set and y in uni_set:
                yield (x, y)
        for x in absent:
            for y in uni:
                yield (x, y)
                if y not in self.alphabet:
                    continue
                yield (y, x)

    def is_symmetric(self) -> bool:
        confl = self.explicit_conflicts
        return all((b, a) in confl for a, b in confl)

    def symmetric_core(self) -> "CommutativityRelation":
        """Largest symmetric relation contained in this one."""
        confl = self.explicit_conflicts
        sym_conflicts = set(confl)
        sym_conflicts.update((b, a) for a, b in confl)
        return CommutativityRelation(self.alphabet, conflicts=sym_conflicts)

    def with_extra_pairs(self, extra: Iterable[tuple[Action, Action]]) -> "CommutativityRelation":
        extra = [(a, b) for a, b in extra if a in self.alphabet and b in self.alphabet]
        if self._conflicts is not None:
            return CommutativityRelation(self.alphabet, conflicts=self._conflicts - frozenset(extra))
        return CommutativityRelation(self.alphabet, pairs=self._pairs | frozenset(extra))  # type: ignore[operator]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CommutativityRelation):
            return NotImplemented
        return self.alphabet == other.alphabet and self.explicit_conflicts == other.explicit_conflicts

    def __hash__(self) -> int:
        return hash((self.alphabet, self.explicit_conflicts))

    def __repr__(self) -> str:
        return (
            f"CommutativityRelation(|alphabet|={len(self.alphabet)}, "
            f"|conflicts|={len(self.explicit_conflicts)})"
        )


@dataclass(frozen=True)
class AtomicFusion:
    """An outer template with block-symbol edges plus one body per block.

    The original (unfused) template is derived by `substitute_blocks`; it is
    never stored, which makes the substitution invariant hold by construction.
    """

    outer: ThreadTemplate
    blocks: tuple[tuple[Action, ThreadTemplate], ...]

    @staticmethod
    def make(outer: ThreadTemplate, blocks: Mapping[Action, ThreadTemplate]) -> "AtomicFusion":
        ordered = tuple(sorted(blocks.items(), key=lambda kv: kv[0].sort_key()))
        return AtomicFusion(outer, ordered)

    @property
    def block_map(self) -> dict[Action, ThreadTemplate]:
        return dict(self.blocks)

    @property
    def block_symbols(self) -> tuple[Action, ...]:
        return tuple(sym for sym, _ in self.blocks)

    def body_alphabet(self, sym: Action) -> frozenset[Action]:
        return self.block_map[sym].alphabet

    @staticmethod
    def identity(outer: ThreadTemplate) -> "AtomicFusion":
        return AtomicFusion(outer, ())


def substitute_blocks(fusion: AtomicFusion) -> ThreadTemplate:
    """Expand every block-symbol edge of the outer template with its body.

    Body locations are renamed `<blocksym>::<location>`; the body's init and
    exit are identified with the fused edge's endpoints.
    """
    edges: list[tuple[str, Action, str]] = []
    outer = fusion.outer
    block_syms = set(fusion.block_symbols)
    for e in outer.edges:
        if e.action not in block_syms:
            edges.append(e)
    extra = set(outer.locations)
    for sym, body in fusion.blocks:
        hits = outer.edges_labeled(sym)
        if not hits:
            raise BlockSymbolMissing(f"block symbol {sym} has no edge in the outer template")
        if len(hits) > 1:
            raise InconsistentInputs(f"block symbol {sym} labels {len(hits)} edges")
        src, _, dst = hits[0]

        def rename(loc: str, sym=sym, body=body, src=src, dst=dst) -> str:
            if loc == body.init:
                return src
            if loc == body.exit:
                return dst
            return f"{sym.name}::{loc}"

        for be in body.edges:
            edges.append((rename(be.src), be.action, rename(be.dst)))
        extra.update(rename(l) for l in body.locations)
    return ThreadTemplate.make(edges, outer.init, outer.exit, extra_locations=extra)


def validate_fusion(fusion: AtomicFusion, declared_original: Optional[ThreadTemplate] = None) -> ValidationReport:
    """Check all atomic-fusion invariants.

    When `declared_original` is given, the substituted template is compared
    against it by trace-language equivalence (see `automata`).
    """
    rb = _ReportBuilder()
    for v in validate_template(fusion.outer).entries:
        rb.add("outer:" + v.code, "outer template: " + v.message, v.subject)
    block_syms = set(fusion.block_symbols)
    for sym, body in fusion.blocks:
        tag = f"block {sym.name}"
        if sym.kind is not ActionKind.BLOCK:
            rb.add("bad-block-symbol", f"{tag}: symbol is not a block action", (sym.name,))
        if not fusion.outer.edges_labeled(sym):
            rb.add("block-symbol-missing", f"{tag}: no edge in the outer template", (sym.name,))
        for v in validate_template(body).entries:
            rb.add("body:" + v.code, f"{tag}: {v.message}", v.subject)
        for a in sorted(body.alphabet, key=Action.sort_key):
            if a.is_sync:
                rb.add("sync-in-body", f"{tag}: body contains synchronization action {a}", (a.name,))
            if a.kind is ActionKind.BLOCK or a in block_syms:
                rb.add("block-in-body", f"{tag}: body contains block symbol {a}", (a.name,))
        # A valid body always has an init-to-exit path; record it explicitly
        # when the body is broken in exactly that way.
        if body.init in body.locations and body.exit not in body.reachable_from([body.init]):
            rb.add("empty-body-language", f"{tag}: no path from body init to body exit", (sym.name,))
    if rb.entries:
        return rb.build()

    derived = substitute_blocks(fusion)
    for v in validate_template(derived).entries:
        rb.add("substituted:" + v.code, "substituted template: " + v.message, v.subject)
    if declared_original is not None:
        from . import automata

        eq, counterexample = automata.language_equivalent(derived, declared_original)
        if not eq:
            word = " ".join(a.name for a in counterexample or ())
            rb.add(
                "substitution-mismatch",
                f"substituted template and declared original disagree on trace {word!r}",
            )
    return rb.build()


@dataclass(frozen=True)
class SyncPointInstrumentation:
    """A base template plus a rendezvous-instrumented variant of it.

    When built syntactically (`insert_syncpoints`), `insertion_locations`
    records where the rendezvous was inserted.
    """

    base: ThreadTemplate
    instrumented: ThreadTemplate
    insertion_locations: Optional[frozenset[str]] = None

    @property
    def sync_point_count(self) -> int:
        return sum(1 for e in self.instrumented.edges if e.action.kind is ActionKind.SYNC_POINT)


def insert_syncpoints(t: ThreadTemplate, m: Iterable[str]) -> SyncPointInstrumentation:
    """Insert a rendezvous edge after every location in `m`.

    Each location keeps its incoming edges, gains an edge to a fresh copy
    labeled by the rendezvous symbol, and its outgoing edges move to the
    copy.  A location without outgoing edges is left untouched (a rendezvous
    there could never be passed and would only break co-reachability).
    """
    m = frozenset(m)
    unknown = m - t.locations
    if unknown:
        raise UnknownLocation(f"locations not in template: {sorted(unknown)}")

    def fresh_copy(loc: str) -> str:
        candidate = loc + "^"
        while candidate in t.locations:
            candidate += "^"
        return candidate

    edges: list[tuple[str, Action, str]] = []
    copies = {loc: fresh_copy(loc) for loc in m if t.successors.get(loc)}
    for e in t.edges:
        src = copies.get(e.src, e.src)
        edges.append((src, e.action, e.dst))
    for loc, copy in copies.items():
        edges.append((loc, SYNC, copy))
    if not copies:
        return SyncPointInstrumentation(t, t, m)
    instrumented = ThreadTemplate.make(edges, t.init, t.exit, extra_locations=t.locations | set(copies.values()))
    return SyncPointInstrumentation(t, instrumented, m)


def validate_instrumentation(inst: SyncPointInstrumentation) -> ValidationReport:
    """Check the two semantic instrumentation invariants by automaton products.

    (i) erasing the rendezvous from the instrumented traces yields exactly the
    base trace language; (ii) distinct instrumented traces never share the
    same erased form.  Both are decided exactly on these finite graphs.
    """
    from . import automata

    rb = _ReportBuilder()
    fatal = False
    for side, t in (("base", inst.base), ("instrumented", inst.instrumented)):
        for v in validate_template(t).entries:
            rb.add(f"{side}:{v.code}", f"{side} template: {v.message}", v.subject)
            if v.code in ("init-equals-exit", "unknown-init", "unknown-exit"):
                fatal = True
    if inst.base.has_sync_points:
        rb.add("syncpoint-in-base", "base template already contains rendezvous edges")
        fatal = True
    if fatal:
        return rb.build()

    eq, counterexample = automata.language_equivalent(
        inst.base, inst.instrumented, erase_right={ActionKind.SYNC_POINT}
    )
    if not eq:
        word = " ".join(a.name for a in counterexample or ())
        rb.add("projection-mismatch", f"erased instrumented language differs from base on {word!r}")
    pair = automata.find_projection_collision(inst.instrumented, erased={ActionKind.SYNC_POINT})
    if pair is not None:
        w1, w2 = pair
        rb.add(
            "projection-not-injective",
            "two instrumented traces share one erased form: "
            f"{' '.join(a.name for a in w1)!r} vs {' '.join(a.name for a in w2)!r}",
        )
    return rb.build()


@dataclass(frozen=True)
class NaturalReductionSpec:
    """A reduction given by an optional fusion and an optional instrumentation.

    When both are present, the instrumentation applies to the fused template.
    """

    fusion: Optional[AtomicFusion] = None
    instrumentation: Optional[SyncPointInstrumentation] = None

    def validate(self) -> ValidationReport:
        rb = _ReportBuilder()
        if self.fusion is not None:
            for v in validate_fusion(self.fusion).entries:
                rb.entries.append(v)
            for sym, body in self.fusion.blocks:
                if body.has_sync_points:
                    rb.add("syncpoint-in-block", f"atomic block {sym.name} contains a rendezvous")
        if self.instrumentation is not None:
            inst = self.instrumentation
            if self.fusion is not None and inst.base != self.fusion.outer:
                rb.add("instrumentation-base-mismatch", "instrumentation is not over the fused template")
            if inst.insertion_locations is not None:
                rebuilt = insert_syncpoints(inst.base, inst.insertion_locations)
                if rebuilt.instrumented != inst.instrumented:
                    rb.add("instrumentation-mismatch", "instrumented template does not match its insertion set")
            else:
                for v in validate_instrumentation(inst).entries:
                    rb.entries.append(v)
        return rb.build()

    @property
    def is_identity(self) -> bool:
        no_blocks = self.fusion is None or not self.fusion.blocks
        no_sync = self.instrumentation is None or self.instrumentation.sync_point_count == 0
        return no_blocks and no_sync


def lockset_extension(
    i: CommutativityRelation,
    must_hold: Mapping[str, Iterable[str]],
    t: ThreadTemplate,
) -> CommutativityRelation:
    """Grow `i` with pairs whose source locations share a must-held lock.

    Two threads can never simultaneously sit at locations whose must-hold
    lock sets overlap, so their outgoing actions commute vacuously.  Only
    distinct location pairs contribute, and only declared actions are added;
    the result always contains `i`.
    """
    unknown = set(must_hold) - set(t.locations)
    if unknown:
        raise UnknownLocation(f"must_hold mentions unknown locations: {sorted(unknown)}")
    sets = {loc: frozenset(locks) for loc, locks in must_hold.items()}
    out_actions: dict[str, list[Action]] = {}
    for e in t.edges:
        if not e.action.is_sync and e.action in i.alphabet:
            out_actions.setdefault(e.src, []).append(e.action)
    extra: set[tuple[Action, Action]] = set()
    locs = sorted(sets)
    for idx, l1 in enumerate(locs):
        if not sets[l1]:
            continue
        for l2 in locs[idx + 1 :]:
            if sets[l1] & sets[l2]:
                for a in out_actions.get(l1, ()):
                    for b in out_actions.get(l2, ()):
                        extra.add((a, b))
                        extra.add((b, a))
    return i.with_extra_pairs(extra)
