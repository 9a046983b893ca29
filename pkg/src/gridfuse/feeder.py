"""Radial feeder topology: data model, text format, and tree queries.

A feeder is a rooted tree of branches (line sections) with customers attached
to branches. The text format is line oriented, one record per line:

    branch <id> parent=<id|none> poles=<L> spans=<K1,K2,...> length_m=<float> p_underground=<float>
    customer <id> branch=<id> meter=<0|1>

Lines beginning with ``#`` and blank lines are ignored. ``spans`` lists the
conductor count of each span between adjacent poles and may be empty
(``spans=``). Exactly one branch must have ``parent=none``; that branch is the
feeder head. Unknown keys, duplicate ids, dangling references, and parent
cycles are rejected with errors that name the offending entity.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field

from .errors import FormatError, ValidationError

__all__ = [
    "BranchPhysical",
    "Branch",
    "Customer",
    "FeederTopology",
    "load_topology",
    "format_topology",
    "select_outage_locations",
    "natural_key",
]


@dataclass(frozen=True)
class BranchPhysical:
    """Physical attributes of one branch used by the fragility model.

    Attributes:
        pole_count: number of poles supporting the branch.
        span_conductor_counts: conductors per span, one entry per span.
        length_m: total conductor length in meters.
        underground_probability: probability the branch is underground cable.
    """

    pole_count: int
    span_conductor_counts: tuple[int, ...]
    length_m: float
    underground_probability: float


@dataclass(frozen=True)
class Branch:
    """One line section of the feeder tree."""

    id: str
    parent: str | None
    physical: BranchPhysical


@dataclass(frozen=True)
class Customer:
    """A service point attached to a branch, optionally with a smart meter."""

    id: str
    branch: str
    has_meter: bool


def natural_key(identifier: str) -> tuple:
    """Sort key that orders embedded integers numerically (b2 before b10)."""
    parts = re.split(r"(\d+)", identifier)
    return tuple(int(p) if p.isdigit() else p for p in parts)


@dataclass
class FeederTopology:
    """A validated radial feeder.

    Branches are stored in topological order (every branch after its parent);
    customer lists preserve file order. All lookup tables are built once at
    construction time.
    """

    branches: tuple[Branch, ...]
    customers: tuple[Customer, ...]
    root: str = field(init=False)
    _branch_by_id: dict[str, Branch] = field(init=False, repr=False)
    _children: dict[str, tuple[str, ...]] = field(init=False, repr=False)
    _customers_on: dict[str, tuple[Customer, ...]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._validate_and_index()

    def _validate_and_index(self) -> None:
        by_id: dict[str, Branch] = {}
        for b in self.branches:
            if b.id in by_id:
                raise ValidationError(f"duplicate branch id {b.id!r}")
            by_id[b.id] = b
        roots = [b.id for b in self.branches if b.parent is None]
        if len(roots) != 1:
            raise ValidationError(
                f"feeder must have exactly one root branch, found {len(roots)}: {roots!r}"
            )
        children: dict[str, list[str]] = {b.id: [] for b in self.branches}
        for b in self.branches:
            if b.parent is not None:
                if b.parent not in by_id:
                    raise ValidationError(
                        f"branch {b.id!r} references unknown parent {b.parent!r}"
                    )
                children[b.parent].append(b.id)
        # Parent chains must terminate at the root; a walk that revisits a
        # branch or exceeds the branch count is a cycle.
        for b in self.branches:
            seen = {b.id}
            cur = b.parent
            while cur is not None:
                if cur in seen:
                    raise ValidationError(f"parent cycle through branch {cur!r}")
                seen.add(cur)
                cur = by_id[cur].parent
        cust_ids: set[str] = set()
        cust_on: dict[str, list[Customer]] = {b.id: [] for b in self.branches}
        for c in self.customers:
            if c.id in cust_ids:
                raise ValidationError(f"duplicate customer id {c.id!r}")
            if c.id in by_id:
                raise ValidationError(
                    f"customer id {c.id!r} collides with a branch id"
                )
            cust_ids.add(c.id)
            if c.branch not in by_id:
                raise ValidationError(
                    f"customer {c.id!r} references unknown branch {c.branch!r}"
                )
            cust_on[c.branch].append(c)
        self._branch_by_id = by_id
        self._children = {k: tuple(v) for k, v in children.items()}
        self._customers_on = {k: tuple(v) for k, v in cust_on.items()}
        self.root = roots[0]
        # Re-order branches topologically so downstream array code can assume
        # parents precede children.
        order: list[Branch] = []
        stack = [self.root]
        while stack:
            bid = stack.pop()
            order.append(by_id[bid])
            stack.extend(reversed(self._children[bid]))
        if len(order) != len(self.branches):
            unreached = sorted(set(by_id) - {b.id for b in order})
            raise ValidationError(f"branches not reachable from root: {unreached!r}")
        self.branches = tuple(order)

    def branch(self, branch_id: str) -> Branch:
        try:
            return self._branch_by_id[branch_id]
        except KeyError:
            raise ValidationError(f"unknown branch id {branch_id!r}") from None

    def customer(self, customer_id: str) -> Customer:
        for c in self.customers:
            if c.id == customer_id:
                return c
        raise ValidationError(f"unknown customer id {customer_id!r}")

    def children_of(self, branch_id: str) -> tuple[str, ...]:
        self.branch(branch_id)
        return self._children[branch_id]

    def customers_on(self, branch_id: str) -> tuple[Customer, ...]:
        self.branch(branch_id)
        return self._customers_on[branch_id]

    def path_to_root(self, branch_id: str) -> tuple[str, ...]:
        """Branch ids from ``branch_id`` up to and including the root."""
        path = [branch_id]
        cur = self.branch(branch_id)
        while cur.parent is not None:
            path.append(cur.parent)
            cur = self._branch_by_id[cur.parent]
        return tuple(path)

    def descendants(self, branch_id: str) -> tuple[str, ...]:
        """Branch ids strictly below ``branch_id``, in topological order."""
        out: list[str] = []
        stack = list(self.children_of(branch_id))
        while stack:
            bid = stack.pop(0)
            out.append(bid)
            stack.extend(self._children[bid])
        return tuple(out)

    @property
    def branch_ids(self) -> tuple[str, ...]:
        return tuple(b.id for b in self.branches)

    @property
    def customer_ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.customers)


_BRANCH_KEYS = ("parent", "poles", "spans", "length_m", "p_underground")
_CUSTOMER_KEYS = ("branch", "meter")


def _parse_kv(tokens: list[str], allowed: tuple[str, ...], where: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep:
            raise FormatError(f"{where}: expected key=value, got {tok!r}")
        if key not in allowed:
            raise FormatError(f"{where}: unknown key {key!r}")
        if key in out:
            raise FormatError(f"{where}: duplicate key {key!r}")
        out[key] = value
    missing = [k for k in allowed if k not in out]
    if missing:
        raise FormatError(f"{where}: missing keys {missing!r}")
    return out


def _to_text(source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    if isinstance(data, bytes):
        return data.decode("utf-8")
    return data


def load_topology(source) -> FeederTopology:
    """Parse a feeder description.

    Args:
        source: feeder text, UTF-8 bytes, or a readable file object.

    Returns:
        A validated FeederTopology.

    Raises:
        FormatError: malformed line, unknown or missing key, bad literal.
        ValidationError: duplicate ids, dangling references, cycles,
            zero or multiple roots, out-of-range attribute values.
    """
    text = _to_text(source)
    branches: list[Branch] = []
    customers: list[Customer] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        kind = tokens[0]
        where = f"line {lineno}"
        if kind == "branch":
            if len(tokens) < 2:
                raise FormatError(f"{where}: branch record missing id")
            bid = tokens[1]
            kv = _parse_kv(tokens[2:], _BRANCH_KEYS, f"{where} (branch {bid!r})")
            parent = None if kv["parent"] == "none" else kv["parent"]
            try:
                poles = int(kv["poles"])
                spans = tuple(
                    int(s) for s in kv["spans"].split(",") if s != ""
                )
                length = float(kv["length_m"])
                p_u = float(kv["p_underground"])
            except ValueError as exc:
                raise FormatError(f"{where} (branch {bid!r}): {exc}") from None
            if poles < 0 or any(s < 1 for s in spans):
                raise ValidationError(
                    f"branch {bid!r}: poles and span conductor counts must be positive"
                )
            if length < 0:
                raise ValidationError(f"branch {bid!r}: negative length_m")
            if not 0.0 <= p_u <= 1.0:
                raise ValidationError(
                    f"branch {bid!r}: p_underground={p_u} outside [0, 1]"
                )
            branches.append(
                Branch(bid, parent, BranchPhysical(poles, spans, length, p_u))
            )
        elif kind == "customer":
            if len(tokens) < 2:
                raise FormatError(f"{where}: customer record missing id")
            cid = tokens[1]
            kv = _parse_kv(tokens[2:], _CUSTOMER_KEYS, f"{where} (customer {cid!r})")
            if kv["meter"] not in ("0", "1"):
                raise FormatError(
                    f"{where} (customer {cid!r}): meter must be 0 or 1, got {kv['meter']!r}"
                )
            customers.append(Customer(cid, kv["branch"], kv["meter"] == "1"))
        else:
            raise FormatError(f"{where}: unknown record type {kind!r}")
    if not branches:
        raise ValidationError("feeder has no branches")
    return FeederTopology(tuple(branches), tuple(customers))


def format_topology(topology: FeederTopology) -> str:
    """Serialize a feeder back to the text format (parse round-trips)."""
    buf = io.StringIO()
    for b in topology.branches:
        spans = ",".join(str(s) for s in b.physical.span_conductor_counts)
        buf.write(
            f"branch {b.id} parent={b.parent or 'none'} poles={b.physical.pole_count} "
            f"spans={spans} length_m={b.physical.length_m:g} "
            f"p_underground={b.physical.underground_probability:g}\n"
        )
    for c in topology.customers:
        buf.write(f"customer {c.id} branch={c.branch} meter={int(c.has_meter)}\n")
    return buf.getvalue()


def select_outage_locations(
    topology: FeederTopology, states: dict[str, int]
) -> tuple[str, ...]:
    """Reduce per-branch states to outage locations.

    A branch is an outage location if it is de-energized and its parent is
    energized (or it is the root). Returns ids in natural order.

    Args:
        topology: the feeder the states refer to.
        states: branch id -> 0 (energized) or 1 (de-energized); must cover
            every branch.
    """
    missing = [b for b in topology.branch_ids if b not in states]
    if missing:
        raise ValidationError(f"states missing branches: {missing!r}")
    out = []
    for b in topology.branches:
        if not states[b.id]:
            continue
        if b.parent is None or not states[b.parent]:
            out.append(b.id)
    return tuple(sorted(out, key=natural_key))
