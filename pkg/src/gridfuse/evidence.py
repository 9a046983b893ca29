"""Observed evidence of one outage episode and its text format.

File format, one record per line, ``#`` comments allowed:

    human <customer-id> <0|1>
    meter <customer-id> <0|1>
    wind <branch-id> <m/s>
    veg <branch-id> <species-const> <diameter-cm>

Every customer always carries a human-evidence value: a missing ``human``
line means no report arrived within the window (value 0). Likewise a missing
``meter`` line for a metered customer means the last gasp was not received.
``meter`` lines are only legal for metered customers.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

from .errors import FormatError, ValidationError
from .factors import Vegetation
from .feeder import FeederTopology, natural_key

__all__ = ["EvidenceSet", "load_evidence", "format_evidence"]


@dataclass(frozen=True)
class EvidenceSet:
    """All observed evidence values for one inference episode.

    Attributes:
        human: customer id -> 0/1 report indicator; covers every customer.
        meter: metered customer id -> 0/1 last-gasp indicator.
        wind: branch id -> wind speed in m/s (missing branches read as 0).
        vegetation: branch id -> vegetation record (missing means none).
        elapsed_window: minutes elapsed since the suspected outage, the
            delta-T actually used when evaluating the report factor.
    """

    human: dict = field(default_factory=dict)
    meter: dict = field(default_factory=dict)
    wind: dict = field(default_factory=dict)
    vegetation: dict = field(default_factory=dict)
    elapsed_window: float = 0.0

    def validate_against(self, topology: FeederTopology, metered: frozenset) -> None:
        """Check id references; raises ValidationError naming the offender."""
        cust = set(topology.customer_ids)
        branch = set(topology.branch_ids)
        for cid in self.human:
            if cid not in cust:
                raise ValidationError(f"human evidence for unknown customer {cid!r}")
        for cid in self.meter:
            if cid not in cust:
                raise ValidationError(f"meter evidence for unknown customer {cid!r}")
            if cid not in metered:
                raise ValidationError(f"meter evidence for unmetered customer {cid!r}")
        for bid in list(self.wind) + list(self.vegetation):
            if bid not in branch:
                raise ValidationError(f"evidence for unknown branch {bid!r}")


def _binary(token: str, where: str) -> int:
    if token not in ("0", "1"):
        raise FormatError(f"{where}: expected 0 or 1, got {token!r}")
    return int(token)


def load_evidence(source, elapsed_window: float) -> EvidenceSet:
    """Parse an evidence file. Reference checks happen against the network
    at build time, not here; this only enforces the line grammar."""
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    human: dict = {}
    meter: dict = {}
    wind: dict = {}
    veg: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        kind = tokens[0]
        where = f"line {lineno}"
        if kind == "human":
            if len(tokens) != 3:
                raise FormatError(f"{where}: human takes <customer-id> <0|1>")
            if tokens[1] in human:
                raise FormatError(f"{where}: duplicate human evidence for {tokens[1]!r}")
            human[tokens[1]] = _binary(tokens[2], where)
        elif kind == "meter":
            if len(tokens) != 3:
                raise FormatError(f"{where}: meter takes <customer-id> <0|1>")
            if tokens[1] in meter:
                raise FormatError(f"{where}: duplicate meter evidence for {tokens[1]!r}")
            meter[tokens[1]] = _binary(tokens[2], where)
        elif kind == "wind":
            if len(tokens) != 3:
                raise FormatError(f"{where}: wind takes <branch-id> <m/s>")
            try:
                speed = float(tokens[2])
            except ValueError:
                raise FormatError(f"{where}: bad wind speed {tokens[2]!r}") from None
            if speed < 0:
                raise ValidationError(f"{where}: negative wind speed")
            wind[tokens[1]] = speed
        elif kind == "veg":
            if len(tokens) != 4:
                raise FormatError(
                    f"{where}: veg takes <branch-id> <species-const> <diameter-cm>"
                )
            try:
                veg[tokens[1]] = Vegetation(float(tokens[2]), float(tokens[3]))
            except ValueError:
                raise FormatError(f"{where}: bad veg numbers") from None
        else:
            raise FormatError(f"{where}: unknown record type {kind!r}")
    return EvidenceSet(
        human=human, meter=meter, wind=wind, vegetation=veg,
        elapsed_window=elapsed_window,
    )


def format_evidence(ev: EvidenceSet) -> str:
    """Serialize to the evidence format; ids in natural order, zeros for
    human/meter written explicitly so dumps are self-contained."""
    buf = io.StringIO()
    for cid in sorted(ev.human, key=natural_key):
        buf.write(f"human {cid} {ev.human[cid]}\n")
    for cid in sorted(ev.meter, key=natural_key):
        buf.write(f"meter {cid} {ev.meter[cid]}\n")
    for bid in sorted(ev.wind, key=natural_key):
        buf.write(f"wind {bid} {ev.wind[bid]:g}\n")
    for bid in sorted(ev.vegetation, key=natural_key):
        v = ev.vegetation[bid]
        buf.write(f"veg {bid} {v.species_constant:g} {v.diameter_cm:g}\n")
    return buf.getvalue()
