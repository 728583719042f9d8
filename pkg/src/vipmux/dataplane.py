"""Simulated SDN switches: exact-match flow tables with rewrite-and-forward.

Entries match on (src IP, dst IP, dst port) where the source IP and the port
may be wildcards.  Installation rejects any entry that could match the same
concrete triple as an existing one, so lookup never needs priorities.  A miss
is a normal outcome and is handed to the controller as a packet-in.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from .addressing import Endpoint, IpAddress
from .errors import InstallConflict


class PacketKind(Enum):
    DNS_QUERY = "dns-query"
    DNS_RESPONSE = "dns-response"
    ICMP_PROBE = "icmp-probe"
    SYN_PROBE = "syn-probe"
    DATA = "data"


@dataclass(frozen=True)
class Packet:
    """A simulated datagram; rewrites produce new packets, never mutate."""

    src: Endpoint
    dst: Endpoint
    kind: PacketKind
    payload_tag: str = ""
    hop_log: tuple[tuple[str, str], ...] = ()
    uid: int = 0
    dns_qname: str | None = None
    dns_qport: int | None = None
    dns_answer: Endpoint | None = None

    def with_hop(self, switch_id: str, action: str) -> "Packet":
        return replace(self, hop_log=self.hop_log + ((switch_id, action),))


@dataclass(frozen=True)
class Rewrite:
    """Replace the IP of one endpoint; ``port=None`` preserves the packet's port.

    The source port is not part of the match, so source rewrites must be
    port-preserving to stay correct across connections sharing a flow entry.
    """

    ip: IpAddress
    port: int | None = None

    def applied_to(self, ep: Endpoint) -> Endpoint:
        return Endpoint(self.ip, ep.port if self.port is None else self.port)

    def __str__(self) -> str:
        return f"{self.ip}:{'keep' if self.port is None else self.port}"


@dataclass(frozen=True)
class FlowEntry:
    match_dst_ip: IpAddress
    match_dst_port: int | None  # None = wildcard
    match_src_ip: IpAddress | None  # None = wildcard
    forward_port: int
    rewrite_dst: Rewrite | None = None
    rewrite_src: Rewrite | None = None
    epoch_installed: int = 0

    def matches(self, packet: Packet) -> bool:
        if packet.dst.ip != self.match_dst_ip:
            return False
        if self.match_dst_port is not None and packet.dst.port != self.match_dst_port:
            return False
        if self.match_src_ip is not None and packet.src.ip != self.match_src_ip:
            return False
        return True

    def intersects(self, other: "FlowEntry") -> bool:
        """True if some concrete (src, dst, port) triple matches both entries."""
        if self.match_dst_ip != other.match_dst_ip:
            return False
        ports_meet = (
            self.match_dst_port is None
            or other.match_dst_port is None
            or self.match_dst_port == other.match_dst_port
        )
        srcs_meet = (
            self.match_src_ip is None
            or other.match_src_ip is None
            or self.match_src_ip == other.match_src_ip
        )
        return ports_meet and srcs_meet

    def action_text(self) -> str:
        parts = [f"forward:{self.forward_port}"]
        if self.rewrite_dst is not None:
            parts.append(f"set_dst={self.rewrite_dst}")
        if self.rewrite_src is not None:
            parts.append(f"set_src={self.rewrite_src}")
        return " ".join(parts)

    def apply(self, packet: Packet, switch_id: str) -> Packet:
        """Rewrites plus a hop-log append; untouched fields carry over."""
        out = packet
        if self.rewrite_dst is not None:
            out = replace(out, dst=self.rewrite_dst.applied_to(out.dst))
        if self.rewrite_src is not None:
            out = replace(out, src=self.rewrite_src.applied_to(out.src))
        return out.with_hop(switch_id, self.action_text())


@dataclass
class FlowTable:
    switch_id: str
    entries: list[FlowEntry] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.entries)

    def match(self, packet: Packet) -> FlowEntry | None:
        for entry in self.entries:
            if entry.matches(packet):
                return entry
        return None

    def find(self, dst_ip: IpAddress, dst_port: int | None, src_ip: IpAddress | None) -> FlowEntry | None:
        for entry in self.entries:
            if (entry.match_dst_ip, entry.match_dst_port, entry.match_src_ip) == (dst_ip, dst_port, src_ip):
                return entry
        return None

    def install(self, entry: FlowEntry) -> None:
        for existing in self.entries:
            if existing.intersects(entry):
                raise InstallConflict(
                    f"{self.switch_id}: entry for dst {entry.match_dst_ip}:"
                    f"{entry.match_dst_port} overlaps an installed entry"
                )
        self.entries.append(entry)

    def evict_epoch(self, older_than: int) -> int:
        """Drop every entry installed before the given epoch; returns count removed."""
        kept = [e for e in self.entries if e.epoch_installed >= older_than]
        removed = len(self.entries) - len(kept)
        self.entries = kept
        return removed

    def count_epoch(self, epoch: int) -> int:
        return sum(1 for e in self.entries if e.epoch_installed == epoch)

    def stale_count(self, current_epoch: int) -> int:
        return sum(1 for e in self.entries if e.epoch_installed < current_epoch)

    def dump(self) -> str:
        """Line-oriented table dump: src_ip, dst_ip, dst_port, action columns."""
        lines = [f"switch {self.switch_id} ({self.size} entries)"]
        lines.append("src_ip          dst_ip          dst_port  action")
        for e in self.entries:
            src = "*" if e.match_src_ip is None else str(e.match_src_ip)
            port = "*" if e.match_dst_port is None else str(e.match_dst_port)
            lines.append(f"{src:<15} {e.match_dst_ip!s:<15} {port:<9} {e.action_text()}")
        return "\n".join(lines)
