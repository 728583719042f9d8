"""Network topology: switches, inter-switch links, and node attachments.

Ports are plain integers assigned deterministically per switch (sorted switch
neighbors first, then sorted attached node ids), so a topology built from the
same description always routes identically.  Next-hop routing is shortest
path by hop count with lexicographic tie-breaking.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .addressing import IpAddress
from .errors import ConfigurationError


@dataclass(frozen=True)
class Attachment:
    node_id: str
    switch: str
    address: IpAddress


@dataclass
class Topology:
    switches: list[str]
    switch_links: list[tuple[str, str]] = field(default_factory=list)
    attachments: dict[str, Attachment] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.switches:
            raise ConfigurationError("topology needs at least one switch")
        if len(set(self.switches)) != len(self.switches):
            raise ConfigurationError("duplicate switch ids")
        known = set(self.switches)
        for a, b in self.switch_links:
            if a not in known or b not in known:
                raise ConfigurationError(f"link {a}-{b} references an unknown switch")
            if a == b:
                raise ConfigurationError(f"self-link on {a}")
        for att in self.attachments.values():
            if att.switch not in known:
                raise ConfigurationError(f"{att.node_id} attached to unknown switch {att.switch}")
        addrs = [att.address for att in self.attachments.values()]
        if len(set(addrs)) != len(addrs):
            raise ConfigurationError("node addresses must be unique")
        self._build_ports()
        self._check_connected()
        self._routes = self._all_pairs_next_hop()

    def _build_ports(self) -> None:
        neighbors: dict[str, list[str]] = {s: [] for s in self.switches}
        for a, b in self.switch_links:
            neighbors[a].append(b)
            neighbors[b].append(a)
        attached: dict[str, list[str]] = {s: [] for s in self.switches}
        for att in self.attachments.values():
            attached[att.switch].append(att.node_id)
        # port p on switch s leads to peer self._port_peer[s][p]
        self._port_peer: dict[str, dict[int, str]] = {}
        self._peer_port: dict[str, dict[str, int]] = {}
        for s in self.switches:
            peers = sorted(set(neighbors[s])) + sorted(attached[s])
            self._port_peer[s] = {i + 1: peer for i, peer in enumerate(peers)}
            self._peer_port[s] = {peer: i + 1 for i, peer in enumerate(peers)}

    def _check_connected(self) -> None:
        seen = {self.switches[0]}
        frontier = deque(seen)
        adj: dict[str, set[str]] = {s: set() for s in self.switches}
        for a, b in self.switch_links:
            adj[a].add(b)
            adj[b].add(a)
        while frontier:
            cur = frontier.popleft()
            for nxt in adj[cur]:
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        if seen != set(self.switches):
            raise ConfigurationError("switch graph is not connected")

    def _all_pairs_next_hop(self) -> dict[str, dict[str, str]]:
        adj: dict[str, list[str]] = {s: [] for s in self.switches}
        for a, b in self.switch_links:
            adj[a].append(b)
            adj[b].append(a)
        for s in adj:
            adj[s].sort()
        routes: dict[str, dict[str, str]] = {}
        for origin in self.switches:
            prev: dict[str, str] = {origin: origin}
            queue = deque([origin])
            while queue:
                cur = queue.popleft()
                for nxt in adj[cur]:
                    if nxt not in prev:
                        prev[nxt] = cur
                        queue.append(nxt)
            table: dict[str, str] = {}
            for dest in self.switches:
                if dest == origin or dest not in prev:
                    continue
                step = dest
                while prev[step] != origin:
                    step = prev[step]
                table[dest] = step
            routes[origin] = table
        return routes

    # --- queries -----------------------------------------------------------

    def peer_on_port(self, switch: str, port: int) -> str:
        return self._port_peer[switch][port]

    def port_toward(self, switch: str, peer: str) -> int:
        try:
            return self._peer_port[switch][peer]
        except KeyError:
            raise ConfigurationError(f"{switch} has no port toward {peer}") from None

    def edge_switch_of(self, node_id: str) -> str:
        try:
            return self.attachments[node_id].switch
        except KeyError:
            raise ConfigurationError(f"unknown node {node_id}") from None

    def node_by_address(self, address: IpAddress) -> str | None:
        for att in self.attachments.values():
            if att.address == address:
                return att.node_id
        return None

    def address_of(self, node_id: str) -> IpAddress:
        return self.attachments[node_id].address

    def path_switches(self, src_switch: str, dst_switch: str) -> list[str]:
        """All switches on the route from src to dst, inclusive."""
        path = [src_switch]
        cur = src_switch
        while cur != dst_switch:
            cur = self._routes[cur][dst_switch]
            path.append(cur)
        return path
