"""The multiplexing controller.

Owns the real->virtual map, reacts to table misses (packet-in), intercepts
DNS answers so clients only ever learn virtual addresses, authorizes direct
real-IP access, installs rewrite/forward flows along routes, and runs the
periodic multiplexing event that remaps every service and replaces all flows.

Flow layout invariants:
  * every host's edge switch carries one de-virtualizing "baseline" entry per
    service (wildcard source), giving n*m entries per epoch on an edge switch
    that serves all hosts;
  * connection flows are installed reactively per 5-tuple and only where the
    baseline cannot cover them, so no two entries can match the same packet;
  * source addresses are virtualized at the first switch only when the route
    crosses a switch-to-switch link; edge hops may carry real addresses.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .addressing import (
    AddressPool,
    Direction,
    Endpoint,
    IpAddress,
    MultiplexMap,
    RealEndpoint,
    VirtualEndpoint,
)
from .dataplane import FlowEntry, FlowTable, Packet, PacketKind, Rewrite
from .errors import ConfigurationError, InstallConflict, ResolutionError
from .topology import Topology

TraceFn = Callable[..., None]


@dataclass(frozen=True)
class HostRecord:
    host_id: str
    rip: IpAddress
    services: tuple[int, ...]
    domain_name: str = ""

    def __post_init__(self) -> None:
        if not self.services:
            raise ConfigurationError(f"{self.host_id} must run at least one service")
        if len(set(self.services)) != len(self.services):
            raise ConfigurationError(f"{self.host_id} lists duplicate service ports")

    @property
    def default_port(self) -> int:
        return min(self.services)


@dataclass
class AuthzPolicy:
    """Pairs of (source host, destination host) allowed to address real IPs."""

    allowed: set[tuple[str, str]] = field(default_factory=set)

    def allows(self, src_host: str | None, dst_host: str) -> bool:
        return src_host is not None and (src_host, dst_host) in self.allowed


@dataclass(frozen=True)
class MultiplexSchedule:
    interval: float  # simulated seconds between remaps

    def __post_init__(self) -> None:
        if not self.interval > 0:
            raise ConfigurationError("multiplex interval must be positive")

    @property
    def rate(self) -> float:
        return 1.0 / self.interval


# --- controller decisions handed back to the event loop ---------------------

@dataclass(frozen=True)
class PacketOut:
    switch: str
    packet: Packet
    out_port: int


@dataclass(frozen=True)
class Resubmit:
    """Re-run table lookup for the packet at the switch (after installs)."""

    switch: str
    packet: Packet


@dataclass(frozen=True)
class Drop:
    packet: Packet
    reason: str


Action = PacketOut | Resubmit | Drop


def _noop_trace(*_args, **_kw) -> None:
    pass


class Controller:
    def __init__(
        self,
        topology: Topology,
        hosts: list[HostRecord],
        virtual_pool: AddressPool,
        authz: AuthzPolicy,
        schedule: MultiplexSchedule,
        rng: np.random.Generator,
        dns_node: str | None = None,
        trace: TraceFn | None = None,
    ):
        self.topology = topology
        self.hosts: dict[str, HostRecord] = {}
        self.rip_index: dict[IpAddress, HostRecord] = {}
        self.domains: dict[str, HostRecord] = {}
        for h in hosts:
            if h.host_id in self.hosts:
                raise ConfigurationError(f"duplicate host id {h.host_id}")
            if h.rip in self.rip_index:
                raise ConfigurationError(f"real address {h.rip} assigned twice")
            if h.rip in virtual_pool:
                raise ConfigurationError(f"{h.host_id}: real address {h.rip} lies in the virtual pool")
            if h.host_id not in topology.attachments:
                raise ConfigurationError(f"{h.host_id} is not attached to any switch")
            self.hosts[h.host_id] = h
            self.rip_index[h.rip] = h
            if h.domain_name:
                if h.domain_name in self.domains:
                    raise ConfigurationError(f"duplicate domain {h.domain_name}")
                self.domains[h.domain_name] = h
        self.pool = virtual_pool
        self.authz = authz
        self.schedule = schedule
        self.rng = rng
        self.dns_node = dns_node
        self.map = MultiplexMap()
        self.tables: dict[str, FlowTable] = {s: FlowTable(s) for s in topology.switches}
        self.assignment_history: list[dict[tuple[str, int], VirtualEndpoint]] = []
        self._log = trace or _noop_trace

    # --- setup and the periodic multiplexing event --------------------------

    @property
    def epoch(self) -> int:
        return self.map.epoch

    def initial_assign(self) -> None:
        """Epoch-0 assignment: draw a vIP per service and install baselines."""
        for host in self._hosts_sorted():
            for port in sorted(host.services):
                self.map.assign(RealEndpoint(host.rip, port), VirtualEndpoint(self.pool.draw(self.rng), port))
        self._record_epoch()
        self._install_baselines()

    def multiplex_event(self) -> None:
        """Remap every service, evict all prior-epoch flows, reinstall baselines."""
        self.map.remap_all(self.pool, self.rng)
        self._record_epoch()
        for table in self.tables.values():
            removed = table.evict_epoch(self.map.epoch)
            if removed:
                self._log("evict", switch=table.switch_id, removed=removed, epoch=self.map.epoch)
        self._install_baselines()

    def _record_epoch(self) -> None:
        snapshot: dict[tuple[str, int], VirtualEndpoint] = {}
        for host in self._hosts_sorted():
            for port in sorted(host.services):
                vep = self.map.forward[RealEndpoint(host.rip, port)]
                snapshot[(host.host_id, port)] = vep
                self._log("remap", epoch=self.map.epoch, host=host.host_id,
                          port=port, vip=str(vep.ip))
        self.assignment_history.append(snapshot)

    def vip_at_epoch(self, host_id: str, port: int, epoch: int) -> VirtualEndpoint:
        return self.assignment_history[epoch][(host_id, port)]

    def _hosts_sorted(self) -> list[HostRecord]:
        return [self.hosts[h] for h in sorted(self.hosts)]

    def _install_baselines(self) -> None:
        for host in self._hosts_sorted():
            sw = self.topology.edge_switch_of(host.host_id)
            out_port = self.topology.port_toward(sw, host.host_id)
            for port in sorted(host.services):
                vep = self.map.forward[RealEndpoint(host.rip, port)]
                entry = FlowEntry(
                    match_dst_ip=vep.ip,
                    match_dst_port=port,
                    match_src_ip=None,
                    forward_port=out_port,
                    rewrite_dst=Rewrite(host.rip),
                    epoch_installed=self.map.epoch,
                )
                self.tables[sw].install(entry)
                self._log("install", switch=sw, dst=str(vep), kind="baseline", epoch=self.map.epoch)

    # --- name resolution -----------------------------------------------------

    def resolve(self, domain_name: str, port: int | None = None) -> VirtualEndpoint:
        """Current-epoch virtual endpoint for a domain's service.

        Models the composed result of a DNS answer plus controller
        interception; with zero TTL every connection re-resolves.
        """
        host = self.domains.get(domain_name)
        if host is None:
            raise ResolutionError(f"unknown domain {domain_name!r}")
        return self._service_vip(host, port if port is not None else host.default_port)

    def _service_vip(self, host: HostRecord, port: int) -> VirtualEndpoint:
        real = RealEndpoint(host.rip, port)
        if real not in self.map.forward:
            raise ResolutionError(f"{host.host_id} runs no service on port {port}")
        return self.map.forward[real]

    # --- packet-in handling ---------------------------------------------------

    def on_packet_in(self, packet: Packet, at_switch: str) -> list[Action]:
        self._log("packet_in", switch=at_switch, src=str(packet.src), dst=str(packet.dst),
                  kind=packet.kind.value, tag=packet.payload_tag)
        if packet.kind is PacketKind.DNS_RESPONSE:
            return self._handle_dns_response(packet, at_switch)

        dst_ip = packet.dst.ip
        # direct query (or anything else) addressed to the DNS node
        if self.dns_node is not None and dst_ip == self.topology.address_of(self.dns_node):
            return self._route_and_resubmit(packet, at_switch, self.dns_node, devirt=None)

        dst_host = self.rip_index.get(dst_ip)
        if dst_host is not None:
            return self._handle_real_ip(packet, at_switch, dst_host)

        # exact (vIP, port) pair currently mapped
        real = self.map.reverse.get(packet.dst)
        if real is not None:
            host = self.rip_index[real.ip]
            return self._route_and_resubmit(packet, at_switch, host.host_id, devirt=None,
                                            baseline_covers=True)

        # bare virtual address: allowed for port-less probes and return traffic,
        # but connection probes must name the exact advertised (vIP, port) pair
        owner_rip = self.map.vip_owner(dst_ip)
        if owner_rip is not None and packet.kind is not PacketKind.SYN_PROBE:
            host = self.rip_index[owner_rip]
            return self._route_and_resubmit(packet, at_switch, host.host_id,
                                            devirt=Rewrite(owner_rip))

        # replies and probes addressed to an attached non-host node (scanner, user)
        node = self.topology.node_by_address(dst_ip)
        if node is not None and node not in self.hosts:
            return self._route_and_resubmit(packet, at_switch, node, devirt=None)

        reason = "no-current-mapping" if dst_ip in self.pool else "unknown-destination"
        self._log("drop", switch=at_switch, reason=reason, dst=str(packet.dst),
                  tag=packet.payload_tag)
        return [Drop(packet, reason)]

    def _handle_real_ip(self, packet: Packet, at_switch: str, dst_host: HostRecord) -> list[Action]:
        src_host = self.rip_index.get(packet.src.ip)
        src_id = src_host.host_id if src_host is not None else None
        if not self.authz.allows(src_id, dst_host.host_id):
            self._log("drop", switch=at_switch, reason="unauthorized-real-ip",
                      src=str(packet.src), dst=str(packet.dst), tag=packet.payload_tag)
            return [Drop(packet, "unauthorized-real-ip")]
        try:
            vep = self._service_vip(dst_host, packet.dst.port)
        except ResolutionError:
            self._log("drop", switch=at_switch, reason="no-service-on-port",
                      dst=str(packet.dst), tag=packet.payload_tag)
            return [Drop(packet, "no-service-on-port")]
        self._log("authorized_real_ip", switch=at_switch, src_host=src_id,
                  dst_host=dst_host.host_id, substituted=str(vep))
        return self._route_and_resubmit(packet, at_switch, dst_host.host_id,
                                        devirt=None, substitute_dst=vep, baseline_covers=True)

    def _handle_dns_response(self, packet: Packet, at_switch: str) -> list[Action]:
        pkt = packet
        answer = pkt.dns_answer
        if answer is not None and answer.ip in self.rip_index:
            host = self.rip_index[answer.ip]
            port = pkt.dns_qport if pkt.dns_qport is not None else host.default_port
            try:
                vep = self._service_vip(host, port)
            except ResolutionError:
                self._log("drop", switch=at_switch, reason="no-service-on-port",
                          dst=str(pkt.dst), tag=pkt.payload_tag)
                return [Drop(pkt, "no-service-on-port")]
            pkt = replace(pkt, dns_answer=vep)
            self._log("dns_intercept", switch=at_switch, qname=pkt.dns_qname or "",
                      host=host.host_id, answer=str(vep))

        # responses are forwarded hop by hop without installing flows, so the
        # next answer is intercepted again under whatever epoch it meets
        dst_node = self._node_for_virtual_or_attached(pkt.dst.ip)
        if dst_node is None:
            self._log("drop", switch=at_switch, reason="unknown-destination",
                      dst=str(pkt.dst), tag=pkt.payload_tag)
            return [Drop(pkt, "unknown-destination")]
        dst_switch = self.topology.edge_switch_of(dst_node)
        if at_switch == dst_switch:
            owner = self.map.vip_owner(pkt.dst.ip)
            if owner is not None:
                pkt = replace(pkt, dst=Endpoint(owner, pkt.dst.port))
            out = self.topology.port_toward(at_switch, dst_node)
        else:
            out = self.topology.port_toward(
                at_switch, self.topology.path_switches(at_switch, dst_switch)[1]
            )
        self._log("packet_out", switch=at_switch, dst=str(pkt.dst), kind=pkt.kind.value)
        return [PacketOut(at_switch, pkt, out)]

    def _node_for_virtual_or_attached(self, ip: IpAddress) -> str | None:
        owner = self.map.vip_owner(ip)
        if owner is not None:
            return self.rip_index[owner].host_id
        node = self.topology.node_by_address(ip)
        if node is not None and node not in self.hosts:
            return node
        return None

    # --- route installation ----------------------------------------------------

    def _route_and_resubmit(
        self,
        packet: Packet,
        at_switch: str,
        dst_node: str,
        devirt: Rewrite | None,
        substitute_dst: VirtualEndpoint | None = None,
        baseline_covers: bool = False,
    ) -> list[Action]:
        dst_switch = self.topology.edge_switch_of(dst_node)
        path = self.topology.path_switches(at_switch, dst_switch)
        multi = len(path) > 1

        src_host = self.rip_index.get(packet.src.ip)
        src_virt = self._source_rewrite(src_host, packet.src.port) if (multi and src_host) else None
        dst_rewrite = Rewrite(substitute_dst.ip) if (multi and substitute_dst is not None) else None

        # header addresses as seen downstream of the first switch
        down_src = src_virt.ip if src_virt is not None else packet.src.ip
        down_dst = substitute_dst.ip if dst_rewrite is not None else packet.dst.ip

        for i, sw in enumerate(path):
            last = i == len(path) - 1
            if last:
                out_port = self.topology.port_toward(sw, dst_node)
            else:
                out_port = self.topology.port_toward(sw, path[i + 1])
            if i == 0:
                entry = FlowEntry(
                    match_dst_ip=packet.dst.ip,
                    match_dst_port=packet.dst.port,
                    match_src_ip=packet.src.ip,
                    forward_port=out_port,
                    rewrite_dst=self._first_hop_dst_rewrite(dst_rewrite, devirt, last, substitute_dst),
                    rewrite_src=src_virt,
                    epoch_installed=self.map.epoch,
                )
                if last and baseline_covers and entry.rewrite_dst is None and src_virt is None \
                        and substitute_dst is None:
                    # exact pair on its own edge switch: the baseline entry matches
                    continue
                self._install(sw, entry)
            elif not last:
                self._install(sw, FlowEntry(
                    match_dst_ip=down_dst,
                    match_dst_port=packet.dst.port,
                    match_src_ip=down_src,
                    forward_port=out_port,
                    epoch_installed=self.map.epoch,
                ))
            else:
                if baseline_covers:
                    continue  # the per-service baseline de-virtualizes and delivers
                self._install(sw, FlowEntry(
                    match_dst_ip=down_dst,
                    match_dst_port=packet.dst.port,
                    match_src_ip=down_src,
                    forward_port=out_port,
                    rewrite_dst=devirt,
                    epoch_installed=self.map.epoch,
                ))
        self._log("packet_out", switch=at_switch, dst=str(packet.dst), kind=packet.kind.value)
        return [Resubmit(at_switch, packet)]

    def _first_hop_dst_rewrite(
        self,
        dst_rewrite: Rewrite | None,
        devirt: Rewrite | None,
        also_last: bool,
        substitute_dst: VirtualEndpoint | None,
    ) -> Rewrite | None:
        if dst_rewrite is not None:
            return dst_rewrite  # real->virtual substitution for authorized flows
        if also_last:
            if devirt is not None:
                return devirt  # single-switch bare-vIP delivery
            if substitute_dst is not None:
                return None  # same-switch real-IP flow: both hops are edge hops
        return None if not also_last else devirt

    def _source_rewrite(self, host: HostRecord, src_port: int) -> Rewrite:
        """Virtual source for an outgoing packet: port-matched service vIP when
        the source port is a service, else the lowest-port service's vIP."""
        real = RealEndpoint(host.rip, src_port)
        vep = self.map.forward.get(real)
        if vep is None:
            vep = self.map.forward[RealEndpoint(host.rip, host.default_port)]
        return Rewrite(vep.ip)

    def _install(self, switch: str, entry: FlowEntry) -> None:
        table = self.tables[switch]
        existing = table.find(entry.match_dst_ip, entry.match_dst_port, entry.match_src_ip)
        if existing is not None:
            if (existing.forward_port, existing.rewrite_dst, existing.rewrite_src) == (
                entry.forward_port, entry.rewrite_dst, entry.rewrite_src,
            ):
                return  # identical flow already present
            raise InstallConflict(f"{switch}: conflicting action for an identical match")
        table.install(entry)
        self._log("install", switch=switch, dst=f"{entry.match_dst_ip}:{entry.match_dst_port}",
                  kind="flow", epoch=self.map.epoch)
