"""Real/virtual address spaces and the live multiplex map.

A pool leases IPv4 addresses uniformly at random, without replacement, out of
a set of CIDR blocks.  The multiplex map is the bidirectional association
between real service endpoints (``rIP:port``) and their short-lived virtual
endpoints (``vIP:port``); the port is preserved across translation, only the
IP component is virtualized.  Uniqueness is keyed on the ``(vIP, port)`` pair,
so distinct hosts may legitimately carry the same virtual address on
different ports.
"""

from __future__ import annotations

import ipaddress
from bisect import bisect_right
from enum import Enum
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import AllocationError, ConfigurationError, LookupMiss

IpAddress = ipaddress.IPv4Address


class Endpoint(NamedTuple):
    """An (IPv4 address, port) pair; port 0 is used for port-less traffic."""

    ip: IpAddress
    port: int

    def __str__(self) -> str:
        return f"{self.ip}:{self.port}"


# Both sides of the map are plain endpoints; the aliases document intent.
RealEndpoint = Endpoint
VirtualEndpoint = Endpoint


def endpoint(ip: str | IpAddress, port: int) -> Endpoint:
    return Endpoint(ipaddress.IPv4Address(ip), int(port))


class Direction(Enum):
    TO_VIRTUAL = "to-virtual"
    TO_REAL = "to-real"


class AddressPool:
    """A collection of disjoint CIDR blocks with without-replacement leasing.

    Draws are uniform over the unallocated portion.  While the pool is mostly
    empty a rejection loop is cheapest; past half full we pick an ordinal rank
    among the free slots instead, which stays exact for nearly-full pools.
    """

    def __init__(self, ranges: Iterable[str | ipaddress.IPv4Network]):
        nets = []
        for r in ranges:
            net = r if isinstance(r, ipaddress.IPv4Network) else ipaddress.ip_network(str(r))
            if not isinstance(net, ipaddress.IPv4Network):
                raise ConfigurationError(f"only IPv4 ranges are supported, got {r!r}")
            nets.append(net)
        if not nets:
            raise ConfigurationError("address pool needs at least one CIDR range")
        nets.sort(key=lambda n: int(n.network_address))
        for a, b in zip(nets, nets[1:]):
            if a.overlaps(b):
                raise ConfigurationError(f"overlapping pool ranges: {a} and {b}")
        self.ranges: list[ipaddress.IPv4Network] = nets
        self.allocated: set[IpAddress] = set()
        # cumulative ordinal offsets, one per range, for ordinal <-> address mapping
        self._starts = [int(n.network_address) for n in nets]
        self._offsets = [0]
        for n in nets:
            self._offsets.append(self._offsets[-1] + n.num_addresses)

    def capacity(self) -> int:
        """Total number of addresses across all ranges."""
        return self._offsets[-1]

    def free_count(self) -> int:
        return self.capacity() - len(self.allocated)

    def __contains__(self, addr: IpAddress) -> bool:
        return any(addr in n for n in self.ranges)

    def __iter__(self) -> Iterator[IpAddress]:
        for n in self.ranges:
            yield from (ipaddress.IPv4Address(int(n.network_address) + i) for i in range(n.num_addresses))

    def overlaps(self, other: "AddressPool") -> bool:
        return any(a.overlaps(b) for a in self.ranges for b in other.ranges)

    def address_at(self, ordinal: int) -> IpAddress:
        """The ordinal-th address of the concatenated ranges."""
        if not 0 <= ordinal < self.capacity():
            raise IndexError(f"ordinal {ordinal} outside pool of size {self.capacity()}")
        i = bisect_right(self._offsets, ordinal) - 1
        return ipaddress.IPv4Address(self._starts[i] + (ordinal - self._offsets[i]))

    def ordinal_of(self, addr: IpAddress) -> int:
        for i, n in enumerate(self.ranges):
            if addr in n:
                return self._offsets[i] + (int(addr) - self._starts[i])
        raise LookupMiss(f"{addr} is not in this pool")

    def draw(self, rng: np.random.Generator) -> IpAddress:
        """Lease one address, uniform over the unallocated portion."""
        free = self.free_count()
        if free <= 0:
            raise AllocationError(f"pool exhausted ({self.capacity()} addresses all leased)")
        if len(self.allocated) * 2 < self.capacity():
            while True:
                addr = self.address_at(int(rng.integers(self.capacity())))
                if addr not in self.allocated:
                    break
        else:
            addr = self.address_at(self._nth_free(int(rng.integers(free))))
        self.allocated.add(addr)
        return addr

    def _nth_free(self, rank: int) -> int:
        # skip over leased ordinals in sorted order until rank lands on a free slot
        for taken in sorted(self.ordinal_of(a) for a in self.allocated):
            if taken <= rank:
                rank += 1
            else:
                break
        return rank

    def release(self, addr: IpAddress) -> None:
        self.allocated.discard(addr)

    def reserve(self, addr: IpAddress) -> None:
        """Mark a specific address as leased (for hand-built assignments)."""
        if addr not in self:
            raise LookupMiss(f"{addr} is not in this pool")
        if addr in self.allocated:
            raise AllocationError(f"{addr} is already leased")
        self.allocated.add(addr)


class MultiplexMap:
    """Bidirectional real<->virtual endpoint association with an epoch counter.

    ``forward`` and ``reverse`` are exact inverses at all times; assigning a
    real endpoint twice, or reusing a (vIP, port) pair, is rejected.
    """

    def __init__(self) -> None:
        self.forward: dict[RealEndpoint, VirtualEndpoint] = {}
        self.reverse: dict[VirtualEndpoint, RealEndpoint] = {}
        self.epoch: int = 0
        self._vip_owners: dict[IpAddress, set[RealEndpoint]] = {}

    def __len__(self) -> int:
        return len(self.forward)

    def assign(self, real: RealEndpoint, virtual: VirtualEndpoint) -> None:
        if real in self.forward:
            raise AllocationError(f"{real} already has a virtual endpoint")
        if virtual in self.reverse:
            raise AllocationError(f"{virtual} is already bound to {self.reverse[virtual]}")
        self.forward[real] = virtual
        self.reverse[virtual] = real
        self._vip_owners.setdefault(virtual.ip, set()).add(real)

    def unassign(self, real: RealEndpoint) -> VirtualEndpoint:
        try:
            virtual = self.forward.pop(real)
        except KeyError:
            raise LookupMiss(f"{real} is not mapped") from None
        del self.reverse[virtual]
        owners = self._vip_owners[virtual.ip]
        owners.discard(real)
        if not owners:
            del self._vip_owners[virtual.ip]
        return virtual

    def translate(self, ep: Endpoint, direction: Direction) -> Endpoint:
        table = self.forward if direction is Direction.TO_VIRTUAL else self.reverse
        try:
            return table[ep]
        except KeyError:
            raise LookupMiss(f"{ep} has no {direction.value} mapping") from None

    def vip_owner(self, ip: IpAddress) -> IpAddress | None:
        """The unique real IP behind a bare virtual address, if unambiguous."""
        owners = {real.ip for real in self._vip_owners.get(ip, ())}
        if len(owners) == 1:
            return next(iter(owners))
        return None

    def addresses_in_use(self) -> set[IpAddress]:
        return set(self._vip_owners)

    def remap_all(self, pool: AddressPool, rng: np.random.Generator) -> None:
        """Release every current vIP back to the pool, then redraw all of them.

        The release happens first for the whole map, so a service may receive
        its previous address again by chance.  Fails before mutating anything
        if the pool cannot cover the map.
        """
        in_use = self.addresses_in_use()
        effective_free = pool.capacity() - len(pool.allocated - in_use)
        if len(self.forward) > effective_free:
            raise AllocationError(
                f"pool capacity {pool.capacity()} cannot cover {len(self.forward)} services"
            )
        for addr in in_use:
            pool.release(addr)
        reals = sorted(self.forward)
        self.forward.clear()
        self.reverse.clear()
        self._vip_owners.clear()
        for real in reals:
            self.assign(real, VirtualEndpoint(pool.draw(rng), real.port))
        self.epoch += 1

    def items(self):
        return self.forward.items()
