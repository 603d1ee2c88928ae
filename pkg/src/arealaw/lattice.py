"""Finite hypercubic lattices with open boundaries, regions and cuts.

Sites are numbered row-major: in 2D the site at coordinate ``(x, y)`` of
an ``Lx x Ly`` lattice has index ``x * Ly + y``.  Distances are graph
distances on the nearest-neighbour graph, i.e. Manhattan distances.

The boundary of a region is the set of crossing *edges*, and the distance
of a site to the boundary is its distance to the nearest endpoint of a
crossing edge.  With this convention a single cut of a chain has
``|dA| = 1`` and the inner and outer collars are mirror images.
"""

from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class Lattice:
    """Open-boundary lattice with the given number of sites per axis."""

    extents: tuple

    def __post_init__(self):
        ext = tuple(int(e) for e in self.extents)
        if len(ext) not in (1, 2):
            raise DomainError(f"only d = 1 or 2 is supported, got d = {len(ext)}")
        if any(e < 1 for e in ext):
            raise DomainError(f"extents must be positive, got {ext}")
        object.__setattr__(self, "extents", ext)

    @classmethod
    def chain(cls, length):
        return cls((length,))

    @classmethod
    def grid(cls, lx, ly):
        return cls((lx, ly))

    @property
    def dimension(self):
        return len(self.extents)

    @property
    def n_sites(self):
        return int(np.prod(self.extents))

    def __len__(self):
        return self.n_sites

    @cached_property
    def coordinates(self):
        return np.array(list(product(*(range(e) for e in self.extents))), dtype=np.int64)

    def coord(self, u):
        self._check_site(u)
        return tuple(int(c) for c in self.coordinates[u])

    def index(self, coord):
        coord = tuple(int(c) for c in coord)
        if len(coord) != self.dimension or any(
            not 0 <= c < e for c, e in zip(coord, self.extents)
        ):
            raise DomainError(f"coordinate {coord} outside lattice {self.extents}")
        return int(np.ravel_multi_index(coord, self.extents))

    @cached_property
    def distances(self):
        """All-pairs graph distance matrix."""
        c = self.coordinates
        d = np.abs(c[:, None, :] - c[None, :, :]).sum(axis=-1)
        d.setflags(write=False)
        return d

    def distance(self, u, v):
        self._check_site(u)
        self._check_site(v)
        return int(self.distances[u, v])

    @cached_property
    def edges(self):
        """Nearest-neighbour edges ``(u, v)`` with ``u < v``."""
        d = self.distances
        us, vs = np.nonzero(np.triu(d == 1))
        return tuple((int(u), int(v)) for u, v in zip(us, vs))

    @property
    def diameter(self):
        return int(self.distances.max())

    def _check_site(self, u):
        if not (isinstance(u, (int, np.integer)) and 0 <= u < self.n_sites):
            raise DomainError(f"site {u!r} outside lattice of {self.n_sites} sites")

    # -- region constructors ------------------------------------------------

    def region(self, sites):
        return Region(self, sites)

    @property
    def all_sites(self):
        return Region(self, range(self.n_sites))

    def ball(self, u, r):
        """Sites within graph distance ``r`` of ``u`` (clipped at the edges)."""
        self._check_site(u)
        if int(r) != r or r < 0:
            raise DomainError(f"radius must be a non-negative integer, got {r!r}")
        return Region(self, np.nonzero(self.distances[u] <= r)[0])

    def interval(self, start, stop):
        """Contiguous chain segment ``start..stop`` inclusive (1D only)."""
        if self.dimension != 1:
            raise DomainError("interval() needs a 1D lattice")
        return Region(self, range(start, stop + 1))

    def rectangle(self, x0, x1, y0, y1):
        """Axis-aligned rectangle ``[x0, x1] x [y0, y1]`` inclusive (2D only)."""
        if self.dimension != 2:
            raise DomainError("rectangle() needs a 2D lattice")
        return Region(
            self, [self.index((x, y)) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1)]
        )

    def cut(self, region):
        if not isinstance(region, Region):
            region = Region(self, region)
        return Cut(region)


@dataclass(frozen=True)
class Region:
    """A set of lattice sites, stored sorted and without duplicates."""

    lattice: Lattice
    sites: tuple

    def __init__(self, lattice, sites):
        sites = [int(s) for s in sites]
        if len(set(sites)) != len(sites):
            raise DomainError(f"duplicate sites in region {sites}")
        for s in sites:
            lattice._check_site(s)
        object.__setattr__(self, "lattice", lattice)
        object.__setattr__(self, "sites", tuple(sorted(sites)))

    def __len__(self):
        return len(self.sites)

    def __iter__(self):
        return iter(self.sites)

    def __contains__(self, u):
        return u in self._set

    @cached_property
    def _set(self):
        return frozenset(self.sites)

    def complement(self):
        return Region(self.lattice, [u for u in range(self.lattice.n_sites) if u not in self._set])

    def issubset(self, other):
        return self._set <= set(other)

    def union(self, other):
        return Region(self.lattice, self._set | set(other))

    def intersection(self, other):
        return Region(self.lattice, self._set & set(other))

    @property
    def is_full(self):
        return len(self.sites) == self.lattice.n_sites

    def is_convex(self):
        """Contiguous interval in 1D, axis-aligned rectangle in 2D."""
        if not self.sites:
            return True
        coords = self.lattice.coordinates[list(self.sites)]
        lo, hi = coords.min(axis=0), coords.max(axis=0)
        return len(self.sites) == int(np.prod(hi - lo + 1))

    def __repr__(self):
        return f"Region({list(self.sites)})"


@dataclass(frozen=True)
class Cut:
    """Bipartition ``A : A^c`` together with its crossing edges."""

    region: Region

    @property
    def lattice(self):
        return self.region.lattice

    @cached_property
    def complement(self):
        return self.region.complement()

    @cached_property
    def edges(self):
        """Crossing edges as ``(a, b)`` with ``a`` in A and ``b`` in A^c."""
        inside = self.region._set
        out = []
        for u, v in self.lattice.edges:
            if (u in inside) != (v in inside):
                out.append((u, v) if u in inside else (v, u))
        return tuple(out)

    @property
    def boundary_size(self):
        """``|dA|``: the number of crossing edges."""
        return len(self.edges)

    @cached_property
    def endpoints(self):
        return tuple(sorted({x for e in self.edges for x in e}))

    @cached_property
    def boundary_distance(self):
        """``d(x, dA)`` for every site (``inf`` when there is no boundary)."""
        if not self.edges:
            return np.full(self.lattice.n_sites, np.inf)
        return self.lattice.distances[:, list(self.endpoints)].min(axis=1).astype(float)

    def _within(self, sites, R):
        if R < 0:
            raise DomainError(f"collar width must be >= 0, got {R}")
        d = self.boundary_distance
        return Region(self.lattice, [x for x in sites if d[x] <= R])

    def inner_collar(self, R):
        """``I_A(R)``: sites of A within distance R of the boundary."""
        return self._within(self.region.sites, R)

    def outer_collar(self, R):
        """``E_A(R)``: sites of A^c within distance R of the boundary."""
        return self._within(self.complement.sites, R)

    def collar(self, R):
        """``dA(R) = I_A(R) | E_A(R)``."""
        return self._within(range(self.lattice.n_sites), R)

    def shell(self, k):
        """``B_k``: sites at distance exactly ``k`` from the boundary."""
        if k < 0:
            raise DomainError(f"shell index must be >= 0, got {k}")
        d = self.boundary_distance
        return Region(self.lattice, np.nonzero(d == k)[0])

    def shells(self):
        """All non-empty shells, indexed by distance."""
        d = self.boundary_distance
        finite = d[np.isfinite(d)]
        kmax = int(finite.max()) if finite.size else -1
        return [self.shell(k) for k in range(kmax + 1)]

    def crosses(self, region):
        """True when ``region`` meets both A and A^c."""
        sites = set(region)
        inside = self.region._set
        return bool(sites & inside) and bool(sites - inside)
