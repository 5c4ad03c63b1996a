"""Security domains, page binding, and the page-sharing duplication rule.

Two domains exist: normal protection (sdid 0) with the lower logical
associativity, and high protection (sdid 1) with the higher one. A page belongs
to exactly one domain for its lifetime, so every access to a given line carries
a constant logical associativity; that constancy is what prevents the
coherence hazard where a low-H lookup misses a line that a high-H insert
placed beyond the home set.

Sharing a page across domains never aliases: the requester receives a
duplicate page over a fresh, disjoint line-address range (memoized, so repeat
requests return the same duplicate). Pages are identity tokens over contiguous
line-address ranges; page_id = line_address >> log2(page_size_lines).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError

NORMAL_SDID = 0
HIGH_SDID = 1


@dataclass(frozen=True)
class SecurityDomain:
    sdid: int
    h: int


@dataclass(frozen=True)
class Page:
    page_id: int
    sdid: int


class DomainTable:
    """The two domains, their H values, and the page registry."""

    def __init__(
        self,
        h_normal: int = 1,
        h_high: int = 16,
        *,
        page_size_lines: int = 64,
        line_address_bits: int = 40,
        default_sdid: int = NORMAL_SDID,
    ):
        if h_normal < 1 or h_high < 1:
            raise ConfigError(f"domain h values must be >= 1, got {h_normal}/{h_high}")
        if h_normal > h_high:
            raise ConfigError(f"h_normal ({h_normal}) must not exceed h_high ({h_high})")
        if page_size_lines < 1 or page_size_lines & (page_size_lines - 1):
            raise ConfigError(f"page_size_lines: must be a power of two, got {page_size_lines}")
        if default_sdid not in (NORMAL_SDID, HIGH_SDID):
            raise ConfigError(f"default_sdid: must be 0 or 1, got {default_sdid}")
        self.domains = {
            NORMAL_SDID: SecurityDomain(NORMAL_SDID, h_normal),
            HIGH_SDID: SecurityDomain(HIGH_SDID, h_high),
        }
        self.page_size_lines = page_size_lines
        self.line_address_bits = line_address_bits
        self.default_sdid = default_sdid
        self._page_bits = page_size_lines.bit_length() - 1
        self._max_page = (1 << (line_address_bits - self._page_bits)) - 1
        self._pages: dict[int, Page] = {}
        self._duplicates: dict[tuple[int, int], Page] = {}
        self._next_fresh = self._max_page  # duplicate pages grow down from the top

    def domain(self, sdid: int) -> SecurityDomain:
        try:
            return self.domains[sdid]
        except KeyError:
            raise ConfigError(f"sdid: unknown domain {sdid}") from None

    def register_page(self, page_id: int, sdid: int) -> Page:
        if not 0 <= page_id <= self._max_page:
            raise ConfigError(f"page_id: {page_id} out of address range")
        self.domain(sdid)
        existing = self._pages.get(page_id)
        if existing is not None:
            if existing.sdid != sdid:
                raise ConfigError(f"page_id: {page_id} already bound to sdid {existing.sdid}")
            return existing
        page = Page(page_id, sdid)
        self._pages[page_id] = page
        return page

    def page_of_address(self, addr: int) -> int:
        return addr >> self._page_bits

    def page_base_address(self, page: Page | int) -> int:
        pid = page.page_id if isinstance(page, Page) else page
        return pid << self._page_bits

    def _as_registered(self, page: Page | int) -> Page:
        # a bare int names the registered page with that id
        pid = page.page_id if isinstance(page, Page) else page
        known = self._pages.get(pid)
        if known is None or (isinstance(page, Page) and known.sdid != page.sdid):
            raise ConfigError(f"page: {pid} is not registered")
        return known

    def resolve_h(self, page: Page | int) -> int:
        """H of a registered page's domain; unknown pages are a config error."""
        return self.domains[self._as_registered(page).sdid].h

    def domain_of_address(self, addr: int) -> SecurityDomain:
        """Domain whose H governs an access to addr; unregistered pages get the
        default domain (the ambient address space)."""
        page = self._pages.get(addr >> self._page_bits)
        sdid = page.sdid if page is not None else self.default_sdid
        return self.domains[sdid]

    def h_for_address(self, addr: int) -> int:
        return self.domain_of_address(addr).h

    def share_page(self, page: Page | int, requester_sdid: int) -> Page:
        """Share within a domain, duplicate across domains.

        Same sdid: the very page. Different sdid: a memoized duplicate over a
        fresh page_id, so the duplicate's lines never alias the original's.
        """
        self.domain(requester_sdid)
        known = self._as_registered(page)
        if requester_sdid == known.sdid:
            return known
        memo = self._duplicates.get((known.page_id, requester_sdid))
        if memo is not None:
            return memo
        while self._next_fresh in self._pages:
            self._next_fresh -= 1
        if self._next_fresh < 0:
            raise ConfigError("page_id: address space exhausted for duplicates")
        dup = Page(self._next_fresh, requester_sdid)
        self._next_fresh -= 1
        self._pages[dup.page_id] = dup
        self._duplicates[(known.page_id, requester_sdid)] = dup
        return dup

    def duplicate_address(self, addr: int, original: Page | int, duplicate: Page | int) -> int:
        """Translate a line address of the original page into the duplicate."""
        offset = addr - self.page_base_address(original)
        if not 0 <= offset < self.page_size_lines:
            raise ConfigError("addr: not inside the original page")
        return self.page_base_address(duplicate) + offset


def resolve_h(page: Page | int, table: DomainTable) -> int:
    return table.resolve_h(page)


def share_page(page: Page | int, requester_sdid: int, table: DomainTable) -> Page:
    return table.share_page(page, requester_sdid)
