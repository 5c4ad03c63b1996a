"""Domain table: H binding per page, sharing-by-duplication, validation."""

import pytest

from seacache.domains import (
    HIGH_SDID,
    NORMAL_SDID,
    DomainTable,
    Page,
    SecurityDomain,
    resolve_h,
    share_page,
)
from seacache.errors import ConfigError


@pytest.fixture
def table():
    return DomainTable(h_normal=1, h_high=16)


class TestConstruction:
    def test_default_h_split(self, table):
        assert table.domain(NORMAL_SDID) == SecurityDomain(NORMAL_SDID, 1)
        assert table.domain(HIGH_SDID) == SecurityDomain(HIGH_SDID, 16)

    def test_equal_h_mode(self):
        # both domains at the same associativity: per-way randomization only
        t = DomainTable(h_normal=4, h_high=4)
        assert t.domain(NORMAL_SDID).h == t.domain(HIGH_SDID).h == 4

    def test_normal_cannot_exceed_high(self):
        with pytest.raises(ConfigError, match="h_normal"):
            DomainTable(h_normal=8, h_high=2)

    def test_h_must_be_positive(self):
        with pytest.raises(ConfigError):
            DomainTable(h_normal=0, h_high=4)

    def test_page_size_power_of_two(self):
        with pytest.raises(ConfigError, match="page_size_lines"):
            DomainTable(page_size_lines=48)

    def test_unknown_sdid(self, table):
        with pytest.raises(ConfigError, match="sdid"):
            table.domain(7)
        with pytest.raises(ConfigError, match="default_sdid"):
            DomainTable(default_sdid=3)


class TestRegistration:
    def test_register_and_resolve(self, table):
        p = table.register_page(10, HIGH_SDID)
        assert p == Page(10, HIGH_SDID)
        assert table.resolve_h(p) == 16
        assert table.resolve_h(10) == 16  # bare id names the registered page
        assert resolve_h(p, table) == 16

    def test_register_idempotent(self, table):
        a = table.register_page(3, NORMAL_SDID)
        b = table.register_page(3, NORMAL_SDID)
        assert a == b

    def test_rebind_conflict(self, table):
        table.register_page(3, NORMAL_SDID)
        with pytest.raises(ConfigError, match="already bound"):
            table.register_page(3, HIGH_SDID)

    def test_resolve_unregistered_is_error(self, table):
        with pytest.raises(ConfigError, match="not registered"):
            table.resolve_h(99)
        with pytest.raises(ConfigError, match="not registered"):
            table.resolve_h(Page(99, NORMAL_SDID))

    def test_resolve_stale_page_token(self, table):
        table.register_page(4, NORMAL_SDID)
        with pytest.raises(ConfigError):
            table.resolve_h(Page(4, HIGH_SDID))  # token disagrees with registry

    def test_page_id_range(self, table):
        with pytest.raises(ConfigError, match="page_id"):
            table.register_page(1 << 40, NORMAL_SDID)

    def test_page_arithmetic(self, table):
        # 64-line pages over 40-bit line addresses
        assert table.page_of_address(0) == 0
        assert table.page_of_address(63) == 0
        assert table.page_of_address(64) == 1
        assert table.page_base_address(5) == 320


class TestAmbientResolution:
    def test_default_domain_for_unregistered(self, table):
        assert table.h_for_address(123456) == 1
        assert table.domain_of_address(123456).sdid == NORMAL_SDID

    def test_default_sdid_override(self):
        t = DomainTable(h_normal=1, h_high=8, default_sdid=HIGH_SDID)
        assert t.h_for_address(0) == 8

    def test_registered_page_wins(self, table):
        table.register_page(2, HIGH_SDID)
        assert table.h_for_address(2 * 64 + 17) == 16
        assert table.h_for_address(3 * 64) == 1


class TestSharing:
    def test_same_domain_share_is_identity(self, table):
        p = table.register_page(7, HIGH_SDID)
        assert table.share_page(p, HIGH_SDID) is p
        assert share_page(7, HIGH_SDID, table) is p

    def test_cross_domain_share_duplicates(self, table):
        p = table.register_page(7, HIGH_SDID)
        dup = table.share_page(p, NORMAL_SDID)
        assert dup.sdid == NORMAL_SDID
        assert dup.page_id != p.page_id
        assert table.resolve_h(dup) == 1

    def test_duplicate_is_memoized(self, table):
        p = table.register_page(7, HIGH_SDID)
        assert table.share_page(p, NORMAL_SDID) is table.share_page(7, NORMAL_SDID)

    def test_duplicates_never_collide(self, table):
        pages = [table.register_page(i, HIGH_SDID) for i in range(50)]
        dups = [table.share_page(p, NORMAL_SDID) for p in pages]
        ids = {p.page_id for p in pages} | {d.page_id for d in dups}
        assert len(ids) == 100

    def test_share_requires_registration(self, table):
        with pytest.raises(ConfigError, match="not registered"):
            table.share_page(42, NORMAL_SDID)

    def test_share_unknown_requester(self, table):
        table.register_page(1, NORMAL_SDID)
        with pytest.raises(ConfigError, match="sdid"):
            table.share_page(1, 5)

    def test_duplicate_address_translation(self, table):
        p = table.register_page(7, HIGH_SDID)
        dup = table.share_page(p, NORMAL_SDID)
        base, dup_base = table.page_base_address(p), table.page_base_address(dup)
        assert table.duplicate_address(base + 13, p, dup) == dup_base + 13

    def test_duplicate_address_rejects_outside_page(self, table):
        p = table.register_page(7, HIGH_SDID)
        dup = table.share_page(p, NORMAL_SDID)
        with pytest.raises(ConfigError, match="addr"):
            table.duplicate_address(table.page_base_address(p) + 64, p, dup)

    def test_separate_lines_stay_separate(self, table):
        # every line of the duplicate differs from every line of the original
        p = table.register_page(9, HIGH_SDID)
        dup = table.share_page(p, NORMAL_SDID)
        orig_lines = {table.page_base_address(p) + i for i in range(64)}
        dup_lines = {table.page_base_address(dup) + i for i in range(64)}
        assert not orig_lines & dup_lines
