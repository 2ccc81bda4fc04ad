#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/resource.h>

#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "pageleap/errors.hpp"
#include "pageleap/mem_file.hpp"
#include "pageleap/os.hpp"
#include "pageleap/topology.hpp"

using namespace pageleap;

namespace {
size_t page() { return os::small_page_size(); }

std::shared_ptr<PhysicalStore> make_store(size_t pages, int node = 0) {
  return PhysicalStore::create(node, page(), pages * page(), Backing::ShmFile);
}
}  // namespace

TEST_CASE("store creation validates its arguments") {
  CHECK_THROWS_AS(PhysicalStore::create(99, page(), page(), Backing::ShmFile),
                  std::invalid_argument);
  CHECK_THROWS_AS(PhysicalStore::create(0, page(), page() + 1, Backing::ShmFile),
                  std::invalid_argument);
  CHECK_THROWS_AS(PhysicalStore::create(0, page(), 0, Backing::ShmFile),
                  std::invalid_argument);
  CHECK_THROWS_AS(PhysicalStore::create(0, page() * 2, page() * 2, Backing::ShmFile),
                  std::invalid_argument);
}

TEST_CASE("store starts fully free and unfaulted") {
  auto s = make_store(8);
  auto st = s->stats();
  CHECK(st.capacity_bytes == 8 * page());
  CHECK(st.free_bytes == 8 * page());
  CHECK(st.used_bytes == 0);
  CHECK(st.prefaulted_pages == 0);
}

TEST_CASE("allocation reuses the lowest free offset") {
  auto s = make_store(8);
  Extent a = s->allocate(page(), false);
  CHECK(a.offset == 0);
  s->release(a);
  Extent b = s->allocate(page(), false);
  CHECK(b.offset == 0);  // first-fit at the lowest offset again
}

TEST_CASE("release merges with both neighbours") {
  auto s = make_store(8);
  Extent a = s->allocate(2 * page(), false);
  Extent b = s->allocate(2 * page(), false);
  Extent c = s->allocate(2 * page(), false);
  s->release(a);
  s->release(c);
  s->release(b);  // middle release bridges both free neighbours
  // A full-capacity allocation only succeeds if the three runs coalesced.
  Extent whole = s->allocate(8 * page(), false);
  CHECK(whole.offset == 0);
}

TEST_CASE("allocator matches the bitmap reference model") {
  const size_t pages = 64;
  auto s = make_store(pages);
  oracle::FreeListModel model(pages * page(), page());
  std::mt19937_64 rng(7);
  std::vector<Extent> live;

  for (int step = 0; step < 2000; ++step) {
    bool do_alloc = live.empty() || (rng() % 2 == 0);
    if (do_alloc) {
      size_t len = ((rng() % 8) + 1) * page();
      auto expect = model.alloc(len);
      if (!expect) {
        CHECK_THROWS_AS(s->allocate(len, false), PoolExhausted);
      } else {
        Extent e = s->allocate(len, false);
        CHECK(e.offset == *expect);
        live.push_back(e);
      }
    } else {
      size_t pick = rng() % live.size();
      Extent e = live[pick];
      live.erase(live.begin() + pick);
      CHECK(model.release(e.offset, e.length));
      s->release(e);
    }
    CHECK(s->stats().free_bytes == model.free_bytes());
  }
}

TEST_CASE("partial release returns a subrange to the pool") {
  auto s = make_store(8);
  Extent big = s->allocate(8 * page(), false);
  // Give back the middle half in two pieces.
  s->release(Extent{big.store, 2 * page(), 2 * page()});
  s->release(Extent{big.store, 4 * page(), 2 * page()});
  CHECK(s->stats().free_bytes == 4 * page());
  Extent mid = s->allocate(4 * page(), false);
  CHECK(mid.offset == 2 * page());
}

TEST_CASE("double release and foreign extents are rejected") {
  auto s = make_store(4);
  auto other = make_store(4);
  Extent e = s->allocate(page(), false);
  s->release(e);
  CHECK_THROWS_AS(s->release(e), std::invalid_argument);
  Extent f = other->allocate(page(), false);
  CHECK_THROWS_AS(s->release(f), std::invalid_argument);
  CHECK_THROWS_AS(s->release(Extent{s, 0, page() / 2}), std::invalid_argument);
  CHECK_THROWS_AS(s->allocate(page() / 2, false), std::invalid_argument);
}

TEST_CASE("exhaustion throws and recovers") {
  auto s = make_store(4);
  Extent e = s->allocate(4 * page(), false);
  CHECK_THROWS_AS(s->allocate(page(), false), PoolExhausted);
  s->release(e);
  CHECK(s->allocate(4 * page(), false).length == 4 * page());
}

TEST_CASE("prefault makes pages resident and they stay resident across reuse") {
  auto s = make_store(16);
  Extent e = s->allocate(16 * page(), true);
  CHECK(s->stats().prefaulted_pages == 16);
  CHECK(s->prefaulted_in(e.offset, e.length) == 16);
  s->release(e);
  CHECK(s->stats().prefaulted_pages == 16);  // retention across release

  // Writing through a mapping of a pre-faulted extent takes no minor faults.
  Extent again = s->allocate(16 * page(), true);
  rusage before{}, after{};
  getrusage(RUSAGE_SELF, &before);
  for (size_t off = 0; off < again.length; off += page())
    s->base()[again.offset + off] = std::byte{0x5a};
  getrusage(RUSAGE_SELF, &after);
  CHECK(after.ru_minflt - before.ru_minflt == 0);
}

TEST_CASE("store data is shared between file offsets and future mappings") {
  auto s = make_store(2);
  Extent e = s->allocate(2 * page(), true);
  s->base()[e.offset] = std::byte{0xab};
  CHECK(s->base()[e.offset] == std::byte{0xab});
  s->release(e);
}

TEST_CASE("huge-page stores require a hugetlbfs mount") {
  if (os::hugetlbfs_mount() && os::free_huge_pages() > 0) {
    auto s = PhysicalStore::create(0, os::default_huge_page_size(),
                                   os::default_huge_page_size(), Backing::HugetlbFile);
    CHECK(s->page_size() == os::default_huge_page_size());
  } else {
    CHECK_THROWS_AS(PhysicalStore::create(0, os::default_huge_page_size(),
                                          os::default_huge_page_size(),
                                          Backing::HugetlbFile),
                    Error);
    MESSAGE("huge-page backing unavailable on this host; creation error path checked");
  }
}

TEST_CASE("free helpers wrap the member calls") {
  auto s = make_store(2);
  Extent e = allocate_extent(*s, page(), false);
  CHECK(e.offset == 0);
  release_extent(e);
  CHECK(s->stats().free_bytes == 2 * page());
}
