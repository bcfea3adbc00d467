#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "gridflow/io.hpp"
#include "gridflow/rng.hpp"

using namespace gridflow;

TEST_CASE("rng streams are deterministic under seed") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
  Rng c(43);
  REQUIRE(Rng(42).next_u64() != c.next_u64());
}

TEST_CASE("uniform draws stay inside the requested interval") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double v = rng.uniform(-2.5, 3.5);
    REQUIRE(v >= -2.5);
    REQUIRE(v < 3.5);
  }
}

TEST_CASE("next_below covers its range") {
  Rng rng(11);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto v = rng.next_below(24);
    REQUIRE(v < 24);
    seen.insert(v);
  }
  REQUIRE(seen.size() == 24);
}

TEST_CASE("derive_seed separates streams") {
  REQUIRE(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
  REQUIRE(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
  REQUIRE(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
}

TEST_CASE("shuffle is a deterministic permutation") {
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  std::vector<int> w = v;
  Rng r1(5), r2(5);
  shuffle(v, r1);
  shuffle(w, r2);
  REQUIRE(v == w);
  std::set<int> elems(v.begin(), v.end());
  REQUIRE(elems.size() == 8);
}

TEST_CASE("fmt_double round-trips exactly") {
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const double v = (rng.next_double() - 0.5) * std::pow(10.0, rng.uniform(-12, 12));
    double back = 0.0;
    std::sscanf(fmt_double(v).c_str(), "%lf", &back);
    REQUIRE(back == v);
  }
  REQUIRE(fmt_double(0.5) == "0.5");
  REQUIRE(fmt_double(1.0) == "1");
}

TEST_CASE("atomic_write leaves no temp file and round-trips content") {
  const auto dir = std::filesystem::temp_directory_path() / "gridflow_io_test";
  std::filesystem::remove_all(dir);
  const auto path = dir / "sub" / "a.txt";
  atomic_write(path, "hello\nworld\n");
  REQUIRE(read_file(path) == "hello\nworld\n");
  REQUIRE_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  std::filesystem::remove_all(dir);
}
