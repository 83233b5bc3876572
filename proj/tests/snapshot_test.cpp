#include <sstream>

#include <gtest/gtest.h>

#include "ssrec/ssrec.hpp"
#include "support/random_instance.hpp"

namespace ssrec {
namespace {

std::string bytes_of(const CppseIndex& ix) {
  std::ostringstream os;
  save_index(ix, os);
  return os.str();
}

CppseIndex from_bytes(const std::string& s) {
  std::istringstream is(s);
  return load_index(is);
}

TEST(Snapshot, RoundTripIsByteIdentical) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto in = testing::random_instance(seed);
    const auto a = bytes_of(in.index);
    const auto loaded = from_bytes(a);
    EXPECT_NO_THROW(loaded.verify());
    EXPECT_EQ(bytes_of(loaded), a) << "seed " << seed;
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(loaded.knn_query(in.item(i), 5), in.index.knn_query(in.item(i), 5));
  }
}

TEST(Snapshot, UpdatesAfterLoadMatchUpdatesInMemory) {
  auto in = testing::random_instance(4);
  auto loaded = from_bytes(bytes_of(in.index));
  in.index.apply_updates(in.updates, in.models);
  loaded.apply_updates(in.updates, in.models);
  EXPECT_EQ(bytes_of(loaded), bytes_of(in.index));
}

TEST(Snapshot, EmptyUpdateKeepsBytes) {
  auto in = testing::random_instance(8);
  const auto before = bytes_of(in.index);
  in.index.apply_updates({}, in.models);
  EXPECT_EQ(bytes_of(in.index), before);
}

TEST(Snapshot, TruncationIsDetected) {
  const auto in = testing::random_instance(2);
  const auto full = bytes_of(in.index);
  for (std::size_t n = 0; n < full.size(); n += 1 + full.size() / 200)
    EXPECT_THROW(from_bytes(full.substr(0, n)), IntegrityError) << "prefix " << n;
}

TEST(Snapshot, BadMagicVersionAndTrailingBytes) {
  const auto in = testing::random_instance(2);
  const auto full = bytes_of(in.index);
  auto magic = full;
  magic[0] = 'X';
  EXPECT_THROW(from_bytes(magic), IntegrityError);
  auto version = full;
  version[8] = static_cast<char>(version[8] + 1);
  EXPECT_THROW(from_bytes(version), IntegrityError);
  EXPECT_THROW(from_bytes(full + "x"), IntegrityError);
}

TEST(Snapshot, MissingFileIsADataError) {
  EXPECT_THROW(load_index_file("/nonexistent/ssrec.idx", true), DataError);
}

}  // namespace
}  // namespace ssrec
