#include "doctest.h"

#include <map>
#include <set>

#include "moreaufl/errors.hpp"
#include "moreaufl/mnist_idx.hpp"
#include "moreaufl/rng.hpp"

using namespace moreaufl;

TEST_CASE("parse minimal label file") {
  const std::vector<std::uint8_t> bytes{0, 0, 8, 1, 0, 0, 0, 2, 7, 3};
  const IdxTensor t = parse_idx(bytes);
  CHECK(t.dims == std::vector<std::uint32_t>{2});
  CHECK(t.data == std::vector<std::uint8_t>{7, 3});
}

TEST_CASE("parse minimal image file") {
  const std::vector<std::uint8_t> bytes{0, 0, 8, 3, 0, 0, 0, 1, 0, 0,
                                        0, 1, 0, 0, 0, 1, 0xFF};
  const IdxTensor t = parse_idx(bytes);
  CHECK(t.dims == std::vector<std::uint32_t>{1, 1, 1});
  CHECK(t.data == std::vector<std::uint8_t>{255});
}

TEST_CASE("unsupported magic is a parse error") {
  const std::vector<std::uint8_t> bytes{0, 0, 8, 2, 0, 0, 0, 1, 5};
  CHECK_THROWS_AS((void)parse_idx(bytes), ParseError);
}

TEST_CASE("truncated payload is a parse error with offset") {
  const std::vector<std::uint8_t> bytes{0, 0, 8, 1, 0, 0, 0, 5, 1, 2};
  try {
    (void)parse_idx(bytes);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 8);
  }
}

TEST_CASE("serialize then parse is the identity") {
  RngStream stream(RngKey{300, RngDomain::DataGen, 0, 0});
  for (int trial = 0; trial < 10; ++trial) {
    IdxTensor t;
    if (stream.below(2) == 0) {
      const std::uint32_t n = 1 + static_cast<std::uint32_t>(stream.below(40));
      t.dims = {n};
      t.data.resize(n);
    } else {
      const std::uint32_t n = 1 + static_cast<std::uint32_t>(stream.below(5));
      const std::uint32_t r = 1 + static_cast<std::uint32_t>(stream.below(4));
      const std::uint32_t c = 1 + static_cast<std::uint32_t>(stream.below(4));
      t.dims = {n, r, c};
      t.data.resize(static_cast<std::size_t>(n) * r * c);
    }
    for (auto& b : t.data) b = static_cast<std::uint8_t>(stream.below(256));
    const auto bytes = serialize_idx(t);
    const IdxTensor back = parse_idx(bytes);
    CHECK(back.dims == t.dims);
    CHECK(back.data == t.data);
    CHECK(serialize_idx(back) == bytes);
  }
}

namespace {

// A small balanced pool shaped like the real data: 10 labels, `per_label`
// samples each, 2x2 images whose pixels encode the label.
std::pair<IdxTensor, IdxTensor> synthetic_pool(std::uint32_t per_label) {
  IdxTensor images, labels;
  const std::uint32_t n = per_label * 10;
  images.dims = {n, 2, 2};
  images.data.resize(static_cast<std::size_t>(n) * 4);
  labels.dims = {n};
  labels.data.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint8_t y = static_cast<std::uint8_t>(i % 10);
    labels.data[i] = y;
    for (int j = 0; j < 4; ++j) {
      images.data[i * 4 + static_cast<std::size_t>(j)] =
          static_cast<std::uint8_t>(y * 20 + j);
    }
  }
  return {images, labels};
}

}  // namespace

TEST_CASE("partition: label restriction, size range, disjointness, split") {
  const auto [images, labels] = synthetic_pool(300);  // pool of 3000
  MnistPartitionOptions opts;
  opts.n_clients = 20;
  opts.labels_per_client = 2;
  opts.size_min = 40;
  opts.size_max = 130;
  const MnistPartitionResult res = partition_mnist(images, labels, opts, 99);
  const FederatedDataset& fd = res.dataset;
  REQUIRE(fd.clients.size() == 20);
  CHECK(fd.feature_dim == 4);

  std::set<std::uint32_t> seen_sizes;
  std::map<std::uint8_t, std::uint32_t> per_label_assigned;
  std::size_t total = 0;
  for (std::uint32_t i = 0; i < 20; ++i) {
    const ClientDataset& c = fd.clients[i];
    const std::size_t size = c.train_size() + c.test_size();
    CHECK(size == res.client_sizes[i]);
    CHECK(size >= opts.size_min);
    CHECK(size <= opts.size_max);
    seen_sizes.insert(res.client_sizes[i]);
    total += size;

    // exactly 2 labels, the assigned pair
    std::set<std::uint32_t> label_set(c.train_y.begin(), c.train_y.end());
    label_set.insert(c.test_y.begin(), c.test_y.end());
    CHECK(label_set ==
          std::set<std::uint32_t>{(2 * i) % 10, (2 * i + 1) % 10});

    // 75/25 split per label within rounding
    const double ratio =
        static_cast<double>(c.test_size()) / static_cast<double>(size);
    CHECK(ratio > 0.15);
    CHECK(ratio < 0.35);
    for (const auto& y : c.train_y) per_label_assigned[static_cast<std::uint8_t>(y)] += 1;
    for (const auto& y : c.test_y) per_label_assigned[static_cast<std::uint8_t>(y)] += 1;
  }
  CHECK(seen_sizes.size() == 20);  // sizes all distinct
  CHECK(total + res.leftover == 3000);
  for (const auto& [label, count] : per_label_assigned) {
    CHECK(count <= 300);  // never oversubscribes a label pool
  }
}

TEST_CASE("partition determinism and seed sensitivity") {
  const auto [images, labels] = synthetic_pool(120);
  MnistPartitionOptions opts;
  opts.n_clients = 20;
  opts.labels_per_client = 2;
  opts.size_min = 20;
  opts.size_max = 60;
  const auto a = partition_mnist(images, labels, opts, 7);
  const auto b = partition_mnist(images, labels, opts, 7);
  CHECK(dataset_hash(a.dataset) == dataset_hash(b.dataset));
  const auto c = partition_mnist(images, labels, opts, 8);
  CHECK(dataset_hash(a.dataset) != dataset_hash(c.dataset));
}

TEST_CASE("infeasible constraints raise a partition error") {
  const auto [images, labels] = synthetic_pool(30);  // 300 samples total
  MnistPartitionOptions opts;
  opts.n_clients = 20;
  opts.labels_per_client = 2;
  opts.size_min = 100;  // 20 clients x 100 >> 300
  opts.size_max = 120;
  CHECK_THROWS_AS((void)partition_mnist(images, labels, opts, 1), PartitionError);
}

TEST_CASE("missing label raises a partition error") {
  IdxTensor images, labels;
  images.dims = {20, 1, 1};
  images.data.resize(20);
  labels.dims = {20};
  labels.data.assign(20, 0);  // only label 0 present
  MnistPartitionOptions opts;
  opts.n_clients = 20;
  opts.labels_per_client = 2;
  opts.size_min = 1;
  opts.size_max = 2;
  CHECK_THROWS_AS((void)partition_mnist(images, labels, opts, 1), PartitionError);
}
