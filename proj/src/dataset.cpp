#include "moreaufl/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <stdexcept>

#include "moreaufl/errors.hpp"
#include "moreaufl/hash.hpp"

namespace moreaufl {

namespace {

char hex_digit(unsigned v) { return v < 10 ? char('0' + v) : char('a' + v - 10); }

}  // namespace

std::string Fnv64::hex() const {
  std::string s(16, '0');
  for (int i = 0; i < 16; ++i) {
    s[15 - i] = hex_digit(static_cast<unsigned>((state_ >> (4 * i)) & 0xF));
  }
  return s;
}

const std::vector<std::uint32_t>& BatchSampler::epoch_permutation(std::uint32_t n,
                                                                  std::uint64_t epoch) {
  if (cached_epoch_ != epoch || perm_.size() != n) {
    RngStream stream(RngKey{seed_, RngDomain::Batch, client_,
                            static_cast<std::uint32_t>(epoch)});
    perm_ = random_permutation(n, stream);
    cached_epoch_ = epoch;
  }
  return perm_;
}

std::vector<std::uint32_t> BatchSampler::batch_indices(const ClientDataset& data,
                                                       std::uint64_t m,
                                                       std::uint32_t batch_size) {
  const std::uint32_t n = static_cast<std::uint32_t>(data.train_size());
  if (n == 0) throw std::invalid_argument("BatchSampler: client has no training samples");
  if (batch_size == 0) throw std::invalid_argument("BatchSampler: batch size must be >= 1");
  std::uint32_t b = batch_size;
  if (b > n) {
    if (!warned_clamp_) {
      std::fprintf(stderr,
                   "[moreau-fl] warning: batch size %u exceeds client %u training size %u; "
                   "clamping\n",
                   batch_size, client_, n);
      warned_clamp_ = true;
    }
    b = n;
  }
  std::vector<std::uint32_t> rows(b);
  std::uint64_t pos = m * static_cast<std::uint64_t>(b);
  for (std::uint32_t i = 0; i < b; ++i, ++pos) {
    const std::uint64_t epoch = pos / n;
    const std::uint32_t offset = static_cast<std::uint32_t>(pos % n);
    rows[i] = epoch_permutation(n, epoch)[offset];
  }
  return rows;
}

void BatchSampler::take(const ClientDataset& data, std::uint64_t m, std::uint32_t batch_size,
                        Batch& out) {
  gather_batch(data, batch_indices(data, m, batch_size), out);
}

void gather_batch(const ClientDataset& data, const std::vector<std::uint32_t>& rows,
                  Batch& out) {
  const std::size_t d = data.train_x.cols;
  out.features.rows = rows.size();
  out.features.cols = d;
  out.features.values.resize(rows.size() * d);
  out.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::memcpy(out.features.row(i), data.train_x.row(rows[i]), d * sizeof(double));
    out.labels[i] = data.train_y[rows[i]];
  }
}

Batch eval_batch(const ClientDataset& data, std::uint32_t batch_size, std::uint64_t seed,
                 std::uint32_t client, std::uint32_t round) {
  const std::uint32_t n = static_cast<std::uint32_t>(data.train_size());
  if (n == 0) throw std::invalid_argument("eval_batch: client has no training samples");
  const std::uint32_t b = std::min(batch_size, n);
  RngStream stream(RngKey{seed, RngDomain::EvalBatch, client, round});
  Batch out;
  gather_batch(data, sample_without_replacement(n, b, stream), out);
  return out;
}

namespace {

constexpr char kMagic[4] = {'M', 'F', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

// Serialization sink: writes to a stream and/or a running hash.
struct Sink {
  std::ostream* os = nullptr;
  Fnv64* hash = nullptr;

  void write(const void* p, std::size_t n) {
    if (os) os->write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (hash) hash->update(p, n);
  }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    write(b, 4);
  }
  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    write(b, 8);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
};

void serialize(const FederatedDataset& fd, Sink& sink) {
  sink.write(kMagic, 4);
  sink.u32(kVersion);
  sink.u32(static_cast<std::uint32_t>(fd.clients.size()));
  sink.u32(fd.feature_dim);
  sink.u32(fd.num_classes);
  sink.u64(fd.data_seed);
  sink.u32(static_cast<std::uint32_t>(fd.builder_desc.size()));
  sink.write(fd.builder_desc.data(), fd.builder_desc.size());
  for (const ClientDataset& c : fd.clients) {
    sink.u32(static_cast<std::uint32_t>(c.train_size()));
    sink.u32(static_cast<std::uint32_t>(c.test_size()));
    for (double v : c.train_x.values) sink.f64(v);
    for (std::uint32_t y : c.train_y) sink.u32(y);
    for (double v : c.test_x.values) sink.f64(v);
    for (std::uint32_t y : c.test_y) sink.u32(y);
  }
}

struct Source {
  std::istream* is;
  std::size_t offset = 0;

  void read(void* p, std::size_t n) {
    is->read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is->gcount()) != n) {
      throw ParseError("dataset container truncated", offset);
    }
    offset += n;
  }
  std::uint32_t u32() {
    unsigned char b[4];
    read(b, 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::uint64_t u64() {
    unsigned char b[8];
    read(b, 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
};

}  // namespace

void save_dataset(const FederatedDataset& fd, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  Sink sink{&os, nullptr};
  serialize(fd, sink);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

FederatedDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  Source src{&is};
  char magic[4];
  src.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw ParseError("bad dataset container magic", 0);
  }
  const std::uint32_t version = src.u32();
  if (version != kVersion) {
    throw ParseError("unsupported dataset container version " + std::to_string(version), 4);
  }
  FederatedDataset fd;
  const std::uint32_t n_clients = src.u32();
  fd.feature_dim = src.u32();
  fd.num_classes = src.u32();
  fd.data_seed = src.u64();
  const std::uint32_t desc_len = src.u32();
  fd.builder_desc.resize(desc_len);
  if (desc_len > 0) src.read(fd.builder_desc.data(), desc_len);
  fd.clients.resize(n_clients);
  for (ClientDataset& c : fd.clients) {
    const std::uint32_t n_train = src.u32();
    const std::uint32_t n_test = src.u32();
    c.train_x = Matrix(n_train, fd.feature_dim);
    c.train_y.resize(n_train);
    c.test_x = Matrix(n_test, fd.feature_dim);
    c.test_y.resize(n_test);
    for (double& v : c.train_x.values) v = src.f64();
    for (std::uint32_t& y : c.train_y) y = src.u32();
    for (double& v : c.test_x.values) v = src.f64();
    for (std::uint32_t& y : c.test_y) y = src.u32();
  }
  return fd;
}

std::string dataset_hash(const FederatedDataset& fd) {
  Fnv64 h;
  Sink sink{nullptr, &h};
  serialize(fd, sink);
  return h.hex();
}

}  // namespace moreaufl
