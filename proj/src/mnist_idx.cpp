#include "moreaufl/mnist_idx.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>

#include "json.hpp"

#include "moreaufl/errors.hpp"

namespace moreaufl {

namespace {

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void write_be32(std::uint32_t v, std::vector<std::uint8_t>& out) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& in) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) {
    throw std::runtime_error("zlib: inflateInit2 failed");
  }
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  std::vector<std::uint8_t> out;
  std::uint8_t chunk[1 << 18];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk;
    zs.avail_out = sizeof(chunk);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw ParseError("gzip payload corrupt (zlib rc " + std::to_string(rc) + ")",
                       in.size() - zs.avail_in);
    }
    out.insert(out.end(), chunk, chunk + (sizeof(chunk) - zs.avail_out));
  }
  inflateEnd(&zs);
  return out;
}

}  // namespace

IdxTensor parse_idx(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8) throw ParseError("IDX file shorter than header", bytes.size());
  const std::uint32_t magic = read_be32(bytes.data());
  std::uint32_t ndims = 0;
  if (magic == 0x00000801u) {
    ndims = 1;
  } else if (magic == 0x00000803u) {
    ndims = 3;
  } else {
    throw ParseError("unsupported IDX magic 0x" + [magic] {
                       char buf[16];
                       std::snprintf(buf, sizeof(buf), "%08x", magic);
                       return std::string(buf);
                     }(),
                     0);
  }
  const std::size_t header = 4 + 4 * static_cast<std::size_t>(ndims);
  if (bytes.size() < header) throw ParseError("IDX header truncated", bytes.size());
  IdxTensor t;
  t.dims.resize(ndims);
  for (std::uint32_t i = 0; i < ndims; ++i) {
    t.dims[i] = read_be32(bytes.data() + 4 + 4 * i);
  }
  const std::size_t expected = t.element_count();
  if (bytes.size() != header + expected) {
    throw ParseError("IDX payload length " + std::to_string(bytes.size() - header) +
                         " does not match declared " + std::to_string(expected),
                     header);
  }
  t.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return t;
}

std::vector<std::uint8_t> serialize_idx(const IdxTensor& tensor) {
  std::vector<std::uint8_t> out;
  out.reserve(4 + 4 * tensor.dims.size() + tensor.data.size());
  if (tensor.dims.size() == 1) {
    write_be32(0x00000801u, out);
  } else if (tensor.dims.size() == 3) {
    write_be32(0x00000803u, out);
  } else {
    throw std::invalid_argument("serialize_idx: only 1-D and 3-D u8 tensors supported");
  }
  for (std::uint32_t d : tensor.dims) write_be32(d, out);
  out.insert(out.end(), tensor.data.begin(), tensor.data.end());
  return out;
}

IdxTensor load_idx_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() >= 2 && bytes[0] == 0x1F && bytes[1] == 0x8B) {
    bytes = gunzip(bytes);
  }
  return parse_idx(bytes);
}

namespace {

// Gamma(2,1) via the sum of two exponentials.
double draw_gamma2(RngStream& stream) {
  return -std::log(stream.next_double_open() * stream.next_double_open());
}

// Split `total` into `parts` positive integers with Dirichlet(2,...,2)
// proportions. Assumes total >= parts.
std::vector<std::uint32_t> dirichlet2_split(std::uint32_t total, std::uint32_t parts,
                                            RngStream& stream) {
  std::vector<double> shares(parts);
  double sum = 0.0;
  for (double& s : shares) {
    s = draw_gamma2(stream);
    sum += s;
  }
  std::vector<std::uint32_t> counts(parts);
  double cumulative = 0.0;
  std::uint32_t assigned = 0;
  for (std::uint32_t j = 0; j < parts; ++j) {
    cumulative += shares[j] / sum;
    const std::uint32_t upto =
        j + 1 == parts ? total
                       : std::min<std::uint32_t>(
                             total, static_cast<std::uint32_t>(std::llround(cumulative * total)));
    counts[j] = upto - assigned;
    assigned = upto;
  }
  // Guarantee every part is nonempty by stealing from the largest part.
  for (std::uint32_t j = 0; j < parts; ++j) {
    while (counts[j] == 0) {
      const auto big = std::max_element(counts.begin(), counts.end()) - counts.begin();
      if (counts[static_cast<std::size_t>(big)] <= 1) break;
      --counts[static_cast<std::size_t>(big)];
      ++counts[j];
    }
  }
  return counts;
}

}  // namespace

MnistPartitionResult partition_mnist(const IdxTensor& images, const IdxTensor& labels,
                                     const MnistPartitionOptions& opts, std::uint64_t seed) {
  if (images.dims.size() != 3 || labels.dims.size() != 1) {
    throw std::invalid_argument("partition_mnist: expected 3-D images and 1-D labels");
  }
  const std::uint32_t pool_n = images.dims[0];
  if (labels.dims[0] != pool_n) {
    throw std::invalid_argument("partition_mnist: image/label counts differ");
  }
  constexpr std::uint32_t kNumLabels = 10;
  if (opts.n_clients * opts.labels_per_client % kNumLabels != 0) {
    throw std::invalid_argument(
        "partition_mnist: n_clients * labels_per_client must be divisible by 10");
  }
  const std::uint32_t d = images.dims[1] * images.dims[2];

  std::vector<std::vector<std::uint32_t>> pool(kNumLabels);
  for (std::uint32_t i = 0; i < pool_n; ++i) {
    const std::uint8_t y = labels.data[i];
    if (y >= kNumLabels) {
      throw std::invalid_argument("partition_mnist: label out of range at sample " +
                                  std::to_string(i));
    }
    pool[y].push_back(i);
  }
  for (std::uint32_t l = 0; l < kNumLabels; ++l) {
    if (pool[l].empty()) {
      throw PartitionError("label " + std::to_string(l) + " absent from the pool");
    }
  }

  // Client i draws labels (lpc*i + j) mod 10; every label lands on exactly
  // n_clients * lpc / 10 clients.
  const std::uint32_t lpc = opts.labels_per_client;
  std::vector<std::vector<std::uint32_t>> client_labels(opts.n_clients);
  for (std::uint32_t i = 0; i < opts.n_clients; ++i) {
    for (std::uint32_t j = 0; j < lpc; ++j) {
      client_labels[i].push_back((lpc * i + j) % kNumLabels);
    }
  }

  if (opts.size_min < lpc || opts.size_max < opts.size_min) {
    throw std::invalid_argument("partition_mnist: invalid size range");
  }

  RngStream stream(RngKey{seed, RngDomain::Partition, 0, 0});
  const std::uint32_t span = opts.size_max - opts.size_min + 1;
  std::vector<std::uint32_t> sizes(opts.n_clients);
  std::vector<std::vector<std::uint32_t>> label_take(opts.n_clients);
  bool feasible = false;
  for (int attempt = 0; attempt < 1000 && !feasible; ++attempt) {
    // Distinct sizes when the range allows it.
    std::vector<bool> used(span, false);
    for (std::uint32_t i = 0; i < opts.n_clients; ++i) {
      std::uint32_t v = static_cast<std::uint32_t>(stream.below(span));
      if (span >= opts.n_clients) {
        while (used[v]) v = static_cast<std::uint32_t>(stream.below(span));
        used[v] = true;
      }
      sizes[i] = opts.size_min + v;
    }
    for (std::uint32_t i = 0; i < opts.n_clients; ++i) {
      label_take[i] = dirichlet2_split(sizes[i], lpc, stream);
    }
    feasible = true;
    for (std::uint32_t l = 0; l < kNumLabels; ++l) {
      std::uint64_t demand = 0;
      for (std::uint32_t i = 0; i < opts.n_clients; ++i) {
        for (std::uint32_t j = 0; j < lpc; ++j) {
          if (client_labels[i][j] == l) demand += label_take[i][j];
        }
      }
      if (demand > pool[l].size()) {
        feasible = false;
        break;
      }
    }
  }
  if (!feasible) {
    throw PartitionError(
        "could not satisfy client size range [" + std::to_string(opts.size_min) + ", " +
        std::to_string(opts.size_max) + "] against the per-label pools in 1000 attempts");
  }

  // Per label: shuffle the pool once, hand out consecutive slices in client order.
  std::vector<std::vector<std::uint32_t>> shuffled(kNumLabels);
  std::vector<std::size_t> cursor(kNumLabels, 0);
  for (std::uint32_t l = 0; l < kNumLabels; ++l) {
    const auto order = random_permutation(static_cast<std::uint32_t>(pool[l].size()), stream);
    shuffled[l].reserve(pool[l].size());
    for (std::uint32_t k : order) shuffled[l].push_back(pool[l][k]);
  }

  std::uint64_t assigned = std::accumulate(sizes.begin(), sizes.end(), std::uint64_t{0});

  FederatedDataset fd;
  fd.feature_dim = d;
  fd.num_classes = kNumLabels;
  fd.data_seed = seed;
  nlohmann::json desc{{"kind", "mnist_partition"},
                      {"n_clients", opts.n_clients},
                      {"labels_per_client", lpc},
                      {"size_min", opts.size_min},
                      {"size_max", opts.size_max},
                      {"seed", seed},
                      {"pool", pool_n},
                      {"leftover", pool_n - assigned}};
  fd.builder_desc = desc.dump();
  fd.clients.resize(opts.n_clients);

  MnistPartitionResult result;
  result.client_sizes = sizes;

  for (std::uint32_t i = 0; i < opts.n_clients; ++i) {
    std::vector<std::uint32_t> train_rows, test_rows;
    for (std::uint32_t j = 0; j < lpc; ++j) {
      const std::uint32_t l = client_labels[i][j];
      const std::uint32_t take = label_take[i][j];
      std::vector<std::uint32_t> mine(shuffled[l].begin() + static_cast<std::ptrdiff_t>(cursor[l]),
                                      shuffled[l].begin() +
                                          static_cast<std::ptrdiff_t>(cursor[l] + take));
      cursor[l] += take;
      // 75/25 split, stratified per label.
      RngStream split_stream(RngKey{seed, RngDomain::Split, i, l});
      const auto order = random_permutation(take, split_stream);
      const std::uint32_t n_test = take / 4;
      for (std::uint32_t k = 0; k < take; ++k) {
        (k < n_test ? test_rows : train_rows).push_back(mine[order[k]]);
      }
    }
    ClientDataset& c = fd.clients[i];
    auto fill = [&](const std::vector<std::uint32_t>& rows, Matrix& x,
                    std::vector<std::uint32_t>& y) {
      x = Matrix(rows.size(), d);
      y.resize(rows.size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::uint8_t* px = images.data.data() + static_cast<std::size_t>(rows[r]) * d;
        double* dst = x.row(r);
        for (std::uint32_t k = 0; k < d; ++k) dst[k] = px[k] / 255.0;
        y[r] = labels.data[rows[r]];
      }
    };
    fill(train_rows, c.train_x, c.train_y);
    fill(test_rows, c.test_x, c.test_y);
  }

  result.leftover = static_cast<std::uint32_t>(pool_n - assigned);
  result.dataset = std::move(fd);
  return result;
}

}  // namespace moreaufl
