#pragma once

// Feature datasets, class-proxy matrices, their binary containers and the
// synthetic spurious-correlation generator.
//
// Feature container (little-endian):
//   "PPAF" | u32 version=1 | u64 N | u32 d | u32 K | u32 attr_count (0 = unknown)
//   | u32 flags (bit0 attributes, bit1 splits)
//   | N*d f32 features | N u32 labels | [N u32 attributes] | [N u8 split codes]
// Proxy container:
//   "PPAZ" | u32 version=1 | u32 K | u32 d | K*d f32
// Sidecar "<stem>.meta.json": class names, attribute names, provenance, normalization state.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppa/error.hpp"
#include "ppa/linalg.hpp"
#include "ppa/prior.hpp"
#include "ppa/random.hpp"

namespace ppa {

enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw ValidationError("unknown split '" + std::string(s) + "'");
}

class FeatureDataset;
struct ContainerIo;

// Ground-truth attributes are readable only with this key. Evaluation and the
// container codec can mint one; trainers cannot.
class GroundTruthKey {
  constexpr GroundTruthKey() = default;
  friend GroundTruthKey evaluation_key();
  friend struct ContainerIo;
};

class FeatureDataset {
 public:
  FeatureDataset(Matrix features, std::vector<std::uint32_t> labels, std::size_t class_count,
                 std::optional<std::vector<std::uint32_t>> attributes = std::nullopt, std::size_t attribute_count = 0,
                 std::vector<Split> splits = {})
      : features_(std::move(features)),
        labels_(std::move(labels)),
        attributes_(std::move(attributes)),
        splits_(std::move(splits)),
        class_count_(class_count),
        attribute_count_(attribute_count) {
    const std::size_t n = features_.rows();
    if (n == 0 || features_.cols() == 0) throw ValidationError("dataset needs N >= 1 and d >= 1");
    if (labels_.size() != n) throw ValidationError("label count does not match sample count");
    if (class_count_ < 2) throw ValidationError("dataset needs at least two classes");
    for (std::uint32_t y : labels_) {
      if (y >= class_count_) {
        throw ValidationError("label " + std::to_string(y) + " out of range for K = " + std::to_string(class_count_));
      }
    }
    if (attributes_) {
      if (attributes_->size() != n) throw ValidationError("attribute count does not match sample count");
      if (attribute_count_ == 0) {
        for (std::uint32_t a : *attributes_) attribute_count_ = std::max<std::size_t>(attribute_count_, a + 1);
      }
      for (std::uint32_t a : *attributes_) {
        if (a >= attribute_count_) throw ValidationError("attribute " + std::to_string(a) + " out of range");
      }
    }
    if (splits_.empty()) splits_.assign(n, Split::kTrain);
    if (splits_.size() != n) throw ValidationError("split tag count does not match sample count");
    for (Split s : splits_) {
      if (static_cast<std::uint8_t>(s) > 2) throw ValidationError("invalid split code");
    }
  }

  std::size_t size() const noexcept { return features_.rows(); }
  std::size_t dim() const noexcept { return features_.cols(); }
  std::size_t class_count() const noexcept { return class_count_; }
  std::size_t attribute_count() const noexcept { return attribute_count_; }
  bool has_attributes() const noexcept { return attributes_.has_value(); }

  const Matrix& features() const noexcept { return features_; }
  const std::vector<std::uint32_t>& labels() const noexcept { return labels_; }
  const std::vector<Split>& splits() const noexcept { return splits_; }

  const std::vector<std::uint32_t>& attributes(GroundTruthKey) const {
    if (!attributes_) throw ValidationError("dataset carries no ground-truth attributes");
    return *attributes_;
  }

  std::size_t count(Split s) const {
    return static_cast<std::size_t>(std::count(splits_.begin(), splits_.end(), s));
  }

  std::vector<std::size_t> indices(Split s) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < splits_.size(); ++i)
      if (splits_[i] == s) idx.push_back(i);
    return idx;
  }

  // Samples of one split, in file order; attributes travel along.
  FeatureDataset subset(Split s) const {
    const auto idx = indices(s);
    if (idx.empty()) throw ValidationError("split '" + std::string(to_string(s)) + "' is empty");
    Matrix x(idx.size(), dim());
    std::vector<std::uint32_t> y(idx.size());
    std::optional<std::vector<std::uint32_t>> a;
    if (attributes_) a.emplace(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto src = features_.row(idx[r]);
      std::copy(src.begin(), src.end(), x.row(r).begin());
      y[r] = labels_[idx[r]];
      if (a) (*a)[r] = (*attributes_)[idx[r]];
    }
    return FeatureDataset(std::move(x), std::move(y), class_count_, std::move(a), attribute_count_,
                          std::vector<Split>(idx.size(), s));
  }

  // Same samples with every feature row scaled to unit L2 norm (zero rows stay zero).
  FeatureDataset l2_normalized() const {
    FeatureDataset out = *this;
    for (std::size_t i = 0; i < out.size(); ++i) {
      auto r = out.features_.row(i);
      const double n = norm2(r);
      if (n > 0.0)
        for (double& v : r) v /= n;
    }
    return out;
  }

  friend bool operator==(const FeatureDataset&, const FeatureDataset&) = default;

 private:
  Matrix features_;
  std::vector<std::uint32_t> labels_;
  std::optional<std::vector<std::uint32_t>> attributes_;
  std::vector<Split> splits_;
  std::size_t class_count_ = 0;
  std::size_t attribute_count_ = 0;
};

struct ClassProxyMatrix {
  Matrix proxies;  // K×d
  std::vector<std::string> class_names;

  ClassProxyMatrix() = default;
  explicit ClassProxyMatrix(Matrix z, std::vector<std::string> names = {})
      : proxies(std::move(z)), class_names(std::move(names)) {
    if (proxies.rows() == 0 || proxies.cols() == 0) throw ValidationError("proxy matrix is empty");
    for (std::size_t k = 0; k < proxies.rows(); ++k) {
      if (norm2(proxies.row(k)) == 0.0) throw ValidationError("proxy row " + std::to_string(k) + " has zero norm");
    }
    if (!class_names.empty() && class_names.size() != proxies.rows())
      throw ValidationError("class name count does not match proxy rows");
  }

  std::size_t class_count() const noexcept { return proxies.rows(); }
  std::size_t dim() const noexcept { return proxies.cols(); }

  friend bool operator==(const ClassProxyMatrix&, const ClassProxyMatrix&) = default;
};

inline void check_compatible(const FeatureDataset& ds, const ClassProxyMatrix& z) {
  if (z.class_count() != ds.class_count())
    throw ValidationError("proxy matrix has " + std::to_string(z.class_count()) + " rows but dataset has K = " +
                          std::to_string(ds.class_count()));
  if (z.dim() != ds.dim()) throw ValidationError("proxy dimension differs from feature dimension");
}

// ---------------------------------------------------------------------------
// Containers

inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::uint32_t kFlagAttributes = 1u << 0;
inline constexpr std::uint32_t kFlagSplits = 1u << 1;

struct ContainerIo {
  static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

  class Writer {
   public:
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    template <typename T>
    void le(T v) {
      using U = std::make_unsigned_t<T>;
      auto u = static_cast<U>(v);
      for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
    }
    void f32(double v) { le(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
    const std::vector<char>& buffer() const { return buf_; }

   private:
    std::vector<char> buf_;
  };

  class Reader {
   public:
    explicit Reader(std::vector<char> buf) : buf_(std::move(buf)) {}
    std::string_view bytes(std::size_t n) {
      need(n);
      std::string_view s(buf_.data() + pos_, n);
      pos_ += n;
      return s;
    }
    template <typename T>
    T le() {
      need(sizeof(T));
      std::make_unsigned_t<T> u = 0;
      for (std::size_t i = 0; i < sizeof(T); ++i)
        u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
      pos_ += sizeof(T);
      return static_cast<T>(u);
    }
    double f32() { return static_cast<double>(std::bit_cast<float>(le<std::uint32_t>())); }
    std::size_t remaining() const { return buf_.size() - pos_; }
    void need(std::size_t n) const {
      if (buf_.size() - pos_ < n) throw FormatError("corrupt container: payload truncated");
    }

   private:
    std::vector<char> buf_;
    std::size_t pos_ = 0;
  };

  static std::vector<char> encode(const FeatureDataset& ds) {
    Writer w;
    w.bytes("PPAF");
    w.le<std::uint32_t>(kContainerVersion);
    w.le<std::uint64_t>(ds.size());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(ds.dim()));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(ds.class_count()));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(ds.attribute_count()));
    const bool all_train = ds.count(Split::kTrain) == ds.size();
    std::uint32_t flags = 0;
    if (ds.has_attributes()) flags |= kFlagAttributes;
    if (!all_train) flags |= kFlagSplits;
    w.le<std::uint32_t>(flags);
    for (double v : ds.features().data()) w.f32(v);
    for (std::uint32_t y : ds.labels()) w.le<std::uint32_t>(y);
    if (ds.has_attributes())
      for (std::uint32_t a : ds.attributes(GroundTruthKey{})) w.le<std::uint32_t>(a);
    if (flags & kFlagSplits)
      for (Split s : ds.splits()) w.le<std::uint8_t>(static_cast<std::uint8_t>(s));
    return w.buffer();
  }

  static FeatureDataset decode(std::vector<char> bytes) {
    Reader r(std::move(bytes));
    if (r.remaining() < 4 || r.bytes(4) != "PPAF") throw FormatError("corrupt container: bad magic (expected PPAF)");
    const auto version = r.le<std::uint32_t>();
    if (version != kContainerVersion) throw FormatError("unsupported container version " + std::to_string(version));
    const auto n = r.le<std::uint64_t>();
    const auto d = r.le<std::uint32_t>();
    const auto k = r.le<std::uint32_t>();
    const auto attr_count = r.le<std::uint32_t>();
    const auto flags = r.le<std::uint32_t>();
    if (flags & ~(kFlagAttributes | kFlagSplits)) throw FormatError("corrupt container: unknown flag bits");
    if (n == 0 || d == 0) throw ValidationError("container declares an empty dataset");
    // Exact payload length is implied by the header.
    const std::uint64_t per_sample = 4ull * d + 4 + ((flags & kFlagAttributes) ? 4 : 0) + ((flags & kFlagSplits) ? 1 : 0);
    if (n > r.remaining() / per_sample || n * per_sample != r.remaining()) {
      throw FormatError(n * per_sample > r.remaining() ? "corrupt container: payload truncated"
                                                       : "corrupt container: trailing bytes after payload");
    }
    std::vector<double> x(static_cast<std::size_t>(n) * d);
    for (double& v : x) {
      v = r.f32();
      if (!std::isfinite(v)) throw ValidationError("container holds a non-finite feature value");
    }
    std::vector<std::uint32_t> labels(n);
    for (auto& y : labels) y = r.le<std::uint32_t>();
    std::optional<std::vector<std::uint32_t>> attrs;
    if (flags & kFlagAttributes) {
      attrs.emplace(n);
      for (auto& a : *attrs) a = r.le<std::uint32_t>();
    }
    std::vector<Split> splits;
    if (flags & kFlagSplits) {
      splits.resize(n);
      for (auto& s : splits) {
        const auto code = r.le<std::uint8_t>();
        if (code > 2) throw ValidationError("invalid split code " + std::to_string(code));
        s = static_cast<Split>(code);
      }
    }
    return FeatureDataset(Matrix(n, d, std::move(x)), std::move(labels), k, std::move(attrs), attr_count,
                          std::move(splits));
  }

  static std::vector<char> encode(const ClassProxyMatrix& z) {
    Writer w;
    w.bytes("PPAZ");
    w.le<std::uint32_t>(kContainerVersion);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(z.class_count()));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(z.dim()));
    for (double v : z.proxies.data()) w.f32(v);
    return w.buffer();
  }

  static ClassProxyMatrix decode_proxies(std::vector<char> bytes) {
    Reader r(std::move(bytes));
    if (r.remaining() < 4 || r.bytes(4) != "PPAZ") throw FormatError("corrupt container: bad magic (expected PPAZ)");
    const auto version = r.le<std::uint32_t>();
    if (version != kContainerVersion) throw FormatError("unsupported container version " + std::to_string(version));
    const auto k = r.le<std::uint32_t>();
    const auto d = r.le<std::uint32_t>();
    const std::uint64_t want = 4ull * k * d;
    if (r.remaining() < want) throw FormatError("corrupt container: payload truncated");
    if (r.remaining() > want) throw FormatError("corrupt container: trailing bytes after payload");
    std::vector<double> z(static_cast<std::size_t>(k) * d);
    for (double& v : z) {
      v = r.f32();
      if (!std::isfinite(v)) throw ValidationError("proxy container holds a non-finite value");
    }
    return ClassProxyMatrix(Matrix(k, d, std::move(z)));
  }
};

namespace detail {

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const std::vector<char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

}  // namespace detail

inline FeatureDataset load(const std::filesystem::path& path) { return ContainerIo::decode(detail::read_file(path)); }
inline void save(const FeatureDataset& ds, const std::filesystem::path& path) {
  detail::write_file(path, ContainerIo::encode(ds));
}
inline ClassProxyMatrix load_proxies(const std::filesystem::path& path) {
  return ContainerIo::decode_proxies(detail::read_file(path));
}
inline void save_proxies(const ClassProxyMatrix& z, const std::filesystem::path& path) {
  detail::write_file(path, ContainerIo::encode(z));
}

struct DatasetMeta {
  std::vector<std::string> class_names;
  std::vector<std::string> attribute_names;
  std::string provenance;
  bool normalized = false;  // whether the stored features are already unit-norm
};

inline std::filesystem::path sidecar_path(const std::filesystem::path& container) {
  auto p = container;
  p.replace_extension(".meta.json");
  return p;
}

inline void save_meta(const DatasetMeta& m, const std::filesystem::path& container) {
  nlohmann::ordered_json j;
  j["class_names"] = m.class_names;
  j["attribute_names"] = m.attribute_names;
  j["provenance"] = m.provenance;
  j["normalized"] = m.normalized;
  const std::string s = j.dump(2) + "\n";
  detail::write_file(sidecar_path(container), std::vector<char>(s.begin(), s.end()));
}

inline std::optional<DatasetMeta> load_meta(const std::filesystem::path& container) {
  const auto path = sidecar_path(container);
  if (!std::filesystem::exists(path)) return std::nullopt;
  const auto bytes = detail::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("sidecar " + path.string() + ": " + e.what());
  }
  DatasetMeta m;
  m.class_names = j.value("class_names", std::vector<std::string>{});
  m.attribute_names = j.value("attribute_names", std::vector<std::string>{});
  m.provenance = j.value("provenance", std::string{});
  m.normalized = j.value("normalized", false);
  return m;
}

// ---------------------------------------------------------------------------
// Priors and pseudo-label noise

// Class frequencies over the train split with `smoothing` pseudo-counts per class.
inline GroupPrior empirical_class_prior(const FeatureDataset& ds, double smoothing = 1.0) {
  std::vector<std::size_t> counts(ds.class_count(), 0);
  std::size_t n = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.splits()[i] != Split::kTrain) continue;
    ++counts[ds.labels()[i]];
    ++n;
  }
  if (n == 0) throw ValidationError("train split is empty");
  return GroupPrior::from_counts(counts, smoothing);
}

// Resamples the attribute half of round(p·N) group labels g = y·A + a, chosen
// uniformly without replacement; the class half is kept.
inline std::vector<std::uint32_t> inject_pseudo_label_noise(std::vector<std::uint32_t> groups, double p,
                                                            std::uint64_t seed, std::uint32_t attribute_count = 2) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("noise fraction must lie in [0, 1]");
  if (attribute_count < 1) throw ValidationError("attribute count must be positive");
  const std::size_t n = groups.size();
  const auto k = static_cast<std::size_t>(std::llround(p * static_cast<double>(n)));
  Rng rng(derive_seed(seed, 0x6e6f697365));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  // Partial Fisher–Yates: the first k positions are a uniform k-subset.
  for (std::size_t i = 0; i < k; ++i) std::swap(order[i], order[i + rng.below(n - i)]);
  for (std::size_t i = 0; i < k; ++i) {
    auto& g = groups[order[i]];
    const std::uint32_t y = g / attribute_count;
    g = y * attribute_count + static_cast<std::uint32_t>(rng.below(attribute_count));
  }
  return groups;
}

// ---------------------------------------------------------------------------
// Synthetic spurious-correlation data

struct SplitQuota {
  std::array<std::size_t, 2> class_counts{};
  double rho = 0.5;  // fraction of each class whose attribute equals its class index
};

// Two classes, two attribute values. Dimensions are laid out as
// [core | spurious | distractors].
struct SyntheticSpec {
  SplitQuota train;
  SplitQuota val;
  SplitQuota test;
  double core_mean_separation = 2.0;
  double spurious_mean_separation = 4.0;
  double noise_sigma = 1.0;
  std::size_t feature_dim = 16;
  std::size_t core_dims = 1;
  std::size_t distractor_dims = 14;
  std::uint64_t seed = 0;

  std::size_t spurious_dims() const { return feature_dim - core_dims - distractor_dims; }

  // cells[y][a]: attribute a == y is the majority cell holding round(rho·n_y) samples.
  static std::array<std::array<std::size_t, 2>, 2> cells(const SplitQuota& q) {
    std::array<std::array<std::size_t, 2>, 2> c{};
    for (std::size_t y = 0; y < 2; ++y) {
      const auto major = static_cast<std::size_t>(std::llround(q.rho * static_cast<double>(q.class_counts[y])));
      c[y][y] = major;
      c[y][1 - y] = q.class_counts[y] - major;
    }
    return c;
  }

  void validate() const {
    for (const SplitQuota* q : {&train, &val, &test}) {
      if (!(q->rho > 0.0 && q->rho < 1.0)) throw ValidationError("rho must lie in (0, 1)");
    }
    if (train.class_counts[0] + train.class_counts[1] == 0) throw ValidationError("train split is empty");
    if (feature_dim < 2) throw ValidationError("feature_dim must be >= 2");
    if (core_dims < 1) throw ValidationError("need at least one core dimension");
    if (core_dims + distractor_dims >= feature_dim) throw ValidationError("no room left for a spurious dimension");
    if (!(noise_sigma > 0.0)) throw ValidationError("noise_sigma must be positive");
    if (!(core_mean_separation >= 0.0) || !(spurious_mean_separation >= 0.0))
      throw ValidationError("mean separations must be >= 0");
  }
};

struct SyntheticData {
  FeatureDataset dataset;
  ClassProxyMatrix proxies;
};

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t d = spec.feature_dim;
  const std::size_t spur_end = d - spec.distractor_dims;
  std::vector<double> x;
  std::vector<std::uint32_t> labels, attrs;
  std::vector<Split> splits;

  std::uint64_t stream = 0;
  for (auto [split, quota] : {std::pair{Split::kTrain, spec.train}, std::pair{Split::kVal, spec.val},
                              std::pair{Split::kTest, spec.test}}) {
    Rng rng(derive_seed(spec.seed, stream++));
    const auto cells = SyntheticSpec::cells(quota);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> rows;
    for (std::uint32_t y = 0; y < 2; ++y)
      for (std::uint32_t a = 0; a < 2; ++a) rows.insert(rows.end(), cells[y][a], {y, a});
    rng.shuffle(std::span(rows));
    for (auto [y, a] : rows) {
      const double core_mu = (y == 1 ? 0.5 : -0.5) * spec.core_mean_separation;
      const double spur_mu = (a == 1 ? 0.5 : -0.5) * spec.spurious_mean_separation;
      for (std::size_t j = 0; j < d; ++j) {
        const double mu = j < spec.core_dims ? core_mu : (j < spur_end ? spur_mu : 0.0);
        // Rounded through f32 so the in-memory dataset equals its container form.
        x.push_back(static_cast<double>(static_cast<float>(rng.normal(mu, spec.noise_sigma))));
      }
      labels.push_back(y);
      attrs.push_back(a);
      splits.push_back(split);
    }
  }
  const std::size_t n = labels.size();
  FeatureDataset ds(Matrix(n, d, std::move(x)), std::move(labels), 2, std::move(attrs), 2, std::move(splits));

  Matrix z(2, d);
  const double unit = static_cast<float>(1.0 / std::sqrt(static_cast<double>(spec.core_dims)));
  for (std::size_t j = 0; j < spec.core_dims; ++j) {
    z(0, j) = -unit;
    z(1, j) = unit;
  }
  return {std::move(ds), ClassProxyMatrix(std::move(z), {"class0", "class1"})};
}

// Named generator configurations. Validation is group-balanced so epoch
// selection sees every group; test keeps the training correlation so the
// average accuracy stays in-distribution.
inline std::vector<std::string> synthetic_preset_names() {
  return {"synthetic-waterbirds", "synthetic-balanced", "synthetic-celeba-like"};
}

inline SyntheticSpec synthetic_preset(std::string_view name, std::uint64_t seed = 0) {
  SyntheticSpec s;
  s.seed = seed;
  if (name == "synthetic-waterbirds") {
    s.train = {{3000, 1000}, 0.95};
    s.val = {{7500, 2500}, 0.5};
    s.test = {{150000, 50000}, 0.95};
  } else if (name == "synthetic-balanced") {
    s.train = {{2000, 2000}, 0.5};
    s.val = {{5000, 5000}, 0.5};
    s.test = {{50000, 50000}, 0.5};
  } else if (name == "synthetic-celeba-like") {
    // Blond (class 1) is 24267 of 162770 training images; kept at that ratio.
    s.train = {{3404, 596}, 0.94};
    s.val = {{8509, 1491}, 0.5};
    s.test = {{170170, 29830}, 0.94};
  } else {
    throw ValidationError("unknown preset '" + std::string(name) + "'");
  }
  return s;
}

// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Group-balanced Bayes classifier for the generator: the spurious likelihood
// factors out of Σ_a p(x | y, a), leaving a threshold on the core mean, so
// every group is classified correctly with probability Φ(‖Δμ_core‖ / 2σ).
inline double bayes_group_balanced_accuracy(const SyntheticSpec& spec) {
  const double shift = spec.core_mean_separation * std::sqrt(static_cast<double>(spec.core_dims));
  return normal_cdf(shift / (2.0 * spec.noise_sigma));
}

}  // namespace ppa
