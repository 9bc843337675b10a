// Copyright 2026 the refqa authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "refqa/error.hpp"
#include "refqa/rng.hpp"
#include "refqa/tensor.hpp"

namespace refqa {

enum class Split { train, test };

inline const char* split_name(Split s) { return s == Split::train ? "train" : "test"; }

/// One video's record: everything the engine sees is a precomputed vector;
/// the raw video never enters the system.
struct Sample {
  std::string id;
  std::string prompt;
  std::vector<double> prompt_emb;   // unit norm
  std::vector<double> visual_feat;  // dim D_v
  std::vector<double> align_feat;   // dim D_s
  std::optional<double> mos;
};

struct Dims {
  std::size_t prompt = 0;
  std::size_t visual = 0;
  std::size_t align = 0;
};

struct Dataset {
  Dims dims;
  std::vector<Sample> samples;
  std::unordered_map<std::string, Split> split_labels;
  std::unordered_map<std::string, std::size_t> index;  // id -> position

  const Sample& sample(const std::string& id) const {
    auto it = index.find(id);
    if (it == index.end()) throw DataError("unknown sample id: " + id);
    return samples[it->second];
  }

  Split split_of(const std::string& id) const {
    auto it = split_labels.find(id);
    if (it == split_labels.end()) throw DataError("sample has no split label: " + id);
    return it->second;
  }

  /// Indices of one split, in dataset order.
  std::vector<std::size_t> rows_of(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (split_of(samples[i].id) == s) out.push_back(i);
    return out;
  }

  void rebuild_index() {
    index.clear();
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!index.emplace(samples[i].id, i).second)
        throw DataError("duplicate sample id: " + samples[i].id);
    }
  }
};

struct SynthSpec {
  std::size_t n_samples = 1000;
  std::size_t n_clusters = 20;
  Dims dims{256, 64, 64};
  double cluster_spread = 0.18;
  double quality_noise = 1.0;
  double mos_low = 0.0;
  double mos_high = 100.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_clusters < 2) throw DataError("synth spec: n_clusters must be >= 2");
    if (n_samples < n_clusters) throw DataError("synth spec: n_samples must be >= n_clusters");
    if (!(mos_low < mos_high)) throw DataError("synth spec: mos range low must be < high");
    if (cluster_spread < 0.0 || quality_noise < 0.0)
      throw DataError("synth spec: spread and noise must be non-negative");
    if (dims.prompt == 0 || dims.visual == 0 || dims.align == 0)
      throw DataError("synth spec: dims must be >= 1");
  }
};

/// Generation internals exposed for verification: cluster assignment,
/// centroids, and the noise-free opinion scores.
struct SynthInfo {
  std::vector<std::size_t> cluster_of;
  std::vector<std::vector<double>> visual_centroids;
  std::vector<std::vector<double>> align_centroids;
  std::vector<double> clean_mos;
};

// ---------------------------------------------------------------------------
// Feature store: "RFQ1" | u32 version=1 | u32 dim | u64 count | f64 values,
// all little-endian, rows stored back to back.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string path)
      : bytes_(bytes), path_(std::move(path)) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
  std::uint64_t u64() { return take(8); }

  double f64() {
    std::uint64_t bits = take(8);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }

  std::string raw(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw DataError("truncated file: " + path_);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  const std::string& path() const { return path_; }

 private:
  std::uint64_t take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw DataError("truncated file: " + path_);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += n;
    return v;
  }

  const std::string& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace detail

inline constexpr char kStoreMagic[4] = {'R', 'F', 'Q', '1'};
inline constexpr std::uint32_t kStoreVersion = 1;

inline void write_feature_store(const std::vector<std::vector<double>>& rows, std::size_t dim,
                                const std::string& path) {
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].size() != dim)
      throw DimError("feature store row " + std::to_string(i) + " has dim " +
                     std::to_string(rows[i].size()) + ", declared " + std::to_string(dim));
  std::string out;
  out.reserve(20 + rows.size() * dim * 8);
  out.append(kStoreMagic, 4);
  detail::put_u32(out, kStoreVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(dim));
  detail::put_u64(out, rows.size());
  for (const auto& row : rows)
    for (double v : row) detail::put_f64(out, v);
  detail::write_file_bytes(path, out);
}

inline std::pair<std::size_t, std::vector<std::vector<double>>> read_feature_store(
    const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes, path);
  if (r.raw(4) != std::string(kStoreMagic, 4)) throw DataError("bad magic in " + path);
  const std::uint32_t version = r.u32();
  if (version != kStoreVersion)
    throw DataError("unsupported feature store version " + std::to_string(version) + " in " +
                    path);
  const std::size_t dim = r.u32();
  const std::uint64_t count = r.u64();
  std::vector<std::vector<double>> rows;
  rows.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::vector<double> row(dim);
    for (std::size_t k = 0; k < dim; ++k) row[k] = r.f64();
    rows.push_back(std::move(row));
  }
  if (!r.at_end()) throw DataError("trailing bytes in " + path);
  return {dim, std::move(rows)};
}

// ---------------------------------------------------------------------------
// Deterministic prompt embedder: the stand-in for an external text encoder.
// Tokens hash to signed one-hot buckets; the sum is L2-normalized, so shared
// tokens raise cosine similarity in proportion to how much text is shared.
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::vector<std::string> whitespace_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

}  // namespace detail

/// Buckets per token; spreading each token over several signed buckets keeps
/// unrelated texts near orthogonal instead of jumping on single collisions.
constexpr std::size_t kEmbedBucketsPerToken = 4;

inline std::vector<double> deterministic_embed(const std::string& text, std::size_t dim) {
  if (dim == 0) throw DimError("deterministic_embed: dim must be >= 1");
  const auto tokens = detail::whitespace_tokens(text);
  if (tokens.empty()) throw DataError("deterministic_embed: empty text");
  std::vector<double> v(dim, 0.0);
  for (const auto& tok : tokens) {
    const std::uint64_t h = detail::fnv1a(tok);
    for (std::size_t i = 0; i < kEmbedBucketsPerToken; ++i) {
      std::uint64_t z = h + (i + 1) * 0x9e3779b97f4a7c15ULL;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      z ^= z >> 31;
      v[static_cast<std::size_t>(z % dim)] += (z >> 32) & 1 ? 1.0 : -1.0;
    }
  }
  double norm = l2_norm(v);
  if (norm == 0.0) {
    // all buckets cancelled; fall back to a single deterministic bucket
    v[static_cast<std::size_t>(detail::fnv1a(text) % dim)] = 1.0;
    norm = 1.0;
  }
  for (double& x : v) x /= norm;
  return v;
}

// ---------------------------------------------------------------------------
// Manifest: JSON lines with fields id, prompt, mos (nullable), row (u64),
// split (optional). The three stores live next to the manifest under fixed
// names.
// ---------------------------------------------------------------------------

inline constexpr const char* kPromptStoreFile = "prompt_emb.rfq";
inline constexpr const char* kVisualStoreFile = "visual.rfq";
inline constexpr const char* kAlignStoreFile = "align.rfq";

inline Dataset load_dataset(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(manifest_path).parent_path();

  auto [dp, prompt_rows] = read_feature_store((dir / kPromptStoreFile).string());
  auto [dv, visual_rows] = read_feature_store((dir / kVisualStoreFile).string());
  auto [ds_dim, align_rows] = read_feature_store((dir / kAlignStoreFile).string());
  if (prompt_rows.size() != visual_rows.size() || visual_rows.size() != align_rows.size())
    throw DataError("feature stores disagree on row count under " + dir.string());

  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest: " + manifest_path);

  Dataset out;
  out.dims = Dims{dp, dv, ds_dim};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.contains("id") || !j.contains("prompt") || !j.contains("row"))
      throw DataError("manifest line " + std::to_string(lineno) +
                      ": id, prompt and row are required");
    Sample s;
    s.id = j.at("id").get<std::string>();
    s.prompt = j.at("prompt").get<std::string>();
    const std::uint64_t row = j.at("row").get<std::uint64_t>();
    if (row >= prompt_rows.size())
      throw DataError("sample " + s.id + " references missing feature row " +
                      std::to_string(row));
    s.prompt_emb = prompt_rows[row];
    s.visual_feat = visual_rows[row];
    s.align_feat = align_rows[row];
    if (j.contains("mos") && !j.at("mos").is_null()) {
      s.mos = j.at("mos").get<double>();
      if (!std::isfinite(*s.mos)) throw DataError("sample " + s.id + " has non-finite mos");
    }
    Split sp = Split::train;
    if (j.contains("split") && !j.at("split").is_null()) {
      const std::string name = j.at("split").get<std::string>();
      if (name == "train")
        sp = Split::train;
      else if (name == "test")
        sp = Split::test;
      else
        throw DataError("sample " + s.id + " has unknown split: " + name);
    }

    const double norm = l2_norm(s.prompt_emb);
    if (std::abs(norm - 1.0) > 1e-6) {
      if (norm < 0.99 || norm > 1.01)
        throw DataError("sample " + s.id + " prompt embedding norm " + std::to_string(norm) +
                        " outside [0.99, 1.01]");
      std::fprintf(stderr, "refqa: renormalizing prompt embedding of %s (norm %.6f)\n",
                   s.id.c_str(), norm);
      for (double& v : s.prompt_emb) v /= norm;
    }

    out.split_labels[s.id] = sp;
    out.samples.push_back(std::move(s));
  }
  out.rebuild_index();
  return out;
}

/// Writes manifest + three aligned stores; rows follow dataset order, so a
/// dataset round-trips byte-identically.
inline void save_dataset(const Dataset& ds, const std::string& dir,
                         bool include_split = false) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::vector<double>> prompt_rows, visual_rows, align_rows;
  prompt_rows.reserve(ds.samples.size());
  for (const Sample& s : ds.samples) {
    prompt_rows.push_back(s.prompt_emb);
    visual_rows.push_back(s.visual_feat);
    align_rows.push_back(s.align_feat);
  }
  write_feature_store(prompt_rows, ds.dims.prompt, (fs::path(dir) / kPromptStoreFile).string());
  write_feature_store(visual_rows, ds.dims.visual, (fs::path(dir) / kVisualStoreFile).string());
  write_feature_store(align_rows, ds.dims.align, (fs::path(dir) / kAlignStoreFile).string());

  std::ofstream out(fs::path(dir) / "manifest.jsonl", std::ios::trunc);
  if (!out) throw DataError("cannot write manifest under " + dir);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    nlohmann::json j;
    j["id"] = s.id;
    j["prompt"] = s.prompt;
    j["mos"] = s.mos ? nlohmann::json(*s.mos) : nlohmann::json(nullptr);
    j["row"] = i;
    if (include_split) j["split"] = split_name(ds.split_of(s.id));
    out << j.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// Splits and synthesis
// ---------------------------------------------------------------------------

/// Reassigns split labels; proportions are within one sample of exact and the
/// assignment is a pure function of (dataset order, train_frac, seed).
inline Dataset random_split(Dataset ds, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw DataError("random_split: train_frac must be in (0, 1)");
  const std::size_t n = ds.samples.size();
  if (n < 2) throw DataError("random_split: need at least 2 samples");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::size_t n_train =
      static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
  n_train = std::min(std::max<std::size_t>(n_train, 1), n - 1);
  for (std::size_t i = 0; i < n; ++i)
    ds.split_labels[ds.samples[order[i]].id] = i < n_train ? Split::train : Split::test;
  return ds;
}

namespace detail {

/// Cluster prompt templates: a vocabulary-composed phrase unique per cluster.
/// Clusters come in sibling pairs sharing most of their vocabulary, so a
/// query retrieves its own cluster near similarity 0.95 and the sibling
/// cluster near 0.75; unrelated clusters stay near zero. Sibling references
/// are the "plausible but less comparable" neighbors that similarity
/// weighting is meant to suppress.
inline std::string cluster_template(std::size_t cluster) {
  constexpr std::size_t kSharedTokens = 15;  // common to the sibling pair
  constexpr std::size_t kUniqueTokens = 4;   // private to the cluster
  const std::size_t pair_id = cluster / 2;
  std::string t;
  for (std::size_t j = 0; j < kSharedTokens; ++j)
    t += "p" + std::to_string(pair_id) + "w" + std::to_string(j) + " ";
  for (std::size_t j = 0; j < kUniqueTokens; ++j)
    t += "c" + std::to_string(cluster) + "u" + std::to_string(j) + " ";
  return t;
}

}  // namespace detail

/// Builds the verification dataset: ground-truth quality is the feature
/// deviation from a cluster centroid, which is directly recoverable from
/// query-reference differences but only weakly from a sample alone.
/// Centroid magnitude relative to the unit deviation scale; large enough
/// that a sample's absolute feature norm confounds cluster placement with
/// quality, keeping the deviation recoverable mainly through references.
constexpr double kCentroidScale = 4.0;

/// Distance between sibling-cluster centroids, in deviation-scale units.
constexpr double kSiblingOffset = 0.75;

inline Dataset generate_synthetic(const SynthSpec& spec, SynthInfo* info = nullptr) {
  spec.validate();
  Rng master(spec.seed);
  Rng structure_rng = master.fork(1);
  Rng noise_rng = master.fork(2);
  Rng mos_rng = master.fork(3);
  std::vector<double> pair_mu_v, pair_mu_s;

  const std::size_t K = spec.n_clusters;
  std::vector<std::string> templates(K);
  std::vector<std::vector<double>> mu_v(K), mu_s(K);
  // Sibling clusters share a pair centroid plus a deviation-scale offset, so
  // a sibling reference looks almost right but biases the apparent deviation.
  const double sib = kSiblingOffset * spec.cluster_spread;
  for (std::size_t c = 0; c < K; ++c) {
    templates[c] = detail::cluster_template(c);
    if (c % 2 == 0 || c == 0) {
      // new pair: draw the pair centroid
      pair_mu_v.resize(spec.dims.visual);
      for (double& v : pair_mu_v) v = kCentroidScale * structure_rng.normal();
      pair_mu_s.resize(spec.dims.align);
      for (double& v : pair_mu_s) v = kCentroidScale * structure_rng.normal();
    }
    mu_v[c].resize(spec.dims.visual);
    for (std::size_t k = 0; k < spec.dims.visual; ++k)
      mu_v[c][k] = pair_mu_v[k] + sib * structure_rng.normal();
    mu_s[c].resize(spec.dims.align);
    for (std::size_t k = 0; k < spec.dims.align; ++k)
      mu_s[c][k] = pair_mu_s[k] + sib * structure_rng.normal();
  }

  const double sqrt_dv = std::sqrt(static_cast<double>(spec.dims.visual));
  const double sqrt_ds = std::sqrt(static_cast<double>(spec.dims.align));
  // deviation that maps to the bottom of the mos range; roughly twice the
  // typical total deviation, so scores spread over the upper half
  const double full_dev = 2.0 * spec.cluster_spread * (sqrt_dv + sqrt_ds);

  Dataset ds;
  ds.dims = spec.dims;
  if (info) {
    info->cluster_of.clear();
    info->visual_centroids = mu_v;
    info->align_centroids = mu_s;
    info->clean_mos.clear();
  }
  char idbuf[32];
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    const std::size_t c = i % K;  // round-robin keeps clusters balanced
    Sample s;
    std::snprintf(idbuf, sizeof(idbuf), "synth-%05zu", i);
    s.id = idbuf;
    s.prompt = templates[c] + "x" + std::to_string(i);
    s.prompt_emb = deterministic_embed(s.prompt, spec.dims.prompt);

    // isotropic deviation with a per-sample amplitude: direction is uniform,
    // the radius varies widely, so sample quality spans the mos range
    const double amp_v = spec.cluster_spread * noise_rng.uniform(0.2, 1.8);
    const double amp_s = spec.cluster_spread * noise_rng.uniform(0.2, 1.8);
    double dev_v = 0.0, dev_s = 0.0;
    s.visual_feat.resize(spec.dims.visual);
    for (std::size_t k = 0; k < spec.dims.visual; ++k) {
      const double d = amp_v * noise_rng.normal();
      s.visual_feat[k] = mu_v[c][k] + d;
      dev_v += d * d;
    }
    s.align_feat.resize(spec.dims.align);
    for (std::size_t k = 0; k < spec.dims.align; ++k) {
      const double d = amp_s * noise_rng.normal();
      s.align_feat[k] = mu_s[c][k] + d;
      dev_s += d * d;
    }
    const double dev = std::sqrt(dev_v) + std::sqrt(dev_s);
    const double clean = full_dev > 0.0
                             ? spec.mos_high - (spec.mos_high - spec.mos_low) * dev / full_dev
                             : spec.mos_high;
    s.mos = clean + spec.quality_noise * mos_rng.normal();

    if (info) {
      info->cluster_of.push_back(c);
      info->clean_mos.push_back(clean);
    }
    ds.split_labels[s.id] = Split::train;
    ds.samples.push_back(std::move(s));
  }
  ds.rebuild_index();
  return ds;
}

}  // namespace refqa
