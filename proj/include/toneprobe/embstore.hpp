#pragma once

// Per-utterance layer embedding files (.tpeb), token-to-frame alignment and
// mean pooling into one feature vector per (token, layer).
//
// File layout, little-endian:
//   "TPEB" | u16 version=1 | u16 flags | u32 num_layers | u32 dim |
//   u32 num_frames | f64 frame_stride | f64 frame_offset |
//   u16 id_len | id bytes (UTF-8) | num_layers blocks of num_frames*dim f32
// Flag bit 0 set: the first block is layer 0 (front-end output), so blocks
// map to layers 0..L-1; otherwise blocks map to layers 1..L.

#include <toneprobe/common.hpp>
#include <toneprobe/corpus.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace toneprobe::embstore {

namespace fs = std::filesystem;

inline constexpr char kMagic[4] = {'T', 'P', 'E', 'B'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::uint16_t kFlagHasLayer0 = 0x1;

struct EmbeddingFile {
  std::string utterance_id;
  std::uint32_t num_layers = 0;
  std::uint32_t dim = 0;
  std::uint32_t num_frames = 0;
  double frame_stride = 0.020;
  double frame_offset = 0.0;
  bool has_layer0 = false;
  std::vector<float> data;  // [block][frame][dim]

  std::size_t block_size() const { return static_cast<std::size_t>(num_frames) * dim; }

  int first_layer() const { return has_layer0 ? 0 : 1; }
  int last_layer() const { return first_layer() + static_cast<int>(num_layers) - 1; }
  bool has_layer(int layer) const { return layer >= first_layer() && layer <= last_layer(); }

  std::span<float> block(std::size_t b) { return {data.data() + b * block_size(), block_size()}; }
  std::span<const float> block(std::size_t b) const { return {data.data() + b * block_size(), block_size()}; }

  std::span<const float> frame(int layer, std::size_t index) const {
    const std::size_t b = static_cast<std::size_t>(layer - first_layer());
    return {data.data() + b * block_size() + index * dim, dim};
  }
  std::span<float> frame(int layer, std::size_t index) {
    const std::size_t b = static_cast<std::size_t>(layer - first_layer());
    return {data.data() + b * block_size() + index * dim, dim};
  }

  /// Allocates zeroed storage for the current shape.
  void resize() { data.assign(static_cast<std::size_t>(num_layers) * block_size(), 0.0f); }

  /// Throws InvalidArgument when the shape invariants do not hold.
  void validate() const {
    if (num_layers < 1) throw InvalidArgument("embedding file needs at least one layer");
    if (dim < 1) throw InvalidArgument("embedding dimension must be at least 1");
    if (!(frame_stride > 0.0) || !std::isfinite(frame_stride)) throw InvalidArgument("frame stride must be positive");
    if (!std::isfinite(frame_offset)) throw InvalidArgument("frame offset must be finite");
    if (utterance_id.size() > 0xFFFF) throw InvalidArgument("utterance id longer than 65535 bytes");
    if (data.size() != static_cast<std::size_t>(num_layers) * block_size())
      throw InvalidArgument(cat("layer-shape mismatch: payload holds ", data.size(), " floats, expected ",
                                static_cast<std::size_t>(num_layers) * block_size()));
  }

  bool operator==(const EmbeddingFile& o) const {
    return utterance_id == o.utterance_id && num_layers == o.num_layers && dim == o.dim &&
           num_frames == o.num_frames && frame_stride == o.frame_stride && frame_offset == o.frame_offset &&
           has_layer0 == o.has_layer0 && data.size() == o.data.size() &&
           std::memcmp(data.data(), o.data.data(), data.size() * sizeof(float)) == 0;
  }
};

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 2, std::uint16_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>;
  U bits;
  std::memcpy(&bits, &value, sizeof bits);
  for (std::size_t i = 0; i < sizeof bits; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(std::string_view bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  template <typename T>
  T get(const char* field) {
    using U = std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>;
    need(sizeof(U), field);
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    T value;
    std::memcpy(&value, &bits, sizeof value);
    return value;
  }

  std::string_view take(std::size_t n, const char* field) {
    need(n, field);
    const auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* field) const {
    if (remaining() < n) throw FormatError(cat(what_, ": truncated payload while reading ", field));
  }

 private:
  std::string_view bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_embedding_file(const EmbeddingFile& file) {
  file.validate();
  std::string out;
  out.reserve(40 + file.utterance_id.size() + file.data.size() * 4);
  out.append(kMagic, 4);
  detail::put_le<std::uint16_t>(out, kVersion);
  detail::put_le<std::uint16_t>(out, file.has_layer0 ? kFlagHasLayer0 : 0);
  detail::put_le<std::uint32_t>(out, file.num_layers);
  detail::put_le<std::uint32_t>(out, file.dim);
  detail::put_le<std::uint32_t>(out, file.num_frames);
  detail::put_le<double>(out, file.frame_stride);
  detail::put_le<double>(out, file.frame_offset);
  detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(file.utterance_id.size()));
  out += file.utterance_id;
  if constexpr (std::endian::native == std::endian::little) {
    out.append(reinterpret_cast<const char*>(file.data.data()), file.data.size() * sizeof(float));
  } else {
    for (const float v : file.data) detail::put_le<float>(out, v);
  }
  return out;
}

inline EmbeddingFile decode_embedding_file(std::string_view bytes, const std::string& what = "embedding file") {
  detail::Reader in(bytes, what);
  const auto magic = in.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError(cat(what, ": bad magic (not a TPEB file)"));
  const auto version = in.get<std::uint16_t>("version");
  if (version != kVersion) throw FormatError(cat(what, ": version mismatch (file has ", version, ", reader supports ", kVersion, ")"));
  const auto flags = in.get<std::uint16_t>("flags");
  if (flags & ~kFlagHasLayer0) throw FormatError(cat(what, ": unknown flag bits ", flags));

  EmbeddingFile file;
  file.has_layer0 = (flags & kFlagHasLayer0) != 0;
  file.num_layers = in.get<std::uint32_t>("num_layers");
  file.dim = in.get<std::uint32_t>("dim");
  file.num_frames = in.get<std::uint32_t>("num_frames");
  file.frame_stride = in.get<double>("frame_stride");
  file.frame_offset = in.get<double>("frame_offset");
  const auto id_len = in.get<std::uint16_t>("utterance id length");
  file.utterance_id = std::string(in.take(id_len, "utterance id"));

  if (file.num_layers < 1 || file.dim < 1) throw FormatError(cat(what, ": num_layers and dim must be at least 1"));
  if (!(file.frame_stride > 0.0) || !std::isfinite(file.frame_stride))
    throw FormatError(cat(what, ": frame stride must be positive"));
  if (!std::isfinite(file.frame_offset)) throw FormatError(cat(what, ": frame offset must be finite"));

  const std::uint64_t expected = std::uint64_t{file.num_layers} * file.num_frames * file.dim * sizeof(float);
  if (in.remaining() < expected)
    throw FormatError(cat(what, ": truncated payload: header declares ", file.num_layers, " layers of ",
                          file.num_frames, "x", file.dim, " but only ", in.remaining(), " of ", expected,
                          " payload bytes are present"));
  if (in.remaining() > expected)
    throw FormatError(cat(what, ": layer-shape mismatch: ", in.remaining() - expected,
                          " bytes beyond the declared layer blocks"));

  const auto payload = in.take(static_cast<std::size_t>(expected), "layer blocks");
  file.data.resize(static_cast<std::size_t>(expected / sizeof(float)));
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(file.data.data(), payload.data(), payload.size());
  } else {
    detail::Reader blocks(payload, what);
    for (auto& v : file.data) v = blocks.get<float>("layer blocks");
  }
  return file;
}

inline void write_embedding_file(const EmbeddingFile& file, const fs::path& path) {
  write_file(path, encode_embedding_file(file));
}

inline EmbeddingFile read_embedding_file(const fs::path& path) {
  return decode_embedding_file(read_file(path), path.string());
}

inline fs::path embedding_path(const fs::path& model_dir, std::string_view utterance_id) {
  return model_dir / (std::string(utterance_id) + ".tpeb");
}

// ---------------------------------------------------------------------------
// alignment

struct FrameRange {
  std::size_t first = 0;
  std::size_t last_exclusive = 0;

  std::size_t count() const { return last_exclusive - first; }
  bool operator==(const FrameRange&) const = default;
};

/// Frames whose centres sit within this fraction of a stride of a boundary
/// are treated as lying on it.
inline constexpr double kCenterSlack = 1e-6;

/// Frame i belongs to [start, end) iff its centre offset + i*stride + stride/2
/// does. The same rounding is applied to both ends, so a centre on a boundary
/// shared by adjacent tokens belongs to exactly one of them.
inline std::optional<FrameRange> frame_range_for_segment(double start, double end, double stride, double offset,
                                                         std::size_t num_frames) {
  if (!(stride > 0.0)) throw InvalidArgument("frame stride must be positive");
  if (!(start < end)) throw InvalidArgument("segment start must precede its end");
  const auto first_index_at_or_after = [&](double t) {
    const double pos = (t - offset - 0.5 * stride) / stride;
    return std::ceil(pos - kCenterSlack);
  };
  const double lo = std::max(0.0, first_index_at_or_after(start));
  const double hi = std::min(static_cast<double>(num_frames), first_index_at_or_after(end));
  if (!(lo < hi)) return std::nullopt;
  return FrameRange{static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// ---------------------------------------------------------------------------
// pooling

struct PooledFeature {
  std::string token_id;
  int layer = 0;
  std::vector<float> vector;
  corpus::ToneLabel tone;
  std::string speaker_id;
  std::string dialect;

  bool operator==(const PooledFeature&) const = default;
};

/// Mean of the token's frames at `layer`; nullopt when no frame centre falls
/// inside the token (the caller records the drop).
inline std::optional<PooledFeature> pool_token(const EmbeddingFile& emb, const corpus::ToneToken& token, int layer) {
  if (!emb.has_layer(layer))
    throw InvalidArgument(cat("layer ", layer, " out of range [", emb.first_layer(), ", ", emb.last_layer(),
                              "] for utterance '", emb.utterance_id, "'"));
  if (token.utterance_id != emb.utterance_id)
    throw InvalidArgument(cat("token '", token.token_id, "' belongs to utterance '", token.utterance_id,
                              "' but the embedding file is for '", emb.utterance_id, "'"));
  const auto range = frame_range_for_segment(token.start, token.end, emb.frame_stride, emb.frame_offset, emb.num_frames);
  if (!range) return std::nullopt;

  std::vector<double> sum(emb.dim, 0.0);
  for (std::size_t i = range->first; i < range->last_exclusive; ++i) {
    const auto row = emb.frame(layer, i);
    for (std::size_t j = 0; j < emb.dim; ++j) sum[j] += row[j];
  }
  PooledFeature out{token.token_id, layer, std::vector<float>(emb.dim), token.tone, token.speaker_id, token.dialect};
  const double n = static_cast<double>(range->count());
  for (std::size_t j = 0; j < emb.dim; ++j) {
    const float v = static_cast<float>(sum[j] / n);
    if (!std::isfinite(v))
      throw FormatError(cat("non-finite pooled value for token '", token.token_id, "' at layer ", layer));
    out.vector[j] = v;
  }
  return out;
}

struct DropRecord {
  std::string token_id;
  std::string utterance_id;
  double start = 0.0;
  double end = 0.0;
  std::string reason;
};

/// Pooled rows ordered by (token_id, layer), all sharing one dimension.
struct FeatureTable {
  std::string model_tag;
  std::string language;
  std::uint32_t dim = 0;
  std::vector<PooledFeature> rows;

  std::vector<int> layers() const {
    std::vector<int> out;
    for (const auto& r : rows) out.push_back(r.layer);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
};

struct PoolResult {
  FeatureTable table;
  std::vector<DropRecord> drops;
};

/// Pools every token at every requested layer. Files are read once per
/// utterance; output order is independent of `jobs`.
inline PoolResult pool_corpus(const std::vector<corpus::ToneToken>& tokens, const fs::path& embedding_dir,
                              const std::vector<int>& layers, unsigned jobs = 1) {
  std::map<std::string, std::vector<std::size_t>> by_utt;
  for (std::size_t i = 0; i < tokens.size(); ++i) by_utt[tokens[i].utterance_id].push_back(i);
  std::vector<const std::pair<const std::string, std::vector<std::size_t>>*> groups;
  for (const auto& g : by_utt) groups.push_back(&g);

  struct Partial {
    std::vector<PooledFeature> rows;
    std::vector<DropRecord> drops;
    std::uint32_t dim = 0;
  };
  std::vector<Partial> partial(groups.size());
  parallel_for(groups.size(), jobs, [&](std::size_t g) {
    const auto& [utt, members] = *groups[g];
    const fs::path path = embedding_path(embedding_dir, utt);
    if (!fs::exists(path))
      throw Error(cat("missing embedding file for utterance '", utt, "' (expected ", path.string(), ")"));
    const EmbeddingFile emb = read_embedding_file(path);
    auto& out = partial[g];
    out.dim = emb.dim;
    for (const std::size_t ti : members) {
      const auto& token = tokens[ti];
      std::vector<PooledFeature> rows;
      for (const int layer : layers) {
        auto f = pool_token(emb, token, layer);
        if (!f) break;
        rows.push_back(std::move(*f));
      }
      if (rows.size() != layers.size()) {
        out.drops.push_back(DropRecord{token.token_id, token.utterance_id, token.start, token.end,
                                       "no frame centre inside the token span"});
        continue;
      }
      std::move(rows.begin(), rows.end(), std::back_inserter(out.rows));
    }
  });

  PoolResult result;
  for (auto& p : partial) {
    if (!p.rows.empty()) {
      if (result.table.dim == 0) result.table.dim = p.dim;
      if (p.dim != result.table.dim)
        throw FormatError(cat("embedding dimension differs across utterances (", result.table.dim, " vs ", p.dim, ")"));
    }
    std::move(p.rows.begin(), p.rows.end(), std::back_inserter(result.table.rows));
    std::move(p.drops.begin(), p.drops.end(), std::back_inserter(result.drops));
  }
  std::sort(result.table.rows.begin(), result.table.rows.end(), [](const PooledFeature& a, const PooledFeature& b) {
    return std::tie(a.token_id, a.layer) < std::tie(b.token_id, b.layer);
  });
  std::sort(result.drops.begin(), result.drops.end(),
            [](const DropRecord& a, const DropRecord& b) { return a.token_id < b.token_id; });
  for (const auto& d : result.drops) log(LogLevel::info, "dropped token ", d.token_id, ": ", d.reason);
  return result;
}

inline std::string serialize_drops(const std::vector<DropRecord>& drops) {
  std::ostringstream os;
  os << "token_id,utterance_id,start,end,reason\n";
  for (const auto& d : drops)
    write_csv_row(os, {d.token_id, d.utterance_id, format_fixed(d.start, 6), format_fixed(d.end, 6), d.reason});
  return os.str();
}

// ---------------------------------------------------------------------------
// pooled feature table file (.tpf), little-endian:
//   "TPPF" | u16 version=1 | u16 reserved | u32 dim | u64 rows |
//   str model_tag | str language | rows of
//   { str token_id | i32 layer | str tone | str speaker | str dialect | dim f32 }
// where str = u16 length + UTF-8 bytes.

inline constexpr char kFeatureMagic[4] = {'T', 'P', 'P', 'F'};

namespace detail {

inline void put_str(std::string& out, std::string_view s) {
  if (s.size() > 0xFFFF) throw InvalidArgument("string longer than 65535 bytes");
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(s.size()));
  out.append(s);
}

inline std::string get_str(Reader& in, const char* field) {
  const auto n = in.get<std::uint16_t>(field);
  return std::string(in.take(n, field));
}

}  // namespace detail

inline std::string encode_feature_table(const FeatureTable& table) {
  std::string out;
  out.append(kFeatureMagic, 4);
  detail::put_le<std::uint16_t>(out, 1);
  detail::put_le<std::uint16_t>(out, 0);
  detail::put_le<std::uint32_t>(out, table.dim);
  detail::put_le<std::uint64_t>(out, table.rows.size());
  detail::put_str(out, table.model_tag);
  detail::put_str(out, table.language);
  for (const auto& r : table.rows) {
    if (r.vector.size() != table.dim) throw InvalidArgument(cat("feature row '", r.token_id, "' has wrong dimension"));
    detail::put_str(out, r.token_id);
    detail::put_le<std::int32_t>(out, r.layer);
    detail::put_str(out, r.tone);
    detail::put_str(out, r.speaker_id);
    detail::put_str(out, r.dialect);
    for (const float v : r.vector) detail::put_le<float>(out, v);
  }
  return out;
}

inline FeatureTable decode_feature_table(std::string_view bytes, const std::string& what = "feature table") {
  detail::Reader in(bytes, what);
  if (std::memcmp(in.take(4, "magic").data(), kFeatureMagic, 4) != 0)
    throw FormatError(cat(what, ": bad magic (not a TPPF feature table)"));
  if (const auto v = in.get<std::uint16_t>("version"); v != 1)
    throw FormatError(cat(what, ": version mismatch (", v, ")"));
  in.get<std::uint16_t>("reserved");
  FeatureTable table;
  table.dim = in.get<std::uint32_t>("dim");
  const auto n = in.get<std::uint64_t>("row count");
  table.model_tag = detail::get_str(in, "model tag");
  table.language = detail::get_str(in, "language");
  for (std::uint64_t i = 0; i < n; ++i) {
    PooledFeature r;
    r.token_id = detail::get_str(in, "token id");
    r.layer = in.get<std::int32_t>("layer");
    r.tone = detail::get_str(in, "tone");
    r.speaker_id = detail::get_str(in, "speaker");
    r.dialect = detail::get_str(in, "dialect");
    in.need(std::size_t{table.dim} * 4, "feature vector");
    r.vector.resize(table.dim);
    for (auto& v : r.vector) v = in.get<float>("feature vector");
    table.rows.push_back(std::move(r));
  }
  if (in.remaining() != 0) throw FormatError(cat(what, ": trailing bytes after ", n, " rows"));
  return table;
}

inline void write_feature_table(const FeatureTable& table, const fs::path& path) {
  write_file(path, encode_feature_table(table));
}

inline FeatureTable read_feature_table(const fs::path& path) {
  return decode_feature_table(read_file(path), path.string());
}

}  // namespace toneprobe::embstore
