#pragma once

// Corpus ingestion: manifest CSV -> TextGrid tiers -> tone tokens, the
// minimum-duration filter, and per-tone token/duration accounting.

#include <toneprobe/common.hpp>
#include <toneprobe/textgrid.hpp>

#include <cctype>
#include <filesystem>
#include <iterator>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace toneprobe::corpus {

namespace fs = std::filesystem;

using ToneLabel = std::string;

/// Default minimum tone-bearing-unit duration, seconds.
inline constexpr double kDefaultMinDuration = 0.050;

/// Slack applied to the inclusive duration comparison so that spans such as
/// 0.15 - 0.10 (which is 0.04999... in binary) still pass a 0.05 threshold.
inline constexpr double kDurationSlack = 1e-9;

struct ToneInventory {
  std::string language;
  std::vector<ToneLabel> labels;  // declared order

  bool contains(std::string_view label) const {
    return std::find(labels.begin(), labels.end(), label) != labels.end();
  }

  /// Known inventories by language name (case-insensitive), or a
  /// comma-separated label list such as "L,H,R,F" (language "custom").
  static ToneInventory from_spec(std::string_view spec) {
    std::string lower;
    for (const char c : trim(spec)) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (lower == "angami") return {"angami", {"T1", "T2", "T3", "T4"}};
    if (lower == "ao") return {"ao", {"L", "M", "H"}};
    if (lower == "mizo") return {"mizo", {"L", "H", "R", "F"}};
    ToneInventory inv{"custom", {}};
    for (auto& part : split(spec, ',')) {
      const auto label = std::string(trim(part));
      if (label.empty()) continue;
      if (inv.contains(label)) throw InvalidArgument(cat("duplicate tone label '", label, "' in inventory"));
      inv.labels.push_back(label);
    }
    if (inv.labels.empty()) throw InvalidArgument(cat("empty tone inventory '", spec, "'"));
    return inv;
  }
};

struct ManifestEntry {
  std::string utterance_id;
  fs::path audio_path;
  fs::path textgrid_path;
  std::string speaker_id;
  std::string dialect;
  std::string context;
};

struct CorpusManifest {
  std::string language;
  std::vector<ManifestEntry> entries;
};

inline const std::vector<std::string>& manifest_columns() {
  static const std::vector<std::string> cols = {"utterance_id", "audio_path", "textgrid_path",
                                                "speaker_id",   "dialect",    "context"};
  return cols;
}

/// Parses manifest CSV text. Relative paths are resolved against `base_dir`.
/// The `context` column may be omitted; every other column is required.
inline CorpusManifest parse_manifest(std::string_view text, const fs::path& base_dir = {},
                                     std::string language = {}) {
  const CsvTable table = parse_csv(text);
  if (table.header.empty()) throw FormatError("manifest is empty");
  std::vector<std::size_t> idx;
  for (const auto& name : manifest_columns()) {
    const auto col = table.column(name);
    if (!col) {
      if (name == "context") {
        idx.push_back(static_cast<std::size_t>(-1));
        continue;
      }
      throw FormatError(cat("manifest is missing required column '", name, "'"));
    }
    idx.push_back(*col);
  }

  CorpusManifest manifest;
  manifest.language = std::move(language);
  std::set<std::string> seen;
  const auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return (path.is_relative() && !base_dir.empty()) ? base_dir / path : path;
  };
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = table.row_lines[r];
    const auto field = [&](std::size_t k) -> std::string {
      if (idx[k] == static_cast<std::size_t>(-1) || idx[k] >= row.size()) return {};
      return std::string(trim(row[idx[k]]));
    };
    if (row.size() != table.header.size())
      throw FormatError(cat("manifest line ", line, ": expected ", table.header.size(), " fields, found ", row.size()));
    ManifestEntry e{field(0), resolve(field(1)), resolve(field(2)), field(3), field(4), field(5)};
    if (e.utterance_id.empty()) throw FormatError(cat("manifest line ", line, ": empty utterance_id"));
    if (e.speaker_id.empty()) throw FormatError(cat("manifest line ", line, ": empty speaker_id for '", e.utterance_id, "'"));
    if (e.dialect.empty()) throw FormatError(cat("manifest line ", line, ": empty dialect for '", e.utterance_id, "'"));
    if (field(2).empty()) throw FormatError(cat("manifest line ", line, ": empty textgrid_path for '", e.utterance_id, "'"));
    if (!seen.insert(e.utterance_id).second)
      throw FormatError(cat("manifest line ", line, ": duplicate utterance_id '", e.utterance_id, "'"));
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

inline CorpusManifest load_manifest(const fs::path& path, std::string language = {}) {
  return parse_manifest(read_file(path), path.parent_path(), std::move(language));
}

inline std::string serialize_manifest(const CorpusManifest& manifest) {
  std::ostringstream os;
  write_csv_row(os, manifest_columns());
  for (const auto& e : manifest.entries)
    write_csv_row(os, {e.utterance_id, e.audio_path.generic_string(), e.textgrid_path.generic_string(), e.speaker_id,
                       e.dialect, e.context});
  return os.str();
}

// ---------------------------------------------------------------------------
// tokens

struct ToneToken {
  std::string token_id;
  std::string utterance_id;
  std::string speaker_id;
  std::string dialect;
  ToneLabel tone;
  double start = 0.0;
  double end = 0.0;

  double duration() const { return end - start; }
  bool operator==(const ToneToken&) const = default;
};

struct ExtractResult {
  std::vector<ToneToken> tokens;
  std::vector<std::string> warnings;
};

/// One token per non-empty interval on `tier_name` whose (trimmed) label is in
/// the inventory. Token ids are `<utterance_id>#<1-based interval index>`.
/// Throws when a TextGrid is missing or unparseable, or lacks the tier.
inline ExtractResult extract_tokens(const CorpusManifest& manifest, const std::string& tier_name,
                                    const ToneInventory& inventory, unsigned jobs = 1) {
  const std::size_t n = manifest.entries.size();
  std::vector<ExtractResult> per_utt(n);
  parallel_for(n, jobs, [&](std::size_t u) {
    const auto& entry = manifest.entries[u];
    const auto parsed = textgrid::load_textgrid(entry.textgrid_path);
    if (!parsed.ok())
      throw FormatError(cat("utterance '", entry.utterance_id, "': cannot use TextGrid '",
                            entry.textgrid_path.string(), "': ", parsed.error_summary()));
    auto& out = per_utt[u];
    for (const auto& w : parsed.warnings())
      out.warnings.push_back(cat(entry.utterance_id, ": ", w.to_string()));
    const auto lookup = textgrid::tier_by_name(*parsed.grid, tier_name);
    if (!lookup.found())
      throw FormatError(cat("utterance '", entry.utterance_id, "': tier '", tier_name, "' not found in '",
                            entry.textgrid_path.string(), "'"));
    for (const auto& w : lookup.warnings) out.warnings.push_back(cat(entry.utterance_id, ": ", w));

    const auto& intervals = lookup.tier->intervals;
    for (std::size_t i = 0; i < intervals.size(); ++i) {
      const std::string label(trim(intervals[i].label));
      if (label.empty()) continue;
      if (!inventory.contains(label)) {
        out.warnings.push_back(cat(entry.utterance_id, ": interval ", i + 1, " label '", label,
                                   "' is not in the tone inventory; skipped"));
        continue;
      }
      out.tokens.push_back(ToneToken{cat(entry.utterance_id, "#", i + 1), entry.utterance_id, entry.speaker_id,
                                     entry.dialect, label, intervals[i].start, intervals[i].end});
    }
  });

  ExtractResult merged;
  for (auto& r : per_utt) {
    std::move(r.tokens.begin(), r.tokens.end(), std::back_inserter(merged.tokens));
    std::move(r.warnings.begin(), r.warnings.end(), std::back_inserter(merged.warnings));
  }
  return merged;
}

struct FilterResult {
  std::vector<ToneToken> kept;
  std::size_t removed = 0;
};

/// Keeps tokens with duration >= min_duration (inclusive), preserving order.
inline FilterResult filter_by_duration(const std::vector<ToneToken>& tokens,
                                       double min_duration = kDefaultMinDuration) {
  if (!(min_duration >= 0.0)) throw InvalidArgument("minimum duration must be non-negative");
  FilterResult out;
  for (const auto& t : tokens) {
    if (t.duration() >= min_duration - kDurationSlack)
      out.kept.push_back(t);
    else
      ++out.removed;
  }
  return out;
}

// ---------------------------------------------------------------------------
// accounting

struct ToneCount {
  ToneLabel tone;
  std::size_t count = 0;
  double seconds = 0.0;

  double minutes() const { return seconds / 60.0; }
};

struct CorpusAccounting {
  std::vector<ToneCount> per_tone;
  std::size_t total_count = 0;
  double total_seconds = 0.0;

  double total_minutes() const { return total_seconds / 60.0; }

  const ToneCount* find(std::string_view tone) const {
    for (const auto& t : per_tone)
      if (t.tone == tone) return &t;
    return nullptr;
  }
};

/// Per-tone counts and durations. Tones appear in inventory order when an
/// inventory is given (including zero rows), otherwise in first-seen order.
inline CorpusAccounting accounting(const std::vector<ToneToken>& tokens, const ToneInventory* inventory = nullptr) {
  CorpusAccounting acc;
  std::map<ToneLabel, std::size_t> slot;
  if (inventory) {
    for (const auto& label : inventory->labels) {
      slot.emplace(label, acc.per_tone.size());
      acc.per_tone.push_back(ToneCount{label, 0, 0.0});
    }
  }
  for (const auto& t : tokens) {
    auto [it, inserted] = slot.emplace(t.tone, acc.per_tone.size());
    if (inserted) acc.per_tone.push_back(ToneCount{t.tone, 0, 0.0});
    auto& row = acc.per_tone[it->second];
    ++row.count;
    row.seconds += t.duration();
  }
  for (const auto& row : acc.per_tone) {
    acc.total_count += row.count;
    acc.total_seconds += row.seconds;
  }
  return acc;
}

/// `tone,count,duration_min` with a trailing `total` row; minutes to 2 decimals.
inline std::string serialize_accounting(const CorpusAccounting& acc) {
  std::ostringstream os;
  os << "tone,count,duration_min\n";
  for (const auto& row : acc.per_tone)
    write_csv_row(os, {row.tone, std::to_string(row.count), format_fixed(row.minutes(), 2)});
  write_csv_row(os, {"total", std::to_string(acc.total_count), format_fixed(acc.total_minutes(), 2)});
  return os.str();
}

// ---------------------------------------------------------------------------
// token CSV

inline const std::vector<std::string>& token_columns() {
  static const std::vector<std::string> cols = {"token_id", "utterance_id", "speaker_id", "dialect",
                                                "tone",     "start",        "end"};
  return cols;
}

inline std::string serialize_tokens(const std::vector<ToneToken>& tokens) {
  std::ostringstream os;
  write_csv_row(os, token_columns());
  for (const auto& t : tokens)
    write_csv_row(os, {t.token_id, t.utterance_id, t.speaker_id, t.dialect, t.tone, format_fixed(t.start, 6),
                       format_fixed(t.end, 6)});
  return os.str();
}

inline std::vector<ToneToken> parse_tokens(std::string_view text) {
  const CsvTable table = parse_csv(text);
  std::vector<std::size_t> idx;
  for (const auto& name : token_columns()) {
    const auto col = table.column(name);
    if (!col) throw FormatError(cat("token CSV is missing column '", name, "'"));
    idx.push_back(*col);
  }
  std::vector<ToneToken> tokens;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = table.row_lines[r];
    if (row.size() != table.header.size())
      throw FormatError(cat("token CSV line ", line, ": expected ", table.header.size(), " fields"));
    ToneToken t{row[idx[0]], row[idx[1]], row[idx[2]], row[idx[3]], row[idx[4]], 0.0, 0.0};
    const auto start = parse_double(row[idx[5]]);
    const auto end = parse_double(row[idx[6]]);
    if (!start || !end) throw FormatError(cat("token CSV line ", line, ": non-numeric time"));
    t.start = *start;
    t.end = *end;
    if (t.token_id.empty() || t.speaker_id.empty() || t.dialect.empty() || t.tone.empty())
      throw FormatError(cat("token CSV line ", line, ": empty required field"));
    if (!(t.start < t.end)) throw FormatError(cat("token CSV line ", line, ": start must precede end"));
    if (!seen.insert(t.token_id).second)
      throw FormatError(cat("token CSV line ", line, ": duplicate token_id '", t.token_id, "'"));
    tokens.push_back(std::move(t));
  }
  return tokens;
}

inline std::vector<ToneToken> load_tokens(const fs::path& path) { return parse_tokens(read_file(path)); }

}  // namespace toneprobe::corpus
