#pragma once

// Synthetic corpora for exercising the whole pipeline without real recordings.
//
// Each tone class owns a random unit-norm prototype direction. At layer l a
// frame inside a class-c token is drawn from
//   N(class_separation[l] * prototype(perm_d(c)) + speaker_offset, noise_std^2 I)
// where perm_d is the (optional) prototype permutation of the token's dialect.
// Frames outside tokens carry only the speaker offset and noise.

#include <toneprobe/common.hpp>
#include <toneprobe/corpus.hpp>
#include <toneprobe/embstore.hpp>
#include <toneprobe/textgrid.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace toneprobe::synth {

namespace fs = std::filesystem;

inline constexpr const char* kTierName = "tones";

struct SynthSpec {
  std::string language = "synth";
  std::string model_tag = "synth";
  std::vector<std::string> inventory = {"L", "H", "R", "F"};
  std::size_t n_speakers = 8;
  std::size_t n_dialects = 1;
  std::size_t tokens_per_speaker = 40;
  std::size_t tokens_per_utterance = 10;
  std::uint32_t dim = 16;
  std::uint32_t n_layers = 12;
  double frame_stride = 0.020;
  std::vector<double> class_separation = std::vector<double>(12, 1.0);
  double noise_std = 1.0;
  double speaker_effect = 0.5;
  /// Per-dialect permutation of prototype indices; empty means identity for all.
  std::vector<std::vector<std::size_t>> dialect_permutations;
  std::uint64_t seed = 42;

  /// Throws InvalidArgument when the spec is inconsistent.
  void validate() const {
    if (inventory.size() < 2) throw InvalidArgument("synthetic inventory needs at least 2 tones");
    if (n_speakers < 1 || n_dialects < 1) throw InvalidArgument("need at least one speaker and one dialect");
    if (n_dialects > n_speakers) throw InvalidArgument("more dialects than speakers");
    if (tokens_per_speaker < 1 || tokens_per_utterance < 1) throw InvalidArgument("token counts must be positive");
    if (dim < 1 || n_layers < 1) throw InvalidArgument("dim and n_layers must be positive");
    if (!(frame_stride > 0.0)) throw InvalidArgument("frame stride must be positive");
    if (class_separation.size() != n_layers)
      throw InvalidArgument(cat("class_separation has ", class_separation.size(), " entries but n_layers is ", n_layers));
    for (const double s : class_separation)
      if (!(s >= 0.0) || !std::isfinite(s)) throw InvalidArgument("class separations must be finite and non-negative");
    if (!(noise_std > 0.0)) throw InvalidArgument("noise_std must be positive");
    if (!(speaker_effect >= 0.0)) throw InvalidArgument("speaker_effect must be non-negative");
    if (!dialect_permutations.empty()) {
      if (dialect_permutations.size() != n_dialects)
        throw InvalidArgument("dialect_permutations needs one entry per dialect");
      for (const auto& p : dialect_permutations) {
        std::vector<std::size_t> sorted = p;
        std::sort(sorted.begin(), sorted.end());
        bool valid = sorted.size() == inventory.size();
        for (std::size_t i = 0; valid && i < sorted.size(); ++i) valid = sorted[i] == i;
        if (!valid) throw InvalidArgument("each dialect permutation must permute 0..|inventory|-1");
      }
    }
  }
};

inline nlohmann::json to_json(const SynthSpec& s) {
  return {{"language", s.language},
          {"model_tag", s.model_tag},
          {"inventory", s.inventory},
          {"n_speakers", s.n_speakers},
          {"n_dialects", s.n_dialects},
          {"tokens_per_speaker", s.tokens_per_speaker},
          {"tokens_per_utterance", s.tokens_per_utterance},
          {"dim", s.dim},
          {"n_layers", s.n_layers},
          {"frame_stride", s.frame_stride},
          {"class_separation", s.class_separation},
          {"noise_std", s.noise_std},
          {"speaker_effect", s.speaker_effect},
          {"dialect_permutations", s.dialect_permutations},
          {"seed", s.seed}};
}

/// Missing keys keep their defaults; a scalar `class_separation` is broadcast
/// to every layer.
inline SynthSpec spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  try {
    s.language = j.value("language", s.language);
    s.model_tag = j.value("model_tag", s.model_tag);
    s.inventory = j.value("inventory", s.inventory);
    s.n_speakers = j.value("n_speakers", s.n_speakers);
    s.n_dialects = j.value("n_dialects", s.n_dialects);
    s.tokens_per_speaker = j.value("tokens_per_speaker", s.tokens_per_speaker);
    s.tokens_per_utterance = j.value("tokens_per_utterance", s.tokens_per_utterance);
    s.dim = j.value("dim", s.dim);
    s.n_layers = j.value("n_layers", s.n_layers);
    s.frame_stride = j.value("frame_stride", s.frame_stride);
    if (j.contains("class_separation") && j["class_separation"].is_number())
      s.class_separation.assign(s.n_layers, j["class_separation"].get<double>());
    else if (j.contains("class_separation"))
      s.class_separation = j["class_separation"].get<std::vector<double>>();
    else
      s.class_separation.assign(s.n_layers, 1.0);
    s.noise_std = j.value("noise_std", s.noise_std);
    s.speaker_effect = j.value("speaker_effect", s.speaker_effect);
    s.dialect_permutations = j.value("dialect_permutations", s.dialect_permutations);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(cat("malformed synthetic spec: ", e.what()));
  }
  s.validate();
  return s;
}

/// Same spec with the last dialect's prototypes cyclically shifted by one
/// class, so its tones look like another dialect's neighbouring tones.
inline SynthSpec dialect_shift_spec(const SynthSpec& base) {
  if (base.n_dialects < 2) throw InvalidArgument("a dialect shift needs at least 2 dialects");
  SynthSpec s = base;
  const std::size_t k = s.inventory.size();
  s.dialect_permutations.assign(s.n_dialects, {});
  for (auto& p : s.dialect_permutations) {
    p.resize(k);
    std::iota(p.begin(), p.end(), 0);
  }
  for (std::size_t c = 0; c < k; ++c) s.dialect_permutations.back()[c] = (c + 1) % k;
  return s;
}

struct SynthCorpus {
  corpus::CorpusManifest manifest;
  std::vector<corpus::ToneToken> tokens;  // ground truth, manifest order
  corpus::CorpusAccounting bookkeeping;
  fs::path manifest_path;
  fs::path embedding_dir;
};

inline std::string speaker_name(std::size_t s) { return cat("spk", s < 9 ? "0" : "", s + 1); }
inline std::string dialect_name(std::size_t d) { return cat("dialect", d + 1); }

/// Writes manifest.csv, textgrids/, embeddings/<model_tag>/ and
/// bookkeeping.csv under `out_dir`. Deterministic for a fixed spec.
inline SynthCorpus generate(const SynthSpec& spec, const fs::path& out_dir) {
  spec.validate();
  const std::size_t k = spec.inventory.size();
  const std::size_t dim = spec.dim;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<std::vector<double>> prototypes(k, std::vector<double>(dim));
  for (auto& p : prototypes) {
    double norm = 0.0;
    while (norm < 1e-12) {
      norm = 0.0;
      for (auto& v : p) {
        v = gauss(rng);
        norm += v * v;
      }
    }
    norm = std::sqrt(norm);
    for (auto& v : p) v /= norm;
  }

  SynthCorpus out;
  out.manifest.language = spec.language;
  out.manifest_path = out_dir / "manifest.csv";
  out.embedding_dir = out_dir / "embeddings" / spec.model_tag;
  std::uniform_int_distribution<int> token_ms(60, 400);
  std::uniform_int_distribution<int> gap_ms(20, 120);

  for (std::size_t s = 0; s < spec.n_speakers; ++s) {
    const std::string speaker = speaker_name(s);
    const std::size_t dialect_idx = s % spec.n_dialects;
    const std::string dialect = dialect_name(dialect_idx);
    std::vector<double> offset(dim);
    for (auto& v : offset) v = spec.speaker_effect * gauss(rng);

    std::vector<std::size_t> tones(spec.tokens_per_speaker);
    for (std::size_t i = 0; i < tones.size(); ++i) tones[i] = i % k;
    std::shuffle(tones.begin(), tones.end(), rng);

    for (std::size_t first = 0, u = 0; first < tones.size(); first += spec.tokens_per_utterance, ++u) {
      const std::size_t last = std::min(tones.size(), first + spec.tokens_per_utterance);
      const std::string utt = cat(speaker, "_u", u < 9 ? "00" : (u < 99 ? "0" : ""), u + 1);

      // time layout in whole milliseconds
      textgrid::IntervalTier tier{kTierName, 0.0, 0.0, {}};
      std::vector<std::size_t> token_class;
      long t_ms = 100;
      tier.intervals.push_back({0.0, t_ms / 1000.0, ""});
      for (std::size_t i = first; i < last; ++i) {
        const long dur = token_ms(rng);
        tier.intervals.push_back({t_ms / 1000.0, (t_ms + dur) / 1000.0, spec.inventory[tones[i]]});
        token_class.push_back(tones[i]);
        t_ms += dur;
        const long gap = (i + 1 < last) ? gap_ms(rng) : 100;
        tier.intervals.push_back({t_ms / 1000.0, (t_ms + gap) / 1000.0, ""});
        t_ms += gap;
      }
      const double xmax = t_ms / 1000.0;
      tier.xmax = xmax;
      textgrid::TextGrid grid{0.0, xmax, {tier}};
      const fs::path tg_rel = fs::path("textgrids") / (utt + ".TextGrid");
      write_file(out_dir / tg_rel, textgrid::serialize_textgrid(grid));

      corpus::ManifestEntry entry{utt, fs::path("audio") / (utt + ".wav"), tg_rel, speaker, dialect, "synthetic"};
      out.manifest.entries.push_back(entry);

      embstore::EmbeddingFile emb;
      emb.utterance_id = utt;
      emb.num_layers = spec.n_layers;
      emb.dim = spec.dim;
      emb.num_frames = static_cast<std::uint32_t>(std::floor(xmax / spec.frame_stride + 1e-9));
      emb.frame_stride = spec.frame_stride;
      emb.frame_offset = 0.0;
      emb.resize();

      // class index of the token owning each frame, or -1
      std::vector<long> owner(emb.num_frames, -1);
      std::size_t tok = 0;
      for (std::size_t iv = 0; iv < tier.intervals.size(); ++iv) {
        const auto& interval = tier.intervals[iv];
        if (interval.label.empty()) continue;
        const std::size_t cls = token_class[tok++];
        out.tokens.push_back(corpus::ToneToken{cat(utt, "#", iv + 1), utt, speaker, dialect, interval.label,
                                               interval.start, interval.end});
        const auto range = embstore::frame_range_for_segment(interval.start, interval.end, emb.frame_stride,
                                                             emb.frame_offset, emb.num_frames);
        if (!range) continue;
        const std::size_t proto =
            spec.dialect_permutations.empty() ? cls : spec.dialect_permutations[dialect_idx][cls];
        for (std::size_t f = range->first; f < range->last_exclusive; ++f) owner[f] = static_cast<long>(proto);
      }
      for (std::uint32_t l = 0; l < spec.n_layers; ++l) {
        const double sep = spec.class_separation[l];
        for (std::size_t f = 0; f < emb.num_frames; ++f) {
          auto row = emb.frame(static_cast<int>(l) + 1, f);
          for (std::size_t j = 0; j < dim; ++j) {
            double v = offset[j] + spec.noise_std * gauss(rng);
            if (owner[f] >= 0) v += sep * prototypes[static_cast<std::size_t>(owner[f])][j];
            row[j] = static_cast<float>(v);
          }
        }
      }
      embstore::write_embedding_file(emb, embstore::embedding_path(out.embedding_dir, utt));
    }
  }

  const corpus::ToneInventory inventory{spec.language, spec.inventory};
  out.bookkeeping = corpus::accounting(out.tokens, &inventory);
  write_file(out.manifest_path, corpus::serialize_manifest(out.manifest));
  write_file(out_dir / "bookkeeping.csv", corpus::serialize_accounting(out.bookkeeping));
  // the manifest on disk holds relative paths; resolve them for callers
  for (auto& e : out.manifest.entries) {
    e.audio_path = out_dir / e.audio_path;
    e.textgrid_path = out_dir / e.textgrid_path;
  }
  return out;
}

}  // namespace toneprobe::synth
