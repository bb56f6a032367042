#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stylecast/tensor.hpp"

namespace stylecast {

struct UtteranceRecord {
  std::string utterance_id;
  std::string speaker;
  std::string genre;
  std::optional<std::string> paragraph_id;
  std::vector<int> phonemes;    // ids into the manifest's phoneme inventory
  std::vector<int> durations;   // frames per phoneme, each >= 1
  Tensor mel;                   // [frames x n_mels]
  Tensor f0;                    // [frames x 1], Hz, 0 = unvoiced
  Tensor energy;                // [frames x 1], >= 0

  int frames() const { return mel.rows; }
  int phoneme_count() const { return static_cast<int>(phonemes.size()); }
};

struct ChunkRecord {
  std::string chunk_id;
  std::string speaker;
  std::string genre;
  std::vector<std::string> utterance_ids;  // ordered, length >= 1
};

struct CorpusManifest {
  std::map<std::string, UtteranceRecord> utterances;
  std::vector<ChunkRecord> chunks;
  std::set<std::string> speakers;
  std::set<std::string> genres;
  int n_mels = 0;
  int phoneme_inventory = 0;

  const UtteranceRecord& utterance(const std::string& id) const;
  std::vector<std::string> utterance_ids() const;
  // Throws on any violated invariant (duration sums, labels, chunk refs).
  void validate() const;
};

enum class ChunkPolicyKind { Paragraph, RandomK };

struct ChunkPolicy {
  ChunkPolicyKind kind = ChunkPolicyKind::RandomK;
  int k = 10;
  uint64_t seed = 0;

  static ChunkPolicy paragraph() { return {ChunkPolicyKind::Paragraph, 0, 0}; }
  static ChunkPolicy random_k(int k, uint64_t seed) { return {ChunkPolicyKind::RandomK, k, seed}; }
};

// Groups utterances into chunks per (speaker, genre) group. Paragraph policy
// requires paragraph_id on every utterance; random-k shuffles each group with
// a group-forked stream and cuts runs of k (last chunk keeps the remainder).
std::vector<ChunkRecord> build_chunks(const CorpusManifest& manifest, const ChunkPolicy& policy);

// Manifest file pair: JSONL records at `path`, float payloads in the
// sidecar `path_without_extension.tensors`.
void save_manifest(const CorpusManifest& manifest, const std::string& path);
CorpusManifest load_manifest(const std::string& path);
std::string manifest_sidecar_path(const std::string& manifest_path);

// Synthetic corpus factors. Speaker timbre = spectral tilt + base F0;
// genre = pitch-range multiplier + mean-duration scale; per-utterance local
// prosody = smooth random contours.
struct SynthSpeaker {
  std::string label;
  double tilt = 0.0;      // spectral slope across mel channels
  double base_f0 = 150.0; // Hz
};

struct SynthGenre {
  std::string label;
  double pitch_range = 1.0;  // contour amplitude multiplier
  double dur_scale = 1.0;    // mean duration multiplier
};

struct SynthPair {
  std::string speaker;
  std::string genre;
  int utterances = 0;
};

struct SynthSpec {
  std::vector<SynthSpeaker> speakers;
  std::vector<SynthGenre> genres;
  std::vector<SynthPair> pairs;      // co-occurrence layout
  int n_mels = 20;                   // last channel is the pitch band
  int phoneme_inventory = 40;
  int min_phonemes = 6;
  int max_phonemes = 12;
  int min_frames_per_phoneme = 2;
  int max_frames_per_phoneme = 6;
  int paragraph_len = 5;             // utterances per paragraph_id
};

SynthSpec synth_spec_from_json(const std::string& json_text);
std::string synth_spec_to_json(const SynthSpec& spec);

// Built-in layouts: "desk" (4 speakers x 3 genres with two neutral-only
// speakers) and "mst" (the disjoint 11-speaker / 3-genre shape used by the
// routing tests).
SynthSpec builtin_synth_spec(const std::string& name);

CorpusManifest generate_synthetic_corpus(const SynthSpec& spec, uint64_t seed);

// Derives the acoustics the synthetic corpus embeds into its mel features:
// energy is the mean of exp(mel) over the envelope channels, F0 comes from
// the dedicated pitch band (last channel, log1p(f0/50)).
void acoustics_from_mel(const Tensor& mel, Tensor& f0_out, Tensor& energy_out);

}  // namespace stylecast
