#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stylecast/autograd.hpp"
#include "stylecast/corpus.hpp"
#include "stylecast/features.hpp"
#include "stylecast/params.hpp"

namespace stylecast {

struct ModelConfig {
  int n_mels = 80;
  std::vector<int> conv_channels = {64, 64, 128, 128, 256, 256};  // exactly 6 layers
  int conv_kernel = 3;
  int inter_dim = 128;       // D
  int lpe_dim = 4;
  int lpe_gru_hidden = 128;
  int gse_dim = 64;          // G
  int gse_utt_gru_hidden = 128;
  int gse_chunk_gru_hidden = 128;
  int phoneme_inventory = 64;
  int text_embed_dim = 128;
  int text_conv_kernel = 5;
  int text_encoder_dim = 128;  // E
  int spk_embed_dim = 64;      // S, stage-1 temporary table
  int decoder_hidden = 256;
  int classifier_hidden = 128;
  bool no_genre_branch = false;

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

enum class GseBranch { Timbre, Genre };
inline const char* branch_name(GseBranch b) { return b == GseBranch::Timbre ? "timbre" : "genre"; }

// GRU parameter bundle living in a ParamStore under a common prefix.
struct GruParams {
  ParamTensor* w_ir;
  ParamTensor* w_iz;
  ParamTensor* w_in;
  ParamTensor* w_hr;
  ParamTensor* w_hz;
  ParamTensor* w_hn;
  ParamTensor* b_ir;
  ParamTensor* b_iz;
  ParamTensor* b_in;
  ParamTensor* b_hr;
  ParamTensor* b_hz;
  ParamTensor* b_hn;
};

GruParams create_gru(ParamStore& store, const std::string& prefix, int input_dim, int hidden_dim,
                     const Rng& init_rng);
GruParams bind_gru(ParamStore& store, const std::string& prefix);
Var run_gru(Graph& g, const GruParams& p, Var x);

// The multi-scale style model: chunk-wise reference encoder plus the
// duration-driven acoustic backbone. All parameters live in one store so
// the trainer can freeze and checkpoint by name prefix.
class StyleModel {
 public:
  StyleModel(ModelConfig cfg, std::vector<std::string> speakers, std::vector<std::string> genres,
             uint64_t seed);

  // --- reference encoder ---
  Var conv_frontend(Graph& g, const Tensor& mel);
  // conv -> phoneme regularization -> concat [conv | logF0 | energy] ->
  // linear + Hardswish. Acoustics are standardized with feature_stats().
  Var intermediate_features(Graph& g, const UtteranceRecord& utt);
  Var local_prosody(Graph& g, Var inter);
  Var chunk_gse(Graph& g, GseBranch branch, const std::vector<Var>& inters);

  // --- acoustic backbone ---
  Var encode_text(Graph& g, const std::vector<int>& phoneme_ids);
  Var condition(Graph& g, Var text, Var lpe, std::optional<Var> timbre_gse,
                std::optional<Var> genre_gse, std::optional<Var> speaker_embed);
  Var decode(Graph& g, Var cond, const std::vector<int>& durations);
  Var speaker_embedding(Graph& g, const std::string& speaker);

  // Inference conveniences (fresh throwaway graph per call).
  Tensor lpe_of(const UtteranceRecord& utt);
  Tensor gse_of_chunk(GseBranch branch, const std::vector<const UtteranceRecord*>& utts);

  // Decoder lifecycle: input width depends on the stage conditioning.
  int conditioned_width(int stage) const;
  void create_decoder(int stage, uint64_t seed);
  bool has_decoder() const { return store_.contains("dec.out.w"); }
  void drop_speaker_table() { store_.remove_prefix("spk."); }
  bool has_speaker_table() const { return store_.contains("spk.table"); }
  bool has_genre_branch() const { return !cfg_.no_genre_branch; }

  int speaker_index(const std::string& label) const;
  int genre_index(const std::string& label) const;
  const std::vector<std::string>& speakers() const { return speakers_; }
  const std::vector<std::string>& genres() const { return genres_; }

  ParamStore& params() { return store_; }
  const ModelConfig& config() const { return cfg_; }
  FeatureStats& feature_stats() { return stats_; }
  const FeatureStats& feature_stats() const { return stats_; }

 private:
  Var mlp_tail(Graph& g, Var h, const std::string& w_name, const std::string& b_name);

  ModelConfig cfg_;
  std::vector<std::string> speakers_;
  std::vector<std::string> genres_;
  ParamStore store_;
  FeatureStats stats_;
};

}  // namespace stylecast
