#include "stylecast/model.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

namespace stylecast {

using nlohmann::json;

void ModelConfig::validate() const {
  if (conv_channels.size() != 6) {
    throw std::invalid_argument("model config: conv_channels must list exactly 6 layers");
  }
  for (int c : conv_channels) {
    if (c < 1) throw std::invalid_argument("model config: conv channels must be >= 1");
  }
  const int dims[] = {n_mels,         conv_kernel,    inter_dim,        lpe_dim,
                      lpe_gru_hidden, gse_dim,        gse_utt_gru_hidden, gse_chunk_gru_hidden,
                      phoneme_inventory, text_embed_dim, text_conv_kernel, text_encoder_dim,
                      spk_embed_dim,  decoder_hidden, classifier_hidden};
  for (int d : dims) {
    if (d < 1) throw std::invalid_argument("model config: all dimensions must be >= 1");
  }
  if (conv_kernel % 2 == 0 || text_conv_kernel % 2 == 0) {
    throw std::invalid_argument("model config: conv kernels must be odd for same-length padding");
  }
}

std::string ModelConfig::to_json() const {
  json j;
  j["n_mels"] = n_mels;
  j["conv_channels"] = conv_channels;
  j["conv_kernel"] = conv_kernel;
  j["inter_dim"] = inter_dim;
  j["lpe_dim"] = lpe_dim;
  j["lpe_gru_hidden"] = lpe_gru_hidden;
  j["gse_dim"] = gse_dim;
  j["gse_utt_gru_hidden"] = gse_utt_gru_hidden;
  j["gse_chunk_gru_hidden"] = gse_chunk_gru_hidden;
  j["phoneme_inventory"] = phoneme_inventory;
  j["text_embed_dim"] = text_embed_dim;
  j["text_conv_kernel"] = text_conv_kernel;
  j["text_encoder_dim"] = text_encoder_dim;
  j["spk_embed_dim"] = spk_embed_dim;
  j["decoder_hidden"] = decoder_hidden;
  j["classifier_hidden"] = classifier_hidden;
  j["no_genre_branch"] = no_genre_branch;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  ModelConfig c;
  c.n_mels = j.at("n_mels").get<int>();
  c.conv_channels = j.at("conv_channels").get<std::vector<int>>();
  c.conv_kernel = j.at("conv_kernel").get<int>();
  c.inter_dim = j.at("inter_dim").get<int>();
  c.lpe_dim = j.at("lpe_dim").get<int>();
  c.lpe_gru_hidden = j.at("lpe_gru_hidden").get<int>();
  c.gse_dim = j.at("gse_dim").get<int>();
  c.gse_utt_gru_hidden = j.at("gse_utt_gru_hidden").get<int>();
  c.gse_chunk_gru_hidden = j.at("gse_chunk_gru_hidden").get<int>();
  c.phoneme_inventory = j.at("phoneme_inventory").get<int>();
  c.text_embed_dim = j.at("text_embed_dim").get<int>();
  c.text_conv_kernel = j.at("text_conv_kernel").get<int>();
  c.text_encoder_dim = j.at("text_encoder_dim").get<int>();
  c.spk_embed_dim = j.at("spk_embed_dim").get<int>();
  c.decoder_hidden = j.at("decoder_hidden").get<int>();
  c.classifier_hidden = j.at("classifier_hidden").get<int>();
  c.no_genre_branch = j.at("no_genre_branch").get<bool>();
  c.validate();
  return c;
}

GruParams create_gru(ParamStore& store, const std::string& prefix, int input_dim, int hidden_dim,
                     const Rng& init_rng) {
  GruParams p;
  auto weight = [&](const std::string& name, int r, int c) {
    ParamTensor& t = store.create(prefix + "." + name, r, c);
    init_xavier(t, init_rng);
    return &t;
  };
  auto bias = [&](const std::string& name) {
    ParamTensor& t = store.create(prefix + "." + name, 1, hidden_dim);
    return &t;
  };
  p.w_ir = weight("w_ir", input_dim, hidden_dim);
  p.w_iz = weight("w_iz", input_dim, hidden_dim);
  p.w_in = weight("w_in", input_dim, hidden_dim);
  p.w_hr = weight("w_hr", hidden_dim, hidden_dim);
  p.w_hz = weight("w_hz", hidden_dim, hidden_dim);
  p.w_hn = weight("w_hn", hidden_dim, hidden_dim);
  p.b_ir = bias("b_ir");
  p.b_iz = bias("b_iz");
  p.b_in = bias("b_in");
  p.b_hr = bias("b_hr");
  p.b_hz = bias("b_hz");
  p.b_hn = bias("b_hn");
  return p;
}

GruParams bind_gru(ParamStore& store, const std::string& prefix) {
  GruParams p;
  p.w_ir = &store.get(prefix + ".w_ir");
  p.w_iz = &store.get(prefix + ".w_iz");
  p.w_in = &store.get(prefix + ".w_in");
  p.w_hr = &store.get(prefix + ".w_hr");
  p.w_hz = &store.get(prefix + ".w_hz");
  p.w_hn = &store.get(prefix + ".w_hn");
  p.b_ir = &store.get(prefix + ".b_ir");
  p.b_iz = &store.get(prefix + ".b_iz");
  p.b_in = &store.get(prefix + ".b_in");
  p.b_hr = &store.get(prefix + ".b_hr");
  p.b_hz = &store.get(prefix + ".b_hz");
  p.b_hn = &store.get(prefix + ".b_hn");
  return p;
}

Var run_gru(Graph& g, const GruParams& p, Var x) {
  Graph::GruVars v;
  v.w_ir = g.param(*p.w_ir);
  v.w_iz = g.param(*p.w_iz);
  v.w_in = g.param(*p.w_in);
  v.w_hr = g.param(*p.w_hr);
  v.w_hz = g.param(*p.w_hz);
  v.w_hn = g.param(*p.w_hn);
  v.b_ir = g.param(*p.b_ir);
  v.b_iz = g.param(*p.b_iz);
  v.b_in = g.param(*p.b_in);
  v.b_hr = g.param(*p.b_hr);
  v.b_hz = g.param(*p.b_hz);
  v.b_hn = g.param(*p.b_hn);
  return g.gru_seq(x, v);
}

StyleModel::StyleModel(ModelConfig cfg, std::vector<std::string> speakers,
                       std::vector<std::string> genres, uint64_t seed)
    : cfg_(std::move(cfg)), speakers_(std::move(speakers)), genres_(std::move(genres)) {
  cfg_.validate();
  if (speakers_.empty() || genres_.empty()) {
    throw std::invalid_argument("model: speaker and genre label sets must be non-empty");
  }
  std::sort(speakers_.begin(), speakers_.end());
  std::sort(genres_.begin(), genres_.end());

  const Rng init(seed);
  int in_ch = cfg_.n_mels;
  for (int layer = 0; layer < 6; ++layer) {
    const int out_ch = cfg_.conv_channels[layer];
    ParamTensor& w =
        store_.create("conv." + std::to_string(layer) + ".w", in_ch * cfg_.conv_kernel, out_ch);
    init_xavier(w, init);
    store_.create("conv." + std::to_string(layer) + ".b", 1, out_ch);
    in_ch = out_ch;
  }

  ParamTensor& iw = store_.create("inter.w", cfg_.conv_channels.back() + 2, cfg_.inter_dim);
  init_xavier(iw, init);
  store_.create("inter.b", 1, cfg_.inter_dim);

  create_gru(store_, "lpe.gru", cfg_.inter_dim, cfg_.lpe_gru_hidden, init);
  ParamTensor& lw = store_.create("lpe.out.w", cfg_.lpe_gru_hidden, cfg_.lpe_dim);
  init_xavier(lw, init);
  store_.create("lpe.out.b", 1, cfg_.lpe_dim);

  // Both global branches share the structure but never the parameters.
  for (const char* branch : {"timbre", "genre"}) {
    if (cfg_.no_genre_branch && std::string(branch) == "genre") continue;
    const std::string prefix = std::string("gse.") + branch;
    create_gru(store_, prefix + ".utt", cfg_.inter_dim, cfg_.gse_utt_gru_hidden, init);
    create_gru(store_, prefix + ".chunk", cfg_.gse_utt_gru_hidden, cfg_.gse_chunk_gru_hidden,
               init);
    ParamTensor& ow = store_.create(prefix + ".out.w", cfg_.gse_chunk_gru_hidden, cfg_.gse_dim);
    init_xavier(ow, init);
    store_.create(prefix + ".out.b", 1, cfg_.gse_dim);
  }

  ParamTensor& emb = store_.create("text.embed", cfg_.phoneme_inventory, cfg_.text_embed_dim);
  init_uniform(emb, init, -0.1, 0.1);
  ParamTensor& tcw = store_.create("text.conv.w", cfg_.text_embed_dim * cfg_.text_conv_kernel,
                                   cfg_.text_encoder_dim);
  init_xavier(tcw, init);
  store_.create("text.conv.b", 1, cfg_.text_encoder_dim);
  create_gru(store_, "text.gru", cfg_.text_encoder_dim, cfg_.text_encoder_dim, init);

  ParamTensor& spk = store_.create("spk.table", static_cast<int>(speakers_.size()),
                                   cfg_.spk_embed_dim);
  init_uniform(spk, init, -0.1, 0.1);
}

int StyleModel::speaker_index(const std::string& label) const {
  auto it = std::lower_bound(speakers_.begin(), speakers_.end(), label);
  if (it == speakers_.end() || *it != label) {
    throw std::out_of_range("model: unknown speaker '" + label + "'");
  }
  return static_cast<int>(it - speakers_.begin());
}

int StyleModel::genre_index(const std::string& label) const {
  auto it = std::lower_bound(genres_.begin(), genres_.end(), label);
  if (it == genres_.end() || *it != label) {
    throw std::out_of_range("model: unknown genre '" + label + "'");
  }
  return static_cast<int>(it - genres_.begin());
}

Var StyleModel::conv_frontend(Graph& g, const Tensor& mel) {
  if (mel.cols != cfg_.n_mels) {
    throw std::invalid_argument("conv_frontend: mel has " + std::to_string(mel.cols) +
                                " channels, config expects " + std::to_string(cfg_.n_mels));
  }
  if (mel.rows < 1) throw std::invalid_argument("conv_frontend: empty mel");
  Var h = g.input(mel);
  const int half = cfg_.conv_kernel / 2;
  for (int layer = 0; layer < 6; ++layer) {
    std::vector<Var> taps;
    taps.reserve(cfg_.conv_kernel);
    for (int k = -half; k <= half; ++k) taps.push_back(g.shift_rows(h, k));
    Var cols = g.concat_cols(taps);
    Var w = g.param(store_.get("conv." + std::to_string(layer) + ".w"));
    Var b = g.param(store_.get("conv." + std::to_string(layer) + ".b"));
    h = g.hardswish_(g.affine(cols, w, b));
  }
  return h;
}

Var StyleModel::intermediate_features(Graph& g, const UtteranceRecord& utt) {
  Var conv = conv_frontend(g, utt.mel);
  Var reg = g.segment_mean_rows(conv, utt.durations);
  const Tensor acoustics = stats_.apply(phoneme_acoustics(utt.f0, utt.energy, utt.durations));
  Var ac = g.input(acoustics);
  Var cat = g.concat_cols({reg, ac});
  Var w = g.param(store_.get("inter.w"));
  Var b = g.param(store_.get("inter.b"));
  return g.hardswish_(g.affine(cat, w, b));
}

Var StyleModel::mlp_tail(Graph& g, Var h, const std::string& w_name, const std::string& b_name) {
  Var w = g.param(store_.get(w_name));
  Var b = g.param(store_.get(b_name));
  return g.affine(h, w, b);
}

Var StyleModel::local_prosody(Graph& g, Var inter) {
  Var h = run_gru(g, bind_gru(store_, "lpe.gru"), inter);
  return g.tanh_(mlp_tail(g, h, "lpe.out.w", "lpe.out.b"));
}

Var StyleModel::chunk_gse(Graph& g, GseBranch branch, const std::vector<Var>& inters) {
  if (inters.empty()) throw std::invalid_argument("chunk_gse: empty chunk");
  if (branch == GseBranch::Genre && cfg_.no_genre_branch) {
    throw std::logic_error("chunk_gse: genre branch is disabled by configuration");
  }
  const std::string prefix = std::string("gse.") + branch_name(branch);
  const GruParams utt_gru = bind_gru(store_, prefix + ".utt");
  std::vector<Var> finals;
  finals.reserve(inters.size());
  for (Var inter : inters) {
    Var seq = run_gru(g, utt_gru, inter);
    finals.push_back(g.row(seq, inter.rows - 1));
  }
  Var stacked = finals.size() == 1 ? finals[0] : g.concat_rows(finals);
  Var chunk_seq = run_gru(g, bind_gru(store_, prefix + ".chunk"), stacked);
  Var last = g.row(chunk_seq, stacked.rows - 1);
  return g.tanh_(mlp_tail(g, last, prefix + ".out.w", prefix + ".out.b"));
}

Var StyleModel::encode_text(Graph& g, const std::vector<int>& phoneme_ids) {
  if (phoneme_ids.empty()) throw std::invalid_argument("encode_text: empty phoneme sequence");
  for (int id : phoneme_ids) {
    if (id < 0 || id >= cfg_.phoneme_inventory) {
      throw std::out_of_range("encode_text: phoneme id " + std::to_string(id) +
                              " outside inventory");
    }
  }
  Var table = g.param(store_.get("text.embed"));
  Var e = g.rows_gather(table, phoneme_ids);
  const int half = cfg_.text_conv_kernel / 2;
  std::vector<Var> taps;
  taps.reserve(cfg_.text_conv_kernel);
  for (int k = -half; k <= half; ++k) taps.push_back(g.shift_rows(e, k));
  Var cols = g.concat_cols(taps);
  Var w = g.param(store_.get("text.conv.w"));
  Var b = g.param(store_.get("text.conv.b"));
  Var conv = g.hardswish_(g.affine(cols, w, b));
  return run_gru(g, bind_gru(store_, "text.gru"), conv);
}

Var StyleModel::condition(Graph& g, Var text, Var lpe, std::optional<Var> timbre_gse,
                          std::optional<Var> genre_gse, std::optional<Var> speaker_embed) {
  if (lpe.rows != text.rows) {
    throw std::invalid_argument("condition: LPE row count " + std::to_string(lpe.rows) +
                                " != text row count " + std::to_string(text.rows));
  }
  std::vector<Var> blocks = {text, lpe};
  if (timbre_gse) blocks.push_back(g.repeat_row(*timbre_gse, text.rows));
  if (genre_gse) blocks.push_back(g.repeat_row(*genre_gse, text.rows));
  if (speaker_embed) blocks.push_back(g.repeat_row(*speaker_embed, text.rows));
  return g.concat_cols(blocks);
}

Var StyleModel::decode(Graph& g, Var cond, const std::vector<int>& durations) {
  if (!has_decoder()) throw std::logic_error("decode: decoder has not been created");
  Var frames = g.length_regulate(cond, durations);
  Var h = run_gru(g, bind_gru(store_, "dec.gru"), frames);
  return mlp_tail(g, h, "dec.out.w", "dec.out.b");
}

Var StyleModel::speaker_embedding(Graph& g, const std::string& speaker) {
  Var table = g.param(store_.get("spk.table"));
  return g.rows_gather(table, {speaker_index(speaker)});
}

int StyleModel::conditioned_width(int stage) const {
  const int base = cfg_.text_encoder_dim + cfg_.lpe_dim;
  if (stage == 1) return base + cfg_.spk_embed_dim;
  if (stage == 2) return base + cfg_.gse_dim + (cfg_.no_genre_branch ? 0 : cfg_.gse_dim);
  throw std::invalid_argument("conditioned_width: stage must be 1 or 2");
}

void StyleModel::create_decoder(int stage, uint64_t seed) {
  store_.remove_prefix("dec.");
  const Rng init{seed};
  create_gru(store_, "dec.gru", conditioned_width(stage), cfg_.decoder_hidden, init);
  ParamTensor& ow = store_.create("dec.out.w", cfg_.decoder_hidden, cfg_.n_mels);
  init_xavier(ow, init);
  store_.create("dec.out.b", 1, cfg_.n_mels);
}

Tensor StyleModel::lpe_of(const UtteranceRecord& utt) {
  Graph g;
  Var lpe = local_prosody(g, intermediate_features(g, utt));
  return g.value(lpe);
}

Tensor StyleModel::gse_of_chunk(GseBranch branch, const std::vector<const UtteranceRecord*>& utts) {
  Graph g;
  std::vector<Var> inters;
  inters.reserve(utts.size());
  for (const UtteranceRecord* u : utts) inters.push_back(intermediate_features(g, *u));
  return g.value(chunk_gse(g, branch, inters));
}

}  // namespace stylecast
