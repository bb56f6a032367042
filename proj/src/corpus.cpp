#include "stylecast/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "stylecast/io.hpp"
#include "stylecast/rng.hpp"

namespace stylecast {

using nlohmann::json;

const UtteranceRecord& CorpusManifest::utterance(const std::string& id) const {
  auto it = utterances.find(id);
  if (it == utterances.end()) throw std::out_of_range("manifest: unknown utterance '" + id + "'");
  return it->second;
}

std::vector<std::string> CorpusManifest::utterance_ids() const {
  std::vector<std::string> ids;
  ids.reserve(utterances.size());
  for (const auto& [id, u] : utterances) ids.push_back(id);
  return ids;
}

void CorpusManifest::validate() const {
  for (const auto& [id, u] : utterances) {
    if (u.phonemes.empty() || u.phonemes.size() != u.durations.size()) {
      throw std::runtime_error("manifest integrity: utterance '" + id +
                               "' phoneme/duration length mismatch");
    }
    long sum = 0;
    for (int d : u.durations) {
      if (d < 1) throw std::runtime_error("manifest integrity: utterance '" + id +
                                          "' has a duration < 1");
      sum += d;
    }
    if (sum != u.mel.rows || u.mel.cols != n_mels) {
      throw std::runtime_error("manifest integrity: utterance '" + id +
                               "' durations sum to " + std::to_string(sum) + " but mel is " +
                               u.mel.shape_str());
    }
    if (u.f0.rows != u.mel.rows || u.f0.cols != 1 || u.energy.rows != u.mel.rows ||
        u.energy.cols != 1) {
      throw std::runtime_error("manifest integrity: utterance '" + id +
                               "' f0/energy length mismatch");
    }
    for (float e : u.energy.data) {
      if (e < 0.0f) throw std::runtime_error("manifest integrity: utterance '" + id +
                                             "' has negative energy");
    }
    if (!speakers.count(u.speaker)) {
      throw std::runtime_error("manifest integrity: speaker '" + u.speaker + "' not declared");
    }
    if (!genres.count(u.genre)) {
      throw std::runtime_error("manifest integrity: genre '" + u.genre + "' not declared");
    }
    for (int p : u.phonemes) {
      if (p < 0 || p >= phoneme_inventory) {
        throw std::runtime_error("manifest integrity: utterance '" + id +
                                 "' phoneme id outside inventory");
      }
    }
  }
  std::set<std::string> claimed;
  for (const ChunkRecord& c : chunks) {
    if (c.utterance_ids.empty()) {
      throw std::runtime_error("manifest integrity: chunk '" + c.chunk_id + "' is empty");
    }
    for (const std::string& uid : c.utterance_ids) {
      auto it = utterances.find(uid);
      if (it == utterances.end()) {
        throw std::runtime_error("manifest integrity: chunk '" + c.chunk_id +
                                 "' references missing utterance '" + uid + "'");
      }
      if (it->second.speaker != c.speaker || it->second.genre != c.genre) {
        throw std::runtime_error("manifest integrity: chunk '" + c.chunk_id +
                                 "' mixes speaker/genre labels");
      }
      if (!claimed.insert(uid).second) {
        throw std::runtime_error("manifest integrity: utterance '" + uid +
                                 "' appears in more than one chunk");
      }
    }
  }
}

std::vector<ChunkRecord> build_chunks(const CorpusManifest& manifest, const ChunkPolicy& policy) {
  // Group key -> ordered utterance ids (map iteration keeps this deterministic).
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> groups;
  for (const auto& [id, u] : manifest.utterances) {
    groups[{u.speaker, u.genre}].push_back(id);
  }

  std::vector<ChunkRecord> chunks;
  if (policy.kind == ChunkPolicyKind::Paragraph) {
    for (const auto& [key, ids] : groups) {
      std::map<std::string, std::vector<std::string>> paragraphs;
      for (const std::string& id : ids) {
        const UtteranceRecord& u = manifest.utterance(id);
        if (!u.paragraph_id) {
          throw std::runtime_error("paragraph chunk policy: utterance '" + id +
                                   "' has no paragraph_id");
        }
        paragraphs[*u.paragraph_id].push_back(id);
      }
      for (const auto& [pid, members] : paragraphs) {
        ChunkRecord c;
        c.chunk_id = key.first + "." + key.second + ".par." + pid;
        c.speaker = key.first;
        c.genre = key.second;
        c.utterance_ids = members;
        chunks.push_back(std::move(c));
      }
    }
    return chunks;
  }

  if (policy.k < 1) throw std::invalid_argument("random-k chunk policy: k must be >= 1");
  Rng base(policy.seed);
  for (const auto& [key, ids] : groups) {
    std::vector<std::string> order = ids;
    Rng r = base.fork("chunks/" + key.first + "/" + key.second);
    r.shuffle(order);
    int index = 0;
    for (size_t start = 0; start < order.size(); start += policy.k) {
      const size_t end = std::min(order.size(), start + policy.k);
      ChunkRecord c;
      c.chunk_id = key.first + "." + key.second + ".c" + std::to_string(index++);
      c.speaker = key.first;
      c.genre = key.second;
      c.utterance_ids.assign(order.begin() + start, order.begin() + end);
      chunks.push_back(std::move(c));
    }
  }
  return chunks;
}

std::string manifest_sidecar_path(const std::string& manifest_path) {
  const size_t dot = manifest_path.find_last_of('.');
  const size_t slash = manifest_path.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) {
    return manifest_path + ".tensors";
  }
  return manifest_path.substr(0, dot) + ".tensors";
}

void save_manifest(const CorpusManifest& manifest, const std::string& path) {
  manifest.validate();
  std::ostringstream out;

  json header;
  header["record"] = "header";
  header["version"] = 1;
  header["n_mels"] = manifest.n_mels;
  header["phoneme_inventory"] = manifest.phoneme_inventory;
  header["speakers"] = json::array();
  for (const auto& s : manifest.speakers) header["speakers"].push_back(s);
  header["genres"] = json::array();
  for (const auto& g : manifest.genres) header["genres"].push_back(g);
  header["chunks"] = json::array();
  for (const ChunkRecord& c : manifest.chunks) {
    json jc;
    jc["chunk_id"] = c.chunk_id;
    jc["speaker"] = c.speaker;
    jc["genre"] = c.genre;
    jc["utterance_ids"] = c.utterance_ids;
    header["chunks"].push_back(jc);
  }
  out << header.dump() << "\n";

  TensorStore store;
  for (const auto& [id, u] : manifest.utterances) {
    json ju;
    ju["record"] = "utterance";
    ju["utterance_id"] = u.utterance_id;
    ju["speaker"] = u.speaker;
    ju["genre"] = u.genre;
    if (u.paragraph_id) ju["paragraph_id"] = *u.paragraph_id;
    ju["phonemes"] = u.phonemes;
    ju["durations"] = u.durations;
    out << ju.dump() << "\n";

    store.put(id + "/mel", u.mel);
    store.put(id + "/f0", u.f0);
    store.put(id + "/energy", u.energy);
  }

  write_file_text(path, out.str());
  store.save(manifest_sidecar_path(path));
}

CorpusManifest load_manifest(const std::string& path) {
  const std::string text = read_file_text(path);
  const TensorStore store = TensorStore::load(manifest_sidecar_path(path));

  CorpusManifest m;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error("manifest parse error at line " + std::to_string(line_no) + ": " +
                               e.what());
    }
    const std::string record = j.value("record", "");
    if (record == "header") {
      saw_header = true;
      m.n_mels = j.at("n_mels").get<int>();
      m.phoneme_inventory = j.at("phoneme_inventory").get<int>();
      for (const auto& s : j.at("speakers")) m.speakers.insert(s.get<std::string>());
      for (const auto& g : j.at("genres")) m.genres.insert(g.get<std::string>());
      for (const auto& jc : j.at("chunks")) {
        ChunkRecord c;
        c.chunk_id = jc.at("chunk_id").get<std::string>();
        c.speaker = jc.at("speaker").get<std::string>();
        c.genre = jc.at("genre").get<std::string>();
        c.utterance_ids = jc.at("utterance_ids").get<std::vector<std::string>>();
        m.chunks.push_back(std::move(c));
      }
    } else if (record == "utterance") {
      UtteranceRecord u;
      try {
        u.utterance_id = j.at("utterance_id").get<std::string>();
        u.speaker = j.at("speaker").get<std::string>();
        u.genre = j.at("genre").get<std::string>();
        if (j.contains("paragraph_id")) u.paragraph_id = j.at("paragraph_id").get<std::string>();
        u.phonemes = j.at("phonemes").get<std::vector<int>>();
        u.durations = j.at("durations").get<std::vector<int>>();
      } catch (const json::exception& e) {
        throw std::runtime_error("manifest parse error at line " + std::to_string(line_no) + ": " +
                                 e.what());
      }
      u.mel = store.get(u.utterance_id + "/mel");
      u.f0 = store.get(u.utterance_id + "/f0");
      u.energy = store.get(u.utterance_id + "/energy");
      m.utterances.emplace(u.utterance_id, std::move(u));
    } else {
      throw std::runtime_error("manifest parse error at line " + std::to_string(line_no) +
                               ": unknown record type '" + record + "'");
    }
  }
  if (!saw_header) throw std::runtime_error("manifest parse error: missing header record");
  m.validate();
  return m;
}

namespace {

// Smooth random contour in roughly [-1, 1]: a few low-frequency sinusoids.
struct Contour {
  double a[3], f[3], ph[3];

  static Contour sample(Rng& r) {
    Contour c;
    double norm = 0.0;
    for (int i = 0; i < 3; ++i) {
      c.a[i] = r.uniform(0.3, 1.0);
      c.f[i] = r.uniform(0.5, 2.5);
      c.ph[i] = r.uniform(0.0, 2.0 * M_PI);
      norm += c.a[i];
    }
    for (int i = 0; i < 3; ++i) c.a[i] /= norm;
    return c;
  }

  double at(double pos) const {  // pos in [0, 1]
    double v = 0.0;
    for (int i = 0; i < 3; ++i) v += a[i] * std::sin(2.0 * M_PI * f[i] * pos + ph[i]);
    return v;
  }
};

}  // namespace

void acoustics_from_mel(const Tensor& mel, Tensor& f0_out, Tensor& energy_out) {
  if (mel.cols < 2) throw std::invalid_argument("acoustics_from_mel: need >= 2 mel channels");
  const int frames = mel.rows;
  const int env_channels = mel.cols - 1;
  f0_out = Tensor(frames, 1);
  energy_out = Tensor(frames, 1);
  for (int t = 0; t < frames; ++t) {
    double acc = 0.0;
    for (int c = 0; c < env_channels; ++c) acc += std::exp(static_cast<double>(mel.at(t, c)));
    energy_out.at(t, 0) = static_cast<float>(acc / env_channels);
    const double pitch_band = mel.at(t, mel.cols - 1);
    const double f0 = 50.0 * (std::exp(pitch_band) - 1.0);
    f0_out.at(t, 0) = static_cast<float>(f0 < 1.0 ? 0.0 : f0);
  }
}

CorpusManifest generate_synthetic_corpus(const SynthSpec& spec, uint64_t seed) {
  if (spec.speakers.empty() || spec.genres.empty()) {
    throw std::invalid_argument("synthetic corpus: speaker and genre sets must be non-empty");
  }
  std::map<std::string, SynthSpeaker> speaker_by_label;
  for (const auto& s : spec.speakers) speaker_by_label[s.label] = s;
  std::map<std::string, SynthGenre> genre_by_label;
  for (const auto& g : spec.genres) genre_by_label[g.label] = g;

  CorpusManifest m;
  m.n_mels = spec.n_mels;
  m.phoneme_inventory = spec.phoneme_inventory;
  for (const auto& s : spec.speakers) m.speakers.insert(s.label);
  for (const auto& g : spec.genres) m.genres.insert(g.label);

  const int env_channels = spec.n_mels - 1;
  Rng base(seed);

  for (const SynthPair& pair : spec.pairs) {
    auto sit = speaker_by_label.find(pair.speaker);
    auto git = genre_by_label.find(pair.genre);
    if (sit == speaker_by_label.end()) {
      throw std::invalid_argument("synthetic corpus: pair references unknown speaker '" +
                                  pair.speaker + "'");
    }
    if (git == genre_by_label.end()) {
      throw std::invalid_argument("synthetic corpus: pair references unknown genre '" +
                                  pair.genre + "'");
    }
    const SynthSpeaker& spk = sit->second;
    const SynthGenre& gen = git->second;

    for (int i = 0; i < pair.utterances; ++i) {
      // Stream keyed by (speaker, genre, index): utterances are independent
      // of pair enumeration order.
      Rng r = base.fork("utt/" + pair.speaker + "/" + pair.genre + "/" + std::to_string(i));

      UtteranceRecord u;
      u.speaker = pair.speaker;
      u.genre = pair.genre;
      {
        std::ostringstream id;
        id << pair.speaker << "." << pair.genre << ".u";
        id.width(4);
        id.fill('0');
        id << i;
        u.utterance_id = id.str();
      }
      u.paragraph_id = pair.speaker + "." + pair.genre + ".p" +
                       std::to_string(i / std::max(1, spec.paragraph_len));

      const int P = r.int_in(spec.min_phonemes, spec.max_phonemes);
      u.phonemes.resize(P);
      u.durations.resize(P);
      std::vector<bool> voiced(P);
      std::vector<double> formant_center(P), formant_amp(P);
      for (int p = 0; p < P; ++p) {
        u.phonemes[p] = static_cast<int>(r.below(spec.phoneme_inventory));
        const double raw =
            gen.dur_scale * r.uniform(spec.min_frames_per_phoneme, spec.max_frames_per_phoneme);
        u.durations[p] = std::max(1, static_cast<int>(std::lround(raw)));
        voiced[p] = r.coin(0.85);
        formant_center[p] = r.uniform(0.0, env_channels - 1.0);
        formant_amp[p] = r.uniform(0.5, 1.5);
      }

      int frames = 0;
      for (int d : u.durations) frames += d;
      const Contour pitch_contour = Contour::sample(r);
      const Contour energy_contour = Contour::sample(r);

      u.mel = Tensor(frames, spec.n_mels);
      u.f0 = Tensor(frames, 1);
      u.energy = Tensor(frames, 1);

      int t = 0;
      for (int p = 0; p < P; ++p) {
        const double bump = r.normal() * 0.25;
        for (int k = 0; k < u.durations[p]; ++k, ++t) {
          const double pos = frames > 1 ? static_cast<double>(t) / (frames - 1) : 0.0;
          const double f0 =
              voiced[p] ? spk.base_f0 * (1.0 + 0.25 * gen.pitch_range * pitch_contour.at(pos))
                        : 0.0;
          u.f0.at(t, 0) = static_cast<float>(std::max(0.0, f0));

          const double log_energy = 0.4 * energy_contour.at(pos) + bump;
          double sum_exp = 0.0;
          for (int c = 0; c < env_channels; ++c) {
            const double rel = env_channels > 1 ? static_cast<double>(c) / (env_channels - 1) : 0.0;
            const double dc = (c - formant_center[p]) / 1.5;
            double v = log_energy + spk.tilt * (rel - 0.5) +
                       formant_amp[p] * std::exp(-0.5 * dc * dc) + 0.05 * r.normal();
            u.mel.at(t, c) = static_cast<float>(v);
            sum_exp += std::exp(v);
          }
          u.mel.at(t, env_channels) = static_cast<float>(std::log1p(u.f0.at(t, 0) / 50.0));
          // Energy is defined from the emitted envelope so it stays
          // recoverable from mel alone.
          u.energy.at(t, 0) = static_cast<float>(sum_exp / env_channels);
        }
      }
      m.utterances.emplace(u.utterance_id, std::move(u));
    }
  }
  m.validate();
  return m;
}

SynthSpec synth_spec_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("synth spec parse error: ") + e.what());
  }
  SynthSpec spec;
  for (const auto& js : j.at("speakers")) {
    SynthSpeaker s;
    s.label = js.at("label").get<std::string>();
    s.tilt = js.value("tilt", 0.0);
    s.base_f0 = js.value("base_f0", 150.0);
    spec.speakers.push_back(s);
  }
  for (const auto& jg : j.at("genres")) {
    SynthGenre g;
    g.label = jg.at("label").get<std::string>();
    g.pitch_range = jg.value("pitch_range", 1.0);
    g.dur_scale = jg.value("dur_scale", 1.0);
    spec.genres.push_back(g);
  }
  for (const auto& jp : j.at("pairs")) {
    SynthPair p;
    p.speaker = jp.at(0).get<std::string>();
    p.genre = jp.at(1).get<std::string>();
    p.utterances = jp.at(2).get<int>();
    spec.pairs.push_back(p);
  }
  spec.n_mels = j.value("n_mels", spec.n_mels);
  spec.phoneme_inventory = j.value("phoneme_inventory", spec.phoneme_inventory);
  spec.min_phonemes = j.value("min_phonemes", spec.min_phonemes);
  spec.max_phonemes = j.value("max_phonemes", spec.max_phonemes);
  spec.min_frames_per_phoneme = j.value("min_frames_per_phoneme", spec.min_frames_per_phoneme);
  spec.max_frames_per_phoneme = j.value("max_frames_per_phoneme", spec.max_frames_per_phoneme);
  spec.paragraph_len = j.value("paragraph_len", spec.paragraph_len);
  return spec;
}

std::string synth_spec_to_json(const SynthSpec& spec) {
  json j;
  j["speakers"] = json::array();
  for (const auto& s : spec.speakers) {
    j["speakers"].push_back({{"label", s.label}, {"tilt", s.tilt}, {"base_f0", s.base_f0}});
  }
  j["genres"] = json::array();
  for (const auto& g : spec.genres) {
    j["genres"].push_back(
        {{"label", g.label}, {"pitch_range", g.pitch_range}, {"dur_scale", g.dur_scale}});
  }
  j["pairs"] = json::array();
  for (const auto& p : spec.pairs) j["pairs"].push_back({p.speaker, p.genre, p.utterances});
  j["n_mels"] = spec.n_mels;
  j["phoneme_inventory"] = spec.phoneme_inventory;
  j["min_phonemes"] = spec.min_phonemes;
  j["max_phonemes"] = spec.max_phonemes;
  j["min_frames_per_phoneme"] = spec.min_frames_per_phoneme;
  j["max_frames_per_phoneme"] = spec.max_frames_per_phoneme;
  j["paragraph_len"] = spec.paragraph_len;
  return j.dump(2);
}

SynthSpec builtin_synth_spec(const std::string& name) {
  SynthSpec spec;
  if (name == "desk") {
    spec.speakers = {
        {"spk_a", 2.0, 120.0},
        {"spk_b", 0.7, 170.0},
        {"spk_c", -0.7, 210.0},
        {"spk_d", -2.0, 250.0},
    };
    spec.genres = {
        {"neutral", 0.25, 1.0},
        {"fairy", 1.0, 1.15},
        {"fiction", 2.0, 0.85},
    };
    // Two narrators cover everything; two speakers are neutral-only, so the
    // modal genre of every speaker matches the corpus-wide modal genre.
    for (const std::string spk : {"spk_a", "spk_b"}) {
      spec.pairs.push_back({spk, "neutral", 20});
      spec.pairs.push_back({spk, "fairy", 15});
      spec.pairs.push_back({spk, "fiction", 15});
    }
    spec.pairs.push_back({"spk_c", "neutral", 50});
    spec.pairs.push_back({"spk_d", "neutral", 50});
    return spec;
  }
  if (name == "mst") {
    // Disjoint layout: 2 neutral-only speakers, one speaker shared between
    // neutral and fairy, 2 two-genre audiobook narrators, 5 single-genre
    // audiobook speakers.
    spec.speakers = {
        {"mst_f", 1.8, 220.0},  {"mst_m", 1.2, 120.0},  {"db6", 0.8, 200.0},
        {"ab_f", 0.4, 210.0},   {"ab_m", -0.2, 130.0},  {"ab_s3", -0.6, 180.0},
        {"ab_s4", -1.0, 160.0}, {"ab_s5", -1.4, 150.0}, {"ab_s6", -1.8, 190.0},
        {"ab_s7", 1.6, 140.0},
    };
    spec.genres = {
        {"neutral", 0.25, 1.0},
        {"fairy", 1.0, 1.15},
        {"fiction", 2.0, 0.85},
    };
    spec.pairs = {
        {"mst_f", "neutral", 10}, {"mst_m", "neutral", 10}, {"db6", "neutral", 10},
        {"db6", "fairy", 6},      {"ab_f", "fairy", 6},     {"ab_f", "fiction", 6},
        {"ab_m", "fairy", 6},     {"ab_m", "fiction", 6},   {"ab_s3", "fairy", 6},
        {"ab_s4", "fairy", 6},    {"ab_s5", "fiction", 6},  {"ab_s6", "fiction", 6},
        {"ab_s7", "fiction", 6},
    };
    return spec;
  }
  throw std::invalid_argument("unknown built-in synth layout '" + name + "'");
}

}  // namespace stylecast
