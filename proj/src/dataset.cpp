#include "uwav/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "uwav/tensor_io.hpp"

namespace uwav {

using nlohmann::json;

namespace {

json load_json(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw dataset_error(std::string(what) + " not found: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw dataset_error(std::string("malformed JSON in ") + path.string() + ": " + e.what());
  }
  return doc;
}

void dump_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw dataset_error("cannot open " + path.string() + " for writing");
  out << doc.dump(1) << "\n";
}

MatB parse_binary_matrix(const json& arr, std::size_t rows, std::size_t cols,
                         const std::string& context) {
  if (!arr.is_array() || arr.size() != rows)
    throw dataset_error(context + ": expected " + std::to_string(rows) + " rows");
  MatB m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& row = arr[r];
    if (!row.is_array() || row.size() != cols)
      throw dataset_error(context + ": row " + std::to_string(r) + " must have " +
                          std::to_string(cols) + " entries");
    for (std::size_t c = 0; c < cols; ++c) {
      const int v = row[c].get<int>();
      if (v != 0 && v != 1)
        throw dataset_error(context + ": entries must be 0 or 1");
      m.at(r, c) = std::uint8_t(v);
    }
  }
  return m;
}

json binary_matrix_json(const MatB& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows; ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < m.cols; ++c) row.push_back(int(m.at(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

json float_matrix_json(const MatF& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows; ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < m.cols; ++c) row.push_back(double(m.at(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatF parse_float_matrix(const json& arr, std::size_t rows, std::size_t cols,
                        const std::string& context) {
  if (!arr.is_array() || arr.size() != rows)
    throw dataset_error(context + ": expected " + std::to_string(rows) + " rows");
  MatF m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& row = arr[r];
    if (!row.is_array() || row.size() != cols)
      throw dataset_error(context + ": row " + std::to_string(r) + " must have " +
                          std::to_string(cols) + " entries");
    for (std::size_t c = 0; c < cols; ++c) m.at(r, c) = float(row[c].get<double>());
  }
  return m;
}

// Checks the LabelSet invariants for one video; context is the video id.
void validate_labels(const LabelSet& labels, std::size_t segments, std::size_t classes,
                     const std::string& video_id) {
  if (labels.video_labels.size() != classes)
    throw dataset_error("video " + video_id + ": video label length mismatch");
  auto check_shape = [&](const std::optional<MatB>& m, const char* name) {
    if (m && (m->rows != segments || m->cols != classes))
      throw dataset_error("video " + video_id + ": " + name + " must be " +
                          std::to_string(segments) + "x" + std::to_string(classes));
  };
  check_shape(labels.segment_visual, "segment_visual_labels");
  check_shape(labels.segment_audio, "segment_audio_labels");
  check_shape(labels.segment_av, "segment_av_labels");

  // Any segment-level positive requires the video-level label.
  for (std::size_t c = 0; c < classes; ++c) {
    bool any = false;
    for (std::size_t t = 0; t < segments; ++t) {
      if (labels.segment_visual && labels.segment_visual->at(t, c)) any = true;
      if (labels.segment_audio && labels.segment_audio->at(t, c)) any = true;
      if (labels.segment_av && labels.segment_av->at(t, c)) any = true;
    }
    if (any && !labels.video_labels[c])
      throw dataset_error("video " + video_id + ": segment labels contain class " +
                          std::to_string(c) + " but video_labels omit it");
  }
  if (labels.segment_visual && labels.segment_audio && labels.segment_av) {
    for (std::size_t t = 0; t < segments; ++t)
      for (std::size_t c = 0; c < classes; ++c) {
        const std::uint8_t expect =
            labels.segment_visual->at(t, c) && labels.segment_audio->at(t, c);
        if (labels.segment_av->at(t, c) != expect)
          throw dataset_error("video " + video_id +
                              ": segment_av_labels must be the AND of the visual and "
                              "audio segment labels");
      }
  }
}

// Orthonormal class prototypes for one feature space. The rng is seeded from
// embed_seed and a per-space tag only, so the prototype for class index c is
// identical across datasets sharing embed_seed and dim.
std::vector<std::vector<float>> make_prototypes(std::uint64_t embed_seed,
                                                std::uint64_t space_tag, std::size_t classes,
                                                std::size_t dim) {
  std::mt19937_64 rng(embed_seed ^ (0x9e3779b97f4a7c15ULL * (space_tag + 1)));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> rows;
  rows.reserve(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<double> v(dim);
    for (auto& x : v) x = gauss(rng);
    // Gram-Schmidt against earlier prototypes when the space is wide enough.
    if (c < dim) {
      for (const auto& prev : rows) {
        double dot = 0.0;
        for (std::size_t i = 0; i < dim; ++i) dot += v[i] * prev[i];
        for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * prev[i];
      }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-9) throw dataset_error("degenerate prototype draw");
    for (auto& x : v) x /= norm;
    rows.push_back(std::move(v));
  }
  std::vector<std::vector<float>> out(classes, std::vector<float>(dim));
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < dim; ++i) out[c][i] = float(rows[c][i]);
  return out;
}

Tensor prototype_tensor(const std::vector<std::vector<float>>& protos) {
  const std::size_t classes = protos.size(), dim = protos[0].size();
  std::vector<float> v;
  v.reserve(classes * dim);
  for (const auto& row : protos) v.insert(v.end(), row.begin(), row.end());
  return Tensor::from_data({classes, dim}, std::move(v));
}

struct Interval {
  std::size_t begin = 0, end = 0;  // [begin, end)
  bool active() const { return end > begin; }
};

Interval draw_interval(std::mt19937_64& rng, std::size_t segments) {
  const std::size_t max_len = std::min<std::size_t>(6, segments);
  std::uniform_int_distribution<std::size_t> len_dist(std::min<std::size_t>(2, max_len), max_len);
  const std::size_t len = len_dist(rng);
  std::uniform_int_distribution<std::size_t> start_dist(0, segments - len);
  const std::size_t start = start_dist(rng);
  return {start, start + len};
}

Interval shift_interval(const Interval& iv, long shift, std::size_t segments) {
  long b = long(iv.begin) + shift, e = long(iv.end) + shift;
  const long len = e - b;
  if (b < 0) { b = 0; e = len; }
  if (e > long(segments)) { e = long(segments); b = e - len; }
  return {std::size_t(b), std::size_t(e)};
}

}  // namespace

void EventVocabulary::validate() const {
  if (class_names.empty()) throw dataset_error("vocabulary must contain at least one class");
  std::set<std::string> seen;
  for (const auto& name : class_names) {
    if (name.empty()) throw dataset_error("vocabulary contains an empty class name");
    if (!seen.insert(name).second)
      throw dataset_error("vocabulary contains duplicate class name '" + name + "'");
  }
}

std::string to_string(DatasetMode mode) {
  return mode == DatasetMode::supervised ? "supervised" : "weak";
}

std::vector<float> video_label_floats(const VideoEntry& video, std::size_t num_classes) {
  std::vector<float> y(num_classes, 0.0f);
  for (std::size_t c = 0; c < num_classes; ++c) y[c] = float(video.labels.video_labels[c]);
  return y;
}

Dataset load_manifest(const std::filesystem::path& manifest_path) {
  const json doc = load_json(manifest_path, "manifest");
  Dataset ds;
  ds.root = manifest_path.parent_path();
  try {
    if (doc.at("format").get<std::string>() != "uwav-manifest")
      throw dataset_error("not a uwav manifest: " + manifest_path.string());
    if (doc.at("version").get<int>() != 1)
      throw dataset_error("unsupported manifest version in " + manifest_path.string());
    const std::string mode = doc.at("mode").get<std::string>();
    if (mode == "supervised")
      ds.mode = DatasetMode::supervised;
    else if (mode == "weak")
      ds.mode = DatasetMode::weak;
    else
      throw dataset_error("unknown dataset mode '" + mode + "'");
    ds.segments = doc.at("segments_per_video").get<std::size_t>();
    if (ds.segments == 0) throw dataset_error("segments_per_video must be positive");
    ds.vocabulary.class_names = doc.at("vocabulary").get<std::vector<std::string>>();
    if (doc.contains("caption_templates")) {
      ds.vocabulary.visual_caption_template =
          doc["caption_templates"].at("visual").get<std::string>();
      ds.vocabulary.audio_caption_template =
          doc["caption_templates"].at("audio").get<std::string>();
    }
    ds.vocabulary.validate();
    const std::size_t classes = ds.vocabulary.size();

    ds.text.visual = read_tensor_file(
        ds.root / doc.at("text_embeddings").at("visual").get<std::string>());
    ds.text.audio = read_tensor_file(
        ds.root / doc.at("text_embeddings").at("audio").get<std::string>());
    if (ds.text.visual.rank() != 2 || ds.text.visual.shape()[0] != classes)
      throw dataset_error("visual text embeddings must have one row per class");
    if (ds.text.audio.rank() != 2 || ds.text.audio.shape()[0] != classes)
      throw dataset_error("audio text embeddings must have one row per class");

    std::set<std::string> ids;
    for (const auto& vj : doc.at("videos")) {
      VideoEntry video;
      video.features.video_id = vj.at("video_id").get<std::string>();
      const std::string& id = video.features.video_id;
      if (!ids.insert(id).second)
        throw dataset_error("duplicate video_id '" + id + "'");
      const auto& feats = vj.at("features");
      auto load_feat = [&](const char* key) {
        const auto rel = feats.at(key).get<std::string>();
        Tensor t = read_tensor_file(ds.root / rel);
        if (t.rank() != 2 || t.shape()[0] != ds.segments)
          throw dataset_error("video " + id + ": feature '" + key + "' must have " +
                              std::to_string(ds.segments) + " rows");
        return t;
      };
      video.features.segments = ds.segments;
      video.features.visual_backbone = load_feat("visual_backbone");
      video.features.audio_backbone = load_feat("audio_backbone");
      video.features.visual_embed = load_feat("visual_embed");
      video.features.audio_embed = load_feat("audio_embed");
      if (video.features.visual_embed.shape()[1] != ds.text.visual.shape()[1])
        throw dataset_error("video " + id +
                            ": visual embed width differs from text embedding width");
      if (video.features.audio_embed.shape()[1] != ds.text.audio.shape()[1])
        throw dataset_error("video " + id +
                            ": audio embed width differs from text embedding width");
      if (!ds.videos.empty()) {
        const auto& first = ds.videos.front().features;
        if (video.features.visual_backbone.shape() != first.visual_backbone.shape() ||
            video.features.audio_backbone.shape() != first.audio_backbone.shape() ||
            video.features.visual_embed.shape() != first.visual_embed.shape() ||
            video.features.audio_embed.shape() != first.audio_embed.shape())
          throw dataset_error("video " + id + ": feature shapes differ from other videos");
      }

      video.labels.video_labels.assign(classes, 0);
      for (const auto& idx : vj.at("video_labels")) {
        const std::size_t c = idx.get<std::size_t>();
        if (c >= classes)
          throw dataset_error("video " + id + ": label index " + std::to_string(c) +
                              " out of range");
        video.labels.video_labels[c] = 1;
      }
      if (vj.contains("segment_visual_labels"))
        video.labels.segment_visual = parse_binary_matrix(
            vj["segment_visual_labels"], ds.segments, classes, "video " + id);
      if (vj.contains("segment_audio_labels"))
        video.labels.segment_audio = parse_binary_matrix(
            vj["segment_audio_labels"], ds.segments, classes, "video " + id);
      if (vj.contains("segment_av_labels"))
        video.labels.segment_av = parse_binary_matrix(
            vj["segment_av_labels"], ds.segments, classes, "video " + id);
      validate_labels(video.labels, ds.segments, classes, id);
      ds.videos.push_back(std::move(video));
    }
  } catch (const json::exception& e) {
    throw dataset_error("manifest " + manifest_path.string() + ": " + e.what());
  }
  if (ds.mode == DatasetMode::supervised)
    for (const auto& v : ds.videos)
      if (!v.labels.segment_av)
        throw dataset_error("video " + v.features.video_id +
                            ": supervised manifests require segment_av_labels");
  return ds;
}

void synth_dataset(const SynthConfig& cfg, std::uint64_t seed,
                   const std::filesystem::path& out_dir) {
  if (cfg.num_classes == 0 || cfg.segments == 0 || cfg.num_videos == 0)
    throw std::invalid_argument("synth: classes, segments and videos must be positive");
  if (cfg.events_min == 0 || cfg.events_min > cfg.events_max ||
      cfg.events_max > cfg.num_classes)
    throw std::invalid_argument("synth: events per video must satisfy 1 <= min <= max <= classes");
  if (cfg.visual_backbone_dim == 0 || cfg.audio_backbone_dim == 0 ||
      cfg.visual_embed_dim == 0 || cfg.audio_embed_dim == 0)
    throw std::invalid_argument("synth: feature dims must be positive");
  if (cfg.noise_sigma < 0) throw std::invalid_argument("synth: noise sigma must be >= 0");

  const std::size_t C = cfg.num_classes, T = cfg.segments;
  std::filesystem::create_directories(out_dir / "feats");

  const auto proto_vb = make_prototypes(cfg.embed_seed, 0, C, cfg.visual_backbone_dim);
  const auto proto_ab = make_prototypes(cfg.embed_seed, 1, C, cfg.audio_backbone_dim);
  const auto proto_ve = make_prototypes(cfg.embed_seed, 2, C, cfg.visual_embed_dim);
  const auto proto_ae = make_prototypes(cfg.embed_seed, 3, C, cfg.audio_embed_dim);

  // Text embeddings are the embedding-space prototypes themselves.
  write_tensor_file(out_dir / "text_visual.tens", prototype_tensor(proto_ve));
  write_tensor_file(out_dir / "text_audio.tens", prototype_tensor(proto_ae));

  const bool force_av = cfg.av_events_only || cfg.mode == DatasetMode::supervised;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  json videos = json::array();
  GroundTruthMap sidecar;

  for (std::size_t n = 0; n < cfg.num_videos; ++n) {
    std::ostringstream name;
    name << "vid_" << std::setw(5) << std::setfill('0') << n;
    const std::string id = name.str();

    std::uniform_int_distribution<std::size_t> count_dist(cfg.events_min, cfg.events_max);
    const std::size_t event_count = count_dist(rng);
    // Partial Fisher-Yates for distinct class picks.
    std::vector<std::size_t> order(C);
    for (std::size_t c = 0; c < C; ++c) order[c] = c;
    for (std::size_t k = 0; k < event_count; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, C - 1);
      std::swap(order[k], order[pick(rng)]);
    }

    MatB act_visual(T, C), act_audio(T, C);
    for (std::size_t k = 0; k < event_count; ++k) {
      const std::size_t cls = order[k];
      int modality = 2;  // 0 visual-only, 1 audio-only, 2 both
      if (!force_av) {
        std::uniform_int_distribution<int> mdist(0, 2);
        modality = mdist(rng);
      }
      if (modality == 0 || modality == 2) {
        const Interval iv = draw_interval(rng, T);
        for (std::size_t t = iv.begin; t < iv.end; ++t) act_visual.at(t, cls) = 1;
        if (modality == 2) {
          Interval av = iv;
          if (cfg.allow_misalignment) {
            std::uniform_int_distribution<long> sdist(-2, 2);
            av = shift_interval(iv, sdist(rng), T);
          }
          for (std::size_t t = av.begin; t < av.end; ++t) act_audio.at(t, cls) = 1;
        }
      } else {
        const Interval iv = draw_interval(rng, T);
        for (std::size_t t = iv.begin; t < iv.end; ++t) act_audio.at(t, cls) = 1;
      }
    }

    auto synth_features = [&](const std::vector<std::vector<float>>& protos, const MatB& act,
                              std::size_t dim) {
      std::vector<float> v(T * dim, 0.0f);
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t c = 0; c < C; ++c)
          if (act.at(t, c))
            for (std::size_t i = 0; i < dim; ++i) v[t * dim + i] += protos[c][i];
        for (std::size_t i = 0; i < dim; ++i)
          v[t * dim + i] += float(cfg.noise_sigma * gauss(rng));
      }
      return Tensor::from_data({T, dim}, std::move(v));
    };
    write_tensor_file(out_dir / "feats" / (id + "_vb.tens"),
                      synth_features(proto_vb, act_visual, cfg.visual_backbone_dim));
    write_tensor_file(out_dir / "feats" / (id + "_ab.tens"),
                      synth_features(proto_ab, act_audio, cfg.audio_backbone_dim));
    write_tensor_file(out_dir / "feats" / (id + "_ve.tens"),
                      synth_features(proto_ve, act_visual, cfg.visual_embed_dim));
    write_tensor_file(out_dir / "feats" / (id + "_ae.tens"),
                      synth_features(proto_ae, act_audio, cfg.audio_embed_dim));

    json labels = json::array();
    for (std::size_t c = 0; c < C; ++c) {
      bool any = false;
      for (std::size_t t = 0; t < T; ++t)
        any = any || act_visual.at(t, c) || act_audio.at(t, c);
      if (any) labels.push_back(c);
    }

    json vj;
    vj["video_id"] = id;
    vj["features"] = {{"visual_backbone", "feats/" + id + "_vb.tens"},
                      {"audio_backbone", "feats/" + id + "_ab.tens"},
                      {"visual_embed", "feats/" + id + "_ve.tens"},
                      {"audio_embed", "feats/" + id + "_ae.tens"}};
    vj["video_labels"] = labels;
    if (cfg.mode == DatasetMode::supervised) {
      MatB av(T, C);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < C; ++c)
          av.at(t, c) = act_visual.at(t, c) && act_audio.at(t, c);
      vj["segment_av_labels"] = binary_matrix_json(av);
    } else {
      sidecar[id] = SegmentGroundTruth{act_visual, act_audio};
    }
    videos.push_back(std::move(vj));
  }

  json manifest;
  manifest["format"] = "uwav-manifest";
  manifest["version"] = 1;
  manifest["mode"] = to_string(cfg.mode);
  manifest["segments_per_video"] = T;
  json vocab = json::array();
  for (std::size_t c = 0; c < C; ++c) {
    std::ostringstream cls;
    cls << "event_" << std::setw(2) << std::setfill('0') << c;
    vocab.push_back(cls.str());
  }
  manifest["vocabulary"] = vocab;
  manifest["caption_templates"] = {{"visual", "A photo of <EVENT NAME>"},
                                   {"audio", "This is the sound of <EVENT NAME>"}};
  manifest["text_embeddings"] = {{"visual", "text_visual.tens"},
                                 {"audio", "text_audio.tens"}};
  manifest["videos"] = std::move(videos);
  dump_json(out_dir / "manifest.json", manifest);

  if (cfg.mode == DatasetMode::weak)
    write_eval_gt(out_dir / kEvalSidecarName, sidecar, C);
}

void write_eval_gt(const std::filesystem::path& path, const GroundTruthMap& gt,
                   std::size_t num_classes) {
  json doc;
  doc["format"] = "uwav-eval-gt";
  doc["version"] = 1;
  doc["num_classes"] = num_classes;
  json videos;
  for (const auto& [id, entry] : gt) {
    videos[id] = {{"visual", binary_matrix_json(entry.visual)},
                  {"audio", binary_matrix_json(entry.audio)}};
  }
  doc["videos"] = std::move(videos);
  dump_json(path, doc);
}

GroundTruthMap load_eval_gt(const std::filesystem::path& path) {
  const json doc = load_json(path, "eval ground-truth sidecar");
  GroundTruthMap gt;
  try {
    if (doc.at("format").get<std::string>() != "uwav-eval-gt")
      throw dataset_error("not an eval ground-truth file: " + path.string());
    const std::size_t classes = doc.at("num_classes").get<std::size_t>();
    for (const auto& [id, entry] : doc.at("videos").items()) {
      const auto& vis = entry.at("visual");
      if (!vis.is_array() || vis.empty())
        throw dataset_error("gt for video " + id + " is empty");
      const std::size_t segments = vis.size();
      SegmentGroundTruth g;
      g.visual = parse_binary_matrix(vis, segments, classes, "gt video " + id);
      g.audio = parse_binary_matrix(entry.at("audio"), segments, classes, "gt video " + id);
      gt[id] = std::move(g);
    }
  } catch (const json::exception& e) {
    throw dataset_error("eval gt " + path.string() + ": " + e.what());
  }
  return gt;
}

GroundTruthMap ground_truth_for(const Dataset& dataset,
                                const std::filesystem::path& sidecar_path) {
  bool manifest_has_all = !dataset.videos.empty();
  for (const auto& v : dataset.videos)
    manifest_has_all =
        manifest_has_all && v.labels.segment_visual.has_value() && v.labels.segment_audio.has_value();
  GroundTruthMap gt;
  if (manifest_has_all) {
    for (const auto& v : dataset.videos)
      gt[v.features.video_id] =
          SegmentGroundTruth{*v.labels.segment_visual, *v.labels.segment_audio};
    return gt;
  }
  gt = load_eval_gt(sidecar_path);
  for (const auto& v : dataset.videos)
    if (!gt.count(v.features.video_id))
      throw dataset_error("sidecar " + sidecar_path.string() + " misses video " +
                          v.features.video_id);
  return gt;
}

void write_pseudo_labels(const std::filesystem::path& path, const PseudoLabelSet& set) {
  json doc;
  doc["format"] = "uwav-pseudo-labels";
  doc["version"] = 1;
  doc["quantile"] = set.quantile;
  doc["method"] = set.method;
  doc["thresholds_visual"] = set.thresholds_visual;
  doc["thresholds_audio"] = set.thresholds_audio;
  json videos;
  for (const auto& [id, v] : set.videos) {
    videos[id] = {{"binary_visual", binary_matrix_json(v.binary_visual)},
                  {"binary_audio", binary_matrix_json(v.binary_audio)},
                  {"soft_visual", float_matrix_json(v.soft_visual)},
                  {"soft_audio", float_matrix_json(v.soft_audio)}};
  }
  doc["videos"] = std::move(videos);
  dump_json(path, doc);
}

PseudoLabelSet read_pseudo_labels(const std::filesystem::path& path, const Dataset& dataset) {
  const json doc = load_json(path, "pseudo-label file");
  PseudoLabelSet set;
  const std::size_t T = dataset.segments, C = dataset.num_classes();
  try {
    if (doc.at("format").get<std::string>() != "uwav-pseudo-labels")
      throw dataset_error("not a pseudo-label file: " + path.string());
    set.quantile = doc.at("quantile").get<double>();
    if (doc.contains("method")) set.method = doc["method"].get<std::string>();
    set.thresholds_visual = doc.at("thresholds_visual").get<std::vector<float>>();
    set.thresholds_audio = doc.at("thresholds_audio").get<std::vector<float>>();
    if (set.thresholds_visual.size() != C || set.thresholds_audio.size() != C)
      throw dataset_error("pseudo-label thresholds must have one entry per class");
    const auto& videos = doc.at("videos");
    for (const auto& [id, vj] : videos.items()) {
      VideoPseudoLabels v;
      v.binary_visual = parse_binary_matrix(vj.at("binary_visual"), T, C, "pseudo " + id);
      v.binary_audio = parse_binary_matrix(vj.at("binary_audio"), T, C, "pseudo " + id);
      v.soft_visual = parse_float_matrix(vj.at("soft_visual"), T, C, "pseudo " + id);
      v.soft_audio = parse_float_matrix(vj.at("soft_audio"), T, C, "pseudo " + id);
      set.videos[id] = std::move(v);
    }
  } catch (const json::exception& e) {
    throw dataset_error("pseudo-label file " + path.string() + ": " + e.what());
  }

  for (const auto& video : dataset.videos) {
    const std::string& id = video.features.video_id;
    auto it = set.videos.find(id);
    if (it == set.videos.end())
      throw dataset_error("pseudo-label file misses video " + id);
    const auto& v = it->second;
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < C; ++c) {
        auto check_pair = [&](const MatB& binary, const MatF& soft, const char* modality) {
          const float s = soft.at(t, c);
          if (s < 0.0f || s > 1.0f)
            throw dataset_error("video " + id + ": " + modality +
                                " soft label outside [0,1]");
          if (!video.labels.video_labels[c] && s != 0.0f)
            throw dataset_error("video " + id + ": " + modality + " soft label for class " +
                                std::to_string(c) + " is nonzero but the video label is 0");
          const bool expect_binary = s > 0.5f;
          if (bool(binary.at(t, c)) != expect_binary)
            throw dataset_error("video " + id + ": " + modality +
                                " binary/soft inconsistency at segment " + std::to_string(t) +
                                " class " + std::to_string(c));
        };
        check_pair(v.binary_visual, v.soft_visual, "visual");
        check_pair(v.binary_audio, v.soft_audio, "audio");
      }
  }
  return set;
}

}  // namespace uwav
